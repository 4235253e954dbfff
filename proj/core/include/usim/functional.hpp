#pragma once

// Task heads, stitchers and the stitching-based functional similarity scores.

#include <cstdint>
#include <vector>

#include "usim/alignment.hpp"
#include "usim/types.hpp"

namespace usim {

struct TrainConfig {
  double learning_rate = 0.1;
  int max_epochs = 500;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  /// Relative loss change per epoch below which training stops.
  double tolerance = 1e-7;

  static TrainConfig head_defaults(std::uint64_t seed = 0) { return TrainConfig{0.1, 500, 1e-4, seed, 1e-7}; }
  static TrainConfig stitcher_defaults(std::uint64_t seed = 0) { return TrainConfig{0.05, 500, 1e-4, seed, 1e-7}; }

  void validate() const;
};

/// Usable-information style estimate in nats with a finite-sample warning flag.
struct InformationEstimate {
  double nats = 0.0;
  /// Set when the estimate is below -1e-3 nats.
  bool below_noise_floor = false;
};

inline constexpr double kNegativeInfoFlag = -1e-3;

/// Multinomial logistic regression fitted by full-batch gradient descent from
/// zero weights on CE + l2 * ||W||^2. Identical rows are merged into weights,
/// so duplicating every sample reproduces the same head bit for bit.
TaskHead train_head(const RepresentationSet& r, const TrainConfig& cfg);

/// Mean -log p(label) in nats.
double cross_entropy(const TaskHead& head, const RepresentationSet& r);
double accuracy(const TaskHead& head, const RepresentationSet& r);

/// Shannon entropy of the empirical label frequencies, in nats.
double marginal_entropy(const Labels& labels);

/// marginal_entropy(labels) - cross_entropy(head, r).
InformationEstimate usable_information(const RepresentationSet& r, const TaskHead& head);

struct DataSplit {
  std::vector<Index> train;
  std::vector<Index> eval;
};

/// Seeded 70/30 permutation split (both parts non-empty for n >= 2).
DataSplit holdout_split(Index n, std::uint64_t seed, double train_fraction = 0.7);

struct StitchResult {
  LinearMap map;
  double stitched_ce = 0.0;
  double native_ce = 0.0;
  double stitched_accuracy = 0.0;
  double native_accuracy = 0.0;

  /// stitched_ce - native_ce, reported even when negative.
  double usable_cond_info() const noexcept { return stitched_ce - native_ce; }
  bool usable_cond_info_flagged() const noexcept { return usable_cond_info() < kNegativeInfoFlag; }
};

/// Fits a stitcher src -> dst in `family` on the train rows of
/// holdout_split(n, cfg.seed) against the frozen `dst_head`, then measures
/// stitched and native cross-entropy / accuracy on the eval rows. The head is
/// expected to have been trained on the same train rows of `dst`.
StitchResult train_stitcher(const RepresentationSet& src, const RepresentationSet& dst,
                            const TaskHead& dst_head, const PredictiveFamily& family,
                            const TrainConfig& cfg);

/// Trains the native head on dst's train split and then the stitcher src -> dst.
StitchResult stitch(const RepresentationSet& src, const RepresentationSet& dst,
                    const PredictiveFamily& family, const TrainConfig& head_cfg,
                    const TrainConfig& stitch_cfg);

/// stitched_accuracy / native_accuracy, unclipped.
double directed_func_similarity(const StitchResult& res);
double clip_ratio(double ratio) noexcept;

double symmetric_func_similarity(double forward, double backward) noexcept;

/// grouping[fine] = coarse; must cover every observed label.
Labels coarsen_labels(const Labels& labels, const std::vector<int>& grouping);

}  // namespace usim
