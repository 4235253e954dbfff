#pragma once

// Experiment runner: expands scenario grids into representation pairs, scores
// every (pair, family) combination and aggregates the results into tables.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "usim/synthetic.hpp"
#include "usim/table.hpp"
#include "usim/types.hpp"

namespace usim {

enum class Experiment { Asymmetry, Monotonicity, Alignment, Hierarchy, Sufficiency };

std::string_view to_string(Experiment e) noexcept;
std::optional<Experiment> parse_experiment(std::string_view text) noexcept;

struct Grid {
  /// Scenario templates; their seed and noise_sigma are overridden on expansion.
  std::vector<ScenarioSpec> scenarios;
  std::vector<double> noise_levels{0.0};
  int replicates = 5;
  std::vector<FamilyKind> families{FamilyKind::Orthogonal, FamilyKind::OrthogonalScale,
                                   FamilyKind::Affine};
  /// Functional-similarity level counted as "high" (sufficiency).
  double func_threshold = 0.95;
  /// Equal-width representational-similarity bins (sufficiency).
  int bins = 10;
  /// Lower edge of the top-bin summary (sufficiency).
  double top_bin_edge = 0.98;

  std::size_t pair_count() const noexcept {
    return scenarios.size() * noise_levels.size() * static_cast<std::size_t>(replicates);
  }
  /// Throws InvalidSpec.
  void validate() const;
  nlohmann::json to_json() const;
  /// Keys absent from `j` keep the value from `defaults`; unknown keys are rejected.
  static Grid from_json(const nlohmann::json& j, const Grid& defaults);
};

Grid default_grid(Experiment e);

struct PairSpec {
  std::string id;
  ScenarioSpec spec;
  int replicate = 0;
};

/// Scenario-major, then noise, then replicate. Replicate k of every scenario
/// shares the seed mix_seed(master_seed, k), hence the same base features.
std::vector<PairSpec> expand(const Grid& grid, std::uint64_t master_seed);

/// Worker count: USIM_THREADS if set (>= 1), else hardware concurrency.
unsigned worker_count();
/// Runs body(i) for i in [0, n); rethrows the first exception after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

struct ExperimentResult {
  Experiment experiment = Experiment::Monotonicity;
  Grid grid;
  std::uint64_t seed = 0;
  /// One row per (pair, family); failed jobs carry their error code.
  Table table;
  /// Secondary tables keyed by a short suffix ("ribbons", "curve", ...).
  std::map<std::string, Table> extras;
  nlohmann::json metrics = nlohmann::json::object();
  std::int64_t pairs = 0;
  std::int64_t violations = 0;
  std::int64_t checks = 0;

  double violation_rate() const noexcept {
    return checks > 0 ? static_cast<double>(violations) / static_cast<double>(checks) : 0.0;
  }
  /// {experiment, grid, seed, metrics, violations}.
  nlohmann::json summary() const;
  /// "experiment=<name> pairs=<n> violations=<v> violation_rate=<r>"
  std::string summary_line() const;
};

ExperimentResult run_asymmetry(const Grid& grid, std::uint64_t seed);
ExperimentResult run_monotonicity(const Grid& grid, std::uint64_t seed);
ExperimentResult run_metric_alignment(const Grid& grid, std::uint64_t seed);
ExperimentResult run_hierarchy(const Grid& grid, std::uint64_t seed);
ExperimentResult run_sufficiency(const Grid& grid, std::uint64_t seed);
ExperimentResult run_experiment(Experiment e, const Grid& grid, std::uint64_t seed);

/// Writes <name>.csv, <name>_<extra>.csv and <name>.json into `dir`.
void write_result(const ExperimentResult& result, const std::filesystem::path& dir);

/// Equal-count bins over `n` items: returns the [begin, end) offsets of each bin.
std::vector<std::pair<std::size_t, std::size_t>> equal_count_bins(std::size_t n,
                                                                  std::size_t bins);

}  // namespace usim
