#pragma once

// Shared data model: representation matrices, predictive families, fitted
// linear maps, softmax task heads and similarity reports.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "usim/error.hpp"

namespace usim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;
using Labels = std::vector<int>;

/// An n x d activation matrix (rows are samples) with optional class labels.
class RepresentationSet {
 public:
  explicit RepresentationSet(Matrix data, std::string name = {});
  RepresentationSet(Matrix data, Labels labels, std::string name = {});

  const Matrix& data() const noexcept { return data_; }
  Index samples() const noexcept { return data_.rows(); }
  Index features() const noexcept { return data_.cols(); }
  const std::string& name() const noexcept { return name_; }

  bool has_labels() const noexcept { return labels_.has_value(); }
  /// Throws MissingLabels when the set is unlabeled.
  const Labels& labels() const;
  /// max(label) + 1; 0 when unlabeled.
  int num_classes() const noexcept { return num_classes_; }

  RepresentationSet with_data(Matrix data) const;
  RepresentationSet with_labels(Labels labels) const;
  RepresentationSet with_name(std::string name) const;
  RepresentationSet subset(std::span<const Index> rows) const;

 private:
  Matrix data_;
  std::optional<Labels> labels_;
  std::string name_;
  int num_classes_ = 0;
};

enum class FamilyKind { Orthogonal, OrthogonalScale, InvertibleAffine, Affine };

std::string_view to_string(FamilyKind kind) noexcept;
/// Accepts the CLI spellings (ortho, ortho-scale, affine, invertible) and the enum names.
std::optional<FamilyKind> parse_family(std::string_view text) noexcept;

struct PredictiveFamily {
  FamilyKind kind = FamilyKind::Affine;
  double ortho_penalty_weight = 0.1;
  double sv_floor = 1e-3;
  double sv_floor_weight = 0.01;

  static PredictiveFamily of(FamilyKind kind) { return PredictiveFamily{kind}; }

  /// Orthogonal < OrthogonalScale < InvertibleAffine < Affine.
  int capacity_rank() const noexcept { return static_cast<int>(kind); }
  bool is_orthogonal() const noexcept {
    return kind == FamilyKind::Orthogonal || kind == FamilyKind::OrthogonalScale;
  }

  friend bool operator==(const PredictiveFamily&, const PredictiveFamily&) = default;
};

/// Minimum singular value guaranteed for InvertibleAffine weights.
inline constexpr double kInvertibleMinSingularValue = 1e-4;

/// z -> scale * (z * weight) + bias, with weight d_in x d_out.
class LinearMap {
 public:
  LinearMap(Matrix weight, Vector bias, double scale, PredictiveFamily family);

  const Matrix& weight() const noexcept { return weight_; }
  const Vector& bias() const noexcept { return bias_; }
  double scale() const noexcept { return scale_; }
  const PredictiveFamily& family() const noexcept { return family_; }
  Index input_dim() const noexcept { return weight_.rows(); }
  Index output_dim() const noexcept { return weight_.cols(); }

  Matrix apply(const Matrix& z) const;
  RepresentationSet apply(const RepresentationSet& z) const;

  /// ||W^T W - I||_F on the smaller Gram matrix (W W^T when d_in < d_out).
  double orthogonality_defect() const;

 private:
  Matrix weight_;
  Vector bias_;
  double scale_;
  PredictiveFamily family_;
};

/// Thrown when an iterative fit exhausts its budget; holds the last iterate.
class ConvergenceFailure : public Error {
 public:
  ConvergenceFailure(const std::string& message, LinearMap last_iterate)
      : Error(ErrorCode::ConvergenceFailure, message), last_(std::move(last_iterate)) {}

  const LinearMap& last_iterate() const noexcept { return last_; }

 private:
  LinearMap last_;
};

/// Softmax linear classifier over C classes.
class TaskHead {
 public:
  TaskHead(Matrix weight, Vector bias);

  const Matrix& weight() const noexcept { return weight_; }
  const Vector& bias() const noexcept { return bias_; }
  Index input_dim() const noexcept { return weight_.rows(); }
  int num_classes() const noexcept { return static_cast<int>(weight_.cols()); }

  Matrix logits(const Matrix& z) const;
  Matrix predict_proba(const Matrix& z) const;
  /// Arg-max class per row; ties go to the lowest index.
  std::vector<int> predict(const Matrix& z) const;

 private:
  Matrix weight_;
  Vector bias_;
};

/// Raw accuracy ratio plus the copy clipped to 1.
struct FunctionalScores {
  double forward = 0.0;
  double backward = 0.0;

  double symmetric() const noexcept { return forward < backward ? forward : backward; }
  double forward_clipped() const noexcept { return forward > 1.0 ? 1.0 : forward; }
  double backward_clipped() const noexcept { return backward > 1.0 ? 1.0 : backward; }
  double symmetric_clipped() const noexcept { return symmetric() > 1.0 ? 1.0 : symmetric(); }
};

struct UsableConditionalInfo {
  double forward = 0.0;
  double backward = 0.0;
};

class SimilarityReport {
 public:
  SimilarityReport(std::pair<std::string, std::string> pair, PredictiveFamily family,
                   double rep_forward, double rep_backward);

  const std::pair<std::string, std::string>& pair() const noexcept { return pair_; }
  const PredictiveFamily& family() const noexcept { return family_; }

  double rep_forward() const noexcept { return rep_forward_; }
  double rep_backward() const noexcept { return rep_backward_; }
  double rep_symmetric() const noexcept { return rep_symmetric_; }

  const std::optional<FunctionalScores>& functional() const noexcept { return func_; }
  std::optional<double> func_forward() const;
  std::optional<double> func_backward() const;
  std::optional<double> func_symmetric() const;
  const std::optional<UsableConditionalInfo>& usable_cond_info() const noexcept {
    return cond_info_;
  }
  const std::map<std::string, double>& baselines() const noexcept { return baselines_; }

  void set_functional(FunctionalScores scores, UsableConditionalInfo info);
  void set_baseline(std::string metric, double value);

 private:
  std::pair<std::string, std::string> pair_;
  PredictiveFamily family_;
  double rep_forward_;
  double rep_backward_;
  double rep_symmetric_;
  std::optional<FunctionalScores> func_;
  std::optional<UsableConditionalInfo> cond_info_;
  std::map<std::string, double> baselines_;
};

/// Subtracts column means. Columns whose mean is already zero to within
/// summation round-off are left untouched, so centering is idempotent.
RepresentationSet center(const RepresentationSet& r);
Matrix center(const Matrix& m);

/// Mean over samples of the squared distance to the mean row (trace of the
/// biased covariance).
double total_variance(const RepresentationSet& r);
double total_variance(const Matrix& m);

}  // namespace usim
