#include "usim/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace usim {

std::string_view code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidData: return "E_INVALID_DATA";
    case ErrorCode::ShapeMismatch: return "E_SHAPE_MISMATCH";
    case ErrorCode::DegenerateInput: return "E_DEGENERATE_INPUT";
    case ErrorCode::ConvergenceFailure: return "E_CONVERGENCE_FAILURE";
    case ErrorCode::MissingLabels: return "E_MISSING_LABELS";
    case ErrorCode::InvalidSpec: return "E_INVALID_SPEC";
    case ErrorCode::ParseError: return "E_PARSE_ERROR";
    case ErrorCode::NonFiniteValue: return "E_NON_FINITE_VALUE";
    case ErrorCode::DegenerateGrid: return "E_DEGENERATE_GRID";
    case ErrorCode::IoError: return "E_IO_ERROR";
  }
  return "E_UNKNOWN";
}

namespace {

void validate_matrix(const Matrix& data) {
  if (data.rows() < 2) {
    throw Error(ErrorCode::InvalidData, "representation needs at least 2 samples");
  }
  if (data.cols() < 1) {
    throw Error(ErrorCode::InvalidData, "representation needs at least 1 feature");
  }
  if (!data.allFinite()) {
    throw Error(ErrorCode::InvalidData, "representation contains non-finite entries");
  }
}

int validate_labels(const Labels& labels, Index n) {
  if (static_cast<Index>(labels.size()) != n) {
    throw Error(ErrorCode::ShapeMismatch, "label count " + std::to_string(labels.size()) +
                                              " does not match sample count " + std::to_string(n));
  }
  int max_label = -1;
  for (int y : labels) {
    if (y < 0) throw Error(ErrorCode::InvalidData, "labels must be nonnegative");
    max_label = std::max(max_label, y);
  }
  return max_label + 1;
}

// Neumaier-compensated column sum.
std::pair<double, double> compensated_sum_and_abs(const Matrix& m, Index col) {
  double sum = 0.0, comp = 0.0, abs_sum = 0.0;
  for (Index i = 0; i < m.rows(); ++i) {
    const double x = m(i, col);
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
    abs_sum += std::abs(x);
  }
  return {sum + comp, abs_sum};
}

}  // namespace

RepresentationSet::RepresentationSet(Matrix data, std::string name)
    : data_(std::move(data)), name_(std::move(name)) {
  validate_matrix(data_);
}

RepresentationSet::RepresentationSet(Matrix data, Labels labels, std::string name)
    : data_(std::move(data)), labels_(std::move(labels)), name_(std::move(name)) {
  validate_matrix(data_);
  num_classes_ = validate_labels(*labels_, data_.rows());
}

const Labels& RepresentationSet::labels() const {
  if (!labels_) {
    throw Error(ErrorCode::MissingLabels,
                "representation '" + name_ + "' has no labels");
  }
  return *labels_;
}

RepresentationSet RepresentationSet::with_data(Matrix data) const {
  if (labels_) return RepresentationSet(std::move(data), *labels_, name_);
  return RepresentationSet(std::move(data), name_);
}

RepresentationSet RepresentationSet::with_labels(Labels labels) const {
  return RepresentationSet(data_, std::move(labels), name_);
}

RepresentationSet RepresentationSet::with_name(std::string name) const {
  RepresentationSet copy = *this;
  copy.name_ = std::move(name);
  return copy;
}

RepresentationSet RepresentationSet::subset(std::span<const Index> rows) const {
  Matrix out(static_cast<Index>(rows.size()), data_.cols());
  Labels ys;
  if (labels_) ys.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index r = rows[i];
    if (r < 0 || r >= data_.rows()) {
      throw Error(ErrorCode::ShapeMismatch, "subset row index out of range");
    }
    out.row(static_cast<Index>(i)) = data_.row(r);
    if (labels_) ys.push_back((*labels_)[static_cast<std::size_t>(r)]);
  }
  if (labels_) return RepresentationSet(std::move(out), std::move(ys), name_);
  return RepresentationSet(std::move(out), name_);
}

std::string_view to_string(FamilyKind kind) noexcept {
  switch (kind) {
    case FamilyKind::Orthogonal: return "ortho";
    case FamilyKind::OrthogonalScale: return "ortho-scale";
    case FamilyKind::InvertibleAffine: return "invertible";
    case FamilyKind::Affine: return "affine";
  }
  return "?";
}

std::optional<FamilyKind> parse_family(std::string_view text) noexcept {
  if (text == "ortho" || text == "orthogonal" || text == "Orthogonal") {
    return FamilyKind::Orthogonal;
  }
  if (text == "ortho-scale" || text == "orthogonal-scale" || text == "OrthogonalScale") {
    return FamilyKind::OrthogonalScale;
  }
  if (text == "invertible" || text == "invertible-affine" || text == "InvertibleAffine") {
    return FamilyKind::InvertibleAffine;
  }
  if (text == "affine" || text == "Affine") return FamilyKind::Affine;
  return std::nullopt;
}

LinearMap::LinearMap(Matrix weight, Vector bias, double scale, PredictiveFamily family)
    : weight_(std::move(weight)), bias_(std::move(bias)), scale_(scale), family_(family) {
  if (bias_.size() != weight_.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "bias length must equal map output width");
  }
  if (!(scale_ > 0.0) || !std::isfinite(scale_)) {
    throw Error(ErrorCode::InvalidData, "map scale must be positive and finite");
  }
  if (!weight_.allFinite() || !bias_.allFinite()) {
    throw Error(ErrorCode::InvalidData, "map parameters must be finite");
  }
}

Matrix LinearMap::apply(const Matrix& z) const {
  if (z.cols() != weight_.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "input width " + std::to_string(z.cols()) +
                                              " does not match map input " +
                                              std::to_string(weight_.rows()));
  }
  Matrix out = scale_ * (z * weight_);
  out.rowwise() += bias_.transpose();
  return out;
}

RepresentationSet LinearMap::apply(const RepresentationSet& z) const {
  return z.with_data(apply(z.data()));
}

double LinearMap::orthogonality_defect() const {
  if (weight_.rows() >= weight_.cols()) {
    return (weight_.transpose() * weight_ - Matrix::Identity(weight_.cols(), weight_.cols()))
        .norm();
  }
  return (weight_ * weight_.transpose() - Matrix::Identity(weight_.rows(), weight_.rows())).norm();
}

TaskHead::TaskHead(Matrix weight, Vector bias) : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (bias_.size() != weight_.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "head bias length must equal class count");
  }
  if (weight_.cols() < 1) throw Error(ErrorCode::InvalidData, "head needs at least one class");
}

Matrix TaskHead::logits(const Matrix& z) const {
  if (z.cols() != weight_.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "input width " + std::to_string(z.cols()) +
                                              " does not match head input " +
                                              std::to_string(weight_.rows()));
  }
  Matrix out = z * weight_;
  out.rowwise() += bias_.transpose();
  return out;
}

Matrix TaskHead::predict_proba(const Matrix& z) const {
  Matrix p = logits(z);
  constexpr double kTiny = std::numeric_limits<double>::min();
  for (Index i = 0; i < p.rows(); ++i) {
    const double mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp().max(kTiny).matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

std::vector<int> TaskHead::predict(const Matrix& z) const {
  const Matrix l = logits(z);
  std::vector<int> out(static_cast<std::size_t>(l.rows()));
  for (Index i = 0; i < l.rows(); ++i) {
    Index best = 0;
    for (Index c = 1; c < l.cols(); ++c) {
      if (l(i, c) > l(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

SimilarityReport::SimilarityReport(std::pair<std::string, std::string> pair,
                                   PredictiveFamily family, double rep_forward,
                                   double rep_backward)
    : pair_(std::move(pair)),
      family_(family),
      rep_forward_(rep_forward),
      rep_backward_(rep_backward),
      rep_symmetric_(std::min(rep_forward, rep_backward)) {}

std::optional<double> SimilarityReport::func_forward() const {
  if (!func_) return std::nullopt;
  return func_->forward;
}

std::optional<double> SimilarityReport::func_backward() const {
  if (!func_) return std::nullopt;
  return func_->backward;
}

std::optional<double> SimilarityReport::func_symmetric() const {
  if (!func_) return std::nullopt;
  return func_->symmetric();
}

void SimilarityReport::set_functional(FunctionalScores scores, UsableConditionalInfo info) {
  func_ = scores;
  cond_info_ = info;
}

void SimilarityReport::set_baseline(std::string metric, double value) {
  baselines_[std::move(metric)] = value;
}

Matrix center(const Matrix& m) {
  if (!m.allFinite()) throw Error(ErrorCode::InvalidData, "cannot center non-finite data");
  Matrix out = m;
  const double n = static_cast<double>(m.rows());
  constexpr double eps = std::numeric_limits<double>::epsilon();
  // A second pass removes the residual mean left by rounding against a large
  // offset, so the output always passes the zero-mean test on re-entry.
  for (Index j = 0; j < m.cols(); ++j) {
    for (int pass = 0; pass < 4; ++pass) {
      const auto [sum, abs_sum] = compensated_sum_and_abs(out, j);
      if (std::abs(sum) <= n * eps * abs_sum) break;
      out.col(j).array() -= sum / n;
    }
  }
  return out;
}

RepresentationSet center(const RepresentationSet& r) { return r.with_data(center(r.data())); }

double total_variance(const Matrix& m) {
  if (m.rows() < 2) throw Error(ErrorCode::InvalidData, "total variance needs n >= 2");
  if (!m.allFinite()) throw Error(ErrorCode::InvalidData, "total variance of non-finite data");
  const double n = static_cast<double>(m.rows());
  double total = 0.0;
  for (Index j = 0; j < m.cols(); ++j) {
    // Constant columns contribute exactly zero.
    if ((m.col(j).array() == m(0, j)).all()) continue;
    const double mean = compensated_sum_and_abs(m, j).first / n;
    total += (m.col(j).array() - mean).square().sum();
  }
  return total / n;
}

double total_variance(const RepresentationSet& r) { return total_variance(r.data()); }

}  // namespace usim
