#include "usim/functional.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "descent.hpp"
#include "usim/linalg.hpp"

namespace usim {

namespace {

// Per-row log-sum-exp of a logits matrix.
Vector log_sum_exp(const Matrix& logits) {
  Vector out(logits.rows());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    out(i) = mx + std::log((logits.row(i).array() - mx).exp().sum());
  }
  return out;
}

// Softmax in place; returns sum_i weight_i * CE_i.
double softmax_and_weighted_ce(Matrix& logits, const Labels& labels, const Vector* weights) {
  double total = 0.0;
  for (Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const int y = labels[static_cast<std::size_t>(i)];
    const double shifted_y = logits(i, y) - mx;
    logits.row(i) = (logits.row(i).array() - mx).exp().matrix();
    const double z = logits.row(i).sum();
    const double ce = std::log(z) - shifted_y;
    total += weights ? (*weights)(i) * ce : ce;
    logits.row(i) /= z;
  }
  return total;
}

void require_labels_fit(const Labels& labels, int classes) {
  for (int y : labels) {
    if (y >= classes) {
      throw Error(ErrorCode::ShapeMismatch, "label " + std::to_string(y) +
                                                " exceeds head class count " +
                                                std::to_string(classes));
    }
  }
}

struct WeightedRows {
  Matrix x;
  Labels y;
  Vector w;
};

// Merges identical (label, row) pairs; rows are emitted in lexicographic order.
WeightedRows merge_duplicates(const Matrix& x, const Labels& y) {
  const Index n = x.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  auto less = [&](Index a, Index b) {
    if (y[static_cast<std::size_t>(a)] != y[static_cast<std::size_t>(b)]) {
      return y[static_cast<std::size_t>(a)] < y[static_cast<std::size_t>(b)];
    }
    for (Index j = 0; j < x.cols(); ++j) {
      if (x(a, j) != x(b, j)) return x(a, j) < x(b, j);
    }
    return false;
  };
  std::stable_sort(order.begin(), order.end(), less);

  std::vector<Index> uniq;
  std::vector<double> counts;
  for (Index idx : order) {
    if (!uniq.empty() && !less(uniq.back(), idx) && !less(idx, uniq.back())) {
      counts.back() += 1.0;
    } else {
      uniq.push_back(idx);
      counts.push_back(1.0);
    }
  }
  WeightedRows out;
  out.x.resize(static_cast<Index>(uniq.size()), x.cols());
  out.w.resize(static_cast<Index>(uniq.size()));
  out.y.reserve(uniq.size());
  for (std::size_t k = 0; k < uniq.size(); ++k) {
    out.x.row(static_cast<Index>(k)) = x.row(uniq[k]);
    out.y.push_back(y[static_cast<std::size_t>(uniq[k])]);
    out.w(static_cast<Index>(k)) = counts[k];
  }
  return out;
}

detail::DescentOptions descent_options(const TrainConfig& cfg) {
  detail::DescentOptions opts;
  opts.learning_rate = cfg.learning_rate;
  opts.max_iterations = cfg.max_epochs;
  opts.rel_tolerance = cfg.tolerance;
  opts.window = 1;
  opts.abs_tolerance = 0.0;
  // The configured rate is the first step; it grows after accepted steps and
  // halves on rejected ones, so 500 epochs reach the regularized optimum.
  opts.growth = 1.1;
  return opts;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidData, "learning_rate must be > 0");
  if (max_epochs < 1) throw Error(ErrorCode::InvalidData, "max_epochs must be >= 1");
  if (!(l2 >= 0.0)) throw Error(ErrorCode::InvalidData, "l2 must be >= 0");
  if (!(tolerance > 0.0)) throw Error(ErrorCode::InvalidData, "tolerance must be > 0");
}

TaskHead train_head(const RepresentationSet& r, const TrainConfig& cfg) {
  cfg.validate();
  const Labels& labels = r.labels();
  const int classes = r.num_classes();
  std::vector<int> counts(static_cast<std::size_t>(classes), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  for (int c = 0; c < classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] < 2) {
      throw Error(ErrorCode::DegenerateInput,
                  "class " + std::to_string(c) + " has fewer than 2 samples");
    }
  }

  const WeightedRows data = merge_duplicates(r.data(), labels);
  const Index d = r.features();
  const Index nw = d * classes;
  const double n = static_cast<double>(r.samples());

  detail::Objective objective = [&](const Vector& theta, Vector* grad) {
    const Eigen::Map<const Matrix> w(theta.data(), d, classes);
    const auto b = theta.segment(nw, classes);
    Matrix p = data.x * w;
    p.rowwise() += b.transpose();
    const double ce = softmax_and_weighted_ce(p, data.y, &data.w) / n;
    const double f = ce + cfg.l2 * w.squaredNorm();
    if (grad) {
      for (Index i = 0; i < p.rows(); ++i) p(i, data.y[static_cast<std::size_t>(i)]) -= 1.0;
      for (Index i = 0; i < p.rows(); ++i) p.row(i) *= data.w(i);
      p /= n;
      grad->resize(theta.size());
      Matrix gw = data.x.transpose() * p + 2.0 * cfg.l2 * w;
      grad->head(nw) = Eigen::Map<const Vector>(gw.data(), nw);
      grad->segment(nw, classes) = p.colwise().sum().transpose();
    }
    return f;
  };

  Vector theta0 = Vector::Zero(nw + classes);
  const auto res = detail::gradient_descent(std::move(theta0), objective, {}, descent_options(cfg));
  Matrix w = Eigen::Map<const Matrix>(res.theta.data(), d, classes);
  Vector b = res.theta.segment(nw, classes);
  return TaskHead(std::move(w), std::move(b));
}

double cross_entropy(const TaskHead& head, const RepresentationSet& r) {
  const Labels& labels = r.labels();
  require_labels_fit(labels, head.num_classes());
  const Matrix logits = head.logits(r.data());
  const Vector lse = log_sum_exp(logits);
  double total = 0.0;
  for (Index i = 0; i < logits.rows(); ++i) {
    total += lse(i) - logits(i, labels[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<double>(logits.rows());
}

double accuracy(const TaskHead& head, const RepresentationSet& r) {
  const Labels& labels = r.labels();
  const auto pred = head.predict(r.data());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double marginal_entropy(const Labels& labels) {
  if (labels.empty()) throw Error(ErrorCode::DegenerateInput, "entropy of an empty label set");
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<double> counts(static_cast<std::size_t>(classes), 0.0);
  for (int y : labels) {
    if (y < 0) throw Error(ErrorCode::InvalidData, "labels must be nonnegative");
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  const double n = static_cast<double>(labels.size());
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  }
  return h;
}

InformationEstimate usable_information(const RepresentationSet& r, const TaskHead& head) {
  const double value = marginal_entropy(r.labels()) - cross_entropy(head, r);
  return InformationEstimate{value, value < kNegativeInfoFlag};
}

DataSplit holdout_split(Index n, std::uint64_t seed, double train_fraction) {
  if (n < 2) throw Error(ErrorCode::InvalidData, "split needs at least 2 samples");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(mix_seed(seed, 0x5b1175));
  for (std::size_t i = perm.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(perm[i], perm[j]);
  }
  Index n_train = static_cast<Index>(std::llround(train_fraction * static_cast<double>(n)));
  n_train = std::clamp<Index>(n_train, 1, n - 1);
  DataSplit split;
  split.train.assign(perm.begin(), perm.begin() + n_train);
  split.eval.assign(perm.begin() + n_train, perm.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.eval.begin(), split.eval.end());
  return split;
}

StitchResult train_stitcher(const RepresentationSet& src, const RepresentationSet& dst,
                            const TaskHead& dst_head, const PredictiveFamily& family,
                            const TrainConfig& cfg) {
  cfg.validate();
  if (src.samples() != dst.samples()) {
    throw Error(ErrorCode::ShapeMismatch, "stitching needs equal sample counts");
  }
  if (dst_head.input_dim() != dst.features()) {
    throw Error(ErrorCode::ShapeMismatch, "head input width does not match target representation");
  }
  if (src.labels() != dst.labels()) {
    throw Error(ErrorCode::ShapeMismatch, "source and target labels differ");
  }
  if (family.kind == FamilyKind::InvertibleAffine && src.features() != dst.features()) {
    throw Error(ErrorCode::ShapeMismatch, "invertible stitcher needs equal widths");
  }
  require_labels_fit(dst.labels(), dst_head.num_classes());

  const DataSplit split = holdout_split(src.samples(), cfg.seed);
  const RepresentationSet src_tr = src.subset(split.train);
  const RepresentationSet dst_tr = dst.subset(split.train);
  const RepresentationSet src_ev = src.subset(split.eval);
  const RepresentationSet dst_ev = dst.subset(split.eval);

  // Warm start at the closed-form alignment of the training rows.
  std::optional<LinearMap> init;
  try {
    init = fit_map(src_tr, dst_tr, family);
  } catch (const ConvergenceFailure& e) {
    init = e.last_iterate();
  }

  const Index ds = src.features();
  const Index dd = dst.features();
  const Index nw = ds * dd;
  const bool orthogonal = family.is_orthogonal();
  const bool scaled = family.kind == FamilyKind::OrthogonalScale;
  const bool invertible = family.kind == FamilyKind::InvertibleAffine;
  const double lambda = orthogonal ? family.ortho_penalty_weight : 0.0;
  const Matrix& x = src_tr.data();
  const Labels& y = src_tr.labels();
  const double n = static_cast<double>(x.rows());
  const Matrix& hw = dst_head.weight();
  const Vector& hb = dst_head.bias();

  detail::Objective objective = [&](const Vector& theta, Vector* grad) {
    const Eigen::Map<const Matrix> w(theta.data(), ds, dd);
    const auto b = theta.segment(nw, dd);
    const double s = scaled ? std::exp(theta(nw + dd)) : 1.0;
    const Matrix xw = x * w;
    Matrix z = s * xw;
    z.rowwise() += b.transpose();
    Matrix p = z * hw;
    p.rowwise() += hb.transpose();
    double f = softmax_and_weighted_ce(p, y, nullptr) / n;

    // Same objective as the head, charged on the composed weight s * W * H.
    const Matrix composed = s * (w * hw);
    f += cfg.l2 * composed.squaredNorm();
    Matrix g_pen = 2.0 * cfg.l2 * s * (composed * hw.transpose());
    if (lambda > 0.0) {
      if (ds >= dd) {
        const Matrix e = w.transpose() * w - Matrix::Identity(dd, dd);
        f += lambda * e.squaredNorm();
        g_pen = 4.0 * lambda * w * e;
      } else {
        const Matrix e = w * w.transpose() - Matrix::Identity(ds, ds);
        f += lambda * e.squaredNorm();
        g_pen = 4.0 * lambda * e * w;
      }
    }
    if (invertible) {
      Eigen::JacobiSVD<Matrix> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const Vector& sv = svd.singularValues();
      for (Index i = 0; i < sv.size(); ++i) {
        const double gap = family.sv_floor - sv(i);
        if (gap > 0.0) {
          f += family.sv_floor_weight * gap * gap;
          g_pen -= 2.0 * family.sv_floor_weight * gap * svd.matrixU().col(i) *
                   svd.matrixV().col(i).transpose();
        }
      }
    }
    if (grad) {
      for (Index i = 0; i < p.rows(); ++i) p(i, y[static_cast<std::size_t>(i)]) -= 1.0;
      p /= n;
      const Matrix dz = p * hw.transpose();
      grad->resize(theta.size());
      Matrix gw = s * (x.transpose() * dz) + g_pen;
      grad->head(nw) = Eigen::Map<const Vector>(gw.data(), nw);
      grad->segment(nw, dd) = dz.colwise().sum().transpose();
      if (scaled) (*grad)(nw + dd) = s * xw.cwiseProduct(dz).sum() + 2.0 * cfg.l2 * composed.squaredNorm();
    }
    return f;
  };

  detail::Projection project;
  if (invertible) {
    project = [ds](Vector& theta) {
      Eigen::Map<Matrix> w(theta.data(), ds, ds);
      Eigen::JacobiSVD<Matrix> svd(Matrix(w), Eigen::ComputeFullU | Eigen::ComputeFullV);
      const Vector s = svd.singularValues().cwiseMax(kInvertibleMinSingularValue);
      w = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
    };
  }

  Vector theta0(nw + dd + (scaled ? 1 : 0));
  theta0.head(nw) = Eigen::Map<const Vector>(init->weight().data(), nw);
  theta0.segment(nw, dd) = init->bias();
  if (scaled) theta0(nw + dd) = std::log(init->scale());

  const auto res = detail::gradient_descent(std::move(theta0), objective, project, descent_options(cfg));

  Matrix w = Eigen::Map<const Matrix>(res.theta.data(), ds, dd);
  Vector b = res.theta.segment(nw, dd);
  double s = scaled ? std::exp(res.theta(nw + dd)) : 1.0;
  if (orthogonal) {
    if (scaled) s *= singular_values(w).mean();
    w = polar_factor(w);
  }
  LinearMap map(std::move(w), std::move(b), s, family);

  StitchResult out{map};
  const TaskHead stitched_head(map.scale() * (map.weight() * hw), hw.transpose() * map.bias() + hb);
  out.stitched_ce = cross_entropy(stitched_head, src_ev);
  out.stitched_accuracy = accuracy(stitched_head, src_ev);
  out.native_ce = cross_entropy(dst_head, dst_ev);
  out.native_accuracy = accuracy(dst_head, dst_ev);
  if (!std::isfinite(out.stitched_ce)) {
    throw ConvergenceFailure("stitcher produced non-finite cross-entropy", map);
  }
  return out;
}

StitchResult stitch(const RepresentationSet& src, const RepresentationSet& dst,
                    const PredictiveFamily& family, const TrainConfig& head_cfg,
                    const TrainConfig& stitch_cfg) {
  const DataSplit split = holdout_split(dst.samples(), stitch_cfg.seed);
  const TaskHead head = train_head(dst.subset(split.train), head_cfg);
  return train_stitcher(src, dst, head, family, stitch_cfg);
}

double directed_func_similarity(const StitchResult& res) {
  if (!(res.native_accuracy > 0.0)) {
    throw Error(ErrorCode::DegenerateInput, "native accuracy is zero");
  }
  return res.stitched_accuracy / res.native_accuracy;
}

double clip_ratio(double ratio) noexcept { return ratio > 1.0 ? 1.0 : ratio; }

double symmetric_func_similarity(double forward, double backward) noexcept {
  return std::min(forward, backward);
}

Labels coarsen_labels(const Labels& labels, const std::vector<int>& grouping) {
  Labels out;
  out.reserve(labels.size());
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= grouping.size() ||
        grouping[static_cast<std::size_t>(y)] < 0) {
      throw Error(ErrorCode::InvalidData, "grouping does not cover label " + std::to_string(y));
    }
    out.push_back(grouping[static_cast<std::size_t>(y)]);
  }
  return out;
}

}  // namespace usim
