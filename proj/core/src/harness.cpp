#include "usim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "usim/alignment.hpp"
#include "usim/functional.hpp"
#include "usim/io.hpp"
#include "usim/linalg.hpp"
#include "usim/metrics.hpp"

namespace usim {

namespace {

using nlohmann::json;

constexpr double kMonotoneSlack = 1e-9;
constexpr double kHierarchySlack = 0.03;
constexpr double kCkaFloor = 0.8;
constexpr double kRsaFloor = 0.75;
constexpr double kNuisanceRepCeiling = 0.7;
constexpr double kDegenerateRange = 1e-6;
constexpr std::uint64_t kStitchStream = 0x57;

std::string short_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string scenario_name(const ScenarioSpec& s) {
  std::string out(to_string(s.kind));
  if (s.kind == ScenarioKind::Projection) out += "(keep=" + std::to_string(s.keep) + ")";
  if (s.kind == ScenarioKind::NuisanceAugment) out += "(extra=" + std::to_string(s.extra) + ")";
  if (s.kind == ScenarioKind::NonlinearWarp) out += "(depth=" + std::to_string(s.depth) + ")";
  return out;
}

std::vector<ScenarioSpec> all_kinds(Index n, Index d, int classes, int fine_per_coarse) {
  std::vector<ScenarioSpec> out;
  for (auto kind : {ScenarioKind::OrthoTwin, ScenarioKind::ScaleTwin, ScenarioKind::AffineTwin,
                    ScenarioKind::Projection, ScenarioKind::NuisanceAugment,
                    ScenarioKind::NonlinearWarp, ScenarioKind::IndependentPair}) {
    ScenarioSpec s;
    s.kind = kind;
    s.n = n;
    s.d = d;
    s.classes = classes;
    s.fine_per_coarse = fine_per_coarse;
    s.keep = d / 2;
    s.extra = d;
    s.depth = 2;
    out.push_back(s);
  }
  return out;
}

std::vector<std::string> with_meta(std::vector<std::string> tail) {
  std::vector<std::string> cols{"pair", "scenario", "noise", "replicate", "family"};
  cols.insert(cols.end(), tail.begin(), tail.end());
  cols.emplace_back("error");
  return cols;
}

std::vector<Cell> meta_cells(const PairSpec& p, FamilyKind family) {
  return {Cell{p.id}, Cell{scenario_name(p.spec)}, Cell{p.spec.noise_sigma},
          Cell{static_cast<std::int64_t>(p.replicate)}, Cell{std::string(to_string(family))}};
}

// Outcome slot for one (pair, family) job.
template <class T>
struct Slot {
  std::optional<T> value;
  std::string error;
};

template <class T>
void fail_all(std::vector<Slot<T>>& slots, const Error& e) {
  for (auto& s : slots) {
    s.value.reset();
    s.error = std::string(code_name(e.code()));
  }
}

struct FuncOutcome {
  FunctionalScores scores;
  UsableConditionalInfo info;
  double native_forward = 0.0;
  double native_backward = 0.0;
};

// Heads for both sides of a pair, trained once on the shared split and reused
// across families.
class PairStitcher {
 public:
  PairStitcher(const RepresentationSet& a, const RepresentationSet& b, std::uint64_t seed)
      : a_(a),
        b_(b),
        stitch_cfg_(TrainConfig::stitcher_defaults(seed)),
        split_(holdout_split(a.samples(), seed)),
        head_a_(train_head(a.subset(split_.train), TrainConfig::head_defaults(seed))),
        head_b_(train_head(b.subset(split_.train), TrainConfig::head_defaults(seed))) {}

  FuncOutcome run(FamilyKind kind) const {
    const PredictiveFamily family = PredictiveFamily::of(kind);
    const StitchResult fwd = train_stitcher(a_, b_, head_b_, family, stitch_cfg_);
    const StitchResult bwd = train_stitcher(b_, a_, head_a_, family, stitch_cfg_);
    FuncOutcome out;
    out.scores = {directed_func_similarity(fwd), directed_func_similarity(bwd)};
    out.info = {fwd.usable_cond_info(), bwd.usable_cond_info()};
    out.native_forward = fwd.native_accuracy;
    out.native_backward = bwd.native_accuracy;
    return out;
  }

 private:
  const RepresentationSet& a_;
  const RepresentationSet& b_;
  TrainConfig stitch_cfg_;
  DataSplit split_;
  TaskHead head_a_;
  TaskHead head_b_;
};

std::uint64_t stitch_seed(const PairSpec& p) { return mix_seed(p.spec.seed, kStitchStream); }

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json scenario_to_json(const ScenarioSpec& s) {
  json j{{"kind", std::string(to_string(s.kind))},
         {"n", s.n},
         {"d", s.d},
         {"classes", s.classes},
         {"fine_per_coarse", s.fine_per_coarse},
         {"margin", s.margin}};
  if (s.kind == ScenarioKind::Projection) j["keep"] = s.keep;
  if (s.kind == ScenarioKind::NuisanceAugment) j["extra"] = s.extra;
  if (s.kind == ScenarioKind::NonlinearWarp) j["depth"] = s.depth;
  return j;
}

ScenarioSpec scenario_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidSpec, "scenario entries must be objects");
  ScenarioSpec s;
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") {
      const auto kind = parse_scenario(value.get<std::string>());
      if (!kind) throw Error(ErrorCode::InvalidSpec, "unknown scenario kind " + value.dump());
      s.kind = *kind;
    } else if (key == "n") {
      s.n = value.get<Index>();
    } else if (key == "d") {
      s.d = value.get<Index>();
    } else if (key == "classes") {
      s.classes = value.get<int>();
    } else if (key == "fine_per_coarse") {
      s.fine_per_coarse = value.get<int>();
    } else if (key == "keep") {
      s.keep = value.get<Index>();
    } else if (key == "extra") {
      s.extra = value.get<Index>();
    } else if (key == "depth") {
      s.depth = value.get<int>();
    } else if (key == "margin") {
      s.margin = value.get<double>();
    } else {
      throw Error(ErrorCode::InvalidSpec, "unknown scenario key '" + key + "'");
    }
  }
  if (!j.contains("kind")) throw Error(ErrorCode::InvalidSpec, "scenario without a kind");
  return s;
}

ExperimentResult start(Experiment e, const Grid& grid, std::uint64_t seed) {
  grid.validate();
  ExperimentResult r;
  r.experiment = e;
  r.grid = grid;
  r.seed = seed;
  r.pairs = static_cast<std::int64_t>(grid.pair_count());
  return r;
}

std::vector<FamilyKind> nested_families(const std::vector<FamilyKind>& families) {
  std::vector<FamilyKind> out;
  for (auto f : families) {
    if (f != FamilyKind::InvertibleAffine) out.push_back(f);
  }
  std::sort(out.begin(), out.end(), [](FamilyKind a, FamilyKind b) {
    return static_cast<int>(a) < static_cast<int>(b);
  });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t family_slot(const std::vector<FamilyKind>& families, FamilyKind f) {
  return static_cast<std::size_t>(std::find(families.begin(), families.end(), f) - families.begin());
}

}  // namespace

std::string_view to_string(Experiment e) noexcept {
  switch (e) {
    case Experiment::Asymmetry: return "asymmetry";
    case Experiment::Monotonicity: return "monotonicity";
    case Experiment::Alignment: return "alignment";
    case Experiment::Hierarchy: return "hierarchy";
    case Experiment::Sufficiency: return "sufficiency";
  }
  return "?";
}

std::optional<Experiment> parse_experiment(std::string_view text) noexcept {
  for (auto e : {Experiment::Asymmetry, Experiment::Monotonicity, Experiment::Alignment,
                 Experiment::Hierarchy, Experiment::Sufficiency}) {
    if (text == to_string(e)) return e;
  }
  return std::nullopt;
}

void Grid::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidSpec, why); };
  if (scenarios.empty()) fail("grid has no scenarios");
  if (noise_levels.empty()) fail("grid has no noise levels");
  if (replicates < 1) fail("replicates must be >= 1");
  if (families.empty()) fail("grid has no families");
  if (!(func_threshold > 0.0) || !std::isfinite(func_threshold)) fail("threshold must be > 0");
  if (bins < 1) fail("bins must be >= 1");
  if (!(top_bin_edge >= 0.0 && top_bin_edge <= 1.0)) fail("top_bin_edge must be in [0, 1]");
  for (double noise : noise_levels) {
    for (auto s : scenarios) {
      s.noise_sigma = noise;
      s.validate();
    }
  }
}

json Grid::to_json() const {
  json j;
  j["scenarios"] = json::array();
  for (const auto& s : scenarios) j["scenarios"].push_back(scenario_to_json(s));
  j["noise"] = noise_levels;
  j["replicates"] = replicates;
  j["families"] = json::array();
  for (auto f : families) j["families"].push_back(std::string(to_string(f)));
  j["threshold"] = func_threshold;
  j["bins"] = bins;
  j["top_bin_edge"] = top_bin_edge;
  return j;
}

Grid Grid::from_json(const json& j, const Grid& defaults) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidSpec, "grid must be a JSON object");
  Grid g = defaults;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "scenarios") {
        g.scenarios.clear();
        for (const auto& s : value) g.scenarios.push_back(scenario_from_json(s));
      } else if (key == "noise") {
        g.noise_levels = value.get<std::vector<double>>();
      } else if (key == "replicates") {
        g.replicates = value.get<int>();
      } else if (key == "families") {
        g.families.clear();
        for (const auto& f : value) {
          const auto kind = parse_family(f.get<std::string>());
          if (!kind) throw Error(ErrorCode::InvalidSpec, "unknown family " + f.dump());
          g.families.push_back(*kind);
        }
      } else if (key == "threshold") {
        g.func_threshold = value.get<double>();
      } else if (key == "bins") {
        g.bins = value.get<int>();
      } else if (key == "top_bin_edge") {
        g.top_bin_edge = value.get<double>();
      } else {
        throw Error(ErrorCode::InvalidSpec, "unknown grid key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("malformed grid: ") + e.what());
  }
  g.validate();
  return g;
}

Grid default_grid(Experiment e) {
  Grid g;
  switch (e) {
    case Experiment::Monotonicity:
      g.scenarios = all_kinds(400, 8, 4, 2);
      g.noise_levels = {0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5};
      break;
    case Experiment::Alignment:
      g.scenarios = all_kinds(400, 8, 4, 2);
      g.noise_levels = {0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5};
      g.families = {FamilyKind::OrthogonalScale};
      break;
    case Experiment::Asymmetry:
      g.scenarios = all_kinds(400, 8, 4, 2);
      g.noise_levels = {0.0, 0.1};
      break;
    case Experiment::Hierarchy: {
      g.scenarios.clear();
      for (int depth : {1, 2, 3}) {
        ScenarioSpec s;
        s.kind = ScenarioKind::NonlinearWarp;
        s.n = 1000;
        s.d = 16;
        s.classes = 20;
        s.fine_per_coarse = 5;
        s.depth = depth;
        g.scenarios.push_back(s);
      }
      g.noise_levels = {0.0, 0.1};
      break;
    }
    case Experiment::Sufficiency:
      g.scenarios = all_kinds(400, 8, 4, 2);
      g.noise_levels = {0.0, 0.05, 0.1};
      break;
  }
  return g;
}

std::vector<PairSpec> expand(const Grid& grid, std::uint64_t master_seed) {
  std::vector<PairSpec> out;
  out.reserve(grid.pair_count());
  for (const auto& base : grid.scenarios) {
    for (double noise : grid.noise_levels) {
      for (int k = 0; k < grid.replicates; ++k) {
        PairSpec p;
        p.spec = base;
        p.spec.noise_sigma = noise;
        p.spec.seed = mix_seed(master_seed, static_cast<std::uint64_t>(k));
        p.replicate = k;
        p.id = scenario_name(base) + "/noise=" + short_real(noise) + "/rep=" + std::to_string(k);
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

unsigned worker_count() {
  if (const char* env = std::getenv("USIM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? hc : 1;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (!stop.load()) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) break;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
          stop.store(true);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

std::vector<std::pair<std::size_t, std::size_t>> equal_count_bins(std::size_t n, std::size_t bins) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (n == 0) return out;
  bins = std::clamp<std::size_t>(bins, 1, n);
  for (std::size_t b = 0; b < bins; ++b) out.emplace_back(b * n / bins, (b + 1) * n / bins);
  return out;
}

json ExperimentResult::summary() const {
  json j;
  j["experiment"] = std::string(to_string(experiment));
  j["grid"] = grid.to_json();
  j["seed"] = seed;
  j["metrics"] = metrics;
  j["violations"] = violations;
  j["checks"] = checks;
  j["pairs"] = pairs;
  return j;
}

std::string ExperimentResult::summary_line() const {
  return "experiment=" + std::string(to_string(experiment)) + " pairs=" + std::to_string(pairs) +
         " violations=" + std::to_string(violations) + " violation_rate=" +
         format_real(violation_rate());
}

// ---------------------------------------------------------------------------

ExperimentResult run_monotonicity(const Grid& grid, std::uint64_t seed) {
  ExperimentResult r = start(Experiment::Monotonicity, grid, seed);
  const auto pairs = expand(grid, seed);
  const auto& fams = grid.families;
  std::vector<std::vector<Slot<RepSimilarity>>> res(pairs.size(),
                                                    std::vector<Slot<RepSimilarity>>(fams.size()));
  parallel_for(pairs.size(), [&](std::size_t i) {
    try {
      const ScenarioPair sp = generate(pairs[i].spec);
      for (std::size_t f = 0; f < fams.size(); ++f) {
        try {
          res[i][f].value = rep_similarity(sp.z1, sp.z2, PredictiveFamily::of(fams[f]),
                                           GradientConfig{.seed = pairs[i].spec.seed});
        } catch (const Error& e) {
          res[i][f].error = std::string(code_name(e.code()));
        }
      }
    } catch (const Error& e) {
      fail_all(res[i], e);
    }
  });

  r.table = Table(with_meta({"rep_forward", "rep_backward", "rep_symmetric"}));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t f = 0; f < fams.size(); ++f) {
      auto row = meta_cells(pairs[i], fams[f]);
      const auto& s = res[i][f];
      row.push_back(s.value ? Cell{s.value->forward} : null_cell());
      row.push_back(s.value ? Cell{s.value->backward} : null_cell());
      row.push_back(s.value ? Cell{s.value->symmetric()} : null_cell());
      row.push_back(s.error.empty() ? null_cell() : Cell{s.error});
      r.table.add_row(std::move(row));
    }
  }

  // Ordering checks across the closed-form nested families.
  const auto nested = nested_families(fams);
  std::vector<std::string> triple_cols{"pair", "scenario"};
  for (auto f : nested) triple_cols.emplace_back(to_string(f));
  triple_cols.emplace_back("violations");
  Table triples(triple_cols);
  std::int64_t errors = 0;
  double min_gap = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> ok_pairs;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    bool complete = true;
    for (auto f : nested) complete = complete && res[i][family_slot(fams, f)].value.has_value();
    std::vector<Cell> row{Cell{pairs[i].id}, Cell{scenario_name(pairs[i].spec)}};
    if (!complete) {
      ++errors;
      for (std::size_t k = 0; k < nested.size(); ++k) {
        const auto& s = res[i][family_slot(fams, nested[k])];
        row.push_back(s.value ? Cell{s.value->symmetric()} : null_cell());
      }
      row.push_back(null_cell());
      triples.add_row(std::move(row));
      continue;
    }
    ok_pairs.push_back(i);
    std::int64_t bad = 0;
    for (std::size_t k = 0; k + 1 < nested.size(); ++k) {
      const auto& lo = *res[i][family_slot(fams, nested[k])].value;
      const auto& hi = *res[i][family_slot(fams, nested[k + 1])].value;
      for (auto [a, b] : {std::pair{lo.forward, hi.forward}, std::pair{lo.backward, hi.backward},
                          std::pair{lo.symmetric(), hi.symmetric()}}) {
        ++r.checks;
        min_gap = std::min(min_gap, b - a);
        if (a > b + kMonotoneSlack) ++bad;
      }
    }
    r.violations += bad;
    for (auto f : nested) row.push_back(Cell{res[i][family_slot(fams, f)].value->symmetric()});
    row.push_back(Cell{bad});
    triples.add_row(std::move(row));
  }
  r.extras["triples"] = std::move(triples);

  // Ribbons: pairs sorted by the widest family's symmetric score, equal-count bins.
  if (!nested.empty()) {
    const std::size_t key_slot = family_slot(fams, nested.back());
    std::vector<std::size_t> order = ok_pairs;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return res[a][key_slot].value->symmetric() < res[b][key_slot].value->symmetric();
    });
    std::vector<std::string> cols{"bin", "count", "key_min", "key_max"};
    for (auto f : nested) cols.push_back("mean_" + std::string(to_string(f)));
    Table ribbons(cols);
    const auto bins = equal_count_bins(order.size(), 100);
    for (std::size_t b = 0; b < bins.size(); ++b) {
      const auto [lo, hi] = bins[b];
      std::vector<Cell> row{Cell{static_cast<std::int64_t>(b)},
                            Cell{static_cast<std::int64_t>(hi - lo)},
                            Cell{res[order[lo]][key_slot].value->symmetric()},
                            Cell{res[order[hi - 1]][key_slot].value->symmetric()}};
      for (auto f : nested) {
        std::vector<double> v;
        for (std::size_t k = lo; k < hi; ++k) v.push_back(res[order[k]][family_slot(fams, f)].value->symmetric());
        row.push_back(Cell{mean(v)});
      }
      ribbons.add_row(std::move(row));
    }
    r.extras["ribbons"] = std::move(ribbons);
  }

  json by_scenario = json::object();
  for (const auto& base : grid.scenarios) {
    const std::string name = scenario_name(base);
    for (std::size_t f = 0; f < fams.size(); ++f) {
      std::vector<double> v;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (scenario_name(pairs[i].spec) == name && res[i][f].value) v.push_back(res[i][f].value->symmetric());
      }
      by_scenario[name][std::string(to_string(fams[f]))] = number_or_null(mean(v));
    }
  }
  r.metrics["mean_symmetric_by_scenario"] = by_scenario;
  r.metrics["error_pairs"] = errors;
  r.metrics["min_gap"] = number_or_null(min_gap);
  r.metrics["slack"] = kMonotoneSlack;
  return r;
}

// ---------------------------------------------------------------------------

ExperimentResult run_metric_alignment(const Grid& grid, std::uint64_t seed) {
  ExperimentResult r = start(Experiment::Alignment, grid, seed);
  const auto pairs = expand(grid, seed);
  const auto& fams = grid.families;
  struct Baselines {
    double cka, rsa, svcca, cca;
  };
  std::vector<std::optional<Baselines>> base(pairs.size());
  std::vector<std::string> base_error(pairs.size());
  std::vector<std::vector<Slot<double>>> res(pairs.size(), std::vector<Slot<double>>(fams.size()));
  parallel_for(pairs.size(), [&](std::size_t i) {
    try {
      const ScenarioPair sp = generate(pairs[i].spec);
      try {
        base[i] = Baselines{linear_cka(sp.z1, sp.z2), rsa(sp.z1, sp.z2), svcca(sp.z1, sp.z2),
                            mean_cca(sp.z1, sp.z2)};
      } catch (const Error& e) {
        base_error[i] = std::string(code_name(e.code()));
      }
      for (std::size_t f = 0; f < fams.size(); ++f) {
        try {
          res[i][f].value = symmetric_rep_similarity(sp.z1, sp.z2, PredictiveFamily::of(fams[f]),
                                                     GradientConfig{.seed = pairs[i].spec.seed});
        } catch (const Error& e) {
          res[i][f].error = std::string(code_name(e.code()));
        }
      }
    } catch (const Error& e) {
      fail_all(res[i], e);
      base_error[i] = std::string(code_name(e.code()));
    }
  });

  r.table = Table(with_meta({"cka", "rsa", "svcca", "cca", "rep_symmetric"}));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t f = 0; f < fams.size(); ++f) {
      auto row = meta_cells(pairs[i], fams[f]);
      const auto& b = base[i];
      for (double Baselines::*m : {&Baselines::cka, &Baselines::rsa, &Baselines::svcca, &Baselines::cca}) {
        row.push_back(b ? Cell{(*b).*m} : null_cell());
      }
      row.push_back(res[i][f].value ? Cell{*res[i][f].value} : null_cell());
      std::string err = res[i][f].error.empty() ? base_error[i] : res[i][f].error;
      row.push_back(err.empty() ? null_cell() : Cell{err});
      r.table.add_row(std::move(row));
    }
  }

  Table corr({"family", "metric", "n", "pearson", "spearman", "degenerate"});
  const std::vector<std::pair<std::string, double Baselines::*>> metric_list{
      {"cka", &Baselines::cka}, {"rsa", &Baselines::rsa}, {"svcca", &Baselines::svcca},
      {"cca", &Baselines::cca}};
  bool any_degenerate = false;
  for (std::size_t f = 0; f < fams.size(); ++f) {
    const std::string fam(to_string(fams[f]));
    for (const auto& [name, member] : metric_list) {
      std::vector<double> xs, ys;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (base[i] && res[i][f].value) {
          xs.push_back((*base[i]).*member);
          ys.push_back(*res[i][f].value);
        }
      }
      auto range = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        return *hi - *lo;
      };
      const bool degenerate = xs.size() < 3 || range(xs) < kDegenerateRange || range(ys) < kDegenerateRange;
      std::optional<double> pr, sr;
      if (!degenerate) {
        pr = pearson(xs, ys);
        sr = spearman(xs, ys);
      }
      any_degenerate = any_degenerate || degenerate;
      corr.add_row({Cell{fam}, Cell{name}, Cell{static_cast<std::int64_t>(xs.size())}, cell(pr),
                    cell(sr), Cell{static_cast<std::int64_t>(degenerate ? 1 : 0)}});
      r.metrics["correlations"][fam][name] = {{"pearson", pr ? json(*pr) : json(nullptr)},
                                              {"spearman", sr ? json(*sr) : json(nullptr)},
                                              {"n", xs.size()},
                                              {"degenerate", degenerate}};
      if (!degenerate && (name == "cka" || name == "rsa")) {
        ++r.checks;
        if (*sr < (name == "cka" ? kCkaFloor : kRsaFloor)) ++r.violations;
      }
    }
  }
  r.extras["correlations"] = std::move(corr);
  r.metrics["degenerate_grid"] = any_degenerate;
  if (any_degenerate) r.metrics["flag"] = std::string(code_name(ErrorCode::DegenerateGrid));
  r.metrics["floors"] = {{"cka", kCkaFloor}, {"rsa", kRsaFloor}};
  return r;
}

// ---------------------------------------------------------------------------

namespace {

// Expected sign of forward-minus-backward stitching accuracy from what each
// side retains of the other: a rank-deficient projection of Z1 loses
// information only in the backward direction.
int information_retention_sign(const ScenarioSpec& s) {
  if (s.kind == ScenarioKind::Projection && s.keep < s.d) return 1;
  return 0;
}

}  // namespace

ExperimentResult run_asymmetry(const Grid& grid, std::uint64_t seed) {
  ExperimentResult r = start(Experiment::Asymmetry, grid, seed);
  const auto pairs = expand(grid, seed);
  const auto& fams = grid.families;
  std::vector<std::vector<Slot<FuncOutcome>>> res(pairs.size(),
                                                  std::vector<Slot<FuncOutcome>>(fams.size()));
  parallel_for(pairs.size(), [&](std::size_t i) {
    try {
      const ScenarioPair sp = generate(pairs[i].spec);
      const PairStitcher stitcher(sp.z1, sp.z2, stitch_seed(pairs[i]));
      for (std::size_t f = 0; f < fams.size(); ++f) {
        try {
          res[i][f].value = stitcher.run(fams[f]);
        } catch (const Error& e) {
          res[i][f].error = std::string(code_name(e.code()));
        }
      }
    } catch (const Error& e) {
      fail_all(res[i], e);
    }
  });

  r.table = Table(with_meta({"forward_raw", "backward_raw", "forward", "backward", "diff",
                             "abs_diff", "oracle_sign", "usable_cond_info_forward",
                             "usable_cond_info_backward"}));
  std::vector<double> diffs, abs_diffs;
  std::map<std::string, std::vector<double>> by_scenario;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const int sign = information_retention_sign(pairs[i].spec);
    for (std::size_t f = 0; f < fams.size(); ++f) {
      auto row = meta_cells(pairs[i], fams[f]);
      const auto& s = res[i][f];
      if (s.value) {
        const auto& sc = s.value->scores;
        const double diff = sc.forward_clipped() - sc.backward_clipped();
        diffs.push_back(diff);
        abs_diffs.push_back(std::abs(diff));
        by_scenario[scenario_name(pairs[i].spec)].push_back(diff);
        if (sign != 0) {
          ++r.checks;
          if (diff * sign <= 0.0) ++r.violations;
        }
        row.insert(row.end(), {Cell{sc.forward}, Cell{sc.backward}, Cell{sc.forward_clipped()},
                               Cell{sc.backward_clipped()}, Cell{diff}, Cell{std::abs(diff)},
                               Cell{static_cast<std::int64_t>(sign)}, Cell{s.value->info.forward},
                               Cell{s.value->info.backward}, null_cell()});
      } else {
        for (int k = 0; k < 6; ++k) row.push_back(null_cell());
        row.push_back(Cell{static_cast<std::int64_t>(sign)});
        row.push_back(null_cell());
        row.push_back(null_cell());
        row.push_back(Cell{s.error});
      }
      r.table.add_row(std::move(row));
    }
  }

  constexpr int kHistBins = 20;
  Table hist({"bin", "lo", "hi", "count"});
  std::vector<std::int64_t> counts(kHistBins, 0);
  for (double d : diffs) {
    const int b = std::clamp(static_cast<int>(std::floor((d + 1.0) / 2.0 * kHistBins)), 0, kHistBins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  for (int b = 0; b < kHistBins; ++b) {
    hist.add_row({Cell{static_cast<std::int64_t>(b)}, Cell{-1.0 + 2.0 * b / kHistBins},
                  Cell{-1.0 + 2.0 * (b + 1) / kHistBins}, Cell{counts[static_cast<std::size_t>(b)]}});
  }
  r.extras["histogram"] = std::move(hist);

  r.metrics["mean_diff"] = number_or_null(mean(diffs));
  r.metrics["mean_abs_diff"] = number_or_null(mean(abs_diffs));
  r.metrics["p95_abs_diff"] = number_or_null(percentile(abs_diffs, 0.95));
  r.metrics["max_abs_diff"] =
      number_or_null(abs_diffs.empty() ? std::nan("") : *std::max_element(abs_diffs.begin(), abs_diffs.end()));
  for (const auto& [name, v] : by_scenario) {
    std::vector<double> a;
    for (double x : v) a.push_back(std::abs(x));
    r.metrics["by_scenario"][name] = {{"mean_diff", number_or_null(mean(v))},
                                      {"p95_abs_diff", number_or_null(percentile(a, 0.95))},
                                      {"rows", v.size()}};
  }
  return r;
}

// ---------------------------------------------------------------------------

ExperimentResult run_hierarchy(const Grid& grid, std::uint64_t seed) {
  ExperimentResult r = start(Experiment::Hierarchy, grid, seed);
  const auto pairs = expand(grid, seed);
  const auto& fams = grid.families;
  struct Levels {
    FuncOutcome fine;
    FuncOutcome coarse;
  };
  std::vector<std::vector<Slot<Levels>>> res(pairs.size(), std::vector<Slot<Levels>>(fams.size()));
  parallel_for(pairs.size(), [&](std::size_t i) {
    try {
      const ScenarioPair sp = generate(pairs[i].spec);
      const Labels coarse = coarsen_labels(sp.z1.labels(), sp.grouping);
      const RepresentationSet c1 = sp.z1.with_labels(coarse);
      const RepresentationSet c2 = sp.z2.with_labels(coarse);
      const PairStitcher fine_stitcher(sp.z1, sp.z2, stitch_seed(pairs[i]));
      const PairStitcher coarse_stitcher(c1, c2, stitch_seed(pairs[i]));
      for (std::size_t f = 0; f < fams.size(); ++f) {
        try {
          res[i][f].value = Levels{fine_stitcher.run(fams[f]), coarse_stitcher.run(fams[f])};
        } catch (const Error& e) {
          res[i][f].error = std::string(code_name(e.code()));
        }
      }
    } catch (const Error& e) {
      fail_all(res[i], e);
    }
  });

  struct Entry {
    std::size_t pair;
    std::size_t family;
    double fine;
  };
  std::vector<Entry> order;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t f = 0; f < fams.size(); ++f) {
      const auto& s = res[i][f];
      order.push_back({i, f, s.value ? s.value->fine.scores.symmetric_clipped() : -1.0});
    }
  }
  std::stable_sort(order.begin(), order.end(), [](const Entry& a, const Entry& b) {
    if (a.family != b.family) return a.family < b.family;
    return a.fine < b.fine;
  });

  r.table = Table(with_meta({"fine_forward", "fine_backward", "fine_symmetric", "coarse_forward",
                             "coarse_backward", "coarse_symmetric", "dominated", "strict"}));
  std::int64_t strict = 0;
  std::vector<double> fines, coarses;
  for (const auto& e : order) {
    auto row = meta_cells(pairs[e.pair], fams[e.family]);
    const auto& s = res[e.pair][e.family];
    if (!s.value) {
      for (int k = 0; k < 8; ++k) row.push_back(null_cell());
      row.push_back(Cell{s.error});
      r.table.add_row(std::move(row));
      continue;
    }
    const auto& fine = s.value->fine.scores;
    const auto& coarse = s.value->coarse.scores;
    const double fs = fine.symmetric_clipped();
    const double cs = coarse.symmetric_clipped();
    const bool ok = cs >= fs - kHierarchySlack;
    ++r.checks;
    if (!ok) ++r.violations;
    if (cs >= fs) ++strict;
    fines.push_back(fs);
    coarses.push_back(cs);
    row.insert(row.end(), {Cell{fine.forward_clipped()}, Cell{fine.backward_clipped()}, Cell{fs},
                           Cell{coarse.forward_clipped()}, Cell{coarse.backward_clipped()}, Cell{cs},
                           Cell{static_cast<std::int64_t>(ok ? 1 : 0)},
                           Cell{static_cast<std::int64_t>(cs >= fs ? 1 : 0)}, null_cell()});
    r.table.add_row(std::move(row));
  }
  r.metrics["dominance_rate"] =
      r.checks > 0 ? json(1.0 - static_cast<double>(r.violations) / static_cast<double>(r.checks)) : json(nullptr);
  r.metrics["strict_rate"] =
      r.checks > 0 ? json(static_cast<double>(strict) / static_cast<double>(r.checks)) : json(nullptr);
  r.metrics["slack"] = kHierarchySlack;
  r.metrics["mean_fine"] = number_or_null(mean(fines));
  r.metrics["mean_coarse"] = number_or_null(mean(coarses));
  return r;
}

// ---------------------------------------------------------------------------

ExperimentResult run_sufficiency(const Grid& grid, std::uint64_t seed) {
  ExperimentResult r = start(Experiment::Sufficiency, grid, seed);
  const auto pairs = expand(grid, seed);
  const auto& fams = grid.families;
  struct Scores {
    RepSimilarity rep;
    FuncOutcome func;
  };
  std::vector<std::vector<Slot<Scores>>> res(pairs.size(), std::vector<Slot<Scores>>(fams.size()));
  parallel_for(pairs.size(), [&](std::size_t i) {
    try {
      const ScenarioPair sp = generate(pairs[i].spec);
      const PairStitcher stitcher(sp.z1, sp.z2, stitch_seed(pairs[i]));
      for (std::size_t f = 0; f < fams.size(); ++f) {
        try {
          const RepSimilarity rep = rep_similarity(sp.z1, sp.z2, PredictiveFamily::of(fams[f]),
                                                   GradientConfig{.seed = pairs[i].spec.seed});
          res[i][f].value = Scores{rep, stitcher.run(fams[f])};
        } catch (const Error& e) {
          res[i][f].error = std::string(code_name(e.code()));
        }
      }
    } catch (const Error& e) {
      fail_all(res[i], e);
    }
  });

  const double thr = grid.func_threshold;
  r.table = Table(with_meta({"rep_forward", "rep_backward", "rep_symmetric", "func_forward",
                             "func_backward", "func_symmetric", "high_func"}));
  const std::size_t nb = static_cast<std::size_t>(grid.bins);
  // Index fams.size() pools every family.
  std::vector<std::vector<std::int64_t>> bin_n(fams.size() + 1, std::vector<std::int64_t>(nb, 0));
  std::vector<std::vector<std::int64_t>> bin_hi(fams.size() + 1, std::vector<std::int64_t>(nb, 0));
  std::vector<std::int64_t> top_n(fams.size() + 1, 0), top_hi(fams.size() + 1, 0);
  std::vector<std::int64_t> nuis_n(fams.size() + 1, 0), nuis_ok(fams.size() + 1, 0);

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t f = 0; f < fams.size(); ++f) {
      auto row = meta_cells(pairs[i], fams[f]);
      const auto& s = res[i][f];
      if (!s.value) {
        for (int k = 0; k < 7; ++k) row.push_back(null_cell());
        row.push_back(Cell{s.error});
        r.table.add_row(std::move(row));
        continue;
      }
      const double rep = s.value->rep.symmetric();
      const double func = s.value->func.scores.symmetric_clipped();
      const bool high = func > thr;
      const std::size_t b = std::min<std::size_t>(
          nb - 1, static_cast<std::size_t>(std::max(0.0, std::floor(rep * static_cast<double>(nb)))));
      for (std::size_t slot : {f, fams.size()}) {
        ++bin_n[slot][b];
        if (high) ++bin_hi[slot][b];
        if (rep >= grid.top_bin_edge) {
          ++top_n[slot];
          if (high) ++top_hi[slot];
        }
        if (pairs[i].spec.kind == ScenarioKind::NuisanceAugment) {
          ++nuis_n[slot];
          if (high && rep < kNuisanceRepCeiling) ++nuis_ok[slot];
        }
      }
      if (rep >= grid.top_bin_edge) {
        ++r.checks;
        if (!high) ++r.violations;
      }
      row.insert(row.end(), {Cell{s.value->rep.forward}, Cell{s.value->rep.backward}, Cell{rep},
                             Cell{s.value->func.scores.forward_clipped()},
                             Cell{s.value->func.scores.backward_clipped()}, Cell{func},
                             Cell{static_cast<std::int64_t>(high ? 1 : 0)}, null_cell()});
      r.table.add_row(std::move(row));
    }
  }

  auto ratio = [](std::int64_t num, std::int64_t den) {
    return den > 0 ? json(static_cast<double>(num) / static_cast<double>(den)) : json(nullptr);
  };
  Table curve({"family", "bin", "lo", "hi", "count", "high_count", "probability"});
  for (std::size_t slot = 0; slot <= fams.size(); ++slot) {
    const std::string fam = slot < fams.size() ? std::string(to_string(fams[slot])) : "all";
    for (std::size_t b = 0; b < nb; ++b) {
      const auto n = bin_n[slot][b];
      curve.add_row({Cell{fam}, Cell{static_cast<std::int64_t>(b)},
                     Cell{static_cast<double>(b) / static_cast<double>(nb)},
                     Cell{static_cast<double>(b + 1) / static_cast<double>(nb)}, Cell{n},
                     Cell{bin_hi[slot][b]},
                     n > 0 ? Cell{static_cast<double>(bin_hi[slot][b]) / static_cast<double>(n)}
                           : null_cell()});
    }
    r.metrics["top_bin"][fam] = {{"count", top_n[slot]}, {"high", top_hi[slot]},
                                 {"probability", ratio(top_hi[slot], top_n[slot])}};
    r.metrics["nuisance"][fam] = {{"count", nuis_n[slot]}, {"high_func_low_rep", nuis_ok[slot]},
                                  {"fraction", ratio(nuis_ok[slot], nuis_n[slot])}};
  }
  r.extras["curve"] = std::move(curve);
  r.metrics["threshold"] = thr;
  r.metrics["top_bin_edge"] = grid.top_bin_edge;
  r.metrics["nuisance_rep_ceiling"] = kNuisanceRepCeiling;
  return r;
}

ExperimentResult run_experiment(Experiment e, const Grid& grid, std::uint64_t seed) {
  switch (e) {
    case Experiment::Asymmetry: return run_asymmetry(grid, seed);
    case Experiment::Monotonicity: return run_monotonicity(grid, seed);
    case Experiment::Alignment: return run_metric_alignment(grid, seed);
    case Experiment::Hierarchy: return run_hierarchy(grid, seed);
    case Experiment::Sufficiency: return run_sufficiency(grid, seed);
  }
  throw Error(ErrorCode::InvalidSpec, "unknown experiment");
}

void write_result(const ExperimentResult& result, const std::filesystem::path& dir) {
  const std::string name(to_string(result.experiment));
  write_file_atomic(dir / (name + ".csv"), result.table.to_csv());
  for (const auto& [suffix, table] : result.extras) {
    write_file_atomic(dir / (name + "_" + suffix + ".csv"), table.to_csv());
  }
  write_file_atomic(dir / (name + ".json"), result.summary().dump(2) + "\n");
}

}  // namespace usim
