// Runs the nine acceptance criteria at their stated tolerances and prints one
// PASS/FAIL line per criterion. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "generators.hpp"
#include "oracles.hpp"
#include "usim/alignment.hpp"
#include "usim/functional.hpp"
#include "usim/harness.hpp"
#include "usim/io.hpp"
#include "usim/linalg.hpp"
#include "usim/metrics.hpp"
#include "usim/synthetic.hpp"

using namespace usim;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::uint64_t kSeed = 7;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool report(int id, const std::string& name, Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " " << name << ":" << o.detail.str()
            << std::endl;
  return o.pass;
}

std::size_t error_rows(const Table& t) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::holds_alternative<std::monostate>(t.at(i, "error"))) ++n;
  }
  return n;
}

// ---------------------------------------------------------------------------

Outcome monotonicity() {
  Outcome o;
  const Grid grid = default_grid(Experiment::Monotonicity);
  const auto t0 = Clock::now();
  const auto r = run_monotonicity(grid, kSeed);
  const double secs = seconds_since(t0);
  o.detail << " pairs=" << r.pairs << " checks=" << r.checks << " violations=" << r.violations
           << " seconds=" << secs;
  o.require(r.pairs >= 300, "at least 300 pairs");
  o.require(r.violations == 0, "zero violations");
  o.require(error_rows(r.table) == 0, "no failed pairs");
  o.require(r.table.size() == static_cast<std::size_t>(r.pairs) * 3, "three families per pair");
  o.require(secs < 60.0, "under 60 s");
  return o;
}

Outcome metric_invariance() {
  Outcome o;
  gen::Source g(kSeed);
  double worst_cka = 0.0, worst_rsa = 0.0, worst_svcca = 0.0, worst_scale = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Index n = 60, d = 5;
    const Matrix a = g.anisotropic(n, d);
    const Matrix q = g.orthogonal(d);
    const Matrix b = (a * q).rowwise() + g.shift(d);
    const auto ra = gen::rep(a), rb = gen::rep(b);
    worst_cka = std::max(worst_cka, std::abs(linear_cka(ra, rb) - 1.0));
    worst_rsa = std::max(worst_rsa, std::abs(rsa(ra, rb) - 1.0));
    worst_svcca = std::max(worst_svcca, std::abs(svcca(ra, rb) - 1.0));

    const Matrix other = g.gaussian(n, 3);
    const double base = linear_cka(ra, gen::rep(other));
    const double c = g.uniform(0.01, 100.0);
    worst_scale = std::max(worst_scale, std::abs(linear_cka(gen::rep((c * a).eval()), gen::rep(other)) - base));
    worst_scale = std::max(worst_scale, std::abs(linear_cka(ra, gen::rep((c * other).eval())) - base));
  }
  o.detail << " max|cka-1|=" << worst_cka << " max|rsa-1|=" << worst_rsa << " max|svcca-1|=" << worst_svcca
           << " max cka scale drift=" << worst_scale;
  o.require(worst_cka <= 1e-5, "CKA within 1e-5");
  o.require(worst_rsa <= 1e-5, "RSA within 1e-5");
  o.require(worst_svcca <= 1e-5, "SVCCA within 1e-5");
  o.require(worst_scale <= 1e-9, "CKA scale invariance within 1e-9");
  return o;
}

// Small fixtures: a few hand-written matrices and a seeded batch of random ones.
std::vector<Matrix> fixtures() {
  std::vector<Matrix> out;
  Matrix a(4, 2), b(4, 2), c(5, 3), d(7, 1), e(6, 2);
  a << 1, 0, 0, 1, 1, 1, 0, 0;
  b << 2, 1, 1, 3, 0, 1, 1, 0;
  c << 1, 2, 0, 0, 1, 3, 2, 2, 1, -1, 0, 4, 3, 1, 1;
  d << 0, 1, 4, 9, 16, 25, 36;
  e << 0.5, -1, 2, 0, -1.5, 3, 4, 1, 0, 0, 1, 1;
  out = {a, b, c, d, e};
  gen::Source g(kSeed + 3);
  for (int t = 0; t < 60; ++t) out.push_back(g.gaussian(g.integer(4, 7), g.integer(1, 3)));
  return out;
}

Outcome oracle_equivalence() {
  Outcome o;
  const auto fx = fixtures();
  double cka_err = 0.0, sp_err = 0.0, cca_err = 0.0;
  int pairs = 0, procrustes_cases = 0, procrustes_losses = 0;
  gen::Source g(kSeed + 4);
  for (std::size_t i = 0; i < fx.size(); ++i) {
    for (std::size_t j = 0; j < fx.size(); ++j) {
      const Matrix& x = fx[i];
      const Matrix& y = fx[j];
      if (x.rows() != y.rows()) continue;
      ++pairs;
      cka_err = std::max(cka_err, std::abs(linear_cka(gen::rep(x), gen::rep(y)) - oracle::cka_hsic(x, y)));

      const auto dx = pairwise_distances(x);
      const auto dy = pairwise_distances(y);
      sp_err = std::max(sp_err, std::abs(spearman(dx, dy) - oracle::spearman_counting(dx, dy)));
      std::vector<double> cx(x.col(0).data(), x.col(0).data() + x.rows());
      std::vector<double> cy(y.col(0).data(), y.col(0).data() + y.rows());
      sp_err = std::max(sp_err, std::abs(spearman(cx, cy) - oracle::spearman_counting(cx, cy)));

      if (x.rows() > x.cols() + y.cols()) {
        const MetricConfig cfg;
        const auto rho = oracle::cca_generalized(x, y, cfg.cca_ridge);
        double mean = 0.0;
        for (double r : rho) mean += r;
        mean /= static_cast<double>(rho.size());
        cca_err = std::max(cca_err, std::abs(mean_cca(gen::rep(x), gen::rep(y), cfg) - mean));
      }

      if (x.cols() == y.cols()) {
        ++procrustes_cases;
        const LinearMap m = fit_orthogonal(gen::rep(x), gen::rep(y));
        const double best = reconstruction_mse(m, gen::rep(x), gen::rep(y));
        for (int k = 0; k < 200; ++k) {
          const Matrix q = oracle::gram_schmidt_orthogonal(static_cast<int>(x.cols()), g.rng());
          const Vector bias = (y.colwise().mean() - x.colwise().mean() * q).transpose();
          const double cand = reconstruction_mse(
              LinearMap(q, bias, 1.0, PredictiveFamily::of(FamilyKind::Orthogonal)), gen::rep(x), gen::rep(y));
          if (cand < best - 1e-12) {
            ++procrustes_losses;
            break;
          }
        }
      }
    }
  }
  o.detail << " fixtures=" << fx.size() << " pairs=" << pairs << " max cka err=" << cka_err
           << " max spearman err=" << sp_err << " max mean_cca err=" << cca_err
           << " procrustes cases=" << procrustes_cases << " beaten=" << procrustes_losses;
  o.require(cka_err <= 1e-10, "CKA oracle");
  o.require(sp_err <= 1e-10, "Spearman oracle");
  o.require(cca_err <= 1e-10, "mean CCA oracle");
  o.require(procrustes_losses == 0, "Procrustes optimal against 200 candidates");
  return o;
}

Outcome stitching_identity() {
  Outcome o;
  const auto t0 = Clock::now();
  double min_ratio = INFINITY, max_info = 0.0;
  int runs = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ScenarioSpec s;
    s.kind = ScenarioKind::OrthoTwin;
    s.seed = seed;
    const auto p = generate(s);
    Rng rng(mix_seed(seed, 99));
    const Matrix q = random_orthogonal(p.z1.features(), rng);
    const RepresentationSet scrambled = p.z1.with_data(p.z1.data() * q.transpose()).with_name("scrambled");
    const std::pair<const RepresentationSet*, const RepresentationSet*> cases[] = {
        {&p.z1, &p.z1}, {&scrambled, &p.z1}};
    for (const auto& [src, dst] : cases) {
      for (auto k : {FamilyKind::Orthogonal, FamilyKind::OrthogonalScale, FamilyKind::InvertibleAffine,
                     FamilyKind::Affine}) {
        const auto fam = PredictiveFamily::of(k);
        const auto hc = TrainConfig::head_defaults(seed);
        const auto sc = TrainConfig::stitcher_defaults(seed);
        for (const auto& res : {stitch(*src, *dst, fam, hc, sc), stitch(*dst, *src, fam, hc, sc)}) {
          min_ratio = std::min(min_ratio, directed_func_similarity(res));
          max_info = std::max(max_info, std::abs(res.usable_cond_info()));
          ++runs;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  o.detail << " stitches=" << runs << " min ratio=" << min_ratio << " max|usable_cond_info|=" << max_info
           << " seconds=" << secs;
  o.require(min_ratio >= 0.98, "directed func similarity >= 0.98");
  o.require(max_info <= 1e-2, "|usable_cond_info| <= 1e-2");
  o.require(secs < 120.0, "under 2 min");
  return o;
}

Outcome asymmetry() {
  Outcome o;
  Grid grid = default_grid(Experiment::Asymmetry);
  std::vector<ScenarioSpec> keep;
  for (const auto& s : grid.scenarios) {
    if (s.kind == ScenarioKind::Projection) keep.push_back(s);
  }
  grid.scenarios = keep;
  const auto r = run_asymmetry(grid, kSeed);
  const auto diff = r.table.numeric_column("diff");
  const auto sign = r.table.numeric_column("oracle_sign");
  double mean = 0.0;
  std::size_t agree = 0, rows = 0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    if (!diff[i] || !sign[i]) continue;
    ++rows;
    mean += *diff[i];
    const double s = *diff[i] > 0 ? 1.0 : (*diff[i] < 0 ? -1.0 : 0.0);
    if (s == *sign[i]) ++agree;
  }
  mean /= rows > 0 ? static_cast<double>(rows) : 1.0;
  bool half = true;
  for (const auto& s : grid.scenarios) half = half && (2 * s.keep == s.d);
  o.detail << " rows=" << rows << " mean(forward-backward)=" << mean << " sign agreement=" << agree << "/"
           << rows;
  o.require(half, "keep = d/2");
  o.require(rows > 0 && rows == r.table.size(), "every row scored");
  o.require(mean >= 0.1, "mean gap >= 0.1");
  o.require(agree == rows, "sign matches the oracle on every pair");
  return o;
}

Outcome hierarchy() {
  Outcome o;
  const Grid grid = default_grid(Experiment::Hierarchy);
  const auto r = run_hierarchy(grid, kSeed);
  const double rate = 1.0 - r.violation_rate();
  bool shape = grid.families.size() == 3;
  for (const auto& s : grid.scenarios) shape = shape && s.classes == 20 && s.fine_per_coarse == 5;

  Grid identity = grid;
  identity.scenarios = {grid.scenarios.front()};
  identity.scenarios.front().fine_per_coarse = 1;
  identity.noise_levels = {0.0};
  identity.replicates = 1;
  const auto id = run_hierarchy(identity, kSeed);
  const auto fine = id.table.numeric_column("fine_symmetric");
  const auto coarse = id.table.numeric_column("coarse_symmetric");
  bool exact = !fine.empty();
  for (std::size_t i = 0; i < fine.size(); ++i) exact = exact && fine[i] && coarse[i] && *fine[i] == *coarse[i];

  o.detail << " pairs=" << r.pairs << " rows=" << r.checks << " dominance rate=" << rate
           << " strict rate=" << r.metrics["strict_rate"].dump() << " identity rows exact=" << (exact ? "yes" : "no");
  o.require(shape, "C=20, fine_per_coarse=5, 3 families");
  o.require(error_rows(r.table) == 0, "no failed pairs");
  o.require(rate >= 0.95, "coarse >= fine - 0.03 for >= 95%");
  o.require(exact, "identity coarsening exact");
  return o;
}

Outcome sufficiency() {
  Outcome o;
  const auto r = run_sufficiency(default_grid(Experiment::Sufficiency), kSeed);
  const auto& top = r.metrics["top_bin"]["all"];
  const auto& nuis = r.metrics["nuisance"]["all"];
  const bool top_ok = top["count"].get<std::int64_t>() > 0 && !top["probability"].is_null() &&
                      top["probability"].get<double>() >= 0.95;
  const bool nuis_ok = nuis["count"].get<std::int64_t>() > 0 && !nuis["fraction"].is_null() &&
                       nuis["fraction"].get<double>() >= 0.8;
  o.detail << " top bin count=" << top["count"].dump() << " P(func>0.95)=" << top["probability"].dump()
           << " nuisance rows=" << nuis["count"].dump() << " high-func/low-rep fraction=" << nuis["fraction"].dump();
  o.require(error_rows(r.table) == 0, "no failed pairs");
  o.require(top_ok, "top bin probability >= 0.95");
  o.require(nuis_ok, "NuisanceAugment fraction >= 0.8");
  return o;
}

Outcome metric_alignment() {
  Outcome o;
  const auto r = run_metric_alignment(default_grid(Experiment::Alignment), kSeed);
  const auto& c = r.metrics["correlations"]["ortho-scale"];
  auto rho = [&](const char* m) {
    return c[m]["spearman"].is_null() ? -INFINITY : c[m]["spearman"].get<double>();
  };
  o.detail << " rows=" << c["cka"]["n"].dump() << " spearman cka=" << rho("cka") << " rsa=" << rho("rsa")
           << " svcca=" << rho("svcca") << " cca=" << rho("cca");
  o.require(error_rows(r.table) == 0, "no failed pairs");
  o.require(rho("cka") >= 0.8, "CKA Spearman >= 0.8");
  o.require(rho("rsa") >= 0.75, "RSA Spearman >= 0.75");
  return o;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = read_file(e.path());
  return files;
}

Outcome determinism_and_round_trip() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "usim_acceptance";
  fs::remove_all(root);
  int identical = 0, total = 0;
  for (const char* name : {"asymmetry", "monotonicity", "alignment", "hierarchy", "sufficiency"}) {
    std::map<std::string, std::string> runs[2];
    std::string lines[2];
    for (int k = 0; k < 2; ++k) {
      const fs::path dir = root / (std::string(name) + "_" + std::to_string(k));
      std::ostringstream out, err;
      const int code = cli::run({"experiment", name, "--seed", std::to_string(kSeed), "--out-dir", dir.string()},
                                out, err);
      o.require(code == 0, std::string(name) + " exit code");
      runs[k] = snapshot(dir);
      lines[k] = out.str();
    }
    ++total;
    if (runs[0] == runs[1] && !runs[0].empty() && lines[0] == lines[1]) {
      ++identical;
    } else {
      o.require(false, std::string(name) + " rerun differs");
    }
  }

  gen::Source g(kSeed + 9);
  bool raw_exact = true, raw_bytes = true;
  double csv_rel = 0.0;
  for (int t = 0; t < 40; ++t) {
    const Index n = g.integer(2, 50), d = g.integer(1, 8);
    const Matrix m = g.gaussian(n, d, std::pow(10.0, g.uniform(-12, 12)));
    const RepresentationSet r(m);
    const fs::path bin = root / "rt.bin", csv = root / "rt.csv";
    save_matrix(r, bin, MatrixFormat::RawF64);
    const auto back = load_matrix(MatrixFile::at(bin));
    raw_exact = raw_exact && std::memcmp(back.data().data(), m.data(), sizeof(double) * m.size()) == 0;
    const std::string bytes = read_file(bin);
    save_matrix(back, bin, MatrixFormat::RawF64);
    raw_bytes = raw_bytes && read_file(bin) == bytes;
    save_matrix(r, csv, MatrixFormat::Csv);
    const Matrix c = load_matrix(MatrixFile::at(csv)).data();
    for (Index i = 0; i < m.size(); ++i) {
      csv_rel = std::max(csv_rel, std::abs(c.data()[i] - m.data()[i]) / std::abs(m.data()[i]));
    }
  }
  fs::remove_all(root);
  o.detail << " experiments byte-identical=" << identical << "/" << total << " raw bit-exact="
           << (raw_exact && raw_bytes ? "yes" : "no") << " max csv rel err=" << csv_rel;
  o.require(raw_exact && raw_bytes, "RawF64 bit-exact");
  o.require(csv_rel <= 1e-15, "CSV within 1e-15");
  return o;
}

}  // namespace

int main() {
  setenv("USIM_THREADS", "1", 1);
  bool all = true;
  struct Item {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const Item items[] = {
      {1, "monotonicity on the default grid", monotonicity},
      {2, "metric invariance suite", metric_invariance},
      {3, "oracle equivalence on small fixtures", oracle_equivalence},
      {4, "stitching identity", stitching_identity},
      {5, "projection asymmetry", asymmetry},
      {6, "hierarchy dominance", hierarchy},
      {7, "sufficiency curve", sufficiency},
      {8, "metric alignment", metric_alignment},
      {9, "determinism and round-trip", determinism_and_round_trip},
  };
  for (const auto& item : items) {
    Outcome o;
    try {
      o = item.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " exception: " << e.what();
    }
    all = report(item.id, item.name, o) && all;
  }
  return all ? 0 : 1;
}
