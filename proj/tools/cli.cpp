#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "usim/alignment.hpp"
#include "usim/functional.hpp"
#include "usim/harness.hpp"
#include "usim/io.hpp"
#include "usim/metrics.hpp"
#include "usim/synthetic.hpp"

namespace usim::cli {

namespace fs = std::filesystem;

namespace {

const char* kExperimentUsage =
    "usage: usim experiment <asymmetry|monotonicity|alignment|hierarchy|sufficiency> "
    "[--grid FILE] [--seed N] [--out-dir DIR]";

MatrixFormat resolve_format(const std::string& flag, const fs::path& path) {
  if (flag == "csv") return MatrixFormat::Csv;
  if (flag == "raw") return MatrixFormat::RawF64;
  if (flag == "auto") return format_for_path(path);
  throw Error(ErrorCode::InvalidSpec, "unknown format '" + flag + "' (csv, raw, auto)");
}

// A CSV header column literally named "label" is picked up without a flag.
std::optional<std::string> detect_label_column(const fs::path& path) {
  std::ifstream in(path);
  std::string header;
  if (!in || !std::getline(in, header)) return std::nullopt;
  std::stringstream ss(header);
  std::string cellv;
  while (std::getline(ss, cellv, ',')) {
    cellv.erase(std::remove_if(cellv.begin(), cellv.end(),
                               [](char c) { return c == ' ' || c == '\r' || c == '"'; }),
                cellv.end());
    if (cellv == "label") return cellv;
  }
  return std::nullopt;
}

RepresentationSet load(const std::string& path, const std::string& format,
                       const std::string& label_col) {
  MatrixFile f = MatrixFile::at(path);
  f.format = resolve_format(format, path);
  if (f.format == MatrixFormat::Csv) {
    if (!label_col.empty()) {
      f.label_column = label_col;
    } else {
      f.label_column = detect_label_column(path);
    }
  }
  return load_matrix(f);
}

struct CompareArgs {
  std::string a;
  std::string b;
  std::string family = "affine";
  std::vector<std::string> metrics{"cka", "rsa", "svcca", "cca"};
  bool functional = false;
  std::uint64_t seed = 0;
  std::string out;
  std::string label_col;
  std::string format = "auto";
};

int compare(const CompareArgs& args, std::ostream& out) {
  const auto kind = parse_family(args.family);
  if (!kind) throw Error(ErrorCode::InvalidSpec, "unknown family '" + args.family + "'");
  const PredictiveFamily family = PredictiveFamily::of(*kind);

  const RepresentationSet a = load(args.a, args.format, args.label_col);
  const RepresentationSet b = load(args.b, args.format, args.label_col);
  if (args.functional && (!a.has_labels() || !b.has_labels())) {
    throw Error(ErrorCode::MissingLabels, "--functional needs labels on both inputs");
  }

  const RepSimilarity rep = rep_similarity(a, b, family, GradientConfig{.seed = args.seed});
  SimilarityReport report({a.name(), b.name()}, family, rep.forward, rep.backward);

  for (const auto& m : args.metrics) {
    if (m == "cka") {
      report.set_baseline(m, linear_cka(a, b));
    } else if (m == "rsa") {
      report.set_baseline(m, rsa(a, b));
    } else if (m == "svcca") {
      report.set_baseline(m, svcca(a, b));
    } else if (m == "cca") {
      report.set_baseline(m, mean_cca(a, b));
    } else if (m != "none") {
      throw Error(ErrorCode::InvalidSpec, "unknown metric '" + m + "'");
    }
  }

  if (args.functional) {
    const auto head_cfg = TrainConfig::head_defaults(args.seed);
    const auto stitch_cfg = TrainConfig::stitcher_defaults(args.seed);
    const StitchResult fwd = stitch(a, b, family, head_cfg, stitch_cfg);
    const StitchResult bwd = stitch(b, a, family, head_cfg, stitch_cfg);
    report.set_functional({directed_func_similarity(fwd), directed_func_similarity(bwd)},
                          {fwd.usable_cond_info(), bwd.usable_cond_info()});
  }

  nlohmann::json j = report_to_json(report);
  j["seed"] = args.seed;
  const std::string text = j.dump(2) + "\n";
  if (args.out.empty()) {
    out << text;
  } else {
    write_file_atomic(args.out, text);
  }
  return kOk;
}

struct ExperimentArgs {
  std::string name;
  std::string grid;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

int experiment(const ExperimentArgs& args, std::ostream& out, std::ostream& err) {
  const auto e = parse_experiment(args.name);
  if (!e) {
    err << code_name(ErrorCode::InvalidSpec) << ": unknown experiment '" << args.name << "'\n"
        << kExperimentUsage << "\n";
    return kFailure;
  }
  Grid grid = default_grid(*e);
  if (!args.grid.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(args.grid));
    } catch (const nlohmann::json::parse_error& pe) {
      throw ParseError(args.grid + ": " + pe.what(), static_cast<long long>(pe.byte));
    }
    grid = Grid::from_json(j, grid);
  }
  const ExperimentResult result = run_experiment(*e, grid, args.seed);
  write_result(result, args.out_dir);
  out << result.summary_line() << "\n";
  return kOk;
}

struct GenerateArgs {
  std::string scenario = "OrthoTwin";
  ScenarioSpec spec;
  std::string out_dir = ".";
  std::string format = "csv";
};

int generate_files(GenerateArgs args, std::ostream& out) {
  const auto kind = parse_scenario(args.scenario);
  if (!kind) throw Error(ErrorCode::InvalidSpec, "unknown scenario '" + args.scenario + "'");
  args.spec.kind = *kind;
  const ScenarioPair pair = generate(args.spec);
  const MatrixFormat fmt = resolve_format(args.format, "x.csv");
  const std::string ext = fmt == MatrixFormat::Csv ? ".csv" : ".bin";
  const fs::path dir(args.out_dir);
  save_matrix(pair.z1, dir / ("z1" + ext), fmt);
  save_matrix(pair.z2, dir / ("z2" + ext), fmt);
  out << (dir / ("z1" + ext)).string() << "\n" << (dir / ("z2" + ext)).string() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Representational and functional similarity of learned representations", "usim"};
  app.require_subcommand(1);

  CompareArgs cmp;
  auto* compare_cmd = app.add_subcommand("compare", "Score a pair of representation files");
  compare_cmd->add_option("a", cmp.a, "First matrix file")->required();
  compare_cmd->add_option("b", cmp.b, "Second matrix file")->required();
  compare_cmd->add_option("--family", cmp.family, "ortho | ortho-scale | affine | invertible");
  compare_cmd->add_option("--metrics", cmp.metrics, "Comma-separated: cka,rsa,svcca,cca or none")
      ->delimiter(',');
  compare_cmd->add_flag("--functional", cmp.functional, "Also train stitchers (needs labels)");
  compare_cmd->add_option("--seed", cmp.seed, "Seed for splits and gradient fits");
  compare_cmd->add_option("--out", cmp.out, "Report path (stdout when omitted)");
  compare_cmd->add_option("--label-col", cmp.label_col, "CSV label column name or index");
  compare_cmd->add_option("--format", cmp.format, "csv | raw | auto");

  ExperimentArgs exp;
  auto* exp_cmd = app.add_subcommand("experiment", "Run one experiment over a scenario grid");
  exp_cmd->add_option("name", exp.name, "asymmetry | monotonicity | alignment | hierarchy | sufficiency")
      ->required();
  exp_cmd->add_option("--grid", exp.grid, "Grid JSON overriding the default grid");
  exp_cmd->add_option("--seed", exp.seed, "Master seed");
  exp_cmd->add_option("--out-dir", exp.out_dir, "Output directory");

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic representation pair");
  gen_cmd->add_option("--scenario", gen.scenario, "OrthoTwin, ScaleTwin, AffineTwin, Projection, ...");
  gen_cmd->add_option("--n", gen.spec.n);
  gen_cmd->add_option("--d", gen.spec.d);
  gen_cmd->add_option("--classes", gen.spec.classes);
  gen_cmd->add_option("--fine-per-coarse", gen.spec.fine_per_coarse);
  gen_cmd->add_option("--noise", gen.spec.noise_sigma);
  gen_cmd->add_option("--seed", gen.spec.seed);
  gen_cmd->add_option("--keep", gen.spec.keep);
  gen_cmd->add_option("--extra", gen.spec.extra);
  gen_cmd->add_option("--depth", gen.spec.depth);
  gen_cmd->add_option("--margin", gen.spec.margin);
  gen_cmd->add_option("--out-dir", gen.out_dir);
  gen_cmd->add_option("--format", gen.format, "csv | raw");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << code_name(ErrorCode::InvalidSpec) << ": " << e.what() << "\n";
    if (!args.empty() && args[0] == "experiment") {
      err << kExperimentUsage << "\n";
    } else {
      err << app.help();
    }
    return kFailure;
  }

  try {
    if (*compare_cmd) return compare(cmp, out);
    if (*exp_cmd) return experiment(exp, out, err);
    if (*gen_cmd) return generate_files(gen, out);
  } catch (const Error& e) {
    err << code_name(e.code()) << ": " << e.what() << "\n";
    return e.code() == ErrorCode::DegenerateInput ? kDegenerate : kFailure;
  } catch (const std::exception& e) {
    err << "E_INTERNAL: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace usim::cli
