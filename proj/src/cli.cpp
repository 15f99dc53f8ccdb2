#include "scbf/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "scbf/errors.hpp"
#include "scbf/experiment_config.hpp"

namespace scbf {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string summary_line(const std::string& algorithm, const std::vector<CurvePoint>& curve,
                         double total_seconds) {
  std::ostringstream s;
  s << "algorithm=" << algorithm << " rounds=" << curve.size();
  if (curve.empty()) {
    s << " final_auc_roc=NA final_auc_pr=NA best_auc_roc=NA best_auc_pr=NA saturation_round=NA";
  } else {
    double best_roc = 0.0;
    double best_pr = 0.0;
    for (const auto& p : curve) {
      best_roc = std::max(best_roc, p.auc_roc);
      best_pr = std::max(best_pr, p.auc_pr);
    }
    s << " final_auc_roc=" << fixed(curve.back().auc_roc, 6)
      << " final_auc_pr=" << fixed(curve.back().auc_pr, 6) << " best_auc_roc=" << fixed(best_roc, 6)
      << " best_auc_pr=" << fixed(best_pr, 6)
      << " saturation_round=" << *saturation_round(curve);
  }
  s << " total_seconds=" << fixed(total_seconds, 3);
  return s.str();
}

}  // namespace

std::vector<CurvePoint> to_curve(const std::vector<RoundReport>& reports) {
  std::vector<CurvePoint> curve;
  curve.reserve(reports.size());
  for (const auto& r : reports) {
    curve.push_back({r.round_index, r.auc_roc, r.auc_pr, r.mean_upload_fraction(), r.neurons_left,
                     r.wall_seconds});
  }
  return curve;
}

void write_curves_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write curves file: " + path.string());
  out << kCurvesHeader << '\n';
  for (const auto& p : curve) {
    out << p.round << ',' << fixed(p.auc_roc, 10) << ',' << fixed(p.auc_pr, 10) << ','
        << fixed(p.upload_fraction_mean, 10) << ',' << p.neurons_left << ','
        << fixed(p.wall_seconds, 6) << '\n';
  }
  if (!out) throw ConfigError("failed writing curves file: " + path.string());
}

std::vector<CurvePoint> read_curves_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open curves file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCurvesHeader) {
    throw ParseError(path.string() + ": missing or unexpected curves header");
  }
  std::vector<CurvePoint> curve;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    CurvePoint p;
    char c1, c2, c3, c4, c5;
    if (!(row >> p.round >> c1 >> p.auc_roc >> c2 >> p.auc_pr >> c3 >> p.upload_fraction_mean >>
          c4 >> p.neurons_left >> c5 >> p.wall_seconds) ||
        c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',' || c5 != ',') {
      throw ParseError(path.string() + ": malformed row at line " + std::to_string(line_no));
    }
    curve.push_back(p);
  }
  return curve;
}

std::optional<std::size_t> saturation_round(const std::vector<CurvePoint>& curve,
                                            double tolerance) {
  if (curve.empty()) return std::nullopt;
  double best = curve.front().auc_roc;
  for (const auto& p : curve) best = std::max(best, p.auc_roc);
  for (const auto& p : curve) {
    if (p.auc_roc >= best - tolerance) return p.round;
  }
  return std::nullopt;
}

int cmd_gen_data(const GenDataOptions& options, std::ostream& err) {
  if (options.samples == 0 || options.features == 0) {
    err << "gen-data: --samples and --features must be positive\n";
    return 2;
  }
  if (options.out_path.empty()) {
    err << "gen-data: --out is required\n";
    return 2;
  }
  try {
    const Dataset data =
        generate_synthetic(options.samples, options.features, options.sparsity, options.seed);
    write_csv(data, options.out_path);
    err << "rows=" << data.num_rows() << " columns=" << data.num_features()
        << " positive_rate=" << fixed(data.positive_rate(), 4) << '\n';
  } catch (const std::exception& e) {
    err << "gen-data: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cmd_run(const RunOptions& options, std::ostream& err) {
  try {
    ExperimentConfig config =
        options.config_path ? load_config(*options.config_path) : ExperimentConfig{};
    if (options.algorithm) set_config_value(config, "algorithm", *options.algorithm);
    if (options.seed) config.federation.seed = *options.seed;
    if (options.out_dir) config.out_dir = options.out_dir->string();
    if (options.global_loops) config.federation.global_loops = *options.global_loops;
    if (options.transport) set_config_value(config, "transport", *options.transport);
    if (options.data_path) config.data_path = options.data_path->string();
    if (options.parallel) config.federation.parallel_clients = true;
    config.validate();

    const PartitionedDataset data = prepare_data(config);
    const FederationConfig federation = config.resolved_federation();
    const ExperimentResult result = run_experiment(federation, data);

    std::filesystem::create_directories(config.out_dir);
    const std::string algo = to_string(federation.algorithm);
    const auto curve = to_curve(result.reports);
    const auto curves_path = std::filesystem::path(config.out_dir) / ("curves_" + algo + ".csv");
    write_curves_csv(curve, curves_path);
    const std::string summary = summary_line(algo, curve, result.total_seconds);
    const auto summary_path = std::filesystem::path(config.out_dir) / ("summary_" + algo + ".txt");
    std::ofstream(summary_path) << summary << '\n';
    err << summary << '\n' << "curves: " << curves_path.string() << '\n';
  } catch (const std::exception& e) {
    err << "run: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cmd_compare(const CompareOptions& options, std::ostream& out, std::ostream& err) {
  if (options.curves.size() < 2) {
    err << "compare: need at least two curve files\n";
    return 2;
  }
  try {
    std::vector<std::vector<CurvePoint>> curves;
    for (const auto& path : options.curves) curves.push_back(read_curves_csv(path));
    const auto rounds_of = [](const std::vector<CurvePoint>& c) {
      std::vector<std::size_t> r;
      for (const auto& p : c) r.push_back(p.round);
      return r;
    };
    const auto reference_rounds = rounds_of(curves.front());
    for (std::size_t i = 1; i < curves.size(); ++i) {
      if (rounds_of(curves[i]) != reference_rounds) {
        throw ConfigError("round ranges differ between " + options.curves.front().string() +
                          " and " + options.curves[i].string());
      }
    }

    std::ofstream file;
    if (options.out_path) {
      file.open(*options.out_path, std::ios::binary);
      if (!file) throw ConfigError("cannot write " + options.out_path->string());
    }
    std::ostream& table = options.out_path ? file : out;

    table << "round";
    for (std::size_t i = 0; i < curves.size(); ++i) table << ",auc_roc_" << i;
    for (std::size_t i = 1; i < curves.size(); ++i) table << ",gap_0_minus_" << i;
    table << '\n';
    for (std::size_t r = 0; r < reference_rounds.size(); ++r) {
      table << reference_rounds[r];
      for (const auto& c : curves) table << ',' << fixed(c[r].auc_roc, 10);
      for (std::size_t i = 1; i < curves.size(); ++i) {
        table << ',' << fixed(curves[0][r].auc_roc - curves[i][r].auc_roc, 10);
      }
      table << '\n';
    }
    table << "# saturation_round";
    for (const auto& c : curves) {
      const auto s = saturation_round(c);
      table << ',' << (s ? std::to_string(*s) : std::string("NA"));
    }
    table << '\n';
  } catch (const std::exception& e) {
    err << "compare: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Channel-based federated learning simulator"};
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic binary-feature CSV dataset");
  gen_cmd->add_option("--samples", gen.samples, "Number of rows")->capture_default_str();
  gen_cmd->add_option("--features", gen.features, "Number of feature columns")->capture_default_str();
  gen_cmd->add_option("--sparsity", gen.sparsity, "Probability a feature is 1")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out_path, "Output CSV path")->required();

  RunOptions run;
  std::string config_path, algorithm, transport, out_dir, data_path;
  std::uint64_t seed = 0;
  std::size_t loops = 0;
  auto* run_cmd = app.add_subcommand("run", "Run a federated experiment and write curves");
  auto* config_opt = run_cmd->add_option("--config", config_path, "key = value config file");
  auto* algo_opt = run_cmd->add_option("--algo", algorithm, "scbf | scbfwp | fedavg | fedavgwp");
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Override the model seed");
  auto* out_opt = run_cmd->add_option("--out-dir", out_dir, "Directory for outputs");
  auto* loops_opt = run_cmd->add_option("--global-loops", loops, "Override the number of loops");
  auto* transport_opt = run_cmd->add_option("--transport", transport, "inprocess | codec | loopback");
  auto* data_opt = run_cmd->add_option("--data", data_path, "CSV dataset path");
  run_cmd->add_flag("--parallel", run.parallel, "Train clients on separate threads");

  CompareOptions compare;
  std::string compare_out;
  auto* compare_cmd = app.add_subcommand("compare", "Tabulate AUCROC gaps between curve files");
  compare_cmd->add_option("curves", compare.curves, "Curve CSV files")->required();
  auto* compare_out_opt = compare_cmd->add_option("--out", compare_out, "Write the table here");

  std::vector<const char*> argv{"scbf_cli"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  if (*gen_cmd) return cmd_gen_data(gen, err);
  if (*run_cmd) {
    if (*config_opt) run.config_path = config_path;
    if (*algo_opt) run.algorithm = algorithm;
    if (*seed_opt) run.seed = seed;
    if (*out_opt) run.out_dir = out_dir;
    if (*loops_opt) run.global_loops = loops;
    if (*transport_opt) run.transport = transport;
    if (*data_opt) run.data_path = data_path;
    return cmd_run(run, err);
  }
  if (*compare_out_opt) compare.out_path = compare_out;
  return cmd_compare(compare, out, err);
}

}  // namespace scbf
