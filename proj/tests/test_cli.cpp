#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "scbf/cli.hpp"
#include "scbf/errors.hpp"
#include "scbf/experiment_config.hpp"

using namespace scbf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("scbf_test_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  return run_cli(args, out, err);
}

void write_curve(const fs::path& path, const std::vector<double>& aucs) {
  std::vector<CurvePoint> c;
  for (std::size_t i = 0; i < aucs.size(); ++i) c.push_back({i, aucs[i], 0.5, 0.3, 96, 0.1});
  write_curves_csv(c, path);
}

fs::path small_config(const fs::path& dir, const std::string& algo) {
  const fs::path p = dir / (algo + ".cfg");
  std::ofstream(p) << "# small run\n"
                   << "algorithm = " << algo << "\n"
                   << "num_clients = 3\n"
                   << "global_loops = 12\n"
                   << "epochs_per_loop = 1\n"
                   << "synthetic_samples = 600\n"
                   << "synthetic_features = 20\n"
                   << "layer_sizes = 16,8,1\n"
                   << "out_dir = " << (dir / "out").string() << "\n";
  return p;
}

}  // namespace

TEST_CASE("gen-data") {
  TempDir dir("gen");
  const fs::path a = dir.path / "a.csv";
  const fs::path b = dir.path / "b.csv";
  REQUIRE(cli({"gen-data", "--samples", "10", "--features", "3", "--out", a.string()}) == 0);
  const auto lines = lines_of(slurp(a));
  REQUIRE(lines.size() == 11);
  CHECK(lines[0] == "f0,f1,f2,label");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    CHECK(std::count(lines[i].begin(), lines[i].end(), ',') == 3);
  }
  REQUIRE(cli({"gen-data", "--samples", "10", "--features", "3", "--out", b.string()}) == 0);
  CHECK(slurp(a) == slurp(b));

  CHECK(cli({"gen-data", "--samples", "0", "--out", (dir.path / "c.csv").string()}) != 0);
  CHECK_FALSE(fs::exists(dir.path / "c.csv"));
  CHECK(cli({"gen-data", "--samples", "10"}) != 0);
}

TEST_CASE("run writes curves and summaries") {
  TempDir dir("run");
  SUBCASE("zero loops gives a header-only curve") {
    REQUIRE(cli({"run", "--config", small_config(dir.path, "scbf").string(), "--global-loops",
                 "0"}) == 0);
    CHECK(slurp(dir.path / "out" / "curves_scbf.csv") == std::string(kCurvesHeader) + "\n");
    CHECK(slurp(dir.path / "out" / "summary_scbf.txt").find("NA") != std::string::npos);
  }
  SUBCASE("pruning shrinks the network then stops") {
    REQUIRE(cli({"run", "--config", small_config(dir.path, "scbfwp").string()}) == 0);
    const auto curve = read_curves_csv(dir.path / "out" / "curves_scbfwp.csv");
    REQUIRE(curve.size() == 12);
    std::size_t i = 1;
    CHECK(curve[0].neurons_left < 24);
    while (i < curve.size() && curve[i].neurons_left < curve[i - 1].neurons_left) ++i;
    CHECK(i > 1);
    for (; i < curve.size(); ++i) CHECK(curve[i].neurons_left == curve[i - 1].neurons_left);
    CHECK(24 - curve.back().neurons_left == static_cast<std::size_t>(0.47 * 24));
    for (std::size_t r = 0; r < curve.size(); ++r) CHECK(curve[r].round == r);
  }
  SUBCASE("flags override the config") {
    const fs::path cfg = small_config(dir.path, "scbf");
    const fs::path other = dir.path / "other";
    REQUIRE(cli({"run", "--config", cfg.string(), "--algo", "fedavg", "--global-loops", "2",
                 "--out-dir", other.string()}) == 0);
    CHECK(read_curves_csv(other / "curves_fedavg.csv").size() == 2);
  }
  SUBCASE("seed reruns match except wall time") {
    const fs::path cfg = small_config(dir.path, "scbf");
    REQUIRE(cli({"run", "--config", cfg.string(), "--global-loops", "3", "--out-dir",
                 (dir.path / "x").string()}) == 0);
    REQUIRE(cli({"run", "--config", cfg.string(), "--global-loops", "3", "--out-dir",
                 (dir.path / "y").string(), "--parallel"}) == 0);
    auto x = read_curves_csv(dir.path / "x" / "curves_scbf.csv");
    auto y = read_curves_csv(dir.path / "y" / "curves_scbf.csv");
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(x[i].auc_roc == y[i].auc_roc);
      CHECK(x[i].auc_pr == y[i].auc_pr);
      CHECK(x[i].upload_fraction_mean == y[i].upload_fraction_mean);
    }
  }
  SUBCASE("bad config fails") {
    const fs::path cfg = dir.path / "bad.cfg";
    std::ofstream(cfg) << "learning_rat = 0.1\n";
    CHECK(cli({"run", "--config", cfg.string()}) != 0);
    CHECK(cli({"run", "--algo", "sgd", "--global-loops", "0"}) != 0);
  }
}

TEST_CASE("compare") {
  TempDir dir("compare");
  const fs::path a = dir.path / "a.csv";
  const fs::path b = dir.path / "b.csv";
  const fs::path flat = dir.path / "flat.csv";
  const fs::path short_curve = dir.path / "short.csv";
  write_curve(a, {0.6, 0.7, 0.8, 0.85});
  write_curve(b, {0.5, 0.6, 0.7, 0.75});
  write_curve(flat, {0.7, 0.7, 0.7, 0.7});
  write_curve(short_curve, {0.6, 0.7});

  SUBCASE("self comparison has zero gaps") {
    std::ostringstream out, err;
    REQUIRE(cmd_compare({{a, a}, std::nullopt}, out, err) == 0);
    const auto lines = lines_of(out.str());
    CHECK(lines[0] == "round,auc_roc_0,auc_roc_1,gap_0_minus_1");
    for (std::size_t i = 1; i <= 4; ++i) {
      CHECK(lines[i].substr(lines[i].rfind(',') + 1) == "0.0000000000");
    }
  }
  SUBCASE("dominating curve has positive gaps") {
    const fs::path table = dir.path / "table.csv";
    REQUIRE(cli({"compare", a.string(), b.string(), "--out", table.string()}) == 0);
    const auto lines = lines_of(slurp(table));
    for (std::size_t i = 1; i <= 4; ++i) {
      CHECK(std::stod(lines[i].substr(lines[i].rfind(',') + 1)) > 0.0);
    }
    CHECK(lines.back() == "# saturation_round,3,3");
  }
  SUBCASE("constant curve saturates at the first round") {
    CHECK(saturation_round(read_curves_csv(flat)) == std::optional<std::size_t>(0));
    CHECK_FALSE(saturation_round({}).has_value());
  }
  SUBCASE("mismatched rounds fail") {
    std::ostringstream out, err;
    CHECK(cmd_compare({{a, short_curve}, std::nullopt}, out, err) != 0);
    CHECK(err.str().find("round") != std::string::npos);
    CHECK(cmd_compare({{a}, std::nullopt}, out, err) != 0);
  }
}

TEST_CASE("curve CSV round trip") {
  TempDir dir("curves");
  const std::vector<CurvePoint> c{{0, 0.75, 0.5, 0.3, 96, 1.25}, {1, 0.8125, 0.625, 0.4, 90, 2.5}};
  write_curves_csv(c, dir.path / "c.csv");
  const auto back = read_curves_csv(dir.path / "c.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].auc_roc == 0.8125);
  CHECK(back[1].neurons_left == 90);
  CHECK(back[1].wall_seconds == 2.5);
  std::ofstream(dir.path / "bad.csv") << "round,auc\n0,0.5\n";
  CHECK_THROWS_AS(read_curves_csv(dir.path / "bad.csv"), ParseError);
}

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse_config(
      "# comment\n\nalgorithm = scbfwp\nnum_clients = 4\nupdate_rate=0.5\n"
      "layer_sizes = 8, 4, 1\ndropout_after_layer = 0\nselection = negative\n");
  CHECK(c.federation.algorithm == Algorithm::kScbfWithPruning);
  CHECK(c.federation.num_clients == 4);
  CHECK(c.split.num_clients == 4);
  CHECK(c.federation.selection.update_rate == 0.5);
  CHECK(c.federation.selection.mode == SelectionMode::kNegative);
  CHECK(c.federation.model.layer_sizes == std::vector<std::size_t>{8, 4, 1});
  CHECK_FALSE(c.federation.model.dropout_after_layer.has_value());
  CHECK(c.resolved_federation().prune.has_value());

  try {
    parse_config("num_clients = 2\nbogus = 1\nupdate_rate = x\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("line 2") != std::string::npos);
    CHECK(what.find("bogus") != std::string::npos);
    CHECK(what.find("update_rate") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("no equals sign\n"), ConfigError);

  ExperimentConfig bad;
  bad.federation.selection.update_rate = 0.0;
  bad.federation.decay = 2.0;
  try {
    bad.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("update_rate") != std::string::npos);
    CHECK(std::string(e.what()).find("decay") != std::string::npos);
  }
  for (const auto& key : config_keys()) {
    ExperimentConfig fresh;
    if (!key.default_value.empty()) CHECK_NOTHROW(set_config_value(fresh, key.name, key.default_value));
  }
}

TEST_CASE("installed binary") {
  const char* bin = std::getenv("SCBF_CLI");
  if (bin == nullptr) return;
  TempDir dir("binary");
  const fs::path out = dir.path / "d.csv";
  const std::string cmd = std::string(bin) + " gen-data --samples 5 --features 2 --seed 3 --out " +
                          out.string() + " 2>/dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(lines_of(slurp(out)).size() == 6);
  CHECK(std::system((std::string(bin) + " bogus >/dev/null 2>&1").c_str()) != 0);
}
