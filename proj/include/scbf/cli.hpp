#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "scbf/federation.hpp"

namespace scbf {

// One row of a curves CSV:
//   round,auc_roc,auc_pr,upload_fraction_mean,neurons_left,wall_seconds
struct CurvePoint {
  std::size_t round = 0;
  double auc_roc = 0.0;
  double auc_pr = 0.0;
  double upload_fraction_mean = 0.0;
  std::size_t neurons_left = 0;
  double wall_seconds = 0.0;
};

inline constexpr const char* kCurvesHeader =
    "round,auc_roc,auc_pr,upload_fraction_mean,neurons_left,wall_seconds";

// Band below the maximum AUCROC that counts as saturated.
inline constexpr double kSaturationTolerance = 0.002;

std::vector<CurvePoint> to_curve(const std::vector<RoundReport>& reports);
void write_curves_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path);
std::vector<CurvePoint> read_curves_csv(const std::filesystem::path& path);

// First round whose AUCROC is within `tolerance` of the curve's maximum.
std::optional<std::size_t> saturation_round(const std::vector<CurvePoint>& curve,
                                            double tolerance = kSaturationTolerance);

struct GenDataOptions {
  std::size_t samples = 5000;
  std::size_t features = 100;
  double sparsity = 0.2;
  std::uint64_t seed = 42;
  std::filesystem::path out_path;
};

struct RunOptions {
  std::optional<std::filesystem::path> config_path;
  std::optional<std::string> algorithm;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::size_t> global_loops;
  std::optional<std::string> transport;
  std::optional<std::filesystem::path> data_path;
  bool parallel = false;
};

struct CompareOptions {
  std::vector<std::filesystem::path> curves;
  std::optional<std::filesystem::path> out_path;
};

int cmd_gen_data(const GenDataOptions& options, std::ostream& err);
int cmd_run(const RunOptions& options, std::ostream& err);
int cmd_compare(const CompareOptions& options, std::ostream& out, std::ostream& err);

// Full command line: `gen-data`, `run` or `compare` followed by flags.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scbf
