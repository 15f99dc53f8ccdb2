#include "scbf/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "scbf/errors.hpp"

namespace scbf {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.features = features.gather_rows(rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(labels.at(r));
  out.feature_names = feature_names;
  return out;
}

double Dataset::positive_rate() const {
  if (labels.empty()) return 0.0;
  const auto positives = std::count(labels.begin(), labels.end(), std::uint8_t{1});
  return static_cast<double>(positives) / static_cast<double>(labels.size());
}

void Dataset::validate() const {
  if (features.rows() != labels.size()) {
    throw ShapeError("dataset has " + std::to_string(features.rows()) + " feature rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (!feature_names.empty() && feature_names.size() != features.cols()) {
    throw ShapeError("dataset has " + std::to_string(features.cols()) + " columns but " +
                     std::to_string(feature_names.size()) + " feature names");
  }
  for (double v : features.data()) {
    if (v != 0.0 && v != 1.0) throw ParseError("dataset feature value is not binary");
  }
  for (auto y : labels) {
    if (y > 1) throw ParseError("dataset label is not binary");
  }
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_line(line);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw ConfigError(path.string() + ": label column '" + label_column + "' not found");
  }
  const std::size_t label_index = static_cast<std::size_t>(label_it - header.begin());

  Dataset data;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_index) data.feature_names.push_back(header[c]);
  }
  const std::size_t num_features = data.feature_names.size();

  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++row;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) {
      throw ParseError(path.string() + ": row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v;
      if (cells[c] == "0" || cells[c] == "0.0") {
        v = 0.0;
      } else if (cells[c] == "1" || cells[c] == "1.0") {
        v = 1.0;
      } else {
        throw ParseError(path.string() + ": row " + std::to_string(row) + ", column '" +
                         header[c] + "': value '" + cells[c] + "' is not 0 or 1");
      }
      if (c == label_index) {
        data.labels.push_back(static_cast<std::uint8_t>(v));
      } else {
        values.push_back(v);
      }
    }
  }
  data.features = DenseMatrix(row, num_features, std::move(values));
  return data;
}

void write_csv(const Dataset& data, const std::filesystem::path& path,
               const std::string& label_column) {
  data.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write CSV file: " + path.string());
  for (std::size_t c = 0; c < data.num_features(); ++c) {
    out << (data.feature_names.empty() ? "f" + std::to_string(c) : data.feature_names[c]) << ',';
  }
  out << label_column << '\n';
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    for (double v : data.features.row(r)) out << (v != 0.0 ? '1' : '0') << ',';
    out << static_cast<int>(data.labels[r]) << '\n';
  }
  if (!out) throw ConfigError("failed writing CSV file: " + path.string());
}

SyntheticData generate_synthetic_with_teacher(const SyntheticOptions& options) {
  if (options.num_samples == 0) throw ConfigError("synthetic data: num_samples must be positive");
  if (options.num_features == 0) throw ConfigError("synthetic data: num_features must be positive");
  if (!(options.sparsity > 0.0 && options.sparsity < 1.0)) {
    throw ConfigError("synthetic data: sparsity must be in (0, 1)");
  }
  if (!(options.teacher_density > 0.0 && options.teacher_density <= 1.0)) {
    throw ConfigError("synthetic data: teacher_density must be in (0, 1]");
  }
  if (!(options.target_prevalence >= 0.2 && options.target_prevalence <= 0.5)) {
    throw ConfigError("synthetic data: target_prevalence must be in [0.2, 0.5]");
  }

  std::mt19937_64 rng(options.seed);
  const std::size_t n = options.num_samples;
  const std::size_t d = options.num_features;

  SyntheticData out;
  out.data.features = DenseMatrix(n, d);
  std::bernoulli_distribution active(options.sparsity);
  for (double& v : out.data.features.data()) v = active(rng) ? 1.0 : 0.0;

  const std::size_t nonzero = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(options.teacher_density * static_cast<double>(d))));
  std::vector<std::size_t> feature_order(d);
  std::iota(feature_order.begin(), feature_order.end(), std::size_t{0});
  std::shuffle(feature_order.begin(), feature_order.end(), rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  out.teacher.weights.assign(d, 0.0);
  for (std::size_t i = 0; i < nonzero; ++i) {
    out.teacher.weights[feature_order[i]] = options.signal_scale * normal(rng);
  }

  std::vector<double> margins(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = out.data.features.row(r);
    for (std::size_t c = 0; c < d; ++c) margins[r] += row[c] * out.teacher.weights[c];
  }

  // Bisection on the bias so the expected prevalence hits the target.
  const auto prevalence = [&](double bias) {
    double total = 0.0;
    for (double m : margins) total += logistic(m + bias);
    return total / static_cast<double>(n);
  };
  double lo = -60.0;
  double hi = 60.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (prevalence(mid) < options.target_prevalence ? lo : hi) = mid;
  }
  out.teacher.bias = 0.5 * (lo + hi);

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  out.data.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    out.data.labels[r] = uniform(rng) < logistic(margins[r] + out.teacher.bias) ? 1 : 0;
  }
  out.data.feature_names.reserve(d);
  for (std::size_t c = 0; c < d; ++c) out.data.feature_names.push_back("f" + std::to_string(c));
  return out;
}

Dataset generate_synthetic(std::size_t num_samples, std::size_t num_features, double sparsity,
                           std::uint64_t seed) {
  SyntheticOptions options;
  options.num_samples = num_samples;
  options.num_features = num_features;
  options.sparsity = sparsity;
  options.seed = seed;
  return generate_synthetic_with_teacher(options).data;
}

PartitionedDataset split_and_partition(const Dataset& data, const SplitOptions& options) {
  if (options.num_clients == 0) throw ConfigError("split: num_clients must be at least 1");
  if (!(options.train_fraction > 0.0) || !(options.validation_fraction >= 0.0) ||
      options.train_fraction + options.validation_fraction > 1.0 + 1e-12) {
    throw ConfigError("split: fractions must be non-negative, train positive, and sum to at most 1");
  }
  const std::size_t n = data.num_rows();
  if (n < options.num_clients) {
    throw ConfigError("split: dataset has " + std::to_string(n) + " rows, fewer than " +
                      std::to_string(options.num_clients) + " clients");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto count_for = [n](double fraction) {
    return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  };
  const std::size_t train_count = std::max(options.num_clients, count_for(options.train_fraction));
  const std::size_t val_count =
      std::min(n - train_count, count_for(options.validation_fraction));
  if (train_count > n) throw ConfigError("split: not enough rows for the training slice");

  PartitionedDataset out;
  const std::size_t k = options.num_clients;
  const std::size_t base = train_count / k;
  const std::size_t extra = train_count % k;
  std::size_t cursor = 0;
  for (std::size_t client = 0; client < k; ++client) {
    const std::size_t size = base + (client < extra ? 1 : 0);
    std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                  order.begin() + static_cast<std::ptrdiff_t>(cursor + size));
    cursor += size;
    out.client_shards.push_back(data.subset(rows));
    out.shard_rows.push_back(std::move(rows));
  }
  out.validation_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                             order.begin() + static_cast<std::ptrdiff_t>(cursor + val_count));
  cursor += val_count;
  out.test_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor), order.end());
  out.validation = data.subset(out.validation_rows);
  out.test = data.subset(out.test_rows);
  return out;
}

}  // namespace scbf
