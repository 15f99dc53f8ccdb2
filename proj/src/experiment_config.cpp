#include "scbf/experiment_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "scbf/errors.hpp"

namespace scbf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw ConfigError(key + ": invalid value '" + value + "' (expected " + expected + ")");
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) bad_value(key, value, "a non-negative integer");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size() || !std::isfinite(out)) bad_value(key, value, "a number");
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, value, "a number");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, "true or false");
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_uint(key, trim(item)));
  if (out.empty()) bad_value(key, value, "a comma-separated list of sizes");
  return out;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"algorithm", "scbf", "scbf | scbfwp | fedavg | fedavgwp"},
      {"num_clients", "5", "number of clients"},
      {"global_loops", "100", "number of global loops"},
      {"epochs_per_loop", "5", "local epochs per global loop"},
      {"batch_size", "32", "local minibatch size"},
      {"update_rate", "0.3", "fraction of channels uploaded per loop, in (0, 1]"},
      {"selection", "positive", "positive | negative"},
      {"download_rate", "1.0", "fraction of server parameters downloaded, in (0, 1]"},
      {"decay", "0.8", "server decay for coordinates updated by several clients, in (0, 1]"},
      {"prune_rate", "0.1", "fraction of remaining hidden neurons pruned per loop"},
      {"prune_total", "0.47", "cap on the total pruned fraction of hidden neurons"},
      {"seed", "42", "model, dropout and shuffling seed"},
      {"layer_sizes", "64,32,1", "neurons per layer; the last must be 1"},
      {"dropout_after_layer", "2", "1-based hidden layer followed by dropout; 0 disables"},
      {"dropout_rate", "0.5", "dropout probability in [0, 1)"},
      {"learning_rate", "0.01", "SGD learning rate"},
      {"transport", "inprocess", "inprocess | codec | loopback"},
      {"parallel_clients", "false", "train clients on separate threads"},
      {"data_path", "", "CSV dataset; empty generates synthetic data"},
      {"label_column", "label", "name of the label column in the CSV"},
      {"synthetic_samples", "5000", "rows of generated data"},
      {"synthetic_features", "100", "columns of generated data"},
      {"synthetic_sparsity", "0.2", "probability that a generated feature is 1"},
      {"data_seed", "42", "seed for data generation and splitting"},
      {"train_fraction", "0.6", "share of rows used for client training"},
      {"validation_fraction", "0.1", "share of rows used for validation (pruning)"},
      {"out_dir", "out", "directory for curve and summary files"},
  };
  return keys;
}

void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  FederationConfig& f = c.federation;
  if (key == "algorithm") {
    f.algorithm = parse_algorithm(value);
  } else if (key == "num_clients") {
    f.num_clients = parse_uint(key, value);
    c.split.num_clients = f.num_clients;
  } else if (key == "global_loops") {
    f.global_loops = parse_uint(key, value);
  } else if (key == "epochs_per_loop") {
    f.epochs_per_loop = parse_uint(key, value);
  } else if (key == "batch_size") {
    f.batch_size = parse_uint(key, value);
  } else if (key == "update_rate") {
    f.selection.update_rate = parse_double(key, value);
  } else if (key == "selection") {
    if (value == "positive") {
      f.selection.mode = SelectionMode::kPositive;
    } else if (value == "negative") {
      f.selection.mode = SelectionMode::kNegative;
    } else {
      bad_value(key, value, "positive or negative");
    }
  } else if (key == "download_rate") {
    f.download_rate = parse_double(key, value);
  } else if (key == "decay") {
    f.decay = parse_double(key, value);
  } else if (key == "prune_rate") {
    c.prune.rate_per_loop = parse_double(key, value);
  } else if (key == "prune_total") {
    c.prune.total_fraction = parse_double(key, value);
  } else if (key == "seed") {
    f.seed = parse_uint(key, value);
  } else if (key == "layer_sizes") {
    f.model.layer_sizes = parse_sizes(key, value);
  } else if (key == "dropout_after_layer") {
    const auto layer = parse_uint(key, value);
    f.model.dropout_after_layer = layer == 0 ? std::nullopt : std::optional<std::size_t>(layer);
  } else if (key == "dropout_rate") {
    f.model.dropout_rate = parse_double(key, value);
  } else if (key == "learning_rate") {
    f.model.learning_rate = parse_double(key, value);
  } else if (key == "transport") {
    f.transport = parse_transport(value);
  } else if (key == "parallel_clients") {
    f.parallel_clients = parse_bool(key, value);
  } else if (key == "data_path") {
    c.data_path = value;
  } else if (key == "label_column") {
    c.label_column = value;
  } else if (key == "synthetic_samples") {
    c.synthetic.num_samples = parse_uint(key, value);
  } else if (key == "synthetic_features") {
    c.synthetic.num_features = parse_uint(key, value);
  } else if (key == "synthetic_sparsity") {
    c.synthetic.sparsity = parse_double(key, value);
  } else if (key == "data_seed") {
    c.data_seed = parse_uint(key, value);
  } else if (key == "train_fraction") {
    c.split.train_fraction = parse_double(key, value);
  } else if (key == "validation_fraction") {
    c.split.validation_fraction = parse_double(key, value);
  } else if (key == "out_dir") {
    c.out_dir = value;
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> problems;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      problems.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string message = "invalid configuration:";
    for (const auto& p : problems) message += "\n  " + p;
    throw ConfigError(message);
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

FederationConfig ExperimentConfig::resolved_federation() const {
  FederationConfig f = federation;
  f.prune = is_pruning(f.algorithm) ? std::optional<PruneConfig>(prune) : std::nullopt;
  return f;
}

void ExperimentConfig::validate() const {
  std::vector<std::string> problems;
  const auto check = [&](bool ok, const std::string& message) {
    if (!ok) problems.push_back(message);
  };
  const FederationConfig& f = federation;
  check(f.num_clients >= 1, "num_clients: must be at least 1");
  check(f.epochs_per_loop >= 1, "epochs_per_loop: must be at least 1");
  check(f.batch_size >= 1, "batch_size: must be at least 1");
  check(f.selection.update_rate > 0.0 && f.selection.update_rate <= 1.0,
        "update_rate: must be in (0, 1]");
  check(f.download_rate > 0.0 && f.download_rate <= 1.0, "download_rate: must be in (0, 1]");
  check(f.decay > 0.0 && f.decay <= 1.0, "decay: must be in (0, 1]");
  if (is_pruning(f.algorithm)) {
    check(prune.rate_per_loop > 0.0 && prune.rate_per_loop <= prune.total_fraction,
          "prune_rate: must be in (0, prune_total]");
    check(prune.total_fraction > 0.0 && prune.total_fraction < 1.0,
          "prune_total: must be in (0, 1)");
  }
  try {
    MlpConfig model = f.model;
    model.validate();
  } catch (const ConfigError& e) {
    problems.push_back(std::string("layer_sizes/dropout/learning_rate: ") + e.what());
  }
  check(f.model.learning_rate > 0.0, "learning_rate: must be positive");
  if (data_path.empty()) {
    check(synthetic.num_samples >= 1, "synthetic_samples: must be positive");
    check(synthetic.num_features >= 1, "synthetic_features: must be positive");
    check(synthetic.sparsity > 0.0 && synthetic.sparsity < 1.0,
          "synthetic_sparsity: must be in (0, 1)");
  }
  check(split.train_fraction > 0.0 && split.validation_fraction >= 0.0 &&
            split.train_fraction + split.validation_fraction < 1.0,
        "train_fraction/validation_fraction: need train > 0, validation >= 0, sum < 1");
  check(!out_dir.empty(), "out_dir: must not be empty");
  if (!problems.empty()) {
    std::string message = "invalid configuration:";
    for (const auto& p : problems) message += "\n  " + p;
    throw ConfigError(message);
  }
}

PartitionedDataset prepare_data(const ExperimentConfig& config) {
  Dataset data;
  if (config.data_path.empty()) {
    SyntheticOptions options = config.synthetic;
    options.seed = config.data_seed;
    data = generate_synthetic_with_teacher(options).data;
  } else {
    data = load_csv(config.data_path, config.label_column);
  }
  SplitOptions split = config.split;
  split.num_clients = config.federation.num_clients;
  split.seed = config.data_seed;
  return split_and_partition(data, split);
}

}  // namespace scbf
