#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scbf/matrix.hpp"

namespace scbf {

// Binary-feature classification data. Every feature entry is 0.0 or 1.0.
struct Dataset {
  DenseMatrix features;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> feature_names;

  std::size_t num_rows() const { return labels.size(); }
  std::size_t num_features() const { return features.cols(); }
  bool empty() const { return labels.empty(); }

  // Row subset in the given order.
  Dataset subset(const std::vector<std::size_t>& rows) const;

  double positive_rate() const;

  // Throws ShapeError/ParseError when the invariants above do not hold.
  void validate() const;
};

struct PartitionedDataset {
  std::vector<Dataset> client_shards;
  Dataset validation;
  Dataset test;
  // Original row index of every row, in the same order as the datasets above.
  std::vector<std::vector<std::size_t>> shard_rows;
  std::vector<std::size_t> validation_rows;
  std::vector<std::size_t> test_rows;
};

Dataset load_csv(const std::filesystem::path& path,
                 const std::string& label_column = "label");

// Writes the header (feature names, then `label_column`) and one row per sample.
void write_csv(const Dataset& data, const std::filesystem::path& path,
               const std::string& label_column = "label");

struct SyntheticOptions {
  std::size_t num_samples = 5000;
  std::size_t num_features = 100;
  // Probability that any one feature is 1.
  double sparsity = 0.2;
  std::uint64_t seed = 42;
  // Fraction of teacher weights that are nonzero.
  double teacher_density = 0.1;
  // Multiplier on the standard-normal teacher weights.
  double signal_scale = 3.0;
  // Expected positive prevalence targeted when solving for the teacher bias.
  double target_prevalence = 0.35;
};

struct SyntheticTeacher {
  std::vector<double> weights;
  double bias = 0.0;
};

struct SyntheticData {
  Dataset data;
  SyntheticTeacher teacher;
};

SyntheticData generate_synthetic_with_teacher(const SyntheticOptions& options);

Dataset generate_synthetic(std::size_t num_samples, std::size_t num_features,
                           double sparsity, std::uint64_t seed);

struct SplitOptions {
  double train_fraction = 0.6;
  double validation_fraction = 0.1;
  std::size_t num_clients = 5;
  std::uint64_t seed = 42;
};

PartitionedDataset split_and_partition(const Dataset& data, const SplitOptions& options);

}  // namespace scbf
