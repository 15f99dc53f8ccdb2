#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "scbf/mlp.hpp"

namespace scbf {

// Channel norms laid out row-major over (i_1, ..., i_L), one index per layer.
struct ChannelNormTensor {
  std::vector<std::size_t> dims;
  std::vector<double> norms;

  std::size_t size() const { return norms.size(); }
  // Per-layer neuron indices of flat channel `flat`.
  std::vector<std::size_t> unravel(std::size_t flat) const;
};

struct SparseEntry {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  double value = 0.0;

  bool operator==(const SparseEntry&) const = default;
};

// Weight-only processed gradient. Absent coordinates are zero.
struct SparseUpdate {
  std::vector<std::vector<SparseEntry>> layer_entries;
  std::vector<std::pair<std::size_t, std::size_t>> source_shapes;

  std::size_t entry_count() const;
  std::size_t parameter_count() const;
  // Throws ShapeError on out-of-range or duplicate coordinates.
  void validate() const;
  bool operator==(const SparseUpdate&) const = default;
};

enum class SelectionMode { kPositive, kNegative };

struct SelectionConfig {
  double update_rate = 0.3;
  SelectionMode mode = SelectionMode::kPositive;

  void validate() const;
};

// Squared channel norms: |G_1[:, i_1]|^2 + sum_{l>=2} G_l[i_{l-1}, i_l]^2.
// Bias gradients are ignored.
ChannelNormTensor compute_channel_norms(const GradientSet& grads);

// Nearest-rank (1 - rate) quantile; channels strictly above it are kept.
// Returns -infinity when every channel should be kept.
double quantile_threshold(const ChannelNormTensor& norms, double update_rate);

SparseUpdate select_channels(const GradientSet& grads, const ChannelNormTensor& norms,
                             const SelectionConfig& config);

// Convenience: norms, threshold and selection in one call.
SparseUpdate process_gradients(const GradientSet& grads, const SelectionConfig& config);

// Included entries over total weight parameters.
double upload_fraction(const SparseUpdate& update);

// Full update carrying every weight entry of `grads`.
SparseUpdate dense_update(const GradientSet& grads);

// Dense weight matrices with absent entries set to zero.
std::vector<DenseMatrix> densify(const SparseUpdate& update);

}  // namespace scbf
