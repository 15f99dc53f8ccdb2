#include "scbf/channel_selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scbf/errors.hpp"

namespace scbf {

namespace {

// Checks the layer chain m_0 -> m_1 -> ... -> m_L and returns [m_1..m_L].
std::vector<std::size_t> channel_dims(const GradientSet& grads) {
  if (grads.weights.empty()) throw ShapeError("channel norms: gradient set has no layers");
  std::vector<std::size_t> dims;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    if (l > 0 && grads.weights[l].rows() != grads.weights[l - 1].cols()) {
      throw ShapeError("channel norms: layer " + std::to_string(l + 1) + " has " +
                       std::to_string(grads.weights[l].rows()) + " rows, previous layer has " +
                       std::to_string(grads.weights[l - 1].cols()) + " columns");
    }
    dims.push_back(grads.weights[l].cols());
  }
  return dims;
}

// Marks every weight on the channel with per-layer neuron indices `idx`.
void mark_channel(const std::vector<std::size_t>& idx, std::vector<std::vector<char>>& first_cols,
                  std::vector<std::vector<char>>& marks, const GradientSet& grads) {
  first_cols[0][idx[0]] = 1;
  for (std::size_t l = 1; l < idx.size(); ++l) {
    marks[l][idx[l - 1] * grads.weights[l].cols() + idx[l]] = 1;
  }
}

}  // namespace

std::vector<std::size_t> ChannelNormTensor::unravel(std::size_t flat) const {
  std::vector<std::size_t> idx(dims.size());
  for (std::size_t l = dims.size(); l-- > 0;) {
    idx[l] = flat % dims[l];
    flat /= dims[l];
  }
  return idx;
}

std::size_t SparseUpdate::entry_count() const {
  std::size_t total = 0;
  for (const auto& layer : layer_entries) total += layer.size();
  return total;
}

std::size_t SparseUpdate::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [rows, cols] : source_shapes) total += rows * cols;
  return total;
}

void SparseUpdate::validate() const {
  if (layer_entries.size() != source_shapes.size()) {
    throw ShapeError("sparse update: " + std::to_string(layer_entries.size()) +
                     " entry lists for " + std::to_string(source_shapes.size()) + " layers");
  }
  for (std::size_t l = 0; l < layer_entries.size(); ++l) {
    const auto [rows, cols] = source_shapes[l];
    std::vector<char> seen(rows * cols, 0);
    for (const SparseEntry& e : layer_entries[l]) {
      if (e.row >= rows || e.col >= cols) {
        throw ShapeError("sparse update: layer " + std::to_string(l + 1) + " entry (" +
                         std::to_string(e.row) + ", " + std::to_string(e.col) +
                         ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
      }
      char& flag = seen[static_cast<std::size_t>(e.row) * cols + e.col];
      if (flag) {
        throw ShapeError("sparse update: layer " + std::to_string(l + 1) +
                         " has a duplicate entry at (" + std::to_string(e.row) + ", " +
                         std::to_string(e.col) + ")");
      }
      flag = 1;
    }
  }
}

void SelectionConfig::validate() const {
  if (!(update_rate > 0.0 && update_rate <= 1.0)) {
    throw ConfigError("update_rate must be in (0, 1]");
  }
}

ChannelNormTensor compute_channel_norms(const GradientSet& grads) {
  ChannelNormTensor tensor;
  tensor.dims = channel_dims(grads);

  const DenseMatrix& first = grads.weights[0];
  std::vector<double> acc(first.cols(), 0.0);
  for (std::size_t r = 0; r < first.rows(); ++r) {
    auto row = first.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) acc[c] += row[c] * row[c];
  }

  // Extend every partial channel ending at neuron i_{l-1} by each i_l.
  for (std::size_t l = 1; l < grads.weights.size(); ++l) {
    const DenseMatrix& g = grads.weights[l];
    const std::size_t width = g.cols();
    std::vector<double> next(acc.size() * width);
    for (std::size_t prefix = 0; prefix < acc.size(); ++prefix) {
      const std::size_t from = prefix % g.rows();
      auto row = g.row(from);
      for (std::size_t to = 0; to < width; ++to) {
        next[prefix * width + to] = acc[prefix] + row[to] * row[to];
      }
    }
    acc = std::move(next);
  }
  tensor.norms = std::move(acc);
  return tensor;
}

double quantile_threshold(const ChannelNormTensor& norms, double update_rate) {
  if (norms.norms.empty()) throw EmptyDataError("quantile_threshold: empty norm tensor");
  if (!(update_rate > 0.0 && update_rate <= 1.0)) {
    throw ConfigError("quantile_threshold: update rate must be in (0, 1]");
  }
  const std::size_t k = norms.norms.size();
  // The small slack keeps products like 0.75 * 4 from rounding up a rank.
  const double raw = (1.0 - update_rate) * static_cast<double>(k);
  const auto rank = static_cast<std::size_t>(std::max(0.0, std::ceil(raw - 1e-9)));
  if (rank == 0) return -std::numeric_limits<double>::infinity();
  std::vector<double> sorted = norms.norms;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                   sorted.end());
  return sorted[rank - 1];
}

SparseUpdate select_channels(const GradientSet& grads, const ChannelNormTensor& norms,
                             const SelectionConfig& config) {
  config.validate();
  const std::vector<std::size_t> dims = channel_dims(grads);
  if (dims != norms.dims) throw ShapeError("select_channels: norm tensor does not match gradients");

  const double threshold = quantile_threshold(norms, config.update_rate);
  const std::size_t layers = grads.weights.size();

  // Coverage marks: first layer by column, deeper layers by entry.
  std::vector<std::vector<char>> first_cols(1, std::vector<char>(dims[0], 0));
  std::vector<std::vector<char>> marks(layers);
  for (std::size_t l = 1; l < layers; ++l) marks[l].assign(grads.weights[l].size(), 0);

  const bool positive = config.mode == SelectionMode::kPositive;
  for (std::size_t flat = 0; flat < norms.size(); ++flat) {
    const bool above = norms.norms[flat] > threshold;
    // Positive marks kept channels; negative marks discarded ones.
    if (above == positive) mark_channel(norms.unravel(flat), first_cols, marks, grads);
  }

  SparseUpdate update;
  for (std::size_t l = 0; l < layers; ++l) {
    const DenseMatrix& g = grads.weights[l];
    update.source_shapes.emplace_back(g.rows(), g.cols());
    std::vector<SparseEntry> entries;
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) {
        const bool marked = l == 0 ? first_cols[0][c] != 0 : marks[l][r * g.cols() + c] != 0;
        if (marked == positive) {
          entries.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c), g(r, c)});
        }
      }
    }
    update.layer_entries.push_back(std::move(entries));
  }
  return update;
}

SparseUpdate process_gradients(const GradientSet& grads, const SelectionConfig& config) {
  return select_channels(grads, compute_channel_norms(grads), config);
}

double upload_fraction(const SparseUpdate& update) {
  const std::size_t total = update.parameter_count();
  if (total == 0) return 0.0;
  return static_cast<double>(update.entry_count()) / static_cast<double>(total);
}

SparseUpdate dense_update(const GradientSet& grads) {
  SparseUpdate update;
  for (const DenseMatrix& g : grads.weights) {
    update.source_shapes.emplace_back(g.rows(), g.cols());
    std::vector<SparseEntry> entries;
    entries.reserve(g.size());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) {
        entries.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c), g(r, c)});
      }
    }
    update.layer_entries.push_back(std::move(entries));
  }
  return update;
}

std::vector<DenseMatrix> densify(const SparseUpdate& update) {
  update.validate();
  std::vector<DenseMatrix> out;
  for (std::size_t l = 0; l < update.layer_entries.size(); ++l) {
    DenseMatrix m(update.source_shapes[l].first, update.source_shapes[l].second);
    for (const SparseEntry& e : update.layer_entries[l]) m(e.row, e.col) = e.value;
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace scbf
