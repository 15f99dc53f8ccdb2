#pragma once

// Test-only reference implementations. None of these call into the code
// paths they are used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "scbf/channel_selection.hpp"
#include "scbf/data.hpp"
#include "scbf/mlp.hpp"

namespace scbf::testing {

inline MlpModel random_model(std::mt19937_64& rng, std::size_t max_layers, std::size_t max_units,
                             bool with_dropout) {
  std::uniform_int_distribution<std::size_t> layers_dist(1, max_layers);
  std::uniform_int_distribution<std::size_t> units(1, max_units);
  MlpConfig config;
  config.input_dim = units(rng);
  config.layer_sizes.clear();
  const std::size_t layers = layers_dist(rng);
  for (std::size_t l = 0; l + 1 < layers; ++l) config.layer_sizes.push_back(units(rng));
  config.layer_sizes.push_back(1);
  config.dropout_after_layer = std::nullopt;
  if (with_dropout && layers >= 2) {
    config.dropout_after_layer = std::uniform_int_distribution<std::size_t>(1, layers - 1)(rng);
    config.dropout_rate = 0.3;
  }
  config.seed = rng();
  MlpModel model(config);
  // Nonzero biases so every parameter has a visible gradient.
  std::normal_distribution<double> normal(0.0, 0.5);
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    for (double& b : model.bias(l)) b = normal(rng);
  }
  return model;
}

inline DenseMatrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                                 double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  DenseMatrix m(rows, cols);
  for (double& v : m.data()) v = normal(rng);
  return m;
}

inline GradientSet random_gradients(std::mt19937_64& rng, std::size_t input_dim,
                                    const std::vector<std::size_t>& dims) {
  GradientSet g;
  std::size_t fan_in = input_dim;
  for (std::size_t d : dims) {
    g.weights.push_back(random_matrix(rng, fan_in, d));
    g.biases.emplace_back(d, 0.0);
    fan_in = d;
  }
  return g;
}

// Direct loop over every channel (odometer over per-layer indices).
struct ChannelOracle {
  std::vector<std::vector<std::size_t>> channels;
  std::vector<double> norms;
};

inline ChannelOracle enumerate_channels(const GradientSet& grads) {
  ChannelOracle out;
  const std::size_t layers = grads.weights.size();
  std::vector<std::size_t> idx(layers, 0);
  for (;;) {
    double norm = 0.0;
    const DenseMatrix& first = grads.weights[0];
    for (std::size_t r = 0; r < first.rows(); ++r) norm += first(r, idx[0]) * first(r, idx[0]);
    for (std::size_t l = 1; l < layers; ++l) {
      const double g = grads.weights[l](idx[l - 1], idx[l]);
      norm += g * g;
    }
    out.channels.push_back(idx);
    out.norms.push_back(norm);
    std::size_t l = layers;
    while (l > 0) {
      --l;
      if (++idx[l] < grads.weights[l].cols()) break;
      idx[l] = 0;
      if (l == 0) return out;
    }
  }
}

inline double sorted_threshold(std::vector<double> norms, double rate) {
  std::sort(norms.begin(), norms.end());
  const std::size_t k = norms.size();
  // Exact nearest rank ceil((1 - rate) * k) for rates of the form j / k' with small k'.
  const auto rank = static_cast<std::size_t>(std::ceil((1.0 - rate) * static_cast<double>(k) - 1e-9));
  if (rank == 0) return -std::numeric_limits<double>::infinity();
  return norms[rank - 1];
}

using Coord = std::tuple<std::size_t, std::size_t, std::size_t>;  // layer, row, col

inline std::set<Coord> coords_of_channel(const GradientSet& grads,
                                         const std::vector<std::size_t>& idx) {
  std::set<Coord> out;
  for (std::size_t r = 0; r < grads.weights[0].rows(); ++r) out.insert({0, r, idx[0]});
  for (std::size_t l = 1; l < idx.size(); ++l) out.insert({l, idx[l - 1], idx[l]});
  return out;
}

inline std::set<Coord> oracle_selection(const GradientSet& grads, double rate, bool positive) {
  const ChannelOracle oracle = enumerate_channels(grads);
  const double q = sorted_threshold(oracle.norms, rate);
  std::set<Coord> covered;
  for (std::size_t i = 0; i < oracle.channels.size(); ++i) {
    const bool above = oracle.norms[i] > q;
    if (above == positive) {
      for (const auto& c : coords_of_channel(grads, oracle.channels[i])) covered.insert(c);
    }
  }
  if (positive) return covered;
  std::set<Coord> kept;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    for (std::size_t r = 0; r < grads.weights[l].rows(); ++r) {
      for (std::size_t c = 0; c < grads.weights[l].cols(); ++c) {
        if (!covered.count({l, r, c})) kept.insert({l, r, c});
      }
    }
  }
  return kept;
}

inline std::set<Coord> coords_of_update(const SparseUpdate& update) {
  std::set<Coord> out;
  for (std::size_t l = 0; l < update.layer_entries.size(); ++l) {
    for (const auto& e : update.layer_entries[l]) out.insert({l, e.row, e.col});
  }
  return out;
}

// Pairwise AUCROC: 1 per correctly ordered pair, 1/2 per tie.
inline double pairwise_auc(const std::vector<double>& scores,
                           const std::vector<std::uint8_t>& labels) {
  double credit = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) credit += 1.0;
      else if (scores[i] == scores[j]) credit += 0.5;
    }
  }
  return credit / pairs;
}

// Average precision from first principles: rank of each item is one plus the
// number of items ahead of it (higher score, or equal score and lower index).
inline double direct_average_precision(const std::vector<double>& scores,
                                       const std::vector<std::uint8_t>& labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (scores[j] > scores[i] || (scores[j] == scores[i] && j < i)) ++ahead;
    }
    rank[i] = ahead + 1;
  }
  double total = 0.0;
  double positives = 0.0;
  for (std::size_t r = 1; r <= n; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      if (rank[i] != r || !labels[i]) continue;
      std::size_t hits = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (labels[j] && rank[j] <= r) ++hits;
      }
      positives += 1.0;
      total += static_cast<double>(hits) / static_cast<double>(r);
    }
  }
  return total / positives;
}

// Loss as a function of the model's parameters, with dropout masks held fixed.
inline double loss_with_masks(const MlpModel& model, const DenseMatrix& batch,
                              const std::vector<std::uint8_t>& labels,
                              const std::vector<DenseMatrix>& masks) {
  return bce_loss(forward_with_masks(model, batch, masks), labels);
}

inline double relative_error(double a, double b) {
  // The floor absorbs central-difference round-off (~1e-11) on near-zero gradients.
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-7});
}

// Largest relative error between backward() and central differences with step eps.
inline double max_gradient_error(MlpModel model, const DenseMatrix& batch,
                                 const std::vector<std::uint8_t>& labels, double eps = 1e-5) {
  ForwardPass pass = forward(model, batch, true);
  const std::vector<DenseMatrix> masks = pass.dropout_masks;
  const GradientSet grads = backward(model, labels, pass);
  double worst = 0.0;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    for (std::size_t i = 0; i < model.weight(l).size(); ++i) {
      double& w = model.weight(l).data()[i];
      const double saved = w;
      w = saved + eps;
      const double up = loss_with_masks(model, batch, labels, masks);
      w = saved - eps;
      const double down = loss_with_masks(model, batch, labels, masks);
      w = saved;
      worst = std::max(worst, relative_error(grads.weights[l].data()[i], (up - down) / (2 * eps)));
    }
    for (std::size_t i = 0; i < model.bias(l).size(); ++i) {
      double& b = model.bias(l)[i];
      const double saved = b;
      b = saved + eps;
      const double up = loss_with_masks(model, batch, labels, masks);
      b = saved - eps;
      const double down = loss_with_masks(model, batch, labels, masks);
      b = saved;
      worst = std::max(worst, relative_error(grads.biases[l][i], (up - down) / (2 * eps)));
    }
  }
  return worst;
}

inline Dataset rows_of(DenseMatrix x) {
  Dataset d;
  d.labels.assign(x.rows(), 0);
  d.features = std::move(x);
  return d;
}

// Naive count of exact zeros per hidden neuron, one sample at a time.
inline std::vector<std::vector<double>> zero_fraction_oracle(const MlpModel& m, const Dataset& v) {
  std::vector<std::vector<double>> out;
  for (std::size_t l = 0; l + 1 < m.num_layers(); ++l) out.emplace_back(m.config().layer_sizes[l], 0.0);
  for (std::size_t r = 0; r < v.num_rows(); ++r) {
    std::vector<double> a(v.features.row(r).begin(), v.features.row(r).end());
    for (std::size_t l = 0; l + 1 < m.num_layers(); ++l) {
      const DenseMatrix& w = m.weights()[l];
      std::vector<double> next(w.cols());
      for (std::size_t j = 0; j < w.cols(); ++j) {
        double z = m.biases()[l][j];
        for (std::size_t i = 0; i < w.rows(); ++i) z += a[i] * w(i, j);
        next[j] = z > 0.0 ? z : 0.0;
        if (next[j] == 0.0) out[l][j] += 1.0;
      }
      a = std::move(next);
    }
  }
  for (auto& layer : out) {
    for (double& v2 : layer) v2 /= static_cast<double>(v.num_rows());
  }
  return out;
}

}  // namespace scbf::testing
