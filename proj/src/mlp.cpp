#include "scbf/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "scbf/errors.hpp"

namespace scbf {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

std::string layer_name(std::size_t layer) { return "layer " + std::to_string(layer + 1); }

// Index (0-based) of the layer whose output is dropped out, if any.
std::optional<std::size_t> dropout_layer(const MlpConfig& config) {
  if (!config.dropout_after_layer || config.dropout_rate <= 0.0) return std::nullopt;
  return *config.dropout_after_layer - 1;
}

ForwardPass run_forward(const MlpModel& model, const DenseMatrix& batch,
                        std::mt19937_64* rng, const std::vector<DenseMatrix>* fixed_masks) {
  const auto& weights = model.weights();
  const auto& biases = model.biases();
  const std::size_t layers = weights.size();
  const auto dropped = dropout_layer(model.config());
  const double keep = 1.0 - model.config().dropout_rate;

  ForwardPass pass;
  pass.layer_inputs.reserve(layers);
  pass.activations.reserve(layers);
  pass.dropout_masks.resize(layers);
  pass.layer_inputs.push_back(batch);

  for (std::size_t l = 0; l < layers; ++l) {
    const DenseMatrix& input = pass.layer_inputs[l];
    if (input.cols() != weights[l].rows()) {
      throw ShapeError(layer_name(l) + ": input has " + std::to_string(input.cols()) +
                       " columns, weights are " + shape_string(weights[l]));
    }
    DenseMatrix z = matmul(input, weights[l], layer_name(l));
    const bool is_output = l + 1 == layers;
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto row = z.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        row[c] += biases[l][c];
      }
    }
    if (is_output) {
      pass.logits.resize(z.rows());
      pass.predictions.resize(z.rows());
      for (std::size_t r = 0; r < z.rows(); ++r) {
        pass.logits[r] = z(r, 0);
        pass.predictions[r] = sigmoid(z(r, 0));
      }
      DenseMatrix out(z.rows(), 1);
      for (std::size_t r = 0; r < z.rows(); ++r) out(r, 0) = pass.predictions[r];
      pass.activations.push_back(std::move(out));
      break;
    }
    for (double& v : z.data()) v = v > 0.0 ? v : 0.0;

    DenseMatrix next = z;
    if (fixed_masks != nullptr) {
      const DenseMatrix& mask = (*fixed_masks)[l];
      if (!mask.empty()) {
        if (!mask.same_shape(z)) throw ShapeError(layer_name(l) + ": dropout mask shape mismatch");
        for (std::size_t i = 0; i < next.size(); ++i) next.data()[i] *= mask.data()[i];
        pass.dropout_masks[l] = mask;
      }
    } else if (rng != nullptr && dropped && *dropped == l) {
      DenseMatrix mask(z.rows(), z.cols());
      std::bernoulli_distribution retain(keep);
      for (double& m : mask.data()) m = retain(*rng) ? 1.0 / keep : 0.0;
      for (std::size_t i = 0; i < next.size(); ++i) next.data()[i] *= mask.data()[i];
      pass.dropout_masks[l] = std::move(mask);
    }
    pass.activations.push_back(std::move(z));
    pass.layer_inputs.push_back(std::move(next));
  }
  return pass;
}

}  // namespace

void MlpConfig::validate() const {
  if (input_dim == 0) throw ConfigError("input_dim must be positive");
  if (layer_sizes.empty()) throw ConfigError("layer_sizes must not be empty");
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw ConfigError("layer_sizes entries must be positive");
  }
  if (layer_sizes.back() != 1) throw ConfigError("the output layer must have exactly 1 neuron");
  if (dropout_after_layer) {
    if (*dropout_after_layer < 1 || *dropout_after_layer >= layer_sizes.size()) {
      throw ConfigError("dropout_after_layer must name a hidden layer (1.." +
                        std::to_string(layer_sizes.size() - 1) + ")");
    }
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout_rate must be in [0, 1)");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be a non-negative finite number");
  }
}

std::size_t GradientSet::weight_parameter_count() const {
  std::size_t total = 0;
  for (const auto& w : weights) total += w.size();
  return total;
}

MlpModel::MlpModel(MlpConfig config) : config_(std::move(config)), rng_(config_.seed) {
  config_.validate();
  std::size_t fan_in = config_.input_dim;
  for (std::size_t fan_out : config_.layer_sizes) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> init(-limit, limit);
    DenseMatrix w(fan_in, fan_out);
    for (double& v : w.data()) v = init(rng_);
    weights_.push_back(std::move(w));
    biases_.emplace_back(fan_out, 0.0);
    fan_in = fan_out;
  }
}

MlpModel::MlpModel(MlpConfig config, std::vector<DenseMatrix> weights,
                   std::vector<std::vector<double>> biases)
    : config_(std::move(config)),
      weights_(std::move(weights)),
      biases_(std::move(biases)),
      rng_(config_.seed) {
  config_.validate();
  check_invariants();
}

std::size_t MlpModel::hidden_neuron_count() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < config_.layer_sizes.size(); ++l) total += config_.layer_sizes[l];
  return total;
}

std::size_t MlpModel::weight_parameter_count() const {
  std::size_t total = 0;
  for (const auto& w : weights_) total += w.size();
  return total;
}

void MlpModel::check_invariants() const {
  if (weights_.size() != config_.layer_sizes.size() || biases_.size() != weights_.size()) {
    throw ShapeError("model has " + std::to_string(weights_.size()) +
                     " weight matrices for " + std::to_string(config_.layer_sizes.size()) +
                     " layers");
  }
  std::size_t fan_in = config_.input_dim;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const std::size_t fan_out = config_.layer_sizes[l];
    if (weights_[l].rows() != fan_in || weights_[l].cols() != fan_out) {
      throw ShapeError(layer_name(l) + ": weights are " + shape_string(weights_[l]) +
                       ", expected " + std::to_string(fan_in) + "x" + std::to_string(fan_out));
    }
    if (biases_[l].size() != fan_out) {
      throw ShapeError(layer_name(l) + ": bias length " + std::to_string(biases_[l].size()) +
                       ", expected " + std::to_string(fan_out));
    }
    fan_in = fan_out;
  }
}

void MlpModel::copy_parameters_from(const MlpModel& other) {
  if (!same_structure(other)) throw ShapeError("copy_parameters_from: structure mismatch");
  weights_ = other.weights_;
  biases_ = other.biases_;
}

void MlpModel::remove_hidden_neuron(std::size_t layer, std::size_t index) {
  if (layer + 1 >= weights_.size()) {
    throw ShapeError(layer_name(layer) + " is not a hidden layer");
  }
  if (index >= config_.layer_sizes[layer]) {
    throw ShapeError(layer_name(layer) + ": neuron " + std::to_string(index) +
                     " out of range (" + std::to_string(config_.layer_sizes[layer]) + ")");
  }
  if (config_.layer_sizes[layer] == 1) {
    throw ShapeError(layer_name(layer) + ": cannot remove the last neuron");
  }
  weights_[layer] = weights_[layer].without_column(index);
  biases_[layer].erase(biases_[layer].begin() + static_cast<std::ptrdiff_t>(index));
  weights_[layer + 1] = weights_[layer + 1].without_row(index);
  --config_.layer_sizes[layer];
}

bool MlpModel::same_structure(const MlpModel& other) const {
  return config_.input_dim == other.config_.input_dim &&
         config_.layer_sizes == other.config_.layer_sizes;
}

bool MlpModel::parameters_equal(const MlpModel& other) const {
  return weights_ == other.weights_ && biases_ == other.biases_;
}

ForwardPass forward(MlpModel& model, const DenseMatrix& batch, bool training) {
  return run_forward(model, batch, training ? &model.rng() : nullptr, nullptr);
}

ForwardPass forward(const MlpModel& model, const DenseMatrix& batch) {
  return run_forward(model, batch, nullptr, nullptr);
}

ForwardPass forward_with_masks(const MlpModel& model, const DenseMatrix& batch,
                               const std::vector<DenseMatrix>& masks) {
  if (masks.size() != model.num_layers()) {
    throw ShapeError("forward_with_masks: expected one mask slot per layer");
  }
  return run_forward(model, batch, nullptr, &masks);
}

std::vector<double> predict(const MlpModel& model, const DenseMatrix& batch) {
  return forward(model, batch).predictions;
}

double bce_loss(const ForwardPass& pass, std::span<const std::uint8_t> labels) {
  if (labels.size() != pass.logits.size()) {
    throw ShapeError("bce_loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(pass.logits.size()) + " predictions");
  }
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double z = pass.logits[i];
    total += softplus(z) - (labels[i] != 0 ? z : 0.0);
  }
  return total / static_cast<double>(labels.size());
}

GradientSet zero_gradients(const MlpModel& model) {
  GradientSet grads;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    grads.weights.emplace_back(model.weights()[l].rows(), model.weights()[l].cols());
    grads.biases.emplace_back(model.biases()[l].size(), 0.0);
  }
  return grads;
}

GradientSet backward(const MlpModel& model, std::span<const std::uint8_t> labels,
                     const ForwardPass& pass) {
  const std::size_t layers = model.num_layers();
  const std::size_t n = pass.predictions.size();
  if (labels.size() != n) {
    throw ShapeError("backward: " + std::to_string(labels.size()) + " labels for a batch of " +
                     std::to_string(n));
  }
  if (pass.activations.size() != layers || pass.layer_inputs.size() != layers) {
    throw ShapeError("backward: forward pass does not match the model's layer count");
  }

  GradientSet grads;
  grads.weights.resize(layers);
  grads.biases.resize(layers);

  DenseMatrix delta(n, 1);
  const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    delta(i, 0) = (pass.predictions[i] - (labels[i] != 0 ? 1.0 : 0.0)) * inv_n;
  }

  for (std::size_t l = layers; l-- > 0;) {
    grads.weights[l] = matmul_transpose_a(pass.layer_inputs[l], delta);
    std::vector<double> bias_grad(delta.cols(), 0.0);
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      auto row = delta.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) bias_grad[c] += row[c];
    }
    grads.biases[l] = std::move(bias_grad);
    if (l == 0) break;

    DenseMatrix upstream = matmul_transpose_b(delta, model.weights()[l]);
    const DenseMatrix& mask = pass.dropout_masks[l - 1];
    const DenseMatrix& act = pass.activations[l - 1];
    for (std::size_t i = 0; i < upstream.size(); ++i) {
      double g = upstream.data()[i];
      if (!mask.empty()) g *= mask.data()[i];
      upstream.data()[i] = act.data()[i] > 0.0 ? g : 0.0;
    }
    delta = std::move(upstream);
  }
  return grads;
}

void sgd_step(MlpModel& model, const GradientSet& grads, double learning_rate) {
  if (grads.num_layers() != model.num_layers()) {
    throw ShapeError("sgd_step: gradient layer count mismatch");
  }
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    DenseMatrix& w = model.weight(l);
    std::vector<double>& b = model.bias(l);
    if (!w.same_shape(grads.weights[l]) || b.size() != grads.biases[l].size()) {
      throw ShapeError("sgd_step: " + layer_name(l) + " gradient shape mismatch");
    }
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] -= learning_rate * grads.weights[l].data()[i];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= learning_rate * grads.biases[l][i];
  }
}

GradientSet parameter_delta(const MlpModel& after, const MlpModel& before) {
  if (!after.same_structure(before)) throw ShapeError("parameter_delta: structure mismatch");
  GradientSet delta = zero_gradients(after);
  for (std::size_t l = 0; l < after.num_layers(); ++l) {
    const auto& wa = after.weights()[l].data();
    const auto& wb = before.weights()[l].data();
    for (std::size_t i = 0; i < wa.size(); ++i) delta.weights[l].data()[i] = wa[i] - wb[i];
    for (std::size_t i = 0; i < after.biases()[l].size(); ++i) {
      delta.biases[l][i] = after.biases()[l][i] - before.biases()[l][i];
    }
  }
  return delta;
}

GradientSet train_local(MlpModel& model, const Dataset& data, std::size_t epochs,
                        std::size_t batch_size) {
  if (data.empty()) throw EmptyDataError("train_local: empty training data");
  if (epochs == 0) throw ConfigError("train_local: epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("train_local: batch_size must be at least 1");
  if (data.num_features() != model.config().input_dim) {
    throw ShapeError("train_local: data has " + std::to_string(data.num_features()) +
                     " features, model expects " + std::to_string(model.config().input_dim));
  }

  const MlpModel before = model;
  const double lr = model.config().learning_rate;
  std::vector<std::size_t> order(data.num_rows());
  std::vector<std::uint8_t> batch_labels;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), model.rng());
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      DenseMatrix batch = data.features.gather_rows(rows);
      batch_labels.resize(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) batch_labels[i] = data.labels[rows[i]];
      ForwardPass pass = forward(model, batch, true);
      sgd_step(model, backward(model, batch_labels, pass), lr);
    }
  }
  return parameter_delta(model, before);
}

}  // namespace scbf
