#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "scbf/data.hpp"
#include "scbf/matrix.hpp"

namespace scbf {

struct MlpConfig {
  std::size_t input_dim = 100;
  // Neurons per layer; the last layer is the single sigmoid output.
  std::vector<std::size_t> layer_sizes{64, 32, 1};
  // 1-based index of the hidden layer whose output is dropped out.
  std::optional<std::size_t> dropout_after_layer = 2;
  double dropout_rate = 0.5;
  double learning_rate = 0.01;
  std::uint64_t seed = 42;

  void validate() const;
};

// Per-layer gradients (or parameter deltas) shaped like an MlpModel.
struct GradientSet {
  std::vector<DenseMatrix> weights;
  std::vector<std::vector<double>> biases;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t weight_parameter_count() const;
  bool operator==(const GradientSet&) const = default;
};

// Fully connected ReLU network with a sigmoid output. weights[l] is
// (fan_in x fan_out) and a layer computes relu(x * W + b).
class MlpModel {
 public:
  // Glorot-uniform weights and zero biases drawn from config.seed.
  explicit MlpModel(MlpConfig config);
  MlpModel(MlpConfig config, std::vector<DenseMatrix> weights,
           std::vector<std::vector<double>> biases);

  const MlpConfig& config() const { return config_; }
  std::size_t num_layers() const { return weights_.size(); }
  std::size_t hidden_neuron_count() const;
  std::size_t weight_parameter_count() const;

  const std::vector<DenseMatrix>& weights() const { return weights_; }
  const std::vector<std::vector<double>>& biases() const { return biases_; }
  // Entry-level mutable access. Callers must not change shapes.
  DenseMatrix& weight(std::size_t layer) { return weights_.at(layer); }
  std::vector<double>& bias(std::size_t layer) { return biases_.at(layer); }

  // Overwrites every weight and bias with `other`'s. Shapes must match.
  void copy_parameters_from(const MlpModel& other);

  // Removes neuron `index` of hidden layer `layer` (0-based): column of
  // weights[layer], its bias, and row of weights[layer + 1].
  void remove_hidden_neuron(std::size_t layer, std::size_t index);

  std::mt19937_64& rng() { return rng_; }
  void reseed(std::uint64_t seed) { rng_.seed(seed); }

  bool same_structure(const MlpModel& other) const;
  bool parameters_equal(const MlpModel& other) const;

  // Throws ShapeError if the shape invariants do not hold.
  void check_invariants() const;

 private:
  MlpConfig config_;
  std::vector<DenseMatrix> weights_;
  std::vector<std::vector<double>> biases_;
  std::mt19937_64 rng_;
};

struct ForwardPass {
  // Input consumed by each layer (layer_inputs[0] is the batch itself).
  std::vector<DenseMatrix> layer_inputs;
  // Post-activation output of each layer, before dropout.
  std::vector<DenseMatrix> activations;
  // Inverted-dropout scale per layer; empty where no dropout was applied.
  std::vector<DenseMatrix> dropout_masks;
  std::vector<double> logits;
  std::vector<double> predictions;
};

// With training=true dropout masks are drawn from the model's RNG.
ForwardPass forward(MlpModel& model, const DenseMatrix& batch, bool training);

// Evaluation pass; dropout is the identity.
ForwardPass forward(const MlpModel& model, const DenseMatrix& batch);

// Replays a pass with fixed dropout masks (as produced by a training pass).
ForwardPass forward_with_masks(const MlpModel& model, const DenseMatrix& batch,
                               const std::vector<DenseMatrix>& masks);

std::vector<double> predict(const MlpModel& model, const DenseMatrix& batch);

// Mean binary cross-entropy of a pass, computed from logits.
double bce_loss(const ForwardPass& pass, std::span<const std::uint8_t> labels);

GradientSet backward(const MlpModel& model, std::span<const std::uint8_t> labels,
                     const ForwardPass& pass);

GradientSet zero_gradients(const MlpModel& model);

void sgd_step(MlpModel& model, const GradientSet& grads, double learning_rate);

// after - before, weights and biases.
GradientSet parameter_delta(const MlpModel& after, const MlpModel& before);

// Minibatch SGD for `epochs` passes over `data` at the configured learning
// rate. Returns the cumulative parameter change.
GradientSet train_local(MlpModel& model, const Dataset& data, std::size_t epochs,
                        std::size_t batch_size);

}  // namespace scbf
