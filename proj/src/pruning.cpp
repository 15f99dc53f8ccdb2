#include "scbf/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scbf/errors.hpp"

namespace scbf {

std::size_t PruneDirective::total() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.size();
  return n;
}

void PruneConfig::validate() const {
  if (!(rate_per_loop > 0.0 && rate_per_loop <= total_fraction && total_fraction < 1.0)) {
    throw ConfigError("pruning requires 0 < prune_rate <= prune_total < 1");
  }
}

ApozReport compute_apoz(const MlpModel& model, const Dataset& validation) {
  if (validation.empty()) throw EmptyDataError("compute_apoz: empty validation set");
  const ForwardPass pass = forward(model, validation.features);
  const double n = static_cast<double>(validation.num_rows());

  ApozReport report;
  for (std::size_t l = 0; l + 1 < model.num_layers(); ++l) {
    const DenseMatrix& act = pass.activations[l];
    std::vector<std::size_t> zeros(act.cols(), 0);
    for (std::size_t r = 0; r < act.rows(); ++r) {
      auto row = act.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (row[c] <= 0.0) ++zeros[c];
      }
    }
    std::vector<double> apoz(act.cols());
    for (std::size_t c = 0; c < apoz.size(); ++c) apoz[c] = static_cast<double>(zeros[c]) / n;
    report.layers.push_back(std::move(apoz));
  }
  return report;
}

PruneDirective plan_prune(const ApozReport& report, const PruneConfig& config,
                          std::size_t already_pruned, std::size_t initial_total) {
  config.validate();
  PruneDirective directive;
  directive.layers.resize(report.layers.size());

  std::size_t neurons_left = 0;
  for (const auto& layer : report.layers) neurons_left += layer.size();

  const auto budget = static_cast<std::size_t>(
      std::floor(config.total_fraction * static_cast<double>(initial_total)));
  if (already_pruned >= budget) return directive;
  std::size_t count = static_cast<std::size_t>(
      std::floor(config.rate_per_loop * static_cast<double>(neurons_left)));
  count = std::min(count, budget - already_pruned);
  if (count == 0) return directive;

  struct Candidate {
    double apoz;
    std::size_t layer;
    std::size_t index;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(neurons_left);
  for (std::size_t l = 0; l < report.layers.size(); ++l) {
    for (std::size_t i = 0; i < report.layers[l].size(); ++i) {
      candidates.push_back({report.layers[l][i], l, i});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.apoz != b.apoz) return a.apoz > b.apoz;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.index < b.index;
  });

  std::vector<std::size_t> remaining(report.layers.size());
  for (std::size_t l = 0; l < remaining.size(); ++l) remaining[l] = report.layers[l].size();
  std::size_t chosen = 0;
  for (const Candidate& c : candidates) {
    if (chosen == count) break;
    if (remaining[c.layer] <= 1) continue;
    --remaining[c.layer];
    directive.layers[c.layer].push_back(c.index);
    ++chosen;
  }
  for (auto& layer : directive.layers) std::sort(layer.begin(), layer.end());
  return directive;
}

void apply_prune(MlpModel& model, const PruneDirective& directive) {
  const std::size_t hidden = model.num_layers() - 1;
  if (directive.layers.size() > hidden) {
    throw ShapeError("apply_prune: directive names " + std::to_string(directive.layers.size()) +
                     " layers, model has " + std::to_string(hidden) + " hidden layers");
  }
  for (std::size_t l = 0; l < directive.layers.size(); ++l) {
    const auto& indices = directive.layers[l];
    const std::size_t width = model.config().layer_sizes[l];
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= width) {
        throw ShapeError("apply_prune: layer " + std::to_string(l + 1) + " index " +
                         std::to_string(indices[i]) + " out of range (" + std::to_string(width) +
                         ")");
      }
      if (i > 0 && indices[i] <= indices[i - 1]) {
        throw ShapeError("apply_prune: layer " + std::to_string(l + 1) +
                         " indices must be sorted and unique");
      }
    }
    if (indices.size() >= width) {
      throw ShapeError("apply_prune: directive would empty layer " + std::to_string(l + 1));
    }
  }
  // Highest index first so earlier indices stay valid.
  for (std::size_t l = 0; l < directive.layers.size(); ++l) {
    const auto& indices = directive.layers[l];
    for (auto it = indices.rbegin(); it != indices.rend(); ++it) model.remove_hidden_neuron(l, *it);
  }
}

}  // namespace scbf
