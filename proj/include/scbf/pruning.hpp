#pragma once

#include <cstddef>
#include <vector>

#include "scbf/data.hpp"
#include "scbf/mlp.hpp"

namespace scbf {

// Average percentage of zeros of every hidden neuron, one vector per hidden layer.
struct ApozReport {
  std::vector<std::vector<double>> layers;
};

// Neuron indices to remove per hidden layer, sorted ascending, valid before removal.
struct PruneDirective {
  std::vector<std::vector<std::size_t>> layers;

  std::size_t total() const;
  bool empty() const { return total() == 0; }
  bool operator==(const PruneDirective&) const = default;
};

struct PruneConfig {
  double rate_per_loop = 0.1;
  double total_fraction = 0.47;

  void validate() const;
};

ApozReport compute_apoz(const MlpModel& model, const Dataset& validation);

// Picks floor(rate * neurons_left) highest-APoZ hidden neurons across all layers.
// The cumulative pruned count is capped at floor(total_fraction * initial_total)
// and at least one neuron per layer always survives.
PruneDirective plan_prune(const ApozReport& report, const PruneConfig& config,
                          std::size_t already_pruned, std::size_t initial_total);

void apply_prune(MlpModel& model, const PruneDirective& directive);

}  // namespace scbf
