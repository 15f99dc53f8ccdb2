#include "scbf/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "scbf/errors.hpp"

namespace scbf {

namespace {

void check_inputs(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw MetricError(std::to_string(scores.size()) + " scores for " +
                      std::to_string(labels.size()) + " labels");
  }
  for (auto y : labels) {
    if (y > 1) throw MetricError("labels must be 0 or 1");
  }
}

}  // namespace

double auc_roc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positives = 0.0;
  double negatives = 0.0;
  double correct = 0.0;  // doubled to stay integral under half credit
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double group_pos = 0.0;
    double group_neg = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] != 0 ? group_pos : group_neg) += 1.0;
      ++j;
    }
    correct += 2.0 * group_pos * negatives + group_pos * group_neg;
    positives += group_pos;
    negatives += group_neg;
    i = j;
  }
  if (positives == 0.0 || negatives == 0.0) {
    throw MetricError("auc_roc is undefined without both positive and negative labels");
  }
  return correct / (2.0 * positives * negatives);
}

double auc_pr(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double hits = 0.0;
  double sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] != 0) {
      hits += 1.0;
      sum += hits / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0.0) throw MetricError("auc_pr is undefined without positive labels");
  return sum / hits;
}

}  // namespace scbf
