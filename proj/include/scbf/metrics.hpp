#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <vector>

namespace scbf {

struct ScoredLabels {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

// Probability a random positive outranks a random negative; ties count 1/2.
double auc_roc(std::span<const double> scores, std::span<const std::uint8_t> labels);
inline double auc_roc(const ScoredLabels& data) { return auc_roc(data.scores, data.labels); }

// Average precision over a descending-score ranking, ties broken by input order.
double auc_pr(std::span<const double> scores, std::span<const std::uint8_t> labels);
inline double auc_pr(const ScoredLabels& data) { return auc_pr(data.scores, data.labels); }

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  void restart() { start_ = std::chrono::steady_clock::now(); }
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace scbf
