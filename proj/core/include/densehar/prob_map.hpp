#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "densehar/error.hpp"

namespace densehar {

// Per-step class probabilities, (class, step) with `step` contiguous.
// Always double precision regardless of the activation type that produced it.
class DenseProbMap {
 public:
  DenseProbMap() = default;
  DenseProbMap(std::size_t class_count, std::size_t steps, double fill = 0.0)
      : class_count_(class_count), steps_(steps), probs_(class_count * steps, fill) {}

  std::size_t class_count() const noexcept { return class_count_; }
  std::size_t steps() const noexcept { return steps_; }

  double& operator()(std::size_t c, std::size_t j) noexcept { return probs_[c * steps_ + j]; }
  double operator()(std::size_t c, std::size_t j) const noexcept { return probs_[c * steps_ + j]; }

  std::span<double> values() noexcept { return probs_; }
  std::span<const double> values() const noexcept { return probs_; }

  // Lowest class index wins ties.
  std::size_t argmax(std::size_t j) const noexcept {
    std::size_t best = 0;
    for (std::size_t c = 1; c < class_count_; ++c) {
      if ((*this)(c, j) > (*this)(best, j)) best = c;
    }
    return best;
  }

  std::vector<int> argmax_labels() const {
    std::vector<int> labels(steps_);
    for (std::size_t j = 0; j < steps_; ++j) labels[j] = static_cast<int>(argmax(j));
    return labels;
  }

  double column_sum(std::size_t j) const noexcept {
    double s = 0.0;
    for (std::size_t c = 0; c < class_count_; ++c) s += (*this)(c, j);
    return s;
  }

  friend bool operator==(const DenseProbMap&, const DenseProbMap&) = default;

 private:
  std::size_t class_count_ = 0;
  std::size_t steps_ = 0;
  std::vector<double> probs_;
};

}  // namespace densehar
