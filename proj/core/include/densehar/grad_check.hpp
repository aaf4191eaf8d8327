#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "densehar/model.hpp"

namespace densehar {

struct GradCheckOptions {
  double epsilon = 1e-3;
  std::size_t probes = 200;
};

struct ParameterIndex {
  std::size_t tensor = 0;
  std::size_t element = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  ParameterIndex worst;
  std::size_t probed_count = 0;
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric) noexcept;

// Central-difference check of `analytic` against `loss`, probing random
// coordinates of `params` (mutated in place and restored).
GradCheckReport grad_check(std::span<const std::span<double>> params,
                           std::span<const std::span<const double>> analytic,
                           const std::function<double()>& loss, const GradCheckOptions& options,
                           Rng& rng);

// Whole-network check in double precision, eval mode, dense NLL loss.
GradCheckReport grad_check(const FcnModel& model, const FeatureMap& input,
                           std::span<const int> labels, const GradCheckOptions& options, Rng& rng);

}  // namespace densehar
