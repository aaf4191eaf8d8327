#include "densehar/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace densehar {

double relative_error(double analytic, double numeric) noexcept {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport grad_check(std::span<const std::span<double>> params,
                           std::span<const std::span<const double>> analytic,
                           const std::function<double()>& loss, const GradCheckOptions& options,
                           Rng& rng) {
  require(options.epsilon > 0.0 && std::isfinite(options.epsilon), ErrorKind::kInvalidArgument,
          "grad_check: epsilon must be positive and finite");
  require(options.probes >= 1, ErrorKind::kInvalidArgument, "grad_check: probes must be >= 1");
  require(params.size() == analytic.size(), ErrorKind::kDimensionMismatch,
          "grad_check: parameter and gradient tensor counts differ");
  std::vector<std::size_t> offsets{0};
  for (std::size_t t = 0; t < params.size(); ++t) {
    require(params[t].size() == analytic[t].size(), ErrorKind::kDimensionMismatch,
            "grad_check: tensor " + std::to_string(t) + " gradient size differs");
    offsets.push_back(offsets.back() + params[t].size());
  }
  require(offsets.back() > 0, ErrorKind::kInvalidArgument, "grad_check: no parameters to probe");

  std::uniform_int_distribution<std::size_t> pick(0, offsets.back() - 1);
  GradCheckReport report;
  for (std::size_t probe = 0; probe < options.probes; ++probe) {
    const std::size_t flat = pick(rng);
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat);
    const auto t = static_cast<std::size_t>(it - offsets.begin()) - 1;
    const std::size_t e = flat - offsets[t];

    double& p = params[t][e];
    const double saved = p;
    p = saved + options.epsilon;
    const double plus = loss();
    p = saved - options.epsilon;
    const double minus = loss();
    p = saved;

    const double numeric = (plus - minus) / (2.0 * options.epsilon);
    const double err = relative_error(analytic[t][e], numeric);
    if (probe == 0 || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst = {t, e};
    }
    ++report.probed_count;
  }
  return report;
}

GradCheckReport grad_check(const FcnModel& model, const FeatureMap& input,
                           std::span<const int> labels, const GradCheckOptions& options, Rng& rng) {
  BasicFcnModel<double> probe_model = model.cast<double>();
  const BasicFeatureMap<double> x = input.cast<double>();
  Rng unused(0);

  ForwardCache<double> cache;
  const auto fwd = forward(probe_model, x, Mode::kEval, unused, &cache);
  const NllResult nll = dense_nll_loss(fwd.probs, labels);
  const BasicFcnModel<double> grads =
      backward(probe_model, cache, as_logit_map<double>(nll.logit_grad));

  const auto params = probe_model.tensors();
  const auto analytic = grads.tensors();
  auto loss = [&] {
    return dense_nll_loss(forward(probe_model, x, Mode::kEval, unused).probs, labels).loss;
  };
  return grad_check(params, analytic, loss, options, rng);
}

}  // namespace densehar
