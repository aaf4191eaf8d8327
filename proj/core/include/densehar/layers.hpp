#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "densehar/feature_map.hpp"
#include "densehar/prob_map.hpp"

namespace densehar {

enum class Padding { kSame, kValid };
enum class Mode { kTrain, kEval };

using Rng = std::mt19937_64;

// Convolution kernel and bias for one layer. Weights are stored
// (outChannel, inChannel, kernelRow, kernelStep), row-major.
template <typename T>
struct BasicConvParams {
  std::size_t kernel_rows = 0;
  std::size_t kernel_steps = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::vector<T> weights;
  std::vector<T> biases;

  static BasicConvParams zeros(std::size_t out_channels, std::size_t in_channels,
                               std::size_t kernel_rows, std::size_t kernel_steps) {
    BasicConvParams p;
    p.kernel_rows = kernel_rows;
    p.kernel_steps = kernel_steps;
    p.in_channels = in_channels;
    p.out_channels = out_channels;
    p.weights.assign(out_channels * in_channels * kernel_rows * kernel_steps, T(0));
    p.biases.assign(out_channels, T(0));
    return p;
  }

  std::size_t fan_in() const noexcept { return in_channels * kernel_rows * kernel_steps; }
  std::size_t parameter_count() const noexcept { return weights.size() + biases.size(); }

  T& weight(std::size_t o, std::size_t c, std::size_t di, std::size_t dj) noexcept {
    return weights[((o * in_channels + c) * kernel_rows + di) * kernel_steps + dj];
  }
  const T& weight(std::size_t o, std::size_t c, std::size_t di, std::size_t dj) const noexcept {
    return weights[((o * in_channels + c) * kernel_rows + di) * kernel_steps + dj];
  }

  template <typename U>
  BasicConvParams<U> cast() const {
    BasicConvParams<U> out = BasicConvParams<U>::zeros(out_channels, in_channels, kernel_rows,
                                                       kernel_steps);
    for (std::size_t n = 0; n < weights.size(); ++n) out.weights[n] = static_cast<U>(weights[n]);
    for (std::size_t n = 0; n < biases.size(); ++n) out.biases[n] = static_cast<U>(biases[n]);
    return out;
  }

  friend bool operator==(const BasicConvParams&, const BasicConvParams&) = default;
};

using ConvParams = BasicConvParams<float>;

// Low-side padding for a same-size kernel of the given extent; the high side
// takes the remainder, so even extents pad one extra on the high side.
constexpr std::size_t same_pad_low(std::size_t extent) noexcept { return (extent - 1) / 2; }
constexpr std::size_t same_pad_high(std::size_t extent) noexcept {
  return extent - 1 - same_pad_low(extent);
}

template <typename T>
struct ConvCache {
  std::size_t in_channels = 0;
  std::size_t in_rows = 0;
  std::size_t in_steps = 0;
  std::size_t out_rows = 0;
  std::size_t out_steps = 0;
  Padding padding = Padding::kSame;
  std::vector<T> columns;  // im2col matrix, (fan_in) x (out_rows * out_steps)
};

template <typename T>
struct ConvGrads {
  BasicFeatureMap<T> input;
  std::vector<T> weights;
  std::vector<T> biases;
};

template <typename T>
BasicFeatureMap<T> conv2d_forward(const BasicFeatureMap<T>& input, const BasicConvParams<T>& params,
                                  Padding padding, ConvCache<T>* cache = nullptr);

template <typename T>
ConvGrads<T> conv2d_backward(const ConvCache<T>& cache, const BasicConvParams<T>& params,
                             const BasicFeatureMap<T>& upstream);

template <typename T>
BasicFeatureMap<T> relu(const BasicFeatureMap<T>& input);

// `forward_input` is the tensor relu() was applied to.
template <typename T>
BasicFeatureMap<T> relu_backward(const BasicFeatureMap<T>& forward_input,
                                 const BasicFeatureMap<T>& upstream);

template <typename T>
struct MaxPoolCache {
  std::size_t in_steps = 0;
  std::vector<std::uint32_t> argmax;  // source time index per output element
};

// Max over a 1 x width window along the time axis, stride 1. Same padding
// uses -inf sentinels, so padded positions never win.
template <typename T>
BasicFeatureMap<T> maxpool_time(const BasicFeatureMap<T>& input, std::size_t width,
                                Padding padding, MaxPoolCache<T>* cache = nullptr);

template <typename T>
BasicFeatureMap<T> maxpool_backward(const MaxPoolCache<T>& cache,
                                    const BasicFeatureMap<T>& upstream);

template <typename T>
struct DropoutResult {
  BasicFeatureMap<T> output;
  std::vector<T> mask;  // 0 or 1/(1-rate) per element; all ones in eval mode
};

// Inverted dropout: survivors are scaled at train time so eval is identity.
template <typename T>
DropoutResult<T> dropout(const BasicFeatureMap<T>& input, double rate, Mode mode, Rng& rng);

template <typename T>
BasicFeatureMap<T> dropout_backward(std::span<const T> mask, const BasicFeatureMap<T>& upstream);

// Column-wise softmax over channels of a rows == 1 logit map.
template <typename T>
DenseProbMap softmax_steps(const BasicFeatureMap<T>& logits);

inline constexpr double kProbabilityFloor = 1e-12;

struct NllResult {
  double loss = 0.0;
  DenseProbMap logit_grad;  // d loss / d logits, same layout as the probabilities
};

// Reshapes a (class, step) map into a classCount x 1 x steps feature map.
template <typename T>
BasicFeatureMap<T> as_logit_map(const DenseProbMap& map) {
  BasicFeatureMap<T> out(map.class_count(), 1, map.steps());
  auto src = map.values();
  auto dst = out.values();
  for (std::size_t n = 0; n < src.size(); ++n) dst[n] = static_cast<T>(src[n]);
  return out;
}

// Summed negative log-likelihood over steps, with the fused softmax gradient.
NllResult dense_nll_loss(const DenseProbMap& probs, std::span<const int> labels);

}  // namespace densehar
