#include "densehar/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <type_traits>

namespace densehar {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <typename Dst, typename A, typename B>
void gemm_wide(Dst&& dst, const A& a, const B& b) {
  using T = typename std::decay_t<Dst>::Scalar;
  if constexpr (std::is_same_v<T, double>) {
    dst.noalias() = a * b;
  } else {
    dst = (a.template cast<double>() * b.template cast<double>()).template cast<T>();
  }
}

std::string extents(std::size_t c, std::size_t r, std::size_t s) {
  return std::to_string(c) + "x" + std::to_string(r) + "x" + std::to_string(s);
}

void check_same_shape(std::size_t c0, std::size_t r0, std::size_t s0, std::size_t c1,
                      std::size_t r1, std::size_t s1, const char* what) {
  if (c0 != c1) fail(ErrorKind::kDimensionMismatch, std::string(what) + ": channel axis " +
                                                         extents(c0, r0, s0) + " vs " +
                                                         extents(c1, r1, s1));
  if (r0 != r1) fail(ErrorKind::kDimensionMismatch, std::string(what) + ": row axis " +
                                                         extents(c0, r0, s0) + " vs " +
                                                         extents(c1, r1, s1));
  if (s0 != s1) fail(ErrorKind::kDimensionMismatch, std::string(what) + ": step axis " +
                                                         extents(c0, r0, s0) + " vs " +
                                                         extents(c1, r1, s1));
}

template <typename T>
void im2col(const BasicFeatureMap<T>& input, std::size_t kr, std::size_t ks, std::size_t pad_r,
            std::size_t pad_s, std::size_t out_rows, std::size_t out_steps, T* columns) {
  const std::size_t in_rows = input.rows();
  const std::size_t in_steps = input.steps();
  const std::size_t plane = out_rows * out_steps;
  std::size_t row = 0;
  for (std::size_t c = 0; c < input.channels(); ++c) {
    for (std::size_t di = 0; di < kr; ++di) {
      for (std::size_t dj = 0; dj < ks; ++dj, ++row) {
        T* dst = columns + row * plane;
        // Valid output step range: 0 <= j + dj - pad_s < in_steps.
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(dj) - static_cast<std::ptrdiff_t>(pad_s);
        const std::ptrdiff_t j_lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t j_hi = std::min<std::ptrdiff_t>(
            static_cast<std::ptrdiff_t>(out_steps), static_cast<std::ptrdiff_t>(in_steps) - shift);
        for (std::size_t i = 0; i < out_rows; ++i) {
          T* out = dst + i * out_steps;
          const std::ptrdiff_t src_i =
              static_cast<std::ptrdiff_t>(i + di) - static_cast<std::ptrdiff_t>(pad_r);
          if (src_i < 0 || src_i >= static_cast<std::ptrdiff_t>(in_rows) || j_lo >= j_hi) {
            std::fill(out, out + out_steps, T(0));
            continue;
          }
          std::fill(out, out + j_lo, T(0));
          const T* src = &input(c, static_cast<std::size_t>(src_i), 0);
          std::memcpy(out + j_lo, src + (j_lo + shift), sizeof(T) * static_cast<std::size_t>(j_hi - j_lo));
          std::fill(out + j_hi, out + out_steps, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* columns, std::size_t kr, std::size_t ks, std::size_t pad_r,
                std::size_t pad_s, std::size_t out_rows, std::size_t out_steps,
                BasicFeatureMap<T>& grad) {
  const std::size_t in_rows = grad.rows();
  const std::size_t in_steps = grad.steps();
  const std::size_t plane = out_rows * out_steps;
  std::size_t row = 0;
  for (std::size_t c = 0; c < grad.channels(); ++c) {
    for (std::size_t di = 0; di < kr; ++di) {
      for (std::size_t dj = 0; dj < ks; ++dj, ++row) {
        const T* src = columns + row * plane;
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(dj) - static_cast<std::ptrdiff_t>(pad_s);
        const std::ptrdiff_t j_lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t j_hi = std::min<std::ptrdiff_t>(
            static_cast<std::ptrdiff_t>(out_steps), static_cast<std::ptrdiff_t>(in_steps) - shift);
        for (std::size_t i = 0; i < out_rows; ++i) {
          const std::ptrdiff_t src_i =
              static_cast<std::ptrdiff_t>(i + di) - static_cast<std::ptrdiff_t>(pad_r);
          if (src_i < 0 || src_i >= static_cast<std::ptrdiff_t>(in_rows)) continue;
          T* dst = &grad(c, static_cast<std::size_t>(src_i), 0);
          const T* in = src + i * out_steps;
          for (std::ptrdiff_t j = j_lo; j < j_hi; ++j) dst[j + shift] += in[j];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicFeatureMap<T> conv2d_forward(const BasicFeatureMap<T>& input, const BasicConvParams<T>& params,
                                  Padding padding, ConvCache<T>* cache) {
  if (input.channels() != params.in_channels) {
    fail(ErrorKind::kDimensionMismatch,
         "conv2d_forward: channel axis, input has " + std::to_string(input.channels()) +
             " channels but kernel expects " + std::to_string(params.in_channels));
  }
  const std::size_t kr = params.kernel_rows;
  const std::size_t ks = params.kernel_steps;
  require(kr >= 1 && ks >= 1, ErrorKind::kInvalidArgument, "conv2d_forward: empty kernel");
  std::size_t pad_r = 0, pad_s = 0, out_rows = 0, out_steps = 0;
  if (padding == Padding::kSame) {
    pad_r = same_pad_low(kr);
    pad_s = same_pad_low(ks);
    out_rows = input.rows();
    out_steps = input.steps();
  } else {
    if (input.rows() < kr) {
      fail(ErrorKind::kDimensionMismatch, "conv2d_forward: row axis, input rows " +
                                              std::to_string(input.rows()) + " < kernel rows " +
                                              std::to_string(kr));
    }
    if (input.steps() < ks) {
      fail(ErrorKind::kDimensionMismatch, "conv2d_forward: step axis, input steps " +
                                              std::to_string(input.steps()) + " < kernel steps " +
                                              std::to_string(ks));
    }
    out_rows = input.rows() - kr + 1;
    out_steps = input.steps() - ks + 1;
  }

  const std::size_t fan_in = params.fan_in();
  const std::size_t plane = out_rows * out_steps;
  std::vector<T> local;
  std::vector<T>& columns = cache ? cache->columns : local;
  columns.resize(fan_in * plane);
  im2col(input, kr, ks, pad_r, pad_s, out_rows, out_steps, columns.data());

  BasicFeatureMap<T> output(params.out_channels, out_rows, out_steps);
  ConstMatrixMap<T> w(params.weights.data(), static_cast<Eigen::Index>(params.out_channels),
                      static_cast<Eigen::Index>(fan_in));
  ConstMatrixMap<T> cols(columns.data(), static_cast<Eigen::Index>(fan_in),
                         static_cast<Eigen::Index>(plane));
  MatrixMap<T> out(output.data(), static_cast<Eigen::Index>(params.out_channels),
                   static_cast<Eigen::Index>(plane));
  if constexpr (std::is_same_v<T, double>) {
    out.noalias() = w * cols;
    for (std::size_t o = 0; o < params.out_channels; ++o) {
      out.row(static_cast<Eigen::Index>(o)).array() += params.biases[o];
    }
  } else {
    RowMatrix<double> wide = w.template cast<double>() * cols.template cast<double>();
    for (std::size_t o = 0; o < params.out_channels; ++o) {
      wide.row(static_cast<Eigen::Index>(o)).array() += static_cast<double>(params.biases[o]);
    }
    out = wide.template cast<T>();
  }

  if (cache) {
    cache->in_channels = input.channels();
    cache->in_rows = input.rows();
    cache->in_steps = input.steps();
    cache->out_rows = out_rows;
    cache->out_steps = out_steps;
    cache->padding = padding;
  }
  return output;
}

template <typename T>
ConvGrads<T> conv2d_backward(const ConvCache<T>& cache, const BasicConvParams<T>& params,
                             const BasicFeatureMap<T>& upstream) {
  check_same_shape(upstream.channels(), upstream.rows(), upstream.steps(), params.out_channels,
                   cache.out_rows, cache.out_steps, "conv2d_backward");
  require(cache.in_channels == params.in_channels, ErrorKind::kDimensionMismatch,
          "conv2d_backward: cache does not belong to these parameters");
  const std::size_t fan_in = params.fan_in();
  const std::size_t plane = cache.out_rows * cache.out_steps;
  require(cache.columns.size() == fan_in * plane, ErrorKind::kDimensionMismatch,
          "conv2d_backward: cached columns have the wrong size");

  const auto o_rows = static_cast<Eigen::Index>(params.out_channels);
  ConstMatrixMap<T> dy(upstream.data(), o_rows, static_cast<Eigen::Index>(plane));
  ConstMatrixMap<T> cols(cache.columns.data(), static_cast<Eigen::Index>(fan_in),
                         static_cast<Eigen::Index>(plane));
  ConstMatrixMap<T> w(params.weights.data(), o_rows, static_cast<Eigen::Index>(fan_in));

  ConvGrads<T> grads;
  grads.weights.resize(params.weights.size());
  MatrixMap<T> dw(grads.weights.data(), o_rows, static_cast<Eigen::Index>(fan_in));
  gemm_wide(dw, dy, cols.transpose());

  grads.biases.resize(params.out_channels);
  for (std::size_t o = 0; o < params.out_channels; ++o) {
    double sum = 0.0;
    const T* row = upstream.data() + o * plane;
    for (std::size_t p = 0; p < plane; ++p) sum += static_cast<double>(row[p]);
    grads.biases[o] = static_cast<T>(sum);
  }

  std::vector<T> dcols(fan_in * plane);
  MatrixMap<T> dc(dcols.data(), static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(plane));
  gemm_wide(dc, w.transpose(), dy);

  grads.input = BasicFeatureMap<T>(cache.in_channels, cache.in_rows, cache.in_steps);
  const bool same = cache.padding == Padding::kSame;
  col2im_add(dcols.data(), params.kernel_rows, params.kernel_steps,
             same ? same_pad_low(params.kernel_rows) : 0,
             same ? same_pad_low(params.kernel_steps) : 0, cache.out_rows, cache.out_steps,
             grads.input);
  return grads;
}

template <typename T>
BasicFeatureMap<T> relu(const BasicFeatureMap<T>& input) {
  BasicFeatureMap<T> out = input;
  for (T& v : out.values()) v = std::max(T(0), v);
  return out;
}

template <typename T>
BasicFeatureMap<T> relu_backward(const BasicFeatureMap<T>& forward_input,
                                 const BasicFeatureMap<T>& upstream) {
  check_same_shape(forward_input.channels(), forward_input.rows(), forward_input.steps(),
                   upstream.channels(), upstream.rows(), upstream.steps(), "relu_backward");
  BasicFeatureMap<T> grad = upstream;
  auto x = forward_input.values();
  auto g = grad.values();
  for (std::size_t n = 0; n < g.size(); ++n) {
    if (!(x[n] > T(0))) g[n] = T(0);
  }
  return grad;
}

template <typename T>
BasicFeatureMap<T> maxpool_time(const BasicFeatureMap<T>& input, std::size_t width,
                                Padding padding, MaxPoolCache<T>* cache) {
  require(width >= 1, ErrorKind::kInvalidArgument, "maxpool_time: width must be >= 1");
  const std::size_t in_steps = input.steps();
  std::size_t out_steps = in_steps;
  std::ptrdiff_t offset = 0;  // first source index of output step j is j + offset
  if (padding == Padding::kSame) {
    offset = -static_cast<std::ptrdiff_t>(same_pad_low(width));
  } else {
    if (in_steps < width) {
      fail(ErrorKind::kDimensionMismatch, "maxpool_time: step axis, input steps " +
                                              std::to_string(in_steps) + " < width " +
                                              std::to_string(width));
    }
    out_steps = in_steps - width + 1;
  }

  BasicFeatureMap<T> out(input.channels(), input.rows(), out_steps);
  if (cache) {
    cache->in_steps = in_steps;
    cache->argmax.resize(out.size());
  }
  const std::size_t lanes = input.channels() * input.rows();
  const auto w = static_cast<std::ptrdiff_t>(width);
  const auto n = static_cast<std::ptrdiff_t>(in_steps);
  for (std::size_t lane = 0; lane < lanes; ++lane) {
    const T* src = input.data() + lane * in_steps;
    T* dst = out.data() + lane * out_steps;
    std::uint32_t* arg = cache ? cache->argmax.data() + lane * out_steps : nullptr;
    for (std::size_t j = 0; j < out_steps; ++j) {
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(j) + offset);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, static_cast<std::ptrdiff_t>(j) + offset + w);
      std::ptrdiff_t best = lo;
      for (std::ptrdiff_t t = lo + 1; t < hi; ++t) {
        if (src[t] > src[best]) best = t;
      }
      dst[j] = src[best];
      if (arg) arg[j] = static_cast<std::uint32_t>(best);
    }
  }
  return out;
}

template <typename T>
BasicFeatureMap<T> maxpool_backward(const MaxPoolCache<T>& cache,
                                    const BasicFeatureMap<T>& upstream) {
  require(cache.argmax.size() == upstream.size(), ErrorKind::kDimensionMismatch,
          "maxpool_backward: upstream gradient does not match the cached forward shape");
  BasicFeatureMap<T> grad(upstream.channels(), upstream.rows(), cache.in_steps);
  const std::size_t lanes = upstream.channels() * upstream.rows();
  const std::size_t out_steps = upstream.steps();
  for (std::size_t lane = 0; lane < lanes; ++lane) {
    const T* g = upstream.data() + lane * out_steps;
    const std::uint32_t* arg = cache.argmax.data() + lane * out_steps;
    T* dst = grad.data() + lane * cache.in_steps;
    for (std::size_t j = 0; j < out_steps; ++j) dst[arg[j]] += g[j];
  }
  return grad;
}

template <typename T>
DropoutResult<T> dropout(const BasicFeatureMap<T>& input, double rate, Mode mode, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, ErrorKind::kInvalidArgument,
          "dropout: rate must lie in [0, 1)");
  DropoutResult<T> result{input, std::vector<T>(input.size(), T(1))};
  if (mode == Mode::kEval || rate == 0.0) return result;
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  auto out = result.output.values();
  for (std::size_t n = 0; n < out.size(); ++n) {
    const T m = uniform(rng) < rate ? T(0) : scale;
    result.mask[n] = m;
    out[n] *= m;
  }
  return result;
}

template <typename T>
BasicFeatureMap<T> dropout_backward(std::span<const T> mask, const BasicFeatureMap<T>& upstream) {
  require(mask.size() == upstream.size(), ErrorKind::kDimensionMismatch,
          "dropout_backward: mask does not match the upstream gradient");
  BasicFeatureMap<T> grad = upstream;
  auto g = grad.values();
  for (std::size_t n = 0; n < g.size(); ++n) g[n] *= mask[n];
  return grad;
}

template <typename T>
DenseProbMap softmax_steps(const BasicFeatureMap<T>& logits) {
  require(logits.rows() == 1, ErrorKind::kDimensionMismatch,
          "softmax_steps: row axis must be 1, got " + std::to_string(logits.rows()));
  const std::size_t classes = logits.channels();
  const std::size_t steps = logits.steps();
  DenseProbMap probs(classes, steps);
  for (std::size_t j = 0; j < steps; ++j) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) peak = std::max(peak, static_cast<double>(logits(c, 0, j)));
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double e = std::exp(static_cast<double>(logits(c, 0, j)) - peak);
      probs(c, j) = e;
      total += e;
    }
    for (std::size_t c = 0; c < classes; ++c) probs(c, j) /= total;
  }
  return probs;
}

NllResult dense_nll_loss(const DenseProbMap& probs, std::span<const int> labels) {
  if (labels.size() != probs.steps()) {
    fail(ErrorKind::kDimensionMismatch, "dense_nll_loss: step axis, " +
                                            std::to_string(labels.size()) + " labels for " +
                                            std::to_string(probs.steps()) + " steps");
  }
  NllResult result{0.0, probs};
  const std::size_t classes = probs.class_count();
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const int z = labels[j];
    if (z < 0 || static_cast<std::size_t>(z) >= classes) {
      fail(ErrorKind::kLabelOutOfRange, "dense_nll_loss: label " + std::to_string(z) +
                                            " at step " + std::to_string(j) +
                                            " is outside [0, " + std::to_string(classes) + ")");
    }
    const auto zc = static_cast<std::size_t>(z);
    result.loss -= std::log(std::max(probs(zc, j), kProbabilityFloor));
    result.logit_grad(zc, j) -= 1.0;
  }
  return result;
}

#define DENSEHAR_INSTANTIATE_LAYERS(T)                                                           \
  template BasicFeatureMap<T> conv2d_forward(const BasicFeatureMap<T>&,                          \
                                             const BasicConvParams<T>&, Padding, ConvCache<T>*); \
  template ConvGrads<T> conv2d_backward(const ConvCache<T>&, const BasicConvParams<T>&,          \
                                        const BasicFeatureMap<T>&);                              \
  template BasicFeatureMap<T> relu(const BasicFeatureMap<T>&);                                   \
  template BasicFeatureMap<T> relu_backward(const BasicFeatureMap<T>&, const BasicFeatureMap<T>&); \
  template BasicFeatureMap<T> maxpool_time(const BasicFeatureMap<T>&, std::size_t, Padding,      \
                                           MaxPoolCache<T>*);                                    \
  template BasicFeatureMap<T> maxpool_backward(const MaxPoolCache<T>&, const BasicFeatureMap<T>&); \
  template DropoutResult<T> dropout(const BasicFeatureMap<T>&, double, Mode, Rng&);              \
  template BasicFeatureMap<T> dropout_backward(std::span<const T>, const BasicFeatureMap<T>&);   \
  template DenseProbMap softmax_steps(const BasicFeatureMap<T>&);

DENSEHAR_INSTANTIATE_LAYERS(float)
DENSEHAR_INSTANTIATE_LAYERS(double)

#undef DENSEHAR_INSTANTIATE_LAYERS

}  // namespace densehar
