#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "densehar/grad_check.hpp"
#include "densehar/layers.hpp"
#include "support/oracles.hpp"
#include "support/random.hpp"

using namespace densehar;
using testing_support::random_conv;
using testing_support::random_map;

namespace {

double max_abs_diff(const BasicFeatureMap<double>& a, const FeatureMap& b) {
  double m = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) m = std::max(m, std::abs(a.values()[n] - b.values()[n]));
  return m;
}

}  // namespace

TEST(Conv2d, ZeroWeightsGiveBias) {
  std::mt19937_64 rng(1);
  auto p = ConvParams::zeros(4, 2, 3, 3);
  std::fill(p.biases.begin(), p.biases.end(), 0.5f);
  const auto out = conv2d_forward(random_map<float>(2, 5, 7, rng), p, Padding::kSame);
  for (float v : out.values()) EXPECT_EQ(v, 0.5f);
}

TEST(Conv2d, UnitKernelIsIdentity) {
  std::mt19937_64 rng(2);
  auto p = ConvParams::zeros(1, 1, 1, 1);
  p.weights[0] = 1.0f;
  const auto x = random_map<float>(1, 3, 9, rng);
  EXPECT_EQ(conv2d_forward(x, p, Padding::kSame), x);
  EXPECT_EQ(conv2d_forward(x, p, Padding::kValid), x);
}

TEST(Conv2d, MatchesNaiveLoopOnFixedCase) {
  std::mt19937_64 rng(3);
  const auto x = random_map<float>(2, 4, 6, rng);
  const auto p = random_conv<float>(3, 2, 3, 3, rng);
  const auto out = conv2d_forward(x, p, Padding::kSame);
  const auto ref = oracle::conv(x.cast<double>(), p.cast<double>(), true);
  ASSERT_TRUE(out.same_shape(ref.cast<float>()));
  EXPECT_LE(max_abs_diff(ref, out), 1e-6);
}

TEST(Conv2d, RandomShapesMatchNaiveLoop) {
  std::mt19937_64 rng(30);
  std::uniform_int_distribution<std::size_t> ch(1, 32), out_ch(1, 8), k(1, 5), rows(1, 10), steps(1, 40);
  for (int t = 0; t < 40; ++t) {
    const std::size_t ci = ch(rng), co = out_ch(rng), kr = k(rng), ks = k(rng), r = rows(rng), s = steps(rng);
    const bool same = t % 2 == 0 || kr > r || ks > s;
    const auto x = random_map<float>(ci, r, s, rng);
    auto p = random_conv<float>(co, ci, kr, ks, rng);
    for (float& w : p.weights) w *= static_cast<float>(std::sqrt(3.0 / static_cast<double>(p.fan_in())));
    const auto out = conv2d_forward(x, p, same ? Padding::kSame : Padding::kValid);
    const auto ref = oracle::conv(x.cast<double>(), p.cast<double>(), same);
    ASSERT_TRUE(out.same_shape(ref.cast<float>())) << "instance " << t;
    EXPECT_LE(max_abs_diff(ref, out), 1e-6) << "instance " << t;
  }
}

TEST(Conv2d, EvenKernelPadsHighSide) {
  // 1x2 kernel [a, b] at step j reads x[j], x[j+1]: low pad 0, high pad 1.
  auto p = ConvParams::zeros(1, 1, 1, 2);
  p.weights = {10.0f, 1.0f};
  FeatureMap x(1, 1, 3);
  x(0, 0, 0) = 1;
  x(0, 0, 1) = 2;
  x(0, 0, 2) = 3;
  const auto out = conv2d_forward(x, p, Padding::kSame);
  EXPECT_EQ(out(0, 0, 0), 12.0f);
  EXPECT_EQ(out(0, 0, 1), 23.0f);
  EXPECT_EQ(out(0, 0, 2), 30.0f);
}

TEST(Conv2d, ValidShapesShrink) {
  std::mt19937_64 rng(4);
  const auto p = random_conv<float>(2, 3, 5, 1, rng);
  const auto out = conv2d_forward(random_map<float>(3, 5, 11, rng), p, Padding::kValid);
  EXPECT_EQ(out.channels(), 2u);
  EXPECT_EQ(out.rows(), 1u);
  EXPECT_EQ(out.steps(), 11u);
}

TEST(Conv2d, DimensionErrorsNameTheAxis) {
  std::mt19937_64 rng(5);
  const auto p = random_conv<float>(2, 3, 3, 3, rng);
  try {
    conv2d_forward(random_map<float>(2, 4, 4, rng), p, Padding::kSame);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimensionMismatch);
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos);
  }
  try {
    conv2d_forward(random_map<float>(3, 2, 4, rng), p, Padding::kValid);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("row"), std::string::npos);
  }
  try {
    conv2d_forward(random_map<float>(3, 4, 2, rng), p, Padding::kValid);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(Conv2d, SamePaddingPreservesShapeProperty) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> ext(1, 9), ch(1, 4), k(1, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = ext(rng), steps = ext(rng), cin = ch(rng);
    const auto p = random_conv<float>(ch(rng), cin, k(rng), k(rng), rng);
    const auto out = conv2d_forward(random_map<float>(cin, rows, steps, rng), p, Padding::kSame);
    ASSERT_EQ(out.rows(), rows);
    ASSERT_EQ(out.steps(), steps);
    ASSERT_EQ(out.channels(), p.out_channels);
  }
}

TEST(Relu, Definition) {
  FeatureMap x(1, 1, 3);
  x(0, 0, 0) = -1;
  x(0, 0, 1) = 0;
  x(0, 0, 2) = 2;
  const auto y = relu(x);
  EXPECT_EQ(y(0, 0, 0), 0.0f);
  EXPECT_EQ(y(0, 0, 1), 0.0f);
  EXPECT_EQ(y(0, 0, 2), 2.0f);
}

TEST(Relu, NegativeAndNonnegativeCones) {
  std::mt19937_64 rng(7);
  const auto neg = random_map<float>(2, 3, 4, rng, -5.0, -0.1);
  const auto zeroed = relu(neg);
  for (float v : zeroed.values()) EXPECT_EQ(v, 0.0f);
  const auto pos = random_map<float>(2, 3, 4, rng, 0.0, 5.0);
  EXPECT_EQ(relu(pos), pos);
}

TEST(Relu, OutputBoundsProperty) {
  std::mt19937_64 rng(8);
  const auto x = random_map<float>(3, 4, 50, rng, -3.0, 3.0);
  const auto y = relu(x);
  for (std::size_t n = 0; n < x.size(); ++n) {
    EXPECT_GE(y.values()[n], 0.0f);
    EXPECT_EQ(y.values()[n], std::max(0.0f, x.values()[n]));
  }
}

TEST(Relu, BackwardPassesPositiveInputsUnchanged) {
  std::mt19937_64 rng(9);
  const auto x = random_map<float>(2, 2, 5, rng, 0.1, 2.0);
  const auto g = random_map<float>(2, 2, 5, rng);
  EXPECT_EQ(relu_backward(x, g), g);
}

TEST(MaxPool, MatchesWindowedMaxOracle) {
  FeatureMap x(1, 1, 8);
  const float series[] = {1, 3, 2, 0, 5, 4, -1, 6};
  std::copy(std::begin(series), std::end(series), x.data());
  const auto y = maxpool_time(x, 4, Padding::kSame);
  const auto ref = oracle::windowed_max(std::vector<double>(std::begin(series), std::end(series)), 4);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(y(0, 0, j), static_cast<float>(ref[j])) << j;
  // window for j=0 covers [-1, 3): {1, 3, 2}
  EXPECT_EQ(y(0, 0, 0), 3.0f);
  // window for j=7 covers [6, 10): {-1, 6}
  EXPECT_EQ(y(0, 0, 7), 6.0f);
}

TEST(MaxPool, RandomLanesMatchOracle) {
  std::mt19937_64 rng(10);
  for (std::size_t width : {1u, 2u, 3u, 4u, 7u}) {
    const auto x = random_map<double>(2, 3, 17, rng);
    const auto y = maxpool_time(x, width, Padding::kSame);
    for (std::size_t k = 0; k < 2; ++k) {
      for (std::size_t i = 0; i < 3; ++i) {
        std::vector<double> lane(17);
        for (std::size_t j = 0; j < 17; ++j) lane[j] = x(k, i, j);
        const auto ref = oracle::windowed_max(lane, width);
        for (std::size_t j = 0; j < 17; ++j) ASSERT_EQ(y(k, i, j), ref[j]);
      }
    }
  }
}

TEST(MaxPool, ConstantAndIdentityCases) {
  FeatureMap c(2, 2, 9, 1.25f);
  EXPECT_EQ(maxpool_time(c, 4, Padding::kSame), c);
  std::mt19937_64 rng(11);
  const auto x = random_map<float>(2, 3, 6, rng);
  EXPECT_EQ(maxpool_time(x, 1, Padding::kSame), x);
}

TEST(MaxPool, SameOutputDominatesInputProperty) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> ext(1, 40), w(1, 8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = random_map<float>(1, 2, ext(rng), rng);
    const auto y = maxpool_time(x, w(rng), Padding::kSame);
    ASSERT_TRUE(y.same_shape(x));
    for (std::size_t n = 0; n < x.size(); ++n) ASSERT_GE(y.values()[n], x.values()[n]);
  }
}

TEST(MaxPool, TiesRouteGradientToLowestIndex) {
  FeatureMap x(1, 1, 4, 2.0f);
  MaxPoolCache<float> cache;
  maxpool_time(x, 4, Padding::kSame, &cache);
  FeatureMap up(1, 1, 4, 1.0f);
  const auto g = maxpool_backward(cache, up);
  // windows: j=0 [0,3) j=1 [0,4) j=2 [1,4) j=3 [2,4): argmins of index 0,0,1,2
  EXPECT_EQ(g(0, 0, 0), 2.0f);
  EXPECT_EQ(g(0, 0, 1), 1.0f);
  EXPECT_EQ(g(0, 0, 2), 1.0f);
  EXPECT_EQ(g(0, 0, 3), 0.0f);
}

TEST(Dropout, ZeroRateAndEvalAreIdentity) {
  std::mt19937_64 data(13);
  const auto x = random_map<float>(2, 3, 10, data);
  Rng rng(1);
  EXPECT_EQ(dropout(x, 0.0, Mode::kTrain, rng).output, x);
  EXPECT_EQ(dropout(x, 0.0, Mode::kEval, rng).output, x);
  EXPECT_EQ(dropout(x, 0.7, Mode::kEval, rng).output, x);
}

TEST(Dropout, InvertedScalingPreservesMean) {
  FeatureMap ones(1, 1, 100000, 1.0f);
  Rng rng(2024);
  const auto r = dropout(ones, 0.5, Mode::kTrain, rng);
  const double mean = std::accumulate(r.output.values().begin(), r.output.values().end(), 0.0) / 1e5;
  EXPECT_NEAR(mean, 1.0, 0.02);
  for (float v : r.output.values()) EXPECT_TRUE(v == 0.0f || v == 2.0f);
}

TEST(Dropout, SameSeedSameMask) {
  std::mt19937_64 data(14);
  const auto x = random_map<float>(2, 3, 40, data);
  Rng a(9), b(9);
  EXPECT_EQ(dropout(x, 0.3, Mode::kTrain, a).mask, dropout(x, 0.3, Mode::kTrain, b).mask);
}

TEST(Dropout, RejectsRateOfOne) {
  FeatureMap x(1, 1, 2);
  Rng rng(1);
  EXPECT_THROW(dropout(x, 1.0, Mode::kTrain, rng), Error);
}

TEST(Softmax, UniformForEqualLogits) {
  FeatureMap logits(5, 1, 3, 0.7f);
  const auto p = softmax_steps(logits);
  for (double v : p.values()) EXPECT_NEAR(v, 0.2, 1e-12);
}

TEST(Softmax, ClosedForm) {
  BasicFeatureMap<double> logits(2, 1, 1);
  logits(1, 0, 0) = std::log(3.0);
  const auto p = softmax_steps(logits);
  EXPECT_NEAR(p(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(p(1, 0), 0.75, 1e-12);
}

TEST(Softmax, ShiftInvariantPerStep) {
  std::mt19937_64 rng(15);
  auto logits = random_map<double>(4, 1, 6, rng, -3, 3);
  const auto before = softmax_steps(logits);
  for (std::size_t c = 0; c < 4; ++c) logits(c, 0, 2) += 17.0;
  const auto after = softmax_steps(logits);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(after(c, 2), before(c, 2), 1e-7);
}

TEST(Softmax, ColumnsAreDistributionsProperty) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = softmax_steps(random_map<float>(7, 1, 20, rng, -50, 50));
    for (std::size_t j = 0; j < p.steps(); ++j) {
      ASSERT_NEAR(p.column_sum(j), 1.0, 1e-6);
      for (std::size_t c = 0; c < 7; ++c) ASSERT_TRUE(p(c, j) >= 0.0 && p(c, j) <= 1.0);
    }
  }
}

TEST(Softmax, RequiresSingleRow) {
  FeatureMap logits(3, 2, 4);
  EXPECT_THROW(softmax_steps(logits), Error);
}

TEST(DenseNll, PerfectPredictionsCostNothing) {
  DenseProbMap p(3, 4);
  const std::vector<int> z{0, 2, 1, 1};
  for (std::size_t j = 0; j < 4; ++j) p(static_cast<std::size_t>(z[j]), j) = 1.0;
  EXPECT_LE(dense_nll_loss(p, z).loss, 4 * 1e-11);
}

TEST(DenseNll, UniformPredictions) {
  DenseProbMap p(4, 9, 0.25);
  const std::vector<int> z(9, 3);
  EXPECT_NEAR(dense_nll_loss(p, z).loss, 9 * std::log(4.0), 1e-12);
}

TEST(DenseNll, MatchesDirectSummation) {
  std::mt19937_64 rng(17);
  const auto p = softmax_steps(random_map<double>(3, 1, 5, rng, -2, 2));
  const auto z = testing_support::random_labels(5, 3, rng);
  EXPECT_NEAR(dense_nll_loss(p, z).loss, oracle::nll(p, z), 1e-6);
}

TEST(DenseNll, AdditiveOverTime) {
  std::mt19937_64 rng(18);
  const auto a = softmax_steps(random_map<double>(3, 1, 7, rng, -2, 2));
  const auto b = softmax_steps(random_map<double>(3, 1, 4, rng, -2, 2));
  const auto za = testing_support::random_labels(7, 3, rng);
  const auto zb = testing_support::random_labels(4, 3, rng);
  DenseProbMap ab(3, 11);
  std::vector<int> zab = za;
  zab.insert(zab.end(), zb.begin(), zb.end());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t j = 0; j < 7; ++j) ab(c, j) = a(c, j);
    for (std::size_t j = 0; j < 4; ++j) ab(c, 7 + j) = b(c, j);
  }
  EXPECT_NEAR(dense_nll_loss(ab, zab).loss, dense_nll_loss(a, za).loss + dense_nll_loss(b, zb).loss,
              1e-12);
}

TEST(DenseNll, OutOfRangeLabelNamesStep) {
  DenseProbMap p(3, 4, 1.0 / 3);
  const std::vector<int> z{0, 1, 3, 0};
  try {
    dense_nll_loss(p, z);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kLabelOutOfRange);
    EXPECT_NE(std::string(e.what()).find("step 2"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Backward passes against central differences. Each check uses the scalar
// loss sum(r * layer(x)) with a fixed random r, so upstream = r.

namespace {

constexpr double kEps = 1e-3;
constexpr std::size_t kProbes = 128;

GradCheckReport check(std::vector<std::span<double>> params,
                      std::vector<std::span<const double>> analytic, const std::function<double()>& loss,
                      std::uint64_t seed) {
  Rng rng(seed);
  return grad_check(params, analytic, loss, {kEps, kProbes}, rng);
}

double dot(const BasicFeatureMap<double>& a, const BasicFeatureMap<double>& b) {
  double s = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) s += a.values()[n] * b.values()[n];
  return s;
}

// Values spaced 0.01 apart (> 2 eps) in random order, so a probe never moves
// an input across a max-pool switch or a ReLU kink.
BasicFeatureMap<double> separated_map(std::size_t c, std::size_t r, std::size_t s, std::mt19937_64& rng) {
  BasicFeatureMap<double> m(c, r, s);
  std::vector<double> levels(m.size());
  for (std::size_t n = 0; n < levels.size(); ++n) {
    levels[n] = (static_cast<double>(n) - static_cast<double>(levels.size()) / 2.0 + 0.5) * 0.01;
  }
  std::shuffle(levels.begin(), levels.end(), rng);
  std::copy(levels.begin(), levels.end(), m.values().begin());
  return m;
}

}  // namespace

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(19);
  const auto x = random_map<float>(2, 3, 5, rng);
  const auto p = random_conv<float>(3, 2, 3, 3, rng);
  ConvCache<float> cache;
  const auto y = conv2d_forward(x, p, Padding::kSame, &cache);
  const auto g = conv2d_backward(cache, p, FeatureMap(3, 3, 5));
  for (float v : g.input.values()) EXPECT_EQ(v, 0.0f);
  for (float v : g.weights) EXPECT_EQ(v, 0.0f);
  for (float v : g.biases) EXPECT_EQ(v, 0.0f);

  MaxPoolCache<float> pc;
  maxpool_time(y, 4, Padding::kSame, &pc);
  const auto pool_grad = maxpool_backward(pc, FeatureMap(3, 3, 5));
  for (float v : pool_grad.values()) EXPECT_EQ(v, 0.0f);
  const auto relu_grad = relu_backward(y, FeatureMap(3, 3, 5));
  for (float v : relu_grad.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Backward, ConvMatchesFiniteDifferences) {
  std::mt19937_64 rng(20);
  for (Padding pad : {Padding::kSame, Padding::kValid}) {
    auto x = random_map<double>(2, 4, 7, rng);
    auto p = random_conv<double>(3, 2, 3, 2, rng);
    ConvCache<double> cache;
    const auto y = conv2d_forward(x, p, pad, &cache);
    const auto r = random_map<double>(y.channels(), y.rows(), y.steps(), rng);
    const auto g = conv2d_backward(cache, p, r);
    auto loss = [&] { return dot(conv2d_forward(x, p, pad), r); };
    const auto report = check({x.values(), std::span<double>(p.weights), std::span<double>(p.biases)},
                              {g.input.values(), std::span<const double>(g.weights),
                               std::span<const double>(g.biases)},
                              loss, 1);
    EXPECT_EQ(report.probed_count, kProbes);
    EXPECT_LT(report.max_relative_error, 1e-3);
  }
}

TEST(Backward, ReluMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  auto x = separated_map(2, 3, 20, rng);
  const auto r = random_map<double>(2, 3, 20, rng);
  const auto g = relu_backward(x, r);
  auto loss = [&] { return dot(relu(x), r); };
  const auto report = check({x.values()}, {g.values()}, loss, 2);
  EXPECT_LT(report.max_relative_error, 1e-3);
}

TEST(Backward, MaxPoolMatchesFiniteDifferences) {
  std::mt19937_64 rng(22);
  auto x = separated_map(2, 3, 20, rng);
  const auto r = random_map<double>(2, 3, 20, rng);
  MaxPoolCache<double> cache;
  maxpool_time(x, 4, Padding::kSame, &cache);
  const auto g = maxpool_backward(cache, r);
  auto loss = [&] { return dot(maxpool_time(x, 4, Padding::kSame), r); };
  const auto report = check({x.values()}, {g.values()}, loss, 3);
  EXPECT_LT(report.max_relative_error, 1e-3);
}

TEST(Backward, DropoutMatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  auto x = random_map<double>(2, 3, 20, rng);
  const auto r = random_map<double>(2, 3, 20, rng);
  Rng drop(77);
  const auto mask = dropout(x, 0.4, Mode::kTrain, drop).mask;
  const auto g = dropout_backward<double>(mask, r);
  auto loss = [&] {
    Rng again(77);
    return dot(dropout(x, 0.4, Mode::kTrain, again).output, r);
  };
  const auto report = check({x.values()}, {g.values()}, loss, 4);
  EXPECT_LT(report.max_relative_error, 1e-3);
}

TEST(Backward, SoftmaxNllMatchesFiniteDifferences) {
  std::mt19937_64 rng(24);
  auto logits = random_map<double>(4, 1, 12, rng, -2, 2);
  const auto z = testing_support::random_labels(12, 4, rng);
  const auto nll = dense_nll_loss(softmax_steps(logits), z);
  const auto g = as_logit_map<double>(nll.logit_grad);
  auto loss = [&] { return dense_nll_loss(softmax_steps(logits), z).loss; };
  const auto report = check({logits.values()}, {g.values()}, loss, 5);
  EXPECT_LT(report.max_relative_error, 1e-3);
}

TEST(Backward, ShapeMismatchIsRejected) {
  std::mt19937_64 rng(25);
  const auto x = random_map<float>(2, 3, 5, rng);
  const auto p = random_conv<float>(3, 2, 3, 3, rng);
  ConvCache<float> cache;
  conv2d_forward(x, p, Padding::kSame, &cache);
  EXPECT_THROW(conv2d_backward(cache, p, FeatureMap(3, 3, 6)), Error);
  EXPECT_THROW(relu_backward(x, FeatureMap(2, 3, 4)), Error);
  std::vector<float> mask(3, 1.0f);
  EXPECT_THROW(dropout_backward<float>(mask, x), Error);
}

TEST(Determinism, ForwardOpsAreRepeatable) {
  std::mt19937_64 rng(26);
  const auto x = random_map<float>(3, 4, 30, rng);
  const auto p = random_conv<float>(2, 3, 3, 3, rng);
  EXPECT_EQ(conv2d_forward(x, p, Padding::kSame), conv2d_forward(x, p, Padding::kSame));
  EXPECT_EQ(maxpool_time(x, 4, Padding::kSame), maxpool_time(x, 4, Padding::kSame));
  EXPECT_EQ(softmax_steps(conv2d_forward(x, random_conv<float>(3, 3, 4, 1, rng), Padding::kValid)).steps(), 30u);
}
