#include <gtest/gtest.h>

#include <filesystem>

#include "densehar/grad_check.hpp"
#include "densehar/model.hpp"
#include "support/random.hpp"

using namespace densehar;
using testing_support::random_map;

namespace {

ArchConfig small_config(std::size_t rows, std::size_t classes) {
  ArchConfig c;
  c.input_rows = rows;
  c.class_count = classes;
  return c;
}

FcnModel random_model(const ArchConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  FcnModel m = build_fcn(c, InitScheme::kHeNormal, rng);
  // Nonzero biases so every parameter tensor carries information.
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& b : m.blocks)
    for (float& v : b.biases) v = static_cast<float>(u(rng));
  for (float& v : m.head.biases) v = static_cast<float>(u(rng));
  return m;
}

}  // namespace

TEST(BuildFcn, DefaultArchitectureTensorSizes) {
  Rng rng(1);
  const FcnModel m = build_fcn(small_config(113, 5), InitScheme::kHeNormal, rng);
  ASSERT_EQ(m.blocks.size(), 6u);
  EXPECT_EQ(m.blocks[0].weights.size(), 3u * 3u * 1u * 32u);
  for (std::size_t l = 1; l < 6; ++l) EXPECT_EQ(m.blocks[l].weights.size(), 3u * 3u * 32u * 32u);
  EXPECT_EQ(m.head.weights.size(), 113u * 1u * 32u * 5u);
  EXPECT_EQ(m.head.kernel_rows, 113u);
  EXPECT_EQ(m.head.kernel_steps, 1u);
  EXPECT_EQ(m.blocks[0].in_channels, 1u);
  EXPECT_EQ(m.blocks[3].in_channels, 32u);
}

TEST(BuildFcn, MinimalParameterCount) {
  ArchConfig c = small_config(1, 2);
  c.block_count = 1;
  c.conv_kernel_rows = 1;
  c.conv_kernel_steps = 1;
  Rng rng(2);
  const FcnModel m = build_fcn(c, InitScheme::kHeNormal, rng);
  EXPECT_EQ(m.parameter_count(), 1u * 1u * 1u * 32u + 32u + 1u * 1u * 32u * 2u + 2u);
  EXPECT_EQ(expected_parameter_count(c), 130u);
}

TEST(BuildFcn, ParameterCountFormulaProperty) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> small(1, 6), classes(2, 7);
  for (int trial = 0; trial < 50; ++trial) {
    ArchConfig c;
    c.input_rows = small(rng);
    c.class_count = classes(rng);
    c.block_count = small(rng);
    c.conv_kernel_rows = small(rng);
    c.conv_kernel_steps = small(rng);
    c.filters_per_block = small(rng);
    c.pool_width = small(rng);
    Rng init(trial);
    ASSERT_EQ(build_fcn(c, InitScheme::kGlorotUniform, init).parameter_count(),
              expected_parameter_count(c));
  }
}

TEST(BuildFcn, SameSeedIsBitwiseIdentical) {
  Rng a(42), b(42), c(43);
  const auto cfg = small_config(6, 3);
  EXPECT_EQ(build_fcn(cfg, InitScheme::kHeNormal, a), build_fcn(cfg, InitScheme::kHeNormal, b));
  Rng a2(42);
  EXPECT_NE(build_fcn(cfg, InitScheme::kHeNormal, a2), build_fcn(cfg, InitScheme::kHeNormal, c));
}

TEST(BuildFcn, RejectsInvalidConfig) {
  Rng rng(1);
  ArchConfig c = small_config(4, 1);
  EXPECT_THROW(build_fcn(c, InitScheme::kHeNormal, rng), Error);
  c = small_config(0, 3);
  EXPECT_THROW(build_fcn(c, InitScheme::kHeNormal, rng), Error);
}

TEST(ReceptiveFieldTest, DefaultArchitecture) {
  // per block: conv 3 reaches 1 back / 1 ahead, pool 4 reaches 1 back / 2 ahead
  const auto rf = receptive_field(small_config(6, 3));
  EXPECT_EQ(rf.before, 12u);
  EXPECT_EQ(rf.after, 18u);
  EXPECT_EQ(rf.radius(), 18u);
}

TEST(Forward, OpportunityShapedInput) {
  const FcnModel m = random_model(small_config(113, 5), 4);
  std::mt19937_64 rng(5);
  const auto probs = predict_probs(m, random_map<float>(1, 113, 100, rng, 0, 1));
  ASSERT_EQ(probs.class_count(), 5u);
  ASSERT_EQ(probs.steps(), 100u);
  for (std::size_t j = 0; j < 100; ++j) EXPECT_NEAR(probs.column_sum(j), 1.0, 1e-6);
}

TEST(Forward, SingleSample) {
  const FcnModel m = random_model(small_config(4, 3), 6);
  std::mt19937_64 rng(7);
  const auto probs = predict_probs(m, random_map<float>(1, 4, 1, rng, 0, 1));
  EXPECT_EQ(probs.class_count(), 3u);
  EXPECT_EQ(probs.steps(), 1u);
}

TEST(Forward, ArbitraryLengthProperty) {
  const FcnModel m = random_model(small_config(3, 4), 8);
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> len(1, 512);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t t = trial == 0 ? 1 : (trial == 1 ? 512 : len(rng));
    const auto probs = predict_probs(m, random_map<float>(1, 3, t, rng, 0, 1));
    ASSERT_EQ(probs.steps(), t);
    for (std::size_t j = 0; j < t; ++j) {
      ASSERT_NEAR(probs.column_sum(j), 1.0, 1e-6);
      for (std::size_t c = 0; c < 4; ++c) ASSERT_GE(probs(c, j), 0.0);
    }
  }
}

TEST(Forward, RowMismatchIsStructuredError) {
  const FcnModel m = random_model(small_config(4, 3), 10);
  std::mt19937_64 rng(11);
  try {
    predict_probs(m, random_map<float>(1, 5, 8, rng));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimensionMismatch);
    EXPECT_NE(std::string(e.what()).find("row"), std::string::npos);
  }
}

TEST(Forward, EvalModeIsPure) {
  const FcnModel m = random_model(small_config(4, 3), 12);
  std::mt19937_64 rng(13);
  const auto x = random_map<float>(1, 4, 77, rng, 0, 1);
  Rng r1(1), r2(999);
  EXPECT_EQ(forward(m, x, Mode::kEval, r1).probs, forward(m, x, Mode::kEval, r2).probs);
}

TEST(Forward, TrainModeDropoutDependsOnSeed) {
  const FcnModel m = random_model(small_config(4, 3), 14);
  std::mt19937_64 rng(15);
  const auto x = random_map<float>(1, 4, 30, rng, 0, 1);
  Rng a(5), b(5), c(6);
  const auto pa = forward(m, x, Mode::kTrain, a).probs;
  EXPECT_EQ(pa, forward(m, x, Mode::kTrain, b).probs);
  EXPECT_NE(pa, forward(m, x, Mode::kTrain, c).probs);
}

TEST(Forward, SeamLocality) {
  const ArchConfig cfg = small_config(5, 3);
  const FcnModel m = random_model(cfg, 16);
  const std::size_t radius = receptive_field(cfg).radius();
  std::mt19937_64 rng(17);
  const auto a = random_map<float>(1, 5, 90, rng, 0, 1);
  const auto b = random_map<float>(1, 5, 70, rng, 0, 1);
  FeatureMap ab(1, 5, 160);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 90; ++j) ab(0, i, j) = a(0, i, j);
    for (std::size_t j = 0; j < 70; ++j) ab(0, i, 90 + j) = b(0, i, j);
  }
  const auto pa = predict_probs(m, a), pb = predict_probs(m, b), pab = predict_probs(m, ab);
  std::size_t compared = 0;
  for (std::size_t j = 0; j < 160; ++j) {
    const std::size_t seam_distance = j < 90 ? 89 - j : j - 90;
    if (seam_distance <= radius) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      const double expected = j < 90 ? pa(c, j) : pb(c, j - 90);
      ASSERT_NEAR(pab(c, j), expected, 1e-5) << "step " << j;
    }
    ++compared;
  }
  EXPECT_GT(compared, 100u);
}

TEST(Forward, TranslationCovarianceAwayFromBoundaries) {
  const ArchConfig cfg = small_config(4, 3);
  const FcnModel m = random_model(cfg, 18);
  const std::size_t radius = receptive_field(cfg).radius();
  std::mt19937_64 rng(19);
  const auto x = random_map<float>(1, 4, 200, rng, 0, 1);
  const auto base = predict_probs(m, x);
  for (std::size_t shift : {1u, 7u, 33u}) {
    FeatureMap shifted(1, 4, 200 - shift);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 200 - shift; ++j) shifted(0, i, j) = x(0, i, j + shift);
    const auto p = predict_probs(m, shifted);
    for (std::size_t j = radius; j + radius < p.steps(); ++j) {
      for (std::size_t c = 0; c < 3; ++c) ASSERT_NEAR(p(c, j), base(c, j + shift), 1e-5);
    }
  }
}

TEST(Serialization, RoundtripIsBitwise) {
  const FcnModel m = random_model(small_config(6, 4), 20);
  const auto path = std::filesystem::temp_directory_path() / "densehar_model_roundtrip.bin";
  save_model(m, path);
  const FcnModel loaded = load_model(path);
  EXPECT_EQ(loaded, m);
  std::mt19937_64 rng(21);
  const auto x = random_map<float>(1, 6, 64, rng, 0, 1);
  EXPECT_EQ(predict_probs(loaded, x), predict_probs(m, x));
  EXPECT_EQ(std::filesystem::file_size(path), kModelHeaderBytes + 4 * m.parameter_count());
  std::filesystem::remove(path);
}

TEST(Serialization, HeaderLayout) {
  ArchConfig c = small_config(7, 3);
  c.block_count = 2;
  c.filters_per_block = 4;
  Rng rng(1);
  const auto bytes = serialize_model(build_fcn(c, InitScheme::kHeNormal, rng));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "DHFCNMDL");
  EXPECT_EQ(bytes[8], 1u);  // version, little-endian
  EXPECT_EQ(bytes[12], 7u);
  EXPECT_EQ(bytes[16], 3u);
  EXPECT_EQ(bytes[20], 2u);
  EXPECT_EQ(bytes[32], 4u);
  EXPECT_EQ(bytes[36], 4u);  // pool width
  // 0.5f = 0x3F000000
  EXPECT_EQ(bytes[40], 0x00);
  EXPECT_EQ(bytes[43], 0x3F);
}

TEST(Serialization, TruncatedFile) {
  const auto bytes = serialize_model(random_model(small_config(3, 2), 22));
  for (std::size_t keep : {std::size_t{0}, std::size_t{5}, std::size_t{10}, std::size_t{30},
                           bytes.size() - 1}) {
    try {
      deserialize_model(std::span(bytes).first(keep));
      FAIL() << keep;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kTruncated) << keep;
      EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
    }
  }
}

TEST(Serialization, BadMagicAndVersion) {
  auto bytes = serialize_model(random_model(small_config(3, 2), 23));
  auto wrong = bytes;
  wrong[0] = 'X';
  try {
    deserialize_model(wrong);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBadMagic);
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }
  wrong = bytes;
  wrong[8] = 2;
  try {
    deserialize_model(wrong);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kVersionMismatch);
  }
  wrong = bytes;
  wrong.push_back(0);
  try {
    deserialize_model(wrong);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
}

TEST(Serialization, MissingFileIsIoError) {
  try {
    load_model("/nonexistent/model.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

TEST(GradCheck, LinearUnitKernelLayer) {
  std::mt19937_64 data(24);
  auto p = testing_support::random_conv<double>(3, 5, 1, 1, data);
  const auto x = random_map<double>(5, 1, 16, data);
  const auto z = testing_support::random_labels(16, 3, data);
  ConvCache<double> cache;
  const auto logits = conv2d_forward(x, p, Padding::kSame, &cache);
  const auto nll = dense_nll_loss(softmax_steps(logits), z);
  const auto g = conv2d_backward(cache, p, as_logit_map<double>(nll.logit_grad));
  std::vector<std::span<double>> params{p.weights, p.biases};
  std::vector<std::span<const double>> analytic{g.weights, g.biases};
  Rng rng(1);
  const auto report = grad_check(
      params, analytic,
      [&] { return dense_nll_loss(softmax_steps(conv2d_forward(x, p, Padding::kSame)), z).loss; },
      {1e-3, 18}, rng);
  EXPECT_LT(report.max_relative_error, 1e-4);
}

TEST(GradCheck, FullArchitectureToySize) {
  const FcnModel m = random_model(small_config(4, 3), 25);
  std::mt19937_64 data(26);
  const auto x = random_map<float>(1, 4, 12, data, 0, 1);
  const auto z = testing_support::random_labels(12, 3, data);
  Rng rng(2);
  const auto report = grad_check(m, x, z, {1e-5, 200}, rng);
  EXPECT_EQ(report.probed_count, 200u);
  EXPECT_LT(report.max_relative_error, 1e-3)
      << "worst tensor " << report.worst.tensor << " element " << report.worst.element;
}

TEST(GradCheck, ZeroEpsilonRejected) {
  const FcnModel m = random_model(small_config(2, 2), 27);
  std::mt19937_64 data(28);
  const auto x = random_map<float>(1, 2, 5, data);
  const std::vector<int> z(5, 1);
  Rng rng(3);
  EXPECT_THROW(grad_check(m, x, z, {0.0, 10}, rng), Error);
  EXPECT_THROW(grad_check(m, x, z, {1e-3, 0}, rng), Error);
}

TEST(GradCheck, RelativeErrorDefinition) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-10), 1e-2);
}
