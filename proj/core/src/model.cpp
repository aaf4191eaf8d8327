#include "densehar/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

namespace densehar {

void ArchConfig::validate() const {
  require(input_rows >= 1, ErrorKind::kInvalidArgument, "arch: inputRows must be >= 1");
  require(class_count >= 2, ErrorKind::kInvalidArgument, "arch: classCount must be >= 2");
  require(block_count >= 1, ErrorKind::kInvalidArgument, "arch: blockCount must be >= 1");
  require(filters_per_block >= 1, ErrorKind::kInvalidArgument,
          "arch: filtersPerBlock must be >= 1");
  require(conv_kernel_rows >= 1 && conv_kernel_steps >= 1, ErrorKind::kInvalidArgument,
          "arch: conv kernel extents must be >= 1");
  require(pool_width >= 1, ErrorKind::kInvalidArgument, "arch: poolWidth must be >= 1");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorKind::kInvalidArgument,
          "arch: dropoutRate must lie in [0, 1)");
}

ReceptiveField receptive_field(const ArchConfig& config) {
  const std::size_t before = same_pad_low(config.conv_kernel_steps) + same_pad_low(config.pool_width);
  const std::size_t after = same_pad_high(config.conv_kernel_steps) + same_pad_high(config.pool_width);
  return {config.block_count * before, config.block_count * after};
}

std::size_t expected_parameter_count(const ArchConfig& config) {
  const std::size_t k = config.conv_kernel_rows * config.conv_kernel_steps;
  const std::size_t f = config.filters_per_block;
  std::size_t total = k * 1 * f + f;
  total += (config.block_count - 1) * (k * f * f + f);
  total += config.input_rows * f * config.class_count + config.class_count;
  return total;
}

template <typename T>
BasicFcnModel<T> BasicFcnModel<T>::zeros(const ArchConfig& config) {
  config.validate();
  BasicFcnModel model;
  model.config = config;
  model.blocks.reserve(config.block_count);
  for (std::size_t l = 0; l < config.block_count; ++l) {
    model.blocks.push_back(BasicConvParams<T>::zeros(config.filters_per_block,
                                                     l == 0 ? 1 : config.filters_per_block,
                                                     config.conv_kernel_rows,
                                                     config.conv_kernel_steps));
  }
  model.head = BasicConvParams<T>::zeros(config.class_count, config.filters_per_block,
                                         config.input_rows, 1);
  return model;
}

template <typename T>
std::size_t BasicFcnModel<T>::parameter_count() const noexcept {
  std::size_t total = head.parameter_count();
  for (const auto& b : blocks) total += b.parameter_count();
  return total;
}

template <typename T>
std::vector<std::span<T>> BasicFcnModel<T>::tensors() {
  std::vector<std::span<T>> out;
  for (auto& b : blocks) {
    out.emplace_back(b.weights);
    out.emplace_back(b.biases);
  }
  out.emplace_back(head.weights);
  out.emplace_back(head.biases);
  return out;
}

template <typename T>
std::vector<std::span<const T>> BasicFcnModel<T>::tensors() const {
  std::vector<std::span<const T>> out;
  for (const auto& b : blocks) {
    out.emplace_back(b.weights);
    out.emplace_back(b.biases);
  }
  out.emplace_back(head.weights);
  out.emplace_back(head.biases);
  return out;
}

namespace {

void initialize(ConvParams& p, InitScheme init, Rng& rng) {
  const double fan_in = static_cast<double>(p.fan_in());
  if (init == InitScheme::kHeNormal) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    for (float& w : p.weights) w = static_cast<float>(normal(rng));
  } else {
    const double fan_out = static_cast<double>(p.out_channels * p.kernel_rows * p.kernel_steps);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> uniform(-a, a);
    for (float& w : p.weights) w = static_cast<float>(uniform(rng));
  }
}

}  // namespace

FcnModel build_fcn(const ArchConfig& config, InitScheme init, Rng& rng) {
  FcnModel model = FcnModel::zeros(config);
  for (auto& b : model.blocks) initialize(b, init, rng);
  initialize(model.head, init, rng);
  return model;
}

template <typename T>
ForwardResult<T> forward(const BasicFcnModel<T>& model, const BasicFeatureMap<T>& input, Mode mode,
                         Rng& rng, ForwardCache<T>* cache) {
  const ArchConfig& cfg = model.config;
  if (input.channels() != 1) {
    fail(ErrorKind::kDimensionMismatch,
         "forward: channel axis, expected 1 input channel, got " + std::to_string(input.channels()));
  }
  if (input.rows() != cfg.input_rows) {
    fail(ErrorKind::kDimensionMismatch, "forward: row axis, model expects " +
                                            std::to_string(cfg.input_rows) + " rows, got " +
                                            std::to_string(input.rows()));
  }
  if (cache) cache->blocks.resize(model.blocks.size());

  BasicFeatureMap<T> x = input;
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    auto* bc = cache ? &cache->blocks[l] : nullptr;
    BasicFeatureMap<T> a = conv2d_forward(x, model.blocks[l], Padding::kSame, bc ? &bc->conv : nullptr);
    BasicFeatureMap<T> r = relu(a);
    if (bc) bc->pre_activation = std::move(a);
    x = maxpool_time(r, cfg.pool_width, Padding::kSame, bc ? &bc->pool : nullptr);
  }
  if (mode == Mode::kTrain && cfg.dropout_rate > 0.0) {
    DropoutResult<T> d = dropout(x, cfg.dropout_rate, mode, rng);
    x = std::move(d.output);
    if (cache) cache->dropout_mask = std::move(d.mask);
  } else if (cache) {
    cache->dropout_mask.assign(x.size(), T(1));
  }

  ForwardResult<T> result;
  result.logits = conv2d_forward(x, model.head, Padding::kValid, cache ? &cache->head : nullptr);
  result.probs = softmax_steps(result.logits);
  return result;
}

template <typename T>
DenseProbMap predict_probs(const BasicFcnModel<T>& model, const BasicFeatureMap<T>& input) {
  Rng unused(0);
  return forward(model, input, Mode::kEval, unused).probs;
}

template <typename T>
BasicFcnModel<T> backward(const BasicFcnModel<T>& model, const ForwardCache<T>& cache,
                          const BasicFeatureMap<T>& logit_grad) {
  require(cache.blocks.size() == model.blocks.size(), ErrorKind::kDimensionMismatch,
          "backward: cache holds " + std::to_string(cache.blocks.size()) + " blocks, model has " +
              std::to_string(model.blocks.size()));
  BasicFcnModel<T> grads;
  grads.config = model.config;
  grads.blocks.resize(model.blocks.size());

  ConvGrads<T> head = conv2d_backward(cache.head, model.head, logit_grad);
  grads.head = BasicConvParams<T>::zeros(model.head.out_channels, model.head.in_channels,
                                         model.head.kernel_rows, model.head.kernel_steps);
  grads.head.weights = std::move(head.weights);
  grads.head.biases = std::move(head.biases);

  BasicFeatureMap<T> g = dropout_backward<T>(cache.dropout_mask, head.input);
  for (std::size_t l = model.blocks.size(); l-- > 0;) {
    const auto& bc = cache.blocks[l];
    g = maxpool_backward(bc.pool, g);
    g = relu_backward(bc.pre_activation, g);
    ConvGrads<T> cg = conv2d_backward(bc.conv, model.blocks[l], g);
    const auto& p = model.blocks[l];
    grads.blocks[l] = BasicConvParams<T>::zeros(p.out_channels, p.in_channels, p.kernel_rows,
                                                p.kernel_steps);
    grads.blocks[l].weights = std::move(cg.weights);
    grads.blocks[l].biases = std::move(cg.biases);
    g = std::move(cg.input);
  }
  return grads;
}

template <typename T>
void add_scaled(BasicFcnModel<T>& target, const BasicFcnModel<T>& delta, T scale) {
  auto dst = target.tensors();
  auto src = delta.tensors();
  require(dst.size() == src.size(), ErrorKind::kDimensionMismatch,
          "add_scaled: models have different tensor counts");
  for (std::size_t t = 0; t < dst.size(); ++t) {
    require(dst[t].size() == src[t].size(), ErrorKind::kDimensionMismatch,
            "add_scaled: tensor " + std::to_string(t) + " sizes differ");
    for (std::size_t n = 0; n < dst[t].size(); ++n) dst[t][n] += scale * src[t][n];
  }
}

template struct BasicFcnModel<float>;
template struct BasicFcnModel<double>;

#define DENSEHAR_INSTANTIATE_MODEL(T)                                                          \
  template ForwardResult<T> forward(const BasicFcnModel<T>&, const BasicFeatureMap<T>&, Mode,  \
                                    Rng&, ForwardCache<T>*);                                   \
  template DenseProbMap predict_probs(const BasicFcnModel<T>&, const BasicFeatureMap<T>&);     \
  template BasicFcnModel<T> backward(const BasicFcnModel<T>&, const ForwardCache<T>&,          \
                                     const BasicFeatureMap<T>&);                               \
  template void add_scaled(BasicFcnModel<T>&, const BasicFcnModel<T>&, T);

DENSEHAR_INSTANTIATE_MODEL(float)
DENSEHAR_INSTANTIATE_MODEL(double)

#undef DENSEHAR_INSTANTIATE_MODEL

// ---------------------------------------------------------------------------
// Binary model format; see MODEL_FORMAT.md for byte offsets.

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[offset + b]) << (8 * b);
  return v;
}

std::uint32_t checked_u32(std::size_t v, const char* field) {
  require(v <= 0xFFFFFFFFu, ErrorKind::kInvalidArgument,
          std::string("save_model: ") + field + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const FcnModel& model) {
  const ArchConfig& c = model.config;
  std::vector<std::uint8_t> out;
  out.reserve(kModelHeaderBytes + 4 * model.parameter_count());
  out.insert(out.end(), std::begin(kModelMagic), std::end(kModelMagic));
  put_u32(out, kModelFormatVersion);
  put_u32(out, checked_u32(c.input_rows, "inputRows"));
  put_u32(out, checked_u32(c.class_count, "classCount"));
  put_u32(out, checked_u32(c.block_count, "blockCount"));
  put_u32(out, checked_u32(c.conv_kernel_rows, "convKernelRows"));
  put_u32(out, checked_u32(c.conv_kernel_steps, "convKernelSteps"));
  put_u32(out, checked_u32(c.filters_per_block, "filtersPerBlock"));
  put_u32(out, checked_u32(c.pool_width, "poolWidth"));
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(c.dropout_rate)));
  for (std::span<const float> t : model.tensors()) {
    for (float v : t) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

FcnModel deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kModelMagic)) {
    fail(ErrorKind::kTruncated, "model file is " + std::to_string(bytes.size()) +
                                    " bytes, shorter than the magic");
  }
  if (!std::equal(std::begin(kModelMagic), std::end(kModelMagic), bytes.begin(),
                  [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
    fail(ErrorKind::kBadMagic, "model file does not start with DHFCNMDL");
  }
  if (bytes.size() < 12) fail(ErrorKind::kTruncated, "model file ends inside the version field");
  const std::uint32_t version = get_u32(bytes, 8);
  if (version != kModelFormatVersion) {
    fail(ErrorKind::kVersionMismatch, "model format version " + std::to_string(version) +
                                          ", this build reads version " +
                                          std::to_string(kModelFormatVersion));
  }
  if (bytes.size() < kModelHeaderBytes) {
    fail(ErrorKind::kTruncated, "model file ends inside the header");
  }
  ArchConfig c;
  c.input_rows = get_u32(bytes, 12);
  c.class_count = get_u32(bytes, 16);
  c.block_count = get_u32(bytes, 20);
  c.conv_kernel_rows = get_u32(bytes, 24);
  c.conv_kernel_steps = get_u32(bytes, 28);
  c.filters_per_block = get_u32(bytes, 32);
  c.pool_width = get_u32(bytes, 36);
  c.dropout_rate = std::bit_cast<float>(get_u32(bytes, 40));
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kFormat, std::string("model header holds an invalid config (") + e.what() + ")");
  }

  const std::size_t expected = kModelHeaderBytes + 4 * expected_parameter_count(c);
  if (bytes.size() < expected) {
    fail(ErrorKind::kTruncated, "model file has " + std::to_string(bytes.size()) +
                                    " bytes, header implies " + std::to_string(expected));
  }
  if (bytes.size() > expected) {
    fail(ErrorKind::kFormat, "model file has " + std::to_string(bytes.size() - expected) +
                                 " trailing bytes");
  }
  FcnModel model = FcnModel::zeros(c);
  std::size_t offset = kModelHeaderBytes;
  for (std::span<float> t : model.tensors()) {
    for (float& v : t) {
      v = std::bit_cast<float>(get_u32(bytes, offset));
      offset += 4;
    }
  }
  return model;
}

void save_model(const FcnModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "write to " + path.string() + " failed");
}

FcnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open model file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace densehar
