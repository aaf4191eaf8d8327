#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "densehar/layers.hpp"

namespace densehar {

// Architecture of the dense-labeling network: `block_count` repetitions of
// conv -> ReLU -> time max-pool (all same-padded), one dropout stage, then a
// head convolution whose kernel spans every input row and emits one channel
// per class.
struct ArchConfig {
  std::size_t input_rows = 1;
  std::size_t class_count = 2;
  std::size_t block_count = 6;
  std::size_t conv_kernel_rows = 3;
  std::size_t conv_kernel_steps = 3;
  std::size_t filters_per_block = 32;
  std::size_t pool_width = 4;
  double dropout_rate = 0.5;

  void validate() const;
  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

enum class InitScheme {
  kHeNormal,       // N(0, 2 / fan_in), biases zero
  kGlorotUniform,  // U(-a, a), a = sqrt(6 / (fan_in + fan_out)), biases zero
};

// Time steps on each side of a sample that can influence its prediction.
struct ReceptiveField {
  std::size_t before = 0;
  std::size_t after = 0;
  std::size_t radius() const noexcept { return before > after ? before : after; }
};

ReceptiveField receptive_field(const ArchConfig& config);
std::size_t expected_parameter_count(const ArchConfig& config);

template <typename T>
struct BasicFcnModel {
  ArchConfig config;
  std::vector<BasicConvParams<T>> blocks;
  BasicConvParams<T> head;

  // Zero-valued model with the shapes implied by `config`.
  static BasicFcnModel zeros(const ArchConfig& config);

  std::size_t parameter_count() const noexcept;

  // Parameter tensors in serialization order: per block weights then biases,
  // then head weights and biases.
  std::vector<std::span<T>> tensors();
  std::vector<std::span<const T>> tensors() const;

  template <typename U>
  BasicFcnModel<U> cast() const {
    BasicFcnModel<U> out;
    out.config = config;
    out.blocks.reserve(blocks.size());
    for (const auto& b : blocks) out.blocks.push_back(b.template cast<U>());
    out.head = head.template cast<U>();
    return out;
  }

  friend bool operator==(const BasicFcnModel&, const BasicFcnModel&) = default;
};

using FcnModel = BasicFcnModel<float>;

FcnModel build_fcn(const ArchConfig& config, InitScheme init, Rng& rng);

template <typename T>
struct ForwardCache {
  struct Block {
    ConvCache<T> conv;
    BasicFeatureMap<T> pre_activation;
    MaxPoolCache<T> pool;
  };
  std::vector<Block> blocks;
  std::vector<T> dropout_mask;
  ConvCache<T> head;
};

template <typename T>
struct ForwardResult {
  BasicFeatureMap<T> logits;  // classCount x 1 x T
  DenseProbMap probs;
};

// `input` is 1 x inputRows x T for any T >= 1. `rng` is only drawn from in
// train mode. Pass a cache to enable backward().
template <typename T>
ForwardResult<T> forward(const BasicFcnModel<T>& model, const BasicFeatureMap<T>& input, Mode mode,
                         Rng& rng, ForwardCache<T>* cache = nullptr);

// Eval-mode probabilities without caching.
template <typename T>
DenseProbMap predict_probs(const BasicFcnModel<T>& model, const BasicFeatureMap<T>& input);

// Parameter gradients packed in a model of identical shape.
template <typename T>
BasicFcnModel<T> backward(const BasicFcnModel<T>& model, const ForwardCache<T>& cache,
                          const BasicFeatureMap<T>& logit_grad);

// target += scale * delta, tensor by tensor.
template <typename T>
void add_scaled(BasicFcnModel<T>& target, const BasicFcnModel<T>& delta, T scale);

inline constexpr char kModelMagic[8] = {'D', 'H', 'F', 'C', 'N', 'M', 'D', 'L'};
inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::size_t kModelHeaderBytes = 44;

std::vector<std::uint8_t> serialize_model(const FcnModel& model);
FcnModel deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const FcnModel& model, const std::filesystem::path& path);
FcnModel load_model(const std::filesystem::path& path);

}  // namespace densehar
