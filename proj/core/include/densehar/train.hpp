#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "densehar/data.hpp"
#include "densehar/model.hpp"

namespace densehar {

struct TrainConfig {
  std::size_t subseq_len = 60;
  std::size_t batch_size = 10;
  double lr_initial = 1e-2;
  double lr_reduced = 1e-3;
  std::size_t lr_drop_at = 100;
  std::size_t stop_at = 150;
  // Mini-batch updates per iteration; 0 means one nominal pass over the
  // training samples, ceil(samples / (batch_size * subseq_len)).
  std::size_t batches_per_iteration = 0;
  double momentum = 0.0;
  std::uint64_t seed = 20170519;
  std::size_t threads = 1;

  void validate() const;
};

// Learning rate for 1-based `iteration`.
double learning_rate(const TrainConfig& cfg, std::size_t iteration) noexcept;
std::size_t resolve_batches_per_iteration(const TrainConfig& cfg, std::size_t training_samples);

struct Subsequence {
  FeatureMap input;  // 1 x D x subseq_len
  std::vector<int> labels;
  std::size_t sequence = 0;
  std::size_t start = 0;
};

// Uniform over all valid (sequence, start) pairs. Sequences shorter than
// `subseq_len` are skipped with a warning on stderr.
std::vector<Subsequence> sample_subsequences(std::span<const LabeledSequence> dataset,
                                             std::size_t subseq_len, std::size_t count, Rng& rng);

struct BatchGradient {
  double loss = 0.0;  // summed NLL / total samples in the batch
  FcnModel gradient;  // gradient of `loss`
};

// Per-subsequence forward/backward with an ordered reduction. In train mode
// subsequence i draws its dropout mask from Rng(dropout_seeds[i]).
BatchGradient batch_gradient(const FcnModel& model, std::span<const Subsequence> batch, Mode mode,
                             std::span<const std::uint64_t> dropout_seeds, std::size_t threads = 1);

struct TrainReport {
  std::vector<double> loss_history;  // mean batch loss per iteration
  FcnModel final_model;
  double wall_seconds = 0.0;
};

using IterationCallback = std::function<void(std::size_t iteration, double lr, double loss)>;

// Mini-batch SGD on the dense loss. Deterministic for a fixed cfg.seed,
// independent of cfg.threads.
TrainReport train(FcnModel model, std::span<const LabeledSequence> dataset, const TrainConfig& cfg,
                  const IterationCallback& on_iteration = {});

}  // namespace densehar
