#include "densehar/train.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <optional>

#include "densehar/parallel.hpp"

namespace densehar {

void TrainConfig::validate() const {
  require(subseq_len >= 1, ErrorKind::kInvalidArgument, "train: subseqLen must be >= 1");
  require(batch_size >= 1, ErrorKind::kInvalidArgument, "train: batchSize must be >= 1");
  require(std::isfinite(lr_initial) && lr_reduced >= 0.0 && lr_reduced <= lr_initial,
          ErrorKind::kInvalidArgument, "train: need 0 <= lrReduced <= lrInitial");
  require(lr_drop_at <= stop_at, ErrorKind::kInvalidArgument, "train: lrDropAt must be <= stopAt");
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::kInvalidArgument,
          "train: momentum must lie in [0, 1)");
  require(threads >= 1, ErrorKind::kInvalidArgument, "train: threads must be >= 1");
}

double learning_rate(const TrainConfig& cfg, std::size_t iteration) noexcept {
  return iteration <= cfg.lr_drop_at ? cfg.lr_initial : cfg.lr_reduced;
}

std::size_t resolve_batches_per_iteration(const TrainConfig& cfg, std::size_t training_samples) {
  if (cfg.batches_per_iteration != 0) return cfg.batches_per_iteration;
  const std::size_t per_batch = cfg.batch_size * cfg.subseq_len;
  return std::max<std::size_t>(1, (training_samples + per_batch - 1) / per_batch);
}

std::vector<Subsequence> sample_subsequences(std::span<const LabeledSequence> dataset,
                                             std::size_t subseq_len, std::size_t count, Rng& rng) {
  require(subseq_len >= 1, ErrorKind::kInvalidArgument, "sample_subsequences: subseqLen must be >= 1");
  // cumulative[i] = number of valid starts in sequences [0, i)
  std::vector<std::size_t> cumulative{0};
  for (std::size_t s = 0; s < dataset.size(); ++s) {
    std::size_t starts = 0;
    if (dataset[s].length >= subseq_len) {
      starts = dataset[s].length - subseq_len + 1;
    } else {
      std::cerr << "warning: sequence " << s << " has " << dataset[s].length
                << " samples, shorter than subsequence length " << subseq_len << "; skipped\n";
    }
    cumulative.push_back(cumulative.back() + starts);
  }
  if (cumulative.back() == 0) {
    fail(ErrorKind::kNoData, "sample_subsequences: no sequence has at least " +
                                 std::to_string(subseq_len) + " samples");
  }
  std::uniform_int_distribution<std::size_t> pick(0, cumulative.back() - 1);
  std::vector<Subsequence> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t flat = pick(rng);
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), flat);
    const auto s = static_cast<std::size_t>(it - cumulative.begin()) - 1;
    const std::size_t start = flat - cumulative[s];
    const LabeledSequence& seq = dataset[s];
    Subsequence sub;
    sub.input = seq.slice_input(start, subseq_len);
    sub.labels.assign(seq.labels.begin() + static_cast<std::ptrdiff_t>(start),
                      seq.labels.begin() + static_cast<std::ptrdiff_t>(start + subseq_len));
    sub.sequence = s;
    sub.start = start;
    out.push_back(std::move(sub));
  }
  return out;
}

BatchGradient batch_gradient(const FcnModel& model, std::span<const Subsequence> batch, Mode mode,
                             std::span<const std::uint64_t> dropout_seeds, std::size_t threads) {
  require(!batch.empty(), ErrorKind::kInvalidArgument, "batch_gradient: empty batch");
  require(mode == Mode::kEval || dropout_seeds.size() == batch.size(), ErrorKind::kInvalidArgument,
          "batch_gradient: one dropout seed per subsequence required in train mode");

  std::vector<double> losses(batch.size());
  std::vector<FcnModel> grads(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    Rng rng(mode == Mode::kTrain ? dropout_seeds[i] : 0);
    ForwardCache<float> cache;
    const auto fwd = forward(model, batch[i].input, mode, rng, &cache);
    const NllResult nll = dense_nll_loss(fwd.probs, batch[i].labels);
    losses[i] = nll.loss;
    grads[i] = backward(model, cache, as_logit_map<float>(nll.logit_grad));
  });

  std::size_t samples = 0;
  for (const auto& sub : batch) samples += sub.labels.size();
  const double inv = 1.0 / static_cast<double>(samples);

  BatchGradient out;
  out.gradient = FcnModel::zeros(model.config);
  auto dst = out.gradient.tensors();
  // Accumulate in double, in batch order.
  for (std::size_t t = 0; t < dst.size(); ++t) {
    std::vector<double> acc(dst[t].size(), 0.0);
    for (const auto& g : grads) {
      const auto src = g.tensors()[t];
      for (std::size_t n = 0; n < acc.size(); ++n) acc[n] += static_cast<double>(src[n]);
    }
    for (std::size_t n = 0; n < acc.size(); ++n) dst[t][n] = static_cast<float>(acc[n] * inv);
  }
  for (double l : losses) out.loss += l;
  out.loss *= inv;
  return out;
}

namespace {

void validate_dataset(const FcnModel& model, std::span<const LabeledSequence> dataset) {
  require(!dataset.empty(), ErrorKind::kNoData, "train: empty training set");
  for (std::size_t s = 0; s < dataset.size(); ++s) {
    const auto& seq = dataset[s];
    if (seq.dims != model.config.input_rows) {
      fail(ErrorKind::kDimensionMismatch, "train: sequence " + std::to_string(s) + " has " +
                                              std::to_string(seq.dims) + " features, model expects " +
                                              std::to_string(model.config.input_rows));
    }
    require(seq.labels.size() == seq.length, ErrorKind::kNoData,
            "train: sequence " + std::to_string(s) + " is unlabeled");
    for (std::size_t t = 0; t < seq.length; ++t) {
      const int z = seq.labels[t];
      if (z < 0 || static_cast<std::size_t>(z) >= model.config.class_count) {
        fail(ErrorKind::kLabelOutOfRange, "train: sequence " + std::to_string(s) + " step " +
                                              std::to_string(t) + " has label " + std::to_string(z) +
                                              ", model has " +
                                              std::to_string(model.config.class_count) + " classes");
      }
    }
  }
}

}  // namespace

TrainReport train(FcnModel model, std::span<const LabeledSequence> dataset, const TrainConfig& cfg,
                  const IterationCallback& on_iteration) {
  cfg.validate();
  validate_dataset(model, dataset);
  const auto started = std::chrono::steady_clock::now();

  std::size_t samples = 0;
  for (const auto& seq : dataset) {
    if (seq.length >= cfg.subseq_len) samples += seq.length;
  }
  const std::size_t batches = resolve_batches_per_iteration(cfg, samples);

  Rng rng(cfg.seed);
  std::optional<FcnModel> velocity;
  if (cfg.momentum > 0.0) velocity = FcnModel::zeros(model.config);

  TrainReport report;
  report.loss_history.reserve(cfg.stop_at);
  std::vector<std::uint64_t> seeds(cfg.batch_size);
  for (std::size_t iteration = 1; iteration <= cfg.stop_at; ++iteration) {
    const double lr = learning_rate(cfg, iteration);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const auto batch = sample_subsequences(dataset, cfg.subseq_len, cfg.batch_size, rng);
      for (auto& s : seeds) s = rng();
      BatchGradient step = batch_gradient(model, batch, Mode::kTrain, seeds, cfg.threads);
      if (!std::isfinite(step.loss)) {
        fail(ErrorKind::kNumeric, "train: non-finite loss at iteration " + std::to_string(iteration) +
                                      ", batch " + std::to_string(b + 1));
      }
      loss_sum += step.loss;
      if (velocity) {
        auto v = velocity->tensors();
        auto g = step.gradient.tensors();
        for (std::size_t t = 0; t < v.size(); ++t) {
          for (std::size_t n = 0; n < v[t].size(); ++n) {
            v[t][n] = static_cast<float>(cfg.momentum) * v[t][n] + g[t][n];
          }
        }
        add_scaled(model, *velocity, static_cast<float>(-lr));
      } else {
        add_scaled(model, step.gradient, static_cast<float>(-lr));
      }
    }
    const double mean = loss_sum / static_cast<double>(batches);
    report.loss_history.push_back(mean);
    if (on_iteration) on_iteration(iteration, lr, mean);
  }
  report.final_model = std::move(model);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace densehar
