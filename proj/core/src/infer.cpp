#include "densehar/infer.hpp"

#include <chrono>
#include <cmath>

#include "densehar/parallel.hpp"

namespace densehar {

TilePlan plan_tiles(std::size_t length, std::size_t subseq_len, double overlap) {
  require(length >= 1, ErrorKind::kInvalidArgument, "plan_tiles: sequence length must be >= 1");
  require(subseq_len >= 1, ErrorKind::kInvalidArgument, "plan_tiles: subsequence length must be >= 1");
  require(overlap >= 0.0 && overlap < 1.0, ErrorKind::kInvalidArgument,
          "plan_tiles: overlap must lie in [0, 1)");
  TilePlan plan;
  plan.length = length;
  plan.subseq_len = subseq_len;
  plan.starts.push_back(0);
  if (length > subseq_len) {
    const auto stride = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(subseq_len) * (1.0 - overlap))));
    while (plan.starts.back() + subseq_len < length) {
      plan.starts.push_back(std::min(plan.starts.back() + stride, length - subseq_len));
    }
  }
  plan.coverage.assign(length, 0);
  const std::size_t tile = plan.tile_length();
  for (std::size_t s : plan.starts) {
    for (std::size_t j = s; j < s + tile; ++j) ++plan.coverage[j];
  }
  return plan;
}

DenseProbMap average_tiles(std::span<const DenseProbMap> tiles, const TilePlan& plan) {
  require(!tiles.empty() && tiles.size() == plan.starts.size(), ErrorKind::kDimensionMismatch,
          "average_tiles: need one probability map per tile");
  const std::size_t classes = tiles[0].class_count();
  const std::size_t tile = plan.tile_length();
  DenseProbMap out(classes, plan.length);
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    require(tiles[t].class_count() == classes && tiles[t].steps() == tile,
            ErrorKind::kDimensionMismatch,
            "average_tiles: tile " + std::to_string(t) + " has the wrong shape");
    const std::size_t s = plan.starts[t];
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t j = 0; j < tile; ++j) out(c, s + j) += tiles[t](c, j);
    }
  }
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t j = 0; j < plan.length; ++j) out(c, j) /= plan.coverage[j];
  }
  return out;
}

DensePrediction dense_predict(const FcnModel& model, const LabeledSequence& sequence,
                              const TilePlan& plan, std::size_t threads) {
  if (sequence.dims != model.config.input_rows) {
    fail(ErrorKind::kDimensionMismatch, "dense_predict: sequence has " + std::to_string(sequence.dims) +
                                            " features, model expects " +
                                            std::to_string(model.config.input_rows));
  }
  require(plan.length == sequence.length, ErrorKind::kDimensionMismatch,
          "dense_predict: tile plan covers " + std::to_string(plan.length) + " samples, sequence has " +
              std::to_string(sequence.length));
  const std::size_t tile = plan.tile_length();
  std::vector<DenseProbMap> tiles(plan.starts.size());
  parallel_for(plan.starts.size(), threads, [&](std::size_t t) {
    tiles[t] = predict_probs(model, sequence.slice_input(plan.starts[t], tile));
  });

  DensePrediction out;
  out.probs = average_tiles(tiles, plan);
  out.labels = out.probs.argmax_labels();
  out.forward_passes = tiles.size();
  return out;
}

WindowPrediction window_emulation_predict(const FcnModel& model, const LabeledSequence& sequence,
                                          std::size_t window, std::size_t stride) {
  require(window >= 1 && stride >= 1, ErrorKind::kInvalidArgument,
          "window_emulation_predict: window and stride must be >= 1");
  if (sequence.length < window) {
    fail(ErrorKind::kInvalidArgument, "window_emulation_predict: sequence of length " +
                                          std::to_string(sequence.length) + " is shorter than window " +
                                          std::to_string(window));
  }
  if (sequence.dims != model.config.input_rows) {
    fail(ErrorKind::kDimensionMismatch, "window_emulation_predict: sequence has " +
                                            std::to_string(sequence.dims) + " features, model expects " +
                                            std::to_string(model.config.input_rows));
  }
  WindowPrediction out;
  out.labels.assign(sequence.length, -1);
  int current = -1;
  std::size_t filled = 0;
  for (std::size_t s = 0; s + window <= sequence.length; s += stride) {
    const DenseProbMap probs = predict_probs(model, sequence.slice_input(s, window));
    ++out.forward_passes;
    const int label = static_cast<int>(probs.argmax(window - 1));
    const std::size_t end = s + window;  // exclusive end of this window
    // Samples since the previous window end keep that window's label.
    for (; filled + 1 < end; ++filled) out.labels[filled] = current < 0 ? label : current;
    out.labels[end - 1] = label;
    filled = end;
    current = label;
  }
  for (; filled < sequence.length; ++filled) out.labels[filled] = current;
  return out;
}

BenchReport benchmark(const FcnModel& model, const LabeledSequence& sequence, const TilePlan& plan,
                      std::size_t window, std::size_t stride) {
  using clock = std::chrono::steady_clock;
  BenchReport report;
  report.sequence_len = sequence.length;

  report.warmup_passes += dense_predict(model, sequence, plan, 1).forward_passes;
  auto t0 = clock::now();
  const DensePrediction dense = dense_predict(model, sequence, plan, 1);
  report.dense_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  report.dense_passes = dense.forward_passes;

  report.warmup_passes += window_emulation_predict(model, sequence, window, stride).forward_passes;
  t0 = clock::now();
  const WindowPrediction windowed = window_emulation_predict(model, sequence, window, stride);
  report.window_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  report.window_passes = windowed.forward_passes;

  report.speedup = report.window_seconds / report.dense_seconds;
  std::size_t agree = 0;
  for (std::size_t j = 0; j < sequence.length; ++j) agree += dense.labels[j] == windowed.labels[j];
  report.predictions_agree_pct = 100.0 * static_cast<double>(agree) / static_cast<double>(sequence.length);
  return report;
}

}  // namespace densehar
