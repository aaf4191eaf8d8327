#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "densehar/data.hpp"
#include "densehar/model.hpp"

namespace densehar {

// Overlapping tiles covering [0, length). Tiles are `subseq_len` long except
// when the whole sequence is shorter, in which case one tile spans it.
struct TilePlan {
  std::size_t length = 0;
  std::size_t subseq_len = 0;
  std::vector<std::size_t> starts;
  std::vector<std::uint32_t> coverage;

  std::size_t tile_length() const noexcept { return subseq_len < length ? subseq_len : length; }
};

// stride = max(1, round(subseq_len * (1 - overlap))); the last tile is
// clamped to end exactly at `length`.
TilePlan plan_tiles(std::size_t length, std::size_t subseq_len, double overlap);

struct DensePrediction {
  DenseProbMap probs;
  std::vector<int> labels;
  std::size_t forward_passes = 0;
};

// Mean of the tile probability columns covering each sample; `tiles[t]`
// holds the columns for tile t of `plan`.
DenseProbMap average_tiles(std::span<const DenseProbMap> tiles, const TilePlan& plan);

// Averages eval-mode probability columns over every covering tile, then takes
// the argmax (lowest class on ties).
DensePrediction dense_predict(const FcnModel& model, const LabeledSequence& sequence,
                              const TilePlan& plan, std::size_t threads = 1);

struct WindowPrediction {
  std::vector<int> labels;
  std::size_t forward_passes = 0;
};

// Sliding-window labeling cost model: one forward pass per window, label
// taken from the window's last column. Each sample carries the label of the
// latest window ending at or before it; samples before the first window end
// take the first window's label.
WindowPrediction window_emulation_predict(const FcnModel& model, const LabeledSequence& sequence,
                                          std::size_t window = 24, std::size_t stride = 1);

struct BenchReport {
  std::size_t sequence_len = 0;
  double dense_seconds = 0.0;
  double window_seconds = 0.0;
  double speedup = 0.0;  // window_seconds / dense_seconds
  double predictions_agree_pct = 0.0;
  std::size_t dense_passes = 0;   // timed run only
  std::size_t window_passes = 0;  // timed run only
  std::size_t warmup_passes = 0;  // both warm-up runs, excluded from timings
};

// Single-threaded timing of both predictors after one warm-up run each.
BenchReport benchmark(const FcnModel& model, const LabeledSequence& sequence, const TilePlan& plan,
                      std::size_t window = 24, std::size_t stride = 1);

}  // namespace densehar
