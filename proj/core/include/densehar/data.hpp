#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "densehar/feature_map.hpp"

namespace densehar {

// A multichannel series of `length` samples with `dims` features each,
// stored attribute-major (dim, step). `labels` is empty for unlabeled data.
struct LabeledSequence {
  std::size_t dims = 0;
  std::size_t length = 0;
  std::vector<float> features;
  std::vector<int> labels;
  std::vector<std::string> channel_names;
  std::optional<double> sample_rate_hz;

  float& at(std::size_t d, std::size_t t) noexcept { return features[d * length + t]; }
  float at(std::size_t d, std::size_t t) const noexcept { return features[d * length + t]; }
  bool labeled() const noexcept { return !labels.empty(); }

  // Network input covering samples [start, start + count): 1 x dims x count.
  FeatureMap slice_input(std::size_t start, std::size_t count) const;
  FeatureMap as_input() const { return slice_input(0, length); }
  LabeledSequence slice(std::size_t start, std::size_t count) const;

  friend bool operator==(const LabeledSequence&, const LabeledSequence&) = default;
};

struct CsvSchema {
  std::size_t feature_columns = 0;  // 0: every column except the label
  bool labeled = true;
  std::optional<std::size_t> label_column;  // zero-based; default is the last column
  bool has_header = false;
  char delimiter = ',';
};

LabeledSequence load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
LabeledSequence parse_csv(std::string_view text, const CsvSchema& schema, std::string_view source);
void write_csv(const LabeledSequence& seq, const std::filesystem::path& path, bool header = true,
               char delimiter = ',');

// Sidecar `key = value` file describing a dataset's label space and columns.
struct DatasetSchema {
  std::size_t class_count = 2;
  std::optional<int> null_class;
  std::size_t feature_columns = 0;
  bool has_header = true;
  char delimiter = ',';

  CsvSchema csv() const;
  friend bool operator==(const DatasetSchema&, const DatasetSchema&) = default;
};

DatasetSchema read_dataset_schema(const std::filesystem::path& path);
void write_dataset_schema(const DatasetSchema& schema, const std::filesystem::path& path);

struct ScalerParams {
  std::vector<float> min;
  std::vector<float> max;
  friend bool operator==(const ScalerParams&, const ScalerParams&) = default;
};

// Per-channel min/max over every training sample.
ScalerParams fit_scaler(std::span<const LabeledSequence> train);
// (x - min) / (max - min) clamped to [0, 1]; constant channels map to 0.
LabeledSequence apply_scaler(const ScalerParams& params, const LabeledSequence& seq);

void save_scaler(const ScalerParams& params, const std::filesystem::path& path);
ScalerParams load_scaler(const std::filesystem::path& path);

struct ClassSignature {
  std::vector<double> offset;     // per channel
  std::vector<double> frequency;  // cycles per step
  std::vector<double> amplitude;
};

struct SynthSpec {
  std::size_t class_count = 3;
  std::size_t channels = 6;
  std::size_t min_duration = 50;
  std::size_t max_duration = 250;
  double noise_std = 0.2;
  std::size_t train_length = 20000;
  std::size_t test_length = 5000;
  std::size_t validation_length = 5000;
  std::optional<int> null_class = 0;
  std::uint64_t seed = 20170519;
  // Empty: derived from `seed`.
  std::vector<ClassSignature> signatures;

  void validate() const;
};

SynthSpec read_synth_spec(const std::filesystem::path& path);
std::vector<ClassSignature> default_signatures(std::size_t class_count, std::size_t channels,
                                               std::uint64_t seed);

struct SynthDataset {
  LabeledSequence train;
  LabeledSequence test;
  LabeledSequence validation;
};

// Piecewise-constant activity process: segment durations ~ U{min, max},
// classes ~ U{0, N-1}; each sample is its class signature evaluated at the
// offset into the segment, plus N(0, noise^2).
SynthDataset synth_generate(const SynthSpec& spec);
LabeledSequence synth_sequence(const SynthSpec& spec, std::size_t length, std::uint64_t stream);

// Whole sequences assigned to splits in order, cut points chosen so that each
// split's cumulative sample share is as close as possible to its target.
std::vector<std::vector<LabeledSequence>> split_by_fraction(std::vector<LabeledSequence> sequences,
                                                            std::span<const double> fractions);
std::vector<std::size_t> split_counts(std::span<const std::size_t> lengths,
                                      std::span<const double> fractions);

}  // namespace densehar
