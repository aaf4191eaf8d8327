#include "densehar/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>

#include "densehar/error.hpp"
#include "densehar/key_value.hpp"
#include "densehar/layers.hpp"

namespace densehar {

FeatureMap LabeledSequence::slice_input(std::size_t start, std::size_t count) const {
  require(count >= 1 && start + count <= length, ErrorKind::kInvalidArgument,
          "slice [" + std::to_string(start) + ", " + std::to_string(start + count) +
              ") is outside a sequence of length " + std::to_string(length));
  FeatureMap x(1, dims, count);
  for (std::size_t d = 0; d < dims; ++d) {
    std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(d * length + start), count, &x(0, d, 0));
  }
  return x;
}

LabeledSequence LabeledSequence::slice(std::size_t start, std::size_t count) const {
  require(start + count <= length, ErrorKind::kInvalidArgument, "slice outside the sequence");
  LabeledSequence out;
  out.dims = dims;
  out.length = count;
  out.features.resize(dims * count);
  for (std::size_t d = 0; d < dims; ++d) {
    std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(d * length + start), count,
                out.features.begin() + static_cast<std::ptrdiff_t>(d * count));
  }
  if (labeled()) {
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(start),
                      labels.begin() + static_cast<std::ptrdiff_t>(start + count));
  }
  out.channel_names = channel_names;
  out.sample_rate_hz = sample_rate_hz;
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(delimiter, pos);
    fields.push_back(trim(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return fields;
}

std::string location(std::string_view source, std::size_t line, std::size_t column) {
  return std::string(source) + ": row " + std::to_string(line) + ", column " + std::to_string(column);
}

}  // namespace

LabeledSequence parse_csv(std::string_view text, const CsvSchema& schema, std::string_view source) {
  std::vector<std::pair<std::size_t, std::string_view>> lines;
  {
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
      const auto end = text.find('\n', pos);
      std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      lines.emplace_back(++line_no, line);
      pos = end == std::string_view::npos ? text.size() : end + 1;
    }
    while (!lines.empty() && trim(lines.back().second).empty()) lines.pop_back();
  }

  std::size_t first_data = 0;
  std::vector<std::string_view> header;
  if (schema.has_header) {
    if (lines.empty()) fail(ErrorKind::kNoData, std::string(source) + ": missing header row");
    header = split_fields(lines[0].second, schema.delimiter);
    first_data = 1;
  }
  if (first_data >= lines.size()) fail(ErrorKind::kNoData, std::string(source) + ": no data rows");

  const std::size_t columns = schema.has_header
                                  ? header.size()
                                  : split_fields(lines[first_data].second, schema.delimiter).size();
  std::optional<std::size_t> label_col;
  if (schema.labeled) {
    label_col = schema.label_column.value_or(columns - 1);
    if (*label_col >= columns) {
      fail(ErrorKind::kParse, std::string(source) + ": label column " + std::to_string(*label_col) +
                                  " does not exist in " + std::to_string(columns) + " columns");
    }
  }
  const std::size_t dims = columns - (label_col ? 1 : 0);
  if (dims == 0) fail(ErrorKind::kParse, std::string(source) + ": no feature columns");
  if (schema.feature_columns != 0 && schema.feature_columns != dims) {
    fail(ErrorKind::kParse, std::string(source) + ": schema declares " +
                                std::to_string(schema.feature_columns) + " feature columns, file has " +
                                std::to_string(dims));
  }

  const std::size_t length = lines.size() - first_data;
  LabeledSequence seq;
  seq.dims = dims;
  seq.length = length;
  seq.features.resize(dims * length);
  if (label_col) seq.labels.resize(length);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!label_col || c != *label_col) seq.channel_names.emplace_back(header[c]);
  }

  for (std::size_t r = 0; r < length; ++r) {
    const auto [line_no, line] = lines[first_data + r];
    const auto fields = split_fields(line, schema.delimiter);
    if (fields.size() != columns) {
      fail(ErrorKind::kParse, std::string(source) + ": row " + std::to_string(line_no) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(columns));
    }
    std::size_t d = 0;
    for (std::size_t c = 0; c < columns; ++c) {
      const std::string_view f = fields[c];
      if (f.empty()) fail(ErrorKind::kParse, location(source, line_no, c + 1) + ": missing value");
      if (label_col && c == *label_col) {
        long v = 0;
        const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc() || ptr != f.data() + f.size() || v < 0 ||
            v > std::numeric_limits<int>::max()) {
          fail(ErrorKind::kParse, location(source, line_no, c + 1) + ": label '" + std::string(f) +
                                      "' is not a nonnegative integer");
        }
        seq.labels[r] = static_cast<int>(v);
        continue;
      }
      float v = 0.0f;
      const auto* first = f.data();
      if (*first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
        fail(ErrorKind::kParse, location(source, line_no, c + 1) + ": '" + std::string(f) +
                                    "' is not a finite number");
      }
      seq.features[d * length + r] = v;
      ++d;
    }
  }
  return seq;
}

LabeledSequence load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  return parse_csv(read_text_file(path), schema, path.string());
}

void write_csv(const LabeledSequence& seq, const std::filesystem::path& path, bool header,
               char delimiter) {
  std::string out;
  out.reserve(seq.length * (seq.dims + 1) * 10);
  if (header) {
    for (std::size_t d = 0; d < seq.dims; ++d) {
      if (d) out += delimiter;
      out += d < seq.channel_names.size() ? seq.channel_names[d] : "f" + std::to_string(d);
    }
    if (seq.labeled()) {
      out += delimiter;
      out += "label";
    }
    out += '\n';
  }
  for (std::size_t t = 0; t < seq.length; ++t) {
    for (std::size_t d = 0; d < seq.dims; ++d) {
      if (d) out += delimiter;
      out += format_float(seq.at(d, t));
    }
    if (seq.labeled()) {
      out += delimiter;
      out += std::to_string(seq.labels[t]);
    }
    out += '\n';
  }
  write_text_file(path, out);
}

CsvSchema DatasetSchema::csv() const {
  CsvSchema s;
  s.feature_columns = feature_columns;
  s.has_header = has_header;
  s.delimiter = delimiter;
  return s;
}

DatasetSchema read_dataset_schema(const std::filesystem::path& path) {
  DatasetSchema schema;
  bool saw_classes = false;
  for (const auto& e : read_key_values(path)) {
    const std::string what = path.string() + ":" + std::to_string(e.line) + " " + e.key;
    if (e.key == "classCount") {
      schema.class_count = parse_count(e.value, what);
      saw_classes = true;
    } else if (e.key == "nullClass") {
      if (e.value == "none") {
        schema.null_class.reset();
      } else {
        schema.null_class = static_cast<int>(parse_count(e.value, what));
      }
    } else if (e.key == "featureColumns") {
      schema.feature_columns = parse_count(e.value, what);
    } else if (e.key == "hasHeader") {
      schema.has_header = parse_flag(e.value, what);
    } else if (e.key == "delimiter") {
      if (e.value == "tab" || e.value == "\\t") {
        schema.delimiter = '\t';
      } else {
        require(e.value.size() == 1, ErrorKind::kParse, what + ": delimiter must be one character");
        schema.delimiter = e.value[0];
      }
    } else {
      fail(ErrorKind::kParse, what + ": unknown schema key");
    }
  }
  require(saw_classes, ErrorKind::kParse, path.string() + ": classCount is required");
  require(schema.class_count >= 2, ErrorKind::kParse, path.string() + ": classCount must be >= 2");
  if (schema.null_class) {
    require(static_cast<std::size_t>(*schema.null_class) < schema.class_count, ErrorKind::kParse,
            path.string() + ": nullClass must be < classCount");
  }
  return schema;
}

void write_dataset_schema(const DatasetSchema& schema, const std::filesystem::path& path) {
  std::string out;
  out += "classCount = " + std::to_string(schema.class_count) + "\n";
  out += "nullClass = " + (schema.null_class ? std::to_string(*schema.null_class) : "none") + "\n";
  out += "featureColumns = " + std::to_string(schema.feature_columns) + "\n";
  out += std::string("hasHeader = ") + (schema.has_header ? "true" : "false") + "\n";
  out += "delimiter = " + (schema.delimiter == '\t' ? std::string("tab") : std::string(1, schema.delimiter)) + "\n";
  write_text_file(path, out);
}

// ---------------------------------------------------------------------------
// Scaling

ScalerParams fit_scaler(std::span<const LabeledSequence> train) {
  require(!train.empty(), ErrorKind::kNoData, "fit_scaler: empty training set");
  const std::size_t dims = train.front().dims;
  ScalerParams p{std::vector<float>(dims, std::numeric_limits<float>::infinity()),
                 std::vector<float>(dims, -std::numeric_limits<float>::infinity())};
  std::size_t samples = 0;
  for (const auto& seq : train) {
    require(seq.dims == dims, ErrorKind::kDimensionMismatch,
            "fit_scaler: sequences have " + std::to_string(seq.dims) + " and " +
                std::to_string(dims) + " features");
    samples += seq.length;
    for (std::size_t d = 0; d < dims; ++d) {
      for (std::size_t t = 0; t < seq.length; ++t) {
        p.min[d] = std::min(p.min[d], seq.at(d, t));
        p.max[d] = std::max(p.max[d], seq.at(d, t));
      }
    }
  }
  require(samples > 0, ErrorKind::kNoData, "fit_scaler: training set has no samples");
  return p;
}

LabeledSequence apply_scaler(const ScalerParams& params, const LabeledSequence& seq) {
  require(params.min.size() == seq.dims && params.max.size() == seq.dims,
          ErrorKind::kDimensionMismatch,
          "apply_scaler: scaler has " + std::to_string(params.min.size()) + " channels, sequence has " +
              std::to_string(seq.dims));
  LabeledSequence out = seq;
  for (std::size_t d = 0; d < seq.dims; ++d) {
    const double lo = params.min[d];
    const double span = static_cast<double>(params.max[d]) - lo;
    for (std::size_t t = 0; t < seq.length; ++t) {
      float& v = out.at(d, t);
      if (!(span > 0.0)) {
        v = 0.0f;
        continue;
      }
      v = static_cast<float>(std::clamp((static_cast<double>(v) - lo) / span, 0.0, 1.0));
    }
  }
  return out;
}

void save_scaler(const ScalerParams& params, const std::filesystem::path& path) {
  std::string out = "channel,min,max\n";
  for (std::size_t d = 0; d < params.min.size(); ++d) {
    out += std::to_string(d) + "," + format_float(params.min[d]) + "," + format_float(params.max[d]) + "\n";
  }
  write_text_file(path, out);
}

ScalerParams load_scaler(const std::filesystem::path& path) {
  CsvSchema schema;
  schema.has_header = true;
  schema.labeled = false;
  const LabeledSequence table = load_csv(path, schema);
  require(table.dims == 3, ErrorKind::kParse, path.string() + ": expected columns channel,min,max");
  ScalerParams p;
  for (std::size_t r = 0; r < table.length; ++r) {
    require(table.at(0, r) == static_cast<float>(r), ErrorKind::kParse,
            path.string() + ": channels must be listed in order");
    p.min.push_back(table.at(1, r));
    p.max.push_back(table.at(2, r));
    require(p.max.back() >= p.min.back(), ErrorKind::kParse,
            path.string() + ": channel " + std::to_string(r) + " has max < min");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Synthetic data

void SynthSpec::validate() const {
  require(class_count >= 2, ErrorKind::kInvalidArgument, "synth: classCount must be >= 2");
  require(channels >= 1, ErrorKind::kInvalidArgument, "synth: channels must be >= 1");
  require(min_duration >= 1 && max_duration >= min_duration, ErrorKind::kInvalidArgument,
          "synth: durations must satisfy 1 <= minDuration <= maxDuration");
  require(noise_std >= 0.0 && std::isfinite(noise_std), ErrorKind::kInvalidArgument,
          "synth: noiseStd must be finite and >= 0");
  require(train_length >= 1 && test_length >= 1 && validation_length >= 1,
          ErrorKind::kInvalidArgument, "synth: split lengths must be >= 1");
  if (null_class) {
    require(*null_class >= 0 && static_cast<std::size_t>(*null_class) < class_count,
            ErrorKind::kInvalidArgument, "synth: nullClass must lie in [0, classCount)");
  }
  if (!signatures.empty()) {
    require(signatures.size() == class_count, ErrorKind::kInvalidArgument,
            "synth: one signature per class required");
    for (const auto& s : signatures) {
      require(s.offset.size() == channels && s.frequency.size() == channels &&
                  s.amplitude.size() == channels,
              ErrorKind::kInvalidArgument, "synth: signature vectors must have one entry per channel");
    }
  }
}

SynthSpec read_synth_spec(const std::filesystem::path& path) {
  SynthSpec spec;
  for (const auto& e : read_key_values(path)) {
    const std::string what = path.string() + ":" + std::to_string(e.line) + " " + e.key;
    if (e.key == "synth.classCount") spec.class_count = parse_count(e.value, what);
    else if (e.key == "synth.channels") spec.channels = parse_count(e.value, what);
    else if (e.key == "synth.minDuration") spec.min_duration = parse_count(e.value, what);
    else if (e.key == "synth.maxDuration") spec.max_duration = parse_count(e.value, what);
    else if (e.key == "synth.noiseStd") spec.noise_std = parse_real(e.value, what);
    else if (e.key == "synth.trainLength") spec.train_length = parse_count(e.value, what);
    else if (e.key == "synth.testLength") spec.test_length = parse_count(e.value, what);
    else if (e.key == "synth.validationLength") spec.validation_length = parse_count(e.value, what);
    else if (e.key == "synth.seed") spec.seed = parse_unsigned(e.value, what);
    else if (e.key == "synth.nullClass") {
      if (e.value == "none") spec.null_class.reset();
      else spec.null_class = static_cast<int>(parse_count(e.value, what));
    } else {
      fail(ErrorKind::kParse, what + ": unknown key");
    }
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kParse, path.string() + ": " + e.what());
  }
  return spec;
}

std::vector<ClassSignature> default_signatures(std::size_t class_count, std::size_t channels,
                                               std::uint64_t seed) {
  Rng rng(seed ^ 0x5167'6e61'7475'7265ULL);
  std::uniform_real_distribution<double> offset(-1.0, 1.0);
  std::uniform_real_distribution<double> frequency(0.005, 0.05);
  std::uniform_real_distribution<double> amplitude(0.1, 0.5);
  std::vector<ClassSignature> out(class_count);
  for (auto& s : out) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      s.offset.push_back(offset(rng));
      s.frequency.push_back(frequency(rng));
      s.amplitude.push_back(amplitude(rng));
    }
  }
  return out;
}

LabeledSequence synth_sequence(const SynthSpec& spec, std::size_t length, std::uint64_t stream) {
  spec.validate();
  const auto signatures = spec.signatures.empty()
                              ? default_signatures(spec.class_count, spec.channels, spec.seed)
                              : spec.signatures;
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  Rng rng(seq);
  std::uniform_int_distribution<std::size_t> duration(spec.min_duration, spec.max_duration);
  std::uniform_int_distribution<int> klass(0, static_cast<int>(spec.class_count) - 1);
  std::normal_distribution<double> noise(0.0, 1.0);

  LabeledSequence out;
  out.dims = spec.channels;
  out.length = length;
  out.features.resize(spec.channels * length);
  out.labels.resize(length);
  for (std::size_t ch = 0; ch < spec.channels; ++ch) out.channel_names.push_back("ch" + std::to_string(ch));

  std::size_t t = 0;
  while (t < length) {
    const int c = klass(rng);
    const std::size_t end = std::min(length, t + duration(rng));
    const ClassSignature& sig = signatures[static_cast<std::size_t>(c)];
    for (std::size_t phase = 0; t < end; ++t, ++phase) {
      out.labels[t] = c;
      for (std::size_t ch = 0; ch < spec.channels; ++ch) {
        double v = sig.offset[ch] +
                   sig.amplitude[ch] * std::sin(2.0 * std::numbers::pi * sig.frequency[ch] *
                                                static_cast<double>(phase));
        if (spec.noise_std > 0.0) v += spec.noise_std * noise(rng);
        out.at(ch, t) = static_cast<float>(v);
      }
    }
  }
  return out;
}

SynthDataset synth_generate(const SynthSpec& spec) {
  return {synth_sequence(spec, spec.train_length, 1), synth_sequence(spec, spec.test_length, 2),
          synth_sequence(spec, spec.validation_length, 3)};
}

// ---------------------------------------------------------------------------
// Splits

std::vector<std::size_t> split_counts(std::span<const std::size_t> lengths,
                                      std::span<const double> fractions) {
  require(!fractions.empty(), ErrorKind::kInvalidArgument, "split: no fractions given");
  double total_fraction = 0.0;
  for (double f : fractions) {
    require(f > 0.0, ErrorKind::kInvalidArgument, "split: fractions must be positive");
    total_fraction += f;
  }
  require(std::abs(total_fraction - 1.0) < 1e-9, ErrorKind::kInvalidArgument,
          "split: fractions must sum to 1");
  const std::size_t n = lengths.size();
  const std::size_t k = fractions.size();
  require(n >= k, ErrorKind::kNoData,
          "split: " + std::to_string(n) + " sequences cannot fill " + std::to_string(k) + " splits");

  std::vector<double> cumulative{0.0};
  for (std::size_t len : lengths) cumulative.push_back(cumulative.back() + static_cast<double>(len));
  const double total = cumulative.back();

  std::vector<std::size_t> counts;
  std::size_t start = 0;
  double target_share = 0.0;
  for (std::size_t s = 0; s + 1 < k; ++s) {
    target_share += fractions[s];
    const double target = target_share * total;
    const std::size_t remaining_splits = k - s - 1;
    std::size_t best = start + 1;
    for (std::size_t end = start + 1; end + remaining_splits <= n; ++end) {
      if (std::abs(cumulative[end] - target) < std::abs(cumulative[best] - target)) best = end;
    }
    counts.push_back(best - start);
    start = best;
  }
  counts.push_back(n - start);
  return counts;
}

std::vector<std::vector<LabeledSequence>> split_by_fraction(std::vector<LabeledSequence> sequences,
                                                            std::span<const double> fractions) {
  std::vector<std::size_t> lengths;
  for (const auto& s : sequences) lengths.push_back(s.length);
  const auto counts = split_counts(lengths, fractions);
  std::vector<std::vector<LabeledSequence>> splits(counts.size());
  std::size_t next = 0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    for (std::size_t i = 0; i < counts[s]; ++i) splits[s].push_back(std::move(sequences[next++]));
  }
  return splits;
}

}  // namespace densehar
