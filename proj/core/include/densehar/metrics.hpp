#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace densehar {

struct LabelSpace {
  std::size_t class_count = 2;
  std::optional<int> null_class;
};

// Every metric below takes ground truth first and requires equal lengths.
// Percentages are in [0, 100].

double accuracy(std::span<const int> gt, std::span<const int> pred);

// Sample-weighted F1 over classes, weights n_i / sum n_j from the ground
// truth. With include_null false the null class is dropped and the weights
// renormalised over the remaining classes; without a declared null class the
// flag has no effect. Zero denominators give 0, never NaN.
double weighted_f(std::span<const int> gt, std::span<const int> pred, const LabelSpace& space,
                  bool include_null);

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t class_count = 0)
      : n_(class_count), counts_(class_count * class_count, 0) {}

  std::size_t class_count() const noexcept { return n_; }
  std::size_t& at(std::size_t truth, std::size_t predicted) noexcept { return counts_[truth * n_ + predicted]; }
  std::size_t at(std::size_t truth, std::size_t predicted) const noexcept {
    return counts_[truth * n_ + predicted];
  }
  std::size_t total() const noexcept;
  std::size_t row_sum(std::size_t truth) const noexcept;
  // Each row divided by its sum; empty rows stay zero.
  std::vector<double> row_normalized() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t n_;
  std::vector<std::size_t> counts_;
};

ConfusionMatrix confusion(std::span<const int> gt, std::span<const int> pred, std::size_t class_count);

struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  int gt = 0;
  int pred = 0;
  friend bool operator==(const Segment&, const Segment&) = default;
};

// Maximal runs on which both sequences are constant.
std::vector<Segment> segmentize(std::span<const int> gt, std::span<const int> pred);

enum class Outcome : std::size_t {
  kTruePositive,
  kTrueNegative,
  kOverfill,
  kUnderfill,
  kInsertion,
  kFragmentation,
  kDeletion,
  kSubstitution,
};
inline constexpr std::size_t kOutcomeCount = 8;
std::string_view outcome_name(Outcome outcome) noexcept;

struct MisalignmentReport {
  std::array<std::size_t, kOutcomeCount> counts{};

  std::size_t operator[](Outcome o) const noexcept { return counts[static_cast<std::size_t>(o)]; }
  std::size_t total() const noexcept;
  friend bool operator==(const MisalignmentReport&, const MisalignmentReport&) = default;
};

// Per-sample outcome under the segment rules documented in METRICS.md.
std::vector<Outcome> classify_outcomes(std::span<const int> gt, std::span<const int> pred,
                                       std::optional<int> null_class);
MisalignmentReport misalignment(std::span<const int> gt, std::span<const int> pred,
                                std::optional<int> null_class);

struct ClassScores {
  double precision = 0.0;  // percent
  double recall = 0.0;
  double f = 0.0;
  std::size_t support = 0;
};

struct ClassificationReport {
  double accuracy = 0.0;
  double fw_no_null = 0.0;
  std::optional<double> fw_with_null;  // absent when the label space has no null class
  std::vector<ClassScores> per_class;
  ConfusionMatrix confusion;
};

ClassificationReport classification_report(std::span<const int> gt, std::span<const int> pred,
                                           const LabelSpace& space);

std::string format_report(const ClassificationReport& cls, const MisalignmentReport& mis,
                          const LabelSpace& space);
// Flat `metric,value` CSV.
std::string metrics_csv(const ClassificationReport& cls, const MisalignmentReport& mis);
std::map<std::string, double> parse_metrics_csv(std::string_view text);
std::string confusion_csv(const ConfusionMatrix& matrix);

}  // namespace densehar
