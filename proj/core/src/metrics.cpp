#include "densehar/metrics.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

#include "densehar/error.hpp"
#include "densehar/key_value.hpp"

namespace densehar {
namespace {

void check_lengths(std::span<const int> gt, std::span<const int> pred, const char* what) {
  if (gt.size() != pred.size()) {
    fail(ErrorKind::kDimensionMismatch, std::string(what) + ": ground truth has " +
                                            std::to_string(gt.size()) + " samples, prediction has " +
                                            std::to_string(pred.size()));
  }
}

void check_labels(std::span<const int> labels, std::size_t class_count, const char* what) {
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] < 0 || static_cast<std::size_t>(labels[j]) >= class_count) {
      fail(ErrorKind::kLabelOutOfRange, std::string(what) + ": label " + std::to_string(labels[j]) +
                                            " at sample " + std::to_string(j) + " is outside [0, " +
                                            std::to_string(class_count) + ")");
    }
  }
}

double safe_ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

struct Run {
  std::size_t start;
  std::size_t end;
};

// run_of[j] indexes into the returned runs.
std::vector<Run> runs_of(std::span<const int> labels, std::vector<std::size_t>& run_of) {
  std::vector<Run> runs;
  run_of.resize(labels.size());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (j == 0 || labels[j] != labels[j - 1]) runs.push_back({j, j});
    runs.back().end = j + 1;
    run_of[j] = runs.size() - 1;
  }
  return runs;
}

}  // namespace

double accuracy(std::span<const int> gt, std::span<const int> pred) {
  check_lengths(gt, pred, "accuracy");
  require(!gt.empty(), ErrorKind::kNoData, "accuracy: empty sequences");
  std::size_t hits = 0;
  for (std::size_t j = 0; j < gt.size(); ++j) hits += gt[j] == pred[j];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(gt.size());
}

namespace {

std::vector<ClassScores> class_scores(std::span<const int> gt, std::span<const int> pred,
                                      std::size_t class_count) {
  std::vector<std::size_t> tp(class_count, 0), fp(class_count, 0), fn(class_count, 0);
  for (std::size_t j = 0; j < gt.size(); ++j) {
    const auto g = static_cast<std::size_t>(gt[j]);
    const auto p = static_cast<std::size_t>(pred[j]);
    if (g == p) {
      ++tp[g];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  std::vector<ClassScores> out(class_count);
  for (std::size_t c = 0; c < class_count; ++c) {
    const double p = safe_ratio(tp[c], tp[c] + fp[c]);
    const double r = safe_ratio(tp[c], tp[c] + fn[c]);
    out[c].precision = 100.0 * p;
    out[c].recall = 100.0 * r;
    out[c].f = p + r > 0.0 ? 100.0 * 2.0 * p * r / (p + r) : 0.0;
    out[c].support = tp[c] + fn[c];
  }
  return out;
}

double weighted_from_scores(const std::vector<ClassScores>& scores, std::optional<int> excluded) {
  std::size_t total = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (excluded && static_cast<std::size_t>(*excluded) == c) continue;
    total += scores[c].support;
  }
  if (total == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (excluded && static_cast<std::size_t>(*excluded) == c) continue;
    sum += static_cast<double>(scores[c].support) / static_cast<double>(total) * scores[c].f;
  }
  return sum;
}

}  // namespace

double weighted_f(std::span<const int> gt, std::span<const int> pred, const LabelSpace& space,
                  bool include_null) {
  check_lengths(gt, pred, "weighted_f");
  check_labels(gt, space.class_count, "weighted_f");
  check_labels(pred, space.class_count, "weighted_f");
  const auto scores = class_scores(gt, pred, space.class_count);
  return weighted_from_scores(scores, include_null ? std::nullopt : space.null_class);
}

std::size_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const noexcept {
  std::size_t s = 0;
  for (std::size_t b = 0; b < n_; ++b) s += at(truth, b);
  return s;
}

std::vector<double> ConfusionMatrix::row_normalized() const {
  std::vector<double> out(counts_.size(), 0.0);
  for (std::size_t a = 0; a < n_; ++a) {
    const std::size_t sum = row_sum(a);
    for (std::size_t b = 0; b < n_; ++b) out[a * n_ + b] = safe_ratio(at(a, b), sum);
  }
  return out;
}

ConfusionMatrix confusion(std::span<const int> gt, std::span<const int> pred, std::size_t class_count) {
  check_lengths(gt, pred, "confusion");
  check_labels(gt, class_count, "confusion");
  check_labels(pred, class_count, "confusion");
  ConfusionMatrix m(class_count);
  for (std::size_t j = 0; j < gt.size(); ++j) {
    ++m.at(static_cast<std::size_t>(gt[j]), static_cast<std::size_t>(pred[j]));
  }
  return m;
}

std::vector<Segment> segmentize(std::span<const int> gt, std::span<const int> pred) {
  check_lengths(gt, pred, "segmentize");
  std::vector<Segment> segments;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    if (segments.empty() || segments.back().gt != gt[j] || segments.back().pred != pred[j]) {
      segments.push_back({j, j + 1, gt[j], pred[j]});
    } else {
      segments.back().end = j + 1;
    }
  }
  return segments;
}

std::string_view outcome_name(Outcome outcome) noexcept {
  switch (outcome) {
    case Outcome::kTruePositive: return "TP";
    case Outcome::kTrueNegative: return "TN";
    case Outcome::kOverfill: return "Overfill";
    case Outcome::kUnderfill: return "Underfill";
    case Outcome::kInsertion: return "Insertion";
    case Outcome::kFragmentation: return "Fragmentation";
    case Outcome::kDeletion: return "Deletion";
    case Outcome::kSubstitution: return "Substitution";
  }
  return "?";
}

std::size_t MisalignmentReport::total() const noexcept {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::vector<Outcome> classify_outcomes(std::span<const int> gt, std::span<const int> pred,
                                       std::optional<int> null_class) {
  check_lengths(gt, pred, "misalignment");
  std::vector<std::size_t> gt_run_of, pred_run_of;
  const auto gt_runs = runs_of(gt, gt_run_of);
  const auto pred_runs = runs_of(pred, pred_run_of);

  // A gt event is "detected" if any of its samples is predicted correctly; a
  // predicted event is "anchored" if it overlaps ground truth of its class.
  std::vector<bool> detected(gt_runs.size(), false), anchored(pred_runs.size(), false);
  for (std::size_t j = 0; j < gt.size(); ++j) {
    if (gt[j] == pred[j]) {
      detected[gt_run_of[j]] = true;
      anchored[pred_run_of[j]] = true;
    }
  }

  const auto is_null = [&](int label) { return null_class && label == *null_class; };
  std::vector<Outcome> out(gt.size());
  for (const Segment& seg : segmentize(gt, pred)) {
    Outcome o;
    if (seg.gt == seg.pred) {
      o = is_null(seg.gt) ? Outcome::kTrueNegative : Outcome::kTruePositive;
    } else if (!is_null(seg.gt) && !is_null(seg.pred)) {
      o = Outcome::kSubstitution;
    } else if (!is_null(seg.gt)) {
      const std::size_t event = gt_run_of[seg.start];
      if (!detected[event]) {
        o = Outcome::kDeletion;
      } else if (seg.start == gt_runs[event].start || seg.end == gt_runs[event].end) {
        o = Outcome::kUnderfill;
      } else {
        o = Outcome::kFragmentation;
      }
    } else {
      o = anchored[pred_run_of[seg.start]] ? Outcome::kOverfill : Outcome::kInsertion;
    }
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(seg.start),
              out.begin() + static_cast<std::ptrdiff_t>(seg.end), o);
  }
  return out;
}

MisalignmentReport misalignment(std::span<const int> gt, std::span<const int> pred,
                                std::optional<int> null_class) {
  MisalignmentReport report;
  for (Outcome o : classify_outcomes(gt, pred, null_class)) ++report.counts[static_cast<std::size_t>(o)];
  return report;
}

ClassificationReport classification_report(std::span<const int> gt, std::span<const int> pred,
                                           const LabelSpace& space) {
  ClassificationReport r;
  r.confusion = confusion(gt, pred, space.class_count);
  r.accuracy = accuracy(gt, pred);
  r.per_class = class_scores(gt, pred, space.class_count);
  r.fw_no_null = weighted_from_scores(r.per_class, space.null_class);
  if (space.null_class) r.fw_with_null = weighted_from_scores(r.per_class, std::nullopt);
  return r;
}

std::string format_report(const ClassificationReport& cls, const MisalignmentReport& mis,
                          const LabelSpace& space) {
  std::ostringstream out;
  char line[160];
  const std::size_t total = mis.total();
  out << "samples: " << total << "\n";
  std::snprintf(line, sizeof(line), "AC    %7.2f\nF_w   %7.2f\n", cls.accuracy, cls.fw_no_null);
  out << line;
  if (cls.fw_with_null) {
    std::snprintf(line, sizeof(line), "NF_w  %7.2f\n", *cls.fw_with_null);
    out << line;
  }
  out << "\nclass  precision  recall      F  support\n";
  for (std::size_t c = 0; c < cls.per_class.size(); ++c) {
    const auto& s = cls.per_class[c];
    std::snprintf(line, sizeof(line), "%5zu%s %9.2f %7.2f %6.2f %8zu\n", c,
                  space.null_class && static_cast<std::size_t>(*space.null_class) == c ? "*" : " ",
                  s.precision, s.recall, s.f, s.support);
    out << line;
  }
  out << "\nmisalignment (samples, share)\n";
  for (std::size_t k = 0; k < kOutcomeCount; ++k) {
    std::snprintf(line, sizeof(line), "%-14s %8zu %7.4f\n",
                  std::string(outcome_name(static_cast<Outcome>(k))).c_str(), mis.counts[k],
                  total ? static_cast<double>(mis.counts[k]) / static_cast<double>(total) : 0.0);
    out << line;
  }
  out << "\nconfusion (rows: truth, columns: prediction)\n";
  for (std::size_t a = 0; a < cls.confusion.class_count(); ++a) {
    for (std::size_t b = 0; b < cls.confusion.class_count(); ++b) {
      std::snprintf(line, sizeof(line), "%s%8zu", b ? " " : "", cls.confusion.at(a, b));
      out << line;
    }
    out << "\n";
  }
  return out.str();
}

std::string metrics_csv(const ClassificationReport& cls, const MisalignmentReport& mis) {
  std::string out = "metric,value\n";
  const auto row = [&out](const std::string& key, double value) {
    out += key + "," + format_real(value) + "\n";
  };
  row("AC", cls.accuracy);
  row("F_w", cls.fw_no_null);
  if (cls.fw_with_null) row("NF_w", *cls.fw_with_null);
  for (std::size_t c = 0; c < cls.per_class.size(); ++c) {
    const auto id = std::to_string(c);
    row("precision_" + id, cls.per_class[c].precision);
    row("recall_" + id, cls.per_class[c].recall);
    row("f_" + id, cls.per_class[c].f);
    row("support_" + id, static_cast<double>(cls.per_class[c].support));
  }
  for (std::size_t k = 0; k < kOutcomeCount; ++k) {
    row(std::string(outcome_name(static_cast<Outcome>(k))), static_cast<double>(mis.counts[k]));
  }
  return out;
}

std::map<std::string, double> parse_metrics_csv(std::string_view text) {
  std::map<std::string, double> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    const auto line = trim(text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
    pos = end == std::string_view::npos ? text.size() : end + 1;
    ++line_no;
    if (line.empty() || (line_no == 1 && line == "metric,value")) continue;
    const auto comma = line.find(',');
    require(comma != std::string_view::npos, ErrorKind::kParse,
            "metrics CSV line " + std::to_string(line_no) + ": expected metric,value");
    out[std::string(line.substr(0, comma))] =
        parse_real(line.substr(comma + 1), "metrics CSV line " + std::to_string(line_no));
  }
  return out;
}

std::string confusion_csv(const ConfusionMatrix& matrix) {
  std::string out = "truth";
  for (std::size_t b = 0; b < matrix.class_count(); ++b) out += ",pred_" + std::to_string(b);
  out += "\n";
  for (std::size_t a = 0; a < matrix.class_count(); ++a) {
    out += std::to_string(a);
    for (std::size_t b = 0; b < matrix.class_count(); ++b) out += "," + std::to_string(matrix.at(a, b));
    out += "\n";
  }
  return out;
}

}  // namespace densehar
