#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace revis {

/// Resolved object labels for one generated caption. Labels are unique per
/// caption, so CHAIR_I counts distinct labels rather than instances.
struct CaptionObjects {
  std::set<std::string> mentioned;
  std::set<std::string> hallucinated;  // subset of mentioned
  std::size_t sentences_total = 1;
  std::size_t sentences_hallucinated = 0;

  /// Throws InvariantViolation.
  void validate() const;
};

struct ChairScores {
  double chair_i = 0.0;           // hallucinated / mentioned, pooled over the batch
  double chair_s = 0.0;           // captions with >= 1 hallucinated object / captions
  double chair_s_sentence = 0.0;  // hallucinated sentences / sentences
};

ChairScores chair_scores(std::span<const CaptionObjects> batch);

struct BinaryOutcomes {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
};

/// Metrics whose denominator vanishes are nullopt. f1 = 2tp / (2tp + fp + fn),
/// the harmonic mean of precision and recall whenever both are defined.
struct PopeScores {
  double accuracy = 0.0;
  std::optional<double> recall;
  std::optional<double> precision;
  std::optional<double> f1;
};

/// Throws ZeroDenominator when there are no outcomes at all.
PopeScores pope_scores(const BinaryOutcomes& o);

/// Unwraps a PopeScores field, throwing ZeroDenominator when undefined.
double require_metric(const std::optional<double>& value, const char* name);

/// Mixed JSON-lines input. Caption records carry "mentioned"; POPE records
/// carry "label" and "prediction" (bool or "yes"/"no") or aggregate
/// "tp"/"fp"/"tn"/"fn" counts. Blank lines are skipped.
struct MetricsInput {
  std::vector<CaptionObjects> captions;
  BinaryOutcomes pope;
  std::size_t pope_records = 0;
};

/// Throws ParseError naming the 1-based line number.
MetricsInput parse_metrics_jsonl(std::istream& in);

}  // namespace revis
