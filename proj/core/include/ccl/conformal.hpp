#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ccl/prob.hpp"

namespace ccl {

enum class ScoreKind { diff, prop };

/// Configuration of the non-conformity score over a probabilistic prediction.
///
/// diff: margin of the best competing class over the candidate.
/// prop: ratio of the best competing probability to the candidate's,
///       softened by gamma.
struct NonConformityMeasure {
  ScoreKind kind = ScoreKind::diff;
  double gamma = 0.0;
  /// With prop, gamma = 0 and a zero predicted probability the score is a
  /// division by zero. Default is to treat that as a configuration error;
  /// opting in maps it to +infinity instead.
  bool inf_on_zero_div = false;
};

/// Non-conformity of labeling p_hat's instance as class y.
double nonconformity(const NonConformityMeasure& measure, const ProbDist& p_hat, ClassIndex y);

/// Per-class conformal p-values, each on the grid {j/(L+1) : j = 0..L}.
///
/// When produced by a calibrator the candidate non-conformity scores are
/// carried along; they break ties for the all-zero fallback in the
/// normalizations.
class RawPValues {
 public:
  explicit RawPValues(std::vector<double> values);
  RawPValues(std::vector<double> values, std::vector<double> candidate_scores);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }
  std::span<const double> candidate_scores() const { return scores_; }

 private:
  std::vector<double> values_;
  std::vector<double> scores_;  // empty unless produced by a calibrator
};

/// Frozen non-conformity scores of a calibration split plus the measure that
/// produced them. Immutable once built; queries are pure, so one calibrator
/// can serve concurrent lookups without synchronization.
class ConformalCalibrator {
 public:
  /// Score every (prediction, label) pair and store the sorted scores.
  static ConformalCalibrator calibrate(std::span<const ProbDist> predictions,
                                       std::span<const ClassIndex> labels,
                                       const NonConformityMeasure& measure);

  std::size_t size() const { return scores_.size(); }
  std::size_t num_classes() const { return num_classes_; }
  const NonConformityMeasure& measure() const { return measure_; }
  std::span<const double> scores() const { return scores_; }

  /// p-value per candidate class: the fraction of calibration scores at
  /// least as large as the candidate's, out of L+1 (inclusive ties, binary
  /// search over the sorted scores).
  RawPValues p_values(const ProbDist& p_hat) const;

  std::string to_json() const;
  static ConformalCalibrator from_json(std::string_view text);

 private:
  ConformalCalibrator(std::vector<double> sorted_scores, NonConformityMeasure measure,
                      std::size_t num_classes);

  std::vector<double> scores_;
  NonConformityMeasure measure_;
  std::size_t num_classes_ = 0;
};

/// Scale all p-values by the maximum so the top class reaches degree 1.
/// All-zero input falls back to full plausibility on the class with minimal
/// non-conformity (lowest index when scores are unavailable).
PossDist normalize_max_ratio(const RawPValues& raw);

/// Set the argmax class (lowest index on ties) to degree 1, keep the rest.
PossDist normalize_argmax_one(const RawPValues& raw);

/// Prediction set at confidence 1-delta: classes whose p-value is >= delta.
/// May be empty or the full class space. delta must lie in (0,1).
std::vector<ClassIndex> prediction_set(const RawPValues& raw, double delta);

std::string_view to_string(ScoreKind kind);
ScoreKind score_kind_from_string(std::string_view name);

}  // namespace ccl
