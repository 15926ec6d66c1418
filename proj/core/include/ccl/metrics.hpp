#pragma once

#include <span>
#include <string>
#include <vector>

#include "ccl/prob.hpp"

namespace ccl {

/// Per-delta rates of the event "possibility of the true label <= delta".
struct ValidityReport {
  std::vector<double> deltas;
  std::vector<double> error_rates;
  std::size_t sample_count = 0;
  std::string pi_kind = "normalized";  // which possibility flavor was scored

  std::string to_json() const;
  std::string to_csv() const;
};

/// Expected calibration error with equal-width confidence bins over (0,1].
struct EceReport {
  double ece = 0.0;
  std::size_t bin_count = 15;
  std::vector<double> bin_confidence;  ///< mean confidence per bin (0 if empty)
  std::vector<double> bin_accuracy;    ///< accuracy per bin (0 if empty)
  std::vector<std::size_t> bin_counts;
  std::size_t sample_count = 0;

  std::string to_json() const;
  std::string to_csv() const;
};

/// Fraction of samples whose true-label possibility is <= delta.
double strong_validity_error(std::span<const PossDist> pis, std::span<const ClassIndex> labels,
                             double delta);

/// Row-based variant for raw p-value tables (raw values need not reach 1).
double strong_validity_error(std::span<const std::vector<double>> rows,
                             std::span<const ClassIndex> labels, double delta);

ValidityReport validity_report(std::span<const PossDist> pis, std::span<const ClassIndex> labels,
                               std::span<const double> deltas, std::string pi_kind = "normalized");

ValidityReport validity_report(std::span<const std::vector<double>> rows,
                               std::span<const ClassIndex> labels, std::span<const double> deltas,
                               std::string pi_kind);

/// Fraction of prediction sets covering the true label.
double coverage(std::span<const std::vector<ClassIndex>> sets, std::span<const ClassIndex> labels);

/// Per-rank mean possibility degrees: each row is sorted descending before
/// averaging, so position 0 tracks the most plausible class of every sample.
std::vector<double> efficiency_profile(std::span<const PossDist> pis);

/// Standard expected calibration error. Confidence is the max predicted
/// probability, binned into `bins` right-closed equal-width bins over (0,1];
/// edge ties fall into the lower bin, empty bins contribute nothing.
EceReport ece(std::span<const ProbDist> predictions, std::span<const ClassIndex> labels,
              std::size_t bins = 15);

/// Fraction of samples whose argmax prediction (lowest index on ties)
/// equals the label.
double accuracy(std::span<const ProbDist> predictions, std::span<const ClassIndex> labels);

}  // namespace ccl
