#include "ccl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ccl {

namespace {

void require_equal_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + " length mismatch: " + std::to_string(a) +
                                " vs " + std::to_string(b));
  }
  if (a == 0) {
    throw std::invalid_argument(std::string(what) + " got empty input");
  }
}

}  // namespace

namespace {

template <typename Rows>
double validity_error_impl(const Rows& rows, std::span<const ClassIndex> labels, double delta) {
  require_equal_lengths(rows.size(), labels.size(), "strong_validity_error");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("delta must lie in (0,1), got " + std::to_string(delta));
  }
  std::size_t errors = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (labels[i] >= rows[i].size()) {
      throw std::invalid_argument("label out of range at sample " + std::to_string(i));
    }
    if (rows[i][labels[i]] <= delta) ++errors;
  }
  return static_cast<double>(errors) / static_cast<double>(rows.size());
}

}  // namespace

double strong_validity_error(std::span<const PossDist> pis, std::span<const ClassIndex> labels,
                             double delta) {
  return validity_error_impl(pis, labels, delta);
}

double strong_validity_error(std::span<const std::vector<double>> rows,
                             std::span<const ClassIndex> labels, double delta) {
  return validity_error_impl(rows, labels, delta);
}

ValidityReport validity_report(std::span<const PossDist> pis, std::span<const ClassIndex> labels,
                               std::span<const double> deltas, std::string pi_kind) {
  ValidityReport report;
  report.deltas.assign(deltas.begin(), deltas.end());
  report.sample_count = pis.size();
  report.pi_kind = std::move(pi_kind);
  for (double d : deltas) {
    report.error_rates.push_back(strong_validity_error(pis, labels, d));
  }
  return report;
}

ValidityReport validity_report(std::span<const std::vector<double>> rows,
                               std::span<const ClassIndex> labels, std::span<const double> deltas,
                               std::string pi_kind) {
  ValidityReport report;
  report.deltas.assign(deltas.begin(), deltas.end());
  report.sample_count = rows.size();
  report.pi_kind = std::move(pi_kind);
  for (double d : deltas) {
    report.error_rates.push_back(strong_validity_error(rows, labels, d));
  }
  return report;
}

double coverage(std::span<const std::vector<ClassIndex>> sets,
                std::span<const ClassIndex> labels) {
  require_equal_lengths(sets.size(), labels.size(), "coverage");
  std::size_t covered = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (std::find(sets[i].begin(), sets[i].end(), labels[i]) != sets[i].end()) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(sets.size());
}

std::vector<double> efficiency_profile(std::span<const PossDist> pis) {
  if (pis.empty()) {
    throw std::invalid_argument("efficiency_profile got empty input");
  }
  const std::size_t k = pis.front().size();
  std::vector<double> means(k, 0.0);
  std::vector<double> row(k);
  for (const auto& pi : pis) {
    if (pi.size() != k) {
      throw std::invalid_argument("efficiency_profile rows have inconsistent class counts");
    }
    row.assign(pi.degrees().begin(), pi.degrees().end());
    std::sort(row.begin(), row.end(), std::greater<>());
    for (std::size_t r = 0; r < k; ++r) means[r] += row[r];
  }
  for (auto& m : means) m /= static_cast<double>(pis.size());
  return means;
}

EceReport ece(std::span<const ProbDist> predictions, std::span<const ClassIndex> labels,
              std::size_t bins) {
  require_equal_lengths(predictions.size(), labels.size(), "ece");
  if (bins < 1) {
    throw std::invalid_argument("ece needs at least 1 bin");
  }
  EceReport report;
  report.bin_count = bins;
  report.sample_count = predictions.size();
  report.bin_confidence.assign(bins, 0.0);
  report.bin_accuracy.assign(bins, 0.0);
  report.bin_counts.assign(bins, 0);

  std::vector<double> conf_sum(bins, 0.0);
  std::vector<std::size_t> correct(bins, 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const ClassIndex top = predictions[i].argmax();
    const double conf = predictions[i][top];
    // Right-closed bins over (0,1]: bin b covers ((b-1)/B, b/B].
    std::size_t b = static_cast<std::size_t>(
        std::ceil(conf * static_cast<double>(bins)));
    b = std::clamp<std::size_t>(b, 1, bins) - 1;
    conf_sum[b] += conf;
    correct[b] += (top == labels[i]) ? 1 : 0;
    report.bin_counts[b] += 1;
  }
  double e = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (report.bin_counts[b] == 0) continue;
    const double nb = static_cast<double>(report.bin_counts[b]);
    report.bin_confidence[b] = conf_sum[b] / nb;
    report.bin_accuracy[b] = static_cast<double>(correct[b]) / nb;
    e += nb / static_cast<double>(predictions.size()) *
         std::abs(report.bin_accuracy[b] - report.bin_confidence[b]);
  }
  report.ece = e;
  return report;
}

double accuracy(std::span<const ProbDist> predictions, std::span<const ClassIndex> labels) {
  require_equal_lengths(predictions.size(), labels.size(), "accuracy");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].argmax() == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

std::string ValidityReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["schema-version"] = 1;
  doc["pi-kind"] = pi_kind;
  doc["sample-count"] = sample_count;
  doc["deltas"] = deltas;
  doc["error-rates"] = error_rates;
  return doc.dump(2);
}

std::string ValidityReport::to_csv() const {
  std::ostringstream out;
  out << "# schema-version: 1\n";
  out << "delta,error_rate,sample_count,pi_kind\n";
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    out << deltas[i] << "," << error_rates[i] << "," << sample_count << "," << pi_kind << "\n";
  }
  return out.str();
}

std::string EceReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["schema-version"] = 1;
  doc["ece"] = ece;
  doc["bin-count"] = bin_count;
  doc["sample-count"] = sample_count;
  doc["bin-confidence"] = bin_confidence;
  doc["bin-accuracy"] = bin_accuracy;
  doc["bin-counts"] = bin_counts;
  return doc.dump(2);
}

std::string EceReport::to_csv() const {
  std::ostringstream out;
  out << "# schema-version: 1\n";
  out << "bin,lower,upper,confidence_mean,accuracy,count\n";
  for (std::size_t b = 0; b < bin_count; ++b) {
    const double width = 1.0 / static_cast<double>(bin_count);
    out << b << "," << static_cast<double>(b) * width << ","
        << static_cast<double>(b + 1) * width << "," << bin_confidence[b] << ","
        << bin_accuracy[b] << "," << bin_counts[b] << "\n";
  }
  return out.str();
}

}  // namespace ccl
