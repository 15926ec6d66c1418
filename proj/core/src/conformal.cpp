#include "ccl/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace ccl {

double nonconformity(const NonConformityMeasure& measure, const ProbDist& p_hat, ClassIndex y) {
  if (y >= p_hat.size()) {
    throw std::invalid_argument("class index " + std::to_string(y) + " out of range [0, " +
                                std::to_string(p_hat.size()) + ")");
  }
  if (measure.gamma < 0.0) {
    throw std::invalid_argument("non-conformity gamma must be >= 0, got " +
                                std::to_string(measure.gamma));
  }
  double best_other = 0.0;
  for (std::size_t j = 0; j < p_hat.size(); ++j) {
    if (j != y) best_other = std::max(best_other, p_hat[j]);
  }
  switch (measure.kind) {
    case ScoreKind::diff:
      return best_other - p_hat[y];
    case ScoreKind::prop: {
      const double denom = p_hat[y] + measure.gamma;
      if (denom <= 0.0) {
        if (measure.inf_on_zero_div) return std::numeric_limits<double>::infinity();
        throw std::invalid_argument(
            "prop non-conformity with gamma = 0 hit a zero predicted probability for class " +
            std::to_string(y) + "; set gamma > 0 or enable inf_on_zero_div");
      }
      return best_other / denom;
    }
  }
  throw std::logic_error("unreachable score kind");
}

RawPValues::RawPValues(std::vector<double> values) : values_(std::move(values)) {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] >= 0.0 && values_[i] <= 1.0)) {
      throw std::invalid_argument("p-value out of [0,1] at index " + std::to_string(i));
    }
  }
}

RawPValues::RawPValues(std::vector<double> values, std::vector<double> candidate_scores)
    : RawPValues(std::move(values)) {
  if (candidate_scores.size() != values_.size()) {
    throw std::invalid_argument("candidate score count does not match p-value count");
  }
  scores_ = std::move(candidate_scores);
}

ConformalCalibrator::ConformalCalibrator(std::vector<double> sorted_scores,
                                         NonConformityMeasure measure, std::size_t num_classes)
    : scores_(std::move(sorted_scores)), measure_(measure), num_classes_(num_classes) {}

ConformalCalibrator ConformalCalibrator::calibrate(std::span<const ProbDist> predictions,
                                                   std::span<const ClassIndex> labels,
                                                   const NonConformityMeasure& measure) {
  if (predictions.empty()) {
    throw std::invalid_argument("calibration set is empty");
  }
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("calibration size mismatch: " +
                                std::to_string(predictions.size()) + " predictions vs " +
                                std::to_string(labels.size()) + " labels");
  }
  const std::size_t k = predictions.front().size();
  std::vector<double> scores;
  scores.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != k) {
      throw std::invalid_argument("calibration prediction " + std::to_string(i) +
                                  " has inconsistent class count");
    }
    scores.push_back(nonconformity(measure, predictions[i], labels[i]));
  }
  std::sort(scores.begin(), scores.end());
  return ConformalCalibrator(std::move(scores), measure, k);
}

RawPValues ConformalCalibrator::p_values(const ProbDist& p_hat) const {
  if (p_hat.size() != num_classes_) {
    throw std::invalid_argument("p_values dimension mismatch: " + std::to_string(p_hat.size()) +
                                " vs calibrator K = " + std::to_string(num_classes_));
  }
  const double denom = static_cast<double>(scores_.size() + 1);
  std::vector<double> values(num_classes_);
  std::vector<double> cand(num_classes_);
  for (std::size_t y = 0; y < num_classes_; ++y) {
    cand[y] = nonconformity(measure_, p_hat, y);
    const auto it = std::lower_bound(scores_.begin(), scores_.end(), cand[y]);
    values[y] = static_cast<double>(scores_.end() - it) / denom;
  }
  return RawPValues(std::move(values), std::move(cand));
}

std::string ConformalCalibrator::to_json() const {
  nlohmann::ordered_json doc;
  doc["schema-version"] = 1;
  doc["measure"] = {{"kind", std::string(to_string(measure_.kind))},
                    {"gamma", measure_.gamma},
                    {"inf-on-zero-div", measure_.inf_on_zero_div}};
  doc["K"] = num_classes_;
  doc["scores"] = scores_;
  return doc.dump(2);
}

ConformalCalibrator ConformalCalibrator::from_json(std::string_view text) {
  const auto doc = nlohmann::json::parse(text);
  NonConformityMeasure measure;
  measure.kind = score_kind_from_string(doc.at("measure").at("kind").get<std::string>());
  measure.gamma = doc.at("measure").at("gamma").get<double>();
  measure.inf_on_zero_div = doc.at("measure").value("inf-on-zero-div", false);
  auto scores = doc.at("scores").get<std::vector<double>>();
  const auto k = doc.at("K").get<std::size_t>();
  if (scores.empty()) throw std::invalid_argument("calibrator document has no scores");
  if (k < 2) throw std::invalid_argument("calibrator document has K < 2");
  if (!std::is_sorted(scores.begin(), scores.end())) {
    std::sort(scores.begin(), scores.end());
  }
  return ConformalCalibrator(std::move(scores), measure, k);
}

namespace {

std::size_t fallback_class(const RawPValues& raw) {
  // Every candidate was less conforming than all calibration scores; the
  // grid cannot rank them, so the class with minimal non-conformity takes
  // full plausibility (index order breaks remaining ties).
  const auto scores = raw.candidate_scores();
  if (scores.empty()) return 0;
  return static_cast<std::size_t>(std::min_element(scores.begin(), scores.end()) -
                                  scores.begin());
}

}  // namespace

PossDist normalize_max_ratio(const RawPValues& raw) {
  const auto vals = raw.values();
  const double maxv = *std::max_element(vals.begin(), vals.end());
  std::vector<double> degrees(vals.size(), 0.0);
  if (maxv <= 0.0) {
    degrees[fallback_class(raw)] = 1.0;
  } else {
    for (std::size_t i = 0; i < vals.size(); ++i) degrees[i] = vals[i] / maxv;
  }
  return PossDist(std::move(degrees));
}

PossDist normalize_argmax_one(const RawPValues& raw) {
  const auto vals = raw.values();
  const double maxv = *std::max_element(vals.begin(), vals.end());
  std::vector<double> degrees(vals.begin(), vals.end());
  if (maxv <= 0.0) {
    degrees[fallback_class(raw)] = 1.0;
  } else {
    const auto top = static_cast<std::size_t>(
        std::max_element(vals.begin(), vals.end()) - vals.begin());
    degrees[top] = 1.0;
  }
  return PossDist(std::move(degrees));
}

std::vector<ClassIndex> prediction_set(const RawPValues& raw, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("delta must lie in (0,1), got " + std::to_string(delta));
  }
  std::vector<ClassIndex> set;
  for (std::size_t y = 0; y < raw.size(); ++y) {
    if (raw[y] >= delta) set.push_back(y);
  }
  return set;
}

std::string_view to_string(ScoreKind kind) {
  return kind == ScoreKind::diff ? "diff" : "prop";
}

ScoreKind score_kind_from_string(std::string_view name) {
  if (name == "diff") return ScoreKind::diff;
  if (name == "prop") return ScoreKind::prop;
  throw std::invalid_argument("unknown non-conformity kind '" + std::string(name) +
                              "' (expected diff or prop)");
}

}  // namespace ccl
