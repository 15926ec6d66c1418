#include "ccl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "ccl/credal_loss.hpp"

namespace ccl {

void validate(const TrainingConfig& cfg) {
  std::vector<std::string> problems;
  if (cfg.batch_size < 1) problems.push_back("batch_size must be >= 1");
  if (cfg.mu < 1) problems.push_back("mu must be >= 1");
  if (cfg.lambda_u < 0.0) problems.push_back("lambda_u must be >= 0");
  if (!(cfg.learning_rate > 0.0)) problems.push_back("learning_rate must be > 0");
  if (cfg.iterations < 1) problems.push_back("iterations must be >= 1");
  if (cfg.measure.gamma < 0.0) problems.push_back("measure gamma must be >= 0");
  if (cfg.mode == PseudoLabelMode::hard_threshold && !(cfg.tau > 0.0 && cfg.tau <= 1.0)) {
    problems.push_back("tau must lie in (0,1] for hard-threshold mode");
  }
  if (cfg.augmentation.sigma_weak < 0.0) problems.push_back("sigma_weak must be >= 0");
  if (cfg.augmentation.sigma_strong < 0.0) problems.push_back("sigma_strong must be >= 0");
  for (double d : cfg.deltas) {
    if (!(d > 0.0 && d < 1.0)) problems.push_back("deltas must lie in (0,1)");
  }
  if (cfg.ece_bins < 1) problems.push_back("ece_bins must be >= 1");
  if (cfg.threads < 1) problems.push_back("threads must be >= 1");
  if (!problems.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw std::invalid_argument(msg);
  }
}

std::vector<double> augment(std::span<const double> x, const AugmentationConfig& cfg,
                            AugmentStrength strength, Rng& rng) {
  std::vector<double> out(x.begin(), x.end());
  if (cfg.policy == AugmentationPolicy::identity) return out;
  const double sigma = strength == AugmentStrength::weak ? cfg.sigma_weak : cfg.sigma_strong;
  if (sigma == 0.0) return out;
  for (auto& v : out) v += sigma * rng.normal();
  return out;
}

std::optional<ProbDist> pseudo_label_hard(const ProbDist& p_hat, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("tau must lie in (0,1], got " + std::to_string(tau));
  }
  const ClassIndex top = p_hat.argmax();
  if (p_hat[top] >= tau) return ProbDist::degenerate(top, p_hat.size());
  return std::nullopt;
}

namespace {

// Chunked parallel map with deterministic slot writes; the caller reduces
// sequentially afterwards.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

double degenerate_kl(const ProbDist& p_hat, ClassIndex y) {
  return -std::log(std::max(p_hat[y], kKlEps));
}

struct UnlabeledEval {
  double loss = 0.0;
  bool has_gradient = false;
  std::vector<double> dlogits;        // p_hat(train view) - target
  std::vector<double> pi_descending;  // credal mode: sorted degrees
};

}  // namespace

StepResult train_step(Classifier& model, const LabeledBatch& labeled,
                      std::span<const std::vector<double>> unlabeled,
                      const ConformalCalibrator& calibrator, const TrainingConfig& cfg,
                      RngBundle& rngs) {
  if (labeled.features.empty()) {
    throw std::invalid_argument("train_step got an empty labeled batch");
  }
  if (labeled.features.size() != labeled.labels.size()) {
    throw std::invalid_argument("labeled batch features/labels length mismatch");
  }
  if (cfg.mode != PseudoLabelMode::none) {
    if (unlabeled.empty()) {
      throw std::invalid_argument("train_step got an empty unlabeled batch");
    }
    if (calibrator.num_classes() != model.num_classes()) {
      throw std::invalid_argument("calibrator K = " + std::to_string(calibrator.num_classes()) +
                                  " does not match model K = " +
                                  std::to_string(model.num_classes()));
    }
  }

  const std::size_t k = model.num_classes();
  std::vector<double> grad(model.parameter_count(), 0.0);
  StepResult step;

  // Labeled part: mean KL from the degenerate targets to the weak-view
  // predictions.
  const double inv_b = 1.0 / static_cast<double>(labeled.features.size());
  std::vector<double> dlogits(k);
  for (std::size_t i = 0; i < labeled.features.size(); ++i) {
    const auto xw = augment(labeled.features[i], cfg.augmentation, AugmentStrength::weak,
                            rngs.aug_weak);
    const ProbDist p_hat = model.forward(xw);
    const ClassIndex y = labeled.labels[i];
    if (y >= k) {
      throw std::invalid_argument("labeled batch label out of range at sample " +
                                  std::to_string(i));
    }
    step.labeled_loss += degenerate_kl(p_hat, y) * inv_b;
    for (std::size_t j = 0; j < k; ++j) {
      dlogits[j] = (p_hat[j] - (j == y ? 1.0 : 0.0)) * inv_b;
    }
    model.backward(xw, dlogits, grad);
  }

  // Unlabeled part.
  if (cfg.mode != PseudoLabelMode::none) {
    const std::size_t m = unlabeled.size();
    // Augmented views are drawn sequentially so the random streams do not
    // depend on the thread count.
    std::vector<std::vector<double>> view_pl(m), view_tr(m);
    for (std::size_t i = 0; i < m; ++i) {
      auto weak = augment(unlabeled[i], cfg.augmentation, AugmentStrength::weak, rngs.aug_weak);
      auto strong =
          augment(unlabeled[i], cfg.augmentation, AugmentStrength::strong, rngs.aug_strong);
      if (cfg.pseudo_view == PseudoLabelView::weak) {
        view_pl[i] = std::move(weak);
        view_tr[i] = std::move(strong);
      } else {
        view_pl[i] = std::move(strong);
        view_tr[i] = std::move(weak);
      }
    }

    std::vector<UnlabeledEval> evals(m);
    const Classifier& frozen = model;
    parallel_for(m, cfg.threads, [&](std::size_t i) {
      UnlabeledEval& e = evals[i];
      const ProbDist p_pl = frozen.forward(view_pl[i]);
      const ProbDist p_tr = frozen.forward(view_tr[i]);
      if (cfg.mode == PseudoLabelMode::credal) {
        const RawPValues raw = calibrator.p_values(p_pl);
        const PossDist pi = cfg.normalization == Normalization::max_ratio
                                ? normalize_max_ratio(raw)
                                : normalize_argmax_one(raw);
        const ProjectionResult proj = credal_projection(pi, p_tr);
        e.loss = proj.loss;
        e.has_gradient = !proj.inside;
        if (e.has_gradient) {
          e.dlogits.resize(k);
          for (std::size_t j = 0; j < k; ++j) e.dlogits[j] = p_tr[j] - proj.p_r[j];
        }
        e.pi_descending.assign(pi.degrees().begin(), pi.degrees().end());
        std::sort(e.pi_descending.begin(), e.pi_descending.end(), std::greater<>());
      } else {
        const auto pseudo = pseudo_label_hard(p_pl, cfg.tau);
        if (pseudo.has_value()) {
          e.loss = degenerate_kl(p_tr, pseudo->argmax());
          e.has_gradient = true;
          e.dlogits.resize(k);
          for (std::size_t j = 0; j < k; ++j) e.dlogits[j] = p_tr[j] - (*pseudo)[j];
        }
      }
    });

    // Deterministic sequential reduction.
    const double inv_m = 1.0 / static_cast<double>(m);
    if (cfg.mode == PseudoLabelMode::credal) step.mean_possibility.assign(k, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const UnlabeledEval& e = evals[i];
      step.unlabeled_loss += e.loss * inv_m;
      if (cfg.lambda_u > 0.0 && e.has_gradient) {
        for (std::size_t j = 0; j < k; ++j) dlogits[j] = cfg.lambda_u * inv_m * e.dlogits[j];
        model.backward(view_tr[i], dlogits, grad);
      }
      if (cfg.mode == PseudoLabelMode::credal) {
        for (std::size_t r = 0; r < k; ++r) step.mean_possibility[r] += e.pi_descending[r] * inv_m;
      }
    }
  }

  model.sgd_step(grad, cfg.learning_rate);
  return step;
}

namespace {

/// Shuffled index stream over [0, n) that reshuffles on exhaustion.
class BatchCycler {
 public:
  BatchCycler(std::size_t n, Rng rng) : rng_(std::move(rng)), order_(n) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(order_);
  }

  std::size_t next() {
    if (pos_ == order_.size()) {
      rng_.shuffle(order_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

ConformalCalibrator build_calibrator(const Classifier& model, const Dataset& calibration,
                                     const TrainingConfig& cfg, Rng& calib_rng) {
  std::vector<ProbDist> predictions;
  predictions.reserve(calibration.size());
  for (std::size_t i = 0; i < calibration.size(); ++i) {
    const auto x = augment(calibration.row(i), cfg.augmentation, cfg.calib_view, calib_rng);
    predictions.push_back(model.forward(x));
  }
  return ConformalCalibrator::calibrate(predictions, calibration.labels, cfg.measure);
}

double test_accuracy(const Classifier& model, const Dataset& test) {
  std::vector<ProbDist> predictions;
  predictions.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) predictions.push_back(model.forward(test.row(i)));
  return accuracy(predictions, test.labels);
}

}  // namespace

std::pair<Classifier, RunRecord> train(const TrainingConfig& cfg,
                                       const ClassifierConfig& model_cfg,
                                       const SplitDataset& data) {
  validate(cfg);
  if (data.labeled_train.size() == 0) throw std::invalid_argument("labeled-train split is empty");
  if (data.calibration.size() == 0) throw std::invalid_argument("calibration split is empty");
  if (data.test.size() == 0) throw std::invalid_argument("test split is empty");
  const bool uses_unlabeled = cfg.mode != PseudoLabelMode::none;
  if (uses_unlabeled && data.unlabeled_count == 0) {
    throw std::invalid_argument("unlabeled pool is empty");
  }
  if (model_cfg.input_dim != data.dim || model_cfg.num_classes != data.num_classes) {
    throw std::invalid_argument("model config does not match the dataset shape");
  }

  Rng init_rng = Rng::stream(cfg.seed, 0);
  RngBundle aug_rngs(cfg.seed);
  Rng calib_rng = Rng::stream(cfg.seed, 5);
  BatchCycler labeled_cycler(data.labeled_train.size(), Rng::stream(cfg.seed, 3));
  BatchCycler unlabeled_cycler(std::max<std::size_t>(data.unlabeled_count, 1),
                               Rng::stream(cfg.seed, 4));

  Classifier model = Classifier::init(model_cfg, init_rng);

  const std::size_t unl_batch = cfg.batch_size * cfg.mu;
  std::size_t recalib = cfg.recalib_period;
  if (recalib == 0) {
    // One full pass over the unlabeled pool.
    recalib = uses_unlabeled
                  ? std::max<std::size_t>(1, (data.unlabeled_count + unl_batch - 1) / unl_batch)
                  : cfg.iterations;
  }

  ConformalCalibrator calibrator = build_calibrator(model, data.calibration, cfg, calib_rng);

  RunRecord record;
  record.seed = cfg.seed;
  record.iterations = cfg.iterations;

  LabeledBatch labeled;
  labeled.features.resize(cfg.batch_size);
  labeled.labels.resize(cfg.batch_size);
  std::vector<std::vector<double>> unlabeled(uses_unlabeled ? unl_batch : 0);

  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    if (t > 0 && t % recalib == 0) {
      calibrator = build_calibrator(model, data.calibration, cfg, calib_rng);
    }
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      const std::size_t r = labeled_cycler.next();
      const auto row = data.labeled_train.row(r);
      labeled.features[i].assign(row.begin(), row.end());
      labeled.labels[i] = data.labeled_train.labels[r];
    }
    if (uses_unlabeled) {
      for (std::size_t i = 0; i < unl_batch; ++i) {
        const std::size_t r = unlabeled_cycler.next();
        const auto row = data.unlabeled_row(r);
        unlabeled[i].assign(row.begin(), row.end());
      }
    }

    const StepResult step = train_step(model, labeled, unlabeled, calibrator, cfg, aug_rngs);
    if (!std::isfinite(step.labeled_loss) || !std::isfinite(step.unlabeled_loss)) {
      throw NumericalError("non-finite loss at iteration " + std::to_string(t));
    }
    record.labeled_loss_trace.push_back(step.labeled_loss);
    record.unlabeled_loss_trace.push_back(step.unlabeled_loss);
    record.possibility_trace.push_back(step.mean_possibility);

    const bool last = t + 1 == cfg.iterations;
    if ((cfg.eval_period > 0 && (t + 1) % cfg.eval_period == 0) || last) {
      record.eval_iterations.push_back(t + 1);
      record.eval_accuracy.push_back(test_accuracy(model, data.test));
    }
  }

  // Final evaluation: accuracy and calibration on the test split, validity
  // of the conformal pseudo-supervision over the unlabeled pool.
  std::vector<ProbDist> test_predictions;
  test_predictions.reserve(data.test.size());
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    test_predictions.push_back(model.forward(data.test.row(i)));
  }
  record.final_accuracy = accuracy(test_predictions, data.test.labels);
  record.final_ece = ece(test_predictions, data.test.labels, cfg.ece_bins);

  if (data.unlabeled_count > 0) {
    calibrator = build_calibrator(model, data.calibration, cfg, calib_rng);
    std::vector<PossDist> pis;
    pis.reserve(data.unlabeled_count);
    for (std::size_t i = 0; i < data.unlabeled_count; ++i) {
      const RawPValues raw = calibrator.p_values(model.forward(data.unlabeled_row(i)));
      PossDist pi = cfg.normalization == Normalization::max_ratio ? normalize_max_ratio(raw)
                                                                  : normalize_argmax_one(raw);
      record.final_unlabeled_raw.emplace_back(raw.values().begin(), raw.values().end());
      record.final_unlabeled_pi.emplace_back(pi.degrees().begin(), pi.degrees().end());
      pis.push_back(std::move(pi));
    }
    const auto shadow = data.unlabeled_shadow_labels();
    if (!shadow.empty()) {
      record.shadow_labels.assign(shadow.begin(), shadow.end());
      record.final_validity = validity_report(pis, shadow, cfg.deltas, "normalized");
    }
  }

  return {std::move(model), std::move(record)};
}

std::string RunRecord::to_json() const {
  nlohmann::ordered_json doc;
  doc["seed"] = seed;
  doc["iterations"] = iterations;
  doc["labeled-loss"] = labeled_loss_trace;
  doc["unlabeled-loss"] = unlabeled_loss_trace;
  doc["mean-possibility"] = possibility_trace;
  doc["eval-iterations"] = eval_iterations;
  doc["eval-accuracy"] = eval_accuracy;
  doc["final-accuracy"] = final_accuracy;
  doc["final-ece"] = nlohmann::ordered_json::parse(final_ece.to_json());
  doc["final-validity"] = nlohmann::ordered_json::parse(final_validity.to_json());
  doc["final-unlabeled-raw"] = final_unlabeled_raw;
  doc["final-unlabeled-pi"] = final_unlabeled_pi;
  doc["shadow-labels"] = shadow_labels;
  return doc.dump(2);
}

RunRecord RunRecord::from_json(std::string_view text) {
  const auto doc = nlohmann::json::parse(text);
  RunRecord r;
  r.seed = doc.at("seed").get<std::uint64_t>();
  r.iterations = doc.at("iterations").get<std::size_t>();
  r.labeled_loss_trace = doc.at("labeled-loss").get<std::vector<double>>();
  r.unlabeled_loss_trace = doc.at("unlabeled-loss").get<std::vector<double>>();
  r.possibility_trace = doc.at("mean-possibility").get<std::vector<std::vector<double>>>();
  r.eval_iterations = doc.at("eval-iterations").get<std::vector<std::size_t>>();
  r.eval_accuracy = doc.at("eval-accuracy").get<std::vector<double>>();
  r.final_accuracy = doc.at("final-accuracy").get<double>();
  const auto& e = doc.at("final-ece");
  r.final_ece.ece = e.at("ece").get<double>();
  r.final_ece.bin_count = e.at("bin-count").get<std::size_t>();
  r.final_ece.sample_count = e.at("sample-count").get<std::size_t>();
  r.final_ece.bin_confidence = e.at("bin-confidence").get<std::vector<double>>();
  r.final_ece.bin_accuracy = e.at("bin-accuracy").get<std::vector<double>>();
  r.final_ece.bin_counts = e.at("bin-counts").get<std::vector<std::size_t>>();
  const auto& v = doc.at("final-validity");
  r.final_validity.pi_kind = v.at("pi-kind").get<std::string>();
  r.final_validity.sample_count = v.at("sample-count").get<std::size_t>();
  r.final_validity.deltas = v.at("deltas").get<std::vector<double>>();
  r.final_validity.error_rates = v.at("error-rates").get<std::vector<double>>();
  r.final_unlabeled_raw = doc.at("final-unlabeled-raw").get<std::vector<std::vector<double>>>();
  r.final_unlabeled_pi = doc.at("final-unlabeled-pi").get<std::vector<std::vector<double>>>();
  r.shadow_labels = doc.at("shadow-labels").get<std::vector<ClassIndex>>();
  return r;
}

std::string_view to_string(PseudoLabelMode mode) {
  switch (mode) {
    case PseudoLabelMode::credal: return "credal";
    case PseudoLabelMode::hard_threshold: return "hard-threshold";
    case PseudoLabelMode::none: return "none";
  }
  return "credal";
}

PseudoLabelMode pseudo_label_mode_from_string(std::string_view name) {
  if (name == "credal") return PseudoLabelMode::credal;
  if (name == "hard-threshold") return PseudoLabelMode::hard_threshold;
  if (name == "none") return PseudoLabelMode::none;
  throw std::invalid_argument("unknown pseudo-label mode '" + std::string(name) +
                              "' (expected credal, hard-threshold or none)");
}

std::string_view to_string(Normalization n) {
  return n == Normalization::max_ratio ? "max-ratio" : "argmax-one";
}

Normalization normalization_from_string(std::string_view name) {
  if (name == "max-ratio") return Normalization::max_ratio;
  if (name == "argmax-one") return Normalization::argmax_one;
  throw std::invalid_argument("unknown normalization '" + std::string(name) +
                              "' (expected max-ratio or argmax-one)");
}

std::string_view to_string(AugmentationPolicy p) {
  return p == AugmentationPolicy::identity ? "identity" : "gaussian-noise";
}

AugmentationPolicy augmentation_policy_from_string(std::string_view name) {
  if (name == "identity") return AugmentationPolicy::identity;
  if (name == "gaussian-noise") return AugmentationPolicy::gaussian_noise;
  throw std::invalid_argument("unknown augmentation policy '" + std::string(name) +
                              "' (expected identity or gaussian-noise)");
}

}  // namespace ccl
