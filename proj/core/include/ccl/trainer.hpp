#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ccl/classifier.hpp"
#include "ccl/conformal.hpp"
#include "ccl/dataset.hpp"
#include "ccl/metrics.hpp"
#include "ccl/prob.hpp"
#include "ccl/rng.hpp"

namespace ccl {

/// Loss blow-ups and diverged optimizations; distinct from usage errors so
/// callers can map it to its own exit status.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PseudoLabelMode { credal, hard_threshold, none };
enum class Normalization { max_ratio, argmax_one };
enum class AugmentationPolicy { identity, gaussian_noise };
enum class AugmentStrength { weak, strong };

/// Which view feeds the conformal pseudo-label construction. The default
/// scores the weakly augmented view; the alternative scores the strongly
/// augmented one (both appear in the consistency-regularization literature).
enum class PseudoLabelView { weak, strong };

struct AugmentationConfig {
  AugmentationPolicy policy = AugmentationPolicy::identity;
  double sigma_weak = 0.0;
  double sigma_strong = 0.0;
};

struct TrainingConfig {
  std::size_t batch_size = 8;
  std::size_t mu = 7;              ///< unlabeled batch multiplicity
  double lambda_u = 1.0;           ///< unlabeled loss weight
  double learning_rate = 0.03;
  std::size_t iterations = 1000;
  NonConformityMeasure measure;
  Normalization normalization = Normalization::max_ratio;
  /// Iterations between calibrator rebuilds; 0 picks one full pass over the
  /// unlabeled pool. The calibrator is always built at iteration 0.
  std::size_t recalib_period = 0;
  PseudoLabelMode mode = PseudoLabelMode::credal;
  double tau = 0.95;               ///< hard-threshold confidence cutoff
  std::uint64_t seed = 0;
  AugmentationConfig augmentation;
  PseudoLabelView pseudo_view = PseudoLabelView::weak;
  AugmentStrength calib_view = AugmentStrength::weak;
  std::size_t eval_period = 0;     ///< 0 disables intermediate test evaluation
  std::vector<double> deltas{0.05, 0.1, 0.25};
  std::size_t ece_bins = 15;
  int threads = 1;                 ///< parallel per-sample projections
};

void validate(const TrainingConfig& cfg);

/// Per-iteration products of one optimization step.
struct StepResult {
  double labeled_loss = 0.0;
  double unlabeled_loss = 0.0;
  /// Rank-aligned mean possibility degrees of the batch's pseudo-labels
  /// (empty unless mode is credal).
  std::vector<double> mean_possibility;
};

/// Persisted outcome of a training run.
struct RunRecord {
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  std::vector<double> labeled_loss_trace;
  std::vector<double> unlabeled_loss_trace;
  std::vector<std::vector<double>> possibility_trace;  ///< per iteration, rank-aligned
  std::vector<std::size_t> eval_iterations;
  std::vector<double> eval_accuracy;
  double final_accuracy = 0.0;
  EceReport final_ece;
  ValidityReport final_validity;
  /// Final raw p-values and normalized possibility degrees over the
  /// unlabeled pool plus their shadow labels; lets validity be recomputed
  /// at other deltas or on the raw scale.
  std::vector<std::vector<double>> final_unlabeled_raw;
  std::vector<std::vector<double>> final_unlabeled_pi;
  std::vector<ClassIndex> shadow_labels;

  std::string to_json() const;
  static RunRecord from_json(std::string_view text);
};

/// Identity returns the input unchanged; gaussian noise adds i.i.d. draws at
/// the strength's sigma (and consumes no randomness when sigma is 0).
std::vector<double> augment(std::span<const double> x, const AugmentationConfig& cfg,
                            AugmentStrength strength, Rng& rng);

/// FixMatch-style hard pseudo-label: the degenerate distribution at the
/// argmax (lowest index on ties) when confidence reaches tau, else nothing.
std::optional<ProbDist> pseudo_label_hard(const ProbDist& p_hat, double tau);

struct LabeledBatch {
  std::vector<std::vector<double>> features;
  std::vector<ClassIndex> labels;
};

struct RngBundle {
  Rng aug_weak;
  Rng aug_strong;

  explicit RngBundle(std::uint64_t seed)
      : aug_weak(Rng::stream(seed, 1)), aug_strong(Rng::stream(seed, 2)) {}
};

/// One SGD step of the combined objective: mean labeled KL to the degenerate
/// targets plus lambda_u times the mean projection loss of the strong-view
/// predictions onto the conformal credal pseudo-labels of the batch. Returns
/// the loss components and the batch possibility summary. The unlabeled
/// gradient uses the detached-target contract (p_hat minus its projection).
StepResult train_step(Classifier& model, const LabeledBatch& labeled,
                      std::span<const std::vector<double>> unlabeled,
                      const ConformalCalibrator& calibrator, const TrainingConfig& cfg,
                      RngBundle& rngs);

/// Full training loop: cycles shuffled batches, rebuilds the calibrator on
/// schedule, records traces and evaluation checkpoints, and finishes with
/// test accuracy, ECE and the validity table over the unlabeled pool.
/// Deterministic for a given config and seed.
std::pair<Classifier, RunRecord> train(const TrainingConfig& cfg, const ClassifierConfig& model_cfg,
                                       const SplitDataset& data);

std::string_view to_string(PseudoLabelMode mode);
PseudoLabelMode pseudo_label_mode_from_string(std::string_view name);
std::string_view to_string(Normalization n);
Normalization normalization_from_string(std::string_view name);
std::string_view to_string(AugmentationPolicy p);
AugmentationPolicy augmentation_policy_from_string(std::string_view name);

}  // namespace ccl
