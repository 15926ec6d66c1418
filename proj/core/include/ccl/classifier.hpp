#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ccl/prob.hpp"
#include "ccl/rng.hpp"

namespace ccl {

enum class Architecture { linear_softmax, one_hidden };
enum class Activation { tanh, relu };

struct ClassifierConfig {
  Architecture arch = Architecture::linear_softmax;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::size_t hidden_width = 32;       // one_hidden only
  Activation activation = Activation::tanh;
};

/// Desk-scale probabilistic classifier with a softmax head.
///
/// Parameters live in one flat buffer so finite-difference checks and SGD
/// steps can treat the model as a plain vector. Layout:
///   linear_softmax: W (K x d, row-major), b (K)
///   one_hidden:     W1 (H x d), b1 (H), W2 (K x H), b2 (K)
class Classifier {
 public:
  /// Zero-initialized model (uniform predictions everywhere).
  explicit Classifier(const ClassifierConfig& cfg);

  /// Random initialization, uniform in +-1/sqrt(fan_in) per layer.
  static Classifier init(const ClassifierConfig& cfg, Rng& rng);

  const ClassifierConfig& config() const { return cfg_; }
  std::size_t num_classes() const { return cfg_.num_classes; }
  std::size_t input_dim() const { return cfg_.input_dim; }

  std::vector<double> logits(std::span<const double> x) const;
  ProbDist forward(std::span<const double> x) const;

  /// Accumulate d(loss)/d(params) into grad given d(loss)/d(logits) at x.
  /// grad must have parameter_count() entries.
  void backward(std::span<const double> x, std::span<const double> dlogits,
                std::span<double> grad) const;

  void sgd_step(std::span<const double> grad, double learning_rate);

  std::size_t parameter_count() const { return params_.size(); }
  std::span<const double> parameters() const { return params_; }
  std::span<double> mutable_parameters() { return params_; }

  std::string to_json(std::uint64_t seed = 0, std::uint64_t iteration = 0) const;
  static Classifier from_json(std::string_view text);

 private:
  ClassifierConfig cfg_;
  std::vector<double> params_;

  std::span<const double> w1() const;
  std::span<const double> b1() const;
  std::span<const double> w2() const;
  std::span<const double> b2() const;
  void hidden_forward(std::span<const double> x, std::vector<double>& pre,
                      std::vector<double>& act) const;
};

std::string_view to_string(Architecture arch);
Architecture architecture_from_string(std::string_view name);
std::string_view to_string(Activation act);
Activation activation_from_string(std::string_view name);

}  // namespace ccl
