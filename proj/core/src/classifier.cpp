#include "ccl/classifier.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "ccl/credal_loss.hpp"

namespace ccl {

namespace {

std::size_t param_count(const ClassifierConfig& cfg) {
  if (cfg.arch == Architecture::linear_softmax) {
    return cfg.num_classes * cfg.input_dim + cfg.num_classes;
  }
  return cfg.hidden_width * cfg.input_dim + cfg.hidden_width +
         cfg.num_classes * cfg.hidden_width + cfg.num_classes;
}

void validate_config(const ClassifierConfig& cfg) {
  if (cfg.num_classes < 2) {
    throw std::invalid_argument("classifier needs at least 2 classes");
  }
  if (cfg.input_dim < 1) {
    throw std::invalid_argument("classifier needs input_dim >= 1");
  }
  if (cfg.arch == Architecture::one_hidden && cfg.hidden_width < 1) {
    throw std::invalid_argument("classifier needs hidden_width >= 1");
  }
}

}  // namespace

Classifier::Classifier(const ClassifierConfig& cfg) : cfg_(cfg) {
  validate_config(cfg_);
  params_.assign(param_count(cfg_), 0.0);
}

Classifier Classifier::init(const ClassifierConfig& cfg, Rng& rng) {
  Classifier model(cfg);
  if (cfg.arch == Architecture::linear_softmax) {
    const double r = 1.0 / std::sqrt(static_cast<double>(cfg.input_dim));
    for (std::size_t i = 0; i < cfg.num_classes * cfg.input_dim; ++i) {
      model.params_[i] = rng.uniform(-r, r);
    }
  } else {
    const double r1 = 1.0 / std::sqrt(static_cast<double>(cfg.input_dim));
    const double r2 = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_width));
    std::size_t o = 0;
    for (std::size_t i = 0; i < cfg.hidden_width * cfg.input_dim; ++i) {
      model.params_[o++] = rng.uniform(-r1, r1);
    }
    o += cfg.hidden_width;  // b1 stays zero
    for (std::size_t i = 0; i < cfg.num_classes * cfg.hidden_width; ++i) {
      model.params_[o++] = rng.uniform(-r2, r2);
    }
  }
  return model;
}

std::span<const double> Classifier::w1() const {
  return {params_.data(), cfg_.hidden_width * cfg_.input_dim};
}
std::span<const double> Classifier::b1() const {
  return {params_.data() + cfg_.hidden_width * cfg_.input_dim, cfg_.hidden_width};
}
std::span<const double> Classifier::w2() const {
  return {params_.data() + cfg_.hidden_width * cfg_.input_dim + cfg_.hidden_width,
          cfg_.num_classes * cfg_.hidden_width};
}
std::span<const double> Classifier::b2() const {
  return {params_.data() + cfg_.hidden_width * cfg_.input_dim + cfg_.hidden_width +
              cfg_.num_classes * cfg_.hidden_width,
          cfg_.num_classes};
}

void Classifier::hidden_forward(std::span<const double> x, std::vector<double>& pre,
                                std::vector<double>& act) const {
  const auto W1 = w1();
  const auto B1 = b1();
  pre.assign(cfg_.hidden_width, 0.0);
  act.assign(cfg_.hidden_width, 0.0);
  for (std::size_t h = 0; h < cfg_.hidden_width; ++h) {
    double s = B1[h];
    const double* row = W1.data() + h * cfg_.input_dim;
    for (std::size_t j = 0; j < cfg_.input_dim; ++j) s += row[j] * x[j];
    pre[h] = s;
    act[h] = cfg_.activation == Activation::tanh ? std::tanh(s) : std::max(s, 0.0);
  }
}

std::vector<double> Classifier::logits(std::span<const double> x) const {
  if (x.size() != cfg_.input_dim) {
    throw std::invalid_argument("classifier input has dim " + std::to_string(x.size()) +
                                ", expected " + std::to_string(cfg_.input_dim));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("classifier input has non-finite value");
  }
  std::vector<double> z(cfg_.num_classes, 0.0);
  if (cfg_.arch == Architecture::linear_softmax) {
    const double* W = params_.data();
    const double* b = params_.data() + cfg_.num_classes * cfg_.input_dim;
    for (std::size_t k = 0; k < cfg_.num_classes; ++k) {
      double s = b[k];
      const double* row = W + k * cfg_.input_dim;
      for (std::size_t j = 0; j < cfg_.input_dim; ++j) s += row[j] * x[j];
      z[k] = s;
    }
  } else {
    std::vector<double> pre, act;
    hidden_forward(x, pre, act);
    const auto W2 = w2();
    const auto B2 = b2();
    for (std::size_t k = 0; k < cfg_.num_classes; ++k) {
      double s = B2[k];
      const double* row = W2.data() + k * cfg_.hidden_width;
      for (std::size_t h = 0; h < cfg_.hidden_width; ++h) s += row[h] * act[h];
      z[k] = s;
    }
  }
  return z;
}

ProbDist Classifier::forward(std::span<const double> x) const { return softmax(logits(x)); }

void Classifier::backward(std::span<const double> x, std::span<const double> dlogits,
                          std::span<double> grad) const {
  if (dlogits.size() != cfg_.num_classes || grad.size() != params_.size()) {
    throw std::invalid_argument("backward called with mismatched buffer sizes");
  }
  if (cfg_.arch == Architecture::linear_softmax) {
    double* dW = grad.data();
    double* db = grad.data() + cfg_.num_classes * cfg_.input_dim;
    for (std::size_t k = 0; k < cfg_.num_classes; ++k) {
      const double g = dlogits[k];
      if (g == 0.0) continue;
      double* row = dW + k * cfg_.input_dim;
      for (std::size_t j = 0; j < cfg_.input_dim; ++j) row[j] += g * x[j];
      db[k] += g;
    }
    return;
  }

  std::vector<double> pre, act;
  hidden_forward(x, pre, act);
  const auto W2 = w2();

  const std::size_t w1_off = 0;
  const std::size_t b1_off = cfg_.hidden_width * cfg_.input_dim;
  const std::size_t w2_off = b1_off + cfg_.hidden_width;
  const std::size_t b2_off = w2_off + cfg_.num_classes * cfg_.hidden_width;

  std::vector<double> dact(cfg_.hidden_width, 0.0);
  for (std::size_t k = 0; k < cfg_.num_classes; ++k) {
    const double g = dlogits[k];
    if (g == 0.0) continue;
    double* dW2row = grad.data() + w2_off + k * cfg_.hidden_width;
    const double* W2row = W2.data() + k * cfg_.hidden_width;
    for (std::size_t h = 0; h < cfg_.hidden_width; ++h) {
      dW2row[h] += g * act[h];
      dact[h] += g * W2row[h];
    }
    grad[b2_off + k] += g;
  }
  for (std::size_t h = 0; h < cfg_.hidden_width; ++h) {
    const double dpre = cfg_.activation == Activation::tanh
                            ? dact[h] * (1.0 - act[h] * act[h])
                            : (pre[h] > 0.0 ? dact[h] : 0.0);
    if (dpre == 0.0) continue;
    double* dW1row = grad.data() + w1_off + h * cfg_.input_dim;
    for (std::size_t j = 0; j < cfg_.input_dim; ++j) dW1row[j] += dpre * x[j];
    grad[b1_off + h] += dpre;
  }
}

void Classifier::sgd_step(std::span<const double> grad, double learning_rate) {
  if (grad.size() != params_.size()) {
    throw std::invalid_argument("sgd_step gradient size mismatch");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    params_[i] -= learning_rate * grad[i];
  }
}

std::string Classifier::to_json(std::uint64_t seed, std::uint64_t iteration) const {
  nlohmann::ordered_json doc;
  doc["schema-version"] = 1;
  doc["architecture"] = std::string(to_string(cfg_.arch));
  doc["d"] = cfg_.input_dim;
  doc["K"] = cfg_.num_classes;
  if (cfg_.arch == Architecture::one_hidden) {
    doc["hidden-width"] = cfg_.hidden_width;
    doc["activation"] = std::string(to_string(cfg_.activation));
  }
  doc["parameters"] = params_;  // flat row-major layout
  doc["seed"] = seed;
  doc["iteration"] = iteration;
  return doc.dump(2);
}

Classifier Classifier::from_json(std::string_view text) {
  const auto doc = nlohmann::json::parse(text);
  ClassifierConfig cfg;
  cfg.arch = architecture_from_string(doc.at("architecture").get<std::string>());
  cfg.input_dim = doc.at("d").get<std::size_t>();
  cfg.num_classes = doc.at("K").get<std::size_t>();
  if (cfg.arch == Architecture::one_hidden) {
    cfg.hidden_width = doc.at("hidden-width").get<std::size_t>();
    cfg.activation = activation_from_string(doc.at("activation").get<std::string>());
  }
  Classifier model(cfg);
  auto params = doc.at("parameters").get<std::vector<double>>();
  if (params.size() != model.params_.size()) {
    throw std::invalid_argument("checkpoint has " + std::to_string(params.size()) +
                                " parameters, expected " + std::to_string(model.params_.size()));
  }
  model.params_ = std::move(params);
  return model;
}

std::string_view to_string(Architecture arch) {
  return arch == Architecture::linear_softmax ? "linear-softmax" : "one-hidden";
}

Architecture architecture_from_string(std::string_view name) {
  if (name == "linear-softmax") return Architecture::linear_softmax;
  if (name == "one-hidden") return Architecture::one_hidden;
  throw std::invalid_argument("unknown architecture '" + std::string(name) +
                              "' (expected linear-softmax or one-hidden)");
}

std::string_view to_string(Activation act) {
  return act == Activation::tanh ? "tanh" : "relu";
}

Activation activation_from_string(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation '" + std::string(name) +
                              "' (expected tanh or relu)");
}

}  // namespace ccl
