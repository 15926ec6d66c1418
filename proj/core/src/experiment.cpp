#include "ccl/experiment.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

namespace ccl {

namespace {

using nlohmann::json;

std::string join_problems(const std::vector<std::string>& problems) {
  std::string msg = "invalid experiment config:";
  for (const auto& p : problems) msg += "\n  - " + p;
  return msg;
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed, std::vector<std::string>& problems) {
  if (!obj.is_object()) {
    problems.push_back(where + " must be an object");
    return;
  }
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end()) {
      problems.push_back(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
bool fetch(const json& obj, const char* key, T& out, const std::string& where,
           std::vector<std::string>& problems, bool required) {
  if (!obj.contains(key)) {
    if (required) problems.push_back(where + ": missing required key '" + key + "'");
    return false;
  }
  try {
    out = obj.at(key).get<T>();
    return true;
  } catch (const json::exception&) {
    problems.push_back(where + ": key '" + key + "' has the wrong type");
    return false;
  }
}

template <typename Parser>
void fetch_enum(const json& obj, const char* key, const std::string& where,
                std::vector<std::string>& problems, Parser parser) {
  std::string name;
  if (!fetch(obj, key, name, where, problems, false)) return;
  try {
    parser(name);
  } catch (const std::exception& ex) {
    problems.push_back(where + ": " + ex.what());
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

ExperimentConfig ExperimentConfig::from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& ex) {
    throw ConfigError({std::string("JSON parse failure: ") + ex.what()});
  }

  std::vector<std::string> problems;
  ExperimentConfig cfg;

  check_keys(doc, "config",
             {"schema-version", "seed", "data", "model", "training", "evaluation", "output"},
             problems);
  int schema = 1;
  fetch(doc, "schema-version", schema, "config", problems, false);
  if (schema != 1) problems.push_back("config: unsupported schema-version");
  fetch(doc, "seed", cfg.seed, "config", problems, false);

  // data
  if (doc.contains("data")) {
    const auto& data = doc.at("data");
    check_keys(data, "data", {"source", "generator", "csv", "split"}, problems);
    std::string source = "generator";
    fetch(data, "source", source, "data", problems, false);
    if (source == "generator") {
      cfg.source = DataSource::generator;
    } else if (source == "csv") {
      cfg.source = DataSource::csv;
    } else {
      problems.push_back("data: source must be 'generator' or 'csv'");
    }

    if (cfg.source == DataSource::generator) {
      if (!data.contains("generator")) {
        problems.push_back("data: generator source needs a 'generator' object");
      } else {
        const auto& gen = data.at("generator");
        check_keys(gen, "data.generator",
                   {"kind", "classes", "dim", "n", "separation", "noise", "priors", "seed"},
                   problems);
        std::string kind = "gaussian-blobs";
        fetch(gen, "kind", kind, "data.generator", problems, false);
        if (kind == "gaussian-blobs") {
          cfg.generator.kind = GeneratorKind::gaussian_blobs;
        } else if (kind == "interleaved-arcs") {
          cfg.generator.kind = GeneratorKind::interleaved_arcs;
        } else {
          problems.push_back("data.generator: kind must be gaussian-blobs or interleaved-arcs");
        }
        fetch(gen, "classes", cfg.generator.num_classes, "data.generator", problems, true);
        fetch(gen, "dim", cfg.generator.dim, "data.generator", problems, true);
        fetch(gen, "n", cfg.generator.n, "data.generator", problems, true);
        fetch(gen, "separation", cfg.generator.separation, "data.generator", problems, false);
        fetch(gen, "noise", cfg.generator.noise, "data.generator", problems, false);
        fetch(gen, "priors", cfg.generator.priors, "data.generator", problems, false);
        cfg.generator.seed = cfg.seed;
        fetch(gen, "seed", cfg.generator.seed, "data.generator", problems, false);
      }
    } else {
      if (!data.contains("csv")) {
        problems.push_back("data: csv source needs a 'csv' object");
      } else {
        const auto& c = data.at("csv");
        check_keys(c, "data.csv", {"path", "label-column", "feature-columns", "header"}, problems);
        fetch(c, "path", cfg.csv_path, "data.csv", problems, true);
        fetch(c, "label-column", cfg.csv_schema.label_column, "data.csv", problems, true);
        fetch(c, "feature-columns", cfg.csv_schema.feature_columns, "data.csv", problems, false);
        fetch(c, "header", cfg.csv_schema.has_header, "data.csv", problems, false);
      }
    }

    if (!data.contains("split")) {
      problems.push_back("data: missing required 'split' object");
    } else {
      const auto& sp = data.at("split");
      check_keys(sp, "data.split", {"n-labeled", "calib-fraction", "n-test", "seed"}, problems);
      fetch(sp, "n-labeled", cfg.n_labeled, "data.split", problems, true);
      fetch(sp, "calib-fraction", cfg.calib_fraction, "data.split", problems, true);
      fetch(sp, "n-test", cfg.n_test, "data.split", problems, true);
      cfg.split_seed = cfg.seed;
      fetch(sp, "seed", cfg.split_seed, "data.split", problems, false);
    }
  } else {
    problems.push_back("config: missing required 'data' object");
  }

  // model
  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    check_keys(m, "model", {"architecture", "hidden-width", "activation"}, problems);
    std::string arch = "linear-softmax";
    fetch(m, "architecture", arch, "model", problems, false);
    try {
      cfg.model.arch = architecture_from_string(arch);
    } catch (const std::exception& ex) {
      problems.push_back(std::string("model: ") + ex.what());
    }
    fetch(m, "hidden-width", cfg.model.hidden_width, "model", problems, false);
    std::string act = "tanh";
    if (fetch(m, "activation", act, "model", problems, false)) {
      try {
        cfg.model.activation = activation_from_string(act);
      } catch (const std::exception& ex) {
        problems.push_back(std::string("model: ") + ex.what());
      }
    }
  }

  // training
  if (doc.contains("training")) {
    const auto& t = doc.at("training");
    check_keys(t, "training",
               {"batch-size", "mu", "lambda-u", "learning-rate", "iterations", "measure",
                "normalization", "recalib-period", "mode", "tau", "augmentation",
                "pseudo-label-view", "calibration-view", "threads"},
               problems);
    fetch(t, "batch-size", cfg.training.batch_size, "training", problems, false);
    fetch(t, "mu", cfg.training.mu, "training", problems, false);
    fetch(t, "lambda-u", cfg.training.lambda_u, "training", problems, false);
    fetch(t, "learning-rate", cfg.training.learning_rate, "training", problems, false);
    fetch(t, "iterations", cfg.training.iterations, "training", problems, true);
    if (t.contains("measure")) {
      const auto& msr = t.at("measure");
      check_keys(msr, "training.measure", {"kind", "gamma", "inf-on-zero-div"}, problems);
      std::string kind = "diff";
      fetch(msr, "kind", kind, "training.measure", problems, false);
      try {
        cfg.training.measure.kind = score_kind_from_string(kind);
      } catch (const std::exception& ex) {
        problems.push_back(std::string("training.measure: ") + ex.what());
      }
      fetch(msr, "gamma", cfg.training.measure.gamma, "training.measure", problems, false);
      fetch(msr, "inf-on-zero-div", cfg.training.measure.inf_on_zero_div, "training.measure",
            problems, false);
    }
    std::string norm;
    if (fetch(t, "normalization", norm, "training", problems, false)) {
      try {
        cfg.training.normalization = normalization_from_string(norm);
      } catch (const std::exception& ex) {
        problems.push_back(std::string("training: ") + ex.what());
      }
    }
    fetch(t, "recalib-period", cfg.training.recalib_period, "training", problems, false);
    std::string mode;
    if (fetch(t, "mode", mode, "training", problems, false)) {
      try {
        cfg.training.mode = pseudo_label_mode_from_string(mode);
      } catch (const std::exception& ex) {
        problems.push_back(std::string("training: ") + ex.what());
      }
    }
    fetch(t, "tau", cfg.training.tau, "training", problems, false);
    if (t.contains("augmentation")) {
      const auto& aug = t.at("augmentation");
      check_keys(aug, "training.augmentation", {"policy", "sigma-weak", "sigma-strong"},
                 problems);
      std::string policy = "identity";
      fetch(aug, "policy", policy, "training.augmentation", problems, false);
      try {
        cfg.training.augmentation.policy = augmentation_policy_from_string(policy);
      } catch (const std::exception& ex) {
        problems.push_back(std::string("training.augmentation: ") + ex.what());
      }
      fetch(aug, "sigma-weak", cfg.training.augmentation.sigma_weak, "training.augmentation",
            problems, false);
      fetch(aug, "sigma-strong", cfg.training.augmentation.sigma_strong, "training.augmentation",
            problems, false);
    }
    std::string view;
    if (fetch(t, "pseudo-label-view", view, "training", problems, false)) {
      if (view == "weak") {
        cfg.training.pseudo_view = PseudoLabelView::weak;
      } else if (view == "strong") {
        cfg.training.pseudo_view = PseudoLabelView::strong;
      } else {
        problems.push_back("training: pseudo-label-view must be 'weak' or 'strong'");
      }
    }
    std::string cview;
    if (fetch(t, "calibration-view", cview, "training", problems, false)) {
      if (cview == "weak") {
        cfg.training.calib_view = AugmentStrength::weak;
      } else if (cview == "strong") {
        cfg.training.calib_view = AugmentStrength::strong;
      } else {
        problems.push_back("training: calibration-view must be 'weak' or 'strong'");
      }
    }
    fetch(t, "threads", cfg.training.threads, "training", problems, false);
  } else {
    problems.push_back("config: missing required 'training' object");
  }

  // evaluation
  if (doc.contains("evaluation")) {
    const auto& e = doc.at("evaluation");
    check_keys(e, "evaluation", {"deltas", "eval-period", "ece-bins"}, problems);
    fetch(e, "deltas", cfg.training.deltas, "evaluation", problems, false);
    fetch(e, "eval-period", cfg.training.eval_period, "evaluation", problems, false);
    fetch(e, "ece-bins", cfg.training.ece_bins, "evaluation", problems, false);
  }

  // output
  if (doc.contains("output")) {
    const auto& o = doc.at("output");
    check_keys(o, "output", {"directory", "stem", "overwrite"}, problems);
    fetch(o, "directory", cfg.output_directory, "output", problems, false);
    fetch(o, "stem", cfg.output_stem, "output", problems, false);
    fetch(o, "overwrite", cfg.overwrite, "output", problems, false);
  }

  cfg.training.seed = cfg.seed;

  // Range validation runs regardless of structural problems so one parse
  // reports everything at once.
  try {
    validate(cfg.training);
  } catch (const std::exception& ex) {
    problems.push_back(ex.what());
  }
  if (!(cfg.calib_fraction > 0.0 && cfg.calib_fraction < 1.0)) {
    problems.push_back("data.split: calib-fraction must lie in (0,1)");
  }
  if (cfg.n_labeled < 2) {
    problems.push_back("data.split: n-labeled must be >= 2");
  }
  if (cfg.n_test < 1) {
    problems.push_back("data.split: n-test must be >= 1");
  }

  if (!problems.empty()) throw ConfigError(std::move(problems));
  return cfg;
}

std::string ExperimentConfig::to_json() const {
  nlohmann::ordered_json doc;
  doc["schema-version"] = 1;
  doc["seed"] = seed;

  nlohmann::ordered_json data;
  data["source"] = source == DataSource::generator ? "generator" : "csv";
  if (source == DataSource::generator) {
    nlohmann::ordered_json gen;
    gen["kind"] = generator.kind == GeneratorKind::gaussian_blobs ? "gaussian-blobs"
                                                                  : "interleaved-arcs";
    gen["classes"] = generator.num_classes;
    gen["dim"] = generator.dim;
    gen["n"] = generator.n;
    gen["separation"] = generator.separation;
    gen["noise"] = generator.noise;
    if (!generator.priors.empty()) gen["priors"] = generator.priors;
    gen["seed"] = generator.seed;
    data["generator"] = gen;
  } else {
    nlohmann::ordered_json c;
    c["path"] = csv_path;
    c["label-column"] = csv_schema.label_column;
    if (!csv_schema.feature_columns.empty()) c["feature-columns"] = csv_schema.feature_columns;
    c["header"] = csv_schema.has_header;
    data["csv"] = c;
  }
  data["split"] = {{"n-labeled", n_labeled},
                   {"calib-fraction", calib_fraction},
                   {"n-test", n_test},
                   {"seed", split_seed}};
  doc["data"] = data;

  nlohmann::ordered_json m;
  m["architecture"] = std::string(to_string(model.arch));
  if (model.arch == Architecture::one_hidden) {
    m["hidden-width"] = model.hidden_width;
    m["activation"] = std::string(to_string(model.activation));
  }
  doc["model"] = m;

  nlohmann::ordered_json t;
  t["batch-size"] = training.batch_size;
  t["mu"] = training.mu;
  t["lambda-u"] = training.lambda_u;
  t["learning-rate"] = training.learning_rate;
  t["iterations"] = training.iterations;
  t["measure"] = {{"kind", std::string(to_string(training.measure.kind))},
                  {"gamma", training.measure.gamma},
                  {"inf-on-zero-div", training.measure.inf_on_zero_div}};
  t["normalization"] = std::string(to_string(training.normalization));
  t["recalib-period"] = training.recalib_period;
  t["mode"] = std::string(to_string(training.mode));
  t["tau"] = training.tau;
  t["augmentation"] = {{"policy", std::string(to_string(training.augmentation.policy))},
                       {"sigma-weak", training.augmentation.sigma_weak},
                       {"sigma-strong", training.augmentation.sigma_strong}};
  t["pseudo-label-view"] = training.pseudo_view == PseudoLabelView::weak ? "weak" : "strong";
  t["calibration-view"] = training.calib_view == AugmentStrength::weak ? "weak" : "strong";
  t["threads"] = training.threads;
  doc["training"] = t;

  doc["evaluation"] = {{"deltas", training.deltas},
                       {"eval-period", training.eval_period},
                       {"ece-bins", training.ece_bins}};
  doc["output"] = {{"directory", output_directory},
                   {"stem", output_stem},
                   {"overwrite", overwrite}};
  return doc.dump(2);
}

Dataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.source == DataSource::generator) {
    return generate(cfg.generator);
  }
  return load_csv(cfg.csv_path, cfg.csv_schema);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  Dataset data = load_dataset(cfg);
  SplitDataset splits = split(data, cfg.n_labeled, cfg.calib_fraction, cfg.n_test, cfg.split_seed);

  ClassifierConfig model_cfg = cfg.model;
  model_cfg.input_dim = splits.dim;
  model_cfg.num_classes = splits.num_classes;

  auto [model, record] = train(cfg.training, model_cfg, splits);
  return ExperimentResult{std::move(model), std::move(record), std::move(splits)};
}

}  // namespace ccl
