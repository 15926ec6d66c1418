#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "ccl/experiment.hpp"

using namespace ccl;

namespace {

const char* kBaseConfig = R"json({
  "schema-version": 1,
  "seed": 11,
  "data": {
    "source": "generator",
    "generator": {"kind": "gaussian-blobs", "classes": 3, "dim": 4, "n": 300,
                  "separation": 4.0, "noise": 1.0},
    "split": {"n-labeled": 24, "calib-fraction": 0.25, "n-test": 50}
  },
  "model": {"architecture": "linear-softmax"},
  "training": {"batch-size": 4, "mu": 2, "lambda-u": 1.0, "learning-rate": 0.05,
               "iterations": 25,
               "measure": {"kind": "diff", "gamma": 0.0}},
  "evaluation": {"deltas": [0.05, 0.1, 0.25], "eval-period": 10},
  "output": {"directory": ".", "stem": "t", "overwrite": true}
})json";

}  // namespace

TEST_CASE("config parses and re-serializes stably") {
  const auto cfg = ExperimentConfig::from_json(kBaseConfig);
  CHECK(cfg.seed == 11);
  CHECK(cfg.generator.num_classes == 3);
  CHECK(cfg.n_labeled == 24);
  CHECK(cfg.training.iterations == 25);
  CHECK(cfg.training.deltas.size() == 3);

  const std::string canon = cfg.to_json();
  const auto cfg2 = ExperimentConfig::from_json(canon);
  CHECK(cfg2.to_json() == canon);
}

TEST_CASE("unknown keys are rejected and all problems are listed") {
  std::string bad(kBaseConfig);
  bad.replace(bad.find("\"seed\": 11"), 10, "\"seed\": 11, \"bogus\": 1");
  bad.replace(bad.find("\"batch-size\": 4"), 15, "\"batch-size\": 0");
  try {
    ExperimentConfig::from_json(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& ex) {
    const auto& problems = ex.problems();
    CHECK(problems.size() >= 2);
    bool unknown = false, range = false;
    for (const auto& p : problems) {
      if (p.find("bogus") != std::string::npos) unknown = true;
      if (p.find("batch_size") != std::string::npos) range = true;
    }
    CHECK(unknown);
    CHECK(range);
  }
}

TEST_CASE("missing sections are reported") {
  CHECK_THROWS_AS(ExperimentConfig::from_json("{}"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json("not json"), ConfigError);
}

TEST_CASE("experiments run end to end and replay identically") {
  const auto cfg = ExperimentConfig::from_json(kBaseConfig);
  const auto result_a = run_experiment(cfg);
  CHECK(result_a.record.labeled_loss_trace.size() == 25);
  CHECK(result_a.record.final_accuracy > 0.3);
  CHECK_FALSE(result_a.record.final_validity.error_rates.empty());

  // Replay from the canonical serialization.
  const auto cfg_b = ExperimentConfig::from_json(cfg.to_json());
  const auto result_b = run_experiment(cfg_b);
  CHECK(result_a.record.to_json() == result_b.record.to_json());
}

TEST_CASE("mode switches run from one config") {
  auto cfg = ExperimentConfig::from_json(kBaseConfig);
  for (const char* mode : {"credal", "hard-threshold", "none"}) {
    cfg.training.mode = pseudo_label_mode_from_string(mode);
    const auto result = run_experiment(cfg);
    CHECK(result.record.labeled_loss_trace.size() == 25);
  }
}

TEST_CASE("lambda zero matches supervised mode exactly") {
  auto credal_cfg = ExperimentConfig::from_json(kBaseConfig);
  credal_cfg.training.lambda_u = 0.0;
  const auto credal_result = run_experiment(credal_cfg);

  auto none_cfg = ExperimentConfig::from_json(kBaseConfig);
  none_cfg.training.mode = PseudoLabelMode::none;
  const auto none_result = run_experiment(none_cfg);

  CHECK(credal_result.record.final_accuracy == none_result.record.final_accuracy);
  CHECK(std::equal(credal_result.model.parameters().begin(),
                   credal_result.model.parameters().end(),
                   none_result.model.parameters().begin()));
}

TEST_CASE("csv sourced experiments validate their schema") {
  std::string cfg_text(kBaseConfig);
  cfg_text.replace(cfg_text.find("\"source\": \"generator\""), 21, "\"source\": \"csv\"");
  try {
    ExperimentConfig::from_json(cfg_text);
    FAIL("expected ConfigError");
  } catch (const ConfigError& ex) {
    bool mentions_csv = false;
    for (const auto& p : ex.problems()) {
      if (p.find("csv") != std::string::npos) mentions_csv = true;
    }
    CHECK(mentions_csv);
  }
}
