#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ccl/classifier.hpp"
#include "ccl/dataset.hpp"
#include "ccl/trainer.hpp"

namespace ccl {

/// Config validation failure carrying every problem found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

enum class DataSource { generator, csv };

/// Full parameterization of one experiment: data source, split sizes, model
/// shape, training loop settings and output location. One self-contained
/// JSON document per experiment; unknown keys are rejected.
struct ExperimentConfig {
  std::uint64_t seed = 0;

  DataSource source = DataSource::generator;
  GeneratorSpec generator;
  std::string csv_path;
  CsvSchema csv_schema;

  std::size_t n_labeled = 0;
  double calib_fraction = 0.25;
  std::size_t n_test = 0;
  std::uint64_t split_seed = 0;

  ClassifierConfig model;
  TrainingConfig training;

  std::string output_directory = ".";
  std::string output_stem = "run";
  bool overwrite = false;

  /// Parse and validate; throws ConfigError listing every violation.
  static ExperimentConfig from_json(std::string_view text);

  /// Canonical re-serialization (embeddable in run documents for replay).
  std::string to_json() const;
};

struct ExperimentResult {
  Classifier model;
  RunRecord record;
  SplitDataset data;
};

/// Materialize the dataset, split it and run the training loop.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Load or synthesize the dataset named by the config.
Dataset load_dataset(const ExperimentConfig& cfg);

}  // namespace ccl
