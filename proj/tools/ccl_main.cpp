// Command-line front end: conformal calibration, prediction sets, the
// semi-supervised training loop, projection verification and validity
// reporting over the library's CSV/JSON formats.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ccl/classifier.hpp"
#include "ccl/conformal.hpp"
#include "ccl/credal_loss.hpp"
#include "ccl/dataset.hpp"
#include "ccl/experiment.hpp"
#include "ccl/metrics.hpp"
#include "ccl/rng.hpp"
#include "ccl/run_io.hpp"
#include "ccl/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

// ---------------------------------------------------------------------------
// shared helpers

std::vector<std::vector<double>> read_numeric_csv(const std::string& path, bool skip_header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool header_pending = skip_header;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line.front() == '#') continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      try {
        row.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                 ": non-numeric value '" + field + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + " has " +
                               std::to_string(row.size()) + " fields, expected " +
                               std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");
  return rows;
}

ccl::PossDist normalize(const ccl::RawPValues& raw, const std::string& normalization) {
  if (normalization == "max-ratio") return ccl::normalize_max_ratio(raw);
  if (normalization == "argmax-one") return ccl::normalize_argmax_one(raw);
  throw std::runtime_error("unknown normalization '" + normalization + "'");
}

// Random projection instances shared by oracle-check.
struct FuzzInstance {
  ccl::PossDist pi;
  ccl::ProbDist p_hat;
};

FuzzInstance random_instance(std::size_t k, ccl::Rng& rng) {
  std::vector<double> degrees(k);
  double maxd = 0.0;
  for (auto& d : degrees) {
    d = rng.uniform01();
    maxd = std::max(maxd, d);
  }
  for (auto& d : degrees) d /= maxd;

  std::vector<double> mass(k);
  const int flavor = static_cast<int>(rng.uniform_int(10));
  for (auto& m : mass) m = -std::log(std::max(rng.uniform01(), 1e-300));
  if (flavor >= 8) {
    // spiky prediction
    for (auto& m : mass) m = m * m * m;
  }
  if (flavor == 7 && k > 2) {
    // exact zero coordinate
    mass[rng.uniform_int(k)] = 0.0;
  }
  auto p = ccl::ProbDist::normalized(std::move(mass));
  // Predictions are either meaningfully positive or operationally zero,
  // matching the softmax domain the loss actually sees.
  std::vector<double> cleaned(p.weights().begin(), p.weights().end());
  bool changed = false;
  for (auto& w : cleaned) {
    if (w > 0.0 && w < 1e-9) {
      w = 0.0;
      changed = true;
    }
  }
  if (changed) p = ccl::ProbDist::normalized(std::move(cleaned));
  return FuzzInstance{ccl::PossDist(std::move(degrees)), std::move(p)};
}

double max_constraint_violation(const ccl::PossDist& pi, const ccl::ProbDist& p) {
  const ccl::CredalSet set(pi);
  const auto order = set.sorted_order();
  const auto bounds = set.cumulative_bounds();
  double prefix = 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    prefix += p[order[i]];
    worst = std::max(worst, prefix - bounds[i]);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateArgs {
  std::string data_path;
  std::string label_column = "y";
  std::vector<std::string> feature_columns;
  bool no_header = false;
  std::string model_path;
  std::string measure = "diff";
  double gamma = 0.0;
  bool inf_on_zero_div = false;
  std::string output = "calibrator.json";
  bool overwrite = false;
};

int run_calibrate(const CalibrateArgs& args) {
  ccl::CsvSchema schema;
  schema.label_column = args.label_column;
  schema.feature_columns = args.feature_columns;
  schema.has_header = !args.no_header;
  const ccl::Dataset data = ccl::load_csv(args.data_path, schema);

  const ccl::Classifier model = ccl::Classifier::from_json(ccl::read_file(args.model_path));
  if (model.input_dim() != data.dim) {
    throw std::runtime_error("model expects dim " + std::to_string(model.input_dim()) +
                             ", dataset has " + std::to_string(data.dim));
  }
  if (model.num_classes() < data.num_classes) {
    throw std::runtime_error("model has K = " + std::to_string(model.num_classes()) +
                             ", dataset needs K >= " + std::to_string(data.num_classes));
  }

  ccl::NonConformityMeasure measure;
  measure.kind = ccl::score_kind_from_string(args.measure);
  measure.gamma = args.gamma;
  measure.inf_on_zero_div = args.inf_on_zero_div;

  std::vector<ccl::ProbDist> predictions;
  predictions.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) predictions.push_back(model.forward(data.row(i)));
  const auto calibrator = ccl::ConformalCalibrator::calibrate(predictions, data.labels, measure);

  ccl::write_file(args.output, calibrator.to_json(), args.overwrite);

  const auto scores = calibrator.scores();
  const auto quantile = [&](double q) {
    const auto idx = static_cast<std::size_t>(q * static_cast<double>(scores.size() - 1));
    return scores[idx];
  };
  std::cout << "calibrated L = " << scores.size() << " scores -> " << args.output << "\n"
            << "score quantiles: min " << scores.front() << ", p25 " << quantile(0.25)
            << ", p50 " << quantile(0.5) << ", p75 " << quantile(0.75) << ", max "
            << scores.back() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// predict-sets

struct PredictSetsArgs {
  std::string calibrator_path;
  std::string predictions_path;
  bool header = false;
  double delta = 0.1;
  std::string normalization = "max-ratio";
  std::string output = "prediction_sets.csv";
  bool overwrite = false;
};

int run_predict_sets(const PredictSetsArgs& args) {
  const auto calibrator =
      ccl::ConformalCalibrator::from_json(ccl::read_file(args.calibrator_path));
  const auto rows = read_numeric_csv(args.predictions_path, args.header);
  const std::size_t k = calibrator.num_classes();
  if (rows.front().size() != k) {
    throw std::runtime_error("prediction rows have " + std::to_string(rows.front().size()) +
                             " columns, calibrator expects K = " + std::to_string(k));
  }

  std::ostringstream out;
  out << "# schema-version: 1\n";
  for (std::size_t j = 0; j < k; ++j) out << (j ? "," : "") << "pvalue_" << j;
  for (std::size_t j = 0; j < k; ++j) out << ",pi_" << j;
  for (std::size_t j = 0; j < k; ++j) out << ",in_set_" << j;
  out << "\n";

  for (const auto& row : rows) {
    const ccl::ProbDist p_hat = ccl::ProbDist::normalized(row);
    const ccl::RawPValues raw = calibrator.p_values(p_hat);
    const ccl::PossDist pi = normalize(raw, args.normalization);
    const auto set = ccl::prediction_set(raw, args.delta);
    std::vector<int> member(k, 0);
    for (auto y : set) member[y] = 1;
    for (std::size_t j = 0; j < k; ++j) out << (j ? "," : "") << ccl::format_double(raw[j]);
    for (std::size_t j = 0; j < k; ++j) out << "," << ccl::format_double(pi[j]);
    for (std::size_t j = 0; j < k; ++j) out << "," << member[j];
    out << "\n";
  }
  ccl::write_file(args.output, out.str(), args.overwrite);
  std::cout << "wrote " << rows.size() << " prediction rows (delta = " << args.delta << ") -> "
            << args.output << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

int run_train(const std::string& config_path, int threads_override) {
  std::string config_json = ccl::read_file(config_path);
  {
    // Accept a persisted run document as well: replay uses its embedded config.
    const auto doc = nlohmann::json::parse(config_json, nullptr, true);
    if (doc.is_object() && doc.contains("run-schema")) {
      config_json = doc.at("config").dump();
    }
  }
  ccl::ExperimentConfig cfg = ccl::ExperimentConfig::from_json(config_json);
  if (threads_override > 0) cfg.training.threads = threads_override;
  const ccl::ExperimentResult result = ccl::run_experiment(cfg);

  std::filesystem::create_directories(cfg.output_directory);
  const auto out_path =
      (std::filesystem::path(cfg.output_directory) / (cfg.output_stem + ".json")).string();
  ccl::persist_run(result.record, cfg.to_json(), out_path, cfg.overwrite);

  const auto model_path =
      (std::filesystem::path(cfg.output_directory) / (cfg.output_stem + "_model.json")).string();
  ccl::write_file(model_path, result.model.to_json(cfg.seed, cfg.training.iterations),
                  cfg.overwrite);

  std::cout << "run complete: " << cfg.training.iterations << " iterations, final accuracy "
            << result.record.final_accuracy << ", ECE " << result.record.final_ece.ece << "\n"
            << "wrote " << out_path << " (+ traces, + model checkpoint)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// oracle-check

struct OracleCheckArgs {
  std::string k_range = "2..8";
  std::size_t instances = 10000;
  double tolerance = 1e-4;
  double gap = 1e-6;
  std::uint64_t seed = 7;
  int threads = 1;
};

std::pair<std::size_t, std::size_t> parse_k_range(const std::string& text) {
  const auto sep = text.find("..");
  std::size_t lo = 0, hi = 0;
  try {
    if (sep == std::string::npos) {
      lo = hi = std::stoul(text);
    } else {
      lo = std::stoul(text.substr(0, sep));
      hi = std::stoul(text.substr(sep + 2));
    }
  } catch (const std::exception&) {
    throw std::runtime_error("cannot parse --k-range '" + text + "' (expected e.g. 2..8)");
  }
  if (lo < 2 || hi < lo) {
    throw std::runtime_error("--k-range must satisfy 2 <= lo <= hi");
  }
  return {lo, hi};
}

int run_oracle_check(const OracleCheckArgs& args) {
  if (args.instances == 0) throw std::runtime_error("--instances must be > 0");
  const auto [k_lo, k_hi] = parse_k_range(args.k_range);

  struct Slot {
    double dloss = 0.0;
    double violation = 0.0;
    double micros = 0.0;
    bool converged = true;
  };

  std::vector<double> all_micros;
  double max_dloss = 0.0, max_violation = 0.0;
  std::size_t failures = 0, unconverged = 0;

  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    std::vector<Slot> slots(args.instances);
    const auto worker = [&, k](std::size_t i) {
      ccl::Rng rng = ccl::Rng::stream(args.seed + k * 1000003ULL, i);
      const FuzzInstance inst = random_instance(k, rng);
      const auto t0 = std::chrono::steady_clock::now();
      const auto exact = ccl::credal_projection(inst.pi, inst.p_hat);
      const auto t1 = std::chrono::steady_clock::now();
      ccl::OracleConfig oc;
      oc.tolerance = args.gap;
      const auto oracle = ccl::oracle_projection(inst.pi, inst.p_hat, oc);
      Slot& s = slots[i];
      s.dloss = std::abs(exact.loss - oracle.loss);
      // The oracle upper-bounds the exact minimum; a meaningfully smaller
      // oracle loss would falsify optimality.
      if (exact.loss > oracle.loss + 1e-9) s.dloss = std::max(s.dloss, 1.0);
      s.violation = std::max(max_constraint_violation(inst.pi, exact.p_r), 0.0);
      s.micros = std::chrono::duration<double, std::micro>(t1 - t0).count();
      s.converged = oracle.converged;  // informational: loss agreement decides
    };
    if (args.threads <= 1) {
      for (std::size_t i = 0; i < args.instances; ++i) worker(i);
    } else {
      std::vector<std::thread> pool;
      const auto workers = static_cast<std::size_t>(args.threads);
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t i = w; i < args.instances; i += workers) worker(i);
        });
      }
      for (auto& t : pool) t.join();
    }
    for (const auto& s : slots) {
      max_dloss = std::max(max_dloss, s.dloss);
      max_violation = std::max(max_violation, s.violation);
      if (s.dloss > args.tolerance) ++failures;
      if (!s.converged) ++unconverged;
      all_micros.push_back(s.micros);
    }
  }

  std::sort(all_micros.begin(), all_micros.end());
  const auto pct = [&](double q) {
    return all_micros[static_cast<std::size_t>(q * static_cast<double>(all_micros.size() - 1))];
  };
  std::cout << "oracle-check: K in [" << k_lo << ", " << k_hi << "], " << args.instances
            << " instances per K\n"
            << "max |loss difference| = " << max_dloss << " (tolerance " << args.tolerance
            << ")\n"
            << "max constraint violation = " << max_violation << "\n"
            << "exact projection time (us): p50 " << pct(0.5) << ", p90 " << pct(0.9)
            << ", p99 " << pct(0.99) << ", max " << all_micros.back() << "\n";
  if (unconverged > 0) {
    std::cout << "note: the oracle flagged " << unconverged
              << " runs without a gap certificate (loss agreement still checked)\n";
  }
  if (failures > 0) {
    std::cout << "FAIL: " << failures << " instances exceeded the tolerance\n";
    return kExitNumerical;
  }
  std::cout << "PASS\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// validity

struct ValidityArgs {
  std::string run_path;
  std::string pi_csv;
  std::string labels_csv;
  std::string pred_csv;
  std::vector<double> deltas{0.05, 0.1, 0.25};
  bool use_raw = false;
  std::size_t ece_bins = 15;
  std::string output_prefix = "validity";
  bool overwrite = false;
};

int run_validity(const ValidityArgs& args) {
  std::vector<std::vector<double>> pi_rows;
  std::vector<ccl::ClassIndex> labels;
  std::vector<ccl::ProbDist> predictions;

  if (!args.run_path.empty()) {
    const ccl::LoadedRun run = ccl::load_run(args.run_path);
    if (run.record.shadow_labels.empty()) {
      throw std::runtime_error(args.run_path +
                               ": run has no shadow labels for the unlabeled pool; validity "
                               "cannot be evaluated");
    }
    pi_rows = args.use_raw ? run.record.final_unlabeled_raw : run.record.final_unlabeled_pi;
    if (pi_rows.empty()) {
      throw std::runtime_error(args.run_path + ": run has no stored possibility table");
    }
    labels = run.record.shadow_labels;
  } else {
    if (args.pi_csv.empty() || args.labels_csv.empty()) {
      throw std::runtime_error("validity needs either --run or both --pi-csv and --labels");
    }
    pi_rows = read_numeric_csv(args.pi_csv, false);
    const auto label_rows = read_numeric_csv(args.labels_csv, false);
    if (label_rows.size() != pi_rows.size()) {
      throw std::runtime_error("--pi-csv and --labels row counts differ");
    }
    for (const auto& row : label_rows) {
      labels.push_back(static_cast<ccl::ClassIndex>(row.front()));
    }
    if (!args.pred_csv.empty()) {
      for (const auto& row : read_numeric_csv(args.pred_csv, false)) {
        predictions.push_back(ccl::ProbDist::normalized(row));
      }
      if (predictions.size() != pi_rows.size()) {
        throw std::runtime_error("--pred-csv row count differs from --pi-csv");
      }
    }
  }

  const auto report =
      ccl::validity_report(pi_rows, labels, args.deltas, args.use_raw ? "raw" : "normalized");
  ccl::write_file(args.output_prefix + "_validity.json", report.to_json(), args.overwrite);
  ccl::write_file(args.output_prefix + "_validity.csv", report.to_csv(), args.overwrite);
  std::cout << "validity over " << report.sample_count << " samples:";
  for (std::size_t i = 0; i < report.deltas.size(); ++i) {
    std::cout << "  delta " << report.deltas[i] << " -> " << report.error_rates[i];
  }
  std::cout << "\n";

  if (!args.run_path.empty()) {
    const ccl::LoadedRun run = ccl::load_run(args.run_path);
    ccl::write_file(args.output_prefix + "_ece.json", run.record.final_ece.to_json(),
                    args.overwrite);
    ccl::write_file(args.output_prefix + "_ece.csv", run.record.final_ece.to_csv(),
                    args.overwrite);
    std::cout << "test-split ECE = " << run.record.final_ece.ece << "\n";
  } else if (!predictions.empty()) {
    const auto ece_report = ccl::ece(predictions, labels, args.ece_bins);
    ccl::write_file(args.output_prefix + "_ece.json", ece_report.to_json(), args.overwrite);
    ccl::write_file(args.output_prefix + "_ece.csv", ece_report.to_csv(), args.overwrite);
    std::cout << "ECE = " << ece_report.ece << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conformal credal learning toolkit"};
  app.require_subcommand(1);

  CalibrateArgs cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "score a calibration CSV with a model");
  cal_cmd->add_option("--data", cal.data_path, "calibration CSV")->required();
  cal_cmd->add_option("--label-column", cal.label_column, "label column name");
  cal_cmd->add_option("--feature-columns", cal.feature_columns, "feature column names");
  cal_cmd->add_flag("--no-header", cal.no_header, "CSV has no header row");
  cal_cmd->add_option("--model", cal.model_path, "model checkpoint JSON")->required();
  cal_cmd->add_option("--measure", cal.measure, "non-conformity kind (diff|prop)");
  cal_cmd->add_option("--gamma", cal.gamma, "prop sensitivity");
  cal_cmd->add_flag("--inf-on-zero-div", cal.inf_on_zero_div,
                    "map prop division by zero to +inf");
  cal_cmd->add_option("--output", cal.output, "calibrator JSON path");
  cal_cmd->add_flag("--overwrite", cal.overwrite, "overwrite existing outputs");

  PredictSetsArgs ps;
  auto* ps_cmd = app.add_subcommand("predict-sets", "p-values, possibilities and sets per row");
  ps_cmd->add_option("--calibrator", ps.calibrator_path, "calibrator JSON")->required();
  ps_cmd->add_option("--predictions", ps.predictions_path, "CSV of predicted distributions")
      ->required();
  ps_cmd->add_flag("--header", ps.header, "skip the first CSV line");
  ps_cmd->add_option("--delta", ps.delta, "confidence level in (0,1)")->required();
  ps_cmd->add_option("--normalization", ps.normalization, "max-ratio|argmax-one");
  ps_cmd->add_option("--output", ps.output, "output CSV path");
  ps_cmd->add_flag("--overwrite", ps.overwrite, "overwrite existing outputs");

  std::string train_config;
  int train_threads = 0;
  auto* train_cmd = app.add_subcommand("train", "run an experiment from a config (or replay a run)");
  train_cmd->add_option("--config", train_config, "experiment config JSON or run JSON")
      ->required();
  train_cmd->add_option("--threads", train_threads,
                        "parallel per-sample projections (deterministic reduction)");

  OracleCheckArgs oc;
  auto* oc_cmd = app.add_subcommand("oracle-check",
                                    "fuzz the exact projection against the Frank-Wolfe oracle");
  oc_cmd->add_option("--k-range", oc.k_range, "class-count range, e.g. 2..8");
  oc_cmd->add_option("--instances", oc.instances, "instances per class count");
  oc_cmd->add_option("--tolerance", oc.tolerance, "max allowed |loss difference|");
  oc_cmd->add_option("--gap", oc.gap, "oracle duality-gap target");
  oc_cmd->add_option("--seed", oc.seed, "fuzzing seed");
  oc_cmd->add_option("--threads", oc.threads, "worker threads");

  ValidityArgs va;
  auto* va_cmd = app.add_subcommand("validity", "validity and calibration reports");
  va_cmd->add_option("--run", va.run_path, "persisted run JSON");
  va_cmd->add_option("--pi-csv", va.pi_csv, "CSV of possibility rows");
  va_cmd->add_option("--labels", va.labels_csv, "CSV of true labels (one per row)");
  va_cmd->add_option("--pred-csv", va.pred_csv, "CSV of predicted distributions (for ECE)");
  va_cmd->add_option("--deltas", va.deltas, "confidence levels");
  va_cmd->add_flag("--raw", va.use_raw, "report on raw p-values instead of normalized");
  va_cmd->add_option("--ece-bins", va.ece_bins, "ECE bin count");
  va_cmd->add_option("--output-prefix", va.output_prefix, "output file prefix");
  va_cmd->add_flag("--overwrite", va.overwrite, "overwrite existing outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*cal_cmd) return run_calibrate(cal);
    if (*ps_cmd) return run_predict_sets(ps);
    if (*train_cmd) return run_train(train_config, train_threads);
    if (*oc_cmd) return run_oracle_check(oc);
    if (*va_cmd) return run_validity(va);
  } catch (const ccl::NumericalError& ex) {
    std::cerr << "numerical failure: " << ex.what() << "\n";
    return kExitNumerical;
  } catch (const ccl::ConfigError& ex) {
    std::cerr << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
