#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ccl/classifier.hpp"
#include "ccl/dataset.hpp"
#include "ccl/rng.hpp"
#include "ccl/run_io.hpp"

#ifndef CCL_CLI_PATH
#define CCL_CLI_PATH "ccl"
#endif

using namespace ccl;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ccl_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args, const std::string& log) {
  const std::string cmd = std::string(CCL_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string write_blob_csv(const TempDir& dir, const std::string& name, std::uint64_t seed,
                           std::size_t n) {
  GeneratorSpec spec;
  spec.num_classes = 2;
  spec.dim = 2;
  spec.n = n;
  spec.separation = 3.0;
  spec.noise = 1.0;
  spec.seed = seed;
  const Dataset data = generate(spec);
  std::ostringstream out;
  out << "x1,x2,y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << format_double(data.row(i)[0]) << "," << format_double(data.row(i)[1]) << ","
        << data.labels[i] << "\n";
  }
  const auto path = dir.file(name);
  std::ofstream(path) << out.str();
  return path;
}

std::string write_model(const TempDir& dir) {
  ClassifierConfig cfg{Architecture::linear_softmax, 2, 2, 0, Activation::tanh};
  Rng rng(31);
  const Classifier model = Classifier::init(cfg, rng);
  const auto path = dir.file("model.json");
  std::ofstream(path) << model.to_json();
  return path;
}

}  // namespace

TEST_CASE("help exits zero and unknown flags exit one") {
  TempDir dir;
  CHECK(run_cli("--help", dir.file("h.log")) == 0);
  CHECK(run_cli("calibrate --definitely-not-a-flag x", dir.file("u.log")) == 1);
  CHECK(run_cli("no-such-command", dir.file("n.log")) == 1);
}

TEST_CASE("calibrate emits a calibrator and is byte-stable across reruns") {
  TempDir dir;
  const auto csv = write_blob_csv(dir, "cal.csv", 5, 40);
  const auto model = write_model(dir);

  const std::string out1 = dir.file("cal1.json");
  const std::string out2 = dir.file("cal2.json");
  CHECK(run_cli("calibrate --data " + csv + " --model " + model + " --output " + out1,
                dir.file("c1.log")) == 0);
  CHECK(run_cli("calibrate --data " + csv + " --model " + model + " --output " + out2,
                dir.file("c2.log")) == 0);
  CHECK(read_file(out1) == read_file(out2));

  // Overwrite is refused without the flag.
  CHECK(run_cli("calibrate --data " + csv + " --model " + model + " --output " + out1,
                dir.file("c3.log")) == 1);
}

TEST_CASE("calibrate rejects a model of the wrong shape") {
  TempDir dir;
  const auto csv = write_blob_csv(dir, "cal.csv", 6, 30);
  ClassifierConfig cfg{Architecture::linear_softmax, 5, 2, 0, Activation::tanh};
  Rng rng(3);
  const auto path = dir.file("bad_model.json");
  std::ofstream(path) << Classifier::init(cfg, rng).to_json();
  CHECK(run_cli("calibrate --data " + csv + " --model " + path + " --output " +
                    dir.file("cal.json"),
                dir.file("b.log")) == 1);
}

TEST_CASE("predict-sets writes grid p-values and nested sets") {
  TempDir dir;
  const auto csv = write_blob_csv(dir, "cal.csv", 7, 40);
  const auto model = write_model(dir);
  const auto cal = dir.file("cal.json");
  REQUIRE(run_cli("calibrate --data " + csv + " --model " + model + " --output " + cal,
                  dir.file("c.log")) == 0);

  const auto preds = dir.file("preds.csv");
  std::ofstream(preds) << "0.9,0.1\n0.5,0.5\n0.2,0.8\n";

  const auto wide = dir.file("wide.csv");
  const auto narrow = dir.file("narrow.csv");
  CHECK(run_cli("predict-sets --calibrator " + cal + " --predictions " + preds +
                    " --delta 0.01 --output " + wide,
                dir.file("p1.log")) == 0);
  CHECK(run_cli("predict-sets --calibrator " + cal + " --predictions " + preds +
                    " --delta 0.25 --output " + narrow,
                dir.file("p2.log")) == 0);

  // Narrow sets are subsets of wide sets, p-values sit on the grid j/(L+1).
  const auto parse = [](const std::string& path) {
    std::ifstream in(path);
    std::string line;
    std::vector<std::vector<double>> rows;
    bool header_seen = false;
    while (std::getline(in, line)) {
      if (line.empty() || line.front() == '#') continue;
      if (!header_seen) {
        header_seen = true;
        continue;
      }
      std::vector<double> row;
      std::stringstream ss(line);
      std::string field;
      while (std::getline(ss, field, ',')) row.push_back(std::stod(field));
      rows.push_back(row);
    }
    return rows;
  };
  const auto w = parse(wide);
  const auto n = parse(narrow);
  REQUIRE(w.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      const double grid = w[i][j] * 41.0;
      CHECK(grid == doctest::Approx(std::round(grid)).epsilon(1e-9));
      CHECK(w[i][4 + j] >= n[i][4 + j]);  // membership bits nest
    }
  }
}

TEST_CASE("train writes a replayable run document") {
  TempDir dir;
  const std::string config = R"json({
    "seed": 13,
    "data": {
      "source": "generator",
      "generator": {"kind": "gaussian-blobs", "classes": 2, "dim": 2, "n": 200,
                    "separation": 3.0, "noise": 1.0},
      "split": {"n-labeled": 16, "calib-fraction": 0.25, "n-test": 40}
    },
    "model": {"architecture": "linear-softmax"},
    "training": {"batch-size": 4, "mu": 2, "iterations": 15,
                 "measure": {"kind": "diff"}},
    "evaluation": {"deltas": [0.1], "eval-period": 5},
    "output": {"directory": "%DIR%", "stem": "run", "overwrite": true}
  })json";
  std::string cfg_text = config;
  cfg_text.replace(cfg_text.find("%DIR%"), 5, dir.path.string());
  const auto cfg_path = dir.file("config.json");
  std::ofstream(cfg_path) << cfg_text;

  CHECK(run_cli("train --config " + cfg_path, dir.file("t.log")) == 0);
  const auto run_path = dir.file("run.json");
  CHECK(fs::exists(run_path));
  CHECK(fs::exists(dir.file("run_trace.csv")));
  CHECK(fs::exists(dir.file("run_eval.csv")));
  CHECK(fs::exists(dir.file("run_model.json")));

  // Replay from the persisted run document reproduces the record bit-exactly.
  const auto first = load_run(run_path);
  CHECK(run_cli("train --config " + run_path, dir.file("t2.log")) == 0);
  const auto second = load_run(run_path);
  CHECK(first.record.to_json() == second.record.to_json());

  // Validity report straight from the run.
  CHECK(run_cli("validity --run " + run_path + " --output-prefix " + dir.file("v") +
                    " --overwrite",
                dir.file("v.log")) == 0);
  CHECK(fs::exists(dir.file("v_validity.json")));
  CHECK(fs::exists(dir.file("v_validity.csv")));
  CHECK(fs::exists(dir.file("v_ece.json")));
}

TEST_CASE("train lists every config problem at once") {
  TempDir dir;
  const auto cfg_path = dir.file("bad.json");
  std::ofstream(cfg_path) << R"json({
    "seed": 1, "typo-key": true,
    "data": {"source": "generator",
             "generator": {"kind": "gaussian-blobs", "classes": 2, "dim": 2, "n": 100},
             "split": {"n-labeled": 8, "calib-fraction": 2.0, "n-test": 10}},
    "training": {"batch-size": 0, "iterations": 5}
  })json";
  CHECK(run_cli("train --config " + cfg_path, dir.file("log.txt")) == 1);
  const std::string log = read_file(dir.file("log.txt"));
  CHECK(log.find("typo-key") != std::string::npos);
  CHECK(log.find("calib-fraction") != std::string::npos);
}

TEST_CASE("oracle-check passes at defaults and rejects zero instances") {
  TempDir dir;
  CHECK(run_cli("oracle-check --k-range 2..4 --instances 200 --seed 3 --threads 2",
                dir.file("o.log")) == 0);
  const std::string log = read_file(dir.file("o.log"));
  CHECK(log.find("PASS") != std::string::npos);
  CHECK(log.find("max |loss difference|") != std::string::npos);

  CHECK(run_cli("oracle-check --instances 0", dir.file("o0.log")) == 1);
}

TEST_CASE("validity answers from csv inputs") {
  TempDir dir;
  const auto pis = dir.file("pis.csv");
  std::ofstream(pis) << "1.0,0.8\n1.0,0.03\n0.5,1.0\n0.2,1.0\n";
  const auto labels = dir.file("labels.csv");
  std::ofstream(labels) << "1\n1\n0\n0\n";
  CHECK(run_cli("validity --pi-csv " + pis + " --labels " + labels +
                    " --deltas 0.05 --deltas 0.25 --output-prefix " + dir.file("r") +
                    " --overwrite",
                dir.file("v.log")) == 0);
  const std::string json = read_file(dir.file("r_validity.json"));
  CHECK(json.find("\"error-rates\"") != std::string::npos);

  // 0.8, 0.03, 0.5, 0.2 are the true-label degrees: rate(0.05) = 0.25.
  CHECK(json.find("0.25") != std::string::npos);
}
