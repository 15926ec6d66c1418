#include "ccl/run_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ccl/dataset.hpp"

namespace ccl {

void write_file(const std::string& path, std::string_view contents, bool overwrite) {
  if (!overwrite && std::filesystem::exists(path)) {
    throw std::runtime_error("refusing to overwrite existing file: " + path +
                             " (pass the overwrite flag)");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open file for writing: " + path);
  }
  out << contents;
  if (!out) {
    throw std::runtime_error("write failed: " + path);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open file: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace {

std::string stem_of(const std::string& path) {
  const std::filesystem::path p(path);
  std::filesystem::path out = p.parent_path() / p.stem();
  return out.string();
}

std::string trace_csv(const RunRecord& record) {
  std::ostringstream out;
  std::size_t poss_cols = 0;
  for (const auto& row : record.possibility_trace) poss_cols = std::max(poss_cols, row.size());
  out << "# schema-version: 1\n";
  out << "iteration,labeled_loss,unlabeled_loss";
  for (std::size_t r = 0; r < poss_cols; ++r) out << ",mean_poss_rank" << r;
  out << "\n";
  for (std::size_t t = 0; t < record.labeled_loss_trace.size(); ++t) {
    out << t << "," << format_double(record.labeled_loss_trace[t]) << ","
        << format_double(record.unlabeled_loss_trace[t]);
    const auto& row = t < record.possibility_trace.size() ? record.possibility_trace[t]
                                                          : std::vector<double>{};
    for (std::size_t r = 0; r < poss_cols; ++r) {
      out << ",";
      if (r < row.size()) out << format_double(row[r]);
    }
    out << "\n";
  }
  return out.str();
}

std::string eval_csv(const RunRecord& record) {
  std::ostringstream out;
  out << "# schema-version: 1\n";
  out << "iteration,test_accuracy\n";
  for (std::size_t i = 0; i < record.eval_iterations.size(); ++i) {
    out << record.eval_iterations[i] << "," << format_double(record.eval_accuracy[i]) << "\n";
  }
  return out.str();
}

}  // namespace

void persist_run(const RunRecord& record, const std::string& config_json,
                 const std::string& path, bool overwrite) {
  nlohmann::ordered_json doc;
  doc["run-schema"] = 1;
  doc["config"] = nlohmann::ordered_json::parse(config_json);
  doc["record"] = nlohmann::ordered_json::parse(record.to_json());
  write_file(path, doc.dump(2), overwrite);

  const std::string stem = stem_of(path);
  write_file(stem + "_trace.csv", trace_csv(record), overwrite);
  write_file(stem + "_eval.csv", eval_csv(record), overwrite);
}

LoadedRun load_run(const std::string& path) {
  const auto doc = nlohmann::json::parse(read_file(path));
  if (!doc.contains("run-schema") || doc.at("run-schema").get<int>() != 1) {
    throw std::runtime_error(path + ": not a run document (missing run-schema 1)");
  }
  LoadedRun run;
  run.config_json = doc.at("config").dump();
  run.record = RunRecord::from_json(doc.at("record").dump());
  return run;
}

}  // namespace ccl
