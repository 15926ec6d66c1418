#pragma once

#include <string>
#include <string_view>

#include "ccl/trainer.hpp"

namespace ccl {

/// Persist a run as one self-contained JSON document ("run-schema": 1)
/// embedding the experiment config (for replay) and the record, plus CSV
/// traces next to it (<stem>_trace.csv, <stem>_eval.csv).
/// Refuses to overwrite existing files unless told to.
void persist_run(const RunRecord& record, const std::string& config_json,
                 const std::string& path, bool overwrite = false);

/// Parsed pieces of a persisted run document.
struct LoadedRun {
  std::string config_json;
  RunRecord record;
};

LoadedRun load_run(const std::string& path);

/// Write a text file, refusing to clobber unless overwrite is set.
void write_file(const std::string& path, std::string_view contents, bool overwrite = false);

std::string read_file(const std::string& path);

}  // namespace ccl
