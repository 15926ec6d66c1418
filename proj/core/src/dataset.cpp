#include "ccl/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "ccl/rng.hpp"

namespace ccl {

namespace {

void validate_spec(const GeneratorSpec& spec) {
  if (spec.num_classes < 2) {
    throw std::invalid_argument("generator needs at least 2 classes");
  }
  if (spec.n < spec.num_classes) {
    throw std::invalid_argument("generator needs n >= K, got n = " + std::to_string(spec.n) +
                                ", K = " + std::to_string(spec.num_classes));
  }
  if (spec.dim < 1) {
    throw std::invalid_argument("generator needs dim >= 1");
  }
  if (spec.noise < 0.0) {
    throw std::invalid_argument("generator noise must be >= 0");
  }
  if (!spec.priors.empty()) {
    if (spec.priors.size() != spec.num_classes) {
      throw std::invalid_argument("generator priors must have one entry per class");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < spec.priors.size(); ++i) {
      if (spec.priors[i] < 0.0) {
        throw std::invalid_argument("generator prior negative at index " + std::to_string(i));
      }
      sum += spec.priors[i];
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument("generator priors sum to " + std::to_string(sum) +
                                  ", expected 1");
    }
  }
  if (spec.kind == GeneratorKind::interleaved_arcs) {
    if (spec.num_classes != 2 || spec.dim != 2) {
      throw std::invalid_argument("interleaved-arcs requires K = 2 and dim = 2");
    }
  }
}

ClassIndex draw_class(const GeneratorSpec& spec, Rng& rng) {
  if (spec.priors.empty()) {
    return static_cast<ClassIndex>(rng.uniform_int(spec.num_classes));
  }
  const double u = rng.uniform01();
  double cum = 0.0;
  for (std::size_t k = 0; k < spec.priors.size(); ++k) {
    cum += spec.priors[k];
    if (u < cum) return k;
  }
  return spec.priors.size() - 1;
}

std::vector<double> blob_means(const GeneratorSpec& spec) {
  std::vector<double> means(spec.num_classes * spec.dim, 0.0);
  if (spec.dim >= spec.num_classes) {
    // scaled simplex corners
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
      means[k * spec.dim + k] = spec.separation;
    }
  } else if (spec.dim >= 2) {
    // evenly spaced on a circle in the first two coordinates
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
      const double angle =
          2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(spec.num_classes);
      means[k * spec.dim + 0] = spec.separation * std::cos(angle);
      means[k * spec.dim + 1] = spec.separation * std::sin(angle);
    }
  } else {
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
      means[k * spec.dim] = spec.separation * static_cast<double>(k);
    }
  }
  return means;
}

}  // namespace

Dataset generate(const GeneratorSpec& spec) {
  validate_spec(spec);
  Rng rng = Rng::stream(spec.seed, 0x47454e);  // generator stream

  Dataset data;
  data.dim = spec.dim;
  data.num_classes = spec.num_classes;
  data.features.resize(spec.n * spec.dim);
  data.labels.resize(spec.n);

  switch (spec.kind) {
    case GeneratorKind::gaussian_blobs: {
      const auto means = blob_means(spec);
      data.name = "gaussian-blobs";
      for (std::size_t i = 0; i < spec.n; ++i) {
        const ClassIndex y = draw_class(spec, rng);
        data.labels[i] = y;
        for (std::size_t j = 0; j < spec.dim; ++j) {
          data.features[i * spec.dim + j] = means[y * spec.dim + j] + spec.noise * rng.normal();
        }
      }
      break;
    }
    case GeneratorKind::interleaved_arcs: {
      data.name = "interleaved-arcs";
      const double r = spec.separation;
      for (std::size_t i = 0; i < spec.n; ++i) {
        const ClassIndex y = draw_class(spec, rng);
        data.labels[i] = y;
        const double theta = std::numbers::pi * rng.uniform01();
        double px, py;
        if (y == 0) {
          px = r * std::cos(theta);
          py = r * std::sin(theta);
        } else {
          px = r - r * std::cos(theta);
          py = 0.5 * r - r * std::sin(theta);
        }
        data.features[i * 2 + 0] = px + spec.noise * rng.normal();
        data.features[i * 2 + 1] = py + spec.noise * rng.normal();
      }
      break;
    }
  }
  return data;
}

namespace {

Dataset take_rows(const Dataset& data, std::span<const std::size_t> rows) {
  Dataset out;
  out.dim = data.dim;
  out.num_classes = data.num_classes;
  out.name = data.name;
  out.label_names = data.label_names;
  out.features.reserve(rows.size() * data.dim);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) {
    const auto row = data.row(r);
    out.features.insert(out.features.end(), row.begin(), row.end());
    out.labels.push_back(data.labels[r]);
  }
  return out;
}

}  // namespace

SplitDataset split(const Dataset& data, std::size_t n_labeled, double calib_fraction,
                   std::size_t n_test, std::uint64_t seed) {
  const std::size_t n = data.size();
  if (n_labeled + n_test > n) {
    throw std::invalid_argument("split infeasible: n_labeled + n_test = " +
                                std::to_string(n_labeled + n_test) + " exceeds n = " +
                                std::to_string(n));
  }
  if (!(calib_fraction > 0.0 && calib_fraction < 1.0)) {
    throw std::invalid_argument("calib_fraction must lie in (0,1), got " +
                                std::to_string(calib_fraction));
  }
  const std::size_t n_cal =
      static_cast<std::size_t>(std::floor(calib_fraction * static_cast<double>(n_labeled)));
  if (n_cal == 0) {
    throw std::invalid_argument("split yields an empty calibration set");
  }
  if (n_cal >= n_labeled) {
    throw std::invalid_argument("split yields an empty labeled-train set");
  }

  Rng rng = Rng::stream(seed, 0x53504c49);  // split stream

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);

  // Test drawn first.
  std::vector<std::size_t> test_rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> rest(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());

  // Stratified labeled pool: group the remainder by class, then round-robin.
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t r : rest) by_class[data.labels[r]].push_back(r);
  std::vector<std::size_t> labeled_pool;
  labeled_pool.reserve(n_labeled);
  std::vector<std::size_t> cursor(data.num_classes, 0);
  while (labeled_pool.size() < n_labeled) {
    bool any = false;
    for (std::size_t k = 0; k < data.num_classes && labeled_pool.size() < n_labeled; ++k) {
      if (cursor[k] < by_class[k].size()) {
        labeled_pool.push_back(by_class[k][cursor[k]++]);
        any = true;
      }
    }
    if (!any) break;  // all classes exhausted
  }
  if (labeled_pool.size() < n_labeled) {
    throw std::invalid_argument("split infeasible: not enough non-test rows for the labeled pool");
  }

  // The leading round-robin entries become calibration, keeping both parts
  // stratified.
  std::vector<std::size_t> cal_rows(labeled_pool.begin(),
                                    labeled_pool.begin() + static_cast<std::ptrdiff_t>(n_cal));
  std::vector<std::size_t> train_rows(labeled_pool.begin() + static_cast<std::ptrdiff_t>(n_cal),
                                      labeled_pool.end());

  std::vector<bool> taken(n, false);
  for (std::size_t r : test_rows) taken[r] = true;
  for (std::size_t r : labeled_pool) taken[r] = true;

  SplitDataset out;
  out.dim = data.dim;
  out.num_classes = data.num_classes;
  out.labeled_train = take_rows(data, train_rows);
  out.calibration = take_rows(data, cal_rows);
  out.test = take_rows(data, test_rows);

  std::vector<ClassIndex> shadow;
  for (std::size_t r = 0; r < n; ++r) {
    if (taken[r]) continue;
    const auto row = data.row(r);
    out.unlabeled_features.insert(out.unlabeled_features.end(), row.begin(), row.end());
    shadow.push_back(data.labels[r]);
  }
  out.unlabeled_count = shadow.size();
  out.set_shadow_labels(std::move(shadow));
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open CSV file: " + path);
  }

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> column_names;

  if (schema.has_header) {
    if (!std::getline(in, line)) {
      throw std::runtime_error(path + ": empty file, expected a header row");
    }
    ++line_no;
    for (auto& f : split_line(line)) column_names.push_back(trim(f));
  }

  std::vector<std::vector<std::string>> rows;
  std::size_t width = column_names.size();
  std::vector<std::size_t> row_lines;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line.front() == '#') continue;
    auto fields = split_line(line);
    if (width == 0) {
      width = fields.size();
      if (!schema.has_header) {
        for (std::size_t c = 0; c < width; ++c) column_names.push_back(std::to_string(c));
      }
    }
    if (fields.size() != width) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + " has " +
                               std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(width));
    }
    rows.push_back(std::move(fields));
    row_lines.push_back(line_no);
  }
  if (rows.empty()) {
    throw std::runtime_error(path + ": no data rows");
  }

  const auto column_index = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(column_names.begin(), column_names.end(), name);
    if (it == column_names.end()) {
      throw std::runtime_error(path + ": no column named '" + name + "'");
    }
    return static_cast<std::size_t>(it - column_names.begin());
  };

  const std::size_t label_col = column_index(schema.label_column);
  std::vector<std::size_t> feature_cols;
  if (schema.feature_columns.empty()) {
    for (std::size_t c = 0; c < column_names.size(); ++c) {
      if (c != label_col) feature_cols.push_back(c);
    }
  } else {
    for (const auto& name : schema.feature_columns) feature_cols.push_back(column_index(name));
  }
  if (feature_cols.empty()) {
    throw std::runtime_error(path + ": no feature columns selected");
  }

  Dataset data;
  data.dim = feature_cols.size();
  data.name = path;
  data.features.reserve(rows.size() * data.dim);
  data.labels.reserve(rows.size());

  // Decide label handling: all-integer labels index classes directly,
  // anything else maps strings by first appearance.
  bool integer_labels = true;
  for (const auto& row : rows) {
    double v = 0.0;
    if (!parse_double(row[label_col], v) || v < 0.0 || v != std::floor(v)) {
      integer_labels = false;
      break;
    }
  }

  std::unordered_map<std::string, ClassIndex> label_map;
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    for (std::size_t c : feature_cols) {
      double v = 0.0;
      if (!parse_double(row[c], v)) {
        throw std::runtime_error(path + ": line " + std::to_string(row_lines[i]) +
                                 ": non-numeric value '" + trim(row[c]) + "' in column '" +
                                 column_names[c] + "'");
      }
      data.features.push_back(v);
    }
    if (integer_labels) {
      double v = 0.0;
      parse_double(row[label_col], v);
      const auto y = static_cast<ClassIndex>(v);
      max_label = std::max(max_label, y);
      data.labels.push_back(y);
    } else {
      const std::string key = trim(row[label_col]);
      const auto [it, inserted] = label_map.try_emplace(key, label_map.size());
      if (inserted) data.label_names.push_back(key);
      data.labels.push_back(it->second);
    }
  }
  data.num_classes = integer_labels ? max_label + 1 : label_map.size();
  if (data.num_classes < 2) {
    throw std::runtime_error(path + ": needs at least 2 distinct classes");
  }
  return data;
}

std::string format_double(double value) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) return "0";
  return std::string(buf, ptr);
}

}  // namespace ccl
