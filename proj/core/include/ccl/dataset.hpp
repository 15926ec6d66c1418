#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccl/prob.hpp"

namespace ccl {

/// Dense feature matrix with integer class labels.
struct Dataset {
  std::vector<double> features;  ///< row-major, size n * dim
  std::vector<ClassIndex> labels;
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::string name;
  std::vector<std::string> label_names;  ///< present when labels came as strings

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }
};

enum class GeneratorKind { gaussian_blobs, interleaved_arcs };

/// Parameterization of the synthetic generators.
struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::gaussian_blobs;
  std::size_t num_classes = 2;
  std::size_t dim = 2;
  std::size_t n = 100;
  double separation = 4.0;          ///< blob mean scale / arc radius
  double noise = 1.0;               ///< isotropic noise scale
  std::vector<double> priors;       ///< empty = uniform; must sum to 1
  std::uint64_t seed = 0;
};

/// Draw a synthetic dataset. Deterministic for a given spec.
///
/// gaussian-blobs places class means on scaled simplex corners when the
/// dimension allows, otherwise on a circle in the first two coordinates, and
/// adds isotropic gaussian noise. interleaved-arcs is the classic pair of
/// entangled half circles in 2-d.
Dataset generate(const GeneratorSpec& spec);

/// Labeled/calibration/unlabeled/test partition of a dataset.
///
/// Unlabeled samples expose features only; their true labels are retained in
/// a shadow field consumed exclusively by evaluation-time metrics, never by
/// the training API.
struct SplitDataset {
  Dataset labeled_train;
  Dataset calibration;
  std::vector<double> unlabeled_features;  ///< row-major
  std::size_t unlabeled_count = 0;
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  Dataset test;

  std::span<const double> unlabeled_row(std::size_t i) const {
    return {unlabeled_features.data() + i * dim, dim};
  }

  /// Evaluation-only ground truth for the unlabeled pool.
  std::span<const ClassIndex> unlabeled_shadow_labels() const { return shadow_labels_; }
  void set_shadow_labels(std::vector<ClassIndex> labels) { shadow_labels_ = std::move(labels); }

 private:
  std::vector<ClassIndex> shadow_labels_;
};

/// Partition: test indices are drawn first, the labeled pool is then sampled
/// stratified by class (round-robin) where possible, its leading
/// floor(calib_fraction * n_labeled) round-robin entries become calibration,
/// and everything else is the unlabeled pool.
SplitDataset split(const Dataset& data, std::size_t n_labeled, double calib_fraction,
                   std::size_t n_test, std::uint64_t seed);

/// CSV ingestion schema. Column names refer to the header when present,
/// otherwise to zero-based column indices rendered as strings ("0", "1", ...).
/// An empty feature list selects every non-label column in file order.
struct CsvSchema {
  std::string label_column;
  std::vector<std::string> feature_columns;
  bool has_header = true;
};

/// Parse a CSV file into a dataset. Labels are either non-negative integers
/// (class space [0, max+1)) or arbitrary strings mapped by first appearance.
/// Malformed rows are reported with their line number.
Dataset load_csv(const std::string& path, const CsvSchema& schema);

/// Round-trip double formatting for CSV output (locale independent).
std::string format_double(double value);

}  // namespace ccl
