#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ccl {

using ClassIndex = std::size_t;

/// Absolute tolerance used when validating simplex membership at construction.
inline constexpr double kSimplexTol = 1e-9;

/// Lower clamp for denominators in KL-type expressions.
inline constexpr double kKlEps = 1e-12;

/// A point on the K-simplex: per-class weights, non-negative, summing to one.
///
/// Immutable after construction; all operations on it are pure.
class ProbDist {
 public:
  /// Validating constructor: weights must be non-negative and sum to 1
  /// within kSimplexTol, K >= 2.
  explicit ProbDist(std::vector<double> weights);

  /// Normalize arbitrary non-negative weights to a distribution.
  /// Errors name the offending index (negative weight) or report zero mass.
  static ProbDist normalized(std::vector<double> weights);

  /// Degenerate distribution: all mass on class y.
  static ProbDist degenerate(ClassIndex y, std::size_t num_classes);

  /// Uniform distribution over num_classes classes.
  static ProbDist uniform(std::size_t num_classes);

  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  std::span<const double> weights() const { return weights_; }

  /// Index of the largest weight, lowest index on ties.
  ClassIndex argmax() const;

 private:
  struct Unchecked {};
  ProbDist(std::vector<double> weights, Unchecked) : weights_(std::move(weights)) {}

  std::vector<double> weights_;

  friend ProbDist prob_from_parts_unchecked(std::vector<double>);
};

/// Internal: bypass validation for values that are feasible by construction.
ProbDist prob_from_parts_unchecked(std::vector<double> weights);

/// A possibility distribution: per-class degrees in [0,1] with max degree 1.
///
/// The max-1 normalization guarantees the induced credal set is non-empty.
class PossDist {
 public:
  /// Validating constructor: degrees in [0,1], max equal to 1 within
  /// kSimplexTol, K >= 2.
  explicit PossDist(std::vector<double> degrees);

  std::size_t size() const { return degrees_.size(); }
  double operator[](std::size_t i) const { return degrees_[i]; }
  std::span<const double> degrees() const { return degrees_; }

 private:
  std::vector<double> degrees_;
};

/// Possibility measure of a set of classes: max degree over the set,
/// 0 for the empty set. Throws on out-of-range indices.
double possibility_measure(const PossDist& pi, std::span<const ClassIndex> classes);

/// Kullback-Leibler divergence sum_i p_i log(p_i / q_i) with the 0*log(0) = 0
/// convention and q_i clamped below at kKlEps. Non-negative for simplex inputs.
double kl_divergence(const ProbDist& p, const ProbDist& q);

namespace detail {

/// Classes sorted by ascending degree (ties by ascending index), packed as
/// (degree bit pattern high half | index) words in per-thread scratch. The
/// low 32 bits of each word are the class index; degrees must be looked up
/// for full precision. Valid until the next call on the same thread.
std::span<const std::uint64_t> sorted_degree_keys(std::span<const double> degrees);

/// Ascending-degree view of a possibility distribution built into
/// caller-provided buffers.
void build_sorted_view(std::span<const double> degrees, std::vector<ClassIndex>& order,
                       std::vector<double>& bounds);

}  // namespace detail

/// The convex polytope of distributions dominated by a possibility
/// distribution. Membership reduces to cumulative bounds over the classes
/// sorted by ascending degree: for every prefix of that order, the prefix
/// sum of p may not exceed the degree at the prefix end.
class CredalSet {
 public:
  explicit CredalSet(PossDist pi);

  const PossDist& pi() const { return pi_; }

  /// Classes sorted by ascending degree; ties by ascending class index.
  std::span<const ClassIndex> sorted_order() const { return order_; }

  /// Prefix bounds aligned with sorted_order: non-decreasing, last bound 1.
  std::span<const double> cumulative_bounds() const { return bounds_; }

  /// True iff every cumulative constraint holds within tol.
  bool contains(const ProbDist& p, double tol = 1e-9) const;

 private:
  PossDist pi_;
  std::vector<ClassIndex> order_;
  std::vector<double> bounds_;
};

}  // namespace ccl
