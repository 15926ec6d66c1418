#include "ccl/prob.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ccl {

namespace {

void check_finite(std::span<const double> v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw std::invalid_argument(std::string(what) + " has non-finite entry at index " +
                                  std::to_string(i));
    }
  }
}

}  // namespace

ProbDist::ProbDist(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.size() < 2) {
    throw std::invalid_argument("ProbDist needs at least 2 classes, got " +
                                std::to_string(weights_.size()));
  }
  check_finite(weights_, "ProbDist");
  double sum = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (weights_[i] < 0.0) {
      throw std::invalid_argument("ProbDist weight negative at index " + std::to_string(i));
    }
    sum += weights_[i];
  }
  if (std::abs(sum - 1.0) > kSimplexTol) {
    throw std::invalid_argument("ProbDist weights sum to " + std::to_string(sum) +
                                ", expected 1 within 1e-9");
  }
}

ProbDist ProbDist::normalized(std::vector<double> weights) {
  if (weights.size() < 2) {
    throw std::invalid_argument("ProbDist needs at least 2 classes, got " +
                                std::to_string(weights.size()));
  }
  check_finite(weights, "ProbDist");
  double sum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0) {
      throw std::invalid_argument("ProbDist weight negative at index " + std::to_string(i));
    }
    sum += weights[i];
  }
  if (sum <= 0.0) {
    throw std::invalid_argument("ProbDist weights have zero total mass");
  }
  for (auto& w : weights) w /= sum;
  return ProbDist(std::move(weights), Unchecked{});
}

ProbDist ProbDist::degenerate(ClassIndex y, std::size_t num_classes) {
  if (num_classes < 2) {
    throw std::invalid_argument("ProbDist needs at least 2 classes, got " +
                                std::to_string(num_classes));
  }
  if (y >= num_classes) {
    throw std::invalid_argument("class index " + std::to_string(y) + " out of range [0, " +
                                std::to_string(num_classes) + ")");
  }
  std::vector<double> w(num_classes, 0.0);
  w[y] = 1.0;
  return ProbDist(std::move(w), Unchecked{});
}

ProbDist ProbDist::uniform(std::size_t num_classes) {
  if (num_classes < 2) {
    throw std::invalid_argument("ProbDist needs at least 2 classes, got " +
                                std::to_string(num_classes));
  }
  return ProbDist(std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes)),
                  Unchecked{});
}

ClassIndex ProbDist::argmax() const {
  return static_cast<ClassIndex>(
      std::max_element(weights_.begin(), weights_.end()) - weights_.begin());
}

ProbDist prob_from_parts_unchecked(std::vector<double> weights) {
  return ProbDist(std::move(weights));
}

PossDist::PossDist(std::vector<double> degrees) : degrees_(std::move(degrees)) {
  if (degrees_.size() < 2) {
    throw std::invalid_argument("PossDist needs at least 2 classes, got " +
                                std::to_string(degrees_.size()));
  }
  check_finite(degrees_, "PossDist");
  double maxd = 0.0;
  for (std::size_t i = 0; i < degrees_.size(); ++i) {
    if (degrees_[i] < 0.0 || degrees_[i] > 1.0) {
      throw std::invalid_argument("PossDist degree out of [0,1] at index " + std::to_string(i));
    }
    maxd = std::max(maxd, degrees_[i]);
  }
  if (std::abs(maxd - 1.0) > kSimplexTol) {
    throw std::invalid_argument("PossDist max degree is " + std::to_string(maxd) +
                                ", expected 1 within 1e-9");
  }
}

double possibility_measure(const PossDist& pi, std::span<const ClassIndex> classes) {
  double best = 0.0;
  for (ClassIndex y : classes) {
    if (y >= pi.size()) {
      throw std::invalid_argument("class index " + std::to_string(y) + " out of range [0, " +
                                  std::to_string(pi.size()) + ")");
    }
    best = std::max(best, pi[y]);
  }
  return best;
}

double kl_divergence(const ProbDist& p, const ProbDist& q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("kl_divergence dimension mismatch: " + std::to_string(p.size()) +
                                " vs " + std::to_string(q.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      sum += p[i] * std::log(p[i] / std::max(q[i], kKlEps));
    }
  }
  return sum;
}

namespace {

// Each entry packs the top 32 bits of the degree's IEEE pattern (monotone
// for non-negative doubles) with the class index into one word; packed
// ordering is therefore (truncated degree, index). Runs whose truncated
// patterns collide are re-sorted at full precision afterwards, so ties still
// end up in ascending class order. Large inputs go through a branchless LSD
// radix over the four degree bytes, which keeps the per-element cost flat
// where comparison sorts fall off the cache cliff.

void refine_truncated_runs(std::span<const double> degrees, std::vector<std::uint64_t>& keys) {
  const std::size_t n = keys.size();
  std::size_t run = 0;
  while (run < n) {
    std::size_t run_end = run + 1;
    while (run_end < n && (keys[run_end] >> 32) == (keys[run] >> 32)) ++run_end;
    if (run_end - run > 1) {
      std::sort(keys.begin() + static_cast<std::ptrdiff_t>(run),
                keys.begin() + static_cast<std::ptrdiff_t>(run_end),
                [&](std::uint64_t a, std::uint64_t b) {
                  const double da = degrees[static_cast<std::uint32_t>(a)];
                  const double db = degrees[static_cast<std::uint32_t>(b)];
                  if (da != db) return da < db;
                  return static_cast<std::uint32_t>(a) < static_cast<std::uint32_t>(b);
                });
    }
    run = run_end;
  }
}

void radix_sort_top32(std::span<const double> degrees, std::vector<std::uint64_t>& keys,
                      std::vector<std::uint64_t>& scratch) {
  const std::size_t n = keys.size();
  scratch.resize(n);
  // Histograms of the four key bytes above the index, gathered in one pass;
  // permutations do not change them, so degenerate bytes are skippable.
  std::uint32_t hist[4][256] = {};
  for (const std::uint64_t key : keys) {
    hist[0][(key >> 32) & 0xff]++;
    hist[1][(key >> 40) & 0xff]++;
    hist[2][(key >> 48) & 0xff]++;
    hist[3][(key >> 56) & 0xff]++;
  }
  for (int pass = 0; pass < 4; ++pass) {
    std::uint32_t* h = hist[pass];
    const int shift = 32 + pass * 8;
    if (h[(keys[0] >> shift) & 0xff] == n) continue;
    std::uint32_t offset = 0;
    for (int v = 0; v < 256; ++v) {
      const std::uint32_t c = h[v];
      h[v] = offset;
      offset += c;
    }
    for (std::size_t i = 0; i < n; ++i) scratch[h[(keys[i] >> shift) & 0xff]++] = keys[i];
    keys.swap(scratch);
  }
  refine_truncated_runs(degrees, keys);
}

}  // namespace

namespace detail {

std::span<const std::uint64_t> sorted_degree_keys(std::span<const double> degrees) {
  const std::size_t k = degrees.size();
  static thread_local std::vector<std::uint64_t> keys;
  static thread_local std::vector<std::uint64_t> scratch;
  keys.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &degrees[i], sizeof(bits));
    keys[i] = (bits & 0xffffffff00000000ULL) | static_cast<std::uint32_t>(i);
  }
  if (k < 512) {
    std::sort(keys.begin(), keys.end());
    refine_truncated_runs(degrees, keys);
  } else {
    radix_sort_top32(degrees, keys, scratch);
  }
  return keys;
}

void build_sorted_view(std::span<const double> degrees, std::vector<ClassIndex>& order,
                       std::vector<double>& bounds) {
  const std::size_t k = degrees.size();
  const auto keys = sorted_degree_keys(degrees);
  order.resize(k);
  bounds.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto idx = static_cast<std::uint32_t>(keys[i]);
    order[i] = idx;
    bounds[i] = degrees[idx];
  }
}

}  // namespace detail

CredalSet::CredalSet(PossDist pi) : pi_(std::move(pi)) {
  detail::build_sorted_view(pi_.degrees(), order_, bounds_);
}

bool CredalSet::contains(const ProbDist& p, double tol) const {
  if (p.size() != pi_.size()) {
    throw std::invalid_argument("credal membership dimension mismatch: " +
                                std::to_string(p.size()) + " vs " + std::to_string(pi_.size()));
  }
  double prefix = 0.0;
  for (std::size_t i = 0; i < order_.size(); ++i) {
    prefix += p[order_[i]];
    if (prefix > bounds_[i] + tol) return false;
  }
  return true;
}

}  // namespace ccl
