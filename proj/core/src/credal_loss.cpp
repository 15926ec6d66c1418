#include "ccl/credal_loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ccl {

namespace {

// Slack when accepting a tentative allocation against a cumulative bound.
// Rejecting an exactly-tight interior bound due to rounding is harmless (the
// split sub-allocations coincide), so this only needs to absorb drift in the
// assigned mass itself.
constexpr double kAcceptTol = 1e-12;

void require_same_size(const PossDist& pi, const ProbDist& p_hat) {
  if (pi.size() != p_hat.size()) {
    throw std::invalid_argument("projection dimension mismatch: pi has " +
                                std::to_string(pi.size()) + " classes, p_hat has " +
                                std::to_string(p_hat.size()));
  }
}

}  // namespace

ProjectionResult credal_projection(const PossDist& pi, const ProbDist& p_hat) {
  require_same_size(pi, p_hat);
  const std::size_t k = pi.size();
  const auto degrees = pi.degrees();

  // One pass over the sorted keys materializes the ascending view into
  // per-thread scratch and decides membership as it goes.
  const auto keys = detail::sorted_degree_keys(degrees);
  static thread_local std::vector<ClassIndex> order_buf;
  static thread_local std::vector<double> bounds_buf;
  static thread_local std::vector<double> q_buf;
  order_buf.resize(k);
  bounds_buf.resize(k);
  bool inside = true;
  {
    const auto p = p_hat.weights();
    double prefix = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (i + 8 < k) {
        const auto ahead = static_cast<std::uint32_t>(keys[i + 8]);
        __builtin_prefetch(&p[ahead]);
        __builtin_prefetch(&degrees[ahead]);
      }
      const auto idx = static_cast<std::uint32_t>(keys[i]);
      const double dv = degrees[idx];
      order_buf[i] = idx;
      bounds_buf[i] = dv;
      prefix += p[idx];
      inside = inside && prefix <= dv + kAcceptTol;
    }
  }
  if (inside) {
    return ProjectionResult{p_hat, 0.0, true, {}, true, 0};
  }
  q_buf.resize(k);
  for (std::size_t i = 0; i < k; ++i) q_buf[i] = p_hat[order_buf[i]];
  const std::span<const ClassIndex> order = order_buf;
  const std::span<const double> bounds = bounds_buf;
  const std::span<const double> q = q_buf;

  std::vector<double> result(k, 0.0);  // in ascending-order coordinates
  std::vector<double> faces;
  std::size_t lo = 0;       // first unassigned position
  double assigned = 0.0;    // total mass fixed so far
  std::size_t rounds = 0;

  std::vector<double> tentative(k);
  while (lo < k) {
    if (++rounds > k) {
      throw std::logic_error("credal_projection exceeded its iteration cap");
    }
    bool accepted = false;
    // Candidate levels, highest first. A position is a candidate iff it ends
    // its tie group, so tied classes are always assigned together.
    for (std::size_t c = k; c-- > lo;) {
      if (c + 1 < k && bounds[c + 1] <= bounds[c]) continue;
      const double level = bounds[c];
      const double budget = std::max(level - assigned, 0.0);
      // Summed directly: a prefix-sum difference can cancel catastrophically
      // for groups holding a sliver of the predicted mass.
      double group_mass = 0.0;
      for (std::size_t j = lo; j <= c; ++j) group_mass += q[j];
      const std::size_t group_len = c - lo + 1;

      double cum = assigned;
      bool feasible = true;
      for (std::size_t j = lo; j <= c; ++j) {
        const double share = group_mass > 0.0
                                 ? budget * q[j] / group_mass
                                 : budget / static_cast<double>(group_len);
        tentative[j] = share;
        cum += share;
        if (cum > bounds[j] + kAcceptTol) {
          feasible = false;
          break;
        }
      }
      if (feasible) {
        for (std::size_t j = lo; j <= c; ++j) result[j] = tentative[j];
        assigned += budget;
        faces.push_back(level);
        lo = c + 1;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // The lowest remaining level is always feasible (its tie group shares
      // a budget no larger than its own bound).
      throw std::logic_error("credal_projection found no feasible level");
    }
  }

  std::vector<double> weights(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) weights[order[i]] = result[i];
  ProbDist p_r = ProbDist::normalized(std::move(weights));
  const double loss = kl_divergence(p_r, p_hat);
  return ProjectionResult{std::move(p_r), loss, false, std::move(faces), true,
                          static_cast<int>(rounds)};
}

ProbDist softmax(std::span<const double> logits) {
  if (logits.size() < 2) {
    throw std::invalid_argument("softmax needs at least 2 logits");
  }
  double maxv = logits[0];
  for (double z : logits) {
    if (!std::isfinite(z)) throw std::invalid_argument("softmax input has non-finite logit");
    maxv = std::max(maxv, z);
  }
  std::vector<double> w(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = std::exp(logits[i] - maxv);
    sum += w[i];
  }
  for (auto& x : w) x /= sum;
  return ProbDist::normalized(std::move(w));
}

std::vector<double> credal_loss_gradient(const PossDist& pi, std::span<const double> logits) {
  const ProbDist p_hat = softmax(logits);
  const ProjectionResult proj = credal_projection(pi, p_hat);
  std::vector<double> grad(logits.size(), 0.0);
  if (proj.inside) return grad;
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = p_hat[i] - proj.p_r[i];
  return grad;
}

namespace {

// Objective and gradient of f(x) = KL(x || q) with the library's clamping
// conventions. The gradient is clamped so zero coordinates stay finite; the
// linear oracle only needs its ordering.
double kl_objective(std::span<const double> x, std::span<const double> q) {
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0) sum += x[i] * std::log(x[i] / std::max(q[i], kKlEps));
  }
  return sum;
}

void kl_gradient(std::span<const double> x, std::span<const double> q, std::vector<double>& g) {
  constexpr double kFloor = 1e-300;
  for (std::size_t i = 0; i < x.size(); ++i) {
    g[i] = std::log(std::max(x[i], kFloor) / std::max(q[i], kKlEps)) + 1.0;
  }
}

// Greedy linear minimization over the cumulative-bound polytope: visit
// coordinates by ascending cost and grant each the largest mass its
// containing prefixes still allow. The prefix family is nested, so greedy is
// exact. Pinned coordinates receive no mass.
std::vector<double> linear_oracle(std::span<const double> cost, std::span<const double> bounds,
                                  const std::vector<bool>& pinned) {
  const std::size_t k = cost.size();
  std::vector<std::size_t> by_cost(k);
  std::iota(by_cost.begin(), by_cost.end(), std::size_t{0});
  std::stable_sort(by_cost.begin(), by_cost.end(),
                   [&](std::size_t a, std::size_t b) { return cost[a] < cost[b]; });

  std::vector<double> vertex(k, 0.0);
  std::vector<double> prefix_mass(k, 0.0);  // mass currently at positions <= i
  for (std::size_t pos : by_cost) {
    if (pinned[pos]) continue;
    double cap = bounds[k - 1] - prefix_mass[k - 1];
    for (std::size_t i = pos; i < k; ++i) {
      cap = std::min(cap, bounds[i] - prefix_mass[i]);
    }
    cap = std::max(cap, 0.0);
    if (cap > 0.0) {
      vertex[pos] = cap;
      for (std::size_t i = pos; i < k; ++i) prefix_mass[i] += cap;
    }
  }
  return vertex;
}

// Exact line search for phi(t) = f(x + t d) on [0, t_max]; phi' is
// increasing, so bisect on its sign. d sums to zero, which drops the
// constant term of the KL gradient.
double line_search(std::span<const double> x, std::span<const double> d,
                   std::span<const double> q, double t_max) {
  const auto deriv = [&](double t) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (d[i] == 0.0) continue;
      const double xi = x[i] + t * d[i];
      if (xi <= 0.0) {
        // Only reachable with d[i] < 0; the slope blows up to +infinity.
        return 1e300;
      }
      s += d[i] * std::log(xi / std::max(q[i], kKlEps));
    }
    return s;
  };
  if (deriv(t_max) <= 0.0) return t_max;
  double a = 0.0, b = t_max;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (a + b);
    if (deriv(mid) > 0.0) {
      b = mid;
    } else {
      a = mid;
    }
  }
  return 0.5 * (a + b);
}

struct ActiveVertex {
  std::vector<double> coords;
  double weight;
};

bool same_vertex(const std::vector<double>& a, const std::vector<double>& b) {
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

ProjectionResult oracle_projection(const PossDist& pi, const ProbDist& p_hat,
                                   const OracleConfig& cfg) {
  require_same_size(pi, p_hat);
  if (cfg.max_iterations < 1) {
    throw std::invalid_argument("oracle max_iterations must be >= 1");
  }
  if (!(cfg.tolerance > 0.0)) {
    throw std::invalid_argument("oracle tolerance must be > 0");
  }
  const std::size_t k = pi.size();
  const CredalSet set(pi);
  if (set.contains(p_hat, kAcceptTol)) {
    return ProjectionResult{p_hat, 0.0, true, {}, true, 0};
  }
  const auto order = set.sorted_order();
  const auto bounds = set.cumulative_bounds();

  // Work in ascending-order coordinates throughout.
  std::vector<double> q(k);
  for (std::size_t i = 0; i < k; ++i) q[i] = p_hat[order[i]];

  // The true KL forbids mass where the prediction is exactly zero, but the
  // clamped objective would trade microscopic mass onto those coordinates,
  // whose unbounded curvature then grinds Frank-Wolfe steps to a halt. Pin
  // them to zero except where the cumulative bounds genuinely force mass
  // onto them; forced coordinates fall back to the clamped objective, the
  // same convention the exact path uses for zero-mass groups.
  std::vector<bool> pinned(k, false);
  for (std::size_t i = 0; i < k; ++i) pinned[i] = q[i] == 0.0;
  {
    const std::vector<double> zero_cost(k, 0.0);
    for (;;) {
      const auto probe = linear_oracle(zero_cost, bounds, pinned);
      const double reachable = std::accumulate(probe.begin(), probe.end(), 0.0);
      if (reachable >= 1.0 - 1e-12) break;
      // Unpin the highest-order pinned coordinate: forced mass always sits
      // at the top of the ascending order, where the budget cannot flow on.
      std::size_t top = k;
      for (std::size_t i = k; i-- > 0;) {
        if (pinned[i]) {
          top = i;
          break;
        }
      }
      if (top == k) break;
      pinned[top] = false;
    }
  }

  std::vector<double> grad(k);
  // Start from the vertex preferring high predicted mass.
  for (std::size_t i = 0; i < k; ++i) grad[i] = -q[i];
  std::vector<ActiveVertex> active;
  active.push_back({linear_oracle(grad, bounds, pinned), 1.0});
  std::vector<double> x = active.front().coords;

  const auto rebuild_x = [&] {
    // Prune spent vertices and keep the convex combination normalized; x is
    // always re-synthesized from the representation to avoid drift.
    double total = 0.0;
    std::erase_if(active, [](const ActiveVertex& v) { return v.weight <= 1e-12; });
    for (const auto& v : active) total += v.weight;
    std::fill(x.begin(), x.end(), 0.0);
    for (auto& v : active) {
      v.weight /= total;
      for (std::size_t i = 0; i < k; ++i) x[i] += v.weight * v.coords[i];
    }
  };

  const auto merge_vertex = [&](const std::vector<double>& s, double weight) {
    for (auto& v : active) {
      if (same_vertex(v.coords, s)) {
        v.weight += weight;
        return;
      }
    }
    active.push_back({s, weight});
  };

  bool converged = false;
  int iter = 0;
  std::vector<double> trial(k), dir_fw(k), dir_pw(k);
  // The clamped KL is arbitrarily steep where the prediction vanishes; its
  // duality gap wildly overestimates the remaining suboptimality there, so a
  // long no-progress window serves as the numerically-stationary stop.
  double best_loss = kl_objective(x, q);
  int stale = 0;
  for (; iter < cfg.max_iterations; ++iter) {
    kl_gradient(x, q, grad);
    const std::vector<double> s = linear_oracle(grad, bounds, pinned);

    double gap = 0.0;
    for (std::size_t i = 0; i < k; ++i) gap += grad[i] * (x[i] - s[i]);
    if (gap <= cfg.tolerance) {
      converged = true;
      break;
    }

    // Candidate A: vanilla step towards the FW vertex.
    for (std::size_t i = 0; i < k; ++i) dir_fw[i] = s[i] - x[i];
    const double t_fw = line_search(x, dir_fw, q, 1.0);
    double f_fw = std::numeric_limits<double>::infinity();
    if (t_fw > 0.0) {
      for (std::size_t i = 0; i < k; ++i) trial[i] = std::max(x[i] + t_fw * dir_fw[i], 0.0);
      f_fw = kl_objective(trial, q);
    }

    // Candidate B: pairwise step from the worst-aligned active vertex.
    std::size_t away = active.size();
    double away_score = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < active.size(); ++a) {
      double sc = 0.0;
      for (std::size_t i = 0; i < k; ++i) sc += grad[i] * active[a].coords[i];
      if (sc > away_score) {
        away_score = sc;
        away = a;
      }
    }
    double f_pw = std::numeric_limits<double>::infinity();
    double t_pw = 0.0;
    if (away < active.size()) {
      for (std::size_t i = 0; i < k; ++i) dir_pw[i] = s[i] - active[away].coords[i];
      t_pw = line_search(x, dir_pw, q, active[away].weight);
      if (t_pw > 0.0) {
        for (std::size_t i = 0; i < k; ++i) trial[i] = std::max(x[i] + t_pw * dir_pw[i], 0.0);
        f_pw = kl_objective(trial, q);
      }
    }

    if (!std::isfinite(f_fw) && !std::isfinite(f_pw)) {
      converged = true;  // no direction makes progress
      break;
    }
    if (f_pw <= f_fw) {
      active[away].weight -= t_pw;
      merge_vertex(s, t_pw);
    } else {
      for (auto& v : active) v.weight *= 1.0 - t_fw;
      merge_vertex(s, t_fw);
    }
    rebuild_x();

    const double current = std::min(f_fw, f_pw);
    if (current < best_loss - 1e-15 * std::max(1.0, std::abs(best_loss))) {
      best_loss = current;
      stale = 0;
    } else if (++stale >= 500) {
      converged = true;
      break;
    }
  }

  std::vector<double> weights(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) weights[order[i]] = x[i];
  ProbDist p_r = ProbDist::normalized(std::move(weights));
  const double loss = kl_objective(x, q);
  return ProjectionResult{std::move(p_r), loss, false, {}, converged, iter};
}

}  // namespace ccl
