#pragma once

#include <span>
#include <vector>

#include "ccl/prob.hpp"

namespace ccl {

/// Result of projecting a prediction onto a credal polytope.
struct ProjectionResult {
  ProbDist p_r;               ///< the KL minimizer inside the polytope
  double loss = 0.0;          ///< KL(p_r || p_hat)
  bool inside = false;        ///< whether p_hat was already a member
  std::vector<double> faces;  ///< possibility level accepted per iteration
  bool converged = true;      ///< oracle only: duality gap reached tolerance
  int iterations = 0;         ///< oracle only: Frank-Wolfe iterations used
};

/// Exact minimizer of KL(p || p_hat) over the credal set induced by pi.
///
/// Classes are settled in groups: per round, candidate levels are scanned
/// from the highest remaining possibility downward; the tentative proportional
/// allocation of the level's budget over all unassigned classes at or below
/// that level is accepted as soon as it violates no cumulative bound at
/// levels up to the candidate's. Unassigned classes with zero predicted mass
/// share their group budget uniformly. Returns (p_hat, 0) when p_hat is
/// already a member.
ProjectionResult credal_projection(const PossDist& pi, const ProbDist& p_hat);

/// Gradient of the projection loss with respect to the logits producing
/// p_hat = softmax(logits), treating the minimizer as a constant target:
/// grad = softmax(logits) - p_r. Identically zero when p_hat is a member.
std::vector<double> credal_loss_gradient(const PossDist& pi, std::span<const double> logits);

/// Numerically stable softmax.
ProbDist softmax(std::span<const double> logits);

struct OracleConfig {
  int max_iterations = 100000;
  double tolerance = 1e-6;  ///< duality-gap stopping threshold
};

/// Independent verification path: pairwise Frank-Wolfe over the cumulative
/// constraint polytope. The linear subproblem is solved greedily, filling
/// the most negative gradient coordinates first, each capped by the residual
/// budgets of the ascending-possibility prefixes containing it. Always
/// returns a feasible point; its loss upper-bounds the exact minimum.
/// Non-convergence within max_iterations flags the result instead of
/// throwing.
ProjectionResult oracle_projection(const PossDist& pi, const ProbDist& p_hat,
                                   const OracleConfig& cfg = {});

}  // namespace ccl
