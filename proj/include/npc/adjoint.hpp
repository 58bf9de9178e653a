#pragma once

#include "npc/problem.hpp"
#include "npc/sensitivity.hpp"

namespace npc {

enum class AdjointScheme {
  /// Level k carries the multiplier of the forward step k -> k+1: the
  /// backward sweep is the transpose of the forward step Jacobians, sources
  /// enter with the trapezoid weight of the level they act on, and the
  /// control gradient averages adjacent levels like the control forcing does.
  dual_consistent,
  /// Plain backward Euler on the continuous adjoint equations with p, q at
  /// the grid levels; the gradient is p + beta_u u. First-order consistent
  /// only.
  backward_euler,
};

/// Adjoint states of the system
///   -(1+2g) p_t - g' rho_t p - L p - g' q = beta_mu (mu - mu_Q)
///   -q_t + F'' q - mu g'' q + g' (mu_t p - mu p_t) + DB^*(q) = beta_rho (rho - rho_Q)
/// with p(T) = q(T) = 0. Both schemes keep p implicit in the Laplacian,
/// freeze g' and the state rates at the forward step's levels, and evaluate
/// DB^* on the already computed future levels.
struct AdjointPair {
  SpaceTimeField p;
  SpaceTimeField q;
  AdjointScheme scheme = AdjointScheme::dual_consistent;
};

AdjointPair solve_adjoint(const Physics& physics, const NonlocalOperator& B, const StateTrajectory& base,
                          const Targets& targets, const Betas& betas,
                          AdjointScheme scheme = AdjointScheme::dual_consistent);

/// p as seen by the control in the trapezoid L^2(Q) pairing: the average of
/// the two steps a control level feeds (dual_consistent), or p itself
/// (backward_euler).
SpaceTimeField control_representation(const AdjointPair& adj);

/// L^2(Q) gradient representative of the reduced cost:
/// control_representation(adj) + beta_u * u.
SpaceTimeField gradient(const SpaceTimeField& u, const AdjointPair& adj, double beta_control);

/// Exact gradient of the discrete reduced cost, in the trapezoid L^2(Q)
/// representation, assembled column by column from tangent solves. Intended
/// as an oracle on small instances; throws std::length_error above 16 nodes
/// or 32 steps.
SpaceTimeField discrete_gradient_dense(const Problem& problem, const SpaceTimeField& u);

struct DualityDefect {
  double tracking_side = 0.0;  // beta_rho <rho - rho_Q, xi> + beta_mu <mu - mu_Q, eta>
  double adjoint_side = 0.0;   // <control_representation(adj), h>
  double relative = 0.0;
};

/// Compares both sides of the adjoint/linearized identity along direction h.
DualityDefect adjoint_duality(const Physics& physics, const NonlocalOperator& B, const StateTrajectory& base,
                              const AdjointPair& adj, const SpaceTimeField& h, const Targets& targets,
                              const Betas& betas);

}  // namespace npc
