#pragma once

#include "npc/problem.hpp"
#include "npc/state_solver.hpp"

#include <stdexcept>
#include <vector>

namespace npc {

class LinearSolveFailure : public std::runtime_error {
 public:
  explicit LinearSolveFailure(int step);
  int step;
};

/// Sensitivities (xi, eta) of (rho, mu) along a control direction; both
/// vanish at t = 0.
struct LinearizedPair {
  SpaceTimeField xi;
  SpaceTimeField eta;
};

enum class LinearizationForm {
  /// Exact derivative of the discrete stepping map (same lagging, same
  /// explicit nonlocal history).
  discrete_tangent,
  /// Backward Euler applied directly to the continuous linearized equations,
  /// all coefficients at the new level. Used only to measure the gap between
  /// the two.
  continuous_backward_euler,
};

LinearizedPair solve_linearized(const Physics& physics, const NonlocalOperator& B, const StateTrajectory& base,
                                const SpaceTimeField& h,
                                LinearizationForm form = LinearizationForm::discrete_tangent);

/// ||rho||_{H^1(0,T;H)} + ||mu||_{L^inf(0,T;H)} + ||mu||_{L^2(0,T;V)}.
double state_norm_y(const SpaceTimeField& rho, const SpaceTimeField& mu);

/// beta_rho <rho - rho_Q, xi> + beta_mu <mu - mu_Q, eta> + beta_u <u, h>.
double cost_directional_derivative(const StateTrajectory& base, const LinearizedPair& lin, const SpaceTimeField& u,
                                   const SpaceTimeField& h, const Targets& targets, const Betas& betas);

struct TaylorTable {
  bool degenerate = false;
  std::vector<double> lambdas;
  std::vector<double> remainder;  // r(lambda)
  std::vector<double> ratios;     // r(lambda_i) / r(lambda_{i+1})
  /// Relative Y-norm gap between the discrete tangent and the continuous
  /// backward Euler linearization.
  double scheme_consistency = 0.0;

  bool strictly_decreasing() const;
};

TaylorTable taylor_test(const Physics& physics, const NonlocalOperator& B, const SpaceTimeField& u,
                        const SpaceTimeField& h, const std::vector<double>& lambdas, const InitialData& init,
                        const SolverConfig& cfg = {});

std::vector<double> default_taylor_ladder();

}  // namespace npc
