#pragma once

#include "npc/grid.hpp"
#include "npc/nonlocal.hpp"
#include "npc/physics.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace npc {

struct SolverConfig {
  double newton_tol = 1e-10;
  int max_newton_iters = 30;
  int max_halvings = 30;
  /// mu below -sign_tol is flagged as a bound violation.
  double sign_tol = 1e-10;

  bool operator==(const SolverConfig&) const = default;
};

class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(int step, double residual);
  int step;
  double residual;
};

struct InitialData {
  ScalarField rho0;
  ScalarField mu0;
};

/// Throws std::invalid_argument unless 0 < rho0 < 1 and mu0 >= 0 everywhere.
void validate_initial_data(const InitialData& init);

struct StepDiagnostics {
  int newton_iters = 0;
  double residual = 0.0;
  bool clamp_fired = false;
  bool bound_violation = false;
};

struct StateTrajectory {
  SpaceTimeField rho;
  SpaceTimeField mu;
  std::vector<StepDiagnostics> steps;

  double rho_min() const { return rho.values.minCoeff(); }
  double rho_max() const { return rho.values.maxCoeff(); }
  double mu_min() const { return mu.values.minCoeff(); }
  bool any_bound_violation() const;
  bool any_clamp() const;
  double max_residual() const;
};

/// Control forcing entering the step n -> n+1: the trapezoid average of the
/// two end levels.
Vec control_forcing(const SpaceTimeField& u, int n);

/// Backward Euler in time with the coupling coefficients g, g' frozen at the
/// old level and the nonlocal term evaluated on the history up to the old
/// level. Per step (n -> n+1):
///   (1+2g(r_n)) (m_{n+1}-m_n)/tau + m_{n+1} g'(r_n) (r_{n+1}-r_n)/tau - L m_{n+1} = f_n
///   (r_{n+1}-r_n)/tau + B[r]_n + F'(r_{n+1}) = m_{n+1} g'(r_n)
/// solved by damped Newton on the pair.
StateTrajectory solve_state(const Physics& physics, const NonlocalOperator& B, const SpaceTimeField& u,
                            const InitialData& init, const SolverConfig& cfg = {});

struct StepResidual {
  double chemical = 0.0;  // first equation, weighted L^2
  double order = 0.0;     // second equation, weighted L^2
};

/// Recomputes both stepping residuals from scratch for every step.
std::vector<StepResidual> state_residual(const Physics& physics, const NonlocalOperator& B,
                                         const SpaceTimeField& u, const SpaceTimeField& rho,
                                         const SpaceTimeField& mu);
double max_state_residual(const std::vector<StepResidual>& r);

/// Per step: quadrature sum of (1+2g) d_t mu + mu g' d_t rho - f, which the
/// Neumann stencil forces to zero.
std::vector<double> neumann_compatibility_defect(const Physics& physics, const SpaceTimeField& u,
                                                 const StateTrajectory& traj);

struct StabilityReport {
  bool degenerate = false;
  /// ratio[n-1] for truncation time t_n, n = 1..N.
  std::vector<double> ratio;
  double max_ratio = 0.0;
  double final_ratio = 0.0;
};

/// Ratio of the state difference in H^1(0,t;H) + (H^1(0,t;H) cap L^inf(0,t;V))
/// to ||u1-u2||_{L^2(0,t;H)} for every truncation time.
StabilityReport stability_probe(const Physics& physics, const NonlocalOperator& B, const SpaceTimeField& u1,
                                const SpaceTimeField& u2, const InitialData& init, const SolverConfig& cfg = {});

}  // namespace npc
