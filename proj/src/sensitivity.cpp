#include "npc/sensitivity.hpp"

#include "step_system.hpp"

#include <string>

namespace npc {

LinearSolveFailure::LinearSolveFailure(int s)
    : std::runtime_error("linear step solve failed at step " + std::to_string(s)), step(s) {}

LinearizedPair solve_linearized(const Physics& physics, const NonlocalOperator& B, const StateTrajectory& base,
                                const SpaceTimeField& h, LinearizationForm form) {
  require_same_shape(base.rho, h, "solve_linearized");
  const Grid& grid = *h.grid;
  const int m = grid.node_count();
  const double tau = h.time.tau();

  LinearizedPair out{SpaceTimeField(h.grid, h.time), SpaceTimeField(h.grid, h.time)};
  detail::StepSolver solver;
  for (int n = 0; n < h.time.steps; ++n) {
    const Vec r0 = base.rho.slice(n).transpose(), r1 = base.rho.slice(n + 1).transpose();
    const Vec m0 = base.mu.slice(n).transpose(), m1 = base.mu.slice(n + 1).transpose();
    const Vec xi0 = out.xi.slice(n).transpose(), eta0 = out.eta.slice(n).transpose();
    const Vec hist = B.apply_derivative_slice(base.rho, out.xi, n);
    const Vec f = control_forcing(h, n);
    const auto s = detail::step_coefficients(physics, r0, r1, m0, m1, tau);

    SpMat mat;
    Vec rhs1, rhs2;
    if (form == LinearizationForm::discrete_tangent) {
      mat = detail::step_jacobian(grid, s, m1, tau);
      rhs1 = f + (s.a.array() * eta0.array() / tau).matrix() -
             ((2.0 * s.c.array() * s.dmu.array() + m1.array() * s.c2.array() * s.drho.array() -
               m1.array() * s.c.array() / tau) *
              xi0.array())
                 .matrix();
      rhs2 = xi0 / tau - hist + (m1.array() * s.c2.array() * xi0.array()).matrix();
    } else {
      Vec a1(m), c1(m), g21(m);
      for (int i = 0; i < m; ++i) {
        a1[i] = 1.0 + 2.0 * physics.g(r1[i]);
        c1[i] = physics.g_prime(r1[i]);
        g21[i] = physics.g_second(r1[i]);
      }
      const Vec d11 = (2.0 * c1.array() * s.dmu.array() + m1.array() * g21.array() * s.drho.array() +
                       m1.array() * c1.array() / tau)
                          .matrix();
      const Vec d12 = (a1.array() / tau + c1.array() * s.drho.array()).matrix();
      const Vec d21 = (1.0 / tau + s.fpp_new.array() - m1.array() * g21.array()).matrix();
      const Vec d22 = -c1;
      mat = detail::block_system(grid, d11, d12, d21, d22);
      rhs1 = f + (a1.array() * eta0.array() / tau + m1.array() * c1.array() * xi0.array() / tau).matrix();
      rhs2 = xi0 / tau - hist;
    }
    if (!solver.factorize(mat)) throw LinearSolveFailure(n);
    Vec rhs(2 * m);
    rhs << rhs1, rhs2;
    const Vec sol = solver.solve(rhs);
    if (!sol.allFinite()) throw LinearSolveFailure(n);
    out.xi.slice(n + 1) = sol.head(m).transpose();
    out.eta.slice(n + 1) = sol.tail(m).transpose();
  }
  return out;
}

double state_norm_y(const SpaceTimeField& rho, const SpaceTimeField& mu) {
  const int n = rho.time.steps;
  return norm_h1_time_upto(rho, n) + norm_linf_h_upto(mu, n) + norm_l2_v_upto(mu, n);
}

double cost_directional_derivative(const StateTrajectory& base, const LinearizedPair& lin, const SpaceTimeField& u,
                                   const SpaceTimeField& h, const Targets& targets, const Betas& betas) {
  double d = 0.0;
  if (betas.rho != 0.0) d += betas.rho * inner_l2q(base.rho - targets.rho, lin.xi);
  if (betas.mu != 0.0) d += betas.mu * inner_l2q(base.mu - targets.mu, lin.eta);
  if (betas.control != 0.0) d += betas.control * inner_l2q(u, h);
  return d;
}

bool TaylorTable::strictly_decreasing() const {
  if (degenerate || remainder.size() < 2) return false;
  for (std::size_t i = 1; i < remainder.size(); ++i)
    if (!(remainder[i] < remainder[i - 1])) return false;
  return true;
}

std::vector<double> default_taylor_ladder() { return {1e-1, 5e-2, 2.5e-2, 1.25e-2}; }

TaylorTable taylor_test(const Physics& physics, const NonlocalOperator& B, const SpaceTimeField& u,
                        const SpaceTimeField& h, const std::vector<double>& lambdas, const InitialData& init,
                        const SolverConfig& cfg) {
  require_same_shape(u, h, "taylor_test");
  TaylorTable table;
  table.lambdas = lambdas;
  if (h.values.isZero(0.0)) {
    table.degenerate = true;
    return table;
  }
  const StateTrajectory base = solve_state(physics, B, u, init, cfg);
  const LinearizedPair lin = solve_linearized(physics, B, base, h);
  const LinearizedPair alt = solve_linearized(physics, B, base, h, LinearizationForm::continuous_backward_euler);
  const double lin_norm = state_norm_y(lin.xi, lin.eta);
  table.scheme_consistency = lin_norm > 0.0 ? state_norm_y(lin.xi - alt.xi, lin.eta - alt.eta) / lin_norm : 0.0;

  for (double lambda : lambdas) {
    const SpaceTimeField up = u + lambda * h;
    const StateTrajectory pert = solve_state(physics, B, up, init, cfg);
    const SpaceTimeField yr = pert.rho - base.rho - lambda * lin.xi;
    const SpaceTimeField ym = pert.mu - base.mu - lambda * lin.eta;
    table.remainder.push_back(state_norm_y(yr, ym) / lambda);
  }
  for (std::size_t i = 0; i + 1 < table.remainder.size(); ++i) {
    table.ratios.push_back(table.remainder[i] / table.remainder[i + 1]);
  }
  return table;
}

}  // namespace npc
