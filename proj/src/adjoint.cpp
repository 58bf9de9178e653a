#include "npc/adjoint.hpp"

#include "npc/optimizer.hpp"
#include "step_system.hpp"

#include <cmath>

namespace npc {

namespace {

AdjointPair backward_euler_sweep(const Physics& physics, const NonlocalOperator& B, const StateTrajectory& base,
                                 const Targets& targets, const Betas& betas, AdjointPair out) {
  const auto& grid_ptr = base.rho.grid;
  const Grid& grid = *grid_ptr;
  const TimeAxis time = base.rho.time;
  const int m = grid.node_count();
  const double tau = time.tau();

  detail::StepSolver solver;
  for (int k = time.steps - 1; k >= 0; --k) {
    // Level k was produced by the forward step k-1 -> k; level 0 borrows the
    // first step.
    const int lag = k > 0 ? k - 1 : 0;
    const Vec r_lag = base.rho.slice(lag).transpose(), r_next = base.rho.slice(lag + 1).transpose();
    const Vec m_lag = base.mu.slice(lag).transpose(), m_next = base.mu.slice(lag + 1).transpose();
    const Vec rho_k = base.rho.slice(k).transpose(), mu_k = base.mu.slice(k).transpose();
    const Vec drho = (r_next - r_lag) / tau;
    const Vec dmu = (m_next - m_lag) / tau;

    Vec a(m), c(m), g2(m), fpp(m);
    for (int i = 0; i < m; ++i) {
      a[i] = 1.0 + 2.0 * physics.g(rho_k[i]);
      c[i] = physics.g_prime(r_lag[i]);
      g2[i] = physics.g_second(r_lag[i]);
      fpp[i] = physics.F_second(rho_k[i]);
    }
    const Vec p1 = out.p.slice(k + 1).transpose();
    const Vec q1 = out.q.slice(k + 1).transpose();
    const Vec future = B.apply_derivative_adjoint_slice(base.rho, out.q, k + 1);

    // Columns ordered [q; p] so the Laplacian block falls on p.
    const Vec d11 = -c;
    const Vec d12 = (a.array() / tau - c.array() * drho.array()).matrix();
    const Vec d21 = (1.0 / tau + fpp.array() - mu_k.array() * g2.array()).matrix();
    const Vec d22 = (c.array() * (dmu.array() + mu_k.array() / tau)).matrix();
    Vec rhs(2 * m);
    rhs.head(m) = betas.mu * (mu_k - targets.mu.slice(k).transpose()) + (a.array() * p1.array() / tau).matrix();
    rhs.tail(m) = betas.rho * (rho_k - targets.rho.slice(k).transpose()) + q1 / tau +
                  (c.array() * mu_k.array() * p1.array() / tau).matrix() - future;
    if (!solver.factorize(detail::block_system(grid, d11, d12, d21, d22))) throw LinearSolveFailure(k);
    const Vec sol = solver.solve(rhs);
    if (!sol.allFinite()) throw LinearSolveFailure(k);
    out.q.slice(k) = sol.head(m).transpose();
    out.p.slice(k) = sol.tail(m).transpose();
  }
  return out;
}

AdjointPair dual_consistent_sweep(const Physics& physics, const NonlocalOperator& B, const StateTrajectory& base,
                                  const Targets& targets, const Betas& betas, AdjointPair out) {
  const auto& grid_ptr = base.rho.grid;
  const Grid& grid = *grid_ptr;
  const TimeAxis time = base.rho.time;
  const int m = grid.node_count();
  const int N = time.steps;
  const double tau = time.tau();

  // q rescaled to an L^2(Q) density so that B's adjoint applies directly.
  SpaceTimeField q_density(grid_ptr, time);
  detail::StepSolver solver;
  detail::StepCoefficients next;  // coefficients of step j+1 -> j+2
  Vec mu_next2;
  for (int j = N - 1; j >= 0; --j) {
    const Vec r0 = base.rho.slice(j).transpose(), r1 = base.rho.slice(j + 1).transpose();
    const Vec m0 = base.mu.slice(j).transpose(), m1 = base.mu.slice(j + 1).transpose();
    const auto s = detail::step_coefficients(physics, r0, r1, m0, m1, tau);
    const double src = time.weight(j + 1) / tau;

    Vec rhs(2 * m);
    rhs.head(m) = src * betas.mu * (m1 - targets.mu.slice(j + 1).transpose());
    rhs.tail(m) = src * betas.rho * (r1 - targets.rho.slice(j + 1).transpose()) -
                  src * B.apply_derivative_adjoint_slice(base.rho, q_density, j + 1);
    if (j + 1 < N) {
      const Vec p1 = out.p.slice(j + 1).transpose(), q1 = out.q.slice(j + 1).transpose();
      const Vec k_xi = (2.0 * next.c.array() * next.dmu.array() + mu_next2.array() * next.c2.array() * next.drho.array() -
                        mu_next2.array() * next.c.array() / tau)
                           .matrix();
      rhs.head(m) += (next.a.array() * p1.array() / tau).matrix();
      rhs.tail(m) += (q1.array() * (1.0 / tau + mu_next2.array() * next.c2.array()) - p1.array() * k_xi.array()).matrix();
    }

    // Transposed step Jacobian, columns ordered [q; p] so the Laplacian falls on p.
    const Vec d11 = -s.c;
    const Vec d12 = (s.a.array() / tau + s.c.array() * s.drho.array()).matrix();
    const Vec d21 = (1.0 / tau + s.fpp_new.array()).matrix();
    const Vec d22 = (m1.array() * s.c.array() / tau).matrix();
    if (!solver.factorize(detail::block_system(grid, d11, d12, d21, d22))) throw LinearSolveFailure(j);
    const Vec sol = solver.solve(rhs);
    if (!sol.allFinite()) throw LinearSolveFailure(j);
    out.q.slice(j) = sol.head(m).transpose();
    out.p.slice(j) = sol.tail(m).transpose();
    q_density.slice(j) = (tau / time.weight(j)) * out.q.slice(j);
    next = s;
    mu_next2 = m1;
  }
  return out;
}

}  // namespace

AdjointPair solve_adjoint(const Physics& physics, const NonlocalOperator& B, const StateTrajectory& base,
                          const Targets& targets, const Betas& betas, AdjointScheme scheme) {
  validate_betas(betas);
  require_same_shape(base.rho, targets.rho, "solve_adjoint");
  require_same_shape(base.mu, targets.mu, "solve_adjoint");
  AdjointPair out{SpaceTimeField(base.rho.grid, base.rho.time), SpaceTimeField(base.rho.grid, base.rho.time), scheme};
  if (betas.rho == 0.0 && betas.mu == 0.0) return out;
  if (scheme == AdjointScheme::backward_euler) return backward_euler_sweep(physics, B, base, targets, betas, out);
  return dual_consistent_sweep(physics, B, base, targets, betas, out);
}

SpaceTimeField control_representation(const AdjointPair& adj) {
  if (adj.scheme == AdjointScheme::backward_euler) return adj.p;
  const TimeAxis& time = adj.p.time;
  const int N = time.steps;
  SpaceTimeField r(adj.p.grid, time);
  // Control level k feeds steps k-1 -> k and k -> k+1 with weight tau/2 each.
  for (int k = 0; k <= N; ++k) {
    const double f = 0.5 * time.tau() / time.weight(k);
    if (k > 0) r.values.row(k) += f * adj.p.values.row(k - 1);
    if (k < N) r.values.row(k) += f * adj.p.values.row(k);
  }
  return r;
}

SpaceTimeField gradient(const SpaceTimeField& u, const AdjointPair& adj, double beta_control) {
  require_same_shape(u, adj.p, "gradient");
  SpaceTimeField g = control_representation(adj);
  if (beta_control != 0.0) g.values += beta_control * u.values;
  return g;
}

SpaceTimeField discrete_gradient_dense(const Problem& problem, const SpaceTimeField& u) {
  const int nodes = problem.grid->node_count();
  if (nodes > 16 || problem.time.steps > 32) {
    throw std::length_error("discrete_gradient_dense: instance too large for the dense oracle");
  }
  const StateTrajectory base = solve_state(problem.physics, *problem.B, u, problem.init, problem.solver);
  const SpaceTimeField res_rho = base.rho - problem.targets.rho;
  const SpaceTimeField res_mu = base.mu - problem.targets.mu;
  SpaceTimeField grad(problem.grid, problem.time);
  SpaceTimeField e(problem.grid, problem.time);
  for (int n = 0; n <= problem.time.steps; ++n) {
    for (int i = 0; i < nodes; ++i) {
      e.values.setZero();
      e.values(n, i) = 1.0;
      const LinearizedPair col = solve_linearized(problem.physics, *problem.B, base, e);
      double d = 0.0;
      if (problem.betas.rho != 0.0) d += problem.betas.rho * inner_l2q(res_rho, col.xi);
      if (problem.betas.mu != 0.0) d += problem.betas.mu * inner_l2q(res_mu, col.eta);
      // dJ = <G, e>_{L^2(Q)} = weight(n) * w_i * G(n, i)
      grad.values(n, i) = d / (problem.time.weight(n) * problem.grid->weights()[i]);
    }
  }
  if (problem.betas.control != 0.0) grad.values += problem.betas.control * u.values;
  return grad;
}

DualityDefect adjoint_duality(const Physics& physics, const NonlocalOperator& B, const StateTrajectory& base,
                              const AdjointPair& adj, const SpaceTimeField& h, const Targets& targets,
                              const Betas& betas) {
  const LinearizedPair lin = solve_linearized(physics, B, base, h);
  DualityDefect d;
  d.tracking_side = cost_directional_derivative(base, lin, h, h, targets, Betas{betas.rho, betas.mu, 0.0});
  d.adjoint_side = inner_l2q(control_representation(adj), h);
  const double scale = std::max(std::abs(d.tracking_side), std::abs(d.adjoint_side));
  d.relative = scale > 0.0 ? std::abs(d.tracking_side - d.adjoint_side) / scale : 0.0;
  return d;
}

}  // namespace npc
