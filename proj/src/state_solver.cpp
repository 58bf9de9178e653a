#include "npc/state_solver.hpp"

#include "step_system.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>
#include <sstream>

namespace npc {

namespace {

std::string nonconvergence_message(int step, double residual) {
  std::ostringstream os;
  os << "Newton did not converge at step " << step << " (residual " << residual << ")";
  return os.str();
}

struct StepState {
  Vec r1;
  Vec r2;
  double norm;
  bool clamp;
};

}  // namespace

NonConvergence::NonConvergence(int s, double r)
    : std::runtime_error(nonconvergence_message(s, r)), step(s), residual(r) {}

void validate_initial_data(const InitialData& init) {
  if (!init.rho0.grid || !init.mu0.grid) throw std::invalid_argument("initial data: missing grid");
  require_same_grid(*init.rho0.grid, *init.mu0.grid, "initial data");
  if (!init.rho0.values.allFinite() || !init.mu0.values.allFinite()) {
    throw std::invalid_argument("initial data: non-finite values");
  }
  if (!(init.rho0.values.minCoeff() > 0.0) || !(init.rho0.values.maxCoeff() < 1.0)) {
    throw std::invalid_argument("initial data: rho0 must satisfy 0 < rho0 < 1");
  }
  if (init.mu0.values.minCoeff() < 0.0) throw std::invalid_argument("initial data: mu0 must be nonnegative");
}

Vec control_forcing(const SpaceTimeField& u, int n) {
  return 0.5 * (u.slice(n) + u.slice(n + 1)).transpose();
}

bool StateTrajectory::any_bound_violation() const {
  for (const auto& s : steps)
    if (s.bound_violation) return true;
  return false;
}

bool StateTrajectory::any_clamp() const {
  for (const auto& s : steps)
    if (s.clamp_fired) return true;
  return false;
}

double StateTrajectory::max_residual() const {
  double r = 0.0;
  for (const auto& s : steps) r = std::max(r, s.residual);
  return r;
}

StateTrajectory solve_state(const Physics& physics, const NonlocalOperator& B, const SpaceTimeField& u,
                            const InitialData& init, const SolverConfig& cfg) {
  validate_initial_data(init);
  require_same_grid(*u.grid, *init.rho0.grid, "solve_state");
  if (!u.all_finite()) throw std::invalid_argument("solve_state: control has non-finite values");

  const Grid& grid = *u.grid;
  const SpMat& lap = grid.laplacian();
  const int m = grid.node_count();
  const double tau = u.time.tau();
  const bool singular = physics.spec().singular == SingularPart::logarithmic;

  StateTrajectory traj{SpaceTimeField(u.grid, u.time), SpaceTimeField(u.grid, u.time), {}};
  traj.rho.slice(0) = init.rho0.values.transpose();
  traj.mu.slice(0) = init.mu0.values.transpose();
  traj.steps.reserve(u.time.steps);

  detail::StepSolver solver;
  for (int n = 0; n < u.time.steps; ++n) {
    const Vec rho_old = traj.rho.slice(n).transpose();
    const Vec mu_old = traj.mu.slice(n).transpose();
    const Vec hist = B.apply_slice(traj.rho, n);
    const Vec f = control_forcing(u, n);
    Vec a(m), c(m);
    for (int i = 0; i < m; ++i) {
      a[i] = 1.0 + 2.0 * physics.g(rho_old[i]);
      c[i] = physics.g_prime(rho_old[i]);
    }

    auto residual = [&](const Vec& x, const Vec& y) {
      StepState s;
      s.clamp = false;
      Vec fp(m);
      for (int i = 0; i < m; ++i) {
        const Clamped v = physics.F_prime_checked(x[i]);
        fp[i] = v.value;
        s.clamp = s.clamp || v.clamped;
      }
      s.r1 = (a.array() * (y - mu_old).array() / tau + y.array() * c.array() * (x - rho_old).array() / tau)
                 .matrix() -
             lap * y - f;
      s.r2 = (x - rho_old) / tau + hist + fp - (y.array() * c.array()).matrix();
      s.norm = detail::pair_norm(grid, s.r1, s.r2);
      return s;
    };

    Vec x = rho_old;
    Vec y = mu_old;
    StepState st = residual(x, y);
    StepDiagnostics diag;
    int it = 0;
    while (st.norm > cfg.newton_tol) {
      if (it >= cfg.max_newton_iters) throw NonConvergence(n, st.norm);
      ++it;
      const auto coeff = detail::step_coefficients(physics, rho_old, x, mu_old, y, tau);
      if (!solver.factorize(detail::step_jacobian(grid, coeff, y, tau))) throw NonConvergence(n, st.norm);
      Vec rhs(2 * m);
      rhs << -st.r1, -st.r2;
      const Vec d = solver.solve(rhs);
      const Vec dx = d.head(m);
      const Vec dy = d.tail(m);

      // Newton increments at roundoff level: accept the current iterate.
      if (dx.lpNorm<Eigen::Infinity>() + dy.lpNorm<Eigen::Infinity>() <=
          1e-14 * (1.0 + x.lpNorm<Eigen::Infinity>() + y.lpNorm<Eigen::Infinity>())) {
        break;
      }

      double alpha = 1.0;
      bool accepted = false;
      for (int k = 0; k <= cfg.max_halvings; ++k, alpha *= 0.5) {
        const Vec xt = x + alpha * dx;
        if (singular && (xt.minCoeff() <= 0.0 || xt.maxCoeff() >= 1.0)) continue;
        const Vec yt = y + alpha * dy;
        StepState trial = residual(xt, yt);
        if (trial.norm < st.norm) {
          x = xt;
          y = yt;
          st = std::move(trial);
          accepted = true;
          break;
        }
      }
      if (!accepted) throw NonConvergence(n, st.norm);
    }

    diag.newton_iters = it;
    diag.residual = st.norm;
    diag.clamp_fired = st.clamp;
    diag.bound_violation = (singular && (x.minCoeff() <= 0.0 || x.maxCoeff() >= 1.0)) || y.minCoeff() < -cfg.sign_tol;
    traj.rho.slice(n + 1) = x.transpose();
    traj.mu.slice(n + 1) = y.transpose();
    traj.steps.push_back(diag);
    if (diag.bound_violation) spdlog::debug("solve_state: bound violation at step {}", n);
  }
  return traj;
}

std::vector<StepResidual> state_residual(const Physics& physics, const NonlocalOperator& B,
                                         const SpaceTimeField& u, const SpaceTimeField& rho,
                                         const SpaceTimeField& mu) {
  require_same_shape(u, rho, "state_residual");
  require_same_shape(u, mu, "state_residual");
  const Grid& grid = *u.grid;
  const double tau = u.time.tau();
  const int m = grid.node_count();
  std::vector<StepResidual> out;
  out.reserve(u.time.steps);
  for (int n = 0; n < u.time.steps; ++n) {
    const Vec r0 = rho.slice(n).transpose(), r1 = rho.slice(n + 1).transpose();
    const Vec m0 = mu.slice(n).transpose(), m1 = mu.slice(n + 1).transpose();
    Vec e1(m), e2(m);
    const Vec lm = grid.laplacian() * m1;
    const Vec hist = B.apply_slice(rho, n);
    const Vec f = control_forcing(u, n);
    for (int i = 0; i < m; ++i) {
      const double gp = physics.g_prime(r0[i]);
      e1[i] = (1.0 + 2.0 * physics.g(r0[i])) * (m1[i] - m0[i]) / tau + m1[i] * gp * (r1[i] - r0[i]) / tau - lm[i] -
              f[i];
      e2[i] = (r1[i] - r0[i]) / tau + hist[i] + physics.F_prime(r1[i]) - m1[i] * gp;
    }
    out.push_back({norm_h(grid, e1), norm_h(grid, e2)});
  }
  return out;
}

double max_state_residual(const std::vector<StepResidual>& r) {
  double v = 0.0;
  for (const auto& s : r) v = std::max({v, s.chemical, s.order});
  return v;
}

std::vector<double> neumann_compatibility_defect(const Physics& physics, const SpaceTimeField& u,
                                                 const StateTrajectory& traj) {
  const Grid& grid = *u.grid;
  const double tau = u.time.tau();
  const int m = grid.node_count();
  std::vector<double> out;
  for (int n = 0; n < u.time.steps; ++n) {
    const Vec f = control_forcing(u, n);
    Vec e(m);
    for (int i = 0; i < m; ++i) {
      const double r0 = traj.rho.values(n, i), r1 = traj.rho.values(n + 1, i);
      const double m0 = traj.mu.values(n, i), m1 = traj.mu.values(n + 1, i);
      e[i] = (1.0 + 2.0 * physics.g(r0)) * (m1 - m0) / tau + m1 * physics.g_prime(r0) * (r1 - r0) / tau - f[i];
    }
    out.push_back(grid.weights().dot(e));
  }
  return out;
}

StabilityReport stability_probe(const Physics& physics, const NonlocalOperator& B, const SpaceTimeField& u1,
                                const SpaceTimeField& u2, const InitialData& init, const SolverConfig& cfg) {
  require_same_shape(u1, u2, "stability_probe");
  StabilityReport rep;
  const SpaceTimeField du = u1 - u2;
  if (norm_l2q(du) == 0.0) {
    rep.degenerate = true;
    rep.max_ratio = std::numeric_limits<double>::quiet_NaN();
    rep.final_ratio = rep.max_ratio;
    return rep;
  }
  const StateTrajectory s1 = solve_state(physics, B, u1, init, cfg);
  const StateTrajectory s2 = solve_state(physics, B, u2, init, cfg);
  const SpaceTimeField drho = s1.rho - s2.rho;
  const SpaceTimeField dmu = s1.mu - s2.mu;
  for (int n = 1; n <= u1.time.steps; ++n) {
    const double den = norm_l2_upto(du, n);
    if (den == 0.0) {
      rep.ratio.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double num = norm_h1_time_upto(drho, n) + norm_h1_time_upto(dmu, n) + norm_linf_v_upto(dmu, n);
    const double r = num / den;
    rep.ratio.push_back(r);
    rep.max_ratio = std::max(rep.max_ratio, r);
  }
  rep.final_ratio = rep.ratio.back();
  return rep;
}

}  // namespace npc
