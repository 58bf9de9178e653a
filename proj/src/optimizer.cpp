#include "npc/optimizer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

namespace npc {

double eval_cost(const StateTrajectory& traj, const SpaceTimeField& u, const Targets& targets, const Betas& betas) {
  double j = 0.0;
  if (betas.rho != 0.0) {
    const double e = norm_l2q(traj.rho - targets.rho);
    j += 0.5 * betas.rho * e * e;
  }
  if (betas.mu != 0.0) {
    const double e = norm_l2q(traj.mu - targets.mu);
    j += 0.5 * betas.mu * e * e;
  }
  if (betas.control != 0.0) {
    const double e = norm_l2q(u);
    j += 0.5 * betas.control * e * e;
  }
  return j;
}

TimeMetric::TimeMetric(const TimeAxis& t) {
  const int n = t.steps + 1;
  const double inv = 1.0 / t.tau();
  diag.resize(n);
  off = Vec::Constant(n - 1, -inv);
  for (int k = 0; k < n; ++k) {
    const int links = (k == 0 || k == n - 1) ? 1 : 2;
    diag[k] = t.weight(k) + links * inv;
  }
}

Vec TimeMetric::apply(const Vec& v) const {
  Vec out = diag.cwiseProduct(v);
  const Eigen::Index n = v.size();
  out.head(n - 1) += off.cwiseProduct(v.tail(n - 1));
  out.tail(n - 1) += off.cwiseProduct(v.head(n - 1));
  return out;
}

namespace {

// Thomas algorithm for a tridiagonal system where rows flagged `fixed` are
// replaced by identity rows.
Vec solve_reduced(const TimeMetric& a, const Vec& rhs, const std::vector<char>& fixed, const Vec& fixed_val) {
  const Eigen::Index n = rhs.size();
  Vec lower(n), diag(n), upper(n), b(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (fixed[k]) {
      lower[k] = 0.0;
      upper[k] = 0.0;
      diag[k] = 1.0;
      b[k] = fixed_val[k];
    } else {
      lower[k] = k > 0 ? a.off[k - 1] : 0.0;
      upper[k] = k + 1 < n ? a.off[k] : 0.0;
      diag[k] = a.diag[k];
      b[k] = rhs[k];
    }
  }
  for (Eigen::Index k = 1; k < n; ++k) {
    const double w = lower[k] / diag[k - 1];
    diag[k] -= w * upper[k - 1];
    b[k] -= w * b[k - 1];
  }
  Vec x(n);
  x[n - 1] = b[n - 1] / diag[n - 1];
  for (Eigen::Index k = n - 2; k >= 0; --k) x[k] = (b[k] - upper[k] * x[k + 1]) / diag[k];
  return x;
}

Vec obstacle_pgs(const TimeMetric& a, const Vec& b, const Vec& lo, const Vec& hi, Vec v, double tol, int max_iters) {
  const Eigen::Index n = b.size();
  for (int it = 0; it < max_iters; ++it) {
    double change = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      double s = b[k];
      if (k > 0) s -= a.off[k - 1] * v[k - 1];
      if (k + 1 < n) s -= a.off[k] * v[k + 1];
      const double nv = std::clamp(s / a.diag[k], lo[k], hi[k]);
      change = std::max(change, std::abs(nv - v[k]));
      v[k] = nv;
    }
    if (change <= tol * (1.0 + v.lpNorm<Eigen::Infinity>())) return v;
  }
  throw ProjectionNonConvergence("projected Gauss-Seidel did not converge");
}

// Primal-dual active set iteration; terminates when the active sets repeat.
bool obstacle_active_set(const TimeMetric& a, const Vec& b, const Vec& lo, const Vec& hi, Vec& v) {
  const Eigen::Index n = b.size();
  v = v.cwiseMax(lo).cwiseMin(hi);
  Vec lambda = b - a.apply(v);
  std::vector<char> state(n, 0), prev(n, 2);
  for (int it = 0; it < 2 * static_cast<int>(n) + 50; ++it) {
    Vec fixed_val(n);
    std::vector<char> fixed(n, 0);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double c = a.diag[k];
      // lambda = b - A v is the multiplier: positive pushes up, negative down.
      if (lambda[k] + c * (v[k] - hi[k]) > 0.0) {
        state[k] = 1;
      } else if (lambda[k] + c * (v[k] - lo[k]) < 0.0) {
        state[k] = -1;
      } else {
        state[k] = 0;
      }
      fixed[k] = state[k] != 0;
      fixed_val[k] = state[k] > 0 ? hi[k] : lo[k];
    }
    if (state == prev) return true;
    prev = state;
    v = solve_reduced(a, b, fixed, fixed_val);
    lambda = b - a.apply(v);
    for (Eigen::Index k = 0; k < n; ++k)
      if (!fixed[k]) lambda[k] = 0.0;
  }
  return false;
}

}  // namespace

Vec solve_time_obstacle(const TimeMetric& metric, const Vec& z, const Vec& lo, const Vec& hi,
                        const ProjectionConfig& cfg) {
  const Vec b = metric.apply(z);
  Vec v = z;
  if (cfg.obstacle == ObstacleSolver::active_set) {
    if (obstacle_active_set(metric, b, lo, hi, v)) return v.cwiseMax(lo).cwiseMin(hi);
    spdlog::debug("obstacle: active set did not settle, falling back to projected Gauss-Seidel");
  }
  return obstacle_pgs(metric, b, lo, hi, z.cwiseMax(lo).cwiseMin(hi), cfg.obstacle_tol, cfg.max_obstacle_iters);
}

SpaceTimeField project_box(const SpaceTimeField& u, const SpaceTimeField& u_max, const ProjectionConfig& cfg) {
  require_same_shape(u, u_max, "project_box");
  SpaceTimeField out = u;
  if (cfg.metric == ProjectionMetric::l2_clip_scale_inexact) {
    out.values = u.values.cwiseMax(0.0).cwiseMin(u_max.values);
    return out;
  }
  const TimeMetric metric(u.time);
  const Vec lo = Vec::Zero(u.levels());
  for (int i = 0; i < u.nodes(); ++i) {
    const Vec z = u.values.col(i);
    const Vec hi = u_max.values.col(i);
    if ((z.array() >= lo.array()).all() && (z.array() <= hi.array()).all()) continue;
    out.values.col(i) = solve_time_obstacle(metric, z, lo, hi, cfg);
  }
  return out;
}

SpaceTimeField project_ball(const SpaceTimeField& u, double R) {
  const double n = norm_h1_time(u);
  if (n <= R) return u;
  return (R / n) * u;
}

SpaceTimeField project_Uad(const SpaceTimeField& u, const ControlConstraints& cons, const ProjectionConfig& cfg) {
  require_same_shape(u, cons.u_max, "project_Uad");
  SpaceTimeField y = project_box(u, cons.u_max, cfg);
  if (cfg.metric == ProjectionMetric::l2_clip_scale_inexact || norm_h1_time(y) <= cons.R) return project_ball(y, cons.R);

  // Dykstra: alternate box and ball with correction terms.
  SpaceTimeField x = u;
  SpaceTimeField p(u.grid, u.time), q(u.grid, u.time);
  for (int it = 0; it < cfg.max_dykstra_iters; ++it) {
    y = project_box(x + p, cons.u_max, cfg);
    p = x + p - y;
    SpaceTimeField xn = project_ball(y + q, cons.R);
    SpaceTimeField qn = y + q - xn;
    // x alone can stall while the corrections still drift; require both to settle.
    const double change = norm_h1_time(xn - x) + norm_h1_time(qn - q) + norm_h1_time(xn - y);
    x = std::move(xn);
    q = std::move(qn);
    if (change <= cfg.proj_tol * (1.0 + norm_h1_time(x))) {
      // The box contains 0, so scaling a box point into the ball stays in the box.
      return project_ball(y, cons.R);
    }
  }
  throw ProjectionNonConvergence("Dykstra projection did not converge");
}

double stationarity(const SpaceTimeField& u, const SpaceTimeField& G, const ControlConstraints& cons,
                    const ProjectionConfig& cfg) {
  constexpr double s0 = 1.0;
  return norm_l2q(u - project_Uad(u - s0 * G, cons, cfg)) / s0;
}

bool is_admissible(const SpaceTimeField& u, const ControlConstraints& cons, double ball_slack) {
  if ((u.values.array() < 0.0).any() || (u.values.array() > cons.u_max.values.array()).any()) return false;
  return norm_h1_time(u) <= cons.R * (1.0 + ball_slack);
}

Evaluation evaluate(const Problem& problem, const SpaceTimeField& u) {
  Evaluation ev{u, solve_state(problem.physics, *problem.B, u, problem.init, problem.solver), 0.0};
  ev.cost = eval_cost(ev.traj, u, problem.targets, problem.betas);
  return ev;
}

SpaceTimeField adjoint_gradient(const Problem& problem, const Evaluation& ev) {
  const AdjointPair adj = solve_adjoint(problem.physics, *problem.B, ev.traj, problem.targets, problem.betas);
  return gradient(ev.u, adj, problem.betas.control);
}

std::string to_string(ExitReason r) {
  switch (r) {
    case ExitReason::tol: return "tol";
    case ExitReason::max_iters: return "max_iters";
    case ExitReason::line_search_failure: return "line_search_failure";
  }
  return "unknown";
}

std::vector<double> OptRun::cost_history() const {
  std::vector<double> c;
  for (const auto& h : history) c.push_back(h.cost);
  return c;
}

bool OptRun::cost_nonincreasing() const {
  for (std::size_t i = 1; i < history.size(); ++i)
    if (history[i].cost > history[i - 1].cost) return false;
  return true;
}

OptRun projected_gradient(const Problem& problem, const SpaceTimeField& u0, const OptimizerConfig& cfg,
                          const IterationCallback& on_iter) {
  validate_betas(problem.betas);
  validate_constraints(problem.constraints);
  const auto& cons = problem.constraints;
  OptRun run;

  Evaluation cur = evaluate(problem, project_Uad(u0, cons, cfg.projection));
  SpaceTimeField G = adjoint_gradient(problem, cur);
  double last_step = 0.0;
  double trial_step = cfg.initial_step;
  for (int k = 0;; ++k) {
    IterationRecord rec{k, cur.cost, stationarity(cur.u, G, cons, cfg.projection), last_step, norm_l2q(cur.u),
                        norm_h1_time(cur.u)};
    run.history.push_back(rec);
    if (on_iter) on_iter(rec);
    if (cfg.keep_every > 0 && k % cfg.keep_every == 0) run.iterates.push_back(cur.u);
    spdlog::debug("pg iter {} J={:.6e} stat={:.3e} step={:.3e}", k, rec.cost, rec.stationarity, rec.step);

    if (rec.stationarity <= cfg.stat_tol) {
      run.exit_reason = ExitReason::tol;
      break;
    }
    if (k >= cfg.max_iters) {
      run.exit_reason = ExitReason::max_iters;
      break;
    }

    bool accepted = false;
    const SpaceTimeField u_prev = cur.u, g_prev = G;
    for (double s = trial_step; s >= cfg.s_min; s *= cfg.backtrack) {
      SpaceTimeField trial = project_Uad(cur.u - s * G, cons, cfg.projection);
      const double slope = inner_l2q(G, trial - cur.u);
      Evaluation next = evaluate(problem, trial);
      if (next.cost < cur.cost && next.cost <= cur.cost + cfg.sufficient_decrease * slope) {
        cur = std::move(next);
        last_step = s;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      run.exit_reason = ExitReason::line_search_failure;
      break;
    }
    G = adjoint_gradient(problem, cur);
    if (cfg.step_rule == StepRule::barzilai_borwein) {
      const SpaceTimeField du = cur.u - u_prev;
      const double curv = inner_l2q(du, G - g_prev);
      trial_step = curv > 0.0 ? std::clamp(inner_l2q(du, du) / curv, cfg.s_min, cfg.max_step) : cfg.initial_step;
    }
  }
  run.final_control = cur.u;
  run.final_gradient = G;
  return run;
}

void write_history_csv(std::ostream& os, const OptRun& run) {
  os << "iter,J,stationarity,step,norm_l2,norm_h1\n";
  os << std::setprecision(17);
  for (const auto& h : run.history) {
    os << h.iter << ',' << h.cost << ',' << h.stationarity << ',' << h.step << ',' << h.norm_l2 << ',' << h.norm_h1
       << '\n';
  }
}

VariationalSample sample_variational_inequality(const SpaceTimeField& u, const SpaceTimeField& G,
                                                const ControlConstraints& cons, int samples, std::uint64_t seed,
                                                const ProjectionConfig& cfg) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  VariationalSample out;
  out.worst = std::numeric_limits<double>::infinity();
  const double gnorm = norm_l2q(G);
  for (int s = 0; s < samples; ++s) {
    SpaceTimeField v(u.grid, u.time);
    for (Eigen::Index k = 0; k < v.values.size(); ++k) {
      v.values.data()[k] = (1.5 * unif(rng) - 0.25) * cons.u_max.values.data()[k];
    }
    v = project_Uad(v, cons, cfg);
    const SpaceTimeField d = v - u;
    const double dn = norm_l2q(d);
    if (dn == 0.0 || gnorm == 0.0) {
      out.worst = std::min(out.worst, 0.0);
    } else {
      out.worst = std::min(out.worst, inner_l2q(G, d) / (gnorm * dn));
    }
    ++out.samples;
  }
  return out;
}

}  // namespace npc
