#pragma once

#include "npc/adjoint.hpp"
#include "npc/problem.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace npc {

/// (beta_rho/2)||rho - rho_Q||^2 + (beta_mu/2)||mu - mu_Q||^2 + (beta_u/2)||u||^2
/// in L^2(Q) with space-time trapezoid quadrature.
double eval_cost(const StateTrajectory& traj, const SpaceTimeField& u, const Targets& targets, const Betas& betas);

enum class ProjectionMetric {
  /// Exact metric projection in H^1(0,T;L^2) via Dykstra.
  h1_time,
  /// Pointwise clip followed by radial scaling. Not a metric projection;
  /// kept for comparison only.
  l2_clip_scale_inexact,
};

enum class ObstacleSolver { active_set, projected_gauss_seidel };

struct ProjectionConfig {
  ProjectionMetric metric = ProjectionMetric::h1_time;
  ObstacleSolver obstacle = ObstacleSolver::active_set;
  double proj_tol = 1e-12;
  int max_dykstra_iters = 20000;
  double obstacle_tol = 1e-12;
  int max_obstacle_iters = 200000;

  bool operator==(const ProjectionConfig&) const = default;
};

class ProjectionNonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tridiagonal time metric A = diag(trapezoid weights) + K/tau of
/// H^1(0,T;L^2) restricted to one spatial node (node weight factored out).
struct TimeMetric {
  Vec diag;
  Vec off;  // off[k] couples levels k and k+1

  explicit TimeMetric(const TimeAxis& t);
  Vec apply(const Vec& v) const;
};

/// Minimizes (v-z)^T A (v-z) subject to lo <= v <= hi (a linear
/// complementarity problem with a tridiagonal M-matrix).
Vec solve_time_obstacle(const TimeMetric& metric, const Vec& z, const Vec& lo, const Vec& hi,
                        const ProjectionConfig& cfg);

/// Metric projection onto {0 <= v <= u_max} in H^1(0,T;L^2).
SpaceTimeField project_box(const SpaceTimeField& u, const SpaceTimeField& u_max, const ProjectionConfig& cfg = {});
/// Radial projection onto the H^1(0,T;L^2) ball of radius R.
SpaceTimeField project_ball(const SpaceTimeField& u, double R);

SpaceTimeField project_Uad(const SpaceTimeField& u, const ControlConstraints& cons, const ProjectionConfig& cfg = {});

/// ||u - P(u - s0 G)||_{L^2(Q)} / s0 with s0 = 1.
double stationarity(const SpaceTimeField& u, const SpaceTimeField& G, const ControlConstraints& cons,
                    const ProjectionConfig& cfg = {});

bool is_admissible(const SpaceTimeField& u, const ControlConstraints& cons, double ball_slack = 1e-10);

/// State, cost and adjoint gradient at one control.
struct Evaluation {
  SpaceTimeField u;
  StateTrajectory traj;
  double cost = 0.0;
};

Evaluation evaluate(const Problem& problem, const SpaceTimeField& u);
SpaceTimeField adjoint_gradient(const Problem& problem, const Evaluation& ev);

enum class StepRule {
  /// Every line search starts from initial_step.
  fixed,
  /// Line searches after the first start from the Barzilai-Borwein step
  /// <du, du> / <du, dG> in L^2(Q), clamped to [s_min, max_step]; the first
  /// one starts from initial_step.
  barzilai_borwein,
};

struct OptimizerConfig {
  int max_iters = 500;
  double stat_tol = 1e-10;
  double initial_step = 1.0;
  StepRule step_rule = StepRule::barzilai_borwein;
  double max_step = 1e12;
  double backtrack = 0.5;
  double sufficient_decrease = 1e-4;
  double s_min = 1e-10;
  /// Keep every k-th iterate in OptRun::iterates (0 keeps none but the last).
  int keep_every = 0;
  ProjectionConfig projection;

  bool operator==(const OptimizerConfig&) const = default;
};

enum class ExitReason { tol, max_iters, line_search_failure };
std::string to_string(ExitReason r);

struct IterationRecord {
  int iter = 0;
  double cost = 0.0;
  double stationarity = 0.0;
  double step = 0.0;
  double norm_l2 = 0.0;
  double norm_h1 = 0.0;
};

struct OptRun {
  std::vector<SpaceTimeField> iterates;
  std::vector<IterationRecord> history;
  SpaceTimeField final_control;
  SpaceTimeField final_gradient;
  ExitReason exit_reason = ExitReason::max_iters;

  std::vector<double> cost_history() const;
  bool cost_nonincreasing() const;
};

using IterationCallback = std::function<void(const IterationRecord&)>;

/// Projected gradient with Armijo backtracking along the projection arc.
OptRun projected_gradient(const Problem& problem, const SpaceTimeField& u0, const OptimizerConfig& cfg = {},
                          const IterationCallback& on_iter = {});

void write_history_csv(std::ostream& os, const OptRun& run);

struct VariationalSample {
  double worst = 0.0;  // min over samples of <G, v - u> / (||G|| ||v - u||)
  int samples = 0;
};

/// Samples feasible v as projections of random fields and evaluates the
/// first-order condition <G, v - u> >= 0.
VariationalSample sample_variational_inequality(const SpaceTimeField& u, const SpaceTimeField& G,
                                                const ControlConstraints& cons, int samples, std::uint64_t seed,
                                                const ProjectionConfig& cfg = {});

}  // namespace npc
