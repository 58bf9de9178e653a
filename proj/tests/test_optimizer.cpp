#include "npc/harness.hpp"
#include "npc/optimizer.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <sstream>

using namespace npc;
using namespace npc::test;

namespace {

StateTrajectory fake_state(const GridPtr& g, const TimeAxis& t, double rho, double mu) {
  StateTrajectory tr;
  tr.rho = constant(g, t, rho);
  tr.mu = constant(g, t, mu);
  return tr;
}

ControlConstraints box(const GridPtr& g, const TimeAxis& t, double hi, double R) { return {constant(g, t, hi), R}; }

}  // namespace

TEST_CASE("cost examples") {
  const auto g = line(8);
  const TimeAxis t{1.0, 8};
  const auto tr = fake_state(g, t, 0.4, 0.2);
  const Targets same{constant(g, t, 0.4), constant(g, t, 0.2)};
  CHECK(eval_cost(tr, SpaceTimeField(g, t), same, {1.0, 1.0, 1.0}) == 0.0);
  CHECK(eval_cost(tr, constant(g, t, 1.0), same, {0.0, 0.0, 2.0}) == doctest::Approx(1.0).epsilon(1e-14));
  std::mt19937_64 rng(51);
  const auto u = random_field(g, t, rng);
  CHECK(eval_cost(tr, 2.0 * u, same, {1.0, 1.0, 0.3}) ==
        doctest::Approx(4.0 * eval_cost(tr, u, same, {1.0, 1.0, 0.3})).epsilon(1e-14));
  const Targets off{constant(g, t, 0.1), constant(g, t, 0.2)};
  CHECK(eval_cost(tr, SpaceTimeField(g, t), off, {2.0, 0.0, 0.0}) == doctest::Approx(0.09).epsilon(1e-14));
}

TEST_CASE("projection leaves admissible controls unchanged") {
  const auto g = line(6);
  const TimeAxis t{1.0, 8};
  std::mt19937_64 rng(52);
  const auto u = random_feasible_control(g, t, 2.0, rng);
  const auto cons = box(g, t, 2.0, 10.0 * norm_h1_time(u));
  CHECK(max_abs((project_Uad(u, cons) - u).values) <= 1e-14);
}

TEST_CASE("negative constant projects to zero") {
  const auto g = line(6);
  const TimeAxis t{1.0, 8};
  const auto P = project_Uad(constant(g, t, -1.0), box(g, t, 2.0, 1e6));
  CHECK(max_abs(P.values) <= 1e-14);
}

TEST_CASE("box projection in the time metric is not a pointwise clip") {
  const TimeAxis t{1.0, 4};
  const TimeMetric m(t);
  Vec z(5);
  z << 0.5, 1.5, 0.5, 0.5, 0.5;
  const Vec lo = Vec::Zero(5), hi = Vec::Ones(5);
  const Vec v = solve_time_obstacle(m, z, lo, hi, {});
  CHECK(v[1] == doctest::Approx(1.0));
  // The correction v - z is smooth in time, so the neighbours of the clipped
  // level move down with it; a pointwise clip would leave them at 0.5.
  CHECK(v[0] < 0.1);
  CHECK(v[2] < 0.1);
  // Optimality: A(v - z) is <= 0 on the upper face and 0 on free levels.
  const Vec r = m.apply(v - z);
  CHECK(r[1] <= 1e-12);
  for (int k : {0, 2, 3, 4}) CHECK(std::abs(r[k]) <= 1e-10);
}

TEST_CASE("projection onto the intersection matches KKT enumeration") {
  GridSpec gs;
  gs.dim = 1;
  gs.cells = {2, 1};
  const auto g = build_grid(gs);
  const TimeAxis t{1.0, 3};
  const TimeMetric m(t);
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int ball_binding = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Vec z(4), hi(4);
    for (int k = 0; k < 4; ++k) z[k] = -1 + 4 * u01(rng), hi[k] = 0.5 + 1.5 * u01(rng);
    const double R = 0.2 + 2 * u01(rng);
    SpaceTimeField zf(g, t), hf(g, t);
    for (int i = 0; i < 3; ++i) zf.values.col(i) = z, hf.values.col(i) = hi;
    const auto P = project_Uad(zf, {hf, R});
    const Vec oracle = projection_kkt_oracle(m, g->volume(), z, hi, R);
    for (int i = 0; i < 3; ++i) CHECK((P.values.col(i) - oracle).cwiseAbs().maxCoeff() <= 1e-8);
    if (std::abs(norm_h1_time(P) - R) <= 1e-9) ++ball_binding;
  }
  CHECK(ball_binding > 20);
}

TEST_CASE("projection is idempotent and nonexpansive") {
  const auto g = line(8);
  const TimeAxis t{1.0, 8};
  std::mt19937_64 rng(54);
  const auto cons = box(g, t, 1.0, 0.6);
  for (int k = 0; k < 10; ++k) {
    const auto a = random_field(g, t, rng, -1.0, 2.0), b = random_field(g, t, rng, -1.0, 2.0);
    const auto Pa = project_Uad(a, cons), Pb = project_Uad(b, cons);
    CHECK(norm_h1_time(project_Uad(Pa, cons) - Pa) <= 1e-10);
    CHECK(norm_h1_time(Pa - Pb) <= norm_h1_time(a - b) * (1.0 + 1e-10));
    CHECK(is_admissible(Pa, cons));
  }
}

TEST_CASE("inexact clip-and-scale mode differs from the metric projection") {
  const auto g = line(4);
  const TimeAxis t{1.0, 6};
  std::mt19937_64 rng(55);
  const auto z = random_field(g, t, rng, -1.0, 3.0);
  const auto cons = box(g, t, 1.0, 1e6);
  ProjectionConfig inexact;
  inexact.metric = ProjectionMetric::l2_clip_scale_inexact;
  const auto clip = project_Uad(z, cons, inexact);
  CHECK(clip.values.maxCoeff() <= 1.0);
  CHECK(clip.values.minCoeff() >= 0.0);
  CHECK(max_abs((clip - project_Uad(z, cons)).values) > 1e-6);
}

TEST_CASE("stationarity measure examples") {
  const auto g = line(6);
  const TimeAxis t{1.0, 8};
  const auto cons = box(g, t, 1.0, 1e6);
  const auto interior = constant(g, t, 0.5);
  CHECK(stationarity(interior, SpaceTimeField(g, t), cons) == 0.0);
  // Constant G keeps the projection inside the box: the measure is ||G||.
  const auto G = constant(g, t, 0.1);
  CHECK(stationarity(interior, G, cons) == doctest::Approx(norm_l2q(G)).epsilon(1e-12));
  // At the upper bound with G pushing outward the projection returns u.
  CHECK(stationarity(constant(g, t, 1.0), constant(g, t, -0.3), cons) <= 1e-12);
}

TEST_CASE("pure control cost drives the control to zero") {
  Problem pb;
  pb.grid = line(8);
  pb.time = TimeAxis{1.0, 8};
  pb.physics = Physics(default_potential());
  pb.B = make_operator(pb.grid, default_kernel());
  pb.init = default_initial_data(pb.grid);
  pb.targets = {SpaceTimeField(pb.grid, pb.time), SpaceTimeField(pb.grid, pb.time)};
  pb.betas = {0.0, 0.0, 1.0};
  pb.constraints = box(pb.grid, pb.time, 2.0, 100.0);
  const auto run = projected_gradient(pb, constant(pb.grid, pb.time, 0.8));
  CHECK(norm_l2q(run.final_control) <= 1e-8);
  CHECK(run.cost_nonincreasing());
  CHECK(run.exit_reason == ExitReason::tol);

  OptimizerConfig one;
  one.max_iters = 1;
  const auto still = projected_gradient(pb, SpaceTimeField(pb.grid, pb.time), one);
  CHECK(norm_h1_time(still.final_control) <= one.projection.proj_tol);
}

TEST_CASE("manufactured tracking on a small instance") {
  const auto g = line(15);
  const TimeAxis t{1.0, 16};
  auto m = manufacture_problem(ManufactureKind::tracking, g, t, Physics(default_potential()),
                               make_operator(g, default_kernel()), 7);
  const Problem& pb = m.problem;
  CHECK(evaluate(pb, m.u_star).cost <= 1e-28);
  OptimizerConfig cfg;
  cfg.max_iters = 300;
  cfg.stat_tol = 1e-12;
  const SpaceTimeField u0(g, t);
  const auto run = projected_gradient(pb, u0, cfg);
  const auto J = run.cost_history();
  CHECK(J.back() <= 1e-6 * J.front());
  for (std::size_t k = 1; k < J.size(); ++k) CHECK(J[k] <= J[k - 1]);
}

TEST_CASE("history CSV has one row per iteration") {
  OptRun run;
  run.history = {{0, 1.5, 0.1, 0.0, 0.0, 0.0}, {1, 0.25, 0.01, 1.0, 0.5, 0.7}};
  std::ostringstream os;
  write_history_csv(os, run);
  const std::string s = os.str();
  CHECK(s.rfind("iter,J,stationarity,step,norm_l2,norm_h1\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 3);
}
