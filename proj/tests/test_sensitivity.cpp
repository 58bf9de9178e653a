#include "npc/harness.hpp"
#include "npc/sensitivity.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace npc;
using namespace npc::test;

namespace {

struct Fixture {
  GridPtr g;
  TimeAxis t;
  Physics ph;
  std::shared_ptr<const NonlocalOperator> B;
  SpaceTimeField u;
  StateTrajectory base;
};

Fixture fixture(const PotentialSpec& pot, const KernelSpec& k, int cells = 15, int steps = 16) {
  Fixture f{line(cells), TimeAxis{1.0, steps}, Physics(pot), nullptr, {}, {}};
  f.B = make_operator(f.g, k);
  std::mt19937_64 rng(31);
  f.u = random_feasible_control(f.g, f.t, 2.0, rng);
  f.base = solve_state(f.ph, *f.B, f.u, default_initial_data(f.g));
  return f;
}

SpaceTimeField smooth_direction(const GridPtr& g, const TimeAxis& t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_smooth_field(g, t, rng);
}

}  // namespace

TEST_CASE("zero direction gives zero sensitivities") {
  auto f = fixture(default_potential(), default_kernel());
  const auto lin = solve_linearized(f.ph, *f.B, f.base, SpaceTimeField(f.g, f.t));
  CHECK(max_abs(lin.xi.values) == 0.0);
  CHECK(max_abs(lin.eta.values) == 0.0);
}

TEST_CASE("sensitivities are linear in the direction") {
  auto f = fixture(default_potential(), default_kernel());
  const auto h = smooth_direction(f.g, f.t, 1);
  const auto a = solve_linearized(f.ph, *f.B, f.base, h);
  const auto b = solve_linearized(f.ph, *f.B, f.base, 2.0 * h);
  CHECK(max_abs((b.xi - 2.0 * a.xi).values) <= 1e-11 * std::max(1.0, max_abs(a.xi.values)));
  CHECK(max_abs((b.eta - 2.0 * a.eta).values) <= 1e-11 * std::max(1.0, max_abs(a.eta.values)));
  CHECK(max_abs(a.xi.slice(0)) == 0.0);
  CHECK(max_abs(a.eta.slice(0)) == 0.0);
}

TEST_CASE("constant coupling without kernel: dense decoupled oracle") {
  PotentialSpec pot = default_potential();
  pot.g.kind = CouplingKind::constant;
  pot.g.g0 = 0.3;
  KernelSpec zero;
  zero.kind = KernelKind::zero;
  auto f = fixture(pot, zero, 10, 12);
  const auto h = smooth_direction(f.g, f.t, 2);
  const auto lin = solve_linearized(f.ph, *f.B, f.base, h);

  const Eigen::MatrixXd L(f.g->laplacian());
  const double a = (1 + 2 * 0.3) / f.t.tau();
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a * Eigen::MatrixXd::Identity(L.rows(), L.cols()) - L);
  Vec eta = Vec::Zero(f.g->node_count());
  for (int n = 0; n < f.t.steps; ++n) {
    const Vec forcing = 0.5 * (h.slice(n) + h.slice(n + 1)).transpose();
    const Vec rhs = a * eta + forcing;
    eta = lu.solve(rhs);
    CHECK((lin.eta.slice(n + 1).transpose() - eta).cwiseAbs().maxCoeff() <= 1e-10);
  }
  // g' = 0 removes the only source of xi.
  CHECK(max_abs(lin.xi.values) <= 1e-14);
}

TEST_CASE("Taylor remainder is second order for the smooth potential") {
  auto f = fixture(smooth_potential(), default_kernel(), 15, 32);
  const auto h = smooth_direction(f.g, f.t, 3);
  const auto table = taylor_test(f.ph, *f.B, f.u, h, {1e-1, 5e-2, 2.5e-2}, default_initial_data(f.g));
  REQUIRE_FALSE(table.degenerate);
  CHECK(table.strictly_decreasing());
  for (double r : table.ratios) {
    CHECK(r >= 1.5);
    CHECK(r <= 3.0);
  }
}

TEST_CASE("Taylor remainder is second order for the logarithmic potential") {
  auto f = fixture(default_potential(), default_kernel());
  const auto h = smooth_direction(f.g, f.t, 4);
  const auto table = taylor_test(f.ph, *f.B, f.u, h, default_taylor_ladder(), default_initial_data(f.g));
  REQUIRE(table.remainder.size() >= 2);
  CHECK(table.strictly_decreasing());
  // r(lambda) = |remainder| / lambda, so r / lambda settles to a constant.
  for (std::size_t k = 0; k + 1 < table.remainder.size(); ++k) {
    const double a = table.remainder[k] / table.lambdas[k], b = table.remainder[k + 1] / table.lambdas[k + 1];
    CHECK(std::abs(a - b) <= 0.05 * a);
  }
}

TEST_CASE("zero direction is reported as degenerate") {
  auto f = fixture(default_potential(), default_kernel());
  const auto table =
      taylor_test(f.ph, *f.B, f.u, SpaceTimeField(f.g, f.t), default_taylor_ladder(), default_initial_data(f.g));
  CHECK(table.degenerate);
}

TEST_CASE("discrete tangent is close to the continuous linearization") {
  auto f = fixture(default_potential(), default_kernel(), 15, 64);
  const auto h = smooth_direction(f.g, f.t, 5);
  const auto a = solve_linearized(f.ph, *f.B, f.base, h, LinearizationForm::discrete_tangent);
  const auto b = solve_linearized(f.ph, *f.B, f.base, h, LinearizationForm::continuous_backward_euler);
  const double gap = state_norm_y(a.xi - b.xi, a.eta - b.eta) / state_norm_y(a.xi, a.eta);
  CHECK(gap < 0.05);
}
