#include "npc/harness.hpp"
#include "npc/state_solver.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace npc;
using namespace npc::test;

namespace {

PotentialSpec constant_coupling(double g0) {
  PotentialSpec s = default_potential();
  s.g.kind = CouplingKind::constant;
  s.g.g0 = g0;
  return s;
}

std::shared_ptr<const NonlocalOperator> zero_operator(const GridPtr& g) {
  KernelSpec k;
  k.kind = KernelKind::zero;
  return make_operator(g, k);
}

InitialData flat_rho(const GridPtr& g, const Vec& mu0) {
  return {ScalarField(g, Vec::Constant(g->node_count(), 0.5)), ScalarField(g, mu0)};
}

}  // namespace

TEST_CASE("steady state is reproduced exactly") {
  const auto g = line(15);
  const TimeAxis t{1.0, 16};
  const Physics ph(constant_coupling(0.4));
  const auto tr = solve_state(ph, *zero_operator(g), SpaceTimeField(g, t), flat_rho(g, Vec::Constant(16, 0.3)));
  CHECK(max_abs((tr.rho.values.array() - 0.5).matrix()) <= 1e-10);
  CHECK(max_abs((tr.mu.values.array() - 0.3).matrix()) <= 1e-10);
}

TEST_CASE("decoupled chemical potential follows a dense backward Euler heat solve") {
  const auto g = line(20);
  const TimeAxis t{0.5, 10};
  const double g0 = 0.25;
  Vec mu0(g->node_count());
  for (int i = 0; i < g->node_count(); ++i) mu0[i] = 1.0 + std::cos(kPi * g->coord(i, 0));
  const auto tr = solve_state(Physics(constant_coupling(g0)), *zero_operator(g), SpaceTimeField(g, t), flat_rho(g, mu0));

  const Eigen::MatrixXd L(g->laplacian());
  const double a = (1 + 2 * g0) / t.tau();
  const Eigen::MatrixXd M = a * Eigen::MatrixXd::Identity(L.rows(), L.cols()) - L;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
  Vec m = mu0;
  for (int n = 1; n <= t.steps; ++n) {
    const Vec rhs = a * m;
    m = lu.solve(rhs);
    CHECK((tr.mu.slice(n).transpose() - m).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("admissible controls keep the state inside the physical bounds") {
  const auto g = line(31);
  const TimeAxis t{1.0, 32};
  const auto B = make_operator(g, default_kernel());
  std::mt19937_64 rng(21);
  for (int k = 0; k < 3; ++k) {
    const auto u = random_feasible_control(g, t, 2.0, rng);
    const auto tr = solve_state(Physics(default_potential()), *B, u, default_initial_data(g));
    CHECK(tr.rho_min() > 0.0);
    CHECK(tr.rho_max() < 1.0);
    CHECK(tr.mu_min() >= -1e-10);
    CHECK_FALSE(tr.any_bound_violation());
    CHECK_FALSE(tr.any_clamp());
  }
}

TEST_CASE("stepping residual is recomputed independently") {
  const auto g = line(15);
  const TimeAxis t{1.0, 16};
  const Physics ph(default_potential());
  const auto B = make_operator(g, default_kernel());
  std::mt19937_64 rng(22);
  const auto u = random_feasible_control(g, t, 2.0, rng);
  const auto tr = solve_state(ph, *B, u, default_initial_data(g));
  CHECK(max_state_residual(state_residual(ph, *B, u, tr.rho, tr.mu)) <= 1e-9);

  auto noisy = tr.mu;
  noisy.values += 1e-3 * random_field(g, t, rng).values;
  noisy.slice(0) = tr.mu.slice(0);
  CHECK(max_state_residual(state_residual(ph, *B, u, tr.rho, noisy)) > 1e-6);

  // Zero state with constant forcing c: the chemical residual is |c| on |Omega| = 1.
  PotentialSpec s = constant_coupling(0.0);
  const SpaceTimeField z(g, t);
  const auto r = state_residual(Physics(s), *zero_operator(g), constant(g, t, 0.75), z, z);
  for (const auto& step : r) CHECK(step.chemical == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("neumann compatibility holds to rounding") {
  const auto g = line(15);
  const TimeAxis t{1.0, 16};
  const Physics ph(default_potential());
  std::mt19937_64 rng(23);
  const auto u = random_feasible_control(g, t, 2.0, rng);
  const auto tr = solve_state(ph, *make_operator(g, default_kernel()), u, default_initial_data(g));
  for (double d : neumann_compatibility_defect(ph, u, tr)) CHECK(std::abs(d) <= 1e-10);
}

TEST_CASE("stability probe") {
  const auto g = line(31);
  const TimeAxis t{1.0, 32};
  const Physics ph(default_potential());
  const auto B = make_operator(g, default_kernel());
  const auto init = default_initial_data(g);
  std::mt19937_64 rng(24);
  const auto u1 = random_feasible_control(g, t, 2.0, rng);
  CHECK(stability_probe(ph, *B, u1, u1, init).degenerate);

  SpaceTimeField bump(g, t);
  for (int n = 0; n <= t.steps; ++n) {
    for (int i = 0; i < g->node_count(); ++i) bump.values(n, i) = std::exp(-50 * std::pow(g->coord(i, 0) - 0.4, 2));
  }
  std::vector<double> ratios;
  for (double delta : {1e-1, 1e-2, 1e-3}) {
    const auto rep = stability_probe(ph, *B, u1, u1 + delta * bump, init);
    REQUIRE_FALSE(rep.degenerate);
    CHECK(std::isfinite(rep.max_ratio));
    ratios.push_back(rep.max_ratio);
  }
  const double spread = *std::max_element(ratios.begin(), ratios.end()) / *std::min_element(ratios.begin(), ratios.end());
  CHECK(spread <= 2.0);
}

TEST_CASE("invalid initial data and controls are rejected") {
  const auto g = line(7);
  const TimeAxis t{1.0, 4};
  InitialData bad = default_initial_data(g);
  bad.rho0.values[2] = 1.0;
  CHECK_THROWS_AS(validate_initial_data(bad), std::invalid_argument);
  bad = default_initial_data(g);
  bad.mu0.values[0] = -0.1;
  CHECK_THROWS_AS(validate_initial_data(bad), std::invalid_argument);

  SpaceTimeField u(g, t);
  u.values(1, 1) = std::nan("");
  CHECK_THROWS_AS(solve_state(Physics(default_potential()), *zero_operator(g), u, default_initial_data(g)),
                  std::invalid_argument);
}

TEST_CASE("forward solves are deterministic") {
  const auto g = line(15);
  const TimeAxis t{1.0, 16};
  std::mt19937_64 rng(25);
  const auto u = random_feasible_control(g, t, 2.0, rng);
  const auto B = make_operator(g, default_kernel());
  const auto a = solve_state(Physics(default_potential()), *B, u, default_initial_data(g));
  const auto b = solve_state(Physics(default_potential()), *B, u, default_initial_data(g));
  CHECK((a.rho.values.array() == b.rho.values.array()).all());
  CHECK((a.mu.values.array() == b.mu.values.array()).all());
}
