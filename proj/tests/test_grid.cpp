#include "support.hpp"

#include <doctest.h>

using namespace npc;
using namespace npc::test;

TEST_CASE("trapezoid weights on 4 cells of the unit interval") {
  const auto g = line(4);
  CHECK(g->node_count() == 5);
  CHECK(g->h(0) == doctest::Approx(0.25));
  const double expected[] = {0.125, 0.25, 0.25, 0.25, 0.125};
  for (int i = 0; i < 5; ++i) CHECK(g->weights()[i] == doctest::Approx(expected[i]).epsilon(1e-15));
  CHECK(g->weights().sum() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("tensor trapezoid weights on a 2x2 square") {
  const auto g = square(2);
  CHECK(g->node_count() == 9);
  CHECK(g->weights()[0] == doctest::Approx(0.0625));
  CHECK(g->weights()[4] == doctest::Approx(0.25));
}

TEST_CASE("weights add up to the length") {
  const auto g = line(8, 2.0);
  CHECK(std::abs(g->weights().sum() - 2.0) <= 1e-12);
}

TEST_CASE("invalid grids are rejected") {
  GridSpec s;
  s.dim = 3;
  CHECK_THROWS_AS(build_grid(s), std::invalid_argument);
  s.dim = 1;
  s.cells = {1, 1};
  CHECK_THROWS_AS(build_grid(s), std::invalid_argument);
}

TEST_CASE("Neumann Laplacian annihilates constants") {
  for (const auto& g : {line(7), square(5)}) {
    const ScalarField c(g, Vec::Constant(g->node_count(), 3.5));
    CHECK(laplacian_neumann(*g, c).values.cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("Laplacian of cos(pi x) converges at second order") {
  auto error = [](int cells) {
    const auto g = line(cells);
    ScalarField f(g);
    for (int i = 0; i < g->node_count(); ++i) f.values[i] = std::cos(kPi * g->coord(i, 0));
    const Vec exact = -kPi * kPi * f.values;
    return (laplacian_neumann(*g, f).values - exact).cwiseAbs().maxCoeff();
  };
  const double e64 = error(64), e128 = error(128);
  CHECK(e64 <= 10.0 / (64.0 * 64.0));
  const double ratio = e64 / e128;
  CHECK(ratio >= 3.5);
  CHECK(ratio <= 4.5);
}

TEST_CASE("weighted stencil has vanishing column sums (dense assembly, 5 nodes)") {
  const auto g = line(4);
  const Eigen::MatrixXd L(g->laplacian());
  const Eigen::RowVectorXd sums = g->weights().transpose() * L;
  CHECK(sums.cwiseAbs().maxCoeff() <= 1e-12);
  const Eigen::MatrixXd WL = g->weights().asDiagonal() * L;
  CHECK((WL - WL.transpose()).cwiseAbs().maxCoeff() <= 1e-12);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  ScalarField f(g);
  for (auto& v : f.values) v = n01(rng);
  CHECK(std::abs(g->weights().dot(laplacian_neumann(*g, f).values)) <= 1e-12);
}

TEST_CASE("L2 norms against exact integrals") {
  const auto g = line(128);
  ScalarField one(g, Vec::Ones(g->node_count()));
  CHECK(norm_l2(*g, one) == doctest::Approx(1.0).epsilon(1e-14));
  ScalarField c(g);
  for (int i = 0; i < g->node_count(); ++i) c.values[i] = std::cos(kPi * g->coord(i, 0));
  CHECK(std::abs(norm_l2(*g, c) - 1.0 / std::sqrt(2.0)) <= 1e-3);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-1, 1);
  ScalarField a(g), b(g);
  for (int i = 0; i < g->node_count(); ++i) a.values[i] = d(rng), b.values[i] = d(rng);
  CHECK(inner_l2(*g, a, b) == inner_l2(*g, b, a));
}

TEST_CASE("H1(0,T;L2) norm examples") {
  const auto g = line(16);
  CHECK(norm_h1_time(SpaceTimeField(g, TimeAxis{1.0, 8})) == 0.0);
  CHECK(norm_h1_time(constant(g, TimeAxis{1.0, 8}, -2.5)) == doctest::Approx(2.5).epsilon(1e-14));

  const TimeAxis t{1.0, 256};
  SpaceTimeField u(g, t);
  for (int n = 0; n <= t.steps; ++n) u.slice(n).setConstant(t.time(n));
  CHECK(std::abs(norm_h1_time(u) - std::sqrt(1.0 / 3.0 + 1.0)) <= 1e-2);
  CHECK(inner_h1_time(u, u) == doctest::Approx(norm_h1_time(u) * norm_h1_time(u)));
}

TEST_CASE("L2(Q) inner product uses trapezoid weights in time") {
  const auto g = line(4);
  const TimeAxis t{2.0, 4};
  CHECK(norm_l2q(constant(g, t, 1.0)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("fields on different grids are rejected") {
  const TimeAxis t{1.0, 4};
  const SpaceTimeField a(line(4), t), b(line(5), t), c(line(4), TimeAxis{1.0, 5});
  CHECK_THROWS_AS(a + b, ShapeMismatch);
  CHECK_THROWS_AS(inner_l2q(a, c), ShapeMismatch);
}
