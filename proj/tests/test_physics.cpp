#include "npc/physics.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace npc;

TEST_CASE("symmetric potential has F'(1/2) = 0") {
  const Physics ph(default_potential());
  CHECK(std::abs(ph.F_prime(0.5)) <= 1e-15);
  CHECK(std::abs(Physics(smooth_potential()).F_prime(0.5)) <= 1e-15);
}

TEST_CASE("pure logarithmic part: F''(1/2) = 4 c_hat") {
  PotentialSpec s;
  s.c_hat = 1.0;
  s.f2 = {};
  CHECK(Physics(s).F_second(0.5) == doctest::Approx(4.0).epsilon(1e-14));
  s.c_hat = 0.25;
  CHECK(Physics(s).F_second(0.5) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("F' against the closed form") {
  PotentialSpec s = default_potential();
  const Physics ph(s);
  for (double r : {0.1, 0.3, 0.62, 0.9}) {
    const double expected = s.c_hat * std::log(r / (1 - r)) + 2.0 * s.f2[2] * (r - 0.5);
    CHECK(ph.F_prime(r) == doctest::Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("clamp fires outside the safe interval") {
  const Physics ph(default_potential());
  const double eps = ph.spec().safeguard_eps;
  const Clamped c0 = ph.F_prime_checked(0.0);
  CHECK(c0.clamped);
  CHECK(c0.value == ph.F_prime(eps));
  CHECK(ph.F_prime_checked(1.5).clamped);
  CHECK_FALSE(ph.F_prime_checked(0.4).clamped);
  CHECK_THROWS_AS(ph.F_prime(std::nan("")), std::domain_error);
  CHECK_FALSE(Physics(smooth_potential()).would_clamp(-3.0));
}

TEST_CASE("analytic derivatives match central differences") {
  const Physics ph(default_potential());
  const double h = 1e-5;
  for (double r : {0.2, 0.5, 0.77}) {
    CHECK(ph.F_second(r) == doctest::Approx((ph.F_prime(r + h) - ph.F_prime(r - h)) / (2 * h)).epsilon(1e-8));
    CHECK(ph.F_third(r) == doctest::Approx((ph.F_second(r + h) - ph.F_second(r - h)) / (2 * h)).epsilon(1e-7));
    CHECK(ph.g_prime(r) == doctest::Approx((ph.g(r + h) - ph.g(r - h)) / (2 * h)).epsilon(1e-8));
  }
}

TEST_CASE("coupling functions") {
  PotentialSpec s = default_potential();
  s.g.kind = CouplingKind::constant;
  s.g.g0 = 0.7;
  const Physics c(s);
  for (double r : {0.0, 0.4, 1.0}) {
    CHECK(c.g(r) == 0.7);
    CHECK(c.g_prime(r) == 0.0);
    CHECK(c.g_second(r) == 0.0);
  }
  s.g.kind = CouplingKind::smooth_concave;
  s.g.a = 1.0;
  s.g.b = 0.0;
  const Physics sc(s);
  CHECK(sc.g(1.0) == doctest::Approx(1.0));
  for (double r : {0.0, 0.3, 1.0}) CHECK(sc.g_second(r) == doctest::Approx(-2.0));
}

TEST_CASE("assumption audit") {
  CHECK(audit_assumptions(default_potential()).all_passed());

  PotentialSpec bad = default_potential();
  bad.g.kind = CouplingKind::affine;
  bad.g.g0 = -0.1;
  bad.g.g1 = 1.0;
  const AuditReport r = audit_assumptions(bad);
  CHECK_FALSE(r.all_passed());
  bool witnessed_zero = false;
  for (const auto& item : r.items) {
    if (!item.passed && item.witness == 0.0) witnessed_zero = true;
  }
  CHECK(witnessed_zero);

  // +10 rho (1 - rho) = 2.5 - 10 s^2 in the centered variable; only F1 must be convex.
  PotentialSpec concave_f2 = default_potential();
  concave_f2.f2 = {2.5, 0.0, -10.0};
  CHECK(audit_assumptions(concave_f2).all_passed());
}

TEST_CASE("invalid potentials are rejected") {
  PotentialSpec s = default_potential();
  s.c_hat = 0.0;
  CHECK_THROWS_AS(Physics{s}, std::invalid_argument);
  s = default_potential();
  s.safeguard_eps = 0.1;
  CHECK_THROWS_AS(Physics{s}, std::invalid_argument);
}
