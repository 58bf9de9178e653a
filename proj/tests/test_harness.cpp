#include "npc/harness.hpp"
#include "support.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace npc;
using namespace npc::test;

TEST_CASE("manufactured steady problem reproduces constants") {
  const auto g = line(15);
  const TimeAxis t{1.0, 16};
  const auto m = manufacture_problem(ManufactureKind::steady, g, t, Physics(default_potential()),
                                     make_operator(g, default_kernel()), 1);
  const Problem& pb = m.problem;
  const auto tr = solve_state(pb.physics, *pb.B, m.u_star, pb.init);
  CHECK(max_abs((tr.rho - pb.targets.rho).values) <= 1e-10);
  CHECK(max_abs((tr.mu - pb.targets.mu).values) <= 1e-10);
}

TEST_CASE("manufactured tracking target is attained by u*") {
  const auto g = line(15);
  const TimeAxis t{1.0, 16};
  const auto m = manufacture_problem(ManufactureKind::tracking, g, t, Physics(default_potential()),
                                     make_operator(g, default_kernel()), 2);
  CHECK(m.problem.betas.control == 0.0);
  CHECK(evaluate(m.problem, m.u_star).cost == 0.0);
  CHECK(is_admissible(m.u_star, m.problem.constraints));
}

TEST_CASE("ball-active manufactured problem violates the ball by 20 percent") {
  const auto g = line(15);
  const TimeAxis t{1.0, 16};
  const auto m = manufacture_problem(ManufactureKind::ball_active, g, t, Physics(default_potential()),
                                     make_operator(g, default_kernel()), 3);
  CHECK(norm_h1_time(m.u_star) == doctest::Approx(1.2 * m.problem.constraints.R).epsilon(1e-14));
}

TEST_CASE("manufacture kinds and suites parse and print") {
  for (auto k : {ManufactureKind::steady, ManufactureKind::tracking, ManufactureKind::ball_active}) {
    CHECK(parse_manufacture_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_manufacture_kind("nope"), std::invalid_argument);
  for (auto s : {Suite::operators, Suite::state, Suite::sensitivity, Suite::adjoint, Suite::optimizer, Suite::all}) {
    CHECK(parse_suite(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_suite("everything"), std::invalid_argument);
  CHECK_THROWS_AS(run_check("no.such.check", HarnessConfig{}), std::invalid_argument);
}

TEST_CASE("suite registry") {
  const auto all = suite_checks(Suite::all);
  CHECK(all.size() >= 20);
  CHECK(std::is_sorted(all.begin(), all.end()));
  std::set<std::string> parts;
  for (auto s : {Suite::operators, Suite::state, Suite::sensitivity, Suite::adjoint, Suite::optimizer}) {
    for (const auto& n : suite_checks(s)) CHECK(parts.insert(n).second);
  }
  CHECK(parts.size() == all.size());
}

TEST_CASE("operators suite passes on the shipped kernels") {
  for (const auto& r : run_suite(Suite::operators, HarnessConfig{})) {
    INFO(r.name, ": ", r.detail);
    CHECK(r.pass);
  }
}

TEST_CASE("runs are deterministic given the seed") {
  HarnessConfig cfg;
  const auto a = run_check("nonlocal.duality", cfg);
  const auto b = run_check("nonlocal.duality", cfg);
  CHECK(a.measured == b.measured);
  cfg.seed += 1;
  CHECK(run_check("nonlocal.duality", cfg).measured != a.measured);
}

TEST_CASE("fault injection: a wrong adjoint kernel fails the duality checks") {
  HarnessConfig cfg;
  cfg.fault = Fault::wrong_adjoint_transpose;
  const auto r = run_check("adjoint.duality", cfg);
  CHECK_FALSE(r.pass);
  CHECK_FALSE(run_check("nonlocal.duality", cfg).pass);
  cfg.fault = Fault::none;
  CHECK(run_check("adjoint.duality", cfg).pass);
}

TEST_CASE("report writers") {
  std::vector<CheckReport> reps{{"a.check", "claim, with comma", 1.5, "<= 2", true, 0.01, "detail \"quoted\""}};
  std::ostringstream csv, txt;
  write_reports_csv(csv, reps, 99);
  write_reports_text(txt, reps, 99);
  CHECK(csv.str().rfind("name,claim,measured,threshold,pass,seconds,seed,detail\n", 0) == 0);
  CHECK(csv.str().find("\"claim, with comma\"") != std::string::npos);
  CHECK(txt.str().find("PASS a.check") != std::string::npos);
}

TEST_CASE("KKT oracle agrees with the obstacle solver when the ball is slack") {
  const TimeAxis t{1.0, 3};
  const TimeMetric m(t);
  Vec z(4), hi(4);
  z << -0.5, 1.7, 0.3, 2.5;
  hi << 1.0, 1.0, 1.0, 2.0;
  const Vec oracle = projection_kkt_oracle(m, 1.0, z, hi, 1e6);
  const Vec pdas = solve_time_obstacle(m, z, Vec::Zero(4), hi, {});
  CHECK((oracle - pdas).cwiseAbs().maxCoeff() <= 1e-12);
}
