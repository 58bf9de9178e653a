#include "npc/config.hpp"
#include "support.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace npc;
using namespace npc::test;

namespace {

const char* kMinimal = R"({"betas": {"rho": 1, "mu": 0.5, "control": 0}})";

ConfigError config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a ConfigError");
  return ConfigError("", "");
}

}  // namespace

TEST_CASE("expressions evaluate like the closed forms") {
  const auto e = FieldExpr::parse("0.5 + 0.2*cos(pi*x)");
  CHECK(e(0.0) == doctest::Approx(0.7));
  CHECK(e(1.0) == doctest::Approx(0.3));
  const auto gs = FieldExpr::parse("2*gauss(0.5, 0.1)");
  CHECK(gs(0.5) == doctest::Approx(2.0));
  CHECK(gs(0.6) == doctest::Approx(2.0 * std::exp(-0.5)));
  const auto g2 = FieldExpr::parse("gauss(0.5, 0.5, 0.2)");
  CHECK(g2(0.7, 0.5) == doctest::Approx(std::exp(-0.5)));
  CHECK(FieldExpr::parse("-(x - 1)*t + sin(y)")(3.0, 0.0, 2.0) == doctest::Approx(-4.0));
  CHECK(FieldExpr::parse("1e-3")(0.0) == doctest::Approx(1e-3));
  CHECK(FieldExpr::constant(0.1)(0.0) == 0.1);
  CHECK(FieldExpr()(1.0, 2.0, 3.0) == 0.0);
}

TEST_CASE("malformed expressions report their column") {
  CHECK_THROWS_AS(FieldExpr::parse("cos(pi*x"), ExprError);
  CHECK_THROWS_AS(FieldExpr::parse("exp(x)"), ExprError);
  CHECK_THROWS_AS(FieldExpr::parse("gauss(0.5, 0)"), ExprError);
  CHECK_THROWS_AS(FieldExpr::parse("gauss(x, 0.1)"), ExprError);
  CHECK_THROWS_AS(FieldExpr::parse("1 +"), ExprError);
  try {
    FieldExpr::parse("1 + $");
  } catch (const ExprError& e) {
    CHECK(e.position == 4);
  }
}

TEST_CASE("minimal config takes the documented defaults") {
  const RunConfig c = parse_config(kMinimal);
  CHECK(c.grid.cells[0] == 63);
  CHECK(c.time.steps == 128);
  CHECK(c.betas == Betas{1.0, 0.5, 0.0});
  CHECK(c.potential == default_potential());
  CHECK(c.kernel == default_kernel());
}

TEST_CASE("missing beta fields name the field") {
  auto e = config_error(R"({"betas": {"rho": 1, "control": 0}})");
  CHECK(e.field == "betas.mu");
  CHECK(std::string(e.what()).find("betas.mu") != std::string::npos);
  CHECK(config_error(R"({"grid": {"dim": 1}})").field == "betas");
}

TEST_CASE("invalid values are reported against their field") {
  CHECK(config_error(R"({"betas": {"rho": 0, "mu": 0, "control": 0}})").field == "betas");
  CHECK(config_error(R"({"betas": {"rho": -1, "mu": 2, "control": 0}})").field == "betas");
  CHECK(config_error(R"({"betas": {"rho": 1, "mu": 1, "control": 0}, "kernel": {"kind": "wide"}})").field ==
        "kernel.kind");
  CHECK(config_error(R"({"betas": {"rho": 1, "mu": 1, "control": 0}, "grid": {"dim": 1, "cells": [1]}})").field ==
        "grid");
  CHECK(config_error(R"({"betas": {"rho": 1, "mu": 1, "control": 0}, "initial": {"rho0": "cos("}})").field ==
        "initial.rho0");
  CHECK(config_error(R"({"betas": {"rho": 1, "mu": 1, "control": 0}, "time": {"stepz": 3}})").field == "time.stepz");
  CHECK(config_error(R"({"betas": {"rho": "one", "mu": 1, "control": 0}})").field == "betas.rho");
  CHECK(config_error(R"({"betas": {"rho": 1, "mu": 1, "control": 0}, "constraints": {"R": -1}})").field ==
        "constraints.R");
}

TEST_CASE("syntax errors carry the line") {
  const auto e = config_error("{\n  \"betas\": {\"rho\": 1,\n  \"mu\": 1 \"control\": 0}\n}");
  CHECK(e.line == 3);
}

TEST_CASE("round trip: load, emit, load gives the same configuration") {
  RunConfig c = parse_config(kMinimal);
  c.grid = GridSpec{2, {2.0, 1.0}, {9, 5}};
  c.time = {0.75, 40};
  c.potential = smooth_potential(3.0, 1.25);
  c.potential.g.kind = CouplingKind::affine;
  c.potential.g.g0 = 0.1;
  c.potential.g.g1 = 0.2;
  c.kernel.kind = KernelKind::time_history;
  c.kernel.radial.type = RadialType::truncated_power;
  c.kernel.radial.alpha = 1.2;
  c.kernel.time_profile = TimeProfile::exponential;
  c.kernel.decay = 0.1 + 0.2;  // not exactly representable in short decimal
  c.betas = {0.3, 1.0 / 3.0, 1e-7};
  c.rho0 = FieldExpr::parse("0.5 + 0.1*cos(pi*x)*cos(pi*y)");
  c.targets.rho = {FieldExpr(), "targets.csv", "rho_col"};
  c.targets.mu = {FieldExpr::parse("gauss(1, 0.5, 0.3)"), "", ""};
  c.control = FieldExpr::parse("t*x");
  c.u_max = FieldExpr::parse("1.5");
  c.R = 2.0 / 3.0;
  c.solver.newton_tol = 1e-11;
  c.optimizer.step_rule = StepRule::fixed;
  c.optimizer.projection.metric = ProjectionMetric::l2_clip_scale_inexact;
  c.optimizer.projection.obstacle = ObstacleSolver::projected_gauss_seidel;
  c.optimizer.keep_every = 3;
  c.seed = 18446744073709551557ull;
  c.output = "somewhere/else";
  c.threads = 4;

  const std::string once = to_json_string(c);
  const RunConfig back = parse_config(once);
  CHECK(back == c);
  CHECK(to_json_string(back) == once);

  RunConfig m = parse_config(kMinimal);
  m.targets.manufactured = ManufactureKind::ball_active;
  CHECK(parse_config(to_json_string(m)) == m);
}

TEST_CASE("build_problem samples expressions on the grid") {
  RunConfig c = parse_config(R"({
    "grid": {"dim": 1, "cells": [4]},
    "time": {"T": 1.0, "steps": 2},
    "betas": {"rho": 1, "mu": 1, "control": 0},
    "initial": {"rho0": "0.5 + 0.25*x", "mu0": "0.1"},
    "targets": {"rho": "x*t", "mu": "0.2"},
    "control": "1 + t",
    "constraints": {"u_max": "3", "R": 5}
  })");
  const auto bp = build_problem(c);
  CHECK(bp.problem.init.rho0.values[4] == doctest::Approx(0.75));
  CHECK(bp.problem.targets.rho.values(2, 2) == doctest::Approx(0.5));
  CHECK(bp.u0.values(1, 0) == doctest::Approx(1.5));
  CHECK(bp.problem.constraints.R == 5.0);

  c.rho0 = FieldExpr::parse("1.5");
  try {
    build_problem(c);
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "initial");
  }
}

TEST_CASE("field CSV round trip is exact and shape-checked") {
  const auto g = line(5);
  const TimeAxis t{1.0, 3};
  std::mt19937_64 rng(61);
  const auto a = random_field(g, t, rng), b = random_field(g, t, rng);
  std::stringstream ss;
  write_fields_csv(ss, {"rho", "mu"}, {&a, &b});
  const std::string text = ss.str();
  std::istringstream in1(text), in2(text);
  CHECK((read_field_csv(in1, "rho", g, t).values.array() == a.values.array()).all());
  CHECK((read_field_csv(in2, "mu", g, t).values.array() == b.values.array()).all());

  std::istringstream wrong_shape(text);
  CHECK_THROWS(read_field_csv(wrong_shape, "rho", line(6), t));
  std::istringstream missing(text);
  CHECK_THROWS(read_field_csv(missing, "u", g, t));
  std::istringstream truncated(text.substr(0, text.size() / 2));
  CHECK_THROWS(read_field_csv(truncated, "rho", g, t));
}

TEST_CASE("targets read from a file next to the config") {
  const auto dir = std::filesystem::temp_directory_path() / "npc_config_test";
  std::filesystem::create_directories(dir);
  RunConfig c = parse_config(R"({"grid": {"dim": 1, "cells": [3]}, "time": {"steps": 2},
    "betas": {"rho": 1, "mu": 1, "control": 0}})");
  const auto g = build_grid(c.grid);
  const auto rho = sample_field(FieldExpr::parse("0.3 + 0.1*x*t"), g, c.time);
  const auto mu = sample_field(FieldExpr::parse("0.2*t"), g, c.time);
  {
    std::ofstream os(dir / "targets.csv");
    write_fields_csv(os, {"rho", "mu"}, {&rho, &mu});
  }
  std::ofstream(dir / "cfg.json") << R"({"grid": {"dim": 1, "cells": [3]}, "time": {"steps": 2},
    "betas": {"rho": 1, "mu": 1, "control": 0},
    "targets": {"rho": {"file": "targets.csv"}, "mu": {"file": "targets.csv", "column": "mu"}}})";
  const auto bp = build_problem(load_config((dir / "cfg.json").string()));
  CHECK((bp.problem.targets.rho.values.array() == rho.values.array()).all());
  CHECK((bp.problem.targets.mu.values.array() == mu.values.array()).all());
  std::filesystem::remove_all(dir);
}

TEST_CASE("shipped configs load") {
  for (const char* name : {"ref1d.json", "tracking.json"}) {
    const RunConfig c = load_config(std::string(NPC_CONFIG_DIR) + "/" + name);
    CHECK(parse_config(to_json_string(c), c.base_dir) == c);
    CHECK_NOTHROW(build_problem(c));
  }
}
