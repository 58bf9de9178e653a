// npc: command-line driver for forward solves, optimization and verification.

#include "npc/config.hpp"
#include "npc/harness.hpp"
#include "npc/optimizer.hpp"
#include "npc/sensitivity.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>

namespace fs = std::filesystem;
using namespace npc;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailure = 1;
constexpr int kConfigError = 2;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string suite;
  int directions = 5;
  double tolerance = 1e-3;
};

void configure_logging() {
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("NPC_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept the literal "off" for that.
    if (level != spdlog::level::off || std::string(env) == "off") {
      spdlog::set_level(level);
    } else {
      spdlog::warn("NPC_LOG: unknown level '{}', keeping warn", env);
    }
  }
}

RunConfig resolve_config(const Options& o) {
  RunConfig cfg = load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output = o.out;
  if (o.threads) {
    if (*o.threads < 1) throw ConfigError("--threads", "must be >= 1");
    cfg.threads = *o.threads;
  }
  Eigen::setNbThreads(cfg.threads);
  return cfg;
}

fs::path output_dir(const RunConfig& cfg) {
  fs::path dir(cfg.output);
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

int cmd_solve(const RunConfig& cfg) {
  const BuiltProblem bp = build_problem(cfg);
  const Problem& pb = bp.problem;
  const StateTrajectory tr = solve_state(pb.physics, *pb.B, bp.u0, pb.init, pb.solver);
  const fs::path dir = output_dir(cfg);
  {
    auto os = open_out(dir / "state.csv");
    write_fields_csv(os, {"rho", "mu", "u"}, {&tr.rho, &tr.mu, &bp.u0});
  }
  const double cost = eval_cost(tr, bp.u0, pb.targets, pb.betas);
  std::cout << std::setprecision(10) << "J " << cost << "\nrho in [" << tr.rho_min() << ", " << tr.rho_max()
            << "], min mu " << tr.mu_min() << "\nclamp fired " << (tr.any_clamp() ? "yes" : "no")
            << ", bound violation " << (tr.any_bound_violation() ? "yes" : "no") << "\nwrote "
            << (dir / "state.csv").string() << '\n';
  return tr.any_bound_violation() ? kCheckFailure : kOk;
}

int cmd_optimize(const RunConfig& cfg) {
  const BuiltProblem bp = build_problem(cfg);
  const Problem& pb = bp.problem;
  const OptRun run = projected_gradient(pb, bp.u0, cfg.optimizer, [](const IterationRecord& r) {
    spdlog::info("iter {} J {:.6e} stationarity {:.3e} step {:.3e}", r.iter, r.cost, r.stationarity, r.step);
  });
  const fs::path dir = output_dir(cfg);
  {
    auto os = open_out(dir / "cost_history.csv");
    write_history_csv(os, run);
  }
  {
    auto os = open_out(dir / "final_control.csv");
    write_fields_csv(os, {"u", "gradient"}, {&run.final_control, &run.final_gradient});
  }
  const auto& h = run.history;
  std::cout << std::setprecision(10) << "iterations " << (h.empty() ? 0 : h.back().iter) << ", exit "
            << to_string(run.exit_reason) << "\nJ " << (h.empty() ? 0.0 : h.front().cost) << " -> "
            << (h.empty() ? 0.0 : h.back().cost) << "\nstationarity " << (h.empty() ? 0.0 : h.back().stationarity)
            << "\nwrote " << (dir / "cost_history.csv").string() << ", " << (dir / "final_control.csv").string()
            << '\n';
  return run.cost_nonincreasing() ? kOk : kCheckFailure;
}

int cmd_verify(const RunConfig& cfg, const std::string& suite_name) {
  Suite suite;
  try {
    suite = parse_suite(suite_name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("suite", e.what());
  }
  const auto reports = run_suite(suite, harness_config(cfg));
  const fs::path dir = output_dir(cfg);
  {
    auto os = open_out(dir / ("verify_" + to_string(suite) + ".csv"));
    write_reports_csv(os, reports, cfg.seed);
  }
  {
    auto os = open_out(dir / ("verify_" + to_string(suite) + ".txt"));
    write_reports_text(os, reports, cfg.seed);
  }
  write_reports_text(std::cout, reports, cfg.seed);
  for (const auto& r : reports) {
    if (!r.pass) return kCheckFailure;
  }
  return kOk;
}

SpaceTimeField direction(const Problem& pb, std::mt19937_64& rng) {
  return random_smooth_field(pb.grid, pb.time, rng);
}

int cmd_taylor(const RunConfig& cfg) {
  const BuiltProblem bp = build_problem(cfg);
  const Problem& pb = bp.problem;
  std::mt19937_64 rng(cfg.seed);
  const SpaceTimeField h = direction(pb, rng);
  const TaylorTable t = taylor_test(pb.physics, *pb.B, bp.u0, h, default_taylor_ladder(), pb.init, pb.solver);
  const fs::path dir = output_dir(cfg);
  auto os = open_out(dir / "taylor.csv");
  os << "lambda,remainder,ratio\n" << std::setprecision(17);
  std::cout << std::setprecision(6) << "lambda        r(lambda)     r(l)/r(l/2)\n";
  bool ratios_ok = !t.ratios.empty();
  for (std::size_t k = 0; k < t.lambdas.size(); ++k) {
    const bool has_ratio = k < t.ratios.size();
    os << t.lambdas[k] << ',' << t.remainder[k] << ',';
    if (has_ratio) os << t.ratios[k];
    os << '\n';
    std::cout << std::left << std::setw(14) << t.lambdas[k] << std::setw(14) << t.remainder[k];
    if (has_ratio) std::cout << t.ratios[k];
    std::cout << '\n';
    if (has_ratio && !(t.ratios[k] >= 1.5 && t.ratios[k] <= 3.0)) ratios_ok = false;
  }
  const bool pass = !t.degenerate && t.strictly_decreasing() && ratios_ok;
  std::cout << "strictly decreasing " << (t.strictly_decreasing() ? "yes" : "no") << ", ratios in [1.5, 3] "
            << (ratios_ok ? "yes" : "no") << (t.degenerate ? ", degenerate direction" : "")
            << "\nscheme consistency " << t.scheme_consistency << '\n';
  return pass ? kOk : kCheckFailure;
}

int cmd_gradcheck(const RunConfig& cfg, int directions, double tol) {
  const BuiltProblem bp = build_problem(cfg);
  const Problem& pb = bp.problem;
  const Evaluation ev = evaluate(pb, bp.u0);
  const SpaceTimeField G = adjoint_gradient(pb, ev);
  std::mt19937_64 rng(cfg.seed);
  const fs::path dir = output_dir(cfg);
  auto os = open_out(dir / "gradcheck.csv");
  os << "direction,adjoint,finite_difference,relative_error\n" << std::setprecision(17);
  std::cout << std::setprecision(10) << "J " << ev.cost << '\n';
  double worst = 0.0;
  constexpr double lam = 1e-5;
  for (int k = 0; k < directions; ++k) {
    const SpaceTimeField h = direction(pb, rng);
    const double ad = inner_l2q(G, h);
    const double fd = (evaluate(pb, bp.u0 + lam * h).cost - evaluate(pb, bp.u0 + (-lam) * h).cost) / (2.0 * lam);
    const double err = std::abs(ad - fd) / std::max(std::abs(fd), 1e-300);
    worst = std::max(worst, err);
    os << k << ',' << ad << ',' << fd << ',' << err << '\n';
    std::cout << "direction " << k << ": adjoint " << ad << ", central FD " << fd << ", relative error " << err << '\n';
  }
  std::cout << "worst relative error " << worst << " (tolerance " << tol << ")\n";
  return worst <= tol ? kOk : kCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Nonlocal phase-field optimal control: forward solves, optimization and verification"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run config")->required();
    sub->add_option("--out", o.out, "output directory (overrides the config)");
    sub->add_option("--seed", o.seed, "random seed (overrides the config)");
    sub->add_option("--threads", o.threads, "worker threads (overrides the config)");
  };
  auto* solve = app.add_subcommand("solve", "forward state solve; writes state.csv");
  auto* optimize = app.add_subcommand("optimize", "projected gradient; writes cost_history.csv and final_control.csv");
  auto* verify = app.add_subcommand("verify", "run a verification suite");
  verify->add_option("suite", o.suite, "operators|state|sensitivity|adjoint|optimizer|all")->required();
  auto* taylor = app.add_subcommand("taylor", "Taylor remainder ladder of the control-to-state map");
  auto* gradcheck = app.add_subcommand("gradcheck", "adjoint gradient against central finite differences");
  gradcheck->add_option("--directions", o.directions, "number of random directions")->check(CLI::PositiveNumber);
  gradcheck->add_option("--tol", o.tolerance, "relative error tolerance");
  for (auto* sub : {solve, optimize, verify, taylor, gradcheck}) common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    const RunConfig cfg = resolve_config(o);
    if (solve->parsed()) return cmd_solve(cfg);
    if (optimize->parsed()) return cmd_optimize(cfg);
    if (verify->parsed()) return cmd_verify(cfg, o.suite);
    if (taylor->parsed()) return cmd_taylor(cfg);
    if (gradcheck->parsed()) return cmd_gradcheck(cfg, o.directions, o.tolerance);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckFailure;
  }
  return kOk;
}
