#include "npc/harness.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace npc {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::mt19937_64 rng_for(const HarnessConfig& cfg, const std::string& name) {
  return std::mt19937_64(cfg.seed ^ fnv1a(name));
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

SpaceTimeField random_field(const GridPtr& grid, const TimeAxis& time, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  SpaceTimeField f(grid, time);
  for (Eigen::Index k = 0; k < f.values.size(); ++k) f.values.data()[k] = nd(rng);
  return f;
}

SpaceTimeField constant_field(const GridPtr& grid, const TimeAxis& time, double c) {
  SpaceTimeField f(grid, time);
  f.values.setConstant(c);
  return f;
}

double rel_diff(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s > 0.0 ? std::abs(a - b) / s : 0.0;
}

double max_abs(const RowMat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

std::shared_ptr<const NonlocalOperator> operator_for(const HarnessConfig& cfg, const GridPtr& grid,
                                                     const KernelSpec& spec) {
  if (cfg.fault == Fault::wrong_adjoint_transpose) return make_wrong_adjoint_operator(grid, spec);
  return make_operator(grid, spec);
}

KernelSpec history_kernel() {
  KernelSpec k;
  k.kind = KernelKind::time_history;
  k.radial.type = RadialType::truncated_power;
  k.radial.amplitude = 0.3;
  k.radial.alpha = 0.5;
  k.time_profile = TimeProfile::exponential;
  k.time_amplitude = 1.0;
  k.decay = 2.0;
  return k;
}

Problem base_problem(Instance which, const Physics& physics, const HarnessConfig& cfg, const KernelSpec& kernel) {
  Problem pb;
  pb.grid = build_grid(instance_grid(which));
  pb.time = instance_time(which);
  pb.physics = physics;
  pb.B = operator_for(cfg, pb.grid, kernel);
  pb.init = default_initial_data(pb.grid);
  pb.targets = {pb.zero_field(), pb.zero_field()};
  pb.constraints = {constant_field(pb.grid, pb.time, 2.0), 1e6};
  return pb;
}

/// Relative finite-difference gradient errors along n random directions.
struct GradCheck {
  double max_err = 0.0;       // central difference, lambda = 1e-4
  double richardson = 0.0;    // extrapolated from 1e-4 and 1e-5
  double fd_agreement = 0.0;  // |cd(1e-4) - cd(1e-5)| relative
};

GradCheck gradient_check(const Problem& pb, const SpaceTimeField& u, int directions, std::mt19937_64& rng,
                         AdjointScheme scheme = AdjointScheme::dual_consistent) {
  const Evaluation ev = evaluate(pb, u);
  const SpaceTimeField G =
      gradient(u, solve_adjoint(pb.physics, *pb.B, ev.traj, pb.targets, pb.betas, scheme), pb.betas.control);
  GradCheck out;
  auto cd = [&](const SpaceTimeField& h, double lam) {
    return (evaluate(pb, u + lam * h).cost - evaluate(pb, u + (-lam) * h).cost) / (2.0 * lam);
  };
  for (int k = 0; k < directions; ++k) {
    const SpaceTimeField h = random_smooth_field(pb.grid, pb.time, rng);
    const double ad = inner_l2q(G, h);
    const double d1 = cd(h, 1e-4), d2 = cd(h, 1e-5);
    const double rich = (100.0 * d2 - d1) / 99.0;
    out.max_err = std::max(out.max_err, std::abs(ad - d1) / std::abs(d1));
    out.richardson = std::max(out.richardson, std::abs(ad - rich) / std::abs(rich));
    out.fd_agreement = std::max(out.fd_agreement, rel_diff(d1, d2));
  }
  return out;
}

/// Oracle-grade gradient problem on a given resolution (smooth potential).
Problem gradient_problem(const HarnessConfig& cfg, int cells, int steps) {
  Problem pb;
  GridSpec gs;
  gs.dim = 1;
  gs.cells = {cells, 1};
  pb.grid = build_grid(gs);
  pb.time = TimeAxis{1.0, steps};
  pb.physics = Physics(smooth_potential());
  pb.B = operator_for(cfg, pb.grid, cfg.kernel);
  pb.init = default_initial_data(pb.grid);
  const int M = pb.grid->node_count();
  SpaceTimeField rq(pb.grid, pb.time), mq(pb.grid, pb.time);
  for (int n = 0; n <= steps; ++n) {
    for (int i = 0; i < M; ++i) {
      const double x = pb.grid->coord(i, 0), t = pb.time.time(n);
      rq.values(n, i) = 0.5 + 0.1 * x * t;
      mq.values(n, i) = 0.5 * t + 0.2 * x;
    }
  }
  pb.targets = {rq, mq};
  pb.betas = {1.0, 1.0, 0.1};
  pb.constraints = {constant_field(pb.grid, pb.time, 2.0), 1e6};
  return pb;
}

SpaceTimeField gradient_control(const Problem& pb) {
  SpaceTimeField u(pb.grid, pb.time);
  for (int n = 0; n <= pb.time.steps; ++n) {
    for (int i = 0; i < pb.grid->node_count(); ++i) {
      u.values(n, i) = 1.0 + 0.5 * std::sin(kPi * pb.grid->coord(i, 0)) * (1.0 + pb.time.time(n));
    }
  }
  return u;
}

// ---------------------------------------------------------------- checks

using CheckFn = std::function<CheckReport(const HarnessConfig&)>;

struct CheckDef {
  Suite suite;
  CheckFn fn;
};

CheckReport make_report(std::string name, std::string claim, double measured, std::string threshold, bool pass,
                        std::string detail = {}) {
  CheckReport r;
  r.name = std::move(name);
  r.claim = std::move(claim);
  r.measured = measured;
  r.threshold = std::move(threshold);
  r.pass = pass;
  r.detail = std::move(detail);
  return r;
}

CheckReport grid_weights_sum(const HarnessConfig&) {
  std::vector<GridSpec> specs;
  GridSpec a;
  a.dim = 1;
  a.lengths = {1.0, 1.0};
  a.cells = {4, 1};
  specs.push_back(a);
  a.lengths = {2.0, 1.0};
  a.cells = {8, 1};
  specs.push_back(a);
  GridSpec b;
  b.dim = 2;
  b.cells = {2, 2};
  specs.push_back(b);
  b.lengths = {1.5, 0.7};
  b.cells = {7, 5};
  specs.push_back(b);
  specs.push_back(instance_grid(Instance::reference_1d));
  specs.push_back(instance_grid(Instance::reference_2d));
  double worst = 0.0;
  for (const auto& s : specs) {
    const auto g = build_grid(s);
    worst = std::max(worst, std::abs(g->weights().sum() - g->volume()) / g->volume());
  }
  return make_report("grid.weights_sum", "quadrature weights sum to |Omega|", worst, "<= 1e-12", worst <= 1e-12);
}

std::vector<GridSpec> small_grids() {
  std::vector<GridSpec> out;
  for (int c : {4, 31, 199}) {
    GridSpec s;
    s.dim = 1;
    s.cells = {c, 1};
    out.push_back(s);
  }
  for (auto [cx, cy] : {std::pair{8, 8}, std::pair{13, 13}, std::pair{9, 5}}) {
    GridSpec s;
    s.dim = 2;
    s.lengths = {1.0, 0.6};
    s.cells = {cx, cy};
    out.push_back(s);
  }
  return out;
}

/// Dense W*L, with W the quadrature weights.
Eigen::MatrixXd weighted_laplacian(const Grid& g) {
  return g.weights().asDiagonal() * Eigen::MatrixXd(g.laplacian());
}

CheckReport grid_laplacian_symmetry(const HarnessConfig&) {
  double worst = 0.0;
  for (const auto& s : small_grids()) {
    const auto g = build_grid(s);
    const Eigen::MatrixXd d = weighted_laplacian(*g);
    worst = std::max(worst, (d - d.transpose()).cwiseAbs().maxCoeff() / d.cwiseAbs().maxCoeff());
  }
  return make_report("grid.laplacian_symmetry", "weighted Neumann Laplacian is symmetric", worst,
                     "<= 1e-13 (relative to max entry)", worst <= 1e-13, "grids up to 200 nodes, 1D and 2D");
}

CheckReport grid_laplacian_column_sums(const HarnessConfig&) {
  double worst = 0.0;
  for (const auto& s : small_grids()) {
    const auto g = build_grid(s);
    const Eigen::MatrixXd d = weighted_laplacian(*g);
    worst = std::max(worst, d.colwise().sum().cwiseAbs().maxCoeff() / d.cwiseAbs().maxCoeff());
  }
  return make_report("grid.laplacian_column_sums", "weighted Laplacian annihilates constants in the pairing", worst,
                     "<= 1e-13 (relative to max entry)", worst <= 1e-13);
}

CheckReport grid_quadrature_exactness(const HarnessConfig&) {
  GridSpec s1;
  s1.dim = 1;
  s1.lengths = {1.7, 1.0};
  s1.cells = {5, 1};
  const auto g1 = build_grid(s1);
  double sum = 0.0;
  for (int i = 0; i < g1->node_count(); ++i) sum += g1->weights()[i] * (2.0 + 3.0 * g1->coord(i, 0));
  const double exact1 = 2.0 * 1.7 + 1.5 * 1.7 * 1.7;
  GridSpec s2;
  s2.dim = 2;
  s2.lengths = {1.3, 0.8};
  s2.cells = {3, 4};
  const auto g2 = build_grid(s2);
  double sum2 = 0.0;
  for (int i = 0; i < g2->node_count(); ++i) {
    const double x = g2->coord(i, 0), y = g2->coord(i, 1);
    sum2 += g2->weights()[i] * (1.0 + 2.0 * x + 3.0 * y + 4.0 * x * y);
  }
  const double X = 1.3, Y = 0.8;
  const double exact2 = X * Y + X * X * Y + 1.5 * X * Y * Y + X * X * Y * Y;
  const double worst = std::max(rel_diff(sum, exact1), rel_diff(sum2, exact2));
  return make_report("grid.quadrature_exactness", "trapezoid rule is exact on affine (1D) and bilinear (2D) data",
                     worst, "<= 1e-13", worst <= 1e-13);
}

CheckReport grid_laplacian_order(const HarnessConfig&) {
  std::vector<double> errs;
  for (int cells : {16, 32, 64, 128}) {
    GridSpec s;
    s.dim = 1;
    s.cells = {cells, 1};
    const auto g = build_grid(s);
    Vec f(g->node_count());
    for (int i = 0; i < g->node_count(); ++i) f[i] = std::cos(kPi * g->coord(i, 0));
    const Vec lf = g->laplacian() * f;
    errs.push_back((lf + kPi * kPi * f).cwiseAbs().maxCoeff());
  }
  std::vector<double> ratios;
  for (std::size_t k = 0; k + 1 < errs.size(); ++k) ratios.push_back(errs[k] / errs[k + 1]);
  bool ok = true;
  std::string detail = "ratios";
  for (double r : ratios) {
    ok = ok && r >= 3.5 && r <= 4.5;
    detail += " " + fmt(r);
  }
  const double worst = *std::min_element(ratios.begin(), ratios.end(), [](double a, double b) {
    return std::abs(a - 4.0) > std::abs(b - 4.0);
  });
  return make_report("grid.laplacian_order", "Laplacian is second-order accurate on smooth fields", worst,
                     "every refinement ratio in [3.5, 4.5]", ok, detail);
}

std::vector<KernelSpec> both_kernels(const HarnessConfig& cfg) {
  KernelSpec spatial = cfg.kernel;
  if (spatial.kind != KernelKind::spatial_convolution) spatial = default_kernel();
  return {spatial, history_kernel()};
}

CheckReport nonlocal_causality(const HarnessConfig& cfg) {
  auto rng = rng_for(cfg, "nonlocal.causality");
  const auto grid = build_grid(instance_grid(Instance::oracle));
  const TimeAxis time = instance_time(Instance::oracle);
  double worst = 0.0;
  for (const auto& spec : both_kernels(cfg)) {
    const auto op = make_operator(grid, spec);
    const SpaceTimeField v = random_field(grid, time, rng);
    const SpaceTimeField bv = op->apply(v);
    for (int n = 0; n <= time.steps; ++n) {
      SpaceTimeField w = v;
      const SpaceTimeField noise = random_field(grid, time, rng);
      for (int m = n + 1; m <= time.steps; ++m) w.slice(m) = noise.slice(m);
      const SpaceTimeField bw = op->apply(w);
      worst = std::max(worst, max_abs(bw.values.topRows(n + 1) - bv.values.topRows(n + 1)));
    }
  }
  return make_report("nonlocal.causality", "output up to t_n depends only on input up to t_n", worst,
                     "== 0 (bitwise)", worst == 0.0, "spatial and time-history kernels");
}

double truncated_norm(const Eigen::MatrixXd& dense, const GridPtr& grid, const TimeAxis& time, int n) {
  const int M = grid->node_count();
  const int size = (n + 1) * M;
  return dense_operator_norm(dense.topLeftCorner(size, size), *grid, TimeAxis{time.time(n), n});
}

CheckReport nonlocal_lipschitz(const HarnessConfig& cfg) {
  auto rng = rng_for(cfg, "nonlocal.lipschitz");
  const auto grid = build_grid(instance_grid(Instance::oracle));
  const TimeAxis time = instance_time(Instance::oracle);
  double worst = 0.0;
  std::string detail = "C_B";
  for (const auto& spec : both_kernels(cfg)) {
    const auto op = make_operator(grid, spec);
    const Eigen::MatrixXd dense = assemble_dense(*op, grid, time);
    std::vector<double> c(time.steps + 1);
    for (int n = 1; n <= time.steps; ++n) c[n] = truncated_norm(dense, grid, time, n);
    detail += " " + fmt(c[time.steps]);
    for (int trial = 0; trial < 100; ++trial) {
      const SpaceTimeField v = random_field(grid, time, rng), w = random_field(grid, time, rng);
      const SpaceTimeField d = op->apply(v) - op->apply(w);
      const SpaceTimeField dv = v - w;
      for (int n = 1; n <= time.steps; ++n) {
        worst = std::max(worst, norm_l2_upto(d, n) / (c[n] * norm_l2_upto(dv, n)));
      }
    }
  }
  return make_report("nonlocal.lipschitz", "||B v - B w||_{L2(Q_t)} <= C_B ||v - w||_{L2(Q_t)}", worst,
                     "<= 1 + 1e-9 (ratio to measured C_B)", worst <= 1.0 + 1e-9, detail);
}

CheckReport nonlocal_duality(const HarnessConfig& cfg) {
  auto rng = rng_for(cfg, "nonlocal.duality");
  GridSpec gs;
  gs.dim = 1;
  gs.cells = {15, 1};
  const auto grid = build_grid(gs);
  const TimeAxis time{1.0, 8};
  double worst = 0.0;
  for (const auto& spec : both_kernels(cfg)) {
    const auto op = operator_for(cfg, grid, spec);
    for (int trial = 0; trial < 100; ++trial) {
      const SpaceTimeField base = random_field(grid, time, rng);
      const SpaceTimeField q = random_field(grid, time, rng), w = random_field(grid, time, rng);
      const double lhs = inner_l2q(op->apply_derivative_adjoint(base, q), w);
      const double rhs = inner_l2q(q, op->apply_derivative(base, w));
      worst = std::max(worst, rel_diff(lhs, rhs));
    }
  }
  return make_report("nonlocal.duality", "<DB* q, w> = <q, DB w> in L2(Q)", worst, "<= 1e-11", worst <= 1e-11,
                     "100 trials per kernel kind, 16 nodes x 8 steps");
}

CheckReport nonlocal_symmetric_adjoint(const HarnessConfig& cfg) {
  auto rng = rng_for(cfg, "nonlocal.symmetric_adjoint");
  double worst = 0.0;
  for (Instance which : {Instance::oracle, Instance::reference_2d}) {
    const auto grid = build_grid(instance_grid(which));
    const TimeAxis time{1.0, 4};
    const auto op = operator_for(cfg, grid, both_kernels(cfg)[0]);
    for (int trial = 0; trial < 10; ++trial) {
      const SpaceTimeField q = random_field(grid, time, rng);
      const SpaceTimeField a = op->apply_derivative_adjoint(q, q), b = op->apply_derivative(q, q);
      worst = std::max(worst, max_abs(a.values - b.values) / max_abs(b.values));
    }
  }
  return make_report("nonlocal.symmetric_adjoint", "DB* = DB for a symmetric spatial kernel", worst, "<= 1e-12",
                     worst <= 1e-12);
}

CheckReport nonlocal_linearity(const HarnessConfig& cfg) {
  auto rng = rng_for(cfg, "nonlocal.linearity");
  const auto grid = build_grid(instance_grid(Instance::oracle));
  const TimeAxis time = instance_time(Instance::oracle);
  double worst = 0.0;
  for (const auto& spec : both_kernels(cfg)) {
    const auto op = make_operator(grid, spec);
    for (int trial = 0; trial < 20; ++trial) {
      const SpaceTimeField v = random_field(grid, time, rng), w = random_field(grid, time, rng);
      const double a = 1.7, b = -0.3;
      const SpaceTimeField lhs = op->apply(a * v + b * w);
      const SpaceTimeField rhs = a * op->apply(v) + b * op->apply(w);
      worst = std::max(worst, max_abs(lhs.values - rhs.values) / std::max(1.0, max_abs(rhs.values)));
      const SpaceTimeField d = op->apply_derivative(v, w);
      worst = std::max(worst, max_abs(d.values - op->apply(w).values));
    }
  }
  return make_report("nonlocal.linearity", "shipped kernels are linear and DB[v] = B", worst, "<= 1e-12",
                     worst <= 1e-12);
}

std::vector<PotentialSpec> shipped_potentials(const HarnessConfig& cfg) {
  PotentialSpec constant_g = default_potential();
  constant_g.g.kind = CouplingKind::constant;
  constant_g.g.g0 = 0.5;
  PotentialSpec affine_g = default_potential();
  affine_g.g.kind = CouplingKind::affine;
  affine_g.g.g0 = 1.0;
  affine_g.g.g1 = 0.5;
  return {default_potential(), smooth_potential(), constant_g, affine_g, cfg.potential};
}

CheckReport physics_derivative_consistency(const HarnessConfig& cfg) {
  double worst = 0.0;
  const double h = 1e-5;
  for (const auto& spec : shipped_potentials(cfg)) {
    const Physics ph(spec);
    for (int k = 0; k < 100; ++k) {
      const double r = 0.05 + 0.9 * (k + 0.5) / 100.0;
      auto check = [&](double fd, double exact) {
        worst = std::max(worst, std::abs(fd - exact) / std::max(1.0, std::abs(exact)));
      };
      check((ph.F(r + h) - ph.F(r - h)) / (2 * h), ph.F_prime(r));
      check((ph.F_prime(r + h) - ph.F_prime(r - h)) / (2 * h), ph.F_second(r));
      check((ph.F_second(r + h) - ph.F_second(r - h)) / (2 * h), ph.F_third(r));
      check((ph.g(r + h) - ph.g(r - h)) / (2 * h), ph.g_prime(r));
      check((ph.g_prime(r + h) - ph.g_prime(r - h)) / (2 * h), ph.g_second(r));
    }
  }
  return make_report("physics.derivative_consistency", "analytic derivatives of F and g match central differences",
                     worst, "<= 1e-6 (relative, floor 1)", worst <= 1e-6, "100 points in [0.05, 0.95], step 1e-5");
}

CheckReport physics_f1_monotone(const HarnessConfig& cfg) {
  PotentialSpec s = cfg.potential;
  s.singular = SingularPart::logarithmic;
  s.f2 = {0.0};
  const Physics ph(s);
  const double eps = s.safeguard_eps;
  int violations = 0;
  double prev = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 10000; ++k) {
    const double r = eps + (1.0 - 2.0 * eps) * k / 10000.0;
    const double v = ph.F_prime(r);
    if (!(v > prev)) ++violations;
    prev = v;
  }
  return make_report("physics.f1_monotone", "F1' is increasing on the clamp interval (F1 convex)", violations,
                     "== 0 violations", violations == 0, "10001 samples");
}

CheckReport physics_clamp_transparency(const HarnessConfig& cfg) {
  const Physics ph(cfg.potential);
  const double eps = cfg.potential.safeguard_eps;
  double worst = 0.0;
  int fired = 0;
  PotentialSpec wide = cfg.potential;
  wide.safeguard_eps = 1e-12;
  const Physics reference(wide);
  for (int k = 0; k <= 1000; ++k) {
    const double r = 2 * eps + (1.0 - 4 * eps) * k / 1000.0;
    const Clamped c = ph.F_prime_checked(r);
    if (c.clamped) ++fired;
    worst = std::max(worst, std::abs(c.value - reference.F_prime(r)));
  }
  return make_report("physics.clamp_transparency", "the safeguard clamp is inactive on [2 eps, 1 - 2 eps]", worst,
                     "== 0 and no clamp flag", worst == 0.0 && fired == 0, "clamp flags " + std::to_string(fired));
}

CheckReport physics_audit(const HarnessConfig& cfg) {
  int failed = 0;
  for (const auto& spec : shipped_potentials(cfg)) {
    // The smooth rate-test mode drops the singular part by design.
    if (spec.singular == SingularPart::none) continue;
    if (!audit_assumptions(spec).all_passed()) ++failed;
  }
  PotentialSpec bad = default_potential();
  bad.g.kind = CouplingKind::affine;
  bad.g.g0 = -0.1;
  bad.g.g1 = 1.0;
  const AuditReport rep = audit_assumptions(bad);
  bool caught = false;
  for (const auto& item : rep.items) caught = caught || (!item.passed && item.witness == 0.0);
  return make_report("physics.audit", "shipped potentials satisfy the structural assumptions; violations are caught",
                     failed, "== 0 failing shipped specs, violation detected", failed == 0 && caught,
                     caught ? "g(0) < 0 witness found" : "constructed violation missed");
}

CheckReport state_max_principle(const HarnessConfig& cfg) {
  auto rng = rng_for(cfg, "state.max_principle");
  const Problem pb = base_problem(Instance::reference_1d, Physics(cfg.potential), cfg, cfg.kernel);
  double margin = 1.0, mu_min = std::numeric_limits<double>::infinity();
  int clamps = 0, failures = 0;
  for (int k = 0; k < 20; ++k) {
    const SpaceTimeField u =
        project_Uad(random_feasible_control(pb.grid, pb.time, 2.0, rng), pb.constraints);
    try {
      const StateTrajectory tr = solve_state(pb.physics, *pb.B, u, pb.init, pb.solver);
      margin = std::min({margin, tr.rho_min(), 1.0 - tr.rho_max()});
      mu_min = std::min(mu_min, tr.mu_min());
      if (tr.any_clamp()) ++clamps;
    } catch (const NonConvergence& e) {
      ++failures;
      spdlog::warn("state.max_principle: {}", e.what());
    }
  }
  const bool ok = failures == 0 && margin >= 1e-4 && mu_min >= -1e-10 && clamps == 0;
  return make_report("state.max_principle", "rho stays in (0,1) and mu >= 0 for controls in U_ad", margin,
                     ">= 1e-4 margin, min mu >= -1e-10, clamp inactive", ok,
                     "20 controls; min mu " + fmt(mu_min) + "; clamps " + std::to_string(clamps) +
                         "; nonconverged " + std::to_string(failures));
}

struct StateFixture {
  Problem pb;
  SpaceTimeField u;
};

StateFixture state_fixture(const HarnessConfig& cfg, const std::string& name) {
  auto rng = rng_for(cfg, name);
  StateFixture f{base_problem(Instance::reference_1d, Physics(cfg.potential), cfg, cfg.kernel), {}};
  f.u = random_feasible_control(f.pb.grid, f.pb.time, 2.0, rng);
  return f;
}

CheckReport state_residual_check(const HarnessConfig& cfg) {
  const auto f = state_fixture(cfg, "state.residual");
  const StateTrajectory tr = solve_state(f.pb.physics, *f.pb.B, f.u, f.pb.init, f.pb.solver);
  const double r = max_state_residual(state_residual(f.pb.physics, *f.pb.B, f.u, tr.rho, tr.mu));
  // The independent recomputation may differ from the solver's own residual
  // by roundoff in the assembly order.
  const double tol = f.pb.solver.newton_tol * (1.0 + 1e-6);
  return make_report("state.residual", "converged trajectories satisfy both stepping equations", r,
                     "<= newton_tol (" + fmt(f.pb.solver.newton_tol) + ")", r <= tol);
}

CheckReport state_neumann_compatibility(const HarnessConfig& cfg) {
  const auto f = state_fixture(cfg, "state.neumann_compatibility");
  const StateTrajectory tr = solve_state(f.pb.physics, *f.pb.B, f.u, f.pb.init, f.pb.solver);
  const auto d = neumann_compatibility_defect(f.pb.physics, f.u, tr);
  double worst = 0.0;
  for (double v : d) worst = std::max(worst, std::abs(v));
  const double tol = f.pb.solver.newton_tol * f.pb.grid->volume();
  return make_report("state.neumann_compatibility", "spatial integral of the chemical-potential balance vanishes",
                     worst, "<= newton_tol * |Omega|", worst <= tol);
}

CheckReport state_time_order(const HarnessConfig& cfg) {
  const auto f = state_fixture(cfg, "state.time_order");
  std::vector<StateTrajectory> sols;
  std::vector<int> steps{32, 64, 128, 256};
  const auto& grid = f.pb.grid;
  for (int n : steps) {
    const TimeAxis t{f.pb.time.T, n};
    SpaceTimeField u(grid, t);
    // The control is sampled from the smooth fixture by linear interpolation in time.
    const TimeAxis& t0 = f.pb.time;
    for (int k = 0; k <= n; ++k) {
      const double s = t.time(k) / t0.tau();
      const int j = std::min(static_cast<int>(std::floor(s)), t0.steps - 1);
      const double th = s - j;
      u.slice(k) = (1.0 - th) * f.u.slice(j) + th * f.u.slice(j + 1);
    }
    sols.push_back(solve_state(f.pb.physics, *f.pb.B, u, f.pb.init, f.pb.solver));
  }
  std::vector<double> diffs;
  for (std::size_t k = 0; k + 1 < sols.size(); ++k) {
    const auto& a = sols[k];
    const auto& b = sols[k + 1];
    const Vec dr = a.rho.slice(a.rho.time.steps).transpose() - b.rho.slice(b.rho.time.steps).transpose();
    const Vec dm = a.mu.slice(a.mu.time.steps).transpose() - b.mu.slice(b.mu.time.steps).transpose();
    diffs.push_back(std::sqrt(inner_h(*grid, dr, dr) + inner_h(*grid, dm, dm)));
  }
  bool ok = true;
  std::string detail = "ratios";
  double worst = 2.0;
  for (std::size_t k = 0; k + 1 < diffs.size(); ++k) {
    const double r = diffs[k] / diffs[k + 1];
    ok = ok && r >= 1.6 && r <= 2.4;
    if (std::abs(r - 2.0) > std::abs(worst - 2.0)) worst = r;
    detail += " " + fmt(r);
  }
  detail += "; N = 32, 64, 128, 256; final-time L2 differences";
  return make_report("state.time_order", "forward scheme is first order in tau", worst,
                     "every self-convergence ratio in [1.6, 2.4]", ok, detail);
}

CheckReport state_determinism(const HarnessConfig& cfg) {
  const auto f = state_fixture(cfg, "state.determinism");
  const StateTrajectory a = solve_state(f.pb.physics, *f.pb.B, f.u, f.pb.init, f.pb.solver);
  const StateTrajectory b = solve_state(f.pb.physics, *f.pb.B, f.u, f.pb.init, f.pb.solver);
  const double d = std::max(max_abs(a.rho.values - b.rho.values), max_abs(a.mu.values - b.mu.values));
  return make_report("state.determinism", "identical inputs give identical trajectories", d, "== 0 (bitwise)",
                     d == 0.0);
}

CheckReport state_stability(const HarnessConfig& cfg) {
  auto rng = rng_for(cfg, "state.stability");
  const Problem pb = base_problem(Instance::reference_1d, Physics(cfg.potential), cfg, cfg.kernel);
  std::vector<double> maxima;
  bool bounded = true, degenerate = false;
  const int half = pb.time.steps / 2;
  for (int pair = 0; pair < 5; ++pair) {
    const SpaceTimeField u1 = random_feasible_control(pb.grid, pb.time, 2.0, rng);
    const SpaceTimeField bump = random_smooth_field(pb.grid, pb.time, rng);
    for (double delta : {1e-1, 1e-2, 1e-3}) {
      const SpaceTimeField u2 = u1 + (0.5 * delta) * bump;
      const StabilityReport rep = stability_probe(pb.physics, *pb.B, u1, u2, pb.init, pb.solver);
      if (rep.degenerate) {
        degenerate = true;
        continue;
      }
      const double early = *std::max_element(rep.ratio.begin(), rep.ratio.begin() + half);
      bounded = bounded && std::isfinite(rep.max_ratio) && rep.max_ratio <= 3.0 * early;
      maxima.push_back(rep.max_ratio);
    }
  }
  const auto [lo, hi] = std::minmax_element(maxima.begin(), maxima.end());
  const double spread = maxima.empty() ? std::numeric_limits<double>::infinity() : *hi / *lo;
  return make_report("state.stability", "state differences are Lipschitz in the control difference", spread,
                     "max/min ratio <= 3 across delta and pairs; max over t <= 3x max over [0, T/2]",
                     !degenerate && bounded && spread <= 3.0,
                     "K2 range [" + fmt(maxima.empty() ? 0.0 : *lo) + ", " + fmt(maxima.empty() ? 0.0 : *hi) +
                         "]; 5 pairs x delta {1e-1, 1e-2, 1e-3}; bounded in t: " + (bounded ? "yes" : "no"));
}

struct SensFixture {
  Problem pb;
  SpaceTimeField u;
  StateTrajectory base;
};

SensFixture sens_fixture(const HarnessConfig& cfg, const std::string& name, Instance which, const Physics& ph) {
  auto rng = rng_for(cfg, name);
  SensFixture f{base_problem(which, ph, cfg, cfg.kernel), {}, {}};
  f.u = random_feasible_control(f.pb.grid, f.pb.time, 2.0, rng);
  f.base = solve_state(f.pb.physics, *f.pb.B, f.u, f.pb.init, f.pb.solver);
  return f;
}

CheckReport sensitivity_homogeneous(const HarnessConfig& cfg) {
  const auto f = sens_fixture(cfg, "sensitivity.homogeneous", Instance::reference_1d, Physics(cfg.potential));
  const LinearizedPair z = solve_linearized(f.pb.physics, *f.pb.B, f.base, f.pb.zero_field());
  const double m = std::max(max_abs(z.xi.values), max_abs(z.eta.values));
  return make_report("sensitivity.homogeneous", "zero direction gives zero sensitivities", m, "== 0", m == 0.0);
}

CheckReport sensitivity_superposition(const HarnessConfig& cfg) {
  auto rng = rng_for(cfg, "sensitivity.superposition.dirs");
  const auto f = sens_fixture(cfg, "sensitivity.superposition", Instance::reference_1d, Physics(cfg.potential));
  const SpaceTimeField h1 = random_smooth_field(f.pb.grid, f.pb.time, rng);
  const SpaceTimeField h2 = random_field(f.pb.grid, f.pb.time, rng);
  const auto a = solve_linearized(f.pb.physics, *f.pb.B, f.base, h1);
  const auto b = solve_linearized(f.pb.physics, *f.pb.B, f.base, h2);
  const auto c = solve_linearized(f.pb.physics, *f.pb.B, f.base, h1 + h2);
  const double scale = std::max(max_abs(c.xi.values), max_abs(c.eta.values));
  const double d = std::max(max_abs(a.xi.values + b.xi.values - c.xi.values),
                            max_abs(a.eta.values + b.eta.values - c.eta.values)) /
                   scale;
  return make_report("sensitivity.superposition", "the linearized map is additive", d, "<= 1e-10", d <= 1e-10);
}

CheckReport sensitivity_cost_fd(const HarnessConfig& cfg) {
  auto rng = rng_for(cfg, "sensitivity.cost_fd");
  Problem pb = gradient_problem(cfg, 63, 128);
  const SpaceTimeField u = gradient_control(pb);
  const StateTrajectory base = solve_state(pb.physics, *pb.B, u, pb.init, pb.solver);
  double worst = 0.0;
  for (int k = 0; k < 5; ++k) {
    const SpaceTimeField h = random_smooth_field(pb.grid, pb.time, rng);
    const LinearizedPair lin = solve_linearized(pb.physics, *pb.B, base, h);
    const double dj = cost_directional_derivative(base, lin, u, h, pb.targets, pb.betas);
    const double lam = 1e-4;
    const double fd = (evaluate(pb, u + lam * h).cost - evaluate(pb, u + (-lam) * h).cost) / (2 * lam);
    worst = std::max(worst, rel_diff(dj, fd));
  }
  return make_report("sensitivity.cost_fd", "cost derivative through (xi, eta) matches central differences", worst,
                     "<= 1e-4", worst <= 1e-4, "smooth potential, 1D reference, 5 directions");
}

CheckReport sensitivity_taylor(const HarnessConfig& cfg) {
  auto rng = rng_for(cfg, "sensitivity.taylor.dir");
  const auto f = sens_fixture(cfg, "sensitivity.taylor", Instance::reference_1d, Physics(smooth_potential()));
  const SpaceTimeField h = random_smooth_field(f.pb.grid, f.pb.time, rng);
  const TaylorTable tab =
      taylor_test(f.pb.physics, *f.pb.B, f.u, h, default_taylor_ladder(), f.pb.init, f.pb.solver);
  bool ok = !tab.degenerate && tab.strictly_decreasing();
  std::string detail = "r";
  for (double r : tab.remainder) detail += " " + fmt(r);
  detail += "; ratios";
  double worst = 2.0;
  for (double r : tab.ratios) {
    ok = ok && r >= 1.5 && r <= 3.0;
    if (std::abs(r - 2.0) > std::abs(worst - 2.0)) worst = r;
    detail += " " + fmt(r);
  }
  detail += "; scheme consistency " + fmt(tab.scheme_consistency);
  return make_report("sensitivity.taylor", "Taylor remainder of the control-to-state map is O(lambda^2)", worst,
                     "r strictly decreasing, every ratio in [1.5, 3.0]", ok, detail);
}

struct AdjFixture {
  Problem pb;
  SpaceTimeField u;
  StateTrajectory base;
};

AdjFixture adj_fixture(const HarnessConfig& cfg, const std::string& name, Instance which) {
  auto rng = rng_for(cfg, name);
  AdjFixture f{base_problem(which, Physics(cfg.potential), cfg, cfg.kernel), {}, {}};
  f.u = random_feasible_control(f.pb.grid, f.pb.time, 2.0, rng);
  f.pb.targets = {f.pb.zero_field(), f.pb.zero_field()};
  f.pb.targets.rho.values.setConstant(0.5);
  f.pb.targets.mu.values.setConstant(0.3);
  f.pb.betas = {1.0, 0.7, 0.0};
  f.base = solve_state(f.pb.physics, *f.pb.B, f.u, f.pb.init, f.pb.solver);
  return f;
}

double worst_duality(const AdjFixture& f, int directions, std::mt19937_64& rng) {
  const AdjointPair adj = solve_adjoint(f.pb.physics, *f.pb.B, f.base, f.pb.targets, f.pb.betas);
  double worst = 0.0;
  for (int k = 0; k < directions; ++k) {
    const SpaceTimeField h = random_field(f.pb.grid, f.pb.time, rng);
    worst = std::max(worst, adjoint_duality(f.pb.physics, *f.pb.B, f.base, adj, h, f.pb.targets, f.pb.betas).relative);
  }
  return worst;
}

CheckReport adjoint_duality_check(const HarnessConfig& cfg) {
  auto rng = rng_for(cfg, "adjoint.duality.dirs");
  const double coarse = worst_duality(adj_fixture(cfg, "adjoint.duality", Instance::oracle), 10, rng);
  // One simultaneous refinement in space and time.
  auto fine_fixture = [&] {
    auto r = rng_for(cfg, "adjoint.duality.fine");
    GridSpec gs = instance_grid(Instance::oracle);
    gs.cells[0] = 2 * gs.cells[0] + 1;
    AdjFixture f{base_problem(Instance::oracle, Physics(cfg.potential), cfg, cfg.kernel), {}, {}};
    f.pb.grid = build_grid(gs);
    f.pb.time = TimeAxis{instance_time(Instance::oracle).T, 2 * instance_time(Instance::oracle).steps};
    f.pb.B = operator_for(cfg, f.pb.grid, cfg.kernel);
    f.pb.init = default_initial_data(f.pb.grid);
    f.u = random_feasible_control(f.pb.grid, f.pb.time, 2.0, r);
    f.pb.targets = {f.pb.zero_field(), f.pb.zero_field()};
    f.pb.targets.rho.values.setConstant(0.5);
    f.pb.targets.mu.values.setConstant(0.3);
    f.pb.betas = {1.0, 0.7, 0.0};
    f.base = solve_state(f.pb.physics, *f.pb.B, f.u, f.pb.init, f.pb.solver);
    return f;
  };
  const double fine = worst_duality(fine_fixture(), 10, rng);
  const double worst = std::max(coarse, fine);
  return make_report("adjoint.duality",
                     "tracking derivative along (xi, eta) equals the adjoint pairing with the direction", worst,
                     "<= 1e-8 at 8x16 and 16x32 (dual-consistent adjoint)", worst <= 1e-8,
                     "coarse " + fmt(coarse) + ", refined " + fmt(fine));
}

CheckReport adjoint_gradient_fd(const HarnessConfig& cfg) {
  const Problem coarse_pb = gradient_problem(cfg, 7, 16);
  const Problem fine_pb = gradient_problem(cfg, 15, 32);
  // Same direction coefficients on both resolutions.
  auto run = [&](const Problem& pb, AdjointScheme scheme) {
    auto rng = rng_for(cfg, "adjoint.gradient_fd");
    return gradient_check(pb, gradient_control(pb), 10, rng, scheme);
  };
  const GradCheck coarse = run(coarse_pb, AdjointScheme::dual_consistent);
  const GradCheck fine = run(fine_pb, AdjointScheme::dual_consistent);
  const GradCheck be_coarse = run(coarse_pb, AdjointScheme::backward_euler);
  const GradCheck be_fine = run(fine_pb, AdjointScheme::backward_euler);
  const double shrink = coarse.max_err / fine.max_err;
  const bool ok = coarse.max_err <= 1e-3 && shrink >= 2.0;
  return make_report("adjoint.gradient_fd", "<p + beta_u u, h> matches central differences of J", coarse.max_err,
                     "<= 1e-3 at 8x16; error shrinks >= 2x at 16x32", ok,
                     "8x16 " + fmt(coarse.max_err) + " (Richardson " + fmt(coarse.richardson) + "), 16x32 " +
                         fmt(fine.max_err) + ", shrink " + fmt(shrink) + "; backward Euler adjoint 8x16 " +
                         fmt(be_coarse.max_err) + ", 16x32 " + fmt(be_fine.max_err) + ", shrink " +
                         fmt(be_coarse.max_err / be_fine.max_err));
}

CheckReport adjoint_homogeneity(const HarnessConfig& cfg) {
  const auto f = adj_fixture(cfg, "adjoint.homogeneity", Instance::oracle);
  const AdjointPair a = solve_adjoint(f.pb.physics, *f.pb.B, f.base, f.pb.targets, f.pb.betas);
  Betas twice = f.pb.betas;
  twice.rho *= 2;
  twice.mu *= 2;
  const AdjointPair b = solve_adjoint(f.pb.physics, *f.pb.B, f.base, f.pb.targets, twice);
  const double d = std::max(max_abs(b.p.values - 2.0 * a.p.values), max_abs(b.q.values - 2.0 * a.q.values)) /
                   std::max(max_abs(a.p.values), max_abs(a.q.values));
  return make_report("adjoint.homogeneity", "adjoint states are linear in the tracking weights", d, "<= 1e-14",
                     d <= 1e-14);
}

CheckReport adjoint_terminal(const HarnessConfig& cfg) {
  const auto f = adj_fixture(cfg, "adjoint.terminal", Instance::oracle);
  const int N = f.pb.time.steps;
  const AdjointPair a = solve_adjoint(f.pb.physics, *f.pb.B, f.base, f.pb.targets, f.pb.betas);
  double m = std::max(a.p.values.row(N).cwiseAbs().maxCoeff(), a.q.values.row(N).cwiseAbs().maxCoeff());
  // Zero right-hand sides: targets on the trajectory, or no tracking terms.
  const AdjointPair z1 = solve_adjoint(f.pb.physics, *f.pb.B, f.base, Targets{f.base.rho, f.base.mu}, f.pb.betas);
  const AdjointPair z2 = solve_adjoint(f.pb.physics, *f.pb.B, f.base, f.pb.targets, Betas{0.0, 0.0, 1.0});
  for (const auto* z : {&z1, &z2}) m = std::max({m, max_abs(z->p.values), max_abs(z->q.values)});
  return make_report("adjoint.terminal",
                     "p(T) = q(T) = 0, and zero tracking residuals give zero adjoint states", m, "== 0", m == 0.0);
}

double h1_distance(const SpaceTimeField& a, const SpaceTimeField& b) { return norm_h1_time(a - b); }

ControlConstraints random_constraints(const GridPtr& grid, const TimeAxis& time, std::mt19937_64& rng,
                                      bool ball_active) {
  std::uniform_real_distribution<double> unif(0.5, 2.0);
  ControlConstraints c{SpaceTimeField(grid, time), 1e6};
  const SpaceTimeField s = random_smooth_field(grid, time, rng);
  c.u_max.values = (1.25 + 0.75 * s.values.array()).matrix();
  c.R = ball_active ? 0.5 * unif(rng) * norm_h1_time(c.u_max) : 1e6;
  return c;
}

CheckReport optimizer_projection_oracle(const HarnessConfig& cfg) {
  auto rng = rng_for(cfg, "optimizer.projection_oracle");
  GridSpec gs;
  gs.dim = 1;
  gs.cells = {2, 1};
  const auto grid = build_grid(gs);
  const TimeAxis time{1.0, 3};
  const TimeMetric metric(time);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst = 0.0;
  int ball_binding = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Vec z(time.steps + 1), hi(time.steps + 1);
    for (int n = 0; n <= time.steps; ++n) {
      z[n] = -1.0 + 4.0 * unif(rng);
      hi[n] = 0.5 + 1.5 * unif(rng);
    }
    const double R = 0.2 + 2.0 * unif(rng);
    SpaceTimeField zf(grid, time), hf(grid, time);
    for (int i = 0; i < grid->node_count(); ++i) {
      zf.values.col(i) = z;
      hf.values.col(i) = hi;
    }
    const ControlConstraints cons{hf, R};
    const SpaceTimeField p = project_Uad(zf, cons);
    const Vec oracle = projection_kkt_oracle(metric, grid->volume(), z, hi, R);
    if (norm_h1_time(p) > R * (1 - 1e-9)) ++ball_binding;
    for (int i = 0; i < grid->node_count(); ++i) {
      worst = std::max(worst, (p.values.col(i) - oracle).cwiseAbs().maxCoeff());
    }
  }
  return make_report("optimizer.projection_oracle", "Dykstra projection onto U_ad matches brute-force KKT enumeration",
                     worst, "<= 1e-8", worst <= 1e-8,
                     "50 inputs, 3 steps, one spatially constant node; ball binding in " +
                         std::to_string(ball_binding));
}

CheckReport optimizer_projection_idempotent(const HarnessConfig& cfg) {
  auto rng = rng_for(cfg, "optimizer.projection_idempotent");
  const auto grid = build_grid(instance_grid(Instance::oracle));
  const TimeAxis time = instance_time(Instance::oracle);
  const ProjectionConfig pc;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const ControlConstraints cons = random_constraints(grid, time, rng, trial % 2 == 0);
    const SpaceTimeField u = 3.0 * random_field(grid, time, rng);
    const SpaceTimeField p = project_Uad(u, cons, pc);
    worst = std::max(worst, h1_distance(project_Uad(p, cons, pc), p));
  }
  return make_report("optimizer.projection_idempotent", "P(P(u)) = P(u)", worst, "<= 2 proj_tol",
                     worst <= 2.0 * pc.proj_tol, "100 inputs, half with the ball binding");
}

CheckReport optimizer_projection_nonexpansive(const HarnessConfig& cfg) {
  auto rng = rng_for(cfg, "optimizer.projection_nonexpansive");
  const auto grid = build_grid(instance_grid(Instance::oracle));
  const TimeAxis time = instance_time(Instance::oracle);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const ControlConstraints cons = random_constraints(grid, time, rng, trial % 2 == 0);
    const SpaceTimeField u = 3.0 * random_field(grid, time, rng), v = 3.0 * random_field(grid, time, rng);
    worst = std::max(worst, h1_distance(project_Uad(u, cons), project_Uad(v, cons)) / h1_distance(u, v));
  }
  return make_report("optimizer.projection_nonexpansive", "||P u - P v|| <= ||u - v|| in H1(0,T;L2)", worst,
                     "<= 1 + 1e-10", worst <= 1.0 + 1e-10, "100 pairs, half with the ball binding");
}

bool feasible_history(const std::vector<SpaceTimeField>& iterates, const ControlConstraints& cons, double& worst_box,
                      double& worst_ball) {
  worst_box = 0.0;
  worst_ball = 0.0;
  bool ok = true;
  for (const auto& u : iterates) {
    const double lo = (-u.values).maxCoeff();
    const double hi = (u.values - cons.u_max.values).maxCoeff();
    worst_box = std::max({worst_box, lo, hi});
    worst_ball = std::max(worst_ball, norm_h1_time(u) / cons.R - 1.0);
    ok = ok && is_admissible(u, cons);
  }
  return ok;
}

bool strictly_decreasing(const std::vector<double>& c) {
  for (std::size_t k = 1; k < c.size(); ++k)
    if (!(c[k] < c[k - 1])) return false;
  return true;
}

CheckReport optimizer_tracking(const HarnessConfig& cfg) {
  const auto grid = build_grid(instance_grid(Instance::reference_1d));
  const TimeAxis time = instance_time(Instance::reference_1d);
  const Manufactured m = manufacture_problem(ManufactureKind::tracking, grid, time, Physics(cfg.potential),
                                             operator_for(cfg, grid, cfg.kernel), cfg.seed);
  OptimizerConfig oc;
  oc.max_iters = 500;
  oc.keep_every = 1;
  const OptRun run = projected_gradient(m.problem, m.problem.zero_field(), oc);
  const auto c = run.cost_history();
  const double reduction = c.front() / std::max(c.back(), std::numeric_limits<double>::min());
  double box = 0.0, ball = 0.0;
  const bool feasible = feasible_history(run.iterates, m.problem.constraints, box, ball);
  const bool mono = strictly_decreasing(c);
  return make_report("optimizer.tracking", "projected gradient drives the manufactured tracking cost to zero",
                     reduction, ">= 1e6 reduction within 500 iterations, strictly decreasing, feasible iterates",
                     reduction >= 1e6 && mono && feasible,
                     "iterations " + std::to_string(c.size() - 1) + ", J0 " + fmt(c.front()) + ", J " +
                         fmt(c.back()) + ", exit " + to_string(run.exit_reason) + ", strictly decreasing " +
                         (mono ? "yes" : "no") + ", box violation " + fmt(box) + ", ball excess " + fmt(ball));
}

CheckReport optimizer_ball_active(const HarnessConfig& cfg) {
  const auto grid = build_grid(instance_grid(Instance::oracle));
  const TimeAxis time = instance_time(Instance::oracle);
  Manufactured m = manufacture_problem(ManufactureKind::ball_active, grid, time, Physics(cfg.potential),
                                       operator_for(cfg, grid, cfg.kernel), cfg.seed);
  m.problem.betas.control = 1e-2;
  OptimizerConfig oc;
  oc.max_iters = 500;
  oc.keep_every = 1;
  oc.stat_tol = 1e-12;
  const OptRun run = projected_gradient(m.problem, m.problem.zero_field(), oc);
  double box = 0.0, ball = 0.0;
  const bool feasible = feasible_history(run.iterates, m.problem.constraints, box, ball);
  const bool mono = strictly_decreasing(run.cost_history());
  const VariationalSample vi = sample_variational_inequality(run.final_control, run.final_gradient,
                                                             m.problem.constraints, 1000, cfg.seed);
  const bool on_ball = norm_h1_time(run.final_control) >= m.problem.constraints.R * (1.0 - 1e-6);
  return make_report("optimizer.variational_inequality",
                     "at the returned control <p + beta_u u, v - u> >= 0 for sampled feasible v", vi.worst,
                     ">= -1e-6 (normalized); iterates feasible and strictly decreasing",
                     vi.worst >= -1e-6 && feasible && mono,
                     "ball-active problem, 1000 samples; final stationarity " +
                         fmt(run.history.back().stationarity) + ", ball " + (on_ball ? "active" : "inactive") +
                         ", box violation " + fmt(box) + ", ball excess " + fmt(ball) + ", exit " +
                         to_string(run.exit_reason));
}

const std::map<std::string, CheckDef>& registry() {
  static const std::map<std::string, CheckDef> r{
      {"grid.weights_sum", {Suite::operators, grid_weights_sum}},
      {"grid.laplacian_symmetry", {Suite::operators, grid_laplacian_symmetry}},
      {"grid.laplacian_column_sums", {Suite::operators, grid_laplacian_column_sums}},
      {"grid.quadrature_exactness", {Suite::operators, grid_quadrature_exactness}},
      {"grid.laplacian_order", {Suite::operators, grid_laplacian_order}},
      {"nonlocal.causality", {Suite::operators, nonlocal_causality}},
      {"nonlocal.lipschitz", {Suite::operators, nonlocal_lipschitz}},
      {"nonlocal.duality", {Suite::operators, nonlocal_duality}},
      {"nonlocal.symmetric_adjoint", {Suite::operators, nonlocal_symmetric_adjoint}},
      {"nonlocal.linearity", {Suite::operators, nonlocal_linearity}},
      {"physics.derivative_consistency", {Suite::operators, physics_derivative_consistency}},
      {"physics.f1_monotone", {Suite::operators, physics_f1_monotone}},
      {"physics.clamp_transparency", {Suite::operators, physics_clamp_transparency}},
      {"physics.audit", {Suite::operators, physics_audit}},
      {"state.max_principle", {Suite::state, state_max_principle}},
      {"state.residual", {Suite::state, state_residual_check}},
      {"state.neumann_compatibility", {Suite::state, state_neumann_compatibility}},
      {"state.time_order", {Suite::state, state_time_order}},
      {"state.determinism", {Suite::state, state_determinism}},
      {"state.stability", {Suite::state, state_stability}},
      {"sensitivity.homogeneous", {Suite::sensitivity, sensitivity_homogeneous}},
      {"sensitivity.superposition", {Suite::sensitivity, sensitivity_superposition}},
      {"sensitivity.cost_fd", {Suite::sensitivity, sensitivity_cost_fd}},
      {"sensitivity.taylor", {Suite::sensitivity, sensitivity_taylor}},
      {"adjoint.duality", {Suite::adjoint, adjoint_duality_check}},
      {"adjoint.gradient_fd", {Suite::adjoint, adjoint_gradient_fd}},
      {"adjoint.homogeneity", {Suite::adjoint, adjoint_homogeneity}},
      {"adjoint.terminal", {Suite::adjoint, adjoint_terminal}},
      {"optimizer.projection_oracle", {Suite::optimizer, optimizer_projection_oracle}},
      {"optimizer.projection_idempotent", {Suite::optimizer, optimizer_projection_idempotent}},
      {"optimizer.projection_nonexpansive", {Suite::optimizer, optimizer_projection_nonexpansive}},
      {"optimizer.tracking", {Suite::optimizer, optimizer_tracking}},
      {"optimizer.variational_inequality", {Suite::optimizer, optimizer_ball_active}},
  };
  return r;
}

class WrongAdjointOperator final : public NonlocalOperator {
 public:
  WrongAdjointOperator(GridPtr grid, const KernelSpec& spec) : inner_(std::move(grid), spec) {}
  SpaceTimeField apply(const SpaceTimeField& v) const override { return inner_.apply(v); }
  SpaceTimeField apply_derivative(const SpaceTimeField& base, const SpaceTimeField& w) const override {
    return inner_.apply_derivative(base, w);
  }
  SpaceTimeField apply_derivative_adjoint(const SpaceTimeField& base, const SpaceTimeField& q) const override {
    SpaceTimeField out(q.grid, q.time);
    for (int n = 0; n < q.levels(); ++n) out.slice(n) = apply_derivative_adjoint_slice(base, q, n).transpose();
    return out;
  }
  Vec apply_slice(const SpaceTimeField& v, int n) const override { return inner_.apply_slice(v, n); }
  Vec apply_derivative_slice(const SpaceTimeField& base, const SpaceTimeField& w, int n) const override {
    return inner_.apply_derivative_slice(base, w, n);
  }
  Vec apply_derivative_adjoint_slice(const SpaceTimeField&, const SpaceTimeField& q, int n) const override {
    if (inner_.spec().kind == KernelKind::zero) return Vec::Zero(q.nodes());
    Vec acc = q.slice(n).transpose();
    if (inner_.spec().kind == KernelKind::time_history) {
      acc.setZero();
      for (int m = n; m < q.levels(); ++m) acc += inner_.spec().time_factor(q.time.time(m) - q.time.time(n)) *
                                                 q.time.tau() * q.slice(m).transpose();
    }
    return inner_.weight_matrix().transpose() * acc;
  }

 private:
  KernelOperator inner_;
};

}  // namespace

GridSpec instance_grid(Instance which) {
  GridSpec s;
  switch (which) {
    case Instance::reference_1d:
      s.dim = 1;
      s.cells = {63, 1};
      break;
    case Instance::reference_2d:
      s.dim = 2;
      s.cells = {15, 15};
      break;
    case Instance::oracle:
      s.dim = 1;
      s.cells = {7, 1};
      break;
  }
  return s;
}

TimeAxis instance_time(Instance which) {
  switch (which) {
    case Instance::reference_1d: return TimeAxis{1.0, 128};
    case Instance::reference_2d: return TimeAxis{1.0, 64};
    case Instance::oracle: return TimeAxis{1.0, 16};
  }
  return {};
}

InitialData default_initial_data(const GridPtr& grid) {
  const int M = grid->node_count();
  Vec r(M), m(M);
  const double lx = grid->spec().lengths[0], ly = grid->spec().lengths[1];
  for (int i = 0; i < M; ++i) {
    const double x = grid->coord(i, 0) / lx;
    double cy = 1.0;
    if (grid->dim() == 2) cy = std::cos(kPi * grid->coord(i, 1) / ly);
    r[i] = 0.5 + 0.2 * std::cos(kPi * x) * cy;
    m[i] = 0.2 + 0.1 * std::cos(2.0 * kPi * x);
  }
  return {ScalarField(grid, r), ScalarField(grid, m)};
}

KernelSpec default_kernel() {
  KernelSpec k;
  k.kind = KernelKind::spatial_convolution;
  k.radial.type = RadialType::gaussian;
  k.radial.amplitude = 0.5;
  k.radial.sigma = 0.1;
  return k;
}

SpaceTimeField random_smooth_field(const GridPtr& grid, const TimeAxis& time, std::mt19937_64& rng, int modes) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const int M = grid->node_count();
  SpaceTimeField f(grid, time);
  double total = 0.0;
  for (int k = 0; k < modes; ++k) {
    const double amp = unif(rng), slope = unif(rng);
    const int kx = k, ky = grid->dim() == 2 ? static_cast<int>(rng() % 3) : 0;
    total += std::abs(amp) * (1.0 + std::abs(slope));
    for (int n = 0; n <= time.steps; ++n) {
      const double s = time.time(n) / time.T;
      for (int i = 0; i < M; ++i) {
        double v = std::cos(kx * kPi * grid->coord(i, 0) / grid->spec().lengths[0]);
        if (grid->dim() == 2) v *= std::cos(ky * kPi * grid->coord(i, 1) / grid->spec().lengths[1]);
        f.values(n, i) += amp * (1.0 + slope * s) * v;
      }
    }
  }
  if (total > 0.0) f.values /= total;
  return f;
}

SpaceTimeField random_feasible_control(const GridPtr& grid, const TimeAxis& time, double u_max,
                                       std::mt19937_64& rng) {
  SpaceTimeField f = random_smooth_field(grid, time, rng);
  f.values = (u_max * (0.5 + 0.3 * f.values.array())).matrix();
  return f;
}

ManufactureKind parse_manufacture_kind(const std::string& s) {
  if (s == "steady") return ManufactureKind::steady;
  if (s == "tracking") return ManufactureKind::tracking;
  if (s == "ball_active") return ManufactureKind::ball_active;
  throw std::invalid_argument("unknown problem kind '" + s + "'");
}

std::string to_string(ManufactureKind k) {
  switch (k) {
    case ManufactureKind::steady: return "steady";
    case ManufactureKind::tracking: return "tracking";
    case ManufactureKind::ball_active: return "ball_active";
  }
  return "unknown";
}

Manufactured manufacture_problem(ManufactureKind kind, const GridPtr& grid, const TimeAxis& time,
                                 const Physics& physics, std::shared_ptr<const NonlocalOperator> B,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ fnv1a("manufacture_problem"));
  Manufactured m;
  Problem& pb = m.problem;
  pb.grid = grid;
  pb.time = time;
  pb.physics = physics;
  pb.B = std::move(B);
  pb.init = default_initial_data(grid);
  pb.betas = {1.0, 1.0, 0.0};
  pb.constraints = {constant_field(grid, time, 2.0), 1e6};

  if (kind == ManufactureKind::steady) {
    PotentialSpec s = physics.spec();
    s.g.kind = CouplingKind::constant;
    s.g.g0 = Physics(physics.spec()).g(0.5);
    pb.physics = Physics(s);
    KernelSpec zero;
    zero.kind = KernelKind::zero;
    pb.B = make_operator(grid, zero);
    const int M = grid->node_count();
    pb.init = {ScalarField(grid, Vec::Constant(M, 0.5)), ScalarField(grid, Vec::Constant(M, 0.3))};
    pb.targets = {constant_field(grid, time, 0.5), constant_field(grid, time, 0.3)};
    m.u_star = pb.zero_field();
    return m;
  }

  m.u_star = random_feasible_control(grid, time, 2.0, rng);
  const StateTrajectory tr = solve_state(pb.physics, *pb.B, m.u_star, pb.init, pb.solver);
  pb.targets = {tr.rho, tr.mu};
  const double norm = norm_h1_time(m.u_star);
  pb.constraints.R = kind == ManufactureKind::ball_active ? norm / 1.2 : 10.0 * norm;
  return m;
}

Suite parse_suite(const std::string& s) {
  if (s == "operators") return Suite::operators;
  if (s == "state") return Suite::state;
  if (s == "sensitivity") return Suite::sensitivity;
  if (s == "adjoint") return Suite::adjoint;
  if (s == "optimizer") return Suite::optimizer;
  if (s == "all") return Suite::all;
  throw std::invalid_argument("unknown suite '" + s + "'");
}

std::string to_string(Suite s) {
  switch (s) {
    case Suite::operators: return "operators";
    case Suite::state: return "state";
    case Suite::sensitivity: return "sensitivity";
    case Suite::adjoint: return "adjoint";
    case Suite::optimizer: return "optimizer";
    case Suite::all: return "all";
  }
  return "unknown";
}

std::vector<std::string> suite_checks(Suite suite) {
  std::vector<std::string> out;
  for (const auto& [name, def] : registry()) {
    if (suite == Suite::all || def.suite == suite) out.push_back(name);
  }
  return out;
}

CheckReport run_check(const std::string& name, const HarnessConfig& cfg) {
  const auto& reg = registry();
  const auto it = reg.find(name);
  if (it == reg.end()) throw std::invalid_argument("unknown check '" + name + "'");
  const auto t0 = std::chrono::steady_clock::now();
  CheckReport r;
  try {
    r = it->second.fn(cfg);
  } catch (const std::exception& e) {
    // Solver failures inside a check are results, not aborts.
    r = make_report(name, "", std::numeric_limits<double>::quiet_NaN(), "-", false,
                    std::string("exception: ") + e.what());
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  spdlog::info("{} {} measured={} ({:.2f}s)", r.pass ? "PASS" : "FAIL", r.name, r.measured, r.seconds);
  return r;
}

std::vector<CheckReport> run_suite(Suite suite, const HarnessConfig& cfg) {
  validate_kernel(cfg.kernel, 1);
  Physics validate(cfg.potential);
  (void)validate;
  std::vector<CheckReport> out;
  for (const auto& name : suite_checks(suite)) out.push_back(run_check(name, cfg));
  return out;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_reports_csv(std::ostream& os, const std::vector<CheckReport>& reports, std::uint64_t seed) {
  os << "name,claim,measured,threshold,pass,seconds,seed,detail\n";
  os << std::setprecision(17);
  for (const auto& r : reports) {
    os << csv_escape(r.name) << ',' << csv_escape(r.claim) << ',' << r.measured << ',' << csv_escape(r.threshold)
       << ',' << (r.pass ? "true" : "false") << ',' << r.seconds << ',' << seed << ',' << csv_escape(r.detail)
       << '\n';
  }
}

void write_reports_text(std::ostream& os, const std::vector<CheckReport>& reports, std::uint64_t seed) {
  int passed = 0;
  for (const auto& r : reports) passed += r.pass ? 1 : 0;
  os << "seed " << seed << ": " << passed << "/" << reports.size() << " checks passed\n";
  for (const auto& r : reports) {
    os << (r.pass ? "PASS " : "FAIL ") << std::left << std::setw(36) << r.name << " measured "
       << std::setprecision(6) << r.measured << "  threshold " << r.threshold << "  (" << std::setprecision(3)
       << r.seconds << " s)\n";
    os << "     " << r.claim << "\n";
    if (!r.detail.empty()) os << "     " << r.detail << "\n";
  }
}

std::shared_ptr<const NonlocalOperator> make_wrong_adjoint_operator(GridPtr grid, const KernelSpec& spec) {
  return std::make_shared<WrongAdjointOperator>(std::move(grid), spec);
}

Vec projection_kkt_oracle(const TimeMetric& metric, double volume, const Vec& z, const Vec& hi, double R) {
  const int L = static_cast<int>(z.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(L, L);
  for (int k = 0; k < L; ++k) A(k, k) = volume * metric.diag[k];
  for (int k = 0; k + 1 < L; ++k) A(k, k + 1) = A(k + 1, k) = volume * metric.off[k];
  const Vec Az = A * z;
  const double tol = 1e-10;

  Vec best;
  double best_obj = std::numeric_limits<double>::infinity();
  int cases = 1;
  for (int k = 0; k < L; ++k) cases *= 3;
  for (int code = 0; code < cases; ++code) {
    std::vector<int> state(L);  // 0 lower, 1 upper, 2 free
    std::vector<int> free_idx;
    Vec v = Vec::Zero(L);
    for (int k = 0, c = code; k < L; ++k, c /= 3) {
      state[k] = c % 3;
      if (state[k] == 1) v[k] = hi[k];
      if (state[k] == 2) free_idx.push_back(k);
    }
    const int F = static_cast<int>(free_idx.size());
    Eigen::MatrixXd AFF(F, F);
    Vec bF(F);
    for (int a = 0; a < F; ++a) {
      for (int b = 0; b < F; ++b) AFF(a, b) = A(free_idx[a], free_idx[b]);
    }
    const Vec Av_bound = A * v;  // contributions of the bound levels
    auto solve_free = [&](double lam) {
      Vec out = v;
      for (int a = 0; a < F; ++a) bF[a] = Az[free_idx[a]] / (1.0 + lam) - Av_bound[free_idx[a]];
      const Vec x = F > 0 ? Vec(AFF.ldlt().solve(bF)) : Vec();
      for (int a = 0; a < F; ++a) out[free_idx[a]] = x[a];
      return out;
    };
    for (int ball = 0; ball < 2; ++ball) {
      double lam = 0.0;
      Vec cand = solve_free(0.0);
      if (ball == 1) {
        if (F == 0) continue;
        // ||v(lam)||_A decreases as lam grows; bracket and bisect.
        auto excess = [&](double l) {
          const Vec c = solve_free(l);
          return c.dot(A * c) - R * R;
        };
        if (excess(0.0) <= 0.0) continue;
        double lo = 0.0, up = 1.0;
        int guard = 0;
        while (excess(up) > 0.0 && guard++ < 200) up *= 2.0;
        if (excess(up) > 0.0) continue;
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (lo + up);
          (excess(mid) > 0.0 ? lo : up) = mid;
        }
        lam = up;
        cand = solve_free(lam);
      }
      // Feasibility.
      bool ok = cand.dot(A * cand) <= R * R * (1.0 + tol);
      for (int k = 0; k < L && ok; ++k) ok = cand[k] >= -tol && cand[k] <= hi[k] + tol;
      // Sign conditions on the bound multipliers.
      const Vec grad = A * (cand - z) + lam * (A * cand);
      for (int k = 0; k < L && ok; ++k) {
        if (state[k] == 0) ok = grad[k] >= -tol;
        if (state[k] == 1) ok = grad[k] <= tol;
      }
      if (!ok) continue;
      const double obj = (cand - z).dot(A * (cand - z));
      if (obj < best_obj) {
        best_obj = obj;
        best = cand;
      }
    }
  }
  if (best.size() == 0) throw std::runtime_error("projection_kkt_oracle: no KKT point found");
  return best;
}

}  // namespace npc
