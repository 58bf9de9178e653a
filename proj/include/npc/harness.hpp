#pragma once

#include "npc/optimizer.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace npc {

/// Desk-scale instances: 1D 64 nodes x 128 steps, 2D 16x16 nodes x 64 steps,
/// and the 8-node x 16-step oracle instance.
enum class Instance { reference_1d, reference_2d, oracle };
GridSpec instance_grid(Instance which);
TimeAxis instance_time(Instance which);

/// rho0 = 0.5 + 0.2 cos(pi x / Lx) [cos(pi y / Ly)], mu0 = 0.2 + 0.1 cos(2 pi x / Lx).
InitialData default_initial_data(const GridPtr& grid);
KernelSpec default_kernel();

/// Smooth random field with values in [-1, 1]: a normalized sum of a few
/// cosine modes in space with random affine time profiles.
SpaceTimeField random_smooth_field(const GridPtr& grid, const TimeAxis& time, std::mt19937_64& rng, int modes = 4);

/// Random control in [0.2, 0.8] * u_max (strictly inside the box).
SpaceTimeField random_feasible_control(const GridPtr& grid, const TimeAxis& time, double u_max, std::mt19937_64& rng);

enum class ManufactureKind { steady, tracking, ball_active };
ManufactureKind parse_manufacture_kind(const std::string& s);
std::string to_string(ManufactureKind k);

struct Manufactured {
  Problem problem;
  /// Known control: the minimizer for tracking (beta_u = 0), the steady
  /// control 0 for steady, and the ball-violating control for ball_active.
  SpaceTimeField u_star;
};

/// steady: constant coupling g = g(1/2), zero kernel, rho0 = 1/2 (a root of
/// F' for the symmetric potentials), constant mu0, targets equal to that
/// constant state. tracking: targets are the state of a random feasible u*,
/// betas (1, 1, 0), R inactive. ball_active: tracking with R chosen so that
/// ||u*||_{H^1(0,T;L^2)} = 1.2 R. Box bound u_max = 2 throughout.
Manufactured manufacture_problem(ManufactureKind kind, const GridPtr& grid, const TimeAxis& time,
                                 const Physics& physics, std::shared_ptr<const NonlocalOperator> B,
                                 std::uint64_t seed);

struct CheckReport {
  std::string name;
  std::string claim;  // the property certified
  double measured = 0.0;
  std::string threshold;
  bool pass = false;
  double seconds = 0.0;
  std::string detail;
};

enum class Suite { operators, state, sensitivity, adjoint, optimizer, all };
/// Throws std::invalid_argument for unknown names.
Suite parse_suite(const std::string& s);
std::string to_string(Suite s);

enum class Fault {
  none,
  /// DB^* replaced by the plain matrix transpose, ignoring the quadrature
  /// weights.
  wrong_adjoint_transpose,
};

struct HarnessConfig {
  std::uint64_t seed = 20261019;
  PotentialSpec potential = default_potential();
  KernelSpec kernel = default_kernel();
  Fault fault = Fault::none;
};

/// Runs a check battery. Checks never throw for numerical failures; they
/// report them. Results are sorted by check name.
std::vector<CheckReport> run_suite(Suite suite, const HarnessConfig& cfg);

/// Names of the checks belonging to a suite, sorted.
std::vector<std::string> suite_checks(Suite suite);

/// Runs a single named check. Throws std::invalid_argument for unknown names.
CheckReport run_check(const std::string& name, const HarnessConfig& cfg);

void write_reports_csv(std::ostream& os, const std::vector<CheckReport>& reports, std::uint64_t seed);
void write_reports_text(std::ostream& os, const std::vector<CheckReport>& reports, std::uint64_t seed);

/// Operator whose DB^* is deliberately the unweighted transpose; used for
/// fault injection.
std::shared_ptr<const NonlocalOperator> make_wrong_adjoint_operator(GridPtr grid, const KernelSpec& spec);

/// Brute-force projection of one spatially constant node onto
/// {lo <= v <= hi} cap {volume * v^T A v <= R^2} in the metric A (scaled by
/// volume): enumerates every assignment of levels to {lower, upper, free}
/// with the ball multiplier either zero or active and keeps the best KKT
/// point. Exponential in the level count; meant for a handful of levels.
Vec projection_kkt_oracle(const TimeMetric& metric, double volume, const Vec& z, const Vec& hi, double R);

}  // namespace npc
