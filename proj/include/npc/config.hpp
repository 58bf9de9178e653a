#pragma once

#include "npc/expr.hpp"
#include "npc/harness.hpp"
#include "npc/optimizer.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace npc {

/// Configuration error tied to a dotted field path ("betas.rho") and, for
/// JSON syntax errors, a 1-based line (0 when unknown).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message, int line = 0);
  std::string field;
  int line;
};

/// A field given inline as an expression in (x, y, t) or read from a field
/// CSV file (column `column`, default the field's own name).
struct FieldSource {
  FieldExpr expr;
  std::string file;
  std::string column;

  bool from_file() const { return !file.empty(); }
  bool operator==(const FieldSource&) const = default;
};

struct TargetSpec {
  /// When set, the targets are the state of a manufactured control and the
  /// initial data, constraints and (for steady) physics come from
  /// manufacture_problem; rho/mu are ignored.
  std::optional<ManufactureKind> manufactured;
  FieldSource rho;
  FieldSource mu;

  bool operator==(const TargetSpec&) const = default;
};

/// In-memory form of a run config. JSON schema (all sections optional except
/// betas; omitted fields take the defaults below):
///
///   grid        {dim, lengths[dim], cells[dim]}
///   time        {T, steps}
///   potential   {c_hat, singular: logarithmic|none, f2[], safeguard_eps,
///                g: {kind: constant|affine|smooth_concave, g0, g1, a, b}}
///   kernel      {kind: spatial_convolution|time_history|zero,
///                radial: {type: gaussian|truncated_power, amplitude, sigma, alpha, r_min},
///                time_profile: constant|exponential, time_amplitude, decay}
///   betas       {rho, mu, control}                       (required, each field)
///   initial     {rho0: expr, mu0: expr}
///   targets     {manufactured: steady|tracking|ball_active}
///               or {rho: expr | {file, column}, mu: expr | {file, column}}
///   control     expr (initial control)
///   constraints {u_max: expr, R}
///   solver      {newton_tol, max_newton_iters, max_halvings, sign_tol}
///   optimizer   {max_iters, stat_tol, initial_step, step_rule: fixed|barzilai_borwein,
///                max_step, backtrack, sufficient_decrease, s_min, keep_every,
///                projection: {metric: h1_time|l2_clip_scale_inexact,
///                             obstacle: active_set|projected_gauss_seidel,
///                             proj_tol, max_dykstra_iters, obstacle_tol, max_obstacle_iters}}
///   seed, output, threads
///
/// Unknown keys are rejected. Relative file paths resolve against the
/// config file's directory.
struct RunConfig {
  GridSpec grid{1, {1.0, 1.0}, {63, 1}};
  TimeAxis time{1.0, 128};
  PotentialSpec potential = default_potential();
  KernelSpec kernel = default_kernel();
  Betas betas;
  FieldExpr rho0 = FieldExpr::parse("0.5 + 0.2*cos(pi*x)");
  FieldExpr mu0 = FieldExpr::parse("0.2 + 0.1*cos(2*pi*x)");
  TargetSpec targets;
  FieldExpr control;
  FieldExpr u_max = FieldExpr::constant(2.0);
  double R = 10.0;
  SolverConfig solver;
  OptimizerConfig optimizer;
  std::uint64_t seed = 20261019;
  std::string output = "out";
  int threads = 1;
  /// Directory used to resolve relative target files; not serialized.
  std::string base_dir = ".";

  bool operator==(const RunConfig& o) const;
};

RunConfig parse_config(const std::string& json_text, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);
/// Emits every field, so parse_config(to_json_string(c)) == c.
std::string to_json_string(const RunConfig& cfg);

/// Problem plus the initial control described by a config.
struct BuiltProblem {
  Problem problem;
  SpaceTimeField u0;
};

/// Evaluates expressions, reads target files and re-validates every module
/// invariant; failures surface as ConfigError.
BuiltProblem build_problem(const RunConfig& cfg);

HarnessConfig harness_config(const RunConfig& cfg);

SpaceTimeField sample_field(const FieldExpr& e, const GridPtr& grid, const TimeAxis& time);
ScalarField sample_field(const FieldExpr& e, const GridPtr& grid, double t = 0.0);

/// Field CSV: header "n,i,t,x,y,<names>", one row per (time index, node
/// index) with n slowest, values with 17 significant digits.
void write_fields_csv(std::ostream& os, const std::vector<std::string>& names,
                      const std::vector<const SpaceTimeField*>& fields);

/// Reads the named column of a field CSV onto the given grid and time axis.
/// Throws std::runtime_error unless every (n, i) pair appears exactly once.
SpaceTimeField read_field_csv(std::istream& is, const std::string& column, const GridPtr& grid,
                              const TimeAxis& time);

}  // namespace npc
