#include "npc/config.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace npc {

using nlohmann::json;

ConfigError::ConfigError(std::string f, const std::string& message, int l)
    : std::runtime_error((l > 0 ? "line " + std::to_string(l) + ": " : std::string()) +
                         (f.empty() ? message : f + ": " + message)),
      field(std::move(f)),
      line(l) {}

namespace {

template <class E>
struct EnumNames {
  std::vector<std::pair<E, const char*>> items;

  const char* name(E e) const {
    for (const auto& [v, n] : items) {
      if (v == e) return n;
    }
    return "?";
  }
  E parse(const std::string& s, const std::string& field) const {
    for (const auto& [v, n] : items) {
      if (s == n) return v;
    }
    std::string allowed;
    for (const auto& [v, n] : items) allowed += (allowed.empty() ? "" : "|") + std::string(n);
    throw ConfigError(field, "unknown value '" + s + "' (expected " + allowed + ")");
  }
};

const EnumNames<SingularPart> kSingular{{{SingularPart::logarithmic, "logarithmic"}, {SingularPart::none, "none"}}};
const EnumNames<CouplingKind> kCoupling{{{CouplingKind::constant, "constant"},
                                         {CouplingKind::affine, "affine"},
                                         {CouplingKind::smooth_concave, "smooth_concave"}}};
const EnumNames<KernelKind> kKernel{{{KernelKind::spatial_convolution, "spatial_convolution"},
                                     {KernelKind::time_history, "time_history"},
                                     {KernelKind::zero, "zero"}}};
const EnumNames<RadialType> kRadial{{{RadialType::gaussian, "gaussian"}, {RadialType::truncated_power, "truncated_power"}}};
const EnumNames<TimeProfile> kProfile{{{TimeProfile::constant, "constant"}, {TimeProfile::exponential, "exponential"}}};
const EnumNames<StepRule> kStepRule{{{StepRule::fixed, "fixed"}, {StepRule::barzilai_borwein, "barzilai_borwein"}}};
const EnumNames<ProjectionMetric> kMetric{{{ProjectionMetric::h1_time, "h1_time"},
                                           {ProjectionMetric::l2_clip_scale_inexact, "l2_clip_scale_inexact"}}};
const EnumNames<ObstacleSolver> kObstacle{{{ObstacleSolver::active_set, "active_set"},
                                           {ObstacleSolver::projected_gauss_seidel, "projected_gauss_seidel"}}};

/// A JSON object being read under a dotted path. Every key must be consumed
/// or declared; leftovers are reported as unknown fields.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(child(k), "unknown field");
    }
  }
  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(child(key), "missing required field");
    return j_.at(key);
  }

  double number(const std::string& key, double& out) {
    if (!has(key)) return out;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(child(key), "expected a number");
    return out = v.get<double>();
  }
  double required_number(const std::string& key) {
    const json& v = at(key);
    if (!v.is_number()) throw ConfigError(child(key), "expected a number");
    return v.get<double>();
  }
  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(child(key), "expected an integer");
    if constexpr (std::is_unsigned_v<Int>) {
      if (v.is_number_unsigned()) {
        out = v.get<Int>();
        return;
      }
      if (v.get<long long>() < 0) throw ConfigError(child(key), "expected a nonnegative integer");
    }
    out = v.get<Int>();
  }
  void string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(child(key), "expected a string");
    out = v.get<std::string>();
  }
  template <class E>
  void enumeration(const std::string& key, const EnumNames<E>& names, E& out) {
    std::string s;
    if (!has(key)) return;
    string(key, s);
    out = names.parse(s, child(key));
  }
  void expression(const std::string& key, FieldExpr& out) {
    if (!has(key)) return;
    out = parse_expr(j_.at(key), child(key));
  }
  Section section(const std::string& key) { return Section(at(key), child(key)); }

  static FieldExpr parse_expr(const json& v, const std::string& field) {
    std::string text;
    if (v.is_number()) {
      std::ostringstream os;
      os << std::setprecision(17) << v.get<double>();
      text = os.str();
    } else if (v.is_string()) {
      text = v.get<std::string>();
    } else {
      throw ConfigError(field, "expected an expression string");
    }
    try {
      return FieldExpr::parse(text);
    } catch (const ExprError& e) {
      throw ConfigError(field, e.what());
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_axes(Section& s, GridSpec& g) {
  s.integer("dim", g.dim);
  if (g.dim != 1 && g.dim != 2) throw ConfigError(s.child("dim"), "must be 1 or 2");
  auto read_array = [&](const std::string& key, auto& arr, bool integral) {
    if (!s.has(key)) return;
    const json& v = s.at(key);
    if (!v.is_array() || static_cast<int>(v.size()) != g.dim) {
      throw ConfigError(s.child(key), "expected an array of length dim = " + std::to_string(g.dim));
    }
    for (int a = 0; a < g.dim; ++a) {
      if (integral ? !v[a].is_number_integer() : !v[a].is_number()) {
        throw ConfigError(s.child(key) + "[" + std::to_string(a) + "]", integral ? "expected an integer" : "expected a number");
      }
      arr[a] = v[a].template get<typename std::decay_t<decltype(arr)>::value_type>();
    }
  };
  read_array("lengths", g.lengths, false);
  read_array("cells", g.cells, true);
}

void read_potential(Section& s, PotentialSpec& p) {
  s.number("c_hat", p.c_hat);
  s.enumeration("singular", kSingular, p.singular);
  if (s.has("f2")) {
    const json& v = s.at("f2");
    if (!v.is_array()) throw ConfigError(s.child("f2"), "expected an array of numbers");
    p.f2.clear();
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!v[k].is_number()) throw ConfigError(s.child("f2") + "[" + std::to_string(k) + "]", "expected a number");
      p.f2.push_back(v[k].get<double>());
    }
  }
  s.number("safeguard_eps", p.safeguard_eps);
  if (s.has("g")) {
    Section g = s.section("g");
    g.enumeration("kind", kCoupling, p.g.kind);
    g.number("g0", p.g.g0);
    g.number("g1", p.g.g1);
    g.number("a", p.g.a);
    g.number("b", p.g.b);
  }
}

void read_kernel(Section& s, KernelSpec& k) {
  s.enumeration("kind", kKernel, k.kind);
  if (s.has("radial")) {
    Section r = s.section("radial");
    r.enumeration("type", kRadial, k.radial.type);
    r.number("amplitude", k.radial.amplitude);
    r.number("sigma", k.radial.sigma);
    r.number("alpha", k.radial.alpha);
    r.number("r_min", k.radial.r_min);
  }
  s.enumeration("time_profile", kProfile, k.time_profile);
  s.number("time_amplitude", k.time_amplitude);
  s.number("decay", k.decay);
}

FieldSource read_source(const json& v, const std::string& field, const std::string& default_column) {
  FieldSource src;
  if (v.is_object()) {
    Section s(v, field);
    s.string("file", src.file);
    if (src.file.empty()) throw ConfigError(s.child("file"), "missing required field");
    src.column = default_column;
    s.string("column", src.column);
    return src;
  }
  src.expr = Section::parse_expr(v, field);
  return src;
}

void read_optimizer(Section& s, OptimizerConfig& o) {
  s.integer("max_iters", o.max_iters);
  s.number("stat_tol", o.stat_tol);
  s.number("initial_step", o.initial_step);
  s.enumeration("step_rule", kStepRule, o.step_rule);
  s.number("max_step", o.max_step);
  s.number("backtrack", o.backtrack);
  s.number("sufficient_decrease", o.sufficient_decrease);
  s.number("s_min", o.s_min);
  s.integer("keep_every", o.keep_every);
  if (s.has("projection")) {
    Section p = s.section("projection");
    ProjectionConfig& pc = o.projection;
    p.enumeration("metric", kMetric, pc.metric);
    p.enumeration("obstacle", kObstacle, pc.obstacle);
    p.number("proj_tol", pc.proj_tol);
    p.integer("max_dykstra_iters", pc.max_dykstra_iters);
    p.number("obstacle_tol", pc.obstacle_tol);
    p.integer("max_obstacle_iters", pc.max_obstacle_iters);
  }
  if (o.max_iters < 0) throw ConfigError(s.child("max_iters"), "must be nonnegative");
  if (!(o.backtrack > 0.0 && o.backtrack < 1.0)) throw ConfigError(s.child("backtrack"), "must lie in (0, 1)");
  if (!(o.sufficient_decrease > 0.0 && o.sufficient_decrease < 1.0)) {
    throw ConfigError(s.child("sufficient_decrease"), "must lie in (0, 1)");
  }
  if (!(o.initial_step > 0.0)) throw ConfigError(s.child("initial_step"), "must be positive");
  if (!(o.s_min > 0.0)) throw ConfigError(s.child("s_min"), "must be positive");
}

/// Runs a module validator and re-raises its complaint against a field.
template <class F>
void validated(const std::string& field, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(field, e.what());
  }
}

json source_json(const FieldSource& s) {
  if (s.from_file()) return json{{"file", s.file}, {"column", s.column}};
  return s.expr.source();
}

}  // namespace

bool RunConfig::operator==(const RunConfig& o) const {
  return grid == o.grid && time == o.time && potential == o.potential && kernel == o.kernel && betas == o.betas &&
         rho0 == o.rho0 && mu0 == o.mu0 && targets == o.targets && control == o.control && u_max == o.u_max &&
         R == o.R && solver == o.solver && optimizer == o.optimizer && seed == o.seed && output == o.output &&
         threads == o.threads;
}

RunConfig parse_config(const std::string& json_text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    int line = 1;
    const std::size_t end = std::min<std::size_t>(e.byte, json_text.size());
    for (std::size_t i = 0; i + 1 < end; ++i) line += json_text[i] == '\n';
    throw ConfigError("", std::string("JSON syntax error: ") + e.what(), line);
  }

  RunConfig c;
  c.base_dir = base_dir;
  Section root(j, "");

  if (root.has("grid")) {
    Section s = root.section("grid");
    read_axes(s, c.grid);
  }
  if (root.has("time")) {
    Section s = root.section("time");
    s.number("T", c.time.T);
    s.integer("steps", c.time.steps);
  }
  if (root.has("potential")) {
    Section s = root.section("potential");
    read_potential(s, c.potential);
  }
  if (root.has("kernel")) {
    Section s = root.section("kernel");
    read_kernel(s, c.kernel);
  }
  {
    Section s = root.section("betas");
    c.betas.rho = s.required_number("rho");
    c.betas.mu = s.required_number("mu");
    c.betas.control = s.required_number("control");
  }
  if (root.has("initial")) {
    Section s = root.section("initial");
    s.expression("rho0", c.rho0);
    s.expression("mu0", c.mu0);
  }
  if (root.has("targets")) {
    Section s = root.section("targets");
    if (s.has("manufactured")) {
      std::string kind;
      s.string("manufactured", kind);
      validated(s.child("manufactured"), [&] { c.targets.manufactured = parse_manufacture_kind(kind); });
      if (s.has("rho") || s.has("mu")) throw ConfigError(s.child("manufactured"), "excludes explicit rho/mu targets");
    } else {
      c.targets.rho = read_source(s.at("rho"), s.child("rho"), "rho");
      c.targets.mu = read_source(s.at("mu"), s.child("mu"), "mu");
    }
  }
  root.expression("control", c.control);
  if (root.has("constraints")) {
    Section s = root.section("constraints");
    s.expression("u_max", c.u_max);
    s.number("R", c.R);
  }
  if (root.has("solver")) {
    Section s = root.section("solver");
    s.number("newton_tol", c.solver.newton_tol);
    s.integer("max_newton_iters", c.solver.max_newton_iters);
    s.integer("max_halvings", c.solver.max_halvings);
    s.number("sign_tol", c.solver.sign_tol);
  }
  if (root.has("optimizer")) {
    Section s = root.section("optimizer");
    read_optimizer(s, c.optimizer);
  }
  root.integer("seed", c.seed);
  root.string("output", c.output);
  root.integer("threads", c.threads);

  validated("grid", [&] { build_grid(c.grid); });
  if (c.time.steps < 1) throw ConfigError("time.steps", "must be >= 1");
  if (!(c.time.T > 0.0)) throw ConfigError("time.T", "must be positive");
  validated("potential", [&] { static_cast<void>(Physics{c.potential}); });
  validated("kernel", [&] { validate_kernel(c.kernel, c.grid.dim); });
  validated("betas", [&] { validate_betas(c.betas); });
  if (!(c.R > 0.0)) throw ConfigError("constraints.R", "must be positive");
  if (c.threads < 1) throw ConfigError("threads", "must be >= 1");
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::filesystem::path p(path);
  return parse_config(ss.str(), p.has_parent_path() ? p.parent_path().string() : ".");
}

std::string to_json_string(const RunConfig& c) {
  json j;
  const int d = c.grid.dim;
  j["grid"] = {{"dim", d},
               {"lengths", std::vector<double>(c.grid.lengths.begin(), c.grid.lengths.begin() + d)},
               {"cells", std::vector<int>(c.grid.cells.begin(), c.grid.cells.begin() + d)}};
  j["time"] = {{"T", c.time.T}, {"steps", c.time.steps}};
  const PotentialSpec& p = c.potential;
  j["potential"] = {{"c_hat", p.c_hat},
                    {"singular", kSingular.name(p.singular)},
                    {"f2", p.f2},
                    {"safeguard_eps", p.safeguard_eps},
                    {"g", {{"kind", kCoupling.name(p.g.kind)}, {"g0", p.g.g0}, {"g1", p.g.g1}, {"a", p.g.a}, {"b", p.g.b}}}};
  const KernelSpec& k = c.kernel;
  j["kernel"] = {{"kind", kKernel.name(k.kind)},
                 {"radial",
                  {{"type", kRadial.name(k.radial.type)},
                   {"amplitude", k.radial.amplitude},
                   {"sigma", k.radial.sigma},
                   {"alpha", k.radial.alpha},
                   {"r_min", k.radial.r_min}}},
                 {"time_profile", kProfile.name(k.time_profile)},
                 {"time_amplitude", k.time_amplitude},
                 {"decay", k.decay}};
  j["betas"] = {{"rho", c.betas.rho}, {"mu", c.betas.mu}, {"control", c.betas.control}};
  j["initial"] = {{"rho0", c.rho0.source()}, {"mu0", c.mu0.source()}};
  if (c.targets.manufactured) {
    j["targets"] = {{"manufactured", to_string(*c.targets.manufactured)}};
  } else {
    j["targets"] = {{"rho", source_json(c.targets.rho)}, {"mu", source_json(c.targets.mu)}};
  }
  j["control"] = c.control.source();
  j["constraints"] = {{"u_max", c.u_max.source()}, {"R", c.R}};
  j["solver"] = {{"newton_tol", c.solver.newton_tol},
                 {"max_newton_iters", c.solver.max_newton_iters},
                 {"max_halvings", c.solver.max_halvings},
                 {"sign_tol", c.solver.sign_tol}};
  const OptimizerConfig& o = c.optimizer;
  const ProjectionConfig& pc = o.projection;
  j["optimizer"] = {{"max_iters", o.max_iters},
                    {"stat_tol", o.stat_tol},
                    {"initial_step", o.initial_step},
                    {"step_rule", kStepRule.name(o.step_rule)},
                    {"max_step", o.max_step},
                    {"backtrack", o.backtrack},
                    {"sufficient_decrease", o.sufficient_decrease},
                    {"s_min", o.s_min},
                    {"keep_every", o.keep_every},
                    {"projection",
                     {{"metric", kMetric.name(pc.metric)},
                      {"obstacle", kObstacle.name(pc.obstacle)},
                      {"proj_tol", pc.proj_tol},
                      {"max_dykstra_iters", pc.max_dykstra_iters},
                      {"obstacle_tol", pc.obstacle_tol},
                      {"max_obstacle_iters", pc.max_obstacle_iters}}}};
  j["seed"] = c.seed;
  j["output"] = c.output;
  j["threads"] = c.threads;
  return j.dump(2) + "\n";
}

namespace {

double coord_or_zero(const Grid& g, int i, int axis) { return axis < g.dim() ? g.coord(i, axis) : 0.0; }

SpaceTimeField load_source(const FieldSource& src, const std::string& field, const RunConfig& cfg,
                           const GridPtr& grid) {
  if (!src.from_file()) return sample_field(src.expr, grid, cfg.time);
  std::filesystem::path path(src.file);
  if (path.is_relative()) path = std::filesystem::path(cfg.base_dir) / path;
  std::ifstream in(path);
  if (!in) throw ConfigError(field + ".file", "cannot open '" + path.string() + "'");
  try {
    return read_field_csv(in, src.column, grid, cfg.time);
  } catch (const std::exception& e) {
    throw ConfigError(field + ".file", e.what());
  }
}

}  // namespace

SpaceTimeField sample_field(const FieldExpr& e, const GridPtr& grid, const TimeAxis& time) {
  SpaceTimeField f(grid, time);
  for (int n = 0; n <= time.steps; ++n) {
    for (int i = 0; i < grid->node_count(); ++i) {
      f.values(n, i) = e(coord_or_zero(*grid, i, 0), coord_or_zero(*grid, i, 1), time.time(n));
    }
  }
  return f;
}

ScalarField sample_field(const FieldExpr& e, const GridPtr& grid, double t) {
  ScalarField f(grid);
  for (int i = 0; i < grid->node_count(); ++i) f.values[i] = e(coord_or_zero(*grid, i, 0), coord_or_zero(*grid, i, 1), t);
  return f;
}

BuiltProblem build_problem(const RunConfig& cfg) {
  BuiltProblem out;
  Problem& pb = out.problem;
  GridPtr grid;
  validated("grid", [&] { grid = build_grid(cfg.grid); });
  std::shared_ptr<const NonlocalOperator> B;
  validated("kernel", [&] { B = make_operator(grid, cfg.kernel); });
  const Physics physics(cfg.potential);

  if (cfg.targets.manufactured) {
    validated("targets.manufactured", [&] {
      pb = manufacture_problem(*cfg.targets.manufactured, grid, cfg.time, physics, B, cfg.seed).problem;
    });
  } else {
    pb.grid = grid;
    pb.time = cfg.time;
    pb.physics = physics;
    pb.B = B;
    pb.init = {sample_field(cfg.rho0, grid), sample_field(cfg.mu0, grid)};
    validated("initial", [&] { validate_initial_data(pb.init); });
    pb.targets = {load_source(cfg.targets.rho, "targets.rho", cfg, grid),
                  load_source(cfg.targets.mu, "targets.mu", cfg, grid)};
    pb.constraints = {sample_field(cfg.u_max, grid, cfg.time), cfg.R};
    validated("constraints", [&] { validate_constraints(pb.constraints); });
  }
  pb.betas = cfg.betas;
  pb.solver = cfg.solver;
  out.u0 = sample_field(cfg.control, grid, cfg.time);
  if (!out.u0.all_finite()) throw ConfigError("control", "non-finite values");
  return out;
}

HarnessConfig harness_config(const RunConfig& cfg) {
  HarnessConfig h;
  h.seed = cfg.seed;
  h.potential = cfg.potential;
  h.kernel = cfg.kernel;
  return h;
}

void write_fields_csv(std::ostream& os, const std::vector<std::string>& names,
                      const std::vector<const SpaceTimeField*>& fields) {
  if (names.size() != fields.size() || fields.empty()) throw std::invalid_argument("write_fields_csv: bad arguments");
  const SpaceTimeField& ref = *fields.front();
  for (const auto* f : fields) require_same_shape(ref, *f, "write_fields_csv");
  os << "n,i,t,x,y";
  for (const auto& n : names) os << ',' << n;
  os << '\n' << std::setprecision(17);
  const Grid& g = *ref.grid;
  for (int n = 0; n < ref.levels(); ++n) {
    for (int i = 0; i < ref.nodes(); ++i) {
      os << n << ',' << i << ',' << ref.time.time(n) << ',' << coord_or_zero(g, i, 0) << ',' << coord_or_zero(g, i, 1);
      for (const auto* f : fields) os << ',' << f->values(n, i);
      os << '\n';
    }
  }
}

SpaceTimeField read_field_csv(std::istream& is, const std::string& column, const GridPtr& grid,
                              const TimeAxis& time) {
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("field CSV: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  auto find = [&](const std::string& name) -> std::size_t {
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (header[k] == name) return k;
    }
    throw std::runtime_error("field CSV: missing column '" + name + "'");
  };
  const std::size_t cn = find("n"), ci = find("i"), cv = find(column);

  SpaceTimeField f(grid, time);
  std::vector<char> filled(static_cast<std::size_t>(f.values.size()), 0);
  int row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw std::runtime_error("field CSV: row " + std::to_string(row) + " has wrong width");
    int n = 0, i = 0;
    double v = 0.0;
    try {
      n = std::stoi(cells[cn]);
      i = std::stoi(cells[ci]);
      v = std::stod(cells[cv]);
    } catch (const std::exception&) {
      throw std::runtime_error("field CSV: row " + std::to_string(row) + " is not numeric");
    }
    if (n < 0 || n >= f.levels() || i < 0 || i >= f.nodes()) {
      throw std::runtime_error("field CSV: row " + std::to_string(row) + " index out of range");
    }
    char& slot = filled[static_cast<std::size_t>(n) * f.nodes() + i];
    if (slot) throw std::runtime_error("field CSV: duplicate entry at row " + std::to_string(row));
    slot = 1;
    f.values(n, i) = v;
  }
  for (char c : filled) {
    if (!c) throw std::runtime_error("field CSV: missing (n, i) entries for the configured grid and time axis");
  }
  return f;
}

}  // namespace npc
