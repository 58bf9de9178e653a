#include "npc/grid.hpp"

#include <cmath>
#include <string>

namespace npc {

bool GridSpec::operator==(const GridSpec& o) const {
  if (dim != o.dim) return false;
  for (int a = 0; a < dim; ++a) {
    if (lengths[a] != o.lengths[a] || cells[a] != o.cells[a]) return false;
  }
  return true;
}

namespace {

void validate(const GridSpec& spec) {
  if (spec.dim != 1 && spec.dim != 2) {
    throw std::invalid_argument("grid: dim must be 1 or 2, got " + std::to_string(spec.dim));
  }
  for (int a = 0; a < spec.dim; ++a) {
    if (!(spec.lengths[a] > 0.0) || !std::isfinite(spec.lengths[a])) {
      throw std::invalid_argument("grid: lengths must be positive");
    }
    if (spec.cells[a] < 2) {
      throw std::invalid_argument("grid: cells_per_axis must be >= 2");
    }
  }
}

// 1D trapezoid weights and ghost-reflected Neumann stencil on n nodes.
Vec axis_weights(int n, double h) {
  Vec w = Vec::Constant(n, h);
  w[0] = w[n - 1] = 0.5 * h;
  return w;
}

SpMat axis_laplacian(int n, double h) {
  std::vector<Eigen::Triplet<double>> t;
  const double s = 1.0 / (h * h);
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, -2.0 * s);
    if (i == 0) {
      t.emplace_back(0, 1, 2.0 * s);
    } else if (i == n - 1) {
      t.emplace_back(i, i - 1, 2.0 * s);
    } else {
      t.emplace_back(i, i - 1, s);
      t.emplace_back(i, i + 1, s);
    }
  }
  SpMat m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

}  // namespace

Grid::Grid(const GridSpec& spec) : spec_(spec) {
  validate(spec_);
  for (int a = 0; a < spec_.dim; ++a) h_[a] = spec_.lengths[a] / spec_.cells[a];

  const int nx = nodes_per_axis(0);
  if (spec_.dim == 1) {
    node_count_ = nx;
    weights_ = axis_weights(nx, h_[0]);
    laplacian_ = axis_laplacian(nx, h_[0]);
  } else {
    const int ny = nodes_per_axis(1);
    node_count_ = nx * ny;
    const Vec wx = axis_weights(nx, h_[0]);
    const Vec wy = axis_weights(ny, h_[1]);
    weights_.resize(node_count_);
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix) weights_[index(ix, iy)] = wx[ix] * wy[iy];
    // x fastest: kron(I_y, L_x) + kron(L_y, I_x)
    const SpMat lx = axis_laplacian(nx, h_[0]);
    const SpMat ly = axis_laplacian(ny, h_[1]);
    std::vector<Eigen::Triplet<double>> t;
    for (int k = 0; k < lx.outerSize(); ++k)
      for (SpMat::InnerIterator it(lx, k); it; ++it)
        for (int j = 0; j < ny; ++j) t.emplace_back(index(it.row(), j), index(it.col(), j), it.value());
    for (int k = 0; k < ly.outerSize(); ++k)
      for (SpMat::InnerIterator it(ly, k); it; ++it)
        for (int i = 0; i < nx; ++i) t.emplace_back(index(i, it.row()), index(i, it.col()), it.value());
    laplacian_.resize(node_count_, node_count_);
    laplacian_.setFromTriplets(t.begin(), t.end());
  }
  laplacian_.makeCompressed();
}

double Grid::volume() const {
  double v = 1.0;
  for (int a = 0; a < spec_.dim; ++a) v *= spec_.lengths[a];
  return v;
}

double Grid::coord(int node, int axis) const {
  const int nx = nodes_per_axis(0);
  const int i = axis == 0 ? node % nx : node / nx;
  return i * h_[axis];
}

GridPtr build_grid(const GridSpec& spec) { return std::make_shared<const Grid>(spec); }

ScalarField::ScalarField(GridPtr g, Vec v) : grid(std::move(g)), values(std::move(v)) {
  if (values.size() != grid->node_count()) throw ShapeMismatch("scalar field: wrong node count");
}

SpaceTimeField::SpaceTimeField(GridPtr g, TimeAxis t)
    : grid(std::move(g)), time(t), values(RowMat::Zero(t.steps + 1, grid->node_count())) {
  if (t.steps < 1 || !(t.T > 0.0)) throw std::invalid_argument("time axis: need T > 0 and steps >= 1");
}

SpaceTimeField::SpaceTimeField(GridPtr g, TimeAxis t, RowMat v)
    : grid(std::move(g)), time(t), values(std::move(v)) {
  if (values.rows() != t.steps + 1 || values.cols() != grid->node_count()) {
    throw ShapeMismatch("space-time field: wrong shape");
  }
}

SpaceTimeField& SpaceTimeField::operator+=(const SpaceTimeField& o) {
  require_same_shape(*this, o, "operator+=");
  values += o.values;
  return *this;
}

SpaceTimeField& SpaceTimeField::operator-=(const SpaceTimeField& o) {
  require_same_shape(*this, o, "operator-=");
  values -= o.values;
  return *this;
}

SpaceTimeField& SpaceTimeField::operator*=(double s) {
  values *= s;
  return *this;
}

SpaceTimeField operator+(SpaceTimeField a, const SpaceTimeField& b) { return a += b; }
SpaceTimeField operator-(SpaceTimeField a, const SpaceTimeField& b) { return a -= b; }
SpaceTimeField operator*(double s, SpaceTimeField a) { return a *= s; }

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (!a.same_as(b)) throw ShapeMismatch(std::string(what) + ": grid mismatch");
}

void require_same_shape(const SpaceTimeField& a, const SpaceTimeField& b, const char* what) {
  require_same_grid(*a.grid, *b.grid, what);
  if (!(a.time == b.time)) throw ShapeMismatch(std::string(what) + ": time axis mismatch");
}

ScalarField laplacian_neumann(const Grid& grid, const ScalarField& f) {
  require_same_grid(grid, *f.grid, "laplacian_neumann");
  return ScalarField(f.grid, grid.laplacian() * f.values);
}

double inner_l2(const Grid& grid, const ScalarField& f, const ScalarField& g) {
  require_same_grid(grid, *f.grid, "inner_l2");
  require_same_grid(grid, *g.grid, "inner_l2");
  return inner_h(grid, f.values, g.values);
}

double norm_l2(const Grid& grid, const ScalarField& f) { return std::sqrt(inner_l2(grid, f, f)); }

double inner_h(const Grid& grid, const Eigen::Ref<const Vec>& f, const Eigen::Ref<const Vec>& g) {
  // Symmetric in f and g bit-for-bit: the product f*g commutes before weighting.
  return (f.array() * g.array() * grid.weights().array()).sum();
}

double norm_h(const Grid& grid, const Eigen::Ref<const Vec>& f) { return std::sqrt(inner_h(grid, f, f)); }

double norm_v(const Grid& grid, const Eigen::Ref<const Vec>& f) {
  const Vec lf = grid.laplacian() * f;
  const double grad2 = std::max(0.0, -inner_h(grid, f, lf));
  return std::sqrt(inner_h(grid, f, f) + grad2);
}

double inner_l2q(const SpaceTimeField& a, const SpaceTimeField& b) {
  require_same_shape(a, b, "inner_l2q");
  double s = 0.0;
  for (int n = 0; n < a.levels(); ++n) {
    s += a.time.weight(n) * inner_h(*a.grid, a.slice(n).transpose(), b.slice(n).transpose());
  }
  return s;
}

double norm_l2q(const SpaceTimeField& a) { return std::sqrt(inner_l2q(a, a)); }

double inner_h1_time(const SpaceTimeField& a, const SpaceTimeField& b) {
  require_same_shape(a, b, "inner_h1_time");
  const double tau = a.time.tau();
  double s = inner_l2q(a, b);
  for (int n = 1; n < a.levels(); ++n) {
    const Vec da = (a.slice(n) - a.slice(n - 1)).transpose() / tau;
    const Vec db = (b.slice(n) - b.slice(n - 1)).transpose() / tau;
    s += tau * inner_h(*a.grid, da, db);
  }
  return s;
}

double norm_h1_time(const SpaceTimeField& u) { return std::sqrt(std::max(0.0, inner_h1_time(u, u))); }

namespace {
double trap_upto(const TimeAxis& t, int m, int n) {
  if (n == 0) return 0.0;
  return (m == 0 || m == n) ? 0.5 * t.tau() : t.tau();
}
}  // namespace

double norm_l2_upto(const SpaceTimeField& a, int n) {
  double s = 0.0;
  for (int m = 0; m <= n; ++m) {
    const Vec v = a.slice(m).transpose();
    s += trap_upto(a.time, m, n) * inner_h(*a.grid, v, v);
  }
  return std::sqrt(s);
}

double norm_h1_time_upto(const SpaceTimeField& a, int n) {
  const double tau = a.time.tau();
  double s = 0.0;
  for (int m = 1; m <= n; ++m) {
    const Vec d = (a.slice(m) - a.slice(m - 1)).transpose() / tau;
    s += tau * inner_h(*a.grid, d, d);
  }
  const double l2 = norm_l2_upto(a, n);
  return std::sqrt(l2 * l2 + s);
}

double norm_linf_h_upto(const SpaceTimeField& a, int n) {
  double m = 0.0;
  for (int k = 0; k <= n; ++k) m = std::max(m, norm_h(*a.grid, a.slice(k).transpose()));
  return m;
}

double norm_linf_v_upto(const SpaceTimeField& a, int n) {
  double m = 0.0;
  for (int k = 0; k <= n; ++k) m = std::max(m, norm_v(*a.grid, a.slice(k).transpose()));
  return m;
}

double norm_l2_v_upto(const SpaceTimeField& a, int n) {
  double s = 0.0;
  for (int m = 0; m <= n; ++m) {
    const double v = norm_v(*a.grid, a.slice(m).transpose());
    s += trap_upto(a.time, m, n) * v * v;
  }
  return std::sqrt(s);
}

}  // namespace npc
