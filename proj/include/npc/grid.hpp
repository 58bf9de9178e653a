#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <memory>
#include <stdexcept>
#include <vector>

namespace npc {

using Vec = Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SpMat = Eigen::SparseMatrix<double>;

/// Thrown when two fields or a field and an operator live on different grids
/// or time axes.
class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GridSpec {
  int dim = 1;
  std::array<double, 2> lengths{1.0, 1.0};
  std::array<int, 2> cells{8, 8};

  bool operator==(const GridSpec& o) const;
};

/// Node-centered uniform mesh on an interval or rectangle. Boundary nodes are
/// part of the mesh; quadrature is the tensor-product trapezoid rule and the
/// Laplacian uses ghost-node reflection, so W*L is symmetric with W the
/// diagonal of quadrature weights.
class Grid {
 public:
  explicit Grid(const GridSpec& spec);

  const GridSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim; }
  int nodes_per_axis(int axis) const { return spec_.cells[axis] + 1; }
  int node_count() const { return node_count_; }
  double h(int axis) const { return h_[axis]; }
  double volume() const;

  const Vec& weights() const { return weights_; }
  /// Discrete Neumann Laplacian, row-major in node index (x fastest).
  const SpMat& laplacian() const { return laplacian_; }

  /// Physical coordinate of node `i` along `axis`.
  double coord(int node, int axis) const;
  int index(int ix, int iy = 0) const { return ix + iy * nodes_per_axis(0); }

  bool same_as(const Grid& other) const { return this == &other || spec_ == other.spec_; }

 private:
  GridSpec spec_;
  std::array<double, 2> h_{0.0, 0.0};
  int node_count_ = 0;
  Vec weights_;
  SpMat laplacian_;
};

using GridPtr = std::shared_ptr<const Grid>;

GridPtr build_grid(const GridSpec& spec);

struct ScalarField {
  GridPtr grid;
  Vec values;

  ScalarField() = default;
  explicit ScalarField(GridPtr g) : grid(std::move(g)), values(Vec::Zero(grid->node_count())) {}
  ScalarField(GridPtr g, Vec v);
};

struct TimeAxis {
  double T = 1.0;
  int steps = 1;

  double tau() const { return T / steps; }
  double time(int n) const { return T * static_cast<double>(n) / steps; }
  /// Trapezoid weight of time level n on [0, T].
  double weight(int n) const { return (n == 0 || n == steps) ? 0.5 * tau() : tau(); }
  bool operator==(const TimeAxis& o) const { return T == o.T && steps == o.steps; }
};

/// Scalar function on grid x time levels; row n holds the slice at t_n.
struct SpaceTimeField {
  GridPtr grid;
  TimeAxis time;
  RowMat values;

  SpaceTimeField() = default;
  SpaceTimeField(GridPtr g, TimeAxis t);
  SpaceTimeField(GridPtr g, TimeAxis t, RowMat v);

  int levels() const { return time.steps + 1; }
  int nodes() const { return grid->node_count(); }
  auto slice(int n) { return values.row(n); }
  auto slice(int n) const { return values.row(n); }
  bool all_finite() const { return values.allFinite(); }

  SpaceTimeField& operator+=(const SpaceTimeField& o);
  SpaceTimeField& operator-=(const SpaceTimeField& o);
  SpaceTimeField& operator*=(double s);
};

SpaceTimeField operator+(SpaceTimeField a, const SpaceTimeField& b);
SpaceTimeField operator-(SpaceTimeField a, const SpaceTimeField& b);
SpaceTimeField operator*(double s, SpaceTimeField a);

void require_same_grid(const Grid& a, const Grid& b, const char* what);
void require_same_shape(const SpaceTimeField& a, const SpaceTimeField& b, const char* what);

ScalarField laplacian_neumann(const Grid& grid, const ScalarField& f);

double inner_l2(const Grid& grid, const ScalarField& f, const ScalarField& g);
double norm_l2(const Grid& grid, const ScalarField& f);

// Weighted spatial forms on raw node vectors (used by the solvers).
double inner_h(const Grid& grid, const Eigen::Ref<const Vec>& f, const Eigen::Ref<const Vec>& g);
double norm_h(const Grid& grid, const Eigen::Ref<const Vec>& f);
/// Discrete H^1(Omega) norm: ||f||_H^2 + (-<f, L f>_H).
double norm_v(const Grid& grid, const Eigen::Ref<const Vec>& f);

/// L^2(Q) inner product with trapezoid weights in space and time.
double inner_l2q(const SpaceTimeField& a, const SpaceTimeField& b);
double norm_l2q(const SpaceTimeField& a);

/// H^1(0,T;L^2) norm: trapezoid-in-time L^2 part plus the backward-difference
/// derivative part weighted by tau.
double norm_h1_time(const SpaceTimeField& u);
double inner_h1_time(const SpaceTimeField& a, const SpaceTimeField& b);

// Norms restricted to [0, t_n], used for the stability and Taylor estimates.
double norm_l2_upto(const SpaceTimeField& a, int n);
double norm_h1_time_upto(const SpaceTimeField& a, int n);
double norm_linf_h_upto(const SpaceTimeField& a, int n);
double norm_linf_v_upto(const SpaceTimeField& a, int n);
double norm_l2_v_upto(const SpaceTimeField& a, int n);

}  // namespace npc
