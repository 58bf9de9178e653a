#include "npc/nonlocal.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace npc {

double RadialKernel::operator()(double r) const {
  switch (type) {
    case RadialType::gaussian: return amplitude * std::exp(-r * r / (2.0 * sigma * sigma));
    case RadialType::truncated_power: return amplitude * std::pow(std::max(r, r_min), -alpha);
  }
  return 0.0;
}

double KernelSpec::time_factor(double lag) const {
  return time_profile == TimeProfile::constant ? time_amplitude : time_amplitude * std::exp(-decay * lag);
}

void validate_kernel(const KernelSpec& spec, int dim) {
  if (spec.kind == KernelKind::zero) return;
  const auto& k = spec.radial;
  if (!std::isfinite(k.amplitude)) throw std::invalid_argument("kernel: amplitude must be finite");
  if (k.type == RadialType::gaussian && !(k.sigma > 0.0)) {
    throw std::invalid_argument("kernel: gaussian sigma must be positive");
  }
  if (k.type == RadialType::truncated_power && !(k.alpha > 0.0 && k.alpha < dim)) {
    throw std::invalid_argument("kernel: truncated_power needs 0 < alpha < dim (" + std::to_string(dim) + ")");
  }
  if (spec.kind == KernelKind::time_history) {
    if (!std::isfinite(spec.time_amplitude)) throw std::invalid_argument("kernel: time_amplitude must be finite");
    if (spec.time_profile == TimeProfile::exponential && !(spec.decay >= 0.0)) {
      throw std::invalid_argument("kernel: decay must be nonnegative");
    }
  }
}

// Generic slice fallbacks go through the full-field application; correct for
// any causal operator, and overridden where a cheaper path exists.
Vec NonlocalOperator::apply_slice(const SpaceTimeField& v, int n) const { return apply(v).slice(n).transpose(); }

Vec NonlocalOperator::apply_derivative_slice(const SpaceTimeField& base, const SpaceTimeField& w, int n) const {
  return apply_derivative(base, w).slice(n).transpose();
}

Vec NonlocalOperator::apply_derivative_adjoint_slice(const SpaceTimeField& base, const SpaceTimeField& q,
                                                     int n) const {
  return apply_derivative_adjoint(base, q).slice(n).transpose();
}

KernelOperator::KernelOperator(GridPtr grid, KernelSpec spec) : grid_(std::move(grid)), spec_(spec) {
  validate_kernel(spec_, grid_->dim());
  const int n = grid_->node_count();
  weights_ = Eigen::MatrixXd::Zero(n, n);
  adjoint_weights_ = Eigen::MatrixXd::Zero(n, n);
  if (spec_.kind == KernelKind::zero) return;

  if (spec_.radial.type == RadialType::truncated_power && spec_.radial.r_min <= 0.0) {
    double hmin = grid_->h(0);
    for (int a = 1; a < grid_->dim(); ++a) hmin = std::min(hmin, grid_->h(a));
    spec_.radial.r_min = 0.5 * hmin;
  }
  const Vec& w = grid_->weights();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double r2 = 0.0;
      for (int a = 0; a < grid_->dim(); ++a) {
        const double d = grid_->coord(i, a) - grid_->coord(j, a);
        r2 += d * d;
      }
      weights_(i, j) = spec_.radial(std::sqrt(r2)) * w[j];
    }
  }
  // <q, W v>_H = <W* q, v>_H with W* = diag(w)^-1 W^T diag(w).
  adjoint_weights_ = w.cwiseInverse().asDiagonal() * weights_.transpose() * w.asDiagonal();
}

void KernelOperator::check(const SpaceTimeField& v) const { require_same_grid(*grid_, *v.grid, "nonlocal operator"); }

double KernelOperator::history_weight(const TimeAxis& t, int n, int m) const {
  if (n == 0) return 0.0;
  const double trap = (m == 0 || m == n) ? 0.5 * t.tau() : t.tau();
  return trap * spec_.time_factor(t.time(n) - t.time(m));
}

Vec KernelOperator::apply_slice(const SpaceTimeField& v, int n) const {
  check(v);
  switch (spec_.kind) {
    case KernelKind::zero: return Vec::Zero(v.nodes());
    case KernelKind::spatial_convolution: return weights_ * v.slice(n).transpose();
    case KernelKind::time_history: {
      Vec acc = Vec::Zero(v.nodes());
      for (int m = 0; m <= n; ++m) acc += history_weight(v.time, n, m) * v.slice(m).transpose();
      return weights_ * acc;
    }
  }
  return Vec::Zero(v.nodes());
}

SpaceTimeField KernelOperator::apply(const SpaceTimeField& v) const {
  check(v);
  SpaceTimeField out(v.grid, v.time);
  if (spec_.kind == KernelKind::zero) return out;
  if (spec_.kind == KernelKind::spatial_convolution) {
    out.values = v.values * weights_.transpose();
    return out;
  }
  for (int n = 0; n < v.levels(); ++n) out.slice(n) = apply_slice(v, n).transpose();
  return out;
}

Vec KernelOperator::apply_derivative_slice(const SpaceTimeField& base, const SpaceTimeField& w, int n) const {
  require_same_shape(base, w, "apply_derivative");
  return apply_slice(w, n);
}

SpaceTimeField KernelOperator::apply_derivative(const SpaceTimeField& base, const SpaceTimeField& w) const {
  require_same_shape(base, w, "apply_derivative");
  return apply(w);
}

Vec KernelOperator::apply_derivative_adjoint_slice(const SpaceTimeField& base, const SpaceTimeField& q,
                                                   int m) const {
  require_same_shape(base, q, "apply_derivative_adjoint");
  check(q);
  switch (spec_.kind) {
    case KernelKind::zero: return Vec::Zero(q.nodes());
    case KernelKind::spatial_convolution: return adjoint_weights_ * q.slice(m).transpose();
    case KernelKind::time_history: {
      // Transpose of the history sum in the trapezoid-weighted L^2(Q) pairing.
      Vec acc = Vec::Zero(q.nodes());
      for (int n = m; n < q.levels(); ++n) {
        acc += (q.time.weight(n) * history_weight(q.time, n, m)) * q.slice(n).transpose();
      }
      return adjoint_weights_ * acc / q.time.weight(m);
    }
  }
  return Vec::Zero(q.nodes());
}

SpaceTimeField KernelOperator::apply_derivative_adjoint(const SpaceTimeField& base, const SpaceTimeField& q) const {
  require_same_shape(base, q, "apply_derivative_adjoint");
  check(q);
  SpaceTimeField out(q.grid, q.time);
  if (spec_.kind == KernelKind::zero) return out;
  if (spec_.kind == KernelKind::spatial_convolution) {
    out.values = q.values * adjoint_weights_.transpose();
    return out;
  }
  for (int m = 0; m < q.levels(); ++m) out.slice(m) = apply_derivative_adjoint_slice(base, q, m).transpose();
  return out;
}

std::shared_ptr<const NonlocalOperator> make_operator(GridPtr grid, const KernelSpec& spec) {
  return std::make_shared<const KernelOperator>(std::move(grid), spec);
}

Eigen::MatrixXd assemble_dense(const NonlocalOperator& op, const GridPtr& grid, const TimeAxis& time) {
  const int nodes = grid->node_count();
  const int size = nodes * (time.steps + 1);
  if (size > kDenseAssemblyLimit) {
    throw std::length_error("assemble_dense: " + std::to_string(size) + " unknowns exceed the limit of " +
                            std::to_string(kDenseAssemblyLimit));
  }
  Eigen::MatrixXd m(size, size);
  SpaceTimeField e(grid, time);
  for (int col = 0; col < size; ++col) {
    e.values.setZero();
    e.values(col / nodes, col % nodes) = 1.0;
    const SpaceTimeField y = op.apply(e);
    m.col(col) = Eigen::Map<const Vec>(y.values.data(), size);
  }
  return m;
}

double dense_operator_norm(const Eigen::MatrixXd& m, const Grid& grid, const TimeAxis& time, int iters) {
  const int nodes = grid.node_count();
  const int size = static_cast<int>(m.rows());
  Vec d(size);
  for (int k = 0; k < size; ++k) d[k] = time.weight(k / nodes) * grid.weights()[k % nodes];
  // ||M||_{L^2(Q)} = ||D^1/2 M D^-1/2||_2.
  const Vec s = d.cwiseSqrt();
  const Eigen::MatrixXd a = s.asDiagonal() * m * s.cwiseInverse().asDiagonal();
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  Vec x(size);
  for (int k = 0; k < size; ++k) x[k] = nd(rng);
  if (x.norm() == 0.0) return 0.0;
  x.normalize();
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vec y = a.transpose() * (a * x);
    const double nrm = y.norm();
    if (nrm == 0.0) return 0.0;
    lambda = nrm;
    x = y / nrm;
  }
  return std::sqrt(lambda);
}

}  // namespace npc
