#pragma once

#include "npc/grid.hpp"

#include <memory>

namespace npc {

enum class RadialType { gaussian, truncated_power };

/// Radial profile k(r). gaussian: amplitude*exp(-r^2/(2 sigma^2));
/// truncated_power: amplitude*max(r, r_min)^(-alpha).
struct RadialKernel {
  RadialType type = RadialType::gaussian;
  double amplitude = 1.0;
  double sigma = 0.1;
  double alpha = 0.5;
  /// Floor for truncated_power; a value <= 0 selects h/2 of the finest axis.
  double r_min = 0.0;

  double operator()(double r) const;
  bool operator==(const RadialKernel&) const = default;
};

enum class KernelKind { spatial_convolution, time_history, zero };
enum class TimeProfile { constant, exponential };

struct KernelSpec {
  KernelKind kind = KernelKind::spatial_convolution;
  RadialKernel radial;
  /// a(t-s) for time_history: constant `time_amplitude`, or
  /// time_amplitude*exp(-decay*(t-s)).
  TimeProfile time_profile = TimeProfile::constant;
  double time_amplitude = 1.0;
  double decay = 1.0;

  double time_factor(double lag) const;
  bool operator==(const KernelSpec&) const = default;
};

/// Validates the spec against the grid dimension (alpha < dim, sigma > 0).
void validate_kernel(const KernelSpec& spec, int dim);

/// A causal nonlocal operator B on space-time fields together with its
/// derivative and the L^2(Q)-adjoint of the derivative. User-supplied
/// nonlinear operators derive from this and must supply all three.
class NonlocalOperator {
 public:
  virtual ~NonlocalOperator() = default;

  virtual SpaceTimeField apply(const SpaceTimeField& v) const = 0;
  virtual SpaceTimeField apply_derivative(const SpaceTimeField& base, const SpaceTimeField& w) const = 0;
  virtual SpaceTimeField apply_derivative_adjoint(const SpaceTimeField& base, const SpaceTimeField& q) const = 0;

  /// Slice n of B[v]; reads only levels <= n of v.
  virtual Vec apply_slice(const SpaceTimeField& v, int n) const;
  /// Slice n of DB[base](w); reads only levels <= n of w.
  virtual Vec apply_derivative_slice(const SpaceTimeField& base, const SpaceTimeField& w, int n) const;
  /// Slice n of DB[base]^*(q); reads only levels >= n of q.
  virtual Vec apply_derivative_adjoint_slice(const SpaceTimeField& base, const SpaceTimeField& q, int n) const;
};

/// Linear integral operator built from a radial kernel. DB[base] = B for
/// every base.
class KernelOperator final : public NonlocalOperator {
 public:
  KernelOperator(GridPtr grid, KernelSpec spec);

  const KernelSpec& spec() const { return spec_; }
  const GridPtr& grid() const { return grid_; }
  /// W[i][j] = k(|x_i - x_j|) * w_j.
  const Eigen::MatrixXd& weight_matrix() const { return weights_; }

  SpaceTimeField apply(const SpaceTimeField& v) const override;
  SpaceTimeField apply_derivative(const SpaceTimeField& base, const SpaceTimeField& w) const override;
  SpaceTimeField apply_derivative_adjoint(const SpaceTimeField& base, const SpaceTimeField& q) const override;

  Vec apply_slice(const SpaceTimeField& v, int n) const override;
  Vec apply_derivative_slice(const SpaceTimeField& base, const SpaceTimeField& w, int n) const override;
  Vec apply_derivative_adjoint_slice(const SpaceTimeField& base, const SpaceTimeField& q, int n) const override;

 private:
  void check(const SpaceTimeField& v) const;
  /// Coefficient multiplying K*v^m in slice n (time_history case).
  double history_weight(const TimeAxis& t, int n, int m) const;

  GridPtr grid_;
  KernelSpec spec_;
  Eigen::MatrixXd weights_;
  Eigen::MatrixXd adjoint_weights_;  // W^T scaled back by node weights
};

std::shared_ptr<const NonlocalOperator> make_operator(GridPtr grid, const KernelSpec& spec);

constexpr int kDenseAssemblyLimit = 4096;

/// Explicit space-time matrix of a linear operator on the given time axis,
/// acting on row-major flattened fields (level-major). Throws
/// std::length_error above kDenseAssemblyLimit unknowns.
Eigen::MatrixXd assemble_dense(const NonlocalOperator& op, const GridPtr& grid, const TimeAxis& time);

/// L^2(Q)-induced operator norm of a dense space-time matrix by power
/// iteration on M^* M with the trapezoid weights.
double dense_operator_norm(const Eigen::MatrixXd& m, const Grid& grid, const TimeAxis& time, int iters = 200);

}  // namespace npc
