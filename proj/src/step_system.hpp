#pragma once

// Per-step linear algebra shared by the forward, tangent and adjoint sweeps.

#include "npc/grid.hpp"
#include "npc/physics.hpp"

#include <Eigen/SparseLU>

namespace npc::detail {

/// Coefficients of one forward step n -> n+1, frozen at the old level.
struct StepCoefficients {
  Vec a;        // 1 + 2 g(r_n)
  Vec c;        // g'(r_n)
  Vec c2;       // g''(r_n)
  Vec drho;     // (r_{n+1} - r_n)/tau
  Vec dmu;      // (m_{n+1} - m_n)/tau
  Vec fpp_new;  // F''(r_{n+1})
};

inline StepCoefficients step_coefficients(const Physics& phys, const Eigen::Ref<const Vec>& rho_old,
                                          const Eigen::Ref<const Vec>& rho_new, const Eigen::Ref<const Vec>& mu_old,
                                          const Eigen::Ref<const Vec>& mu_new, double tau) {
  const int m = static_cast<int>(rho_old.size());
  StepCoefficients s;
  s.a.resize(m);
  s.c.resize(m);
  s.c2.resize(m);
  s.fpp_new.resize(m);
  for (int i = 0; i < m; ++i) {
    s.a[i] = 1.0 + 2.0 * phys.g(rho_old[i]);
    s.c[i] = phys.g_prime(rho_old[i]);
    s.c2[i] = phys.g_second(rho_old[i]);
    s.fpp_new[i] = phys.F_second(rho_new[i]);
  }
  s.drho = (rho_new - rho_old) / tau;
  s.dmu = (mu_new - mu_old) / tau;
  return s;
}

/// 2x2 block operator [diag(d11), diag(d12) - L; diag(d21), diag(d22)] with
/// rows [E1; E2] and columns [rho; mu].
inline SpMat block_system(const Grid& grid, const Eigen::Ref<const Vec>& d11, const Eigen::Ref<const Vec>& d12,
                          const Eigen::Ref<const Vec>& d21, const Eigen::Ref<const Vec>& d22) {
  const int m = grid.node_count();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(grid.laplacian().nonZeros() + 4 * m);
  const SpMat& lap = grid.laplacian();
  for (int k = 0; k < lap.outerSize(); ++k) {
    for (SpMat::InnerIterator it(lap, k); it; ++it) t.emplace_back(it.row(), m + it.col(), -it.value());
  }
  for (int i = 0; i < m; ++i) {
    t.emplace_back(i, i, d11[i]);
    t.emplace_back(i, m + i, d12[i]);
    t.emplace_back(m + i, i, d21[i]);
    t.emplace_back(m + i, m + i, d22[i]);
  }
  SpMat j(2 * m, 2 * m);
  j.setFromTriplets(t.begin(), t.end());
  j.makeCompressed();
  return j;
}

/// Jacobian of the step residual with respect to (r_{n+1}, m_{n+1}).
inline SpMat step_jacobian(const Grid& grid, const StepCoefficients& s, const Eigen::Ref<const Vec>& mu_new,
                           double tau) {
  const Vec d11 = (mu_new.array() * s.c.array() / tau).matrix();
  const Vec d12 = (s.a.array() / tau + s.c.array() * s.drho.array()).matrix();
  const Vec d21 = (1.0 / tau + s.fpp_new.array()).matrix();
  const Vec d22 = -s.c;
  return block_system(grid, d11, d12, d21, d22);
}

/// Sparse LU whose symbolic analysis is reused while the pattern is fixed.
class StepSolver {
 public:
  bool factorize(const SpMat& a) {
    if (!analyzed_ || a.rows() != rows_) {
      lu_.analyzePattern(a);
      analyzed_ = true;
      rows_ = a.rows();
    }
    lu_.factorize(a);
    return lu_.info() == Eigen::Success;
  }
  Vec solve(const Vec& b) { return lu_.solve(b); }

 private:
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu_;
  bool analyzed_ = false;
  Eigen::Index rows_ = 0;
};

inline double pair_norm(const Grid& grid, const Eigen::Ref<const Vec>& r1, const Eigen::Ref<const Vec>& r2) {
  return std::sqrt(inner_h(grid, r1, r1) + inner_h(grid, r2, r2));
}

}  // namespace npc::detail
