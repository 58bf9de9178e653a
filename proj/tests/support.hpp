#pragma once

#include "npc/grid.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace npc::test {

inline constexpr double kPi = std::numbers::pi;

inline GridPtr line(int cells, double length = 1.0) {
  GridSpec s;
  s.dim = 1;
  s.lengths = {length, 1.0};
  s.cells = {cells, 1};
  return build_grid(s);
}

inline GridPtr square(int cells) {
  GridSpec s;
  s.dim = 2;
  s.cells = {cells, cells};
  return build_grid(s);
}

inline SpaceTimeField random_field(const GridPtr& g, const TimeAxis& t, std::mt19937_64& rng, double lo = -1.0,
                                   double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  SpaceTimeField f(g, t);
  for (Eigen::Index k = 0; k < f.values.size(); ++k) f.values.data()[k] = d(rng);
  return f;
}

inline SpaceTimeField constant(const GridPtr& g, const TimeAxis& t, double c) {
  SpaceTimeField f(g, t);
  f.values.setConstant(c);
  return f;
}

inline double max_abs(const RowMat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace npc::test
