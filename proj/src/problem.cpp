#include "npc/problem.hpp"

#include <cmath>
#include <stdexcept>

namespace npc {

void validate_betas(const Betas& b) {
  if (!(b.rho >= 0.0 && b.mu >= 0.0 && b.control >= 0.0)) {
    throw std::invalid_argument("betas: all weights must be nonnegative");
  }
  if (!(b.rho + b.mu + b.control > 0.0)) throw std::invalid_argument("betas: weights must have a positive sum");
}

void validate_constraints(const ControlConstraints& c) {
  if (!(c.R > 0.0) || !std::isfinite(c.R)) throw std::invalid_argument("constraints: R must be positive");
  if (!c.u_max.grid) throw std::invalid_argument("constraints: u_max missing");
  if (!c.u_max.all_finite() || c.u_max.values.minCoeff() < 0.0) {
    throw std::invalid_argument("constraints: u_max must be finite and nonnegative");
  }
}

}  // namespace npc
