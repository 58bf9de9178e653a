#pragma once

#include "npc/grid.hpp"
#include "npc/nonlocal.hpp"
#include "npc/physics.hpp"
#include "npc/state_solver.hpp"

#include <memory>

namespace npc {

/// Tracking weights of the cost: beta_rho on the order parameter, beta_mu on
/// the chemical potential, beta_u on the control. All >= 0 with a positive sum.
struct Betas {
  double rho = 1.0;
  double mu = 1.0;
  double control = 0.0;

  bool operator==(const Betas&) const = default;
};

void validate_betas(const Betas& b);

struct Targets {
  SpaceTimeField rho;
  SpaceTimeField mu;
};

/// Admissible set: 0 <= u <= u_max pointwise and ||u||_{H^1(0,T;L^2)} <= R.
struct ControlConstraints {
  SpaceTimeField u_max;
  double R = 1.0;
};

void validate_constraints(const ControlConstraints& c);

/// Everything needed to evaluate the reduced cost u -> J(u, S(u)).
struct Problem {
  GridPtr grid;
  TimeAxis time;
  Physics physics{PotentialSpec{}};
  std::shared_ptr<const NonlocalOperator> B;
  InitialData init;
  Targets targets;
  Betas betas;
  ControlConstraints constraints;
  SolverConfig solver;

  SpaceTimeField zero_field() const { return SpaceTimeField(grid, time); }
};

}  // namespace npc
