#pragma once

#include "relkal/lie.hpp"

// RK4 steppers shared by the trajectory-independence checks, the truth
// propagation and the filters. Group-valued states are integrated on the 5x5
// embedding and the rotation block is projected back onto SO(3) afterwards.

namespace relkal {

/// One classic RK4 step of M' = rhs(t, M) for a matrix- or vector-valued
/// state. rhs must accept (double, const State&) and return a State.
template <class State, class Rhs>
State rk4_step(const Rhs& rhs, double t, double dt, const State& m0) {
  const State k1 = rhs(t, m0);
  const State k2 = rhs(t + 0.5 * dt, State(m0 + 0.5 * dt * k1));
  const State k3 = rhs(t + 0.5 * dt, State(m0 + 0.5 * dt * k2));
  const State k4 = rhs(t + dt, State(m0 + dt * k3));
  return m0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// RK4 step of a group-valued ODE whose right-hand side returns the ambient
/// 5x5 tangent value at the current point; re-projects the rotation block.
template <class Rhs>
lie::SE23 rk4_group_step(const Rhs& rhs, double t, double dt,
                         const lie::SE23& g) {
  lie::SE23 out = lie::SE23::from_matrix(rk4_step(rhs, t, dt, g.matrix()));
  out.R = lie::project_to_so3(out.R);
  return out;
}

}  // namespace relkal
