#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relkal/lie.hpp"

// Dynamics in the split form
//
//   g' = xi(t) g + X~(g) + g zeta(t),      X~(e) = 0,
//
// together with numeric verifiers for the conditions under which invariant
// errors and relative states evolve autonomously, and the corresponding
// autonomous right-hand sides. All tangent values are ambient 5x5 matrices;
// X~ itself is supplied in left-trivialized coordinates and converted where
// the formulas mix translations.

namespace relkal::sti {

using lie::Chirality;
using lie::Mat5;
using lie::SE23;
using lie::Vec9;

/// A vector field split into a left slot xi(t), a right slot zeta(t) and the
/// state-dependent remainder tilde (left-trivialized: the tangent value at g
/// is g * hat(tilde(g))). Fields capture their own input signals, so two
/// DecomposedField instances stand for the same dynamics under two inputs.
struct DecomposedField {
  std::function<Vec9(double)> xi;
  std::function<Vec9(double)> zeta;
  std::function<Vec9(const SE23&)> tilde;
};

/// Ambient tangent value of the state-dependent part: g * hat(tilde(g)).
Mat5 tilde_tangent(const DecomposedField& d, const SE23& g);

/// Full field at (g, t): hat(xi) g + g hat(tilde(g)) + g hat(zeta).
Mat5 reconstruct_field(const DecomposedField& d, const SE23& g, double t);

/// Evaluation point for the condition checks.
struct Sample {
  SE23 h;
  SE23 g;
  double t = 0.0;
};

/// Group points drawn as exp of uniform [-2,2]^9 coordinates, times uniform
/// on [0, t_max].
std::vector<Sample> draw_samples(int n, double t_max, std::uint64_t seed);

struct ConditionReport {
  std::string condition;
  double max_residual = 0.0;
  int sample_count = 0;
  double threshold = 0.0;
  bool pass = false;
};

void to_json(nlohmann::json& j, const ConditionReport& r);

inline constexpr double kDefaultThreshold = 1e-9;

/// Error-trajectory independence of a single field: residual of
/// X~(hg) - h X~(g) - X~(h) g over the samples.
ConditionReport check_eti(const DecomposedField& d,
                          const std::vector<Sample>& samples,
                          double threshold = kDefaultThreshold);

/// Independence of the left relative state between two trajectories with
/// inputs u1 (d1) and u2 (d2).
ConditionReport check_l_rti(const DecomposedField& d1,
                            const DecomposedField& d2,
                            const std::vector<Sample>& samples,
                            double threshold = kDefaultThreshold);

/// Independence of the right relative state; fails whenever the right slots
/// of the two fields differ.
ConditionReport check_r_rti(const DecomposedField& d1,
                            const DecomposedField& d2,
                            const std::vector<Sample>& samples,
                            double threshold = kDefaultThreshold);

// Autonomous right-hand sides (ambient 5x5 tangent values).

/// Left-invariant error f: X~(f) + f zeta - zeta f.
Mat5 error_ode_left(const DecomposedField& d, const SE23& f, double t);

/// Right-invariant error h: X~(h) + xi h - h xi.
Mat5 error_ode_right(const DecomposedField& d, const SE23& h, double t);

/// Left relative state: (xi2 - xi1 - zeta1) g + X~(g, u2) + g zeta2.
Mat5 relative_ode_left(const DecomposedField& d1, const DecomposedField& d2,
                       const SE23& g12, double t);

/// Right relative state: xi1 g + X~(g, u1) + g (zeta1 - zeta2 - xi2).
Mat5 relative_ode_right(const DecomposedField& d1, const DecomposedField& d2,
                        const SE23& g12, double t);

/// Estimation error of the relative state, for either chirality of the
/// relative state and either chirality of the error.
Mat5 rel_error_ode(const DecomposedField& d1, const DecomposedField& d2,
                   const SE23& err, Chirality err_chirality,
                   Chirality rel_chirality, double t);

/// Validates the independence precondition for the requested relative-state
/// chirality on a sample set, then returns the autonomous RHS as a callable.
/// Throws std::runtime_error("RTI precondition violated") on failure.
std::function<Mat5(const SE23&, double)> make_rel_error_ode(
    const DecomposedField& d1, const DecomposedField& d2,
    Chirality err_chirality, Chirality rel_chirality,
    const std::vector<Sample>& samples,
    double threshold = kDefaultThreshold);

}  // namespace relkal::sti
