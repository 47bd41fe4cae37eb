#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "relkal/lie.hpp"
#include "relkal/sti.hpp"

// Two-vehicle kinematics on SE_2(3): analytic reference trajectories, IMU
// synthesis, noisy truth propagation, and the left-/right-invariant
// measurement models with their pseudo-measurement lift.
//
// Frame convention: the third inertial axis points downward along gravity,
// so the gravity acceleration is +kGravity * e3 and a static accelerometer
// reads -kGravity * e3.

namespace relkal::models {

using lie::Chirality;
using lie::Mat3;
using lie::SE23;
using lie::Vec3;
using lie::Vec9;

inline constexpr double kGravity = 9.81;  // m/s^2

inline Vec3 gravity_vec() { return Vec3(0.0, 0.0, kGravity); }

struct ImuInput {
  Vec3 omega = Vec3::Zero();  // rad/s, body rate
  Vec3 accel = Vec3::Zero();  // m/s^2, specific force
};

/// Continuous-time noise densities (per sqrt(Hz)).
struct ImuNoiseSpec {
  double sigma_g = 0.0;
  double sigma_a = 0.0;
};

struct MeasurementModel {
  Chirality kind = Chirality::kLeft;
  std::vector<Vec3> directions;  // unit vectors, resolved in the frame of
                                 // vehicle 2
  double sigma_pos = 0.5;        // m, per axis
  double sigma_dir = 0.0;        // rad, rotation-vector std per axis
  double rate = 2.0;             // Hz

  /// Throws std::invalid_argument on non-unit directions or rate <= 0.
  void validate() const;

  int dim() const { return 3 + 3 * static_cast<int>(directions.size()); }
};

/// Position + three known directions at 2 Hz, 0.5 m and 5 deg noise.
MeasurementModel default_measurement_model(Chirality kind);

struct TruthSample {
  double t = 0.0;
  SE23 g1, g2;
  SE23 g12;  // inverse(g1) * g2
  ImuInput u1, u2;              // noise-free readings for the last step
  ImuInput u1_noisy, u2_noisy;  // inputs that actually drove the truth
};

struct TrajectoryPoint {
  Vec3 x1, x1d, x1dd;
  Vec3 x2, x2d, x2dd;
};

/// Analytic reference curves: vehicle 1 on a circle, vehicle 2 on a
/// Lissajous curve, with first and second derivatives.
TrajectoryPoint trajectory_pair(double t);

/// Right-handed frame with column 1 along the tangent and column 3 the
/// downward axis projected orthogonal to it. Throws std::domain_error
/// ("degenerate frame") when the tangent is vertical within 1e-6.
Mat3 attitude_from_tangent(const Vec3& xdot);

/// Body rate from R^T Rdot (skew-symmetrized) and specific force
/// R^T (vdot - g e3).
ImuInput imu_from_trajectory(const Mat3& R, const Mat3& Rdot,
                             const Vec3& vdot);

/// Analytic truth state of agent 1 or 2 at time t.
SE23 agent_truth(int agent, double t);

/// IMU reading synthesized from the analytic trajectory; the attitude rate
/// comes from a central finite difference of the frame construction.
ImuInput agent_imu(int agent, double t);

/// Truth sample at t = 0 (noise-free inputs evaluated at 0).
TruthSample truth_init();

/// Advances both vehicles over one step of length dt. u1, u2 are the IMU
/// readings for the step; the truth integrates (omega - wg, accel - wa),
/// held constant over the RK4 step, with rotation re-projection. g12 is
/// recomputed from the advanced states.
TruthSample relative_truth_step(const TruthSample& s, double dt,
                                const ImuInput& u1, const ImuInput& u2,
                                const Vec3& w1g, const Vec3& w1a,
                                const Vec3& w2g, const Vec3& w2a);

/// Noise-free measurement value Z(g12) for the model's kind:
/// [x; R b_i ...] (left) or [-R^T x; R^T b_i ...] (right).
Eigen::VectorXd measurement_value(const SE23& g12,
                                  const MeasurementModel& m);

/// Left-invariant measurement: position block plus additive noise, direction
/// blocks rotated by exp(hat(w_i)). pos_noise is the realized additive noise
/// vector; dir_noise holds one rotation vector per direction.
Eigen::VectorXd measure_left(const SE23& g12, const MeasurementModel& m,
                             const Vec3& pos_noise,
                             const std::vector<Vec3>& dir_noise);

/// Right-invariant counterpart.
Eigen::VectorXd measure_right(const SE23& g12, const MeasurementModel& m,
                              const Vec3& pos_noise,
                              const std::vector<Vec3>& dir_noise);

/// Empirical covariance of {exp(hat(w)) b - b} over n_samples draws
/// w ~ N(0, sigma_dir^2 I).
Mat3 direction_noise_cov(const Vec3& b, double sigma_dir, int n_samples,
                         std::uint64_t seed);

/// Block-diagonal measurement covariance: sigma_pos^2 I3 followed by one
/// sampled direction covariance per b_i, each projected onto its exact axial
/// symmetry about b_i (the rotation noise is isotropic, so radial-tangential
/// cross terms are structural zeros). Precomputed once per model.
Eigen::MatrixXd measurement_covariance(const MeasurementModel& m,
                                       int n_samples, std::uint64_t seed);

struct PseudoLift {
  Eigen::VectorXd tilde_z;  // blocks padded to length 5
  Eigen::VectorXd B;        // known vector in the lifted space
  Eigen::MatrixXd Pi;       // recovers z = Pi * tilde_z
};

/// Pads each 3-block of z to 5 entries — (0,1) after the position block,
/// (0,0) after direction blocks — and returns the matching constant B and
/// projection Pi. Throws std::invalid_argument on a length mismatch.
PseudoLift lift_pseudo(const Eigen::VectorXd& z, const MeasurementModel& m);

/// Applies g block-diagonally to a stacked vector of 5-blocks.
Eigen::VectorXd apply_group_blocks(const SE23& g, const Eigen::VectorXd& v);

/// Canonical split of the vehicle dynamics for the independence checks:
/// gravity in the left slot, IMU inputs in the right slot, velocity
/// remainder in left-trivialized coordinates.
sti::DecomposedField vehicle_field(std::function<ImuInput(double)> input);

/// Which state sequence of a truth log to export.
enum class TruthSelect { kAgent1, kAgent2, kRelative };

/// Columns: t, R row-major (9), v (3), x (3); one documented header row.
void write_truth_csv(std::ostream& os, const std::vector<TruthSample>& log,
                     TruthSelect select);

/// Columns: t followed by the measurement entries.
void write_measurements_csv(std::ostream& os,
                            const std::vector<double>& times,
                            const std::vector<Eigen::VectorXd>& zs);

}  // namespace relkal::models
