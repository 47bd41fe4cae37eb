#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include "relkal/lie.hpp"
#include "relkal/models.hpp"

// Relative-state Kalman filters on SE_2(3) plus a quaternion EKF baseline.
//
// Two Gaussian parametrizations are used, distinguished by chirality:
//   left  (L): g = g_bar * exp(-theta^), covariance P over theta
//   right (R): g = exp(-phi^) * g_bar,   covariance P over phi
// Propagation integrates the mean and covariance jointly with RK4 over each
// IMU interval; corrections are standard Kalman updates with a group
// retraction of the mean.

namespace relkal::filters {

using lie::Chirality;
using lie::Mat3;
using lie::Mat9;
using lie::SE23;
using lie::Vec3;
using lie::Vec9;
using models::ImuInput;
using models::ImuNoiseSpec;
using models::MeasurementModel;

struct Belief {
  SE23 mean;
  Mat9 cov = Mat9::Zero();
  Chirality chirality = Chirality::kLeft;

  /// Max-abs asymmetry of cov; healthy beliefs keep this below 1e-10.
  double symmetry_violation() const;
  nlohmann::json to_json() const;
};

/// Consumer-grade and tactical-grade IMU noise densities used by the
/// benchmark scenarios.
inline constexpr ImuNoiseSpec kImuAlpha{6.108e-5, 1.373e-3};
inline constexpr ImuNoiseSpec kImuBeta{1.2218e-3, 1.2355e-2};

enum class CaseLabel { kI, kII, kIII };

/// Noise assignment for the two IMU streams.
struct ProcessNoiseCase {
  ImuNoiseSpec sigma1;
  ImuNoiseSpec sigma2;
  CaseLabel label = CaseLabel::kII;
};

/// Case I: vehicle 1 carries the better IMU; case II: both good; case III:
/// vehicle 2 carries the better IMU.
ProcessNoiseCase process_noise_case(CaseLabel label);

const char* case_name(CaseLabel label);

/// diag(sigma_g^2 I3, sigma_a^2 I3, 0): continuous-time covariance of the
/// IMU noise lifted into the 9-dim algebra.
Mat9 noise_covariance(const ImuNoiseSpec& spec);

/// Linearized error dynamics: for zeta = (Omega, a, u) returns
/// [[-Omega^,0,0],[-a^,-Omega^,0],[-u^,I,-Omega^]]. Depends on zeta only.
Mat9 matrix_A(const Vec9& zeta);

/// Adjoint of g as a 9x9 matrix; maps algebra noise between the two
/// trivializations. Identical to lie::adjoint_matrix.
Mat9 matrix_G(const SE23& g);

/// Left-chirality propagation over one IMU interval:
///   mean: g_dot = -zeta1 g + drift(g) + g zeta2
///   cov:  P_dot = A(zeta2) P + P A(zeta2)^T + Sigma2 + G(g^-1) Sigma1 G(g^-1)^T
/// Throws std::invalid_argument on dt <= 0 or non-finite inputs.
Belief lrkf_propagate(const Belief& b, const ImuInput& u1, const ImuInput& u2,
                      const ProcessNoiseCase& kase, double dt);

/// Right-chirality propagation: same mean flow;
///   P_dot = A(zeta1) P + P A(zeta1)^T + Sigma1 + G(g) Sigma2 G(g)^T.
Belief rrkf_propagate(const Belief& b, const ImuInput& u1, const ImuInput& u2,
                      const ProcessNoiseCase& kase, double dt);

// Corrections. sigma_z is the nominal measurement covariance (position block
// plus one direction block per known direction, expressed about the
// reference axes b_i); callers precompute it once per scenario, and each
// correction rotates the direction blocks onto the axes its innovation
// actually sees. All four throw std::runtime_error("degenerate innovation
// covariance") when the innovation covariance is numerically singular
// (condition number above 1e12), and std::invalid_argument on a
// wrong-chirality model or a size mismatch.

/// Matched pair: left filter, left-invariant measurement. Uses the
/// pseudo-measurement lift; the measurement matrix is state-independent, and
/// the group action forming the innovation lands the direction-noise frames
/// on the reference axes, so sigma_z enters unconjugated.
Belief lrkf_correct_zL(const Belief& b, const Eigen::VectorXd& z,
                       const MeasurementModel& model,
                       const Eigen::MatrixXd& sigma_z);

/// Mismatched pair: left filter, right-invariant measurement;
/// standard-form linearization about the current mean.
Belief lrkf_correct_zR(const Belief& b, const Eigen::VectorXd& z,
                       const MeasurementModel& model,
                       const Eigen::MatrixXd& sigma_z);

/// Mismatched pair: right filter, left-invariant measurement.
Belief rrkf_correct_zL(const Belief& b, const Eigen::VectorXd& z,
                       const MeasurementModel& model,
                       const Eigen::MatrixXd& sigma_z);

/// Matched pair: right filter, right-invariant measurement
/// (pseudo-measurement lift, state-independent measurement matrix).
Belief rrkf_correct_zR(const Belief& b, const Eigen::VectorXd& z,
                       const MeasurementModel& model,
                       const Eigen::MatrixXd& sigma_z);

/// Dispatch on (b.chirality, model.kind).
Belief correct(const Belief& b, const Eigen::VectorXd& z,
               const MeasurementModel& model, const Eigen::MatrixXd& sigma_z);

/// Dispatch on b.chirality.
Belief propagate(const Belief& b, const ImuInput& u1, const ImuInput& u2,
                 const ProcessNoiseCase& kase, double dt);

/// The measurement matrix the correction for (filter chirality, model.kind)
/// linearizes with, evaluated at `mean`. Matched pairs return matrices with
/// no dependence on `mean`.
Eigen::MatrixXd measurement_jacobian(Chirality filter,
                                     const MeasurementModel& model,
                                     const SE23& mean);

/// Innovation of the corresponding correction at `mean` (zero for a
/// noise-free measurement of the mean itself).
Eigen::VectorXd innovation(const Belief& b, const Eigen::VectorXd& z,
                           const MeasurementModel& model);

/// Applies a correction with an externally supplied gain; the production
/// corrections reduce to this with L = P H^T S^-1. With L = 0 the prior is
/// returned unchanged.
Belief correct_with_gain(const Belief& b, const Eigen::MatrixXd& L,
                         const Eigen::MatrixXd& H, const Eigen::VectorXd& nu);

/// Re-parametrize the Gaussian on the other side of the mean:
/// L -> R uses P_R = Ad_g P Ad_g^T, R -> L uses P_L = Ad_{g^-1} P Ad_{g^-1}^T.
Belief convert_chirality(const Belief& b);

// --- Quaternion EKF baseline -----------------------------------------------

/// Multiplicative error-state EKF on (unit quaternion, v, x) with error
/// (delta_theta, delta_v, delta_x), attitude error right-multiplicative:
/// R = R_bar exp(delta_theta^).
struct QekfState {
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();  // Hamilton, frame 1<-2
  Vec3 v = Vec3::Zero();
  Vec3 x = Vec3::Zero();
  Mat9 P = Mat9::Zero();

  Mat3 rotation() const { return q.toRotationMatrix(); }
  SE23 mean() const;
};

QekfState qekf_init(const SE23& mean, const Mat9& P0);

QekfState qekf_propagate(const QekfState& s, const ImuInput& u1,
                         const ImuInput& u2, const ProcessNoiseCase& kase,
                         double dt);

/// Standard error-state update, linearized at the current estimate. The
/// measurement covariance is the conventional constant built from the
/// nominal sensor parameters (sigma_pos^2 I per axis for position,
/// isotropic sigma_dir^2 I per direction block); the baseline does not
/// model the sampled anisotropy of rotated-direction noise.
QekfState qekf_correct(const QekfState& s, const Eigen::VectorXd& z,
                       const MeasurementModel& model);

/// Propagate over dt, then correct if z is non-null.
QekfState qekf_step(const QekfState& s, const ImuInput& u1, const ImuInput& u2,
                    const ProcessNoiseCase& kase, const Eigen::VectorXd* z,
                    const MeasurementModel& model, double dt);

/// Error-state transition matrix F at the current estimate (exposed for
/// finite-difference validation).
Mat9 qekf_state_matrix(const QekfState& s, const ImuInput& u1,
                       const ImuInput& u2);

/// Measurement Jacobian of the QEKF error state for the given model.
Eigen::MatrixXd qekf_measurement_jacobian(const QekfState& s,
                                          const MeasurementModel& model);

}  // namespace relkal::filters
