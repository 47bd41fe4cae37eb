#pragma once

#include <Eigen/Dense>

// Matrix Lie group core for SO(3) and SE_2(3).
//
// SE_2(3) elements are (R, v, x) tuples with the 5x5 embedding
//   [ R  v  x ]
//   [ 0  1  0 ]
//   [ 0  0  1 ]
// Algebra vectors are 9-vectors ordered [omega; a; u] where omega pairs with
// the rotation block, a with the v column and u with the x column.

namespace relkal::lie {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

// Angles below this threshold switch to degree-4 Taylor expansions of the
// trigonometric coefficient ratios.
inline constexpr double kSmallAngle = 1e-4;

/// Side on which errors / corrections multiply the state.
enum class Chirality { kLeft, kRight };

/// skew(w) * y == w x y (cross product).
Mat3 skew(const Vec3& w);

/// Inverse of skew for an exactly skew-symmetric matrix; reads the three
/// independent entries without symmetrizing.
Vec3 unskew(const Mat3& S);

/// Rodrigues formula.
Mat3 exp_so3(const Vec3& w);

/// Rotation vector of R. Robust near angle pi via quaternion extraction;
/// throws std::domain_error("near cut locus") for angle >= pi - 1e-6.
Vec3 log_so3(const Mat3& R);

/// SO(3) left Jacobian J_l(w).
Mat3 left_jacobian_so3(const Vec3& w);

/// Inverse of the SO(3) left Jacobian.
Mat3 left_jacobian_inv_so3(const Vec3& w);

/// Nearest rotation matrix (polar factor with det +1), used to pull drifted
/// rotation blocks back onto SO(3) after integration steps.
Mat3 project_to_so3(const Mat3& M);

/// Element of SE_2(3) stored as the (R, v, x) tuple.
struct SE23 {
  Mat3 R = Mat3::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 x = Vec3::Zero();

  SE23() = default;
  SE23(const Mat3& R_, const Vec3& v_, const Vec3& x_) : R(R_), v(v_), x(x_) {}

  static SE23 Identity() { return SE23{}; }

  /// Group operation: (R1 R2, R1 v2 + v1, R1 x2 + x1).
  SE23 operator*(const SE23& o) const {
    return SE23{R * o.R, R * o.v + v, R * o.x + x};
  }

  /// (R^T, -R^T v, -R^T x).
  SE23 inverse() const {
    const Mat3 Rt = R.transpose();
    return SE23{Rt, -(Rt * v), -(Rt * x)};
  }

  /// 5x5 homogeneous embedding.
  Mat5 matrix() const;

  /// Reads the (R, v, x) blocks of a 5x5 embedding (no validation).
  static SE23 from_matrix(const Mat5& M);

  /// Max violation of orthonormality / determinant / embedding structure,
  /// for use in tests and debug assertions.
  double invariant_violation() const;
};

/// Builds the 9-vector [omega; a; u].
Vec9 alg(const Vec3& omega, const Vec3& a, const Vec3& u);

Eigen::Ref<const Vec3> omega_part(const Vec9& w);
Eigen::Ref<const Vec3> a_part(const Vec9& w);
Eigen::Ref<const Vec3> u_part(const Vec9& w);

/// 9-vector -> 5x5 algebra element.
Mat5 hat(const Vec9& w);

/// Exact inverse of hat (reads entries; no symmetrization).
Vec9 vee(const Mat5& W);

/// Closed-form exponential: R = Rodrigues(omega), v = J_l(omega) a,
/// x = J_l(omega) u. Equals expm(hat(w)).
SE23 exp_se23(const Vec9& w);

/// Inverse of exp_se23 on the injectivity neighborhood (angle < pi).
Vec9 log_se23(const SE23& g);

/// Adjoint of g as a 9x9 matrix: hat(Ad(g) w) = g hat(w) g^-1.
/// Blocks: [[R,0,0],[skew(v)R,R,0],[skew(x)R,0,R]].
Mat9 adjoint_matrix(const SE23& g);

/// Algebra adjoint: hat(ad(w1) w2) = [hat(w1), hat(w2)].
/// Blocks: [[W,0,0],[A,W,0],[U,0,W]] with W=skew(omega) etc.
Mat9 ad_matrix(const Vec9& w);

}  // namespace relkal::lie
