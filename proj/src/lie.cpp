#include "relkal/lie.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Geometry>
#include <Eigen/SVD>

namespace relkal::lie {

namespace {

// Coefficient ratios of the Rodrigues / left-Jacobian formulas with their
// degree-4 Taylor expansions for small angles. t2 = theta^2.

double sinc(double theta, double t2) {
  if (theta < kSmallAngle) return 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
  return std::sin(theta) / theta;
}

double one_minus_cos_over_t2(double theta, double t2) {
  if (theta < kSmallAngle) return 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  return (1.0 - std::cos(theta)) / t2;
}

double t_minus_sin_over_t3(double theta, double t2) {
  if (theta < kSmallAngle) return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  return (theta - std::sin(theta)) / (t2 * theta);
}

// Quadratic coefficient of J_l^{-1} = I - skew(w)/2 + c * skew(w)^2.
double jl_inv_quadratic(double theta, double t2) {
  if (theta < kSmallAngle) return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  return 1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
}

}  // namespace

Mat3 skew(const Vec3& w) {
  Mat3 S;
  // clang-format off
  S <<     0, -w.z(),  w.y(),
       w.z(),      0, -w.x(),
      -w.y(),  w.x(),      0;
  // clang-format on
  return S;
}

Vec3 unskew(const Mat3& S) { return Vec3(S(2, 1), S(0, 2), S(1, 0)); }

Mat3 exp_so3(const Vec3& w) {
  const double t2 = w.squaredNorm();
  const double theta = std::sqrt(t2);
  const Mat3 W = skew(w);
  return Mat3::Identity() + sinc(theta, t2) * W +
         one_minus_cos_over_t2(theta, t2) * (W * W);
}

Vec3 log_so3(const Mat3& R) {
  // Quaternion-based extraction is well conditioned over the whole ball,
  // including angles close to pi where the classic trace formula degrades.
  const Eigen::AngleAxisd aa{Eigen::Quaterniond(R)};
  if (aa.angle() >= M_PI - 1e-6) {
    throw std::domain_error("log_so3: rotation near cut locus");
  }
  return aa.angle() * aa.axis();
}

Mat3 left_jacobian_so3(const Vec3& w) {
  const double t2 = w.squaredNorm();
  const double theta = std::sqrt(t2);
  const Mat3 W = skew(w);
  return Mat3::Identity() + one_minus_cos_over_t2(theta, t2) * W +
         t_minus_sin_over_t3(theta, t2) * (W * W);
}

Mat3 left_jacobian_inv_so3(const Vec3& w) {
  const double t2 = w.squaredNorm();
  const double theta = std::sqrt(t2);
  const Mat3 W = skew(w);
  return Mat3::Identity() - 0.5 * W + jl_inv_quadratic(theta, t2) * (W * W);
}

Mat3 project_to_so3(const Mat3& M) {
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 UVt = svd.matrixU() * svd.matrixV().transpose();
  if (UVt.determinant() < 0.0) {
    Mat3 D = Mat3::Identity();
    D(2, 2) = -1.0;
    UVt = svd.matrixU() * D * svd.matrixV().transpose();
  }
  return UVt;
}

Mat5 SE23::matrix() const {
  Mat5 M = Mat5::Identity();
  M.block<3, 3>(0, 0) = R;
  M.block<3, 1>(0, 3) = v;
  M.block<3, 1>(0, 4) = x;
  return M;
}

SE23 SE23::from_matrix(const Mat5& M) {
  return SE23{M.block<3, 3>(0, 0), M.block<3, 1>(0, 3), M.block<3, 1>(0, 4)};
}

double SE23::invariant_violation() const {
  const double ortho = (R.transpose() * R - Mat3::Identity()).norm();
  const double det = std::abs(R.determinant() - 1.0);
  return std::max(ortho, det);
}

Vec9 alg(const Vec3& omega, const Vec3& a, const Vec3& u) {
  Vec9 w;
  w << omega, a, u;
  return w;
}

Eigen::Ref<const Vec3> omega_part(const Vec9& w) { return w.segment<3>(0); }
Eigen::Ref<const Vec3> a_part(const Vec9& w) { return w.segment<3>(3); }
Eigen::Ref<const Vec3> u_part(const Vec9& w) { return w.segment<3>(6); }

Mat5 hat(const Vec9& w) {
  Mat5 W = Mat5::Zero();
  W.block<3, 3>(0, 0) = skew(w.segment<3>(0));
  W.block<3, 1>(0, 3) = w.segment<3>(3);
  W.block<3, 1>(0, 4) = w.segment<3>(6);
  return W;
}

Vec9 vee(const Mat5& W) {
  Vec9 w;
  w << unskew(W.block<3, 3>(0, 0)), W.block<3, 1>(0, 3), W.block<3, 1>(0, 4);
  return w;
}

SE23 exp_se23(const Vec9& w) {
  const Vec3 omega = w.segment<3>(0);
  const Mat3 Jl = left_jacobian_so3(omega);
  return SE23{exp_so3(omega), Jl * w.segment<3>(3), Jl * w.segment<3>(6)};
}

Vec9 log_se23(const SE23& g) {
  const Vec3 omega = log_so3(g.R);
  const Mat3 Jinv = left_jacobian_inv_so3(omega);
  return alg(omega, Jinv * g.v, Jinv * g.x);
}

Mat9 adjoint_matrix(const SE23& g) {
  Mat9 Ad = Mat9::Zero();
  Ad.block<3, 3>(0, 0) = g.R;
  Ad.block<3, 3>(3, 0) = skew(g.v) * g.R;
  Ad.block<3, 3>(3, 3) = g.R;
  Ad.block<3, 3>(6, 0) = skew(g.x) * g.R;
  Ad.block<3, 3>(6, 6) = g.R;
  return Ad;
}

Mat9 ad_matrix(const Vec9& w) {
  const Mat3 W = skew(w.segment<3>(0));
  Mat9 ad = Mat9::Zero();
  ad.block<3, 3>(0, 0) = W;
  ad.block<3, 3>(3, 0) = skew(w.segment<3>(3));
  ad.block<3, 3>(3, 3) = W;
  ad.block<3, 3>(6, 0) = skew(w.segment<3>(6));
  ad.block<3, 3>(6, 6) = W;
  return ad;
}

}  // namespace relkal::lie
