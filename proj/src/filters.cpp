#include "relkal/filters.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace relkal::filters {

namespace {

using lie::Mat5;

constexpr double kConditionLimit = 1e12;

Vec9 zeta_of(const ImuInput& u) {
  return lie::alg(u.omega, u.accel, Vec3::Zero());
}

void require_propagation_inputs(const Belief& b, const ImuInput& u1,
                                const ImuInput& u2, double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("propagate: dt must be positive");
  }
  if (!b.mean.matrix().allFinite() || !b.cov.allFinite() ||
      !u1.omega.allFinite() || !u1.accel.allFinite() ||
      !u2.omega.allFinite() || !u2.accel.allFinite()) {
    throw std::invalid_argument("propagate: non-finite input");
  }
}

// Symmetrize and clamp roundoff-negative eigenvalues to zero. Anything more
// negative than -1e-9 * trace is a real PSD violation, not roundoff.
Mat9 condition_covariance(const Mat9& P_in) {
  Mat9 P = 0.5 * (P_in + P_in.transpose());
  Eigen::LLT<Mat9> llt(P);
  if (llt.info() == Eigen::Success) {
    return P;
  }
  Eigen::SelfAdjointEigenSolver<Mat9> es(P);
  const double floor = -1e-9 * std::abs(P.trace());
  if (es.eigenvalues().minCoeff() < floor) {
    throw std::runtime_error("covariance lost positive semidefiniteness");
  }
  if (es.eigenvalues().minCoeff() >= 0.0) {
    return P;
  }
  const Vec9 clamped = es.eigenvalues().cwiseMax(0.0);
  P = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (P + P.transpose());
}

// Ambient drift of the relative state: the only non-input term is the
// velocity feeding the position slot.
Mat5 mean_rate(const Mat5& M, const Mat5& Z1, const Mat5& Z2) {
  Mat5 d = -Z1 * M + M * Z2;
  d.block<3, 1>(0, 4) += M.block<3, 1>(0, 3);
  return d;
}

Belief propagate_impl(const Belief& b, const ImuInput& u1, const ImuInput& u2,
                      const ProcessNoiseCase& kase, double dt, bool left) {
  require_propagation_inputs(b, u1, u2, dt);

  const Vec9 zeta1 = zeta_of(u1);
  const Vec9 zeta2 = zeta_of(u2);
  const Mat5 Z1 = lie::hat(zeta1);
  const Mat5 Z2 = lie::hat(zeta2);
  const Mat9 A = matrix_A(left ? zeta2 : zeta1);
  const Mat9 sigma_direct =
      noise_covariance(left ? kase.sigma2 : kase.sigma1);
  const Mat9 sigma_conjugated =
      noise_covariance(left ? kase.sigma1 : kase.sigma2);

  auto cov_rate = [&](const Mat5& M, const Mat9& P) -> Mat9 {
    const SE23 g = SE23::from_matrix(M);
    const Mat9 G = left ? matrix_G(g.inverse()) : matrix_G(g);
    return A * P + P * A.transpose() + sigma_direct +
           G * sigma_conjugated * G.transpose();
  };

  const Mat5 M0 = b.mean.matrix();
  const Mat9& P0 = b.cov;
  const Mat5 k1m = mean_rate(M0, Z1, Z2);
  const Mat9 k1p = cov_rate(M0, P0);
  const Mat5 k2m = mean_rate(M0 + 0.5 * dt * k1m, Z1, Z2);
  const Mat9 k2p = cov_rate(M0 + 0.5 * dt * k1m, P0 + 0.5 * dt * k1p);
  const Mat5 k3m = mean_rate(M0 + 0.5 * dt * k2m, Z1, Z2);
  const Mat9 k3p = cov_rate(M0 + 0.5 * dt * k2m, P0 + 0.5 * dt * k2p);
  const Mat5 k4m = mean_rate(M0 + dt * k3m, Z1, Z2);
  const Mat9 k4p = cov_rate(M0 + dt * k3m, P0 + dt * k3p);

  SE23 mean =
      SE23::from_matrix(M0 + dt / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m));
  mean.R = lie::project_to_so3(mean.R);
  const Mat9 P =
      P0 + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
  return Belief{mean, condition_covariance(P), b.chirality};
}

void require_measurement(const Eigen::VectorXd& z,
                         const MeasurementModel& model, Chirality expected) {
  if (model.kind != expected) {
    throw std::invalid_argument("correct: measurement chirality mismatch");
  }
  if (z.size() != model.dim()) {
    throw std::invalid_argument("correct: measurement size mismatch");
  }
}

Eigen::MatrixXd block_rotation(const Mat3& R, int blocks) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(3 * blocks, 3 * blocks);
  for (int i = 0; i < blocks; ++i) {
    D.block<3, 3>(3 * i, 3 * i) = R;
  }
  return D;
}

// Shared tail of every correction: gain from the innovation covariance,
// retraction on the matching side, standard covariance update.
Belief finish_correction(const Belief& b, const Eigen::MatrixXd& H,
                         const Eigen::VectorXd& nu,
                         const Eigen::MatrixXd& sigma_eff) {
  Eigen::MatrixXd S = H * b.cov * H.transpose() + sigma_eff;
  S = 0.5 * (S + S.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi > kConditionLimit * lo) {
    throw std::runtime_error("degenerate innovation covariance");
  }
  const Eigen::MatrixXd L =
      S.llt().solve(H * b.cov).transpose();  // P H^T S^-1
  return correct_with_gain(b, L, H, nu);
}

}  // namespace

double Belief::symmetry_violation() const {
  return (cov - cov.transpose()).cwiseAbs().maxCoeff();
}

nlohmann::json Belief::to_json() const {
  std::vector<double> R, P;
  R.reserve(9);
  P.reserve(81);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) R.push_back(mean.R(r, c));
  }
  for (int r = 0; r < 9; ++r) {
    for (int c = 0; c < 9; ++c) P.push_back(cov(r, c));
  }
  return nlohmann::json{
      {"chirality", chirality == Chirality::kLeft ? "L" : "R"},
      {"mean",
       {{"R", R},
        {"v", {mean.v.x(), mean.v.y(), mean.v.z()}},
        {"x", {mean.x.x(), mean.x.y(), mean.x.z()}}}},
      {"cov", P}};
}

ProcessNoiseCase process_noise_case(CaseLabel label) {
  switch (label) {
    case CaseLabel::kI:
      return ProcessNoiseCase{kImuAlpha, kImuBeta, label};
    case CaseLabel::kII:
      return ProcessNoiseCase{kImuAlpha, kImuAlpha, label};
    case CaseLabel::kIII:
      return ProcessNoiseCase{kImuBeta, kImuAlpha, label};
  }
  throw std::invalid_argument("unknown process-noise case");
}

const char* case_name(CaseLabel label) {
  switch (label) {
    case CaseLabel::kI:
      return "I";
    case CaseLabel::kII:
      return "II";
    case CaseLabel::kIII:
      return "III";
  }
  return "?";
}

Mat9 noise_covariance(const ImuNoiseSpec& spec) {
  Mat9 S = Mat9::Zero();
  S.block<3, 3>(0, 0) = spec.sigma_g * spec.sigma_g * Mat3::Identity();
  S.block<3, 3>(3, 3) = spec.sigma_a * spec.sigma_a * Mat3::Identity();
  return S;
}

Mat9 matrix_A(const Vec9& zeta) {
  Mat9 A = -lie::ad_matrix(zeta);
  A.block<3, 3>(6, 3) += Mat3::Identity();
  return A;
}

Mat9 matrix_G(const SE23& g) { return lie::adjoint_matrix(g); }

Belief lrkf_propagate(const Belief& b, const ImuInput& u1, const ImuInput& u2,
                      const ProcessNoiseCase& kase, double dt) {
  if (b.chirality != Chirality::kLeft) {
    throw std::invalid_argument("lrkf_propagate: belief must be left-chiral");
  }
  return propagate_impl(b, u1, u2, kase, dt, /*left=*/true);
}

Belief rrkf_propagate(const Belief& b, const ImuInput& u1, const ImuInput& u2,
                      const ProcessNoiseCase& kase, double dt) {
  if (b.chirality != Chirality::kRight) {
    throw std::invalid_argument("rrkf_propagate: belief must be right-chiral");
  }
  return propagate_impl(b, u1, u2, kase, dt, /*left=*/false);
}

Belief propagate(const Belief& b, const ImuInput& u1, const ImuInput& u2,
                 const ProcessNoiseCase& kase, double dt) {
  return b.chirality == Chirality::kLeft
             ? lrkf_propagate(b, u1, u2, kase, dt)
             : rrkf_propagate(b, u1, u2, kase, dt);
}

Eigen::MatrixXd measurement_jacobian(Chirality filter,
                                     const MeasurementModel& model,
                                     const SE23& mean) {
  const int n = static_cast<int>(model.directions.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(model.dim(), 9);
  const bool left_filter = filter == Chirality::kLeft;
  const bool left_meas = model.kind == Chirality::kLeft;
  if (left_filter && left_meas) {
    H.block<3, 3>(0, 6) = -Mat3::Identity();
    for (int i = 0; i < n; ++i) {
      H.block<3, 3>(3 * (i + 1), 0) = lie::skew(model.directions[i]);
    }
  } else if (left_filter && !left_meas) {
    H.block<3, 3>(0, 0) = lie::skew(mean.R.transpose() * mean.x);
    H.block<3, 3>(0, 6) = Mat3::Identity();
    for (int i = 0; i < n; ++i) {
      H.block<3, 3>(3 * (i + 1), 0) =
          -lie::skew(mean.R.transpose() * model.directions[i]);
    }
  } else if (!left_filter && left_meas) {
    H.block<3, 3>(0, 0) = lie::skew(mean.x);
    H.block<3, 3>(0, 6) = -Mat3::Identity();
    for (int i = 0; i < n; ++i) {
      H.block<3, 3>(3 * (i + 1), 0) = lie::skew(mean.R * model.directions[i]);
    }
  } else {
    H.block<3, 3>(0, 6) = Mat3::Identity();
    for (int i = 0; i < n; ++i) {
      H.block<3, 3>(3 * (i + 1), 0) = -lie::skew(model.directions[i]);
    }
  }
  return H;
}

Eigen::VectorXd innovation(const Belief& b, const Eigen::VectorXd& z,
                           const MeasurementModel& model) {
  const bool matched = (b.chirality == model.kind);
  if (!matched) {
    return z - models::measurement_value(b.mean, model);
  }
  const models::PseudoLift lifted = models::lift_pseudo(z, model);
  const SE23 action =
      b.chirality == Chirality::kLeft ? b.mean.inverse() : b.mean;
  return lifted.Pi *
         (models::apply_group_blocks(action, lifted.tilde_z) - lifted.B);
}

Belief correct_with_gain(const Belief& b, const Eigen::MatrixXd& L,
                         const Eigen::MatrixXd& H, const Eigen::VectorXd& nu) {
  const Vec9 delta = L * nu;
  const SE23 step = lie::exp_se23(-delta);
  const SE23 mean = b.chirality == Chirality::kLeft ? b.mean * step
                                                    : step * b.mean;
  const Mat9 P = (Mat9::Identity() - L * H) * b.cov;
  return Belief{mean, condition_covariance(P), b.chirality};
}

Belief lrkf_correct_zL(const Belief& b, const Eigen::VectorXd& z,
                       const MeasurementModel& model,
                       const Eigen::MatrixXd& sigma_z) {
  require_measurement(z, model, Chirality::kLeft);
  if (b.chirality != Chirality::kLeft) {
    throw std::invalid_argument("lrkf_correct_zL: belief must be left-chiral");
  }
  const Eigen::MatrixXd H =
      measurement_jacobian(Chirality::kLeft, model, b.mean);
  // The measured directions carry their noise about the axes R b_i; the
  // group action forming the innovation rotates them by R_bar^T, landing the
  // noise frames back on the reference axes b_i that sigma_z is expressed
  // about. The precomputed blocks therefore apply unchanged.
  return finish_correction(b, H, innovation(b, z, model), sigma_z);
}

Belief lrkf_correct_zR(const Belief& b, const Eigen::VectorXd& z,
                       const MeasurementModel& model,
                       const Eigen::MatrixXd& sigma_z) {
  require_measurement(z, model, Chirality::kRight);
  if (b.chirality != Chirality::kLeft) {
    throw std::invalid_argument("lrkf_correct_zR: belief must be left-chiral");
  }
  const Eigen::MatrixXd H =
      measurement_jacobian(Chirality::kLeft, model, b.mean);
  const Eigen::MatrixXd D =
      block_rotation(b.mean.R, 1 + static_cast<int>(model.directions.size()));
  // The innovation compares z directly against Z(g_bar), whose direction
  // axes are R_bar^T b_i; rotate each precomputed block (expressed about
  // b_i) onto that axis so the near-noise-free radial coordinate of every
  // block stays aligned with the measurement matrix's null direction.
  return finish_correction(b, H, innovation(b, z, model),
                           D.transpose() * sigma_z * D);
}

Belief rrkf_correct_zL(const Belief& b, const Eigen::VectorXd& z,
                       const MeasurementModel& model,
                       const Eigen::MatrixXd& sigma_z) {
  require_measurement(z, model, Chirality::kLeft);
  if (b.chirality != Chirality::kRight) {
    throw std::invalid_argument("rrkf_correct_zL: belief must be right-chiral");
  }
  const Eigen::MatrixXd H =
      measurement_jacobian(Chirality::kRight, model, b.mean);
  const Eigen::MatrixXd D =
      block_rotation(b.mean.R, 1 + static_cast<int>(model.directions.size()));
  // Standard-form innovation against Z(g_bar): the measured direction axes
  // are R_bar b_i, so rotate the precomputed blocks onto them.
  return finish_correction(b, H, innovation(b, z, model),
                           D * sigma_z * D.transpose());
}

Belief rrkf_correct_zR(const Belief& b, const Eigen::VectorXd& z,
                       const MeasurementModel& model,
                       const Eigen::MatrixXd& sigma_z) {
  require_measurement(z, model, Chirality::kRight);
  if (b.chirality != Chirality::kRight) {
    throw std::invalid_argument("rrkf_correct_zR: belief must be right-chiral");
  }
  const Eigen::MatrixXd H =
      measurement_jacobian(Chirality::kRight, model, b.mean);
  // As in the matched left pairing, the group action forming the innovation
  // rotates the measured directions (noise axes R_bar^T b_i) by R_bar, so
  // the precomputed blocks about b_i apply unchanged.
  return finish_correction(b, H, innovation(b, z, model), sigma_z);
}

Belief correct(const Belief& b, const Eigen::VectorXd& z,
               const MeasurementModel& model, const Eigen::MatrixXd& sigma_z) {
  if (b.chirality == Chirality::kLeft) {
    return model.kind == Chirality::kLeft
               ? lrkf_correct_zL(b, z, model, sigma_z)
               : lrkf_correct_zR(b, z, model, sigma_z);
  }
  return model.kind == Chirality::kLeft ? rrkf_correct_zL(b, z, model, sigma_z)
                                        : rrkf_correct_zR(b, z, model, sigma_z);
}

Belief convert_chirality(const Belief& b) {
  const Mat9 Ad = b.chirality == Chirality::kLeft
                      ? lie::adjoint_matrix(b.mean)
                      : lie::adjoint_matrix(b.mean.inverse());
  const Mat9 P = Ad * b.cov * Ad.transpose();
  return Belief{b.mean, 0.5 * (P + P.transpose()),
                b.chirality == Chirality::kLeft ? Chirality::kRight
                                                : Chirality::kLeft};
}

// --- Quaternion EKF baseline -----------------------------------------------

namespace {

using Vec4 = Eigen::Vector4d;  // (w, x, y, z)

Vec4 qmul(const Vec4& a, const Vec4& b) {
  const double aw = a[0], bw = b[0];
  const Vec3 av = a.tail<3>(), bv = b.tail<3>();
  Vec4 out;
  out[0] = aw * bw - av.dot(bv);
  out.tail<3>() = aw * bv + bw * av + av.cross(bv);
  return out;
}

Vec4 pure(const Vec3& w) {
  Vec4 out;
  out[0] = 0.0;
  out.tail<3>() = w;
  return out;
}

Vec4 coeffs_of(const Eigen::Quaterniond& q) {
  return Vec4(q.w(), q.x(), q.y(), q.z());
}

Eigen::Quaterniond quat_of(const Vec4& c) {
  return Eigen::Quaterniond(c[0], c[1], c[2], c[3]).normalized();
}

Eigen::Quaterniond quat_exp(const Vec3& theta) {
  const double angle = theta.norm();
  if (angle < 1e-12) {
    Eigen::Quaterniond q(1.0, 0.5 * theta.x(), 0.5 * theta.y(),
                         0.5 * theta.z());
    return q.normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, theta / angle));
}

Eigen::Matrix<double, 6, 6> imu_noise6(const ImuNoiseSpec& s) {
  Eigen::Matrix<double, 6, 6> S = Eigen::Matrix<double, 6, 6>::Zero();
  S.block<3, 3>(0, 0) = s.sigma_g * s.sigma_g * Mat3::Identity();
  S.block<3, 3>(3, 3) = s.sigma_a * s.sigma_a * Mat3::Identity();
  return S;
}

struct QekfRates {
  Vec4 qd;
  Vec3 vd, xd;
  Mat9 Pd;
};

QekfRates qekf_rates(const Vec4& q, const Vec3& v, const Vec3& x,
                     const Mat9& P, const ImuInput& u1, const ImuInput& u2,
                     const ProcessNoiseCase& kase) {
  const Mat3 R = quat_of(q).toRotationMatrix();
  QekfRates r;
  r.qd = 0.5 * (qmul(q, pure(u2.omega)) - qmul(pure(u1.omega), q));
  r.vd = -u1.omega.cross(v) - u1.accel + R * u2.accel;
  r.xd = -u1.omega.cross(x) + v;

  Mat9 F = Mat9::Zero();
  F.block<3, 3>(0, 0) = -lie::skew(u2.omega);
  F.block<3, 3>(3, 0) = -R * lie::skew(u2.accel);
  F.block<3, 3>(3, 3) = -lie::skew(u1.omega);
  F.block<3, 3>(6, 3) = Mat3::Identity();
  F.block<3, 3>(6, 6) = -lie::skew(u1.omega);

  Eigen::Matrix<double, 9, 6> G1 = Eigen::Matrix<double, 9, 6>::Zero();
  G1.block<3, 3>(0, 0) = R.transpose();
  G1.block<3, 3>(3, 0) = -lie::skew(v);
  G1.block<3, 3>(3, 3) = Mat3::Identity();
  G1.block<3, 3>(6, 0) = -lie::skew(x);
  Eigen::Matrix<double, 9, 6> G2 = Eigen::Matrix<double, 9, 6>::Zero();
  G2.block<3, 3>(0, 0) = -Mat3::Identity();
  G2.block<3, 3>(3, 3) = -R;

  r.Pd = F * P + P * F.transpose() +
         G1 * imu_noise6(kase.sigma1) * G1.transpose() +
         G2 * imu_noise6(kase.sigma2) * G2.transpose();
  return r;
}

}  // namespace

SE23 QekfState::mean() const { return SE23{rotation(), v, x}; }

QekfState qekf_init(const SE23& mean, const Mat9& P0) {
  QekfState s;
  s.q = Eigen::Quaterniond(mean.R).normalized();
  s.v = mean.v;
  s.x = mean.x;
  s.P = condition_covariance(P0);
  return s;
}

QekfState qekf_propagate(const QekfState& s, const ImuInput& u1,
                         const ImuInput& u2, const ProcessNoiseCase& kase,
                         double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("qekf_propagate: dt must be positive");
  }
  if (!s.P.allFinite() || !s.v.allFinite() || !s.x.allFinite() ||
      !u1.omega.allFinite() || !u1.accel.allFinite() ||
      !u2.omega.allFinite() || !u2.accel.allFinite()) {
    throw std::invalid_argument("qekf_propagate: non-finite input");
  }
  const Vec4 q0 = coeffs_of(s.q);
  const QekfRates k1 = qekf_rates(q0, s.v, s.x, s.P, u1, u2, kase);
  const QekfRates k2 =
      qekf_rates(q0 + 0.5 * dt * k1.qd, s.v + 0.5 * dt * k1.vd,
                 s.x + 0.5 * dt * k1.xd, s.P + 0.5 * dt * k1.Pd, u1, u2, kase);
  const QekfRates k3 =
      qekf_rates(q0 + 0.5 * dt * k2.qd, s.v + 0.5 * dt * k2.vd,
                 s.x + 0.5 * dt * k2.xd, s.P + 0.5 * dt * k2.Pd, u1, u2, kase);
  const QekfRates k4 = qekf_rates(q0 + dt * k3.qd, s.v + dt * k3.vd,
                                  s.x + dt * k3.xd, s.P + dt * k3.Pd, u1, u2,
                                  kase);
  QekfState out;
  out.q = quat_of(q0 + dt / 6.0 * (k1.qd + 2.0 * k2.qd + 2.0 * k3.qd + k4.qd));
  out.v = s.v + dt / 6.0 * (k1.vd + 2.0 * k2.vd + 2.0 * k3.vd + k4.vd);
  out.x = s.x + dt / 6.0 * (k1.xd + 2.0 * k2.xd + 2.0 * k3.xd + k4.xd);
  out.P = condition_covariance(
      s.P + dt / 6.0 * (k1.Pd + 2.0 * k2.Pd + 2.0 * k3.Pd + k4.Pd));
  return out;
}

Mat9 qekf_state_matrix(const QekfState& s, const ImuInput& u1,
                       const ImuInput& u2) {
  const Mat3 R = s.rotation();
  Mat9 F = Mat9::Zero();
  F.block<3, 3>(0, 0) = -lie::skew(u2.omega);
  F.block<3, 3>(3, 0) = -R * lie::skew(u2.accel);
  F.block<3, 3>(3, 3) = -lie::skew(u1.omega);
  F.block<3, 3>(6, 3) = Mat3::Identity();
  F.block<3, 3>(6, 6) = -lie::skew(u1.omega);
  return F;
}

Eigen::MatrixXd qekf_measurement_jacobian(const QekfState& s,
                                          const MeasurementModel& model) {
  const Mat3 R = s.rotation();
  const int n = static_cast<int>(model.directions.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(model.dim(), 9);
  if (model.kind == Chirality::kLeft) {
    H.block<3, 3>(0, 6) = Mat3::Identity();
    for (int i = 0; i < n; ++i) {
      H.block<3, 3>(3 * (i + 1), 0) = -R * lie::skew(model.directions[i]);
    }
  } else {
    H.block<3, 3>(0, 0) = -lie::skew(R.transpose() * s.x);
    H.block<3, 3>(0, 6) = -R.transpose();
    for (int i = 0; i < n; ++i) {
      H.block<3, 3>(3 * (i + 1), 0) =
          lie::skew(R.transpose() * model.directions[i]);
    }
  }
  return H;
}

QekfState qekf_correct(const QekfState& s, const Eigen::VectorXd& z,
                       const MeasurementModel& model) {
  if (z.size() != model.dim()) {
    throw std::invalid_argument("qekf_correct: measurement size mismatch");
  }
  const Eigen::MatrixXd H = qekf_measurement_jacobian(s, model);
  // Conventional constant measurement covariance from the nominal sensor
  // parameters: per-axis sigma_pos^2 for position and the isotropic
  // small-angle approximation sigma_dir^2 I for each direction block. The
  // baseline does not model the anisotropy of rotated-direction noise or
  // track its frame, which is the invariant machinery's domain.
  Eigen::MatrixXd R_meas =
      Eigen::MatrixXd::Zero(model.dim(), model.dim());
  R_meas.block<3, 3>(0, 0) =
      model.sigma_pos * model.sigma_pos * Mat3::Identity();
  for (std::size_t i = 0; i < model.directions.size(); ++i) {
    R_meas.block<3, 3>(3 * (i + 1), 3 * (i + 1)) =
        model.sigma_dir * model.sigma_dir * Mat3::Identity();
  }
  Eigen::MatrixXd S = H * s.P * H.transpose() + R_meas;
  S = 0.5 * (S + S.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi > kConditionLimit * lo) {
    throw std::runtime_error("degenerate innovation covariance");
  }
  const Eigen::MatrixXd L = S.llt().solve(H * s.P).transpose();
  const Eigen::VectorXd nu = z - models::measurement_value(s.mean(), model);
  const Vec9 delta = L * nu;

  QekfState out;
  out.q = (s.q * quat_exp(delta.head<3>())).normalized();
  out.v = s.v + delta.segment<3>(3);
  out.x = s.x + delta.tail<3>();
  out.P = condition_covariance((Mat9::Identity() - L * H) * s.P);
  return out;
}

QekfState qekf_step(const QekfState& s, const ImuInput& u1, const ImuInput& u2,
                    const ProcessNoiseCase& kase, const Eigen::VectorXd* z,
                    const MeasurementModel& model, double dt) {
  QekfState out = qekf_propagate(s, u1, u2, kase, dt);
  if (z != nullptr) {
    out = qekf_correct(out, *z, model);
  }
  return out;
}

}  // namespace relkal::filters
