#include "relkal/models.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <stdexcept>
#include <utility>

#include "relkal/integrate.hpp"

namespace relkal::models {

using lie::alg;
using lie::exp_so3;
using lie::Mat5;
using lie::skew;
using lie::unskew;

void MeasurementModel::validate() const {
  for (const Vec3& b : directions) {
    if (std::abs(b.norm() - 1.0) > 1e-12) {
      throw std::invalid_argument("measurement direction is not unit length");
    }
  }
  if (!(rate > 0.0)) {
    throw std::invalid_argument("measurement rate must be positive");
  }
}

MeasurementModel default_measurement_model(Chirality kind) {
  MeasurementModel m;
  m.kind = kind;
  m.directions = {Vec3(1.0, 0.0, 0.0), Vec3(0.0, 1.0, 1.0).normalized(),
                  Vec3(1.0, 1.0, 0.0).normalized()};
  m.sigma_pos = 0.5;
  m.sigma_dir = 5.0 * M_PI / 180.0;
  m.rate = 2.0;
  return m;
}

TrajectoryPoint trajectory_pair(double t) {
  TrajectoryPoint p;
  const double c2 = std::cos(0.2 * t), s2 = std::sin(0.2 * t);
  p.x1 = Vec3(1.5 * c2 + 1.0, 1.5 * s2 + 1.0, 0.0);
  p.x1d = Vec3(-0.3 * s2, 0.3 * c2, 0.0);
  p.x1dd = Vec3(-0.06 * c2, -0.06 * s2, 0.0);

  const double c1 = std::cos(0.1 * t), s1 = std::sin(0.1 * t);
  p.x2 = Vec3(2.0 * s1, 2.0 * s2, 2.0);
  p.x2d = Vec3(0.2 * c1, 0.4 * c2, 0.0);
  p.x2dd = Vec3(-0.02 * s1, -0.08 * s2, 0.0);
  return p;
}

Mat3 attitude_from_tangent(const Vec3& xdot) {
  const double speed = xdot.norm();
  if (speed <= 1e-9) {
    throw std::domain_error("degenerate frame: zero tangent");
  }
  const Vec3 c1 = xdot / speed;
  const Vec3 e3(0.0, 0.0, 1.0);
  Vec3 down = e3 - e3.dot(c1) * c1;
  if (down.norm() < 1e-6) {
    throw std::domain_error("degenerate frame");
  }
  const Vec3 c3 = down.normalized();
  const Vec3 c2 = c3.cross(c1);
  Mat3 R;
  R.col(0) = c1;
  R.col(1) = c2;
  R.col(2) = c3;
  return R;
}

ImuInput imu_from_trajectory(const Mat3& R, const Mat3& Rdot,
                             const Vec3& vdot) {
  const Mat3 W = R.transpose() * Rdot;
  ImuInput u;
  u.omega = unskew(0.5 * (W - W.transpose()));
  u.accel = R.transpose() * (vdot - gravity_vec());
  return u;
}

namespace {

Mat3 agent_attitude(int agent, double t) {
  const TrajectoryPoint p = trajectory_pair(t);
  return attitude_from_tangent(agent == 1 ? p.x1d : p.x2d);
}

// Single-vehicle kinematics with frozen inputs as an ambient 5x5 RHS:
// R' = R hat(omega), v' = R a + g e3, x' = v.
Mat5 vehicle_rhs(const Mat5& M, const ImuInput& u) {
  Mat5 d = Mat5::Zero();
  const Mat3 R = M.block<3, 3>(0, 0);
  d.block<3, 3>(0, 0) = R * skew(u.omega);
  d.block<3, 1>(0, 3) = R * u.accel + gravity_vec();
  d.block<3, 1>(0, 4) = M.block<3, 1>(0, 3);
  return d;
}

SE23 advance_vehicle(const SE23& g, const ImuInput& u, double dt) {
  auto rhs = [&u](double, const Mat5& M) { return vehicle_rhs(M, u); };
  return rk4_group_step(rhs, 0.0, dt, g);
}

}  // namespace

SE23 agent_truth(int agent, double t) {
  const TrajectoryPoint p = trajectory_pair(t);
  if (agent == 1) return SE23{agent_attitude(1, t), p.x1d, p.x1};
  return SE23{agent_attitude(2, t), p.x2d, p.x2};
}

ImuInput agent_imu(int agent, double t) {
  // Central difference of the frame construction; delta balances the O(d^2)
  // truncation against roundoff in the attitude entries.
  const double delta = 1e-5;
  const Mat3 Rp = agent_attitude(agent, t + delta);
  const Mat3 Rm = agent_attitude(agent, t - delta);
  const Mat3 Rdot = (Rp - Rm) / (2.0 * delta);
  const TrajectoryPoint p = trajectory_pair(t);
  return imu_from_trajectory(agent_attitude(agent, t), Rdot,
                             agent == 1 ? p.x1dd : p.x2dd);
}

TruthSample truth_init() {
  TruthSample s;
  s.t = 0.0;
  s.g1 = agent_truth(1, 0.0);
  s.g2 = agent_truth(2, 0.0);
  s.g12 = s.g1.inverse() * s.g2;
  s.u1 = s.u1_noisy = agent_imu(1, 0.0);
  s.u2 = s.u2_noisy = agent_imu(2, 0.0);
  return s;
}

TruthSample relative_truth_step(const TruthSample& s, double dt,
                                const ImuInput& u1, const ImuInput& u2,
                                const Vec3& w1g, const Vec3& w1a,
                                const Vec3& w2g, const Vec3& w2a) {
  if (!(dt > 0.0)) throw std::invalid_argument("relative_truth_step: dt <= 0");
  TruthSample out;
  out.t = s.t + dt;
  out.u1 = u1;
  out.u2 = u2;
  // The reading is the true rate plus noise, so the truth moves under
  // reading minus noise, frozen over the step.
  out.u1_noisy = ImuInput{u1.omega - w1g, u1.accel - w1a};
  out.u2_noisy = ImuInput{u2.omega - w2g, u2.accel - w2a};
  out.g1 = advance_vehicle(s.g1, out.u1_noisy, dt);
  out.g2 = advance_vehicle(s.g2, out.u2_noisy, dt);
  out.g12 = out.g1.inverse() * out.g2;
  return out;
}

Eigen::VectorXd measurement_value(const SE23& g12,
                                  const MeasurementModel& m) {
  Eigen::VectorXd z(m.dim());
  if (m.kind == Chirality::kLeft) {
    z.segment<3>(0) = g12.x;
    for (std::size_t i = 0; i < m.directions.size(); ++i) {
      z.segment<3>(3 * (i + 1)) = g12.R * m.directions[i];
    }
  } else {
    const Mat3 Rt = g12.R.transpose();
    z.segment<3>(0) = -(Rt * g12.x);
    for (std::size_t i = 0; i < m.directions.size(); ++i) {
      z.segment<3>(3 * (i + 1)) = Rt * m.directions[i];
    }
  }
  return z;
}

namespace {

Eigen::VectorXd measure_impl(const SE23& g12, const MeasurementModel& m,
                             const Vec3& pos_noise,
                             const std::vector<Vec3>& dir_noise) {
  if (dir_noise.size() != m.directions.size()) {
    throw std::invalid_argument("one rotation draw per direction required");
  }
  Eigen::VectorXd z = measurement_value(g12, m);
  z.segment<3>(0) += pos_noise;
  for (std::size_t i = 0; i < m.directions.size(); ++i) {
    const Vec3 d = z.segment<3>(3 * (i + 1));
    z.segment<3>(3 * (i + 1)) = exp_so3(dir_noise[i]) * d;
  }
  return z;
}

}  // namespace

Eigen::VectorXd measure_left(const SE23& g12, const MeasurementModel& m,
                             const Vec3& pos_noise,
                             const std::vector<Vec3>& dir_noise) {
  if (m.kind != Chirality::kLeft) {
    throw std::invalid_argument("measure_left: model is not left-invariant");
  }
  return measure_impl(g12, m, pos_noise, dir_noise);
}

Eigen::VectorXd measure_right(const SE23& g12, const MeasurementModel& m,
                              const Vec3& pos_noise,
                              const std::vector<Vec3>& dir_noise) {
  if (m.kind != Chirality::kRight) {
    throw std::invalid_argument("measure_right: model is not right-invariant");
  }
  return measure_impl(g12, m, pos_noise, dir_noise);
}

Mat3 direction_noise_cov(const Vec3& b, double sigma_dir, int n_samples,
                         std::uint64_t seed) {
  if (n_samples < 1000) {
    throw std::invalid_argument("direction_noise_cov: need >= 1000 samples");
  }
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Vec3> devs;
  devs.reserve(n_samples);
  Vec3 mean = Vec3::Zero();
  for (int i = 0; i < n_samples; ++i) {
    const Vec3 w(sigma_dir * nd(gen), sigma_dir * nd(gen),
                 sigma_dir * nd(gen));
    const Vec3 d = exp_so3(w) * b - b;
    devs.push_back(d);
    mean += d;
  }
  mean /= n_samples;
  Mat3 cov = Mat3::Zero();
  for (const Vec3& d : devs) {
    const Vec3 c = d - mean;
    cov += c * c.transpose();
  }
  return cov / (n_samples - 1);
}

Eigen::MatrixXd measurement_covariance(const MeasurementModel& m,
                                       int n_samples, std::uint64_t seed) {
  const int n = m.dim();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  cov.block<3, 3>(0, 0) = m.sigma_pos * m.sigma_pos * Mat3::Identity();
  for (std::size_t i = 0; i < m.directions.size(); ++i) {
    const Vec3& b = m.directions[i];
    const Mat3 raw = direction_noise_cov(b, m.sigma_dir, n_samples, seed + i);
    // The rotation noise is isotropic about b, so the exact covariance is
    // axially symmetric: radial-tangential cross terms are structural zeros
    // and the radial variance is tiny (fourth order in sigma_dir). The raw
    // sample matrix carries O(1/sqrt(n)) cross terms that dwarf that radial
    // variance and would leak large out-of-plane innovation components into
    // the gain, so project onto the exact symmetry, keeping the two sampled
    // moments.
    const double radial = b.dot(raw * b);
    const double tangent = 0.5 * (raw.trace() - radial);
    cov.block<3, 3>(3 * (i + 1), 3 * (i + 1)) =
        tangent * (Mat3::Identity() - b * b.transpose()) +
        radial * b * b.transpose();
  }
  return cov;
}

PseudoLift lift_pseudo(const Eigen::VectorXd& z, const MeasurementModel& m) {
  if (z.size() != m.dim()) {
    throw std::invalid_argument("lift_pseudo: measurement length mismatch");
  }
  const int nb = static_cast<int>(m.directions.size());
  PseudoLift out;
  out.tilde_z = Eigen::VectorXd::Zero(5 * (nb + 1));
  out.B = Eigen::VectorXd::Zero(5 * (nb + 1));
  out.Pi = Eigen::MatrixXd::Zero(3 * (nb + 1), 5 * (nb + 1));
  // Position block padded with (0, 1); its known vector is e5.
  out.tilde_z.segment<3>(0) = z.segment<3>(0);
  out.tilde_z[4] = 1.0;
  out.B[4] = 1.0;
  for (int i = 0; i < nb; ++i) {
    out.tilde_z.segment<3>(5 * (i + 1)) = z.segment<3>(3 * (i + 1));
    out.B.segment<3>(5 * (i + 1)) = m.directions[i];
  }
  for (int i = 0; i <= nb; ++i) {
    out.Pi.block<3, 3>(3 * i, 5 * i) = Mat3::Identity();
  }
  return out;
}

Eigen::VectorXd apply_group_blocks(const SE23& g, const Eigen::VectorXd& v) {
  if (v.size() % 5 != 0) {
    throw std::invalid_argument("apply_group_blocks: length not a multiple "
                                "of 5");
  }
  const Mat5 G = g.matrix();
  Eigen::VectorXd out(v.size());
  for (int i = 0; i < v.size(); i += 5) {
    out.segment<5>(i) = G * v.segment<5>(i);
  }
  return out;
}

sti::DecomposedField vehicle_field(std::function<ImuInput(double)> input) {
  sti::DecomposedField d;
  d.xi = [](double) { return alg(Vec3::Zero(), gravity_vec(), Vec3::Zero()); };
  d.zeta = [input = std::move(input)](double t) {
    const ImuInput u = input(t);
    return alg(u.omega, u.accel, Vec3::Zero());
  };
  d.tilde = [](const SE23& g) {
    return alg(Vec3::Zero(), Vec3::Zero(), Vec3(g.R.transpose() * g.v));
  };
  return d;
}

namespace {

void write_row(std::ostream& os, double t, const SE23& g) {
  char buf[64];
  auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof(buf), "%.17g%c", v, sep);
    os << buf;
  };
  put(t, ',');
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) put(g.R(r, c), ',');
  for (int i = 0; i < 3; ++i) put(g.v[i], ',');
  for (int i = 0; i < 3; ++i) put(g.x[i], i == 2 ? '\n' : ',');
}

}  // namespace

void write_truth_csv(std::ostream& os, const std::vector<TruthSample>& log,
                     TruthSelect select) {
  os << "# state trajectory: R row-major, v and x in the inertial frame\n";
  os << "t,R00,R01,R02,R10,R11,R12,R20,R21,R22,vx,vy,vz,xx,xy,xz\n";
  for (const TruthSample& s : log) {
    const SE23& g = select == TruthSelect::kAgent1
                        ? s.g1
                        : (select == TruthSelect::kAgent2 ? s.g2 : s.g12);
    write_row(os, s.t, g);
  }
}

void write_measurements_csv(std::ostream& os,
                            const std::vector<double>& times,
                            const std::vector<Eigen::VectorXd>& zs) {
  if (times.size() != zs.size()) {
    throw std::invalid_argument("write_measurements_csv: size mismatch");
  }
  os << "# measurement log: one row per epoch, entries in block order\n";
  os << "t";
  if (!zs.empty()) {
    for (int i = 0; i < zs.front().size(); ++i) os << ",z" << i;
  }
  os << "\n";
  char buf[64];
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g", times[k]);
    os << buf;
    for (int i = 0; i < zs[k].size(); ++i) {
      std::snprintf(buf, sizeof(buf), ",%.17g", zs[k][i]);
      os << buf;
    }
    os << "\n";
  }
}

}  // namespace relkal::models
