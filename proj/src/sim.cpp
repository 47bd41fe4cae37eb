#include "relkal/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "relkal/hash.hpp"
#include "relkal/rng.hpp"

namespace relkal::sim {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Sample count / seed for the one-time numerical measurement covariance;
// large enough that spurious cross-correlations (~1/sqrt(n)) stay well below
// the smallest genuine eigenvalue of the direction blocks.
constexpr int kCovSamples = 200000;
constexpr std::uint64_t kCovSeed = 424242;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool finite(const SE23& g) {
  return g.R.allFinite() && g.v.allFinite() && g.x.allFinite();
}

/// Draws three sequenced N(0,1) variates scaled by s; returns zero without
/// consuming the stream when disabled.
Vec3 draw3(std::mt19937_64& gen, std::normal_distribution<double>& nd,
           double s, bool enabled) {
  if (!enabled) return Vec3::Zero();
  const double a = nd(gen);
  const double b = nd(gen);
  const double c = nd(gen);
  return Vec3(s * a, s * b, s * c);
}

/// Uniform front-end over the three estimators so the run loop is written
/// once.
struct Estimator {
  FilterKind kind = FilterKind::kLrkf;
  Belief belief;
  filters::QekfState qekf;

  SE23 mean() const {
    return kind == FilterKind::kQekf ? qekf.mean() : belief.mean;
  }
  const Mat9& cov() const {
    return kind == FilterKind::kQekf ? qekf.P : belief.cov;
  }
  void propagate(const models::ImuInput& u1, const models::ImuInput& u2,
                 const filters::ProcessNoiseCase& kase, double dt) {
    if (kind == FilterKind::kQekf) {
      qekf = filters::qekf_propagate(qekf, u1, u2, kase, dt);
    } else {
      belief = filters::propagate(belief, u1, u2, kase, dt);
    }
  }
  void correct(const Eigen::VectorXd& z, const models::MeasurementModel& model,
               const Eigen::MatrixXd& sigma_z) {
    if (kind == FilterKind::kQekf) {
      qekf = filters::qekf_correct(qekf, z, model);
    } else {
      belief = filters::correct(belief, z, model, sigma_z);
    }
  }
};

Estimator make_estimator(const ScenarioConfig& cfg, const SE23& truth0) {
  Estimator est;
  est.kind = cfg.filter;
  switch (cfg.filter) {
    case FilterKind::kLrkf:
      est.belief = build_initial_belief(cfg, truth0);
      break;
    case FilterKind::kRrkf:
      est.belief = build_right_belief(cfg, truth0);
      break;
    case FilterKind::kQekf:
      est.qekf = build_qekf_state(cfg, truth0);
      break;
  }
  return est;
}

/// Normalized estimation error squared in the estimator's own error
/// parametrization; NaN when the error leaves the logarithm's domain or the
/// covariance is not positive definite.
double nees_of(const Estimator& est, const SE23& truth) {
  lie::Vec9 err;
  try {
    switch (est.kind) {
      case FilterKind::kLrkf:
        err = -lie::log_se23(est.belief.mean.inverse() * truth);
        break;
      case FilterKind::kRrkf:
        err = -lie::log_se23(truth * est.belief.mean.inverse());
        break;
      case FilterKind::kQekf:
        err.head<3>() =
            lie::log_so3(est.qekf.rotation().transpose() * truth.R);
        err.segment<3>(3) = truth.v - est.qekf.v;
        err.tail<3>() = truth.x - est.qekf.x;
        break;
    }
  } catch (const std::domain_error&) {
    return kNan;
  }
  Eigen::LLT<Mat9> llt(est.cov());
  if (llt.info() != Eigen::Success) return kNan;
  return err.dot(llt.solve(err));
}

void record_step(RunResult& out, const ScenarioConfig& cfg,
                 const Estimator& est, double t, const SE23& truth) {
  const ErrorBreakdown e = error_metric(truth, est.mean());
  out.steps.push_back({t, e.att_deg, e.vel_mps, e.pos_m, e.combined});
  if (cfg.record_nees) out.nees.push_back(nees_of(est, truth));
}

McSummary summarize(const std::vector<double>& per_run,
                    const std::vector<char>& diverged) {
  McSummary s;
  s.n_runs = static_cast<int>(per_run.size());
  s.per_run = per_run;
  double sum = 0.0;
  int n_ok = 0;
  for (int i = 0; i < s.n_runs; ++i) {
    if (diverged[i]) {
      ++s.n_diverged;
      continue;
    }
    sum += per_run[i];
    ++n_ok;
  }
  s.mean_total = n_ok > 0 ? sum / n_ok : kNan;
  if (n_ok > 1) {
    double ss = 0.0;
    for (int i = 0; i < s.n_runs; ++i) {
      if (diverged[i]) continue;
      const double d = per_run[i] - s.mean_total;
      ss += d * d;
    }
    s.std_total = std::sqrt(ss / (n_ok - 1));
  }
  return s;
}

/// Runs `body(i)` for i in [0, n) on `n_threads` workers pulling from a
/// shared counter. Results must be written to per-index slots so the
/// aggregate does not depend on scheduling.
template <class Body>
void parallel_indices(int n, int n_threads, const Body& body) {
  int tc = n_threads > 0
               ? n_threads
               : static_cast<int>(std::thread::hardware_concurrency());
  tc = std::clamp(tc, 1, std::max(n, 1));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      body(i);
    }
  };
  if (tc == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(tc);
  for (int t = 0; t < tc; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
}

}  // namespace

const char* filter_name(FilterKind kind) {
  switch (kind) {
    case FilterKind::kLrkf:
      return "lrkf";
    case FilterKind::kRrkf:
      return "rrkf";
    case FilterKind::kQekf:
      return "qekf";
  }
  return "?";
}

const char* measurement_name(Chirality kind) {
  return kind == Chirality::kLeft ? "zL" : "zR";
}

Mat9 default_initial_covariance() {
  Mat9 P = Mat9::Zero();
  P.topLeftCorner<3, 3>() = (M_PI / 6.0) * (M_PI / 6.0) * lie::Mat3::Identity();
  P.block<3, 3>(3, 3) = 4.0 * lie::Mat3::Identity();
  P.block<3, 3>(6, 6) = 4.0 * lie::Mat3::Identity();
  return P;
}

void ScenarioConfig::validate() const {
  if (!(duration > 0.0) || !(dt > 0.0)) {
    throw std::invalid_argument("scenario: duration and dt must be positive");
  }
  if (!(meas_rate > 0.0)) {
    throw std::invalid_argument("scenario: meas_rate must be positive");
  }
  const double count = duration / dt;
  if (std::abs(count - std::lround(count)) > 1e-9) {
    throw std::invalid_argument(
        "scenario: duration must be an integer number of steps");
  }
  const double period = 1.0 / meas_rate;
  if (std::abs(period - steps_per_epoch() * dt) > 1e-12) {
    throw std::invalid_argument(
        "scenario: dt must divide the measurement period");
  }
  if (n_runs < 1) {
    throw std::invalid_argument("scenario: n_runs must be >= 1");
  }
  if (!P0.allFinite() ||
      (P0 - P0.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    throw std::invalid_argument("scenario: P0 must be finite and symmetric");
  }
}

ErrorBreakdown error_metric(const SE23& truth, const SE23& est) {
  ErrorBreakdown e;
  e.pos_m = (truth.x - est.x).norm();
  e.vel_mps = (truth.v - est.v).norm();
  const double c = std::clamp(
      ((truth.R.transpose() * est.R).trace() - 1.0) / 2.0, -1.0, 1.0);
  e.att_deg = (180.0 / M_PI) * std::acos(c);
  e.combined = e.pos_m + e.vel_mps + e.att_deg;
  return e;
}

Realization generate_realization(const ScenarioConfig& cfg, int run_index) {
  cfg.validate();
  const int n = cfg.steps();
  const int spe = cfg.steps_per_epoch();
  const filters::ProcessNoiseCase kase =
      filters::process_noise_case(cfg.noise_case);

  auto imu1 = rng::make_stream(cfg.master_seed, run_index, rng::kStreamImu1);
  auto imu2 = rng::make_stream(cfg.master_seed, run_index, rng::kStreamImu2);
  auto meas = rng::make_stream(cfg.master_seed, run_index, rng::kStreamMeas);
  std::normal_distribution<double> nd(0.0, 1.0);
  const bool noisy = !cfg.noise_free;

  // Discrete-time white noise on each IMU axis.
  const double root_dt = std::sqrt(cfg.dt);
  const double sg1 = kase.sigma1.sigma_g / root_dt;
  const double sa1 = kase.sigma1.sigma_a / root_dt;
  const double sg2 = kase.sigma2.sigma_g / root_dt;
  const double sa2 = kase.sigma2.sigma_a / root_dt;

  const models::MeasurementModel model_l =
      models::default_measurement_model(Chirality::kLeft);
  const models::MeasurementModel model_r =
      models::default_measurement_model(Chirality::kRight);
  const int n_epochs = n / spe;

  Realization real;
  real.truth.reserve(n + 1);
  real.epoch_steps.reserve(n_epochs);
  real.z_left.reserve(n_epochs);
  real.z_right.reserve(n_epochs);
  real.truth.push_back(models::truth_init());
  for (int k = 1; k <= n; ++k) {
    const double tm = (k - 1) * cfg.dt + 0.5 * cfg.dt;
    const models::ImuInput u1 = models::agent_imu(1, tm);
    const models::ImuInput u2 = models::agent_imu(2, tm);
    const Vec3 w1g = draw3(imu1, nd, sg1, noisy);
    const Vec3 w1a = draw3(imu1, nd, sa1, noisy);
    const Vec3 w2g = draw3(imu2, nd, sg2, noisy);
    const Vec3 w2a = draw3(imu2, nd, sa2, noisy);
    real.truth.push_back(models::relative_truth_step(real.truth.back(), cfg.dt,
                                                     u1, u2, w1g, w1a, w2g,
                                                     w2a));
    if (k % spe != 0) continue;

    // One noise draw feeds both measurement types so a run index pins the
    // same physical disturbance no matter which filter/measurement pairing
    // consumes it.
    const SE23& g12 = real.truth.back().g12;
    const Vec3 pos_noise = draw3(meas, nd, model_l.sigma_pos, noisy);
    std::vector<Vec3> dir_noise(model_l.directions.size(), Vec3::Zero());
    for (Vec3& w : dir_noise) w = draw3(meas, nd, model_l.sigma_dir, noisy);
    real.epoch_steps.push_back(k);
    real.z_left.push_back(
        models::measure_left(g12, model_l, pos_noise, dir_noise));
    real.z_right.push_back(
        models::measure_right(g12, model_r, pos_noise, dir_noise));
  }
  return real;
}

std::uint64_t realization_hash(const Realization& real) {
  std::uint64_t h = hash::kFnvOffset;
  auto mix = [&h](const void* p, std::size_t n) { h = hash::fnv1a(p, n, h); };
  auto mix_state = [&](const SE23& g) {
    mix(g.R.data(), sizeof(double) * 9);
    mix(g.v.data(), sizeof(double) * 3);
    mix(g.x.data(), sizeof(double) * 3);
  };
  for (const models::TruthSample& s : real.truth) {
    mix(&s.t, sizeof(s.t));
    mix_state(s.g1);
    mix_state(s.g2);
    mix_state(s.g12);
  }
  for (int k : real.epoch_steps) mix(&k, sizeof(k));
  for (const Eigen::VectorXd& z : real.z_left) {
    mix(z.data(), sizeof(double) * z.size());
  }
  for (const Eigen::VectorXd& z : real.z_right) {
    mix(z.data(), sizeof(double) * z.size());
  }
  return h;
}

Belief build_initial_belief(const ScenarioConfig& cfg, const SE23& truth0) {
  Belief b;
  b.chirality = Chirality::kLeft;
  b.mean.R = truth0.R * lie::exp_so3(cfg.initial_error.attitude);
  b.mean.v = truth0.v + cfg.initial_error.velocity;
  b.mean.x = truth0.x + cfg.initial_error.position;
  b.cov = cfg.P0;
  return b;
}

Belief build_right_belief(const ScenarioConfig& cfg, const SE23& truth0) {
  Belief b = build_initial_belief(cfg, truth0);
  b.chirality = Chirality::kRight;
  const SE23& anchor = cfg.right_cov_at_estimate ? b.mean : truth0;
  const Mat9 Adi = lie::adjoint_matrix(anchor.inverse());
  b.cov = Adi * cfg.P0 * Adi.transpose();
  return b;
}

filters::QekfState build_qekf_state(const ScenarioConfig& cfg,
                                    const SE23& truth0) {
  return filters::qekf_init(build_initial_belief(cfg, truth0).mean, cfg.P0);
}

ScenarioContext make_context(const ScenarioConfig& cfg) {
  // The sampled covariance is a per-measurement-kind constant of the default
  // model; compute it once per process.
  static std::once_flag once[2];
  static Eigen::MatrixXd cached[2];
  const int slot = cfg.measurement == Chirality::kLeft ? 0 : 1;
  std::call_once(once[slot], [&]() {
    const models::MeasurementModel m =
        models::default_measurement_model(cfg.measurement);
    cached[slot] = models::measurement_covariance(m, kCovSamples, kCovSeed);
  });
  ScenarioContext ctx;
  ctx.model = models::default_measurement_model(cfg.measurement);
  ctx.sigma_z = cached[slot];
  ctx.kase = filters::process_noise_case(cfg.noise_case);
  return ctx;
}

RunResult run_filtering(const ScenarioConfig& cfg, const ScenarioContext& ctx,
                        const Realization& real) {
  const int n = cfg.steps();
  if (static_cast<int>(real.truth.size()) != n + 1) {
    throw std::invalid_argument("run_filtering: realization/config mismatch");
  }
  RunResult out;
  out.steps.reserve(n + 1);
  Estimator est = make_estimator(cfg, real.truth[0].g12);
  record_step(out, cfg, est, 0.0, real.truth[0].g12);

  std::size_t epoch = 0;
  for (int k = 1; k <= n; ++k) {
    const models::TruthSample& s = real.truth[k];
    try {
      est.propagate(s.u1, s.u2, ctx.kase, cfg.dt);
      if (epoch < real.epoch_steps.size() && real.epoch_steps[epoch] == k) {
        const Eigen::VectorXd& z = cfg.measurement == Chirality::kLeft
                                       ? real.z_left[epoch]
                                       : real.z_right[epoch];
        est.correct(z, ctx.model, ctx.sigma_z);
        ++epoch;
      }
    } catch (const std::runtime_error&) {
      // Degenerate innovation covariance or lost positive semidefiniteness.
      out.diverged = true;
      break;
    } catch (const std::domain_error&) {
      // Rotation walked to the logarithm's cut locus.
      out.diverged = true;
      break;
    }
    if (!finite(est.mean()) || !est.cov().allFinite()) {
      out.diverged = true;
      break;
    }
    record_step(out, cfg, est, s.t, s.g12);
    if (out.steps.back().pos_m > kDivergencePositionLimit) {
      out.diverged = true;
      break;
    }
  }

  double sum = 0.0;
  for (const StepError& e : out.steps) sum += e.combined;
  out.total_error = out.steps.empty() ? kNan : sum / out.steps.size();
  return out;
}

RunResult run_once(const ScenarioConfig& cfg, int run_index) {
  cfg.validate();
  return run_filtering(cfg, make_context(cfg),
                       generate_realization(cfg, run_index));
}

McSummary monte_carlo(const ScenarioConfig& cfg, int n_threads) {
  cfg.validate();
  const ScenarioContext ctx = make_context(cfg);
  std::vector<double> per_run(cfg.n_runs, kNan);
  std::vector<char> diverged(cfg.n_runs, 0);
  parallel_indices(cfg.n_runs, n_threads, [&](int i) {
    const RunResult r = run_filtering(cfg, ctx, generate_realization(cfg, i));
    if (r.diverged) {
      diverged[i] = 1;
    } else {
      per_run[i] = r.total_error;
    }
  });
  return summarize(per_run, diverged);
}

std::vector<ScenarioConfig> case_matrix(int n_runs, std::uint64_t master_seed,
                                        bool noise_free) {
  std::vector<ScenarioConfig> out;
  out.reserve(18);
  for (FilterKind filter :
       {FilterKind::kLrkf, FilterKind::kRrkf, FilterKind::kQekf}) {
    for (Chirality measurement : {Chirality::kLeft, Chirality::kRight}) {
      for (CaseLabel label : {CaseLabel::kI, CaseLabel::kII, CaseLabel::kIII}) {
        ScenarioConfig cfg;
        cfg.filter = filter;
        cfg.measurement = measurement;
        cfg.noise_case = label;
        cfg.n_runs = n_runs;
        cfg.master_seed = master_seed;
        cfg.noise_free = noise_free;
        out.push_back(cfg);
      }
    }
  }
  return out;
}

std::vector<MatrixEntry> run_case_matrix(int n_runs,
                                         std::uint64_t master_seed,
                                         int n_threads, bool noise_free) {
  const std::vector<ScenarioConfig> cfgs =
      case_matrix(n_runs, master_seed, noise_free);
  std::vector<MatrixEntry> out(cfgs.size());
  for (std::size_t i = 0; i < cfgs.size(); ++i) out[i].cfg = cfgs[i];

  // Noise generation only depends on the IMU case, so the six pairings of a
  // case share each run's realization; per-run slots keep the aggregate
  // identical to standalone monte_carlo calls.
  for (CaseLabel label : {CaseLabel::kI, CaseLabel::kII, CaseLabel::kIII}) {
    std::vector<std::size_t> group;
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
      if (cfgs[i].noise_case == label) group.push_back(i);
    }
    std::vector<ScenarioContext> ctxs;
    ctxs.reserve(group.size());
    for (std::size_t i : group) ctxs.push_back(make_context(cfgs[i]));

    std::vector<std::vector<double>> per_run(
        group.size(), std::vector<double>(n_runs, kNan));
    std::vector<std::vector<char>> diverged(group.size(),
                                            std::vector<char>(n_runs, 0));
    parallel_indices(n_runs, n_threads, [&](int run) {
      const Realization real = generate_realization(cfgs[group[0]], run);
      for (std::size_t j = 0; j < group.size(); ++j) {
        const RunResult r = run_filtering(cfgs[group[j]], ctxs[j], real);
        if (r.diverged) {
          diverged[j][run] = 1;
        } else {
          per_run[j][run] = r.total_error;
        }
      }
    });
    for (std::size_t j = 0; j < group.size(); ++j) {
      out[group[j]].summary = summarize(per_run[j], diverged[j]);
    }
  }
  return out;
}

void write_summary_csv(std::ostream& os,
                       const std::vector<MatrixEntry>& entries) {
  os << "filter,measurement,case,n_runs,mean_total_error,std_total_error,"
        "n_diverged\n";
  for (const MatrixEntry& e : entries) {
    os << filter_name(e.cfg.filter) << ','
       << measurement_name(e.cfg.measurement) << ','
       << filters::case_name(e.cfg.noise_case) << ',' << e.summary.n_runs
       << ',' << fmt(e.summary.mean_total) << ',' << fmt(e.summary.std_total)
       << ',' << e.summary.n_diverged << '\n';
  }
}

void write_run_csv(std::ostream& os, const RunResult& result) {
  const bool with_nees = result.nees.size() == result.steps.size();
  os << "t,att_deg,vel_mps,pos_m,combined";
  if (with_nees) os << ",nees";
  os << '\n';
  for (std::size_t i = 0; i < result.steps.size(); ++i) {
    const StepError& e = result.steps[i];
    os << fmt(e.t) << ',' << fmt(e.att_deg) << ',' << fmt(e.vel_mps) << ','
       << fmt(e.pos_m) << ',' << fmt(e.combined);
    if (with_nees) os << ',' << fmt(result.nees[i]);
    os << '\n';
  }
}

void write_plot_csv(std::ostream& os,
                    const std::vector<MatrixEntry>& entries) {
  // Grouped by measurement type so plotting tools can facet on the first
  // column directly.
  std::vector<std::size_t> order(entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return static_cast<int>(entries[a].cfg.measurement) <
                            static_cast<int>(entries[b].cfg.measurement);
                   });
  os << "measurement,filter,case,mean_total_error\n";
  for (std::size_t i : order) {
    const MatrixEntry& e = entries[i];
    os << measurement_name(e.cfg.measurement) << ','
       << filter_name(e.cfg.filter) << ','
       << filters::case_name(e.cfg.noise_case) << ','
       << fmt(e.summary.mean_total) << '\n';
  }
}

}  // namespace relkal::sim
