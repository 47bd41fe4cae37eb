#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "relkal/filters.hpp"
#include "relkal/models.hpp"

// Monte Carlo benchmark harness: scenario assembly, per-run noise
// realizations shared across filters, the combined error metric, the 18-case
// matrix (3 filters x 2 measurement types x 3 IMU cases), and CSV export.

namespace relkal::sim {

using filters::Belief;
using filters::CaseLabel;
using lie::Chirality;
using lie::Mat9;
using lie::SE23;
using lie::Vec3;

enum class FilterKind { kLrkf, kRrkf, kQekf };

const char* filter_name(FilterKind kind);
const char* measurement_name(Chirality kind);

/// Offsets applied to the true initial relative state to form the initial
/// estimate: attitude as a rotation vector multiplied on the right.
struct InitialErrorSpec {
  Vec3 attitude = Vec3(0.0, 0.0, M_PI_2);
  Vec3 velocity = Vec3(0.5, 0.8, -0.4);
  Vec3 position = Vec3(0.0, 1.0, -1.0);
};

/// diag((pi/6)^2 I3, 4 I3, 4 I3): the benchmark's left-parametrized initial
/// covariance.
Mat9 default_initial_covariance();

struct ScenarioConfig {
  double duration = 30.0;
  double dt = 0.01;
  double meas_rate = 2.0;  // Hz
  CaseLabel noise_case = CaseLabel::kII;
  FilterKind filter = FilterKind::kLrkf;
  Chirality measurement = Chirality::kLeft;
  int n_runs = 100;
  std::uint64_t master_seed = 42;
  InitialErrorSpec initial_error;
  Mat9 P0 = default_initial_covariance();

  /// Zero every noise draw while the filters keep their nominal
  /// covariances (prevents singular innovation covariances in exact runs).
  bool noise_free = false;

  /// The right-parametrized initial covariance conjugates the left one at
  /// the true initial state by default; this flag anchors it at the initial
  /// estimate instead.
  bool right_cov_at_estimate = false;

  /// Record the normalized estimation error squared per step (diagnostic
  /// only; costs one 9x9 solve per step).
  bool record_nees = false;

  int steps() const { return static_cast<int>(std::lround(duration / dt)); }
  int steps_per_epoch() const {
    return static_cast<int>(std::lround(1.0 / (meas_rate * dt)));
  }

  /// Throws std::invalid_argument when rates do not mesh: duration must be
  /// an integer number of steps and dt must divide the measurement period
  /// within 1e-12.
  void validate() const;
};

struct ErrorBreakdown {
  double pos_m = 0.0;
  double vel_mps = 0.0;
  double att_deg = 0.0;
  double combined = 0.0;
};

/// pos + vel + attitude(deg) with the trace-formula angle, clamped.
ErrorBreakdown error_metric(const SE23& truth, const SE23& est);

struct StepError {
  double t = 0.0;
  double att_deg = 0.0;
  double vel_mps = 0.0;
  double pos_m = 0.0;
  double combined = 0.0;
};

struct RunResult {
  std::vector<StepError> steps;  // includes the t = 0 initial error
  std::vector<double> nees;      // filled only when record_nees is set
  double total_error = 0.0;      // time average of combined
  bool diverged = false;
};

inline constexpr double kDivergencePositionLimit = 1e3;  // m

/// One noise realization: the truth trajectory plus both measurement
/// streams, so every filter/measurement pairing replays identical noise.
struct Realization {
  std::vector<models::TruthSample> truth;  // size steps() + 1
  std::vector<int> epoch_steps;            // step index the epoch follows
  std::vector<Eigen::VectorXd> z_left;
  std::vector<Eigen::VectorXd> z_right;
};

/// Deterministic in (master_seed, run_index, dt grid, noise case); the
/// filter and measurement selections do not influence generation.
Realization generate_realization(const ScenarioConfig& cfg, int run_index);

/// Content hash over the truth trajectory and both measurement sequences.
std::uint64_t realization_hash(const Realization& real);

/// Left-parametrized initial belief: estimate offset from the truth by the
/// configured initial error, covariance P0.
Belief build_initial_belief(const ScenarioConfig& cfg, const SE23& truth0);

/// Right-parametrized counterpart; see right_cov_at_estimate.
Belief build_right_belief(const ScenarioConfig& cfg, const SE23& truth0);

/// QEKF baseline initialized from the same estimate and block scales.
filters::QekfState build_qekf_state(const ScenarioConfig& cfg,
                                    const SE23& truth0);

/// Precomputed per-scenario constants (measurement model, its covariance,
/// process noise case).
struct ScenarioContext {
  models::MeasurementModel model;
  Eigen::MatrixXd sigma_z;
  filters::ProcessNoiseCase kase;
};

ScenarioContext make_context(const ScenarioConfig& cfg);

/// Filtering pass over a prebuilt realization.
RunResult run_filtering(const ScenarioConfig& cfg, const ScenarioContext& ctx,
                        const Realization& real);

/// generate_realization + run_filtering for one run index.
RunResult run_once(const ScenarioConfig& cfg, int run_index);

struct McSummary {
  double mean_total = 0.0;  // over non-diverged runs
  double std_total = 0.0;
  int n_runs = 0;
  int n_diverged = 0;
  std::vector<double> per_run;  // per run index; NaN marks divergence
};

/// Runs indices 0..n_runs-1 on a worker pool; the aggregate is invariant
/// to thread count. n_threads = 0 selects the hardware concurrency.
McSummary monte_carlo(const ScenarioConfig& cfg, int n_threads = 0);

/// The 18 benchmark scenarios: filters x measurement types x IMU cases.
std::vector<ScenarioConfig> case_matrix(int n_runs = 100,
                                        std::uint64_t master_seed = 42,
                                        bool noise_free = false);

struct MatrixEntry {
  ScenarioConfig cfg;
  McSummary summary;
};

/// Full matrix with realizations shared across the six filter/measurement
/// pairings of each IMU case; equals per-config monte_carlo output.
std::vector<MatrixEntry> run_case_matrix(int n_runs = 100,
                                         std::uint64_t master_seed = 42,
                                         int n_threads = 0,
                                         bool noise_free = false);

void write_summary_csv(std::ostream& os,
                       const std::vector<MatrixEntry>& entries);
void write_run_csv(std::ostream& os, const RunResult& result);
/// Long-format rows (measurement, filter, case, mean) for bar-chart tools.
void write_plot_csv(std::ostream& os, const std::vector<MatrixEntry>& entries);

}  // namespace relkal::sim
