#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "relkal/sim.hpp"

// Command-line front end: binds JSON configuration files and flag overrides
// to the simulation library. Three commands: `simulate` (one scenario),
// `matrix` (the 18-case benchmark), `audit` (the independence-condition
// checks). Every output file starts with `#`-prefixed metadata (version,
// seed, config hash) sufficient to regenerate it byte for byte.

namespace relkal::cli {

inline constexpr const char* kToolName = "relkal";
inline constexpr const char* kVersion = "1.0.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;       // config/validation error
inline constexpr int kExitAllDiverged = 3;  // results contain only divergences
inline constexpr int kExitAuditMismatch = 4;

/// Effective tool configuration: the scenario plus output controls. Angles
/// cross the JSON boundary in degrees; everything internal is radians.
struct CliConfig {
  sim::ScenarioConfig scenario;
  std::string out_dir = ".";
  int threads = 0;        // 0 = hardware concurrency
  bool write_runs = false;  // per-step CSV for every run, not only n_runs == 1
  bool verbose = false;   // progress notes on stderr

  /// Canonical JSON of everything that determines output bytes (scenario
  /// fields and seed; sorted keys, compact). Output-routing knobs (out_dir,
  /// threads, write_runs, verbose) are deliberately excluded so reruns with
  /// different plumbing still hash identically.
  nlohmann::json to_json() const;
  std::string canonical() const;
  std::uint64_t config_hash() const;
};

/// Applies the keys present in `j` onto `base`, rejecting unknown keys and
/// out-of-domain values. Throws std::invalid_argument naming the key.
CliConfig config_from_json(const nlohmann::json& j, CliConfig base = {});

/// Reads, parses, and applies a JSON config file. Throws
/// std::invalid_argument on a missing file or any parse/domain error.
CliConfig load_config(const std::string& path, CliConfig base = {});

/// Seed resolution below the flag level: RELKAL_SEED when set (malformed
/// values throw std::invalid_argument), otherwise the scenario default.
std::uint64_t seed_from_env(std::uint64_t fallback);

/// Runs one scenario: writes summary.csv and runs.csv, plus run_<idx>.csv
/// when n_runs == 1 or write_runs is set. Returns kExitOk, or
/// kExitAllDiverged when every run diverged.
int cmd_simulate(const CliConfig& cfg);

/// Runs the 18-case benchmark matrix with realizations shared per run
/// index: writes matrix_summary.csv and matrix_plot.csv. The scenario's
/// filter/measurement/case selections are not consulted.
int cmd_matrix(const CliConfig& cfg);

/// Runs the three independence checks on the named model (only "vehicle")
/// over 1000 deterministic samples and prints one JSON report line each.
/// With distinct per-vehicle inputs the expected verdict pattern is ETI
/// pass, L-RTI pass, R-RTI fail; `identical_inputs` drives both vehicles
/// with the same input, where all three are expected to pass. Returns
/// kExitAuditMismatch when the observed pattern deviates.
int cmd_audit(const std::string& model_name, std::uint64_t seed,
              bool identical_inputs, std::ostream& os);

/// Full argv entry point used by the `relkal` binary. Parse and validation
/// problems print to stderr and return kExitConfig; nothing is written in
/// that case.
int run_cli(int argc, const char* const* argv);

/// Test convenience: `args` excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace relkal::cli
