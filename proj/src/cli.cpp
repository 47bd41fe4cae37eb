#include "relkal/cli.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "relkal/hash.hpp"
#include "relkal/models.hpp"
#include "relkal/sti.hpp"

namespace relkal::cli {
namespace {

using lie::Vec3;
using nlohmann::json;

constexpr double kDegPerRad = 180.0 / M_PI;

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string uppercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  return s;
}

sim::FilterKind parse_filter(const std::string& s) {
  const std::string v = lowercase(s);
  if (v == "lrkf") return sim::FilterKind::kLrkf;
  if (v == "rrkf") return sim::FilterKind::kRrkf;
  if (v == "qekf") return sim::FilterKind::kQekf;
  throw std::invalid_argument("filter must be lrkf, rrkf, or qekf (got \"" +
                              s + "\")");
}

lie::Chirality parse_measurement(const std::string& s) {
  const std::string v = lowercase(s);
  if (v == "zl") return lie::Chirality::kLeft;
  if (v == "zr") return lie::Chirality::kRight;
  throw std::invalid_argument("measurement must be zl or zr (got \"" + s +
                              "\")");
}

filters::CaseLabel parse_case(const std::string& s) {
  const std::string v = uppercase(s);
  if (v == "I") return filters::CaseLabel::kI;
  if (v == "II") return filters::CaseLabel::kII;
  if (v == "III") return filters::CaseLabel::kIII;
  throw std::invalid_argument("case must be I, II, or III (got \"" + s +
                              "\")");
}

/// Shortest round-trip decimal form; keeps CSV bytes reproducible without
/// committing to a fixed digit count.
std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return std::string(buf);
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3 ||
      !std::all_of(j.begin(), j.end(),
                   [](const json& e) { return e.is_number(); })) {
    throw std::invalid_argument("config: \"" + key +
                                "\" must be an array of 3 numbers");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

double number_from(const json& j, const std::string& key) {
  if (!j.is_number()) {
    throw std::invalid_argument("config: \"" + key + "\" must be a number");
  }
  return j.get<double>();
}

int int_from(const json& j, const std::string& key) {
  if (!j.is_number_integer()) {
    throw std::invalid_argument("config: \"" + key + "\" must be an integer");
  }
  return j.get<int>();
}

bool bool_from(const json& j, const std::string& key) {
  if (!j.is_boolean()) {
    throw std::invalid_argument("config: \"" + key + "\" must be a boolean");
  }
  return j.get<bool>();
}

std::string string_from(const json& j, const std::string& key) {
  if (!j.is_string()) {
    throw std::invalid_argument("config: \"" + key + "\" must be a string");
  }
  return j.get<std::string>();
}

void apply_initial_error(const json& j, sim::InitialErrorSpec* spec) {
  if (!j.is_object()) {
    throw std::invalid_argument(
        "config: \"initial_error\" must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    if (key == "attitude_deg") {
      spec->attitude = vec3_from(value, key) / kDegPerRad;
    } else if (key == "velocity_mps") {
      spec->velocity = vec3_from(value, key);
    } else if (key == "position_m") {
      spec->position = vec3_from(value, key);
    } else {
      throw std::invalid_argument("config: unknown key \"initial_error." +
                                  key + "\"");
    }
  }
}

void write_header(std::ostream& os, const char* command,
                  const CliConfig& cfg) {
  os << "# " << kToolName << " " << kVersion << " " << command << "\n";
  os << "# seed: " << cfg.scenario.master_seed << "\n";
  os << "# config-hash: " << hex16(cfg.config_hash()) << "\n";
  os << "# config: " << cfg.canonical() << "\n";
}

/// Full-buffer-then-file so a failure partway leaves nothing behind.
void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() +
                             " for writing");
  }
  out << body;
  out.flush();
  if (!out.good()) {
    throw std::runtime_error("write to " + path.string() + " failed");
  }
}

std::filesystem::path prepare_out_dir(const std::string& dir) {
  const std::filesystem::path p(dir.empty() ? "." : dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) {
    throw std::invalid_argument("cannot create output directory " +
                                p.string() + ": " + ec.message());
  }
  return p;
}

}  // namespace

json CliConfig::to_json() const {
  json j;
  j["duration_s"] = scenario.duration;
  j["dt_s"] = scenario.dt;
  j["meas_rate_hz"] = scenario.meas_rate;
  j["case"] = filters::case_name(scenario.noise_case);
  j["filter"] = sim::filter_name(scenario.filter);
  j["measurement"] = sim::measurement_name(scenario.measurement);
  j["n_runs"] = scenario.n_runs;
  j["seed"] = scenario.master_seed;
  j["initial_error"] = {
      {"attitude_deg", vec3_json(scenario.initial_error.attitude * kDegPerRad)},
      {"velocity_mps", vec3_json(scenario.initial_error.velocity)},
      {"position_m", vec3_json(scenario.initial_error.position)}};
  json diag = json::array();
  for (int i = 0; i < 9; ++i) diag.push_back(scenario.P0(i, i));
  j["p0_diag"] = diag;
  j["noise_free"] = scenario.noise_free;
  j["right_cov_at_estimate"] = scenario.right_cov_at_estimate;
  j["record_nees"] = scenario.record_nees;
  return j;
}

std::string CliConfig::canonical() const { return to_json().dump(); }

std::uint64_t CliConfig::config_hash() const {
  return hash::fnv1a(canonical());
}

CliConfig config_from_json(const json& j, CliConfig base) {
  if (!j.is_object()) {
    throw std::invalid_argument("config: top level must be a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    if (key == "duration_s") {
      base.scenario.duration = number_from(value, key);
    } else if (key == "dt_s") {
      base.scenario.dt = number_from(value, key);
    } else if (key == "meas_rate_hz") {
      base.scenario.meas_rate = number_from(value, key);
    } else if (key == "case") {
      base.scenario.noise_case = parse_case(string_from(value, key));
    } else if (key == "filter") {
      base.scenario.filter = parse_filter(string_from(value, key));
    } else if (key == "measurement") {
      base.scenario.measurement = parse_measurement(string_from(value, key));
    } else if (key == "n_runs") {
      base.scenario.n_runs = int_from(value, key);
    } else if (key == "seed") {
      if (!value.is_number_unsigned()) {
        throw std::invalid_argument(
            "config: \"seed\" must be an unsigned integer");
      }
      base.scenario.master_seed = value.get<std::uint64_t>();
    } else if (key == "initial_error") {
      apply_initial_error(value, &base.scenario.initial_error);
    } else if (key == "p0_diag") {
      if (!value.is_array() || value.size() != 9 ||
          !std::all_of(value.begin(), value.end(),
                       [](const json& e) { return e.is_number(); })) {
        throw std::invalid_argument(
            "config: \"p0_diag\" must be an array of 9 numbers");
      }
      base.scenario.P0.setZero();
      for (int i = 0; i < 9; ++i) {
        base.scenario.P0(i, i) = value[i].get<double>();
      }
    } else if (key == "noise_free") {
      base.scenario.noise_free = bool_from(value, key);
    } else if (key == "right_cov_at_estimate") {
      base.scenario.right_cov_at_estimate = bool_from(value, key);
    } else if (key == "record_nees") {
      base.scenario.record_nees = bool_from(value, key);
    } else if (key == "out_dir") {
      base.out_dir = string_from(value, key);
    } else if (key == "threads") {
      const int t = int_from(value, key);
      if (t < 0) {
        throw std::invalid_argument("config: \"threads\" must be >= 0");
      }
      base.threads = t;
    } else if (key == "write_runs") {
      base.write_runs = bool_from(value, key);
    } else if (key == "verbose") {
      base.verbose = bool_from(value, key);
    } else {
      throw std::invalid_argument("config: unknown key \"" + key + "\"");
    }
  }
  return base;
}

CliConfig load_config(const std::string& path, CliConfig base) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("config: cannot open \"" + path + "\"");
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: " + path + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* env = std::getenv("RELKAL_SEED");
  if (env == nullptr || *env == '\0') return fallback;
  const std::string s(env);
  if (!std::all_of(s.begin(), s.end(),
                   [](unsigned char c) { return std::isdigit(c); })) {
    throw std::invalid_argument(
        "RELKAL_SEED must be an unsigned integer (got \"" + s + "\")");
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw std::invalid_argument("RELKAL_SEED is out of range (got \"" + s +
                                "\")");
  }
}

int cmd_simulate(const CliConfig& cfg) {
  const sim::ScenarioConfig& sc = cfg.scenario;
  sc.validate();
  const std::filesystem::path out = prepare_out_dir(cfg.out_dir);

  if (cfg.verbose) {
    std::cerr << kToolName << ": simulate " << sim::filter_name(sc.filter)
              << "/" << sim::measurement_name(sc.measurement) << "/case "
              << filters::case_name(sc.noise_case) << ", " << sc.n_runs
              << " runs, seed " << sc.master_seed << "\n";
  }

  const sim::McSummary mc = sim::monte_carlo(sc, cfg.threads);

  std::ostringstream summary;
  write_header(summary, "simulate", cfg);
  const std::vector<sim::MatrixEntry> entries{{sc, mc}};
  sim::write_summary_csv(summary, entries);
  write_file(out / "summary.csv", summary.str());

  std::ostringstream runs;
  write_header(runs, "simulate", cfg);
  runs << "run,total_error,diverged\n";
  for (int i = 0; i < sc.n_runs; ++i) {
    const double total = mc.per_run[static_cast<std::size_t>(i)];
    const bool diverged = std::isnan(total);
    runs << i << "," << (diverged ? std::string() : fmt_double(total)) << ","
         << (diverged ? 1 : 0) << "\n";
  }
  write_file(out / "runs.csv", runs.str());

  if (sc.n_runs == 1 || cfg.write_runs) {
    for (int i = 0; i < sc.n_runs; ++i) {
      const sim::RunResult run = sim::run_once(sc, i);
      std::ostringstream detail;
      write_header(detail, "simulate", cfg);
      sim::write_run_csv(detail, run);
      char name[32];
      std::snprintf(name, sizeof(name), "run_%03d.csv", i);
      write_file(out / name, detail.str());
    }
  }

  if (cfg.verbose) {
    std::cerr << kToolName << ": mean total error "
              << fmt_double(mc.mean_total) << " (" << mc.n_diverged << " of "
              << sc.n_runs << " diverged)\n";
  }
  return (mc.n_diverged == sc.n_runs) ? kExitAllDiverged : kExitOk;
}

int cmd_matrix(const CliConfig& cfg) {
  const sim::ScenarioConfig& sc = cfg.scenario;
  sc.validate();
  const std::filesystem::path out = prepare_out_dir(cfg.out_dir);

  if (cfg.verbose) {
    std::cerr << kToolName << ": matrix, " << sc.n_runs << " runs per case, seed "
              << sc.master_seed << "\n";
  }

  const std::vector<sim::MatrixEntry> entries = sim::run_case_matrix(
      sc.n_runs, sc.master_seed, cfg.threads, sc.noise_free);

  std::ostringstream summary;
  write_header(summary, "matrix", cfg);
  sim::write_summary_csv(summary, entries);
  write_file(out / "matrix_summary.csv", summary.str());

  std::ostringstream plot;
  write_header(plot, "matrix", cfg);
  sim::write_plot_csv(plot, entries);
  write_file(out / "matrix_plot.csv", plot.str());

  int total_diverged = 0;
  for (const sim::MatrixEntry& e : entries) {
    total_diverged += e.summary.n_diverged;
  }
  if (cfg.verbose) {
    std::cerr << kToolName << ": " << entries.size() << " cases written ("
              << total_diverged << " diverged runs)\n";
  }
  const int total_runs = static_cast<int>(entries.size()) * sc.n_runs;
  return (total_diverged == total_runs) ? kExitAllDiverged : kExitOk;
}

int cmd_audit(const std::string& model_name, std::uint64_t seed,
              bool identical_inputs, std::ostream& os) {
  if (model_name != "vehicle") {
    throw std::invalid_argument("audit: unknown model \"" + model_name +
                                "\" (available: vehicle)");
  }
  const std::function<models::ImuInput(double)> input1 = [](double t) {
    return models::agent_imu(1, t);
  };
  const std::function<models::ImuInput(double)> input2 =
      identical_inputs ? input1 : [](double t) {
        return models::agent_imu(2, t);
      };
  const sti::DecomposedField d1 = models::vehicle_field(input1);
  const sti::DecomposedField d2 = models::vehicle_field(input2);
  const std::vector<sti::Sample> samples = sti::draw_samples(1000, 10.0, seed);

  const sti::ConditionReport eti = sti::check_eti(d1, samples);
  const sti::ConditionReport l_rti = sti::check_l_rti(d1, d2, samples);
  const sti::ConditionReport r_rti = sti::check_r_rti(d1, d2, samples);
  for (const sti::ConditionReport& report : {eti, l_rti, r_rti}) {
    const json line = report;
    os << line.dump() << "\n";
  }

  // With distinct inputs the right relative state is input-coupled and must
  // fail; with a shared input all three conditions degenerate to passes.
  const bool expected = identical_inputs
                            ? (eti.pass && l_rti.pass && r_rti.pass)
                            : (eti.pass && l_rti.pass && !r_rti.pass);
  return expected ? kExitOk : kExitAuditMismatch;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"relative-state filtering benchmark"};
  app.name(kToolName);
  app.set_version_flag("--version",
                       std::string(kToolName) + " " + kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  int runs = 0;
  int threads = 0;
  std::string filter_s, meas_s, case_s, out_dir;

  CLI::App* simulate =
      app.add_subcommand("simulate", "run one scenario and write CSV reports");
  simulate->add_option("--config", config_path, "JSON configuration file");
  simulate->add_option("--seed", seed,
                       "master seed (overrides config and RELKAL_SEED)");
  simulate->add_option("--runs", runs, "Monte Carlo run count");
  simulate->add_option("--filter", filter_s, "lrkf, rrkf, or qekf");
  simulate->add_option("--measurement", meas_s, "zl or zr");
  simulate->add_option("--case", case_s, "IMU noise case: I, II, or III");
  simulate->add_option("--out", out_dir, "output directory");
  simulate->add_option("--threads", threads,
                       "worker cap (0 = hardware concurrency)");

  CLI::App* matrix =
      app.add_subcommand("matrix", "run the full 18-case benchmark matrix");
  matrix->add_option("--config", config_path, "JSON configuration file");
  matrix->add_option("--seed", seed,
                     "master seed (overrides config and RELKAL_SEED)");
  matrix->add_option("--runs", runs, "Monte Carlo runs per case");
  matrix->add_option("--out", out_dir, "output directory");
  matrix->add_option("--threads", threads,
                     "worker cap (0 = hardware concurrency)");

  std::string model = "vehicle";
  bool identical = false;
  CLI::App* audit = app.add_subcommand(
      "audit", "check the independence conditions of a dynamics model");
  audit->add_option("model", model, "model name")->capture_default_str();
  audit->add_option("--seed", seed, "sample seed (overrides RELKAL_SEED)");
  audit->add_flag("--identical-inputs", identical,
                  "drive both vehicles with the same input");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (audit->parsed()) {
      std::uint64_t s = audit->count("--seed") > 0 ? seed : seed_from_env(42);
      return cmd_audit(model, s, identical, std::cout);
    }

    CLI::App* cmd = simulate->parsed() ? simulate : matrix;
    CliConfig cfg;
    if (cmd->count("--seed") == 0) {
      cfg.scenario.master_seed = seed_from_env(cfg.scenario.master_seed);
    }
    if (cmd->count("--config") > 0) {
      cfg = load_config(config_path, std::move(cfg));
    }
    if (cmd->count("--seed") > 0) cfg.scenario.master_seed = seed;
    if (cmd->count("--runs") > 0) {
      if (runs < 1) throw std::invalid_argument("--runs must be >= 1");
      cfg.scenario.n_runs = runs;
    }
    if (cmd->count("--threads") > 0) {
      if (threads < 0) throw std::invalid_argument("--threads must be >= 0");
      cfg.threads = threads;
    }
    if (cmd->count("--out") > 0) cfg.out_dir = out_dir;

    if (simulate->parsed()) {
      if (simulate->count("--filter") > 0) {
        cfg.scenario.filter = parse_filter(filter_s);
      }
      if (simulate->count("--measurement") > 0) {
        cfg.scenario.measurement = parse_measurement(meas_s);
      }
      if (simulate->count("--case") > 0) {
        cfg.scenario.noise_case = parse_case(case_s);
      }
      return cmd_simulate(cfg);
    }
    return cmd_matrix(cfg);
  } catch (const std::exception& e) {
    std::cerr << kToolName << ": error: " << e.what() << "\n";
    return kExitConfig;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back(kToolName);
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace relkal::cli
