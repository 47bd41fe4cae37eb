#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <unistd.h>

#include "relkal/cli.hpp"

using namespace relkal;
using cli::CliConfig;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Fresh per-process scratch directory; callers append unique leaf names.
fs::path scratch_root() {
  static const fs::path root =
      fs::temp_directory_path() /
      ("relkal_cli_test_" + std::to_string(::getpid()));
  fs::create_directories(root);
  return root;
}

fs::path fresh_dir(const std::string& leaf) {
  const fs::path p = scratch_root() / leaf;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path write_json(const std::string& leaf, const std::string& body) {
  const fs::path p = scratch_root() / leaf;
  std::ofstream out(p, std::ios::trunc);
  out << body;
  return p;
}

/// RAII guard so a failing assertion cannot leak RELKAL_SEED into later
/// test cases.
struct EnvSeed {
  explicit EnvSeed(const char* value) { ::setenv("RELKAL_SEED", value, 1); }
  ~EnvSeed() { ::unsetenv("RELKAL_SEED"); }
};

std::string short_config() {
  return R"({"duration_s": 2.0, "n_runs": 1})";
}

}  // namespace

TEST_CASE("empty config object changes nothing") {
  const CliConfig base;
  const CliConfig cfg = cli::config_from_json(json::object(), base);
  CHECK(cfg.canonical() == base.canonical());
  CHECK(cfg.out_dir == base.out_dir);
  CHECK(cfg.threads == base.threads);
}

TEST_CASE("config keys land on the right fields") {
  const json j = json::parse(R"({
    "duration_s": 10.0, "dt_s": 0.02, "meas_rate_hz": 5.0,
    "case": "III", "filter": "qekf", "measurement": "zr",
    "n_runs": 7, "seed": 123,
    "initial_error": {"attitude_deg": [0, 0, 45],
                      "velocity_mps": [1, 2, 3],
                      "position_m": [4, 5, 6]},
    "p0_diag": [1, 1, 1, 2, 2, 2, 3, 3, 3],
    "noise_free": true, "right_cov_at_estimate": true,
    "record_nees": true, "out_dir": "somewhere", "threads": 2,
    "write_runs": true, "verbose": true})");
  const CliConfig cfg = cli::config_from_json(j);
  CHECK(cfg.scenario.duration == 10.0);
  CHECK(cfg.scenario.dt == 0.02);
  CHECK(cfg.scenario.meas_rate == 5.0);
  CHECK(cfg.scenario.noise_case == filters::CaseLabel::kIII);
  CHECK(cfg.scenario.filter == sim::FilterKind::kQekf);
  CHECK(cfg.scenario.measurement == lie::Chirality::kRight);
  CHECK(cfg.scenario.n_runs == 7);
  CHECK(cfg.scenario.master_seed == 123);
  CHECK(cfg.scenario.initial_error.attitude.z() ==
        doctest::Approx(M_PI / 4.0));
  CHECK(cfg.scenario.initial_error.velocity.isApprox(lie::Vec3(1, 2, 3)));
  CHECK(cfg.scenario.initial_error.position.isApprox(lie::Vec3(4, 5, 6)));
  CHECK(cfg.scenario.P0(0, 0) == 1.0);
  CHECK(cfg.scenario.P0(4, 4) == 2.0);
  CHECK(cfg.scenario.P0(8, 8) == 3.0);
  CHECK(cfg.scenario.P0(1, 0) == 0.0);
  CHECK(cfg.scenario.noise_free);
  CHECK(cfg.scenario.right_cov_at_estimate);
  CHECK(cfg.scenario.record_nees);
  CHECK(cfg.out_dir == "somewhere");
  CHECK(cfg.threads == 2);
  CHECK(cfg.write_runs);
  CHECK(cfg.verbose);
}

TEST_CASE("selector strings are matched case-insensitively") {
  const json j = json::parse(
      R"({"filter": "LRKF", "measurement": "ZL", "case": "ii"})");
  const CliConfig cfg = cli::config_from_json(j);
  CHECK(cfg.scenario.filter == sim::FilterKind::kLrkf);
  CHECK(cfg.scenario.measurement == lie::Chirality::kLeft);
  CHECK(cfg.scenario.noise_case == filters::CaseLabel::kII);
}

TEST_CASE("unknown and ill-typed config keys are rejected") {
  CHECK_THROWS_WITH_AS(cli::config_from_json(json::parse(R"({"durr": 1})")),
                       doctest::Contains("unknown key \"durr\""),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      cli::config_from_json(
          json::parse(R"({"initial_error": {"attitude": [0, 0, 0]}})")),
      doctest::Contains("initial_error.attitude"), std::invalid_argument);
  CHECK_THROWS_AS(cli::config_from_json(json::parse(R"({"duration_s": "x"})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(cli::config_from_json(json::parse(R"({"seed": -1})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(cli::config_from_json(json::parse(R"({"n_runs": 1.5})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(cli::config_from_json(json::parse(R"({"filter": "ekf"})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      cli::config_from_json(json::parse(R"({"p0_diag": [1, 2, 3]})")),
      std::invalid_argument);
  CHECK_THROWS_AS(cli::config_from_json(json::parse("[1, 2]")),
                  std::invalid_argument);
}

TEST_CASE("config hash covers scenario fields and nothing else") {
  const CliConfig base;
  CliConfig moved = base;
  moved.out_dir = "elsewhere";
  moved.threads = 7;
  moved.write_runs = true;
  moved.verbose = true;
  CHECK(moved.config_hash() == base.config_hash());

  CliConfig reseeded = base;
  reseeded.scenario.master_seed = 43;
  CHECK(reseeded.config_hash() != base.config_hash());

  CliConfig refiltered = base;
  refiltered.scenario.filter = sim::FilterKind::kRrkf;
  CHECK(refiltered.config_hash() != base.config_hash());
}

TEST_CASE("initial attitude survives the degree round trip") {
  const json j = json::parse(
      R"({"initial_error": {"attitude_deg": [10, -20, 30]}})");
  const CliConfig cfg = cli::config_from_json(j);
  const json out = cfg.to_json();
  const auto& att = out["initial_error"]["attitude_deg"];
  CHECK(att[0].get<double>() == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(att[1].get<double>() == doctest::Approx(-20.0).epsilon(1e-12));
  CHECK(att[2].get<double>() == doctest::Approx(30.0).epsilon(1e-12));
}

TEST_CASE("environment seed applies only when nothing overrides it") {
  CHECK(cli::seed_from_env(42) == 42);
  {
    const EnvSeed env("1234");
    CHECK(cli::seed_from_env(42) == 1234);
  }
  {
    const EnvSeed env("12x");
    CHECK_THROWS_AS(cli::seed_from_env(42), std::invalid_argument);
  }
  {
    const EnvSeed env("99999999999999999999999999");
    CHECK_THROWS_AS(cli::seed_from_env(42), std::invalid_argument);
  }
  CHECK(cli::seed_from_env(7) == 7);
}

TEST_CASE("simulate writes reproducible reports with full metadata") {
  const fs::path cfg_path = write_json("short.json", short_config());
  const fs::path out1 = fresh_dir("sim1");
  const fs::path out2 = fresh_dir("sim2");
  const std::vector<std::string> args = {"simulate", "--config",
                                         cfg_path.string(), "--seed", "7"};
  auto with_out = [&args](const fs::path& out) {
    std::vector<std::string> full = args;
    full.insert(full.end(), {"--out", out.string()});
    return full;
  };
  CHECK(cli::run_cli(with_out(out1)) == cli::kExitOk);
  CHECK(cli::run_cli(with_out(out2)) == cli::kExitOk);

  for (const char* name : {"summary.csv", "runs.csv", "run_000.csv"}) {
    CHECK(fs::exists(out1 / name));
    CHECK(slurp(out1 / name) == slurp(out2 / name));
  }
  const std::string summary = slurp(out1 / "summary.csv");
  CHECK(summary.rfind("# relkal ", 0) == 0);
  CHECK(summary.find("# seed: 7\n") != std::string::npos);
  CHECK(summary.find("# config-hash: ") != std::string::npos);
  CHECK(summary.find("\"duration_s\":2.0") != std::string::npos);
  CHECK(summary.find("filter,measurement,case,n_runs") != std::string::npos);
}

TEST_CASE("flag overrides beat the config file and are echoed") {
  const fs::path cfg_path = write_json("short2.json", short_config());
  const fs::path out = fresh_dir("sim_override");
  const int code = cli::run_cli({"simulate", "--config", cfg_path.string(),
                                 "--seed", "9", "--filter", "QEKF", "--case",
                                 "III", "--measurement", "zr", "--out",
                                 out.string()});
  CHECK(code == cli::kExitOk);
  const std::string summary = slurp(out / "summary.csv");
  CHECK(summary.find("\"filter\":\"qekf\"") != std::string::npos);
  CHECK(summary.find("\"case\":\"III\"") != std::string::npos);
  CHECK(summary.find("\"measurement\":\"zR\"") != std::string::npos);
  CHECK(summary.find("qekf,zR,III,1,") != std::string::npos);
}

TEST_CASE("seed precedence: flag beats config beats environment") {
  const fs::path with_seed = write_json(
      "seeded.json", R"({"duration_s": 2.0, "n_runs": 1, "seed": 11})");
  const EnvSeed env("1234");

  const fs::path out_env = fresh_dir("seed_env");
  const fs::path cfg_path = write_json("short3.json", short_config());
  CHECK(cli::run_cli({"simulate", "--config", cfg_path.string(), "--out",
                      out_env.string()}) == cli::kExitOk);
  CHECK(slurp(out_env / "summary.csv").find("# seed: 1234\n") !=
        std::string::npos);

  const fs::path out_cfg = fresh_dir("seed_cfg");
  CHECK(cli::run_cli({"simulate", "--config", with_seed.string(), "--out",
                      out_cfg.string()}) == cli::kExitOk);
  CHECK(slurp(out_cfg / "summary.csv").find("# seed: 11\n") !=
        std::string::npos);

  const fs::path out_flag = fresh_dir("seed_flag");
  CHECK(cli::run_cli({"simulate", "--config", with_seed.string(), "--seed",
                      "5", "--out", out_flag.string()}) == cli::kExitOk);
  CHECK(slurp(out_flag / "summary.csv").find("# seed: 5\n") !=
        std::string::npos);
}

TEST_CASE("a malformed environment seed fails loudly") {
  const EnvSeed env("not-a-seed");
  const fs::path out = fresh_dir("env_bad");
  const fs::path cfg_path = write_json("short4.json", short_config());
  CHECK(cli::run_cli({"simulate", "--config", cfg_path.string(), "--out",
                      out.string()}) == cli::kExitConfig);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("validation failures exit with code 2 and write nothing") {
  const fs::path out = fresh_dir("never");
  const fs::path bad_key = write_json("bad_key.json", R"({"nope": 1})");
  CHECK(cli::run_cli({"simulate", "--config", bad_key.string(), "--out",
                      out.string()}) == cli::kExitConfig);
  const fs::path bad_mesh =
      write_json("bad_mesh.json", R"({"dt_s": 0.016})");
  CHECK(cli::run_cli({"simulate", "--config", bad_mesh.string(), "--out",
                      out.string()}) == cli::kExitConfig);
  const fs::path bad_syntax = write_json("bad_syntax.json", "not json");
  CHECK(cli::run_cli({"simulate", "--config", bad_syntax.string(), "--out",
                      out.string()}) == cli::kExitConfig);
  CHECK(cli::run_cli({"simulate", "--config",
                      (scratch_root() / "missing.json").string(), "--out",
                      out.string()}) == cli::kExitConfig);
  CHECK(cli::run_cli({"simulate", "--runs", "0", "--out", out.string()}) ==
        cli::kExitConfig);
  CHECK(cli::run_cli({"simulate", "--filter", "ekf", "--out",
                      out.string()}) == cli::kExitConfig);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("unknown flags and missing subcommands exit with code 2") {
  CHECK(cli::run_cli({"matrix", "--filter", "lrkf"}) == cli::kExitConfig);
  CHECK(cli::run_cli({"simulate", "--bogus"}) == cli::kExitConfig);
  CHECK(cli::run_cli({}) == cli::kExitConfig);
  CHECK(cli::run_cli({"frobnicate"}) == cli::kExitConfig);
}

TEST_CASE("help and version requests succeed") {
  CHECK(cli::run_cli({"--version"}) == cli::kExitOk);
  CHECK(cli::run_cli({"--help"}) == cli::kExitOk);
  CHECK(cli::run_cli({"simulate", "--help"}) == cli::kExitOk);
}

TEST_CASE("an all-diverged ensemble exits with code 3") {
  const fs::path cfg_path = write_json(
      "hopeless.json",
      R"({"duration_s": 2.0, "n_runs": 1,
          "initial_error": {"position_m": [2000, 0, 0]}})");
  const fs::path out = fresh_dir("diverged");
  CHECK(cli::run_cli({"simulate", "--config", cfg_path.string(), "--out",
                      out.string()}) == cli::kExitAllDiverged);
  const std::string runs = slurp(out / "runs.csv");
  CHECK(runs.find("0,,1\n") != std::string::npos);
}

TEST_CASE("matrix reports are byte-identical for any worker count") {
  const fs::path out1 = fresh_dir("mat1");
  const fs::path out2 = fresh_dir("mat2");
  CHECK(cli::run_cli({"matrix", "--runs", "1", "--out", out1.string(),
                      "--threads", "1"}) == cli::kExitOk);
  CHECK(cli::run_cli({"matrix", "--runs", "1", "--out", out2.string(),
                      "--threads", "3"}) == cli::kExitOk);
  for (const char* name : {"matrix_summary.csv", "matrix_plot.csv"}) {
    CHECK(slurp(out1 / name) == slurp(out2 / name));
  }
  const std::string summary = slurp(out1 / "matrix_summary.csv");
  CHECK(summary.rfind("# relkal ", 0) == 0);
  int data_rows = 0;
  std::istringstream lines(summary);
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty() && line[0] != '#' && line.find("filter,") != 0) {
      ++data_rows;
    }
  }
  CHECK(data_rows == 18);
}

TEST_CASE("audit prints one well-formed report per condition") {
  std::ostringstream os;
  CHECK(cli::cmd_audit("vehicle", 42, false, os) == cli::kExitOk);
  std::istringstream lines(os.str());
  std::vector<json> reports;
  for (std::string line; std::getline(lines, line);) {
    reports.push_back(json::parse(line));
  }
  REQUIRE(reports.size() == 3);
  CHECK(reports[0]["condition"] == "eti");
  CHECK(reports[1]["condition"] == "l_rti");
  CHECK(reports[2]["condition"] == "r_rti");
  CHECK(reports[0]["verdict"] == "pass");
  CHECK(reports[1]["verdict"] == "pass");
  CHECK(reports[2]["verdict"] == "fail");
  CHECK(reports[2]["max_residual"].get<double>() > 1e-3);

  std::ostringstream same;
  CHECK(cli::cmd_audit("vehicle", 42, true, same) == cli::kExitOk);
  std::istringstream same_lines(same.str());
  for (std::string line; std::getline(same_lines, line);) {
    CHECK(json::parse(line)["verdict"] == "pass");
  }
  CHECK_THROWS_AS(cli::cmd_audit("bicycle", 42, false, os),
                  std::invalid_argument);
}

TEST_CASE("audit command resolves its seed like the others") {
  const EnvSeed env("nope");
  CHECK(cli::run_cli({"audit"}) == cli::kExitConfig);
  CHECK(cli::run_cli({"audit", "--seed", "3"}) == cli::kExitOk);
}
