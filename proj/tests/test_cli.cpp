#include "cli.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gtest/gtest.h"

using namespace cqed;
using namespace cqed::cli;

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir() {
  const auto dir = fs::temp_directory_path() / ("cqed_cli_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CQED_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_path(const char* name) { return std::string(CQED_CONFIG_DIR) + "/" + name; }

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    // minimal RFC 4180 reader
    std::vector<std::string> cells(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char ch = line[i];
      if (quoted && ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = !quoted;
      } else if (ch == ',' && !quoted) {
        cells.emplace_back();
      } else {
        cells.back() += ch;
      }
    }
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(parse_config, accepts_documented_examples) {
  const auto ghz = parse_config(R"({"mode":"ghz","coefficients":[0.8,0.2],"n_atoms":3})");
  EXPECT_EQ(ghz.mode, Mode::Ghz);
  EXPECT_EQ(*ghz.n_atoms, 3u);
  EXPECT_EQ(ghz.weights, (std::vector<double>{0.8, 0.2}));

  const auto w = parse_config(R"({"mode":"w-excited","coefficients":[0.5,0.3,0.2],"special_j":1})");
  EXPECT_EQ(w.mode, Mode::WExcited);
  EXPECT_EQ(*w.special_j, 1u);
  EXPECT_EQ(*w.n_atoms, 3u);
  EXPECT_TRUE(w.warnings.empty());
}

TEST(parse_config, defaults_special_user_by_preparation) {
  EXPECT_EQ(*parse_config(R"({"mode":"w-ground","coefficients":[0.5,0.2,0.3]})").special_j, 2u);
  EXPECT_EQ(*parse_config(R"({"mode":"w-excited","coefficients":[0.2,0.5,0.3]})").special_j, 2u);
}

TEST(parse_config, complex_form) {
  const auto cfg = parse_config(R"({"mode":"ghz","coefficients":[[0.0,0.8944271909999159],[0.4472135954999579,0.0]]})");
  ASSERT_EQ(cfg.amplitudes.size(), 2u);
  EXPECT_NEAR(std::norm(cfg.coefficients()[0]), 0.8, 1e-15);
  EXPECT_THROW(parse_config(R"({"mode":"ghz","coefficients":[[0.9,0.1],0.2]})"), ParseError);
}

TEST(parse_config, normalization_guard) {
  EXPECT_THROW(parse_config(R"({"mode":"w-excited","coefficients":[0.5,0.2,0.2]})"), DomainError);
  EXPECT_THROW(parse_config(R"({"mode":"ghz","coefficients":[0.8,0.200002]})"), DomainError);

  const auto nudged = parse_config(R"({"mode":"ghz","coefficients":[0.8,0.2000005]})");
  ASSERT_EQ(nudged.warnings.size(), 1u);
  EXPECT_NEAR(nudged.weights[0] + nudged.weights[1], 1.0, 1e-15);

  const auto quiet = parse_config(R"({"mode":"ghz","coefficients":[0.8,0.2000000001]})");
  EXPECT_TRUE(quiet.warnings.empty());
  EXPECT_NEAR(quiet.weights[0] + quiet.weights[1], 1.0, 1e-15);
  EXPECT_THROW(parse_config(R"({"mode":"ghz","coefficients":[1.2,-0.2]})"), DomainError);
}

TEST(parse_config, schema_errors_name_key_and_line) {
  try {
    parse_config("{\n  \"mode\": \"ghz\",\n  \"coefficients\": [0.8, 0.2],\n  \"n_atom\": 3\n}");
    FAIL() << "unknown key accepted";
  } catch (const ParseError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("n_atom"), std::string::npos) << what;
    EXPECT_NE(what.find("line 4"), std::string::npos) << what;
  }
  try {
    parse_config("{\n  \"mode\": \"ghz\",\n  \"coefficients\": [0.8 0.2]\n}");
    FAIL() << "syntax error accepted";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config(R"({"mode":"teleport"})"), ParseError);
  EXPECT_THROW(parse_config(R"({"coefficients":[1,0]})"), ParseError);
  EXPECT_THROW(parse_config(R"({"mode":"ghz","coefficients":[0.8,0.2],"n_atoms":-2})"), ParseError);
  EXPECT_THROW(parse_config(R"({"mode":"w-ground","coefficients":[0.5,0.3,0.2],"special_j":4})"), ParseError);
  EXPECT_THROW(parse_config(R"({"mode":"validate-dispersive"})"), ParseError);
  EXPECT_THROW(parse_config(R"({"mode":"validate-dispersive","delta_over_epsilon":[0.5]})"), DomainError);
  EXPECT_THROW(parse_config("[1, 2]"), ParseError);
}

TEST(run, ghz_report_passes) {
  const auto report = run(parse_config(R"({"mode":"ghz","coefficients":[0.8,0.2],"n_atoms":3})"));
  ASSERT_TRUE(report.distillation.has_value());
  EXPECT_NEAR(report.distillation->p_success, 0.4, 1e-15);
  EXPECT_TRUE(report.pass());
  const auto rows = csv_rows(render(report, Format::Csv));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NEAR(std::stod(rows[1][6]) + std::stod(rows[2][6]), 1.0, 1e-14);
}

TEST(run, ordering_violation_is_domain_error) {
  EXPECT_THROW(run(parse_config(R"({"mode":"w-excited","coefficients":[0.5,0.3,0.2],"special_j":2})")), DomainError);
  EXPECT_THROW(run(parse_config(R"({"mode":"ghz","coefficients":[0.2,0.8]})")), DomainError);
}

TEST(emit, three_atom_excited_csv) {
  const auto report = run(parse_config(R"({"mode":"w-excited","coefficients":[0.5,0.3,0.2],"special_j":1})"));
  const auto rows = csv_rows(render(report, Format::Csv));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"mode", "N", "c1", "c2", "c3", "branch_class", "aux_pattern", "probability",
                                               "fidelity", "analytic_probability", "deviation"}));
  EXPECT_EQ(rows[1][6], "ee");
  EXPECT_EQ(rows[1][5], "FULL_SUCCESS");
  EXPECT_EQ(rows[2][6], "eg");
  EXPECT_EQ(rows[2][5], "PARTIAL_BELL(1,2)");
  EXPECT_EQ(rows[3][6], "ge");
  EXPECT_EQ(rows[4][6], "gg");
  const double expected[] = {0.36, 0.36, 0.16, 0.12};
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(std::stod(rows[k + 1][7]), expected[k], 1e-14);
}

TEST(emit, deviation_column_matches_printed_values) {
  const auto report = run(parse_config(R"({"mode":"w-excited","coefficients":[0.31,0.27,0.22,0.2],"special_j":1})"));
  const auto rows = csv_rows(render(report, Format::Csv));
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& row = rows[k];
    const double p = std::stod(row[row.size() - 4]), a = std::stod(row[row.size() - 2]), d = std::stod(row.back());
    EXPECT_NEAR(d, std::abs(p - a), 1e-15 * std::max(1.0, std::abs(p - a))) << row[5];
  }
}

TEST(emit, sweep_has_one_row_per_grid_point) {
  const auto report = run(parse_config(R"({"mode":"sweep","n_atoms":3})"));
  const auto rows = csv_rows(render(report, Format::Csv));
  EXPECT_EQ(rows.size(), 11u);
  EXPECT_TRUE(report.pass());
}

TEST(emit, unwritable_path) {
  const auto report = run(parse_config(R"({"mode":"ghz","coefficients":[0.8,0.2]})"));
  EXPECT_THROW(emit(report, Format::Csv, "/nonexistent-dir/out.csv"), EmitError);
}

TEST(structured_text, round_trips) {
  const char* configs[] = {
      R"({"mode":"w-excited","coefficients":[0.4,0.25,0.2,0.15],"special_j":1,"samples":2000,"rng_seed":3})",
      R"({"mode":"ghz","coefficients":[[0.0,0.8944271909999159],[0.4472135954999579,0.0]],"n_atoms":4})",
      R"({"mode":"sweep","b2_grid":[0.1,0.5]})",
      R"({"mode":"w-excited","coefficients":[0.5,0.3,0.2],"analytic_perturbation":{"branch":"FAILURE","delta":0.5}})",
  };
  for (const char* text : configs) {
    const auto report = run(parse_config(text));
    const auto j = report_to_json(report);
    const auto back = report_from_json(json::parse(j.dump()));
    EXPECT_EQ(report_to_json(back), j) << text;
    EXPECT_EQ(render(back, Format::Csv), render(report, Format::Csv)) << text;
  }
}

TEST(sampling, deterministic_and_within_bounds) {
  const auto cfg = parse_config(R"({"mode":"w-excited","coefficients":[0.4,0.25,0.2,0.15],"samples":100000,"rng_seed":17})");
  const auto a = run(cfg);
  const auto b = run(cfg);
  ASSERT_TRUE(a.sampled.has_value());
  EXPECT_EQ(a.sampled->counts, b.sampled->counts);
  EXPECT_TRUE(a.sampled->result.pass) << a.sampled->result.max_abs_deviation;
  std::size_t total = 0;
  for (const auto& [k, c] : a.sampled->counts) total += c;
  EXPECT_EQ(total, 100000u);
}

TEST(process, exit_codes) {
  const auto dir = scratch_dir();
  EXPECT_EQ(run_cli(config_path("ghz.json") + " --out " + (dir / "ghz.csv").string()), kExitOk);
  EXPECT_EQ(run_cli(config_path("w_excited_perturbed.json") + " --out " + (dir / "bad.csv").string()), kExitComparison);
  EXPECT_EQ(run_cli((dir / "missing.json").string()), kExitIo);
  EXPECT_EQ(run_cli("--no-such-flag " + config_path("ghz.json")), kExitUsage);
  EXPECT_EQ(run_cli(""), kExitUsage);

  std::ofstream(dir / "broken.json") << "{\"mode\": \"ghz\",\n \"coefficients\": [0.8, 0.2],,\n}";
  EXPECT_EQ(run_cli((dir / "broken.json").string()), kExitParse);
  std::ofstream(dir / "unnormalized.json") << R"({"mode":"ghz","coefficients":[0.8,0.1]})";
  EXPECT_EQ(run_cli((dir / "unnormalized.json").string()), kExitDomain);
  EXPECT_EQ(run_cli(config_path("ghz.json") + " --out /nonexistent-dir/x.csv"), kExitIo);
  fs::remove_all(dir);
}

TEST(process, overrides_and_byte_identical_output) {
  const auto dir = scratch_dir();
  const auto first = dir / "first.csv", second = dir / "second.csv";
  ASSERT_EQ(run_cli(config_path("w_excited.json") + " --out " + first.string()), kExitOk);
  ASSERT_EQ(run_cli(config_path("w_excited.json") + " --out " + second.string()), kExitOk);
  EXPECT_EQ(slurp(first), slurp(second));
  EXPECT_FALSE(slurp(first).empty());

  const auto json_out = dir / "ghz.json";
  ASSERT_EQ(run_cli(config_path("ghz.json") + " --coefficients 0.7,0.3 --n-atoms 5 --format structured-text --out " +
                    json_out.string()),
            kExitOk);
  const auto j = json::parse(slurp(json_out));
  EXPECT_EQ(j.at("config").at("n_atoms"), 5);
  EXPECT_NEAR(j.at("distillation").at("p_success").get<double>(), 0.6, 1e-14);
  fs::remove_all(dir);
}
