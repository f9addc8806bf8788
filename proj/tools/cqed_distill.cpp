// cqed_distill: run one configuration and write its report.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cli.hpp"

using namespace cqed;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EmitError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entanglement concentration runs with closed-form cross-checks"};
  std::string config_path;
  std::optional<std::string> mode, out, format, coefficients;
  std::optional<std::size_t> n_atoms, special_j, samples;
  std::optional<std::uint64_t> rng_seed;
  std::optional<double> tolerance;
  bool timing = false;

  app.add_option("config", config_path, "JSON run configuration")->required();
  app.add_option("--mode", mode, "ghz, w-ground, w-excited, validate-dispersive or sweep");
  app.add_option("--coefficients", coefficients, "comma-separated squared magnitudes");
  app.add_option("--n-atoms", n_atoms, "GHZ atom count");
  app.add_option("--special-j", special_j, "special user (1-based) for W modes");
  app.add_option("--samples", samples, "Monte Carlo branch samples");
  app.add_option("--rng-seed", rng_seed, "seed for sampling");
  app.add_option("--tolerance", tolerance, "comparison tolerance");
  app.add_option("--out", out, "output path (default: stdout)");
  app.add_option("--format", format, "csv or structured-text")->check(CLI::IsMember({"csv", "structured-text"}));
  app.add_flag("--timing", timing, "report wall-clock time (output is then not reproducible)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? cli::kExitOk : cli::kExitUsage;
  }

  std::string text;
  try {
    text = read_file(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitIo;
  }

  try {
    auto doc = cli::parse_document(text);
    if (!doc.is_object()) throw ParseError("configuration must be a single JSON object");
    if (mode) doc["mode"] = *mode;
    if (coefficients) {
      cli::json list = cli::json::array();
      std::stringstream ss(*coefficients);
      for (std::string item; std::getline(ss, item, ',');) {
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        if (item.empty() || *end != '\0') throw ParseError("--coefficients: '" + item + "' is not a number");
        list.push_back(v);
      }
      doc["coefficients"] = list;
    }
    if (n_atoms) doc["n_atoms"] = *n_atoms;
    if (special_j) doc["special_j"] = *special_j;
    if (samples) doc["samples"] = *samples;
    if (rng_seed) doc["rng_seed"] = *rng_seed;
    if (tolerance) doc["tolerance"] = *tolerance;
    if (out) doc["output_path"] = *out;
    if (format) doc["format"] = *format;

    const cli::RunConfig config = cli::config_from_json(doc, text);
    for (const auto& w : config.warnings) std::cerr << "warning: " << w << "\n";

    const auto start = std::chrono::steady_clock::now();
    cli::RunReport report = cli::run(config);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    if (timing) {
      report.duration_seconds = elapsed.count();
      std::cerr << "elapsed: " << elapsed.count() << " s\n";
    }

    if (config.output_path) {
      cli::emit(report, config.format, *config.output_path);
    } else {
      std::cout << cli::render(report, config.format);
      std::cout.flush();
      if (!std::cout) throw EmitError("write to stdout failed");
    }
    if (!report.pass()) {
      std::cerr << "comparison failed: max deviation " << report.comparison.max_abs_deviation << " (tolerance "
                << report.comparison.tolerance << ")\n";
      return cli::kExitComparison;
    }
    return cli::kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::exit_code_for(e);
  }
}
