#pragma once

// Batch front end for the concentration protocols and the dispersive check:
// run configurations in, CSV or JSON reports out.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cqed/analytics.hpp"
#include "cqed/dynamics.hpp"
#include "cqed/protocols.hpp"
#include "json.hpp"

namespace cqed::cli {

using json = nlohmann::json;

enum class Mode { Ghz, WGround, WExcited, ValidateDispersive, Sweep };
enum class Format { Csv, StructuredText };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::Ghz:
      return "ghz";
    case Mode::WGround:
      return "w-ground";
    case Mode::WExcited:
      return "w-excited";
    case Mode::ValidateDispersive:
      return "validate-dispersive";
    case Mode::Sweep:
      break;
  }
  return "sweep";
}

inline const char* to_string(Format f) { return f == Format::Csv ? "csv" : "structured-text"; }

/// Exit codes of cqed_distill.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitParse = 2,
  kExitDomain = 3,
  kExitComparison = 4,
  kExitIo = 5,
  kExitNumerical = 6,
};

/// Shifts one analytic table entry; used to check that comparisons can fail.
struct Perturbation {
  std::string branch;
  double delta = 0.0;

  bool operator==(const Perturbation&) const = default;
};

struct RunConfig {
  Mode mode = Mode::Ghz;
  // Exactly one of these is filled for distillation modes. Weights are squared
  // magnitudes; amplitudes are the complex form.
  std::vector<double> weights;
  std::vector<Complex> amplitudes;
  std::optional<std::size_t> n_atoms;
  std::optional<std::size_t> special_j;  // 1-based
  std::vector<double> delta_over_epsilon;
  double lambda_t = std::numbers::pi / 3;
  std::vector<std::string> initial_states{"eg"};
  std::size_t fock_cutoff = 3;
  std::size_t steps_per_period = 128;
  std::vector<double> b2_grid;
  std::optional<std::size_t> samples;
  std::uint64_t rng_seed = 0;
  double tolerance = 1e-9;
  std::optional<std::string> output_path;
  Format format = Format::Csv;
  std::optional<Perturbation> analytic_perturbation;
  std::vector<std::string> warnings;  // produced while parsing, not echoed

  std::vector<Complex> coefficients() const {
    if (!amplitudes.empty()) return amplitudes;
    std::vector<Complex> c;
    for (double w : weights) c.emplace_back(std::sqrt(w));
    return c;
  }
};

struct DispersiveRow {
  double delta_over_epsilon = 0.0;
  double lambda_t = 0.0;
  std::string initial_state;
  double fidelity_gap = 0.0;
  double max_photon = 0.0;
  double photon_bound = 0.0;
  double richardson_error = 0.0;
};

struct SweepRow {
  double b2 = 0.0;
  std::size_t n_atoms = 0;
  double p_success = 0.0;
  double analytic = 0.0;
  double deviation = 0.0;
  double fidelity = 0.0;
};

struct SampledComparison {
  std::size_t samples = 0;
  std::uint64_t rng_seed = 0;
  std::map<std::string, std::size_t> counts;
  ComparisonResult result;
};

struct RunReport {
  RunConfig config;
  std::optional<DistillationReport> distillation;
  std::optional<AnalyticBranchTable> analytic;
  std::vector<DispersiveRow> dispersive;
  std::vector<SweepRow> sweep;
  ComparisonResult comparison;
  std::optional<SampledComparison> sampled;
  std::optional<double> duration_seconds;

  bool pass() const { return comparison.pass && (!sampled || sampled->result.pass); }
};

// Peak cavity population during the dispersive run stays below
// kPhotonBoundPerExcitation * (excited atoms) * (epsilon/delta)^2.
inline constexpr double kPhotonBoundPerExcitation = 4.0;

namespace detail {

inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

// First line mentioning "key", for error context; 0 when the key is not in the text.
inline std::size_t key_line(const std::string& text, const std::string& key) {
  const auto pos = text.find('"' + key + '"');
  return pos == std::string::npos ? 0 : line_col(text, pos).first;
}

struct FieldReader {
  const json& doc;
  const std::string& text;

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const std::size_t line = key_line(text, key);
    throw ParseError("field '" + key + "'" + (line ? " (line " + std::to_string(line) + ")" : std::string()) + ": " + what);
  }

  bool has(const std::string& key) const { return doc.contains(key) && !doc.at(key).is_null(); }

  double number(const std::string& key) const {
    const auto& v = doc.at(key);
    if (!v.is_number()) fail(key, "expected a number");
    return v.get<double>();
  }
  std::size_t count(const std::string& key) const {
    const auto& v = doc.at(key);
    if (!v.is_number_unsigned()) fail(key, "expected a non-negative integer");
    return v.get<std::size_t>();
  }
  std::string string(const std::string& key) const {
    const auto& v = doc.at(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }
  std::vector<double> numbers(const std::string& key) const {
    const auto& v = doc.at(key);
    if (!v.is_array()) fail(key, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) fail(key, "expected an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
  std::vector<std::string> strings(const std::string& key) const {
    const auto& v = doc.at(key);
    if (!v.is_array()) fail(key, "expected an array of strings");
    std::vector<std::string> out;
    for (const auto& x : v) {
      if (!x.is_string()) fail(key, "expected an array of strings");
      out.push_back(x.get<std::string>());
    }
    return out;
  }
};

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "mode",        "coefficients",     "n_atoms",       "special_j",       "delta_over_epsilon",
      "lambda_t",    "initial_states",   "fock_cutoff",   "steps_per_period", "b2_grid",
      "samples",     "rng_seed",         "tolerance",     "output_path",     "format",
      "analytic_perturbation"};
  return keys;
}

inline Mode parse_mode(const FieldReader& r) {
  const std::string m = r.string("mode");
  for (Mode candidate : {Mode::Ghz, Mode::WGround, Mode::WExcited, Mode::ValidateDispersive, Mode::Sweep}) {
    if (m == to_string(candidate)) return candidate;
  }
  r.fail("mode", "unknown mode '" + m + "'");
}

// Sum of squared magnitudes must be 1: silently accepted within 1e-12,
// rescaled with a warning within 1e-6, rejected beyond.
inline double normalization_scale(double sum, std::vector<std::string>& warnings) {
  const double off = std::abs(sum - 1.0);
  if (!(off <= 1e-6)) {
    std::ostringstream msg;
    msg.precision(15);
    msg << "coefficients have squared norm " << sum << ", expected 1";
    throw DomainError(msg.str());
  }
  if (off <= kInputTolerance) return 1.0;
  if (off > 1e-9) {
    std::ostringstream msg;
    msg.precision(15);
    msg << "coefficients renormalized (squared norm was " << sum << ")";
    warnings.push_back(msg.str());
  }
  return 1.0 / sum;
}

inline void parse_coefficients(const FieldReader& r, RunConfig& cfg) {
  const auto& v = r.doc.at("coefficients");
  if (!v.is_array() || v.empty()) r.fail("coefficients", "expected a non-empty array");
  const bool complex_form = v.front().is_array();
  double sum = 0.0;
  for (const auto& x : v) {
    if (complex_form) {
      if (!x.is_array() || x.size() != 2 || !x[0].is_number() || !x[1].is_number()) {
        r.fail("coefficients", "complex coefficients are [re, im] pairs; forms cannot be mixed");
      }
      cfg.amplitudes.emplace_back(x[0].get<double>(), x[1].get<double>());
      sum += std::norm(cfg.amplitudes.back());
    } else {
      if (!x.is_number()) r.fail("coefficients", "expected squared magnitudes (numbers); forms cannot be mixed");
      const double w = x.get<double>();
      if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("squared magnitudes must be finite and non-negative");
      cfg.weights.push_back(w);
      sum += w;
    }
  }
  if (!std::isfinite(sum)) throw DomainError("coefficients must be finite");
  const double scale = normalization_scale(sum, cfg.warnings);
  if (scale == 1.0) return;
  for (auto& w : cfg.weights) w *= scale;
  for (auto& c : cfg.amplitudes) c *= std::sqrt(scale);
}

inline std::size_t excitation_count(const std::string& state) {
  return static_cast<std::size_t>(std::count(state.begin(), state.end(), 'e'));
}

inline bool is_distillation(Mode m) { return m == Mode::Ghz || m == Mode::WGround || m == Mode::WExcited; }

inline std::vector<double> default_b2_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 10; ++k) grid.push_back(0.05 * k);
  return grid;
}

inline void check_mode_fields(RunConfig& cfg, const FieldReader& r) {
  const std::size_t n_coeffs = cfg.weights.size() + cfg.amplitudes.size();
  auto unused = [&](const std::string& key) {
    if (r.has(key)) cfg.warnings.push_back("field '" + key + "' is ignored in mode " + to_string(cfg.mode));
  };
  if (is_distillation(cfg.mode)) {
    if (n_coeffs == 0) r.fail("coefficients", std::string("required in mode ") + to_string(cfg.mode));
    for (auto key : {"delta_over_epsilon", "lambda_t", "initial_states", "fock_cutoff", "steps_per_period", "b2_grid"}) unused(key);
  } else {
    for (auto key : {"coefficients", "special_j", "samples", "analytic_perturbation"}) unused(key);
  }

  switch (cfg.mode) {
    case Mode::Ghz:
      if (n_coeffs != 2) r.fail("coefficients", "GHZ mode takes exactly two coefficients");
      if (!cfg.n_atoms) cfg.n_atoms = 2;
      unused("special_j");
      break;
    case Mode::WGround:
    case Mode::WExcited: {
      if (n_coeffs < 3) r.fail("coefficients", "W modes need at least three coefficients");
      if (cfg.n_atoms && *cfg.n_atoms != n_coeffs) r.fail("n_atoms", "does not match the number of coefficients");
      cfg.n_atoms = n_coeffs;
      const auto c = cfg.coefficients();
      auto less = [](Complex x, Complex y) { return std::abs(x) < std::abs(y); };
      if (!cfg.special_j) {
        const auto it = cfg.mode == Mode::WGround ? std::min_element(c.begin(), c.end(), less)
                                                  : std::max_element(c.begin(), c.end(), less);
        cfg.special_j = static_cast<std::size_t>(it - c.begin()) + 1;
      }
      if (*cfg.special_j < 1 || *cfg.special_j > n_coeffs) r.fail("special_j", "must lie in 1..N");
      break;
    }
    case Mode::ValidateDispersive:
      if (cfg.delta_over_epsilon.empty()) r.fail("delta_over_epsilon", "required in mode validate-dispersive");
      for (double x : cfg.delta_over_epsilon) {
        if (!(x >= 1.0) || !std::isfinite(x)) throw DomainError("delta_over_epsilon values must be finite and >= 1");
        if (x < 10.0) cfg.warnings.push_back("delta/epsilon below 10 is outside the far-detuned regime");
      }
      std::sort(cfg.delta_over_epsilon.begin(), cfg.delta_over_epsilon.end());
      if (std::adjacent_find(cfg.delta_over_epsilon.begin(), cfg.delta_over_epsilon.end()) != cfg.delta_over_epsilon.end()) {
        r.fail("delta_over_epsilon", "values must be distinct");
      }
      for (const auto& s : cfg.initial_states) {
        if (s != "gg" && s != "ge" && s != "eg" && s != "ee") r.fail("initial_states", "states are gg, ge, eg, or ee");
      }
      if (cfg.initial_states.empty()) r.fail("initial_states", "must not be empty");
      if (!(cfg.lambda_t >= 0.0) || !std::isfinite(cfg.lambda_t)) throw DomainError("lambda_t must be finite and >= 0");
      unused("n_atoms");
      break;
    case Mode::Sweep:
      if (cfg.b2_grid.empty()) cfg.b2_grid = default_b2_grid();
      for (double b2 : cfg.b2_grid) {
        if (!(b2 > 0.0 && b2 <= 0.5)) throw DomainError("b2_grid values must lie in (0, 0.5]");
      }
      if (!cfg.n_atoms) cfg.n_atoms = 2;
      break;
  }
  if (cfg.samples && *cfg.samples == 0) r.fail("samples", "must be positive");
  if (!(cfg.tolerance > 0.0) || !std::isfinite(cfg.tolerance)) throw DomainError("tolerance must be positive");
}

}  // namespace detail

/// Parses a JSON document, reporting syntax errors with line and column.
inline json parse_document(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what());
  }
}

/// Builds a validated configuration from a parsed document. `text` is the
/// source the document came from, used only for error context.
inline RunConfig config_from_json(const json& doc, const std::string& text = {}) {
  if (!doc.is_object()) throw ParseError("configuration must be a single JSON object");
  const detail::FieldReader r{doc, text};
  for (const auto& [key, value] : doc.items()) {
    if (!detail::known_keys().contains(key)) r.fail(key, "unknown key");
  }
  if (!r.has("mode")) r.fail("mode", "missing");

  RunConfig cfg;
  cfg.mode = detail::parse_mode(r);
  if (r.has("coefficients")) detail::parse_coefficients(r, cfg);
  if (r.has("n_atoms")) cfg.n_atoms = r.count("n_atoms");
  if (r.has("special_j")) cfg.special_j = r.count("special_j");
  if (r.has("delta_over_epsilon")) cfg.delta_over_epsilon = r.numbers("delta_over_epsilon");
  if (r.has("lambda_t")) cfg.lambda_t = r.number("lambda_t");
  if (r.has("initial_states")) cfg.initial_states = r.strings("initial_states");
  if (r.has("fock_cutoff")) cfg.fock_cutoff = r.count("fock_cutoff");
  if (r.has("steps_per_period")) cfg.steps_per_period = r.count("steps_per_period");
  if (r.has("b2_grid")) cfg.b2_grid = r.numbers("b2_grid");
  if (r.has("samples")) cfg.samples = r.count("samples");
  if (r.has("rng_seed")) cfg.rng_seed = r.count("rng_seed");
  if (r.has("tolerance")) cfg.tolerance = r.number("tolerance");
  if (r.has("output_path")) cfg.output_path = r.string("output_path");
  if (r.has("format")) {
    const std::string f = r.string("format");
    if (f == "csv") cfg.format = Format::Csv;
    else if (f == "structured-text") cfg.format = Format::StructuredText;
    else r.fail("format", "expected csv or structured-text");
  }
  if (r.has("analytic_perturbation")) {
    const auto& p = doc.at("analytic_perturbation");
    if (!p.is_object() || !p.contains("branch") || !p.contains("delta") || !p.at("branch").is_string() ||
        !p.at("delta").is_number() || p.size() != 2) {
      r.fail("analytic_perturbation", "expected {\"branch\": string, \"delta\": number}");
    }
    cfg.analytic_perturbation = Perturbation{p.at("branch").get<std::string>(), p.at("delta").get<double>()};
  }
  detail::check_mode_fields(cfg, r);
  return cfg;
}

inline RunConfig parse_config(const std::string& text) { return config_from_json(parse_document(text), text); }

/// Echo of a configuration; parsing it back gives the same configuration.
inline json config_to_json(const RunConfig& cfg) {
  json j;
  j["mode"] = to_string(cfg.mode);
  j["tolerance"] = cfg.tolerance;
  j["format"] = to_string(cfg.format);
  if (cfg.output_path) j["output_path"] = *cfg.output_path;
  if (detail::is_distillation(cfg.mode)) {
    if (!cfg.amplitudes.empty()) {
      json c = json::array();
      for (auto a : cfg.amplitudes) c.push_back({a.real(), a.imag()});
      j["coefficients"] = c;
    } else {
      j["coefficients"] = cfg.weights;
    }
    j["n_atoms"] = *cfg.n_atoms;
    if (cfg.special_j && cfg.mode != Mode::Ghz) j["special_j"] = *cfg.special_j;
    if (cfg.samples) {
      j["samples"] = *cfg.samples;
      j["rng_seed"] = cfg.rng_seed;
    }
    if (cfg.analytic_perturbation) {
      j["analytic_perturbation"] = {{"branch", cfg.analytic_perturbation->branch}, {"delta", cfg.analytic_perturbation->delta}};
    }
  } else if (cfg.mode == Mode::ValidateDispersive) {
    j["delta_over_epsilon"] = cfg.delta_over_epsilon;
    j["lambda_t"] = cfg.lambda_t;
    j["initial_states"] = cfg.initial_states;
    j["fock_cutoff"] = cfg.fock_cutoff;
    j["steps_per_period"] = cfg.steps_per_period;
  } else {
    j["b2_grid"] = cfg.b2_grid;
    j["n_atoms"] = *cfg.n_atoms;
  }
  return j;
}

namespace detail {

inline DistillationReport distill(const RunConfig& cfg, const std::vector<Complex>& c) {
  switch (cfg.mode) {
    case Mode::Ghz:
      return ghz_distill({c[0], c[1], *cfg.n_atoms});
    case Mode::WGround:
      return w_distill({c, *cfg.special_j - 1, AuxPreparation::Ground});
    default:
      break;
  }
  return w_distill({c, *cfg.special_j - 1, AuxPreparation::Excited});
}

inline SampledComparison sample_branches(const DistillationReport& report, const AnalyticBranchTable& table,
                                         std::size_t samples, std::uint64_t seed) {
  const auto groups = group_outcomes(report);
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& g : groups) cumulative.push_back(acc += g.probability);

  SampledComparison s;
  s.samples = samples;
  s.rng_seed = seed;
  for (const auto& g : groups) s.counts[g.key] = 0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, acc);
  for (std::size_t k = 0; k < samples; ++k) {
    const double x = u(rng);
    const auto idx = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), x) - cumulative.begin());
    ++s.counts[groups[std::min(idx, groups.size() - 1)].key];
  }
  s.result = compare_sampled(s.counts, samples, table);
  return s;
}

inline void run_distillation(RunReport& out) {
  const RunConfig& cfg = out.config;
  out.distillation = distill(cfg, cfg.coefficients());
  AnalyticBranchTable table = analytic_table(*out.distillation);
  if (cfg.analytic_perturbation) {
    const auto& p = *cfg.analytic_perturbation;
    if (!table.entries.contains(p.branch)) throw DomainError("analytic_perturbation names unknown branch '" + p.branch + "'");
    table.entries[p.branch] += p.delta;
  }
  out.comparison = compare(*out.distillation, table, cfg.tolerance);
  if (cfg.samples) out.sampled = sample_branches(*out.distillation, table, *cfg.samples, cfg.rng_seed);
  out.analytic = std::move(table);
}

inline void run_dispersive(RunReport& out) {
  const RunConfig& cfg = out.config;
  std::map<std::string, double> violations;
  for (const auto& state : cfg.initial_states) {
    const auto atoms = basis_state(Layout::atoms(2), {state[0] == 'e' ? kExcited : kGround, state[1] == 'e' ? kExcited : kGround});
    double previous = INFINITY;
    double monotone = 0.0, photons = 0.0;
    for (double ratio : cfg.delta_over_epsilon) {
      FullModelParams p;
      p.epsilon = 1.0;
      p.delta = ratio;
      p.fock_cutoff = cfg.fock_cutoff;
      p.steps_per_period = cfg.steps_per_period;
      const auto gap = dispersive_gap(p, cfg.lambda_t, atoms);
      DispersiveRow row{ratio, cfg.lambda_t, state, gap.fidelity_gap, gap.max_photon,
                        kPhotonBoundPerExcitation * static_cast<double>(excitation_count(state)) / (ratio * ratio),
                        gap.richardson_error};
      // A gap at the integration floor cannot decrease further.
      if (std::isfinite(previous) && previous > 1e-12) monotone = std::max(monotone, std::max(0.0, row.fidelity_gap - previous));
      photons = std::max(photons, std::max(0.0, row.max_photon - row.photon_bound));
      previous = row.fidelity_gap;
      out.dispersive.push_back(std::move(row));
    }
    violations["gap_increase(" + state + ")"] = monotone;
    violations["photon_excess(" + state + ")"] = photons;
  }
  ComparisonResult r;
  r.tolerance = 0.0;
  for (const auto& [k, v] : violations) r.max_abs_deviation = std::max(r.max_abs_deviation, v);
  r.deviations = std::move(violations);
  r.pass = r.max_abs_deviation <= r.tolerance;
  out.comparison = std::move(r);
}

inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", x);
  return buf;
}

inline void run_sweep(RunReport& out) {
  const RunConfig& cfg = out.config;
  ComparisonResult r;
  r.tolerance = cfg.tolerance;
  for (double b2 : cfg.b2_grid) {
    const auto report = ghz_distill({std::sqrt(1.0 - b2), std::sqrt(b2), *cfg.n_atoms});
    const double analytic = analytic_ghz(std::sqrt(1.0 - b2), std::sqrt(b2)).at("FULL_SUCCESS");
    double fidelity = 0.0;
    for (const auto& o : report.outcomes) {
      if (o.classification.kind == BranchKind::FullSuccess) fidelity = o.fidelity;
    }
    SweepRow row{b2, *cfg.n_atoms, report.p_success, analytic, std::abs(report.p_success - analytic), fidelity};
    r.deviations["b2=" + format_number(b2)] = row.deviation;
    r.max_abs_deviation = std::max(r.max_abs_deviation, row.deviation);
    out.sweep.push_back(row);
  }
  r.pass = r.max_abs_deviation <= r.tolerance;
  out.comparison = std::move(r);
}

}  // namespace detail

/// Runs a configuration. The result depends only on the configuration.
inline RunReport run(const RunConfig& config) {
  RunReport out;
  out.config = config;
  if (detail::is_distillation(config.mode)) detail::run_distillation(out);
  else if (config.mode == Mode::ValidateDispersive) detail::run_dispersive(out);
  else detail::run_sweep(out);
  return out;
}

// ---------------------------------------------------------------------------
// JSON form of a report

namespace detail {

// JSON has no infinities; they are written as strings.
inline json num(double x) {
  if (std::isfinite(x)) return x;
  return format_number(x);
}

inline double num_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  return NAN;
}

inline json complex_to_json(Complex c) { return json::array({c.real(), c.imag()}); }
inline Complex complex_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline const char* kind_name(BranchKind k) {
  switch (k) {
    case BranchKind::FullSuccess:
      return "FULL_SUCCESS";
    case BranchKind::PartialW:
      return "PARTIAL_W";
    case BranchKind::PartialBell:
      return "PARTIAL_BELL";
    case BranchKind::Failure:
      break;
  }
  return "FAILURE";
}

inline BranchKind kind_from(const std::string& s) {
  for (auto k : {BranchKind::FullSuccess, BranchKind::PartialW, BranchKind::PartialBell, BranchKind::Failure}) {
    if (s == kind_name(k)) return k;
  }
  throw ParseError("unknown branch kind '" + s + "'");
}

inline json comparison_to_json(const ComparisonResult& c) {
  json dev = json::object();
  for (const auto& [k, v] : c.deviations) dev[k] = num(v);
  return {{"max_abs_deviation", num(c.max_abs_deviation)}, {"tolerance", num(c.tolerance)}, {"pass", c.pass}, {"deviations", dev}};
}

inline ComparisonResult comparison_from_json(const json& j) {
  ComparisonResult c;
  c.max_abs_deviation = num_from(j.at("max_abs_deviation"));
  c.tolerance = num_from(j.at("tolerance"));
  c.pass = j.at("pass").get<bool>();
  for (const auto& [k, v] : j.at("deviations").items()) c.deviations[k] = num_from(v);
  return c;
}

inline json distillation_to_json(const DistillationReport& r) {
  json j;
  j["protocol"] = to_string(r.protocol);
  j["coefficients"] = json::array();
  for (auto c : r.coefficients) j["coefficients"].push_back(complex_to_json(c));
  j["n_atoms"] = r.n_atoms;
  if (r.special_j) j["special_j"] = *r.special_j + 1;
  j["schedule"] = json::array();
  for (const auto& e : r.schedule.entries) j["schedule"].push_back({{"user", e.user + 1}, {"lambda_t", e.lambda_t}});
  j["outcomes"] = json::array();
  for (const auto& o : r.outcomes) {
    json rec;
    rec["aux_users"] = json::array();
    for (const auto& a : o.aux_pattern) rec["aux_users"].push_back(a.user + 1);
    rec["aux_pattern"] = o.pattern();
    rec["probability"] = o.probability;
    rec["classification"] = o.classification.label();
    rec["kind"] = kind_name(o.classification.kind);
    rec["atoms"] = json::array();
    for (auto a : o.classification.atoms) rec["atoms"].push_back(a + 1);
    rec["fidelity"] = o.fidelity;
    rec["paper_named"] = o.paper_named;
    if (o.collapsed) {
      json amps = json::array();
      for (Eigen::Index k = 0; k < o.collapsed->amplitudes().size(); ++k) amps.push_back(complex_to_json(o.collapsed->amplitudes()[k]));
      json labels = json::array();
      for (std::size_t s = 0; s < o.collapsed->layout().size(); ++s) labels.push_back(o.collapsed->layout().label(s));
      rec["collapsed"] = {{"atoms", labels}, {"amplitudes", amps}};
    } else {
      rec["collapsed"] = nullptr;
    }
    j["outcomes"].push_back(rec);
  }
  j["p_success"] = r.p_success;
  j["p_by_class"] = r.p_by_class;
  j["unnamed_mass"] = r.unnamed_mass;
  return j;
}

inline DistillationReport distillation_from_json(const json& j) {
  DistillationReport r;
  const auto protocol = j.at("protocol").get<std::string>();
  if (protocol == "ghz") r.protocol = ProtocolKind::Ghz;
  else if (protocol == "w-ground") r.protocol = ProtocolKind::WGround;
  else if (protocol == "w-excited") r.protocol = ProtocolKind::WExcited;
  else throw ParseError("unknown protocol '" + protocol + "'");
  for (const auto& c : j.at("coefficients")) r.coefficients.push_back(complex_from_json(c));
  r.n_atoms = j.at("n_atoms").get<std::size_t>();
  if (j.contains("special_j")) r.special_j = j.at("special_j").get<std::size_t>() - 1;
  for (const auto& e : j.at("schedule")) r.schedule.entries.push_back({e.at("user").get<std::size_t>() - 1, e.at("lambda_t").get<double>()});
  for (const auto& rec : j.at("outcomes")) {
    OutcomeRecord o;
    const auto users = rec.at("aux_users");
    const auto pattern = rec.at("aux_pattern").get<std::string>();
    for (std::size_t k = 0; k < users.size(); ++k) o.aux_pattern.push_back({users[k].get<std::size_t>() - 1, pattern.at(k) == 'e' ? kExcited : kGround});
    o.probability = rec.at("probability").get<double>();
    o.classification.kind = kind_from(rec.at("kind").get<std::string>());
    for (const auto& a : rec.at("atoms")) o.classification.atoms.push_back(a.get<std::size_t>() - 1);
    o.fidelity = rec.at("fidelity").get<double>();
    o.paper_named = rec.at("paper_named").get<bool>();
    if (!rec.at("collapsed").is_null()) {
      const auto& c = rec.at("collapsed");
      std::vector<Subsystem> subs;
      for (const auto& l : c.at("atoms")) subs.push_back({SubsystemKind::Atom, 2, l.get<std::string>()});
      CVector amps(static_cast<Eigen::Index>(c.at("amplitudes").size()));
      for (std::size_t k = 0; k < c.at("amplitudes").size(); ++k) amps[static_cast<Eigen::Index>(k)] = complex_from_json(c.at("amplitudes")[k]);
      o.collapsed = StateVector::from_normalized(Layout(subs), amps);
    }
    r.outcomes.push_back(std::move(o));
  }
  r.p_success = j.at("p_success").get<double>();
  r.p_by_class = j.at("p_by_class").get<std::map<std::string, double>>();
  r.unnamed_mass = j.at("unnamed_mass").get<double>();
  return r;
}

}  // namespace detail

inline json report_to_json(const RunReport& r) {
  json j;
  j["config"] = config_to_json(r.config);
  j["warnings"] = r.config.warnings;
  j["comparison"] = detail::comparison_to_json(r.comparison);
  j["pass"] = r.pass();
  if (r.distillation) {
    j["distillation"] = detail::distillation_to_json(*r.distillation);
    j["analytic"] = r.analytic->entries;
    json groups = json::array();
    for (const auto& g : group_outcomes(*r.distillation)) {
      groups.push_back({{"branch_class", g.key}, {"aux_patterns", g.patterns}, {"probability", g.probability}, {"min_fidelity", g.min_fidelity}});
    }
    j["groups"] = groups;
  }
  if (r.sampled) {
    j["sampled"] = {{"samples", r.sampled->samples}, {"rng_seed", r.sampled->rng_seed}, {"counts", r.sampled->counts},
                    {"comparison", detail::comparison_to_json(r.sampled->result)}};
  }
  if (!r.dispersive.empty()) {
    j["dispersive"] = json::array();
    for (const auto& d : r.dispersive) {
      j["dispersive"].push_back({{"delta_over_epsilon", d.delta_over_epsilon}, {"lambda_t", d.lambda_t}, {"initial_state", d.initial_state},
                                 {"fidelity_gap", d.fidelity_gap}, {"max_photon", d.max_photon}, {"photon_bound", d.photon_bound},
                                 {"richardson_error", d.richardson_error}});
    }
  }
  if (!r.sweep.empty()) {
    j["sweep"] = json::array();
    for (const auto& s : r.sweep) {
      j["sweep"].push_back({{"b2", s.b2}, {"n_atoms", s.n_atoms}, {"p_success", s.p_success}, {"analytic_probability", s.analytic},
                            {"deviation", s.deviation}, {"fidelity", s.fidelity}});
    }
  }
  if (r.duration_seconds) j["duration_seconds"] = *r.duration_seconds;
  return j;
}

/// Inverse of report_to_json. Derived fields (pass, groups) are recomputed.
inline RunReport report_from_json(const json& j) {
  RunReport r;
  r.config = config_from_json(j.at("config"));
  r.config.warnings = j.at("warnings").get<std::vector<std::string>>();
  r.comparison = detail::comparison_from_json(j.at("comparison"));
  if (j.contains("distillation")) {
    r.distillation = detail::distillation_from_json(j.at("distillation"));
    r.analytic = AnalyticBranchTable{j.at("analytic").get<std::map<std::string, double>>()};
  }
  if (j.contains("sampled")) {
    const auto& s = j.at("sampled");
    r.sampled = SampledComparison{s.at("samples").get<std::size_t>(), s.at("rng_seed").get<std::uint64_t>(),
                                  s.at("counts").get<std::map<std::string, std::size_t>>(), detail::comparison_from_json(s.at("comparison"))};
  }
  if (j.contains("dispersive")) {
    for (const auto& d : j.at("dispersive")) {
      r.dispersive.push_back({d.at("delta_over_epsilon").get<double>(), d.at("lambda_t").get<double>(), d.at("initial_state").get<std::string>(),
                              d.at("fidelity_gap").get<double>(), d.at("max_photon").get<double>(), d.at("photon_bound").get<double>(),
                              d.at("richardson_error").get<double>()});
    }
  }
  if (j.contains("sweep")) {
    for (const auto& s : j.at("sweep")) {
      r.sweep.push_back({s.at("b2").get<double>(), s.at("n_atoms").get<std::size_t>(), s.at("p_success").get<double>(),
                         s.at("analytic_probability").get<double>(), s.at("deviation").get<double>(), s.at("fidelity").get<double>()});
    }
  }
  if (j.contains("duration_seconds")) r.duration_seconds = j.at("duration_seconds").get<double>();
  return r;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string s;
  for (std::size_t k = 0; k < parts.size(); ++k) s += (k ? sep : "") + parts[k];
  return s;
}

// RFC 4180 quoting; branch labels such as PARTIAL_BELL(1,2) contain commas.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

inline std::string csv_line(const std::vector<std::string>& cells) {
  std::vector<std::string> quoted;
  for (const auto& c : cells) quoted.push_back(csv_field(c));
  return join(quoted, ",") + "\n";
}

// |p - a| recomputed from the printed values, so the column checks out at printed precision.
inline std::string printed_deviation(const std::string& p, const std::string& a) {
  return format_number(std::abs(std::strtod(p.c_str(), nullptr) - std::strtod(a.c_str(), nullptr)));
}

inline std::string distillation_csv(const RunReport& r) {
  const auto& cfg = r.config;
  const auto coeffs = cfg.coefficients();
  std::vector<std::string> header{"mode", "N"};
  for (std::size_t k = 0; k < coeffs.size(); ++k) header.push_back("c" + std::to_string(k + 1));
  for (auto h : {"branch_class", "aux_pattern", "probability", "fidelity", "analytic_probability", "deviation"}) header.push_back(h);
  if (r.sampled) header.push_back("sampled_count");

  std::vector<std::pair<std::string, std::vector<std::string>>> rows;
  for (const auto& g : group_outcomes(*r.distillation)) {
    std::vector<std::string> row{to_string(cfg.mode), std::to_string(*cfg.n_atoms)};
    for (auto c : coeffs) row.push_back(format_number(std::norm(c)));
    const std::string pattern = join(g.patterns, "|");
    const std::string p = format_number(g.probability);
    const std::string a = format_number(r.analytic->at(g.key));
    row.insert(row.end(), {g.key, pattern, p, format_number(g.min_fidelity), a, printed_deviation(p, a)});
    if (r.sampled) row.push_back(std::to_string(r.sampled->counts.at(g.key)));
    rows.emplace_back(pattern, std::move(row));
  }
  std::sort(rows.begin(), rows.end());

  std::string out = csv_line(header);
  for (const auto& [key, row] : rows) out += csv_line(row);
  return out;
}

inline std::string dispersive_csv(const RunReport& r) {
  std::string out = "delta_over_epsilon,lambda_t,initial_state,fidelity_gap,max_photon\n";
  for (const auto& d : r.dispersive) {
    out += csv_line({format_number(d.delta_over_epsilon), format_number(d.lambda_t), d.initial_state, format_number(d.fidelity_gap),
                     format_number(d.max_photon)});
  }
  return out;
}

inline std::string sweep_csv(const RunReport& r) {
  std::string out = "mode,N,b2,p_success,analytic_probability,deviation,fidelity\n";
  for (const auto& s : r.sweep) {
    const std::string p = format_number(s.p_success), a = format_number(s.analytic);
    out += csv_line({"sweep", std::to_string(s.n_atoms), format_number(s.b2), p, a, printed_deviation(p, a), format_number(s.fidelity)});
  }
  return out;
}

}  // namespace detail

inline std::string render(const RunReport& report, Format format) {
  if (format == Format::StructuredText) return report_to_json(report).dump(2) + "\n";
  if (report.distillation) return detail::distillation_csv(report);
  if (!report.dispersive.empty()) return detail::dispersive_csv(report);
  return detail::sweep_csv(report);
}

/// Writes the rendered report to `path`.
inline void emit(const RunReport& report, Format format, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw EmitError("cannot open '" + path + "' for writing");
  out << render(report, format);
  out.flush();
  if (!out) throw EmitError("write to '" + path + "' failed");
}

/// Exit code for an exception escaping parse/run/emit.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e)) return kExitParse;
  if (dynamic_cast<const ComparisonError*>(&e)) return kExitComparison;
  if (dynamic_cast<const EmitError*>(&e)) return kExitIo;
  if (dynamic_cast<const IntegrationError*>(&e) || dynamic_cast<const TruncationError*>(&e) ||
      dynamic_cast<const UnitarityError*>(&e)) {
    return kExitNumerical;
  }
  return kExitDomain;
}

}  // namespace cqed::cli
