#pragma once

// Closed-form branch probabilities for the concentration protocols and the
// machinery to compare simulated reports against them.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cqed/protocols.hpp"

namespace cqed {

/// Key for probability mass outside every named closed-form branch.
inline const std::string kOtherBranch = "OTHER";

/// Branch label (BranchClass::label() or kOtherBranch) -> probability.
struct AnalyticBranchTable {
  std::map<std::string, double> entries;

  double total() const {
    double sum = 0.0;
    for (const auto& [key, p] : entries) sum += p;
    return sum;
  }
  double at(const std::string& key) const {
    auto it = entries.find(key);
    return it == entries.end() ? 0.0 : it->second;
  }
};

struct ComparisonResult {
  double max_abs_deviation = 0.0;
  std::map<std::string, double> deviations;
  double tolerance = 0.0;
  bool pass = false;
};

namespace detail {

inline double squared_norm_sum(std::span<const Complex> coeffs) {
  double s = 0.0;
  for (auto c : coeffs) s += std::norm(c);
  return s;
}

inline void require_normalized(std::span<const Complex> coeffs) {
  if (std::abs(squared_norm_sum(coeffs) - 1.0) > kInputTolerance) {
    throw DomainError("coefficients are not normalized");
  }
}

inline std::string partial_label(BranchKind kind, std::vector<std::size_t> atoms) {
  std::sort(atoms.begin(), atoms.end());
  return BranchClass{kind, std::move(atoms)}.label();
}

}  // namespace detail

inline AnalyticBranchTable analytic_ghz(Complex a, Complex b) {
  const Complex coeffs[] = {a, b};
  detail::require_normalized(coeffs);
  if (std::abs(a) < std::abs(b) - kInputTolerance) throw DomainError("GHZ closed form requires |a| >= |b|");
  const double a2 = std::norm(a);
  const double b2 = std::norm(b);
  return {{{"FULL_SUCCESS", 2.0 * b2}, {"FAILURE", a2 - b2}}};
}

inline AnalyticBranchTable analytic_w_ground(std::span<const Complex> coeffs, std::size_t j) {
  validate(WInput{{coeffs.begin(), coeffs.end()}, j, AuxPreparation::Ground});
  const double n = static_cast<double>(coeffs.size());
  const double success = n * std::norm(coeffs[j]);
  return {{{"FULL_SUCCESS", success}, {"FAILURE", 1.0 - success}}};
}

/// Excited auxiliaries at every user except j. For N = 3 the table has the four
/// named outcomes; for N > 3 it has full success, the (N-1)-atom W branches,
/// the Bell branches, and OTHER for the remaining mass.
inline AnalyticBranchTable analytic_w_excited(std::span<const Complex> coeffs, std::size_t j) {
  validate(WInput{{coeffs.begin(), coeffs.end()}, j, AuxPreparation::Excited});
  const std::size_t n = coeffs.size();
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != j) others.push_back(i);
  }
  const double cj2 = std::norm(coeffs[j]);

  AnalyticBranchTable table;
  if (n == 3) {
    const double a2 = cj2;
    const double b2 = std::norm(coeffs[others[0]]);
    const double c2 = std::norm(coeffs[others[1]]);
    table.entries["FULL_SUCCESS"] = 3.0 * b2 * c2 / a2;
    table.entries[detail::partial_label(BranchKind::PartialBell, {j, others[0]})] = 2.0 * (a2 - c2) * b2 / a2;
    table.entries[detail::partial_label(BranchKind::PartialBell, {j, others[1]})] = 2.0 * (a2 - b2) * c2 / a2;
    table.entries["FAILURE"] = (a2 - b2) * (a2 - c2) / a2;
    return table;
  }

  // lambda t_i = arccos(|c_i| / |c_j|)
  std::vector<double> cos2(n, 0.0), sin2(n, 0.0);
  for (auto i : others) {
    const double t = std::acos(std::clamp(std::abs(coeffs[i]) / std::abs(coeffs[j]), 0.0, 1.0));
    cos2[i] = std::cos(t) * std::cos(t);
    sin2[i] = std::sin(t) * std::sin(t);
  }

  double full = static_cast<double>(n);
  for (auto i : others) full *= std::norm(coeffs[i]);
  full /= std::pow(cj2, static_cast<double>(n - 2));
  table.entries["FULL_SUCCESS"] = full;

  for (auto i : others) {
    // auxiliary i in g, the rest in e: W over every atom except i
    double w = static_cast<double>(n - 1) * cj2 * sin2[i];
    // auxiliary i in e, the rest in g: Bell pair (i, j)
    double bell = 2.0 * cj2 * cos2[i];
    for (auto k : others) {
      if (k == i) continue;
      w *= cos2[k];
      bell *= sin2[k];
    }
    std::vector<std::size_t> rest;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) rest.push_back(k);
    }
    table.entries[detail::partial_label(BranchKind::PartialW, rest)] = w;
    table.entries[detail::partial_label(BranchKind::PartialBell, {i, j})] = bell;
  }
  table.entries[kOtherBranch] = 1.0 - table.total();
  return table;
}

/// Closed-form table matching the protocol and inputs echoed in a report.
inline AnalyticBranchTable analytic_table(const DistillationReport& report) {
  switch (report.protocol) {
    case ProtocolKind::Ghz:
      return analytic_ghz(report.coefficients.at(0), report.coefficients.at(1));
    case ProtocolKind::WGround:
      return analytic_w_ground(report.coefficients, report.special_j.value());
    case ProtocolKind::WExcited:
      break;
  }
  return analytic_w_excited(report.coefficients, report.special_j.value());
}

/// Outcomes pooled the way the closed forms are stated: named outcomes by
/// their classification, every other outcome under OTHER.
struct BranchGroup {
  std::string key;
  std::vector<std::string> patterns;  // sorted
  double probability = 0.0;
  double min_fidelity = 1.0;
};

inline std::vector<BranchGroup> group_outcomes(const DistillationReport& report) {
  std::map<std::string, BranchGroup> groups;
  for (const auto& o : report.outcomes) {
    const std::string key = o.paper_named ? o.classification.label() : kOtherBranch;
    auto& g = groups[key];
    g.key = key;
    g.patterns.push_back(o.pattern());
    g.probability += o.probability;
    g.min_fidelity = std::min(g.min_fidelity, o.fidelity);
  }
  std::vector<BranchGroup> out;
  for (auto& [key, g] : groups) {
    std::sort(g.patterns.begin(), g.patterns.end());
    out.push_back(std::move(g));
  }
  return out;
}

namespace detail {

inline ComparisonResult finish_comparison(std::map<std::string, double> deviations, double tolerance) {
  ComparisonResult r;
  r.tolerance = tolerance;
  for (const auto& [key, d] : deviations) r.max_abs_deviation = std::max(r.max_abs_deviation, d);
  r.deviations = std::move(deviations);
  r.pass = r.max_abs_deviation <= tolerance;
  return r;
}

// Groups with real mass but no table entry mean the engine and the closed forms disagree on classes.
inline void check_matched(const std::map<std::string, double>& masses, const AnalyticBranchTable& table) {
  constexpr double kUnmatchedFloor = 1e-12;
  std::string unmatched;
  for (const auto& [key, p] : masses) {
    if (p > kUnmatchedFloor && !table.entries.contains(key)) unmatched += (unmatched.empty() ? "" : ", ") + key;
  }
  if (!unmatched.empty()) throw ComparisonError("branches missing from analytic table: " + unmatched);
}

}  // namespace detail

/// Per-branch |simulated - analytic|; pass iff the maximum is within tolerance.
inline ComparisonResult compare(const DistillationReport& report, const AnalyticBranchTable& table, double tolerance) {
  std::map<std::string, double> masses;
  for (const auto& g : group_outcomes(report)) masses[g.key] = g.probability;
  detail::check_matched(masses, table);

  std::map<std::string, double> deviations;
  for (const auto& [key, p] : table.entries) deviations[key] = std::abs(p - (masses.contains(key) ? masses[key] : 0.0));
  for (const auto& [key, p] : masses) {
    if (!deviations.contains(key)) deviations[key] = std::abs(p);
  }
  return detail::finish_comparison(std::move(deviations), tolerance);
}

/// Sampled branch counts against a table: each frequency must lie within
/// `sigmas` binomial standard errors of its analytic probability. The returned
/// deviations are in units of standard errors (0 when both sides are exact).
inline ComparisonResult compare_sampled(const std::map<std::string, std::size_t>& counts, std::size_t samples,
                                        const AnalyticBranchTable& table, double sigmas = 5.0) {
  if (samples == 0) throw DomainError("sampled comparison needs at least one sample");
  std::map<std::string, double> freq;
  for (const auto& [key, c] : counts) freq[key] = static_cast<double>(c) / static_cast<double>(samples);
  detail::check_matched(freq, table);

  std::map<std::string, double> deviations;
  auto score = [samples](double p, double f) {
    const double se = std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(samples));
    const double diff = std::abs(f - p);
    if (se == 0.0) return diff <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
    return diff / se;
  };
  for (const auto& [key, p] : table.entries) deviations[key] = score(p, freq.contains(key) ? freq[key] : 0.0);
  for (const auto& [key, f] : freq) {
    if (!deviations.contains(key)) deviations[key] = score(0.0, f);
  }
  return detail::finish_comparison(std::move(deviations), sigmas);
}

/// Full-success probability with excited auxiliaries (special user = largest
/// coefficient) never exceeds the one with ground auxiliaries (special user =
/// smallest coefficient).
inline bool ordering_check(std::span<const Complex> coeffs) {
  detail::require_normalized(coeffs);
  if (coeffs.size() < 3) throw DomainError("ordering check needs at least three coefficients");
  auto by_magnitude = [](Complex x, Complex y) { return std::abs(x) < std::abs(y); };
  const auto j_excited = static_cast<std::size_t>(std::max_element(coeffs.begin(), coeffs.end(), by_magnitude) - coeffs.begin());
  const auto j_ground = static_cast<std::size_t>(std::min_element(coeffs.begin(), coeffs.end(), by_magnitude) - coeffs.begin());
  const double p_excited = analytic_w_excited(coeffs, j_excited).at("FULL_SUCCESS");
  const double p_ground = analytic_w_ground(coeffs, j_ground).at("FULL_SUCCESS");
  return p_excited <= p_ground + kInputTolerance;
}

}  // namespace cqed
