#pragma once

// Entanglement concentration for GHZ-class and W-class atomic states.
//
// Each protocol prepares the shared state together with auxiliary atoms,
// lets every (data atom, auxiliary) pair interact through its own vacuum
// cavity via the closed-form two-atom gate, and then enumerates every joint
// auxiliary measurement outcome exactly: probability, collapsed data state,
// and what the collapsed state is.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cqed/dynamics.hpp"
#include "cqed/hilbert.hpp"

namespace cqed {

inline constexpr double kInputTolerance = 1e-12;
/// A non-failure branch must reach this fidelity with its target.
inline constexpr double kSuccessFidelity = 1.0 - 1e-9;

enum class AuxPreparation { Ground, Excited };

inline const char* to_string(AuxPreparation p) { return p == AuxPreparation::Ground ? "ground" : "excited"; }

/// a|e...e> + b|g...g> on n_atoms atoms; the auxiliary sits with atom 1.
struct GhzInput {
  Complex a;
  Complex b;
  std::size_t n_atoms = 2;
};

/// sum_i c_i |g..e_i..g>. Every user except special_j (0-based) holds an auxiliary.
struct WInput {
  std::vector<Complex> coeffs;
  std::size_t special_j = 0;
  AuxPreparation aux_prep = AuxPreparation::Ground;
};

struct ScheduleEntry {
  std::size_t user = 0;   // 0-based data atom the auxiliary interacts with
  double lambda_t = 0.0;  // dimensionless interaction phase

  bool operator==(const ScheduleEntry&) const = default;
};

struct InteractionSchedule {
  std::vector<ScheduleEntry> entries;

  bool operator==(const InteractionSchedule&) const = default;
};

enum class BranchKind { FullSuccess, PartialW, PartialBell, Failure };

/// What a post-selected data state is. `atoms` lists the 0-based data atoms
/// sharing the entangled state (empty for failures).
struct BranchClass {
  BranchKind kind = BranchKind::Failure;
  std::vector<std::size_t> atoms;

  static BranchClass failure() { return {}; }

  /// FULL_SUCCESS, PARTIAL_W(1,3,4), PARTIAL_BELL(1,2), FAILURE; atoms 1-based.
  std::string label() const {
    auto list = [this] {
      std::string s = "(";
      for (std::size_t k = 0; k < atoms.size(); ++k) s += (k ? "," : "") + std::to_string(atoms[k] + 1);
      return s + ")";
    };
    switch (kind) {
      case BranchKind::FullSuccess:
        return "FULL_SUCCESS";
      case BranchKind::PartialW:
        return "PARTIAL_W" + list();
      case BranchKind::PartialBell:
        return "PARTIAL_BELL" + list();
      case BranchKind::Failure:
        break;
    }
    return "FAILURE";
  }

  bool operator==(const BranchClass&) const = default;
};

struct AuxOutcome {
  std::size_t user = 0;     // data atom whose auxiliary was measured
  std::size_t outcome = 0;  // kGround or kExcited

  bool operator==(const AuxOutcome&) const = default;
};

struct OutcomeRecord {
  std::vector<AuxOutcome> aux_pattern;
  double probability = 0.0;
  std::optional<StateVector> collapsed;  // data atoms only
  BranchClass classification;
  double fidelity = 0.0;  // against the classified target; 0 for failures
  // False for outcome patterns no closed-form branch statement covers. Only
  // happens for excited auxiliaries with N > 3: patterns other than all e,
  // exactly one g, or exactly one e.
  bool paper_named = true;

  /// Auxiliary outcomes as a string of 'g'/'e' in user order.
  std::string pattern() const {
    std::string s;
    for (const auto& o : aux_pattern) s += o.outcome == kGround ? 'g' : 'e';
    return s;
  }
};

enum class ProtocolKind { Ghz, WGround, WExcited };

inline const char* to_string(ProtocolKind p) {
  switch (p) {
    case ProtocolKind::Ghz:
      return "ghz";
    case ProtocolKind::WGround:
      return "w-ground";
    case ProtocolKind::WExcited:
      break;
  }
  return "w-excited";
}

struct DistillationReport {
  ProtocolKind protocol = ProtocolKind::Ghz;
  std::vector<Complex> coefficients;  // {a, b} for GHZ, c_1..c_N for W
  std::size_t n_atoms = 0;
  std::optional<std::size_t> special_j;  // W only, 0-based
  InteractionSchedule schedule;
  std::vector<OutcomeRecord> outcomes;
  double p_success = 0.0;
  std::map<std::string, double> p_by_class;
  double unnamed_mass = 0.0;

  double total_probability() const {
    return std::accumulate(outcomes.begin(), outcomes.end(), 0.0,
                           [](double acc, const OutcomeRecord& o) { return acc + o.probability; });
  }
};

struct ProtocolOptions {
  std::size_t max_ghz_atoms = 10;
  std::size_t max_w_atoms = 8;
  /// Order in which schedule entries are applied (indices into the schedule).
  /// Empty means schedule order. The pair gates act on disjoint atoms, so any
  /// permutation gives the same report.
  std::vector<std::size_t> gate_order;
};

inline void validate(const GhzInput& in) {
  if (in.n_atoms < 2) throw DomainError("GHZ input needs at least two atoms");
  for (auto c : {in.a, in.b}) {
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) throw DomainError("GHZ coefficients must be finite");
  }
  const double norm = std::norm(in.a) + std::norm(in.b);
  if (std::abs(norm - 1.0) > kInputTolerance) throw DomainError("GHZ coefficients must satisfy |a|^2 + |b|^2 = 1");
  if (std::abs(in.a) < std::abs(in.b) - kInputTolerance) throw DomainError("GHZ input requires |a| >= |b|");
}

inline void validate(const WInput& in) {
  const std::size_t n = in.coeffs.size();
  if (n < 3) throw DomainError("W input needs at least three atoms");
  if (in.special_j >= n) throw DomainError("special user index out of range");
  double norm = 0.0;
  for (auto c : in.coeffs) {
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) throw DomainError("W coefficients must be finite");
    norm += std::norm(c);
  }
  if (std::abs(norm - 1.0) > kInputTolerance) throw DomainError("W coefficients must satisfy sum |c_i|^2 = 1");
  const double cj = std::abs(in.coeffs[in.special_j]);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == in.special_j) continue;
    const double ci = std::abs(in.coeffs[i]);
    if (in.aux_prep == AuxPreparation::Ground && cj > ci + kInputTolerance) {
      throw DomainError("ground-prepared auxiliaries require |c_j| <= |c_i| for the special user");
    }
    if (in.aux_prep == AuxPreparation::Excited && cj < ci - kInputTolerance) {
      throw DomainError("excited-prepared auxiliaries require |c_j| >= |c_i| for the special user");
    }
  }
}

namespace detail {

// arccos of a magnitude ratio in [0, 1]; rounding above 1 is clamped.
inline double interaction_phase(double numerator, double denominator) {
  if (!(denominator > 0.0)) throw DegenerateInputError("zero coefficient where an interaction ratio is needed");
  return std::acos(std::clamp(numerator / denominator, 0.0, 1.0));
}

inline void check_schedule(const InteractionSchedule& schedule) {
  for (const auto& e : schedule.entries) {
    if (!(e.lambda_t >= 0.0 && e.lambda_t <= std::numbers::pi / 2 + 1e-15)) {
      throw DomainError("interaction phase outside [0, pi/2]");
    }
  }
}

}  // namespace detail

/// Single entry: the auxiliary with atom 1 interacts for lambda t = arccos(|b|/|a|).
inline InteractionSchedule schedule_ghz(const GhzInput& in) {
  validate(in);
  InteractionSchedule s{{ScheduleEntry{0, detail::interaction_phase(std::abs(in.b), std::abs(in.a))}}};
  detail::check_schedule(s);
  return s;
}

/// Ground auxiliaries: lambda t_i = arccos(|c_j|/|c_i|).
/// Excited auxiliaries: lambda t_i = arccos(|c_i|/|c_j|).
/// One entry per user i != j, in user order.
inline InteractionSchedule schedule_w(const WInput& in) {
  validate(in);
  InteractionSchedule s;
  const double cj = std::abs(in.coeffs[in.special_j]);
  for (std::size_t i = 0; i < in.coeffs.size(); ++i) {
    if (i == in.special_j) continue;
    const double ci = std::abs(in.coeffs[i]);
    const double phase = in.aux_prep == AuxPreparation::Ground ? detail::interaction_phase(cj, ci)
                                                               : detail::interaction_phase(ci, cj);
    s.entries.push_back({i, phase});
  }
  detail::check_schedule(s);
  return s;
}

/// Structural classification of a post-selected W-protocol data state.
///
/// Atoms whose value is the same across the whole support are frozen; the
/// remaining atoms S are tested against a W state on S (a Bell state when
/// |S| = 2). Whatever does not reach kSuccessFidelity is a failure.
inline std::pair<BranchClass, double> classify_w_branch(const StateVector& data) {
  constexpr double kSupportFloor = 1e-13;
  const Layout& layout = data.layout();
  const auto atoms = layout.atom_indices();
  const std::size_t n = atoms.size();

  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < data.dim(); ++i) {
    if (std::norm(data.amplitudes()[static_cast<Eigen::Index>(i)]) > kSupportFloor) support.push_back(i);
  }
  std::vector<std::size_t> varying;
  for (auto a : atoms) {
    const std::size_t first = layout.digit(support.front(), a);
    for (auto idx : support) {
      if (layout.digit(idx, a) != first) {
        varying.push_back(a);
        break;
      }
    }
  }
  if (varying.size() < 2) return {BranchClass::failure(), 0.0};

  const Target target = varying.size() == 2 ? Target::bell(varying[0], varying[1]) : Target::w(varying);
  double f = 0.0;
  try {
    f = fidelity_up_to_local_phase(data, target);
  } catch (const FactorizationError&) {
    return {BranchClass::failure(), 0.0};
  }
  if (f < kSuccessFidelity) return {BranchClass::failure(), 0.0};

  BranchKind kind = BranchKind::PartialW;
  if (varying.size() == n) kind = BranchKind::FullSuccess;
  else if (varying.size() == 2) kind = BranchKind::PartialBell;
  return {BranchClass{kind, varying}, f};
}

namespace detail {

inline std::vector<std::size_t> gate_order(const InteractionSchedule& schedule, const ProtocolOptions& options) {
  std::vector<std::size_t> order(schedule.entries.size());
  std::iota(order.begin(), order.end(), 0);
  if (options.gate_order.empty()) return order;
  auto given = options.gate_order;
  std::sort(given.begin(), given.end());
  if (given != order) throw DomainError("gate_order must be a permutation of the schedule entries");
  return options.gate_order;
}

// Applies each scheduled gate to (data atom, its auxiliary); aux_of[user] is the auxiliary's subsystem index.
inline StateVector run_gates(StateVector state, const InteractionSchedule& schedule,
                             const std::vector<std::size_t>& aux_of, const ProtocolOptions& options) {
  for (auto k : gate_order(schedule, options)) {
    const auto& e = schedule.entries[k];
    state = apply_local_unitary(state, {e.user, aux_of[e.user]}, effective_gate(e.lambda_t).matrix);
  }
  return state;
}

template <typename Classify, typename Named>
std::vector<OutcomeRecord> enumerate_branches(const StateVector& state, const std::vector<std::size_t>& aux_users,
                                              const std::vector<std::size_t>& aux_of, Classify classify,
                                              Named named) {
  const std::size_t k = aux_users.size();
  std::vector<std::size_t> measured(k);
  for (std::size_t m = 0; m < k; ++m) measured[m] = aux_of[aux_users[m]];

  std::vector<OutcomeRecord> out;
  out.reserve(std::size_t{1} << k);
  std::vector<std::size_t> outcomes(k);
  for (std::size_t pattern = 0; pattern < (std::size_t{1} << k); ++pattern) {
    OutcomeRecord rec;
    for (std::size_t m = 0; m < k; ++m) {
      outcomes[m] = (pattern >> (k - 1 - m)) & 1u;
      rec.aux_pattern.push_back({aux_users[m], outcomes[m]});
    }
    auto post = postselect(state, measured, outcomes);
    rec.probability = post.probability;
    rec.collapsed = std::move(post.remainder);
    if (rec.collapsed) {
      std::tie(rec.classification, rec.fidelity) = classify(*rec.collapsed);
    }
    rec.paper_named = named(rec);
    out.push_back(std::move(rec));
  }
  return out;
}

inline void summarize(DistillationReport& report) {
  report.p_success = 0.0;
  report.unnamed_mass = 0.0;
  report.p_by_class.clear();
  for (const auto& o : report.outcomes) {
    report.p_by_class[o.classification.label()] += o.probability;
    if (o.classification.kind == BranchKind::FullSuccess) report.p_success += o.probability;
    if (!o.paper_named) report.unnamed_mass += o.probability;
  }
}

}  // namespace detail

/// Concentrates a|e..e> + b|g..g> with one ground-state auxiliary at atom 1.
inline DistillationReport ghz_distill(const GhzInput& in, const ProtocolOptions& options = {}) {
  const InteractionSchedule schedule = schedule_ghz(in);
  if (in.n_atoms > options.max_ghz_atoms) throw DomainError("GHZ atom count exceeds the configured maximum");
  const std::size_t n = in.n_atoms;
  const Layout layout = Layout::atoms(n).with_atom("a1");

  // Auxiliary is the least significant digit and starts in |g>.
  CVector amps = CVector::Zero(static_cast<Eigen::Index>(layout.total_dim()));
  amps[0] = in.b;
  amps[static_cast<Eigen::Index>(((std::size_t{1} << n) - 1) << 1)] = in.a;
  StateVector state = StateVector::from_amplitudes(layout, std::move(amps));

  std::vector<std::size_t> aux_of(n, 0);
  aux_of[0] = n;
  state = detail::run_gates(std::move(state), schedule, aux_of, options);

  auto classify = [](const StateVector& data) -> std::pair<BranchClass, double> {
    const double f = fidelity_up_to_local_phase(data, Target::ghz());
    if (f < kSuccessFidelity) return {BranchClass::failure(), 0.0};
    std::vector<std::size_t> all(data.layout().size());
    std::iota(all.begin(), all.end(), 0);
    return {BranchClass{BranchKind::FullSuccess, all}, f};
  };

  DistillationReport report;
  report.protocol = ProtocolKind::Ghz;
  report.coefficients = {in.a, in.b};
  report.n_atoms = n;
  report.schedule = schedule;
  report.outcomes = detail::enumerate_branches(state, {0}, aux_of, classify, [](const OutcomeRecord&) { return true; });
  detail::summarize(report);
  return report;
}

/// Concentrates a W-class state with N-1 auxiliaries, one at every user
/// except special_j, all prepared in |g> or all in |e>.
inline DistillationReport w_distill(const WInput& in, const ProtocolOptions& options = {}) {
  const InteractionSchedule schedule = schedule_w(in);
  const std::size_t n = in.coeffs.size();
  if (n > options.max_w_atoms) throw DomainError("W atom count exceeds the configured maximum");

  Layout layout = Layout::atoms(n);
  std::vector<std::size_t> aux_users;
  std::vector<std::size_t> aux_of(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == in.special_j) continue;
    aux_of[i] = layout.size();
    aux_users.push_back(i);
    layout = layout.with_atom("a" + std::to_string(i + 1));
  }

  const std::size_t aux_value = in.aux_prep == AuxPreparation::Ground ? kGround : kExcited;
  CVector amps = CVector::Zero(static_cast<Eigen::Index>(layout.total_dim()));
  std::vector<std::size_t> occ(layout.size(), kGround);
  for (auto u : aux_users) occ[aux_of[u]] = aux_value;
  for (std::size_t i = 0; i < n; ++i) {
    occ[i] = kExcited;
    amps[static_cast<Eigen::Index>(layout.encode(occ))] = in.coeffs[i];
    occ[i] = kGround;
  }
  StateVector state = StateVector::from_amplitudes(layout, std::move(amps));
  state = detail::run_gates(std::move(state), schedule, aux_of, options);

  const bool excited = in.aux_prep == AuxPreparation::Excited;
  auto named = [n, excited](const OutcomeRecord& rec) {
    if (!excited || n == 3) return true;
    std::size_t grounds = 0;
    for (const auto& o : rec.aux_pattern) grounds += o.outcome == kGround ? 1 : 0;
    return grounds == 0 || grounds == 1 || grounds == n - 2;
  };

  DistillationReport report;
  report.protocol = excited ? ProtocolKind::WExcited : ProtocolKind::WGround;
  report.coefficients = in.coeffs;
  report.n_atoms = n;
  report.special_j = in.special_j;
  report.schedule = schedule;
  report.outcomes = detail::enumerate_branches(state, aux_users, aux_of, classify_w_branch, named);
  detail::summarize(report);
  return report;
}

}  // namespace cqed
