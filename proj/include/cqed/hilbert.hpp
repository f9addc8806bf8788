#pragma once

// Dense state vectors over a tensor product of two-level atoms and at most one
// truncated bosonic mode.
//
// Basis convention: atom |g> = 0, |e> = 1, Fock |n> = n. Global indices are
// row-major over the layout, so the first subsystem is the most significant
// digit. For two atoms the order is gg, ge, eg, ee.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cqed/errors.hpp"

namespace cqed {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

inline constexpr double kNormTolerance = 1e-12;
inline constexpr double kUnitarityTolerance = 1e-10;
/// Branches below this probability are reported without a collapsed state.
inline constexpr double kBranchFloor = 1e-14;
inline constexpr double kPurityTolerance = 1e-10;

inline constexpr std::size_t kGround = 0;
inline constexpr std::size_t kExcited = 1;

enum class SubsystemKind { Atom, Mode };

struct Subsystem {
  SubsystemKind kind = SubsystemKind::Atom;
  std::size_t dim = 2;
  std::string label;

  bool operator==(const Subsystem&) const = default;
};

/// Ordered list of subsystems with their dimensions and role labels.
class Layout {
 public:
  Layout() = default;

  explicit Layout(std::vector<Subsystem> subsystems) : subs_(std::move(subsystems)) {
    std::size_t modes = 0;
    for (std::size_t i = 0; i < subs_.size(); ++i) {
      const auto& s = subs_[i];
      if (s.kind == SubsystemKind::Atom && s.dim != 2) {
        throw LayoutError("atom '" + s.label + "' must have dimension 2");
      }
      if (s.kind == SubsystemKind::Mode) {
        if (s.dim < 1) throw LayoutError("mode '" + s.label + "' must have positive dimension");
        ++modes;
      }
      for (std::size_t k = 0; k < i; ++k) {
        if (subs_[k].label == s.label) throw LayoutError("duplicate subsystem label '" + s.label + "'");
      }
    }
    if (modes > 1) throw LayoutError("at most one bosonic mode is supported");

    strides_.assign(subs_.size(), 1);
    total_ = 1;
    for (std::size_t i = subs_.size(); i-- > 0;) {
      strides_[i] = total_;
      total_ *= subs_[i].dim;
    }
  }

  /// n atoms labelled prefix1 ... prefixN.
  static Layout atoms(std::size_t n, std::string_view prefix = "q") {
    std::vector<Subsystem> subs;
    subs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      subs.push_back({SubsystemKind::Atom, 2, std::string(prefix) + std::to_string(i + 1)});
    }
    return Layout(std::move(subs));
  }

  Layout with_atom(std::string label) const {
    auto subs = subs_;
    subs.push_back({SubsystemKind::Atom, 2, std::move(label)});
    return Layout(std::move(subs));
  }

  Layout with_mode(std::size_t cutoff, std::string label = "cavity") const {
    auto subs = subs_;
    subs.push_back({SubsystemKind::Mode, cutoff + 1, std::move(label)});
    return Layout(std::move(subs));
  }

  /// Concatenation; labels must stay unique.
  Layout operator+(const Layout& other) const {
    auto subs = subs_;
    subs.insert(subs.end(), other.subs_.begin(), other.subs_.end());
    return Layout(std::move(subs));
  }

  Layout subset(std::span<const std::size_t> keep) const {
    std::vector<Subsystem> subs;
    subs.reserve(keep.size());
    for (auto k : keep) subs.push_back(at(k));
    return Layout(std::move(subs));
  }

  std::size_t size() const { return subs_.size(); }
  bool empty() const { return subs_.empty(); }
  std::size_t total_dim() const { return subs_.empty() ? 0 : total_; }
  std::size_t dim(std::size_t i) const { return at(i).dim; }
  std::size_t stride(std::size_t i) const {
    at(i);
    return strides_[i];
  }
  SubsystemKind kind(std::size_t i) const { return at(i).kind; }
  const std::string& label(std::size_t i) const { return at(i).label; }
  const std::vector<Subsystem>& subsystems() const { return subs_; }

  std::optional<std::size_t> find(std::string_view label) const {
    for (std::size_t i = 0; i < subs_.size(); ++i) {
      if (subs_[i].label == label) return i;
    }
    return std::nullopt;
  }

  std::optional<std::size_t> mode_index() const {
    for (std::size_t i = 0; i < subs_.size(); ++i) {
      if (subs_[i].kind == SubsystemKind::Mode) return i;
    }
    return std::nullopt;
  }

  std::vector<std::size_t> atom_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < subs_.size(); ++i) {
      if (subs_[i].kind == SubsystemKind::Atom) out.push_back(i);
    }
    return out;
  }

  std::size_t encode(std::span<const std::size_t> occupation) const {
    if (occupation.size() != subs_.size()) {
      throw DimensionError("occupation has " + std::to_string(occupation.size()) + " entries, layout has " +
                           std::to_string(subs_.size()) + " subsystems");
    }
    std::size_t index = 0;
    for (std::size_t i = 0; i < subs_.size(); ++i) {
      if (occupation[i] >= subs_[i].dim) {
        throw DimensionError("occupation " + std::to_string(occupation[i]) + " out of range for '" +
                             subs_[i].label + "' (dim " + std::to_string(subs_[i].dim) + ")");
      }
      index += occupation[i] * strides_[i];
    }
    return index;
  }

  std::vector<std::size_t> decode(std::size_t index) const {
    if (index >= total_dim()) throw DimensionError("basis index out of range");
    std::vector<std::size_t> occ(subs_.size());
    for (std::size_t i = 0; i < subs_.size(); ++i) occ[i] = digit(index, i);
    return occ;
  }

  std::size_t digit(std::size_t index, std::size_t subsystem) const {
    return (index / strides_[subsystem]) % subs_[subsystem].dim;
  }

  bool operator==(const Layout& other) const { return subs_ == other.subs_; }

 private:
  const Subsystem& at(std::size_t i) const {
    if (i >= subs_.size()) throw LayoutError("subsystem index " + std::to_string(i) + " out of range");
    return subs_[i];
  }

  std::vector<Subsystem> subs_;
  std::vector<std::size_t> strides_;
  std::size_t total_ = 1;
};

/// Normalized pure state on a Layout. Immutable once built.
class StateVector {
 public:
  /// Normalizes `amps`. Throws on size mismatch, non-finite entries or zero norm.
  static StateVector from_amplitudes(Layout layout, CVector amps) {
    if (layout.empty()) throw LayoutError("state needs at least one subsystem");
    if (static_cast<std::size_t>(amps.size()) != layout.total_dim()) {
      throw DimensionError("amplitude vector has length " + std::to_string(amps.size()) + ", layout needs " +
                           std::to_string(layout.total_dim()));
    }
    if (!amps.allFinite()) throw DomainError("amplitudes must be finite");
    const double norm = amps.norm();
    if (!(norm > 0.0)) throw DegenerateInputError("state has zero norm");
    amps /= norm;
    return StateVector(std::move(layout), std::move(amps));
  }

  /// Keeps `amps` bit for bit; they must already have unit norm within kNormTolerance.
  static StateVector from_normalized(Layout layout, CVector amps) {
    const double norm = amps.norm();
    if (!(std::abs(norm - 1.0) <= kNormTolerance)) throw DomainError("amplitudes are not normalized");
    auto state = from_amplitudes(layout, amps);
    state.amps_ = std::move(amps);
    return state;
  }

  const Layout& layout() const { return layout_; }
  const CVector& amplitudes() const { return amps_; }
  std::size_t dim() const { return static_cast<std::size_t>(amps_.size()); }
  Complex amplitude(std::size_t index) const {
    if (index >= dim()) throw DimensionError("basis index out of range");
    return amps_[static_cast<Eigen::Index>(index)];
  }
  Complex amplitude(std::span<const std::size_t> occupation) const {
    return amps_[static_cast<Eigen::Index>(layout_.encode(occupation))];
  }
  double norm() const { return amps_.norm(); }

 private:
  StateVector(Layout layout, CVector amps) : layout_(std::move(layout)), amps_(std::move(amps)) {}

  Layout layout_;
  CVector amps_;
};

inline StateVector basis_state(const Layout& layout, std::span<const std::size_t> occupation) {
  CVector amps = CVector::Zero(static_cast<Eigen::Index>(layout.total_dim()));
  amps[static_cast<Eigen::Index>(layout.encode(occupation))] = 1.0;
  return StateVector::from_amplitudes(layout, std::move(amps));
}

inline StateVector basis_state(const Layout& layout, std::initializer_list<std::size_t> occupation) {
  return basis_state(layout, std::span<const std::size_t>(occupation.begin(), occupation.size()));
}

using Term = std::pair<Complex, StateVector>;

/// Normalized linear combination of states sharing one layout.
inline StateVector superpose(std::span<const Term> terms) {
  if (terms.empty()) throw DegenerateInputError("superposition of no terms");
  const Layout& layout = terms.front().second.layout();
  CVector sum = CVector::Zero(static_cast<Eigen::Index>(layout.total_dim()));
  for (const auto& [coeff, state] : terms) {
    if (!std::isfinite(coeff.real()) || !std::isfinite(coeff.imag())) {
      throw DomainError("superposition coefficient must be finite");
    }
    if (!(state.layout() == layout)) throw LayoutError("superposed states have different layouts");
    sum += coeff * state.amplitudes();
  }
  if (sum.norm() <= kNormTolerance) throw DegenerateInputError("superposition has zero norm");
  return StateVector::from_amplitudes(layout, std::move(sum));
}

inline StateVector superpose(std::initializer_list<Term> terms) {
  return superpose(std::span<const Term>(terms.begin(), terms.size()));
}

/// |a> (x) |b>, layouts concatenated.
inline StateVector tensor(const StateVector& a, const StateVector& b) {
  Layout layout = a.layout() + b.layout();
  CVector amps(static_cast<Eigen::Index>(layout.total_dim()));
  const auto nb = static_cast<Eigen::Index>(b.dim());
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(a.dim()); ++i) {
    amps.segment(i * nb, nb) = a.amplitudes()[i] * b.amplitudes();
  }
  return StateVector::from_amplitudes(std::move(layout), std::move(amps));
}

namespace detail {

inline void check_distinct(const Layout& layout, std::span<const std::size_t> subsystems) {
  for (std::size_t i = 0; i < subsystems.size(); ++i) {
    if (subsystems[i] >= layout.size()) {
      throw LayoutError("subsystem index " + std::to_string(subsystems[i]) + " out of range");
    }
    for (std::size_t k = 0; k < i; ++k) {
      if (subsystems[k] == subsystems[i]) throw LayoutError("repeated subsystem index");
    }
  }
}

inline std::vector<std::size_t> complement(const Layout& layout, std::span<const std::size_t> subsystems) {
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (std::find(subsystems.begin(), subsystems.end(), i) == subsystems.end()) rest.push_back(i);
  }
  return rest;
}

// Index of `global` within the sub-layout formed by `subsystems` (row-major in the given order).
inline std::size_t sub_index(const Layout& layout, std::size_t global, std::span<const std::size_t> subsystems) {
  std::size_t idx = 0;
  for (auto s : subsystems) idx = idx * layout.dim(s) + layout.digit(global, s);
  return idx;
}

}  // namespace detail

/// Applies U to the joint space of `targets` (row-major in the order given), identity elsewhere.
inline StateVector apply_local_unitary(const StateVector& state, std::span<const std::size_t> targets,
                                       const CMatrix& unitary) {
  const Layout& layout = state.layout();
  if (targets.empty()) throw LayoutError("no target subsystems");
  detail::check_distinct(layout, targets);

  std::size_t local_dim = 1;
  for (auto t : targets) local_dim *= layout.dim(t);
  if (unitary.rows() != unitary.cols() || static_cast<std::size_t>(unitary.rows()) != local_dim) {
    throw LayoutError("unitary is " + std::to_string(unitary.rows()) + "x" + std::to_string(unitary.cols()) +
                      ", targets span dimension " + std::to_string(local_dim));
  }
  const CMatrix gram = unitary.adjoint() * unitary;
  const double defect = (gram - CMatrix::Identity(unitary.rows(), unitary.cols())).cwiseAbs().maxCoeff();
  if (!(defect <= kUnitarityTolerance)) {
    throw UnitarityError("matrix deviates from unitarity by " + std::to_string(defect));
  }

  std::vector<std::size_t> offsets(local_dim, 0);
  for (std::size_t l = 0; l < local_dim; ++l) {
    std::size_t rem = l;
    for (std::size_t m = targets.size(); m-- > 0;) {
      const std::size_t d = layout.dim(targets[m]);
      offsets[l] += (rem % d) * layout.stride(targets[m]);
      rem /= d;
    }
  }

  CVector out = state.amplitudes();
  CVector local(static_cast<Eigen::Index>(local_dim));
  for (std::size_t base = 0; base < layout.total_dim(); ++base) {
    bool is_base = true;
    for (auto t : targets) {
      if (layout.digit(base, t) != 0) {
        is_base = false;
        break;
      }
    }
    if (!is_base) continue;
    for (std::size_t l = 0; l < local_dim; ++l) local[static_cast<Eigen::Index>(l)] = out[static_cast<Eigen::Index>(base + offsets[l])];
    const CVector mapped = unitary * local;
    for (std::size_t l = 0; l < local_dim; ++l) out[static_cast<Eigen::Index>(base + offsets[l])] = mapped[static_cast<Eigen::Index>(l)];
  }
  return StateVector::from_amplitudes(layout, std::move(out));
}

inline StateVector apply_local_unitary(const StateVector& state, std::initializer_list<std::size_t> targets,
                                       const CMatrix& unitary) {
  return apply_local_unitary(state, std::span<const std::size_t>(targets.begin(), targets.size()), unitary);
}

struct MeasurementBranch {
  std::size_t outcome = 0;
  double probability = 0.0;
  /// Empty when probability < kBranchFloor.
  std::optional<StateVector> collapsed;
};

/// Projective measurement of one subsystem in its computational basis.
/// One branch per basis value; collapsed states keep the full layout.
inline std::vector<MeasurementBranch> measure_subsystem(const StateVector& state, std::size_t target) {
  const Layout& layout = state.layout();
  const std::size_t d = layout.dim(target);
  std::vector<MeasurementBranch> branches;
  branches.reserve(d);
  for (std::size_t v = 0; v < d; ++v) {
    CVector slice = CVector::Zero(static_cast<Eigen::Index>(state.dim()));
    for (std::size_t i = 0; i < layout.total_dim(); ++i) {
      if (layout.digit(i, target) == v) slice[static_cast<Eigen::Index>(i)] = state.amplitudes()[static_cast<Eigen::Index>(i)];
    }
    MeasurementBranch b;
    b.outcome = v;
    b.probability = slice.squaredNorm();
    if (b.probability >= kBranchFloor) b.collapsed = StateVector::from_amplitudes(layout, std::move(slice));
    branches.push_back(std::move(b));
  }
  return branches;
}

struct Postselection {
  double probability = 0.0;
  /// State of the unmeasured subsystems; empty when probability < kBranchFloor.
  std::optional<StateVector> remainder;
};

/// Projects `measured` onto `outcomes` and drops those subsystems from the result.
inline Postselection postselect(const StateVector& state, std::span<const std::size_t> measured,
                                std::span<const std::size_t> outcomes) {
  const Layout& layout = state.layout();
  detail::check_distinct(layout, measured);
  if (measured.size() != outcomes.size()) throw LayoutError("one outcome per measured subsystem required");
  for (std::size_t k = 0; k < measured.size(); ++k) {
    if (outcomes[k] >= layout.dim(measured[k])) throw DimensionError("outcome out of range");
  }
  const auto rest = detail::complement(layout, measured);
  if (rest.empty()) throw LayoutError("postselection would leave no subsystems");
  Layout rest_layout = layout.subset(rest);

  CVector out = CVector::Zero(static_cast<Eigen::Index>(rest_layout.total_dim()));
  for (std::size_t i = 0; i < layout.total_dim(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < measured.size(); ++k) {
      if (layout.digit(i, measured[k]) != outcomes[k]) {
        match = false;
        break;
      }
    }
    if (match) out[static_cast<Eigen::Index>(detail::sub_index(layout, i, rest))] = state.amplitudes()[static_cast<Eigen::Index>(i)];
  }
  Postselection p;
  p.probability = out.squaredNorm();
  if (p.probability >= kBranchFloor) p.remainder = StateVector::from_amplitudes(std::move(rest_layout), std::move(out));
  return p;
}

class DensityMatrix {
 public:
  explicit DensityMatrix(CMatrix entries) : rho_(std::move(entries)) {
    if (rho_.rows() != rho_.cols() || rho_.rows() == 0) throw DimensionError("density matrix must be square");
  }

  static DensityMatrix pure(const StateVector& psi) {
    return DensityMatrix(psi.amplitudes() * psi.amplitudes().adjoint());
  }

  std::size_t dim() const { return static_cast<std::size_t>(rho_.rows()); }
  const CMatrix& entries() const { return rho_; }
  Complex operator()(std::size_t r, std::size_t c) const {
    return rho_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }

  double trace() const { return rho_.trace().real(); }
  double purity() const { return (rho_ * rho_).trace().real(); }
  double hermiticity_defect() const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff(); }

  /// Ascending.
  Eigen::VectorXd eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(rho_, Eigen::EigenvaluesOnly);
    return solver.eigenvalues();
  }

  /// <psi|rho|psi>
  double expectation(const CVector& psi) const {
    if (static_cast<std::size_t>(psi.size()) != dim()) throw DimensionError("vector does not match density matrix");
    return psi.dot(rho_ * psi).real();
  }

 private:
  CMatrix rho_;
};

/// Partial trace over every subsystem not in `keep`. Kept subsystems are
/// ordered as listed.
inline DensityMatrix reduced_density(const StateVector& state, std::span<const std::size_t> keep) {
  const Layout& layout = state.layout();
  if (keep.empty()) throw LayoutError("reduced_density needs at least one kept subsystem");
  detail::check_distinct(layout, keep);
  const auto rest = detail::complement(layout, keep);
  std::size_t keep_dim = 1;
  for (auto k : keep) keep_dim *= layout.dim(k);
  const std::size_t rest_dim = layout.total_dim() / keep_dim;

  CMatrix m = CMatrix::Zero(static_cast<Eigen::Index>(keep_dim), static_cast<Eigen::Index>(rest_dim));
  for (std::size_t i = 0; i < layout.total_dim(); ++i) {
    m(static_cast<Eigen::Index>(detail::sub_index(layout, i, keep)),
      static_cast<Eigen::Index>(detail::sub_index(layout, i, rest))) = state.amplitudes()[static_cast<Eigen::Index>(i)];
  }
  return DensityMatrix(m * m.adjoint());
}

inline DensityMatrix reduced_density(const StateVector& state, std::initializer_list<std::size_t> keep) {
  return reduced_density(state, std::span<const std::size_t>(keep.begin(), keep.size()));
}

inline double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  if (a.dim() != b.dim()) throw DimensionError("trace distance of mismatched dimensions");
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(a.entries() - b.entries(), Eigen::EigenvaluesOnly);
  return 0.5 * solver.eigenvalues().cwiseAbs().sum();
}

enum class TargetClass { Ghz, W, Bell };

/// Maximally entangled reference state on a set of atoms. An empty atom list
/// means every atom of the state.
struct Target {
  TargetClass cls = TargetClass::Ghz;
  std::vector<std::size_t> atoms;

  static Target ghz(std::vector<std::size_t> atoms = {}) { return {TargetClass::Ghz, std::move(atoms)}; }
  static Target w(std::vector<std::size_t> atoms = {}) { return {TargetClass::W, std::move(atoms)}; }
  static Target bell(std::size_t first, std::size_t second) { return {TargetClass::Bell, {first, second}}; }
};

namespace detail {

inline double ghz_form(const DensityMatrix& rho) {
  const std::size_t top = rho.dim() - 1;
  return 0.5 * (rho(0, 0).real() + rho(top, top).real()) + std::abs(rho(0, top));
}

inline double w_form(const DensityMatrix& rho, std::size_t n_atoms) {
  double sum = 0.0;
  for (std::size_t k = 0; k < n_atoms; ++k) {
    for (std::size_t l = 0; l < n_atoms; ++l) {
      sum += std::abs(rho(std::size_t{1} << (n_atoms - 1 - k), std::size_t{1} << (n_atoms - 1 - l)));
    }
  }
  return sum / static_cast<double>(n_atoms);
}

}  // namespace detail

/// max over independent single-atom phase rotations of |<target|state>|^2.
///
/// Atoms outside the target (and the cavity mode, which must be in vacuum)
/// must factor out of the state. For a pure target-space state this reduces to
///   GHZ:  (|c_g..g| + |c_e..e|)^2 / 2
///   W:    (sum_k |c_k|)^2 / N      over single-excitation amplitudes
///   Bell: max of the GHZ form and the W form on the pair, so both the
///         |ee>+|gg> and |eg>+|ge> families count as Bell states.
inline double fidelity_up_to_local_phase(const StateVector& state, const Target& target) {
  const Layout& layout = state.layout();
  std::vector<std::size_t> atoms = target.atoms.empty() ? layout.atom_indices() : target.atoms;
  detail::check_distinct(layout, atoms);
  for (auto a : atoms) {
    if (layout.kind(a) != SubsystemKind::Atom) throw LayoutError("target subsystem '" + layout.label(a) + "' is not an atom");
  }
  const std::size_t n = atoms.size();
  switch (target.cls) {
    case TargetClass::Ghz:
    case TargetClass::W:
      if (n < 2) throw LayoutError("GHZ and W targets need at least two atoms");
      break;
    case TargetClass::Bell:
      if (n != 2) throw LayoutError("Bell target needs exactly two atoms");
      break;
  }

  if (auto mode = layout.mode_index()) {
    const std::size_t keep[] = {*mode};
    const double vacuum = reduced_density(state, keep)(0, 0).real();
    if (vacuum < 1.0 - kPurityTolerance) throw LayoutError("cavity mode is not in vacuum");
  }
  const auto rest = detail::complement(layout, atoms);
  if (!rest.empty() && reduced_density(state, rest).purity() < 1.0 - kPurityTolerance) {
    throw FactorizationError("subsystems outside the target are entangled with it");
  }

  const DensityMatrix rho = reduced_density(state, atoms);
  double f = 0.0;
  switch (target.cls) {
    case TargetClass::Ghz:
      f = detail::ghz_form(rho);
      break;
    case TargetClass::W:
      f = detail::w_form(rho, n);
      break;
    case TargetClass::Bell:
      f = std::max(detail::ghz_form(rho), detail::w_form(rho, 2));
      break;
  }
  return std::clamp(f, 0.0, 1.0);
}

}  // namespace cqed
