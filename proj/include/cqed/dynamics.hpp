#pragma once

// Two identical atoms dispersively coupled through one cavity mode.
//
// Three levels of description live here:
//   * the closed-form two-atom gate obtained with the cavity in vacuum,
//   * the effective generators it comes from (vacuum form and the general
//     photon-number-dependent form),
//   * the full atom-cavity exchange model in the interaction picture,
//     integrated numerically, used to check the dispersive approximation.

#include <cmath>
#include <cstddef>
#include <numbers>

#include <Eigen/Sparse>

#include "cqed/hilbert.hpp"

namespace cqed {

/// Coupling epsilon and detuning delta (rad/s); lambda = epsilon^2 / delta.
class EffectiveParams {
 public:
  static EffectiveParams make(double epsilon, double delta) {
    if (!(epsilon > 0.0) || !(delta > 0.0) || !std::isfinite(epsilon) || !std::isfinite(delta)) {
      throw DomainError("epsilon and delta must be positive and finite");
    }
    if (delta / epsilon < 1.0) throw DomainError("dispersive regime needs delta/epsilon >= 1");
    return EffectiveParams(epsilon, delta);
  }

  double epsilon() const { return epsilon_; }
  double delta() const { return delta_; }
  double lambda() const { return lambda_; }
  double detuning_ratio() const { return delta_ / epsilon_; }
  /// False below delta/epsilon = 10, where callers should warn.
  bool far_detuned() const { return detuning_ratio() >= 10.0; }

 private:
  EffectiveParams(double epsilon, double delta)
      : epsilon_(epsilon), delta_(delta), lambda_(epsilon * epsilon / delta) {}

  double epsilon_;
  double delta_;
  double lambda_;
};

struct FullModelParams {
  double epsilon = 1.0;
  double delta = 100.0;
  std::size_t fock_cutoff = 3;
  // Integrator controls. The step never exceeds one detuning period divided
  // by steps_per_period (>= 40).
  std::size_t steps_per_period = 128;
  double richardson_tolerance = 1e-8;

  double lambda() const { return epsilon * epsilon / delta; }
  /// Physical interaction time for a dimensionless phase lambda*t.
  double time_for(double lambda_t) const { return lambda_t / lambda(); }
};

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
    }
  }
  return out;
}

/// Single-atom and single-mode operators. The atoms are identical, so one set
/// of 2x2 matrices serves every atom.
struct AtomCavityOperators {
  std::size_t cutoff = 0;
  CMatrix s_plus;     // |e><g|
  CMatrix s_minus;    // |g><e|
  CMatrix s_z;        // (|e><e| - |g><g|) / 2
  CMatrix excited;    // |e><e|
  CMatrix ground;     // |g><g|
  CMatrix a_destroy;  // a|n> = sqrt(n)|n-1>
  CMatrix a_create;   // adjoint of a_destroy; annihilates the top Fock level

  static AtomCavityOperators make(std::size_t cutoff) {
    AtomCavityOperators ops;
    ops.cutoff = cutoff;
    ops.s_plus = CMatrix::Zero(2, 2);
    ops.s_plus(kExcited, kGround) = 1.0;
    ops.s_minus = ops.s_plus.adjoint();
    ops.excited = CMatrix::Zero(2, 2);
    ops.excited(kExcited, kExcited) = 1.0;
    ops.ground = CMatrix::Zero(2, 2);
    ops.ground(kGround, kGround) = 1.0;
    ops.s_z = 0.5 * (ops.excited - ops.ground);
    const auto d = static_cast<Eigen::Index>(cutoff + 1);
    ops.a_destroy = CMatrix::Zero(d, d);
    for (Eigen::Index n = 1; n < d; ++n) ops.a_destroy(n - 1, n) = std::sqrt(static_cast<double>(n));
    ops.a_create = ops.a_destroy.adjoint();
    return ops;
  }

  std::size_t mode_dim() const { return cutoff + 1; }
  CMatrix mode_identity() const { return CMatrix::Identity(static_cast<Eigen::Index>(mode_dim()), static_cast<Eigen::Index>(mode_dim())); }
  static CMatrix atom_identity() { return CMatrix::Identity(2, 2); }

  /// A1 (x) A2 (x) M on atom1, atom2, cavity.
  static CMatrix on_pair_and_mode(const CMatrix& atom1, const CMatrix& atom2, const CMatrix& mode) {
    return kron(kron(atom1, atom2), mode);
  }
};

/// Closed-form two-atom evolution under the vacuum-cavity generator.
/// Basis order gg, ge, eg, ee; the first atom is the most significant digit.
struct TwoAtomGate {
  CMatrix matrix;
  double lambda_t = 0.0;
};

inline TwoAtomGate effective_gate(double lambda_t) {
  if (!std::isfinite(lambda_t)) throw DomainError("lambda_t must be finite");
  constexpr Complex i{0.0, 1.0};
  const Complex phase = std::exp(-i * lambda_t);
  const double c = std::cos(lambda_t);
  const double s = std::sin(lambda_t);

  TwoAtomGate gate;
  gate.lambda_t = lambda_t;
  gate.matrix = CMatrix::Zero(4, 4);
  gate.matrix(0, 0) = 1.0;
  // |ge> -> e^{-i lt}(cos lt |ge> - i sin lt |eg>), and symmetrically for |eg>.
  gate.matrix(1, 1) = phase * c;
  gate.matrix(2, 1) = -i * phase * s;
  gate.matrix(2, 2) = phase * c;
  gate.matrix(1, 2) = -i * phase * s;
  gate.matrix(3, 3) = std::exp(-2.0 * i * lambda_t);
  return gate;
}

/// Effective generator. With `photon_number_form` false: the 4x4 vacuum form
///   lambda [ sum_j |e><e|_j + (s1+ s2- + s1- s2+) ].
/// With it true: the photon-number-dependent form on atom1 (x) atom2 (x) Fock(cutoff)
///   lambda [ sum_j (|e><e|_j a a+ - |g><g|_j a+ a) + (s1+ s2- + s1- s2+) ].
/// a a+ is formed from the truncated matrices, so its top Fock entry is zero.
inline CMatrix effective_hamiltonian(bool photon_number_form, double lambda, std::size_t cutoff = 0) {
  if (!std::isfinite(lambda)) throw DomainError("lambda must be finite");
  const auto ops = AtomCavityOperators::make(photon_number_form ? cutoff : 0);
  const CMatrix id2 = AtomCavityOperators::atom_identity();
  const CMatrix exchange = kron(ops.s_plus, ops.s_minus) + kron(ops.s_minus, ops.s_plus);
  if (!photon_number_form) {
    return lambda * (kron(ops.excited, id2) + kron(id2, ops.excited) + exchange);
  }
  const CMatrix aad = ops.a_destroy * ops.a_create;
  const CMatrix ada = ops.a_create * ops.a_destroy;
  const CMatrix stark = AtomCavityOperators::on_pair_and_mode(ops.excited, id2, aad) -
                        AtomCavityOperators::on_pair_and_mode(ops.ground, id2, ada) +
                        AtomCavityOperators::on_pair_and_mode(id2, ops.excited, aad) -
                        AtomCavityOperators::on_pair_and_mode(id2, ops.ground, ada);
  return lambda * (stark + kron(exchange, ops.mode_identity()));
}

inline Layout pair_with_mode_layout(std::size_t cutoff) { return Layout::atoms(2).with_mode(cutoff); }

struct FullEvolution {
  StateVector final_state;
  double max_photon = 0.0;            // max over steps of <a+a>
  double max_excitation_drift = 0.0;  // max over steps of |<N_exc>(t) - <N_exc>(0)|
  double max_norm_drift = 0.0;        // max over steps of | ||psi|| - 1 |
  double richardson_error = 0.0;      // ||psi_h - psi_{h/2}|| / 15
  std::size_t steps = 0;              // steps of the reported (finer) run
};

namespace detail {

// Highest total excitation (excited atoms + photons) in the support of `state`.
inline std::size_t max_excitation(const StateVector& state) {
  const Layout& layout = state.layout();
  std::size_t best = 0;
  for (std::size_t i = 0; i < layout.total_dim(); ++i) {
    if (std::norm(state.amplitudes()[static_cast<Eigen::Index>(i)]) < kBranchFloor) continue;
    std::size_t n = 0;
    for (std::size_t s = 0; s < layout.size(); ++s) n += layout.digit(i, s);
    best = std::max(best, n);
  }
  return best;
}

struct Rk4Run {
  CVector psi;
  double max_photon = 0.0;
  double max_excitation_drift = 0.0;
  double max_norm_drift = 0.0;
};

// Fixed-step RK4 for d psi / dt = -i (e^{i delta t} A + e^{-i delta t} A+) psi.
inline Rk4Run rk4_interaction_picture(const Eigen::SparseMatrix<Complex>& raise, double delta, const CVector& psi0, double t,
                                      std::size_t steps, const Eigen::VectorXd& photon_diag,
                                      const Eigen::VectorXd& excitation_diag) {
  constexpr Complex i{0.0, 1.0};
  const Eigen::SparseMatrix<Complex> lower = raise.adjoint();
  auto rhs = [&](double tau, const CVector& v) -> CVector {
    const Complex up = std::exp(i * delta * tau);
    return -i * (up * (raise * v) + std::conj(up) * (lower * v));
  };
  auto expect = [](const Eigen::VectorXd& diag, const CVector& v) { return diag.dot(v.cwiseAbs2()); };

  Rk4Run run;
  run.psi = psi0;
  const double n0 = expect(excitation_diag, psi0);
  run.max_photon = expect(photon_diag, psi0);
  const double h = steps == 0 ? 0.0 : t / static_cast<double>(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double tau = static_cast<double>(k) * h;
    const CVector k1 = rhs(tau, run.psi);
    const CVector k2 = rhs(tau + 0.5 * h, run.psi + 0.5 * h * k1);
    const CVector k3 = rhs(tau + 0.5 * h, run.psi + 0.5 * h * k2);
    const CVector k4 = rhs(tau + h, run.psi + h * k3);
    run.psi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    run.max_photon = std::max(run.max_photon, expect(photon_diag, run.psi));
    run.max_excitation_drift = std::max(run.max_excitation_drift, std::abs(expect(excitation_diag, run.psi) - n0));
    run.max_norm_drift = std::max(run.max_norm_drift, std::abs(run.psi.norm() - 1.0));
  }
  return run;
}

}  // namespace detail

/// Integrates the full exchange model
///   H_I(t) = epsilon sum_j (a s_j+ e^{i delta t} + a+ s_j- e^{-i delta t})
/// from `initial` (two atoms + cavity at params.fock_cutoff) for time t, with
/// a Richardson comparison between step h and h/2.
inline FullEvolution integrate_full_model(const FullModelParams& params, const StateVector& initial, double t) {
  if (!(params.epsilon > 0.0) || !(params.delta > 0.0)) throw DomainError("epsilon and delta must be positive");
  if (params.fock_cutoff < 2) throw TruncationError("Fock cutoff must be at least 2");
  if (params.steps_per_period < 40) throw DomainError("steps_per_period must be at least 40");
  if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("evolution time must be finite and non-negative");
  const Layout& layout = initial.layout();
  if (layout.size() != 3 || layout.kind(0) != SubsystemKind::Atom || layout.kind(1) != SubsystemKind::Atom ||
      layout.kind(2) != SubsystemKind::Mode || layout.dim(2) != params.fock_cutoff + 1) {
    throw LayoutError("full model expects two atoms followed by a mode of dimension fock_cutoff + 1");
  }
  const std::size_t excitations = detail::max_excitation(initial);
  if (params.fock_cutoff < excitations + 1) {
    throw TruncationError("Fock cutoff " + std::to_string(params.fock_cutoff) + " too small for " +
                          std::to_string(excitations) + " initial excitations");
  }

  const auto ops = AtomCavityOperators::make(params.fock_cutoff);
  const CMatrix id2 = AtomCavityOperators::atom_identity();
  const CMatrix dense_raise =
      params.epsilon * (AtomCavityOperators::on_pair_and_mode(ops.s_plus, id2, ops.a_destroy) +
                        AtomCavityOperators::on_pair_and_mode(id2, ops.s_plus, ops.a_destroy));
  const Eigen::SparseMatrix<Complex> raise = dense_raise.sparseView();

  const auto dim = static_cast<Eigen::Index>(layout.total_dim());
  Eigen::VectorXd photons(dim), excitation(dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    const auto n = static_cast<double>(layout.digit(idx, 2));
    photons[k] = n;
    excitation[k] = n + static_cast<double>(layout.digit(idx, 0) + layout.digit(idx, 1));
  }

  const double h_max = (2.0 * std::numbers::pi / params.delta) / static_cast<double>(params.steps_per_period);
  const auto coarse_steps = static_cast<std::size_t>(std::ceil(t / h_max));
  const auto coarse = detail::rk4_interaction_picture(raise, params.delta, initial.amplitudes(), t, coarse_steps,
                                                      photons, excitation);
  const auto fine = detail::rk4_interaction_picture(raise, params.delta, initial.amplitudes(), t, 2 * coarse_steps,
                                                    photons, excitation);
  const double richardson = (coarse.psi - fine.psi).norm() / 15.0;
  if (!fine.psi.allFinite() || richardson > params.richardson_tolerance) {
    throw IntegrationError("step-doubling error estimate " + std::to_string(richardson) + " exceeds tolerance");
  }

  return FullEvolution{
      .final_state = StateVector::from_amplitudes(layout, fine.psi),
      .max_photon = fine.max_photon,
      .max_excitation_drift = fine.max_excitation_drift,
      .max_norm_drift = fine.max_norm_drift,
      .richardson_error = richardson,
      .steps = 2 * coarse_steps,
  };
}

inline StateVector full_evolve(const FullModelParams& params, const StateVector& initial, double t) {
  return integrate_full_model(params, initial, t).final_state;
}

struct DispersiveGap {
  double fidelity_gap = 0.0;  // 1 - <psi_eff| rho_atoms |psi_eff>
  double max_photon = 0.0;
  double richardson_error = 0.0;
};

/// Runs the full model from `initial_atoms` (x) |0> for t = lambda_t * delta / epsilon^2
/// and compares the reduced atomic state with the closed-form gate prediction.
inline DispersiveGap dispersive_gap(const FullModelParams& params, double lambda_t, const StateVector& initial_atoms) {
  const Layout& atoms = initial_atoms.layout();
  if (atoms.size() != 2 || atoms.kind(0) != SubsystemKind::Atom || atoms.kind(1) != SubsystemKind::Atom) {
    throw LayoutError("dispersive_gap expects a two-atom state");
  }
  if (!(lambda_t >= 0.0)) throw DomainError("lambda_t must be non-negative");
  const Layout vacuum_layout = Layout({Subsystem{SubsystemKind::Mode, params.fock_cutoff + 1, "cavity"}});
  const StateVector initial = tensor(initial_atoms, basis_state(vacuum_layout, {0}));

  const auto run = integrate_full_model(params, initial, params.time_for(lambda_t));
  const DensityMatrix rho = reduced_density(run.final_state, {0, 1});
  const StateVector predicted = apply_local_unitary(initial_atoms, {0, 1}, effective_gate(lambda_t).matrix);
  return DispersiveGap{
      .fidelity_gap = 1.0 - rho.expectation(predicted.amplitudes()),
      .max_photon = run.max_photon,
      .richardson_error = run.richardson_error,
  };
}

}  // namespace cqed
