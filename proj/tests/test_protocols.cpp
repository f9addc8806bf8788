#include "cqed/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "gtest/gtest.h"
#include "oracles.hpp"

using namespace cqed;

namespace {

std::vector<Complex> from_weights(std::initializer_list<double> w) {
  std::vector<Complex> c;
  for (double x : w) c.emplace_back(std::sqrt(x));
  return c;
}

const OutcomeRecord& find_pattern(const DistillationReport& r, const std::string& pattern) {
  for (const auto& o : r.outcomes) {
    if (o.pattern() == pattern) return o;
  }
  throw std::out_of_range("no pattern " + pattern);
}

std::size_t argmin_abs(const std::vector<Complex>& c) {
  return static_cast<std::size_t>(std::min_element(c.begin(), c.end(), [](Complex x, Complex y) { return std::abs(x) < std::abs(y); }) - c.begin());
}

std::size_t argmax_abs(const std::vector<Complex>& c) {
  return static_cast<std::size_t>(std::max_element(c.begin(), c.end(), [](Complex x, Complex y) { return std::abs(x) < std::abs(y); }) - c.begin());
}

}  // namespace

TEST(schedule, ghz_phase) {
  const auto s = schedule_ghz({std::sqrt(0.8), std::sqrt(0.2), 2});
  ASSERT_EQ(s.entries.size(), 1u);
  EXPECT_EQ(s.entries[0].user, 0u);
  EXPECT_NEAR(s.entries[0].lambda_t, std::numbers::pi / 3, 1e-15);

  EXPECT_NEAR(schedule_ghz({1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), 2}).entries[0].lambda_t, 0.0, 1e-7);
  EXPECT_NEAR(schedule_ghz({1.0, 0.0, 3}).entries[0].lambda_t, std::numbers::pi / 2, 1e-15);
}

TEST(schedule, w_phases) {
  const auto ground = schedule_w({from_weights({0.5, 0.3, 0.2}), 2, AuxPreparation::Ground});
  ASSERT_EQ(ground.entries.size(), 2u);
  EXPECT_EQ(ground.entries[0].user, 0u);
  EXPECT_NEAR(ground.entries[0].lambda_t, 0.8860771237926137, 1e-14);
  EXPECT_NEAR(ground.entries[1].lambda_t, 0.6154797086703874, 1e-14);

  const auto excited = schedule_w({from_weights({0.5, 0.3, 0.2}), 0, AuxPreparation::Excited});
  ASSERT_EQ(excited.entries.size(), 2u);
  EXPECT_EQ(excited.entries[0].user, 1u);
  EXPECT_NEAR(excited.entries[0].lambda_t, 0.6847192030022828, 1e-14);
  EXPECT_NEAR(excited.entries[1].lambda_t, 0.8860771237926137, 1e-14);
}

TEST(validate, rejects_bad_inputs) {
  EXPECT_THROW(validate(GhzInput{std::sqrt(0.2), std::sqrt(0.8), 2}), DomainError);
  EXPECT_THROW(validate(GhzInput{0.9, 0.1, 2}), DomainError);
  EXPECT_THROW(validate(GhzInput{1.0, 0.0, 1}), DomainError);
  EXPECT_THROW(validate(GhzInput{NAN, 0.0, 2}), DomainError);
  EXPECT_THROW(validate(WInput{from_weights({0.5, 0.5}), 0, AuxPreparation::Ground}), DomainError);
  EXPECT_THROW(validate(WInput{from_weights({0.5, 0.3, 0.2}), 3, AuxPreparation::Ground}), DomainError);
  EXPECT_THROW(validate(WInput{from_weights({0.5, 0.3, 0.2}), 0, AuxPreparation::Ground}), DomainError);
  EXPECT_THROW(validate(WInput{from_weights({0.5, 0.3, 0.2}), 2, AuxPreparation::Excited}), DomainError);
  EXPECT_THROW(validate(WInput{from_weights({0.5, 0.3, 0.1}), 2, AuxPreparation::Ground}), DomainError);
  EXPECT_NO_THROW(validate(WInput{from_weights({0.5, 0.3, 0.2}), 0, AuxPreparation::Excited}));
}

TEST(schedule, zero_special_coefficient_is_degenerate_for_excited) {
  // ground with c_j = 0 is fine: every auxiliary gets pi/2
  const auto s = schedule_w({from_weights({0.5, 0.5, 0.0}), 2, AuxPreparation::Ground});
  for (const auto& e : s.entries) EXPECT_NEAR(e.lambda_t, std::numbers::pi / 2, 1e-15);
  EXPECT_THROW(detail::interaction_phase(0.0, 0.0), DegenerateInputError);
}

TEST(ghz_distill, worked_example) {
  const auto r = ghz_distill({std::sqrt(0.8), std::sqrt(0.2), 2});
  ASSERT_EQ(r.outcomes.size(), 2u);
  const auto& g = find_pattern(r, "g");
  EXPECT_NEAR(g.probability, 0.4, 1e-15);
  EXPECT_EQ(g.classification.kind, BranchKind::FullSuccess);
  EXPECT_GE(g.fidelity, kSuccessFidelity);
  const auto& e = find_pattern(r, "e");
  EXPECT_NEAR(e.probability, 0.6, 1e-15);
  EXPECT_EQ(e.classification.label(), "FAILURE");
  EXPECT_NEAR(r.p_success, 0.4, 1e-15);
  EXPECT_EQ(r.schedule, schedule_ghz({std::sqrt(0.8), std::sqrt(0.2), 2}));
}

TEST(ghz_distill, already_maximal_and_product_inputs) {
  const auto maximal = ghz_distill({1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), 3});
  EXPECT_NEAR(maximal.p_success, 1.0, 1e-12);
  const auto product = ghz_distill({1.0, 0.0, 3});
  EXPECT_NEAR(product.p_success, 0.0, 1e-15);
  EXPECT_NEAR(product.total_probability(), 1.0, 1e-15);
}

TEST(ghz_distill, many_atoms_and_limits) {
  for (std::size_t n : {2u, 3u, 4u, 6u, 8u}) {
    const auto r = ghz_distill({std::sqrt(0.7), Complex(0, std::sqrt(0.3)), n});
    EXPECT_NEAR(r.p_success, 0.6, 1e-12) << n;
    EXPECT_NEAR(r.total_probability(), 1.0, 1e-12) << n;
  }
  EXPECT_THROW(ghz_distill({std::sqrt(0.7), std::sqrt(0.3), 11}), DomainError);
  ProtocolOptions wide;
  wide.max_ghz_atoms = 11;
  EXPECT_NO_THROW(ghz_distill({std::sqrt(0.7), std::sqrt(0.3), 11}, wide));
}

TEST(w_distill, excited_three_atom_worked_example) {
  const auto r = w_distill({from_weights({0.5, 0.3, 0.2}), 0, AuxPreparation::Excited});
  ASSERT_EQ(r.outcomes.size(), 4u);
  const auto& ee = find_pattern(r, "ee");
  EXPECT_NEAR(ee.probability, 0.36, 1e-15);
  EXPECT_EQ(ee.classification.label(), "FULL_SUCCESS");
  const auto& eg = find_pattern(r, "eg");
  EXPECT_NEAR(eg.probability, 0.36, 1e-15);
  EXPECT_EQ(eg.classification.label(), "PARTIAL_BELL(1,2)");
  EXPECT_GE(eg.fidelity, kSuccessFidelity);
  const auto& ge = find_pattern(r, "ge");
  EXPECT_NEAR(ge.probability, 0.16, 1e-15);
  EXPECT_EQ(ge.classification.label(), "PARTIAL_BELL(1,3)");
  const auto& gg = find_pattern(r, "gg");
  EXPECT_NEAR(gg.probability, 0.12, 1e-15);
  EXPECT_EQ(gg.classification.kind, BranchKind::Failure);
  for (const auto& o : r.outcomes) EXPECT_TRUE(o.paper_named);
  EXPECT_EQ(r.unnamed_mass, 0.0);
}

TEST(w_distill, ground_three_atom_worked_example) {
  const auto r = w_distill({from_weights({0.5, 0.3, 0.2}), 2, AuxPreparation::Ground});
  const auto& gg = find_pattern(r, "gg");
  EXPECT_NEAR(gg.probability, 0.6, 1e-15);
  EXPECT_EQ(gg.classification.kind, BranchKind::FullSuccess);
  EXPECT_GE(gg.fidelity, kSuccessFidelity);
  EXPECT_NEAR(find_pattern(r, "eg").probability, 0.3, 1e-15);
  EXPECT_NEAR(find_pattern(r, "ge").probability, 0.1, 1e-15);
  EXPECT_NEAR(find_pattern(r, "ee").probability, 0.0, 1e-15);
  EXPECT_FALSE(find_pattern(r, "ee").collapsed.has_value());
  EXPECT_EQ(find_pattern(r, "eg").classification.kind, BranchKind::Failure);
  EXPECT_NEAR(r.p_success, 0.6, 1e-15);
}

TEST(w_distill, excited_four_atom_branches) {
  // Reference values from an independent dense enumeration.
  const auto r = w_distill({from_weights({0.4, 0.25, 0.2, 0.15}), 0, AuxPreparation::Excited});
  struct Expect {
    const char* pattern;
    double p;
    const char* label;
    bool named;
  };
  const Expect table[] = {
      {"eee", 0.1875, "FULL_SUCCESS", true},         {"eeg", 0.234375, "PARTIAL_W(1,2,3)", true},
      {"ege", 0.140625, "PARTIAL_W(1,2,4)", true},   {"gee", 0.084375, "PARTIAL_W(1,3,4)", true},
      {"egg", 0.15625, "PARTIAL_BELL(1,2)", true},   {"geg", 0.09375, "PARTIAL_BELL(1,3)", true},
      {"gge", 0.05625, "PARTIAL_BELL(1,4)", true},   {"ggg", 0.046875, "FAILURE", false},
  };
  ASSERT_EQ(r.outcomes.size(), 8u);
  for (const auto& e : table) {
    const auto& o = find_pattern(r, e.pattern);
    EXPECT_NEAR(o.probability, e.p, 1e-14) << e.pattern;
    EXPECT_EQ(o.classification.label(), e.label) << e.pattern;
    EXPECT_EQ(o.paper_named, e.named) << e.pattern;
  }
  EXPECT_NEAR(r.unnamed_mass, 0.046875, 1e-14);
}

TEST(w_distill, uniform_inputs_always_succeed) {
  for (std::size_t n = 3; n <= 6; ++n) {
    std::vector<Complex> c(n, 1.0 / std::sqrt(static_cast<double>(n)));
    EXPECT_NEAR(w_distill({c, 1, AuxPreparation::Ground}).p_success, 1.0, 1e-12) << n;
    EXPECT_NEAR(w_distill({c, 1, AuxPreparation::Excited}).p_success, 1.0, 1e-12) << n;
  }
}

TEST(w_distill, equal_magnitudes_at_b_and_c) {
  // |b| = |c|: the two Bell branches carry equal mass
  const auto r = w_distill({from_weights({0.6, 0.2, 0.2}), 0, AuxPreparation::Excited});
  EXPECT_NEAR(find_pattern(r, "eg").probability, find_pattern(r, "ge").probability, 1e-15);
  EXPECT_NEAR(find_pattern(r, "ee").probability, 3.0 * 0.2 * 0.2 / 0.6, 1e-14);
}

TEST(w_distill, atom_limit) {
  std::vector<Complex> c(9, 1.0 / 3.0);
  EXPECT_THROW(w_distill({c, 0, AuxPreparation::Ground}), DomainError);
}

TEST(branches, complete_on_random_inputs) {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 3 + static_cast<std::size_t>(trial % 4);
    const auto c = oracle::with_random_phases(rng, oracle::random_weights(rng, n));
    for (auto prep : {AuxPreparation::Ground, AuxPreparation::Excited}) {
      const std::size_t j = prep == AuxPreparation::Ground ? argmin_abs(c) : argmax_abs(c);
      const auto r = w_distill({c, j, prep});
      ASSERT_EQ(r.outcomes.size(), std::size_t{1} << (n - 1));
      ASSERT_NEAR(r.total_probability(), 1.0, 1e-12);
      for (const auto& o : r.outcomes) {
        ASSERT_GE(o.probability, 0.0);
        if (o.classification.kind != BranchKind::Failure) {
          ASSERT_GE(o.fidelity, kSuccessFidelity);
        }
      }
    }
    std::uniform_real_distribution<double> b2(0.0, 0.5);
    const double w = b2(rng);
    const auto g = ghz_distill({std::polar(std::sqrt(1 - w), 0.3), std::polar(std::sqrt(w), -1.1), n});
    ASSERT_NEAR(g.total_probability(), 1.0, 1e-12);
  }
}

TEST(branches, gate_order_does_not_matter) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = oracle::with_random_phases(rng, oracle::random_weights(rng, 5));
    const WInput in{c, argmax_abs(c), AuxPreparation::Excited};
    const auto base = w_distill(in);
    ProtocolOptions options;
    options.gate_order = {0, 1, 2, 3};
    std::shuffle(options.gate_order.begin(), options.gate_order.end(), rng);
    const auto permuted = w_distill(in, options);
    for (std::size_t k = 0; k < base.outcomes.size(); ++k) {
      ASSERT_NEAR(base.outcomes[k].probability, permuted.outcomes[k].probability, 1e-14);
      ASSERT_EQ(base.outcomes[k].classification, permuted.outcomes[k].classification);
      if (base.outcomes[k].collapsed) {
        ASSERT_LT((base.outcomes[k].collapsed->amplitudes() - permuted.outcomes[k].collapsed->amplitudes()).norm(), 1e-12);
      }
    }
  }
  ProtocolOptions bad;
  bad.gate_order = {0, 0, 1, 2};
  EXPECT_THROW(w_distill({from_weights({0.4, 0.25, 0.2, 0.15, 0.0}), 0, AuxPreparation::Excited}, bad), DomainError);
}

TEST(classify_w_branch, structural_classes) {
  const Layout layout = Layout::atoms(4);
  const auto w3 = superpose({{1.0, basis_state(layout, {1, 0, 0, 0})},
                             {Complex(0, 1), basis_state(layout, {0, 1, 0, 0})},
                             {-1.0, basis_state(layout, {0, 0, 0, 1})}});
  const auto [cls, f] = classify_w_branch(w3);
  EXPECT_EQ(cls.label(), "PARTIAL_W(1,2,4)");
  EXPECT_NEAR(f, 1.0, 1e-15);

  const auto uneven = superpose({{1.0, basis_state(layout, {1, 0, 0, 0})}, {2.0, basis_state(layout, {0, 1, 0, 0})}});
  EXPECT_EQ(classify_w_branch(uneven).first.kind, BranchKind::Failure);
  EXPECT_EQ(classify_w_branch(basis_state(layout, {0, 0, 1, 0})).first.kind, BranchKind::Failure);

  const auto bell = superpose({{1.0, basis_state(layout, {0, 0, 1, 0})}, {1.0, basis_state(layout, {0, 0, 0, 1})}});
  EXPECT_EQ(classify_w_branch(bell).first.label(), "PARTIAL_BELL(3,4)");
}
