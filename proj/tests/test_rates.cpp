#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "homogamy/rates.hpp"

using namespace homogamy;

namespace {

ModelParams params(double b, double d, double c, double K, double beta1, double beta2) {
  ModelParams p{b, d, c, K, beta1, beta2};
  p.validate();
  return p;
}

ModelParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ModelParams p;
  p.b = 0.1 + 4.0 * u(rng);
  p.d = p.b * u(rng) * 0.99;
  p.c = 0.1 + 3.0 * u(rng);
  p.K = 1.0 + 1e4 * u(rng);
  p.beta1 = 3.0 * u(rng);
  p.beta2 = u(rng);
  p.validate();
  return p;
}

PopState random_state(std::mt19937_64& rng, int max_count = 50) {
  std::uniform_int_distribution<std::int64_t> u(0, max_count);
  return PopState(u(rng), u(rng), u(rng), u(rng));
}

}  // namespace

TEST(ModelParams, ValidationMessagesNameTheConstraint) {
  ModelParams p;
  p.beta2 = 1.5;
  try {
    p.validate();
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("0 ≤ β₂ ≤ 1"), std::string::npos);
  }
  p = ModelParams{};
  p.d = 2.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = ModelParams{};
  p.beta1 = -0.1;
  EXPECT_THROW(p.validate(), ValidationError);
  p = ModelParams{};
  p.c = 0.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = ModelParams{};
  p.K = -1.0;
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(PopState, DerivedCounts) {
  PopState s(1, 2, 3, 4);
  EXPECT_EQ(s.total(), 10);
  EXPECT_EQ(s.P(), 4);
  EXPECT_EQ(s.p(), 6);
  EXPECT_EQ(s.A(), 3);
  EXPECT_EQ(s.a(), 7);
  EXPECT_EQ(s.delta_aP(), 3 * 2 - 1 * 4);
}

TEST(DeathRates, EmptyPopulation) {
  auto r = death_rates(PopState{}, params(1, 0.1, 1, 10, 0.5, 0.5));
  for (double v : r) EXPECT_EQ(v, 0.0);
}

TEST(DeathRates, DirectEvaluation) {
  auto r = death_rates(PopState(1, 2, 1, 1), params(1, 0.1, 1, 10, 0.5, 0.5));
  EXPECT_NEAR(r[0], 0.6, 1e-15);
  EXPECT_NEAR(r[1], 1.2, 1e-15);
  EXPECT_NEAR(r[2], 0.6, 1e-15);
  EXPECT_NEAR(r[3], 0.6, 1e-15);
}

TEST(DeathRates, ResidentEquilibriumBalancesBirth) {
  const auto p = params(1.0, 0.2, 0.5, 1e5, 0.3, 0.4);
  const std::int64_t k = static_cast<std::int64_t>(std::floor((p.b - p.d) * p.K / p.c));
  PopState s(0, k, 0, 0);
  const double death = death_rates(s, p)[1];
  const double birth = birth_rates(s, p)[1];
  EXPECT_NEAR(death, static_cast<double>(k) * (p.d + p.c * k / p.K), 1e-9);
  EXPECT_NEAR(death / birth, 1.0, 1e-4);
}

TEST(BirthRates, EmptyPopulationIsZero) {
  auto r = birth_rates(PopState{}, params(1, 0, 1, 10, 0.5, 0.5));
  for (double v : r) EXPECT_EQ(v, 0.0);
}

TEST(BirthRates, POnlyPopulationIsNeutral) {
  const double b = 1.7;
  auto r = birth_rates(PopState(0, 3, 0, 1), params(b, 0, 1, 10, 0.9, 0.4));
  EXPECT_DOUBLE_EQ(r[0], 0.0);
  EXPECT_DOUBLE_EQ(r[1], 3 * b);
  EXPECT_DOUBLE_EQ(r[2], 0.0);
  EXPECT_DOUBLE_EQ(r[3], b);
}

TEST(BirthRates, PureAPReproducesAtBoostedRate) {
  auto r = birth_rates(PopState(2, 0, 0, 0), params(1, 0, 1, 10, 0.5, 0.3));
  EXPECT_DOUBLE_EQ(r[0], 3.0);
  EXPECT_DOUBLE_EQ(r[1] + r[2] + r[3], 0.0);
}

TEST(BirthRates, MixedStateMatchesHandComputation) {
  // b_AP = 1 + (1/5)(1 - 0.875) + 1/10
  auto r = birth_rates(PopState(1, 2, 1, 1), params(1, 0, 1, 10, 0.5, 0.5));
  EXPECT_NEAR(r[0], 1.125, 1e-15);
}

TEST(BirthRates, MateriallyNegativeRateIsAModelError) {
  // beta2 > 1 is outside the model; the guard must fire rather than clamp silently.
  ModelParams p{1, 0, 1, 10, 0.0, 3.0};
  EXPECT_THROW(birth_rates(PopState(5, 0, 5, 0), p), ModelError);
}

TEST(PairRateAggregate, MatingTableCoversEveryOrderedPairOnce) {
  int seen[4][4] = {};
  for (const auto& rule : kMatingTable) {
    ++seen[index(rule.first)][index(rule.second)];
    double mass = 0.0;
    for (double w : rule.offspring) mass += w;
    EXPECT_DOUBLE_EQ(mass, 1.0);
  }
  for (auto& row : seen)
    for (int v : row) EXPECT_EQ(v, 1);
}

TEST(PairRateAggregate, Examples) {
  auto r = pair_rate_aggregate(PopState(0, 3, 0, 1), params(1.3, 0, 1, 10, 0.9, 0.4));
  EXPECT_DOUBLE_EQ(r[1], 3 * 1.3);
  EXPECT_DOUBLE_EQ(r[3], 1.3);
  EXPECT_DOUBLE_EQ(r[0] + r[2], 0.0);

  auto q = pair_rate_aggregate(PopState(1, 2, 1, 1), params(1, 0, 1, 10, 0.5, 0.5));
  EXPECT_NEAR(q[0], 1.125, 1e-15);
}

TEST(PairRateAggregate, AgreesWithClosedFormOnRandomStates) {
  std::mt19937_64 rng(20240611);
  for (int i = 0; i < 1000; ++i) {
    const auto p = random_params(rng);
    const auto s = random_state(rng);
    const auto closed = birth_rates(s, p);
    const auto table = pair_rate_aggregate(s, p);
    for (std::size_t g = 0; g < 4; ++g) {
      ASSERT_LE(std::abs(table[g] - closed[g]), 1e-12 * (1.0 + closed[g]))
          << "sample " << i << " genotype " << name(static_cast<Genotype>(g));
    }
  }
}

TEST(Rates, NonnegativeAndLabelSymmetric) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 2000; ++i) {
    const auto p = random_params(rng);
    const auto s = random_state(rng, 200);
    const auto r = rates(s, p);
    const auto rs = rates(s.swapped(), p);
    double total = 0.0;
    for (std::size_t g = 0; g < 4; ++g) {
      EXPECT_GE(r.birth[g], 0.0);
      EXPECT_GE(r.death[g], 0.0);
      total += r.birth[g] + r.death[g];
    }
    EXPECT_NEAR(total, r.total, 1e-12 * (1.0 + total));
    const auto sb = swap_alleles(r.birth);
    const auto sd = swap_alleles(r.death);
    for (std::size_t g = 0; g < 4; ++g) {
      EXPECT_NEAR(rs.birth[g], sb[g], 1e-12 * (1.0 + sb[g]));
      EXPECT_DOUBLE_EQ(rs.death[g], sd[g]);
    }
  }
}

TEST(Rates, POnlyStatesHaveExchangeableAlleles) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto p = random_params(rng);
    PopState s = random_state(rng);
    s[Genotype::AP] = s[Genotype::aP] = 0;
    const auto r = birth_rates(s, p);
    EXPECT_DOUBLE_EQ(r[1], p.b * static_cast<double>(s.Ap()));
    EXPECT_DOUBLE_EQ(r[3], p.b * static_cast<double>(s.ap()));
    EXPECT_EQ(r[0], 0.0);
    EXPECT_EQ(r[2], 0.0);
  }
}
