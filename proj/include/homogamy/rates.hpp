#pragma once

#include <array>
#include <cstddef>
#include <sstream>

#include "homogamy/params.hpp"

namespace homogamy {

/// Per-genotype birth and death rates of one population state.
struct RateVector {
  std::array<double, 4> birth{};
  std::array<double, 4> death{};
  double total = 0.0;
};

namespace detail {

// Closed-form birth rates for real-valued abundances x (counts or densities).
// No sign checks: the mean-field Jacobian evaluates this slightly outside the
// nonnegative orthant. Returns zeros when the total vanishes.
template <class Real>
inline std::array<Real, 4> birth_terms(const std::array<Real, 4>& x, const ModelParams& p) {
  const Real xAP = x[0], xAp = x[1], xaP = x[2], xap = x[3];
  const Real total = xAP + xAp + xaP + xap;
  if (total == Real(0)) return {Real(0), Real(0), Real(0), Real(0)};
  const Real inv = Real(1) / total;
  const Real b1 = p.beta1, b2 = p.beta2;
  const Real half_delta = Real(0.5) * (xaP * xAp - xAP * xap) * inv;

  const Real AP = xAP +
                  inv * (b1 * xAP * (xAP + Real(0.5) * xAp) -
                         b2 * (xAP * (xaP + Real(0.25) * xap) + Real(0.25) * xAp * xaP)) +
                  half_delta;
  const Real Ap = xAp + inv * (b1 * Real(0.5) * xAp * xAP -
                               b2 * Real(0.25) * (xAp * xaP + xAP * xap)) -
                  half_delta;
  const Real aP = xaP +
                  inv * (b1 * xaP * (xaP + Real(0.5) * xap) -
                         b2 * (xaP * (xAP + Real(0.25) * xAp) + Real(0.25) * xap * xAP)) -
                  half_delta;
  const Real ap = xap + inv * (b1 * Real(0.5) * xap * xaP -
                               b2 * Real(0.25) * (xap * xAP + xaP * xAp)) +
                  half_delta;
  return {p.b * AP, p.b * Ap, p.b * aP, p.b * ap};
}

inline void check_nonnegative(std::array<double, 4>& rates, double b, double n) {
  const double floor = -1e-9 * b * n;
  for (std::size_t i = 0; i < 4; ++i) {
    if (rates[i] < floor) {
      std::ostringstream os;
      os.precision(17);
      os << "negative birth rate " << rates[i] << " for genotype "
         << name(static_cast<Genotype>(i)) << " (n = " << n << ")";
      throw ModelError(os.str());
    }
    if (rates[i] < 0.0) rates[i] = 0.0;
  }
}

}  // namespace detail

/// d_i(n) = n_i (d + c n / K).
inline std::array<double, 4> death_rates(const PopState& s, const ModelParams& p) {
  const double per_capita = p.d + p.c / p.K * static_cast<double>(s.total());
  const auto x = s.as_reals();
  return {x[0] * per_capita, x[1] * per_capita, x[2] * per_capita, x[3] * per_capita};
}

/// Birth rates of the four genotypes. Throws ModelError if a rate is below
/// -1e-9 b n (impossible for 0 <= beta2 <= 1); tiny negatives are clamped.
inline std::array<double, 4> birth_rates(const PopState& s, const ModelParams& p) {
  auto rates = detail::birth_terms(s.as_reals(), p);
  detail::check_nonnegative(rates, p.b, static_cast<double>(s.total()));
  return rates;
}

inline RateVector rates(const PopState& s, const ModelParams& p) {
  RateVector r;
  r.birth = birth_rates(s, p);
  r.death = death_rates(s, p);
  r.total = 0.0;
  for (double v : r.birth) r.total += v;
  for (double v : r.death) r.total += v;
  return r;
}

// ---------------------------------------------------------------------------
// Mating table: every ordered (first parent, second parent) pair with the
// first parent's preference regime and the Mendelian offspring distribution.
// A P-carrying first parent mates at b(1+beta1) with a same-locus-1 partner and
// at b(1-beta2) otherwise; a p-carrying first parent mates at b.

enum class MatingRegime { Random, Homogamous, Heterogamous };

struct MatingRule {
  Genotype first;
  Genotype second;
  MatingRegime regime;
  std::array<double, 4> offspring;  // indexed by Genotype
};

// clang-format off
inline constexpr std::array<MatingRule, 16> kMatingTable = {{
  {Genotype::Ap, Genotype::Ap, MatingRegime::Random,       {0.0,  1.0,  0.0,  0.0}},
  {Genotype::ap, Genotype::ap, MatingRegime::Random,       {0.0,  0.0,  0.0,  1.0}},
  {Genotype::ap, Genotype::Ap, MatingRegime::Random,       {0.0,  0.5,  0.0,  0.5}},
  {Genotype::Ap, Genotype::ap, MatingRegime::Random,       {0.0,  0.5,  0.0,  0.5}},
  {Genotype::AP, Genotype::AP, MatingRegime::Homogamous,   {1.0,  0.0,  0.0,  0.0}},
  {Genotype::aP, Genotype::aP, MatingRegime::Homogamous,   {0.0,  0.0,  1.0,  0.0}},
  {Genotype::aP, Genotype::AP, MatingRegime::Heterogamous, {0.5,  0.0,  0.5,  0.0}},
  {Genotype::AP, Genotype::aP, MatingRegime::Heterogamous, {0.5,  0.0,  0.5,  0.0}},
  {Genotype::AP, Genotype::Ap, MatingRegime::Homogamous,   {0.5,  0.5,  0.0,  0.0}},
  {Genotype::Ap, Genotype::AP, MatingRegime::Random,       {0.5,  0.5,  0.0,  0.0}},
  {Genotype::aP, Genotype::ap, MatingRegime::Homogamous,   {0.0,  0.0,  0.5,  0.5}},
  {Genotype::ap, Genotype::aP, MatingRegime::Random,       {0.0,  0.0,  0.5,  0.5}},
  {Genotype::AP, Genotype::ap, MatingRegime::Heterogamous, {0.25, 0.25, 0.25, 0.25}},
  {Genotype::ap, Genotype::AP, MatingRegime::Random,       {0.25, 0.25, 0.25, 0.25}},
  {Genotype::aP, Genotype::Ap, MatingRegime::Heterogamous, {0.25, 0.25, 0.25, 0.25}},
  {Genotype::Ap, Genotype::aP, MatingRegime::Random,       {0.25, 0.25, 0.25, 0.25}},
}};
// clang-format on

inline double regime_factor(MatingRegime r, const ModelParams& p) {
  switch (r) {
    case MatingRegime::Random: return 1.0;
    case MatingRegime::Homogamous: return 1.0 + p.beta1;
    case MatingRegime::Heterogamous: return 1.0 - p.beta2;
  }
  return 0.0;
}

/// Birth rates obtained by summing the mating table over all ordered parent
/// pairs (pair rate b * factor * n_i n_j / n, split by offspring distribution).
/// Independent of the closed form used by birth_rates.
inline std::array<double, 4> pair_rate_aggregate(const PopState& s, const ModelParams& p) {
  std::array<double, 4> out{};
  const double n = static_cast<double>(s.total());
  if (n == 0.0) return out;
  for (const auto& rule : kMatingTable) {
    const double pair_rate = p.b * regime_factor(rule.regime, p) *
                             static_cast<double>(s[rule.first]) *
                             static_cast<double>(s[rule.second]) / n;
    for (std::size_t g = 0; g < 4; ++g) out[g] += pair_rate * rule.offspring[g];
  }
  return out;
}

}  // namespace homogamy
