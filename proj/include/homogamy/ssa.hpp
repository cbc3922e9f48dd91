#pragma once

// Exact (direct-method) simulation of the four-genotype birth-death process
// started from a resident p-population at equilibrium plus one P mutant.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string_view>

#include "homogamy/csv.hpp"
#include "homogamy/params.hpp"
#include "homogamy/rates.hpp"

namespace homogamy {

// floor(x) robust to products such as 0.29 * 100 landing one ulp below an integer.
inline std::int64_t floor_count(double x) {
  return static_cast<std::int64_t>(std::floor(x + 1e-9 * std::max(1.0, std::abs(x))));
}

struct SimConfig {
  ModelParams params;
  double rho_A = 1.0;
  Allele mutant = Allele::A;
  double eps = 0.05;                       // invasion threshold for N_P = floor(eps K)
  std::optional<double> mu;                // fixation radius; default 0.1 (b(1+beta1)-d)/c
  std::uint64_t seed = 1;
  std::optional<std::int64_t> max_events;  // default 200 K ln K
  std::int64_t record_stride = 0;          // 0: no trajectory log
  double resident_band_factor = 2.0;       // resident-size excursion band, in units of eps

  double resolved_mu() const { return mu ? *mu : 0.1 * params.fixation_density(); }

  std::int64_t resolved_max_events() const {
    if (max_events) return *max_events;
    const double K = params.K;
    return std::max<std::int64_t>(1000, static_cast<std::int64_t>(200.0 * K * std::log(K)));
  }

  void validate() const {
    params.validate();
    if (!(rho_A >= 0.0 && rho_A <= 1.0)) {
      throw ValidationError("invalid parameter rho_a: requires 0 ≤ ρ_A ≤ 1");
    }
    if (!(eps > 0.0)) throw ValidationError("invalid parameter eps: requires eps > 0");
    const double m = resolved_mu();
    if (!(m > 0.0 && m < params.fixation_density())) {
      std::ostringstream os;
      os << "invalid parameter mu = " << m << ": requires 0 < mu < (b(1+β₁)-d)/c = "
         << params.fixation_density();
      throw ValidationError(os.str());
    }
    if (!(resolved_max_events() > 0)) {
      throw ValidationError("invalid parameter max_events: requires max_events > 0");
    }
    if (record_stride < 0) throw ValidationError("invalid parameter record_stride: requires ≥ 0");
  }
};

/// Residents at floor((b-d)K/c), split floor(rho_A n_p) : rest, plus one mutant
/// carrying P and the configured locus-1 allele.
inline PopState init_state(const SimConfig& cfg) {
  const ModelParams& p = cfg.params;
  const std::int64_t n_p = floor_count(p.resident_density() * p.K);
  if (n_p < 10) {
    std::ostringstream os;
    os << "degenerate-K: resident population floor((b-d)K/c) = " << n_p << " < 10";
    throw ValidationError(os.str());
  }
  PopState s;
  s[Genotype::Ap] = floor_count(cfg.rho_A * static_cast<double>(n_p));
  s[Genotype::ap] = n_p - s[Genotype::Ap];
  s[cfg.mutant == Allele::A ? Genotype::AP : Genotype::aP] = 1;
  return s;
}

class Absorbed : public ModelError {
 public:
  Absorbed() : ModelError("absorbed: total event rate is zero") {}
};

struct Event {
  double dt = 0.0;
  Genotype genotype = Genotype::AP;
  bool birth = true;
};

/// One direct-method transition: all eight rates recomputed from the state.
template <class Rng>
inline Event step(PopState& s, const ModelParams& p, Rng& rng) {
  const auto x = s.as_reals();
  const double n = x[0] + x[1] + x[2] + x[3];
  std::array<double, 8> r;
  const auto births = detail::birth_terms(x, p);
  const double per_capita = p.d + p.c / p.K * n;
  double total = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    double bi = births[i];
    if (bi < 0.0) {
      if (bi < -1e-9 * p.b * n) {
        std::array<double, 4> tmp = births;
        detail::check_nonnegative(tmp, p.b, n);
      }
      bi = 0.0;
    }
    r[i] = bi;
    r[4 + i] = x[i] * per_capita;
    total += bi + r[4 + i];
  }
  if (!(total > 0.0)) throw Absorbed();

  Event ev;
  ev.dt = std::exponential_distribution<double>(1.0)(rng) / total;
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  double acc = 0.0;
  std::size_t k = 0;
  for (; k < 7; ++k) {
    acc += r[k];
    if (u < acc) break;
  }
  // Guard against landing on a zero-rate channel through rounding at the top end.
  while (r[k] == 0.0 && k > 0) --k;
  ev.birth = k < 4;
  ev.genotype = static_cast<Genotype>(k % 4);
  s.n[k % 4] += ev.birth ? 1 : -1;
  return ev;
}

enum class Outcome { Fixation, MutantExtinction, Undecided };

constexpr std::string_view name(Outcome o) {
  switch (o) {
    case Outcome::Fixation: return "fixation";
    case Outcome::MutantExtinction: return "mutant-extinction";
    case Outcome::Undecided: return "undecided";
  }
  return "?";
}

struct ReplicaOutcome {
  Outcome outcome = Outcome::Undecided;
  double t_absorb = 0.0;
  std::optional<double> t_eps;       // first N_P = floor(eps K)
  std::optional<double> t_sqrt_eps;  // first N_P = floor(sqrt(eps) K)
  // First time after t_eps with n_Ap + n_ap + n_aP <= floor(eps K): end of the
  // deterministic sweep, start of the residual-extinction phase.
  std::optional<double> t_residual_eps;
  PopState final_state;
  std::optional<double> proportion_A_in_P_at_eps;
  std::int64_t events = 0;
  // Resident excursions before t_eps (or absorption): |n_p/K - (b-d)/c| > band eps,
  // |n_Ap/n_p - rho_A(0)| > eps^(1/6).
  bool resident_size_excursion = false;
  bool resident_composition_excursion = false;
};

using TrajectorySink = std::function<void(double t, const PopState&)>;

/// Runs one replica until mutant extinction, entry into the fixation set, or
/// the event cap. `sink` (if set) receives every record_stride-th state.
inline ReplicaOutcome run_replica(const SimConfig& cfg, const TrajectorySink& sink = {}) {
  cfg.validate();
  const ModelParams& p = cfg.params;
  PopState s = init_state(cfg);
  std::mt19937_64 rng(cfg.seed);

  const std::int64_t eps_n = floor_count(cfg.eps * p.K);
  const std::int64_t sqrt_eps_n = floor_count(std::sqrt(cfg.eps) * p.K);
  const double x_star = p.fixation_density();
  const double mu = cfg.resolved_mu();
  const std::int64_t max_events = cfg.resolved_max_events();
  const double rho0 = static_cast<double>(s.Ap()) / static_cast<double>(s.p());
  const double size_band = cfg.resident_band_factor * cfg.eps;
  const double comp_band = std::pow(cfg.eps, 1.0 / 6.0);
  const double inv_K = 1.0 / p.K;
  const bool logging = cfg.record_stride > 0 && static_cast<bool>(sink);

  ReplicaOutcome out;
  double t = 0.0;
  std::int64_t events = 0;
  if (logging) sink(t, s);

  for (;;) {
    if (s.P() == 0) {
      out.outcome = Outcome::MutantExtinction;
      break;
    }
    if (s.Ap() == 0 && s.ap() == 0 && s.aP() == 0 &&
        std::abs(static_cast<double>(s.AP()) * inv_K - x_star) <= mu) {
      out.outcome = Outcome::Fixation;
      break;
    }
    if (events >= max_events) {
      out.outcome = Outcome::Undecided;
      break;
    }
    t += step(s, p, rng).dt;
    ++events;

    const std::int64_t nP = s.P();
    if (!out.t_eps) {
      if (nP == eps_n) {
        out.t_eps = t;
        out.proportion_A_in_P_at_eps = static_cast<double>(s.AP()) / static_cast<double>(nP);
      } else {
        const std::int64_t np = s.p();
        if (std::abs(static_cast<double>(np) * inv_K - p.resident_density()) > size_band) {
          out.resident_size_excursion = true;
        }
        if (np > 0 &&
            std::abs(static_cast<double>(s.Ap()) / static_cast<double>(np) - rho0) > comp_band) {
          out.resident_composition_excursion = true;
        }
      }
    } else if (!out.t_residual_eps && s.Ap() + s.ap() + s.aP() <= eps_n) {
      out.t_residual_eps = t;
    }
    if (!out.t_sqrt_eps && nP == sqrt_eps_n) out.t_sqrt_eps = t;
    if (logging && events % cfg.record_stride == 0) sink(t, s);
  }
  if (logging && events % cfg.record_stride != 0) sink(t, s);

  out.t_absorb = t;
  out.final_state = s;
  out.events = events;
  return out;
}

/// Trajectory CSV: t, n_AP, n_Ap, n_aP, n_ap.
class TrajectoryCsv {
 public:
  explicit TrajectoryCsv(std::ostream& out) : w_(out) {
    w_.header({"t", "n_AP", "n_Ap", "n_aP", "n_ap"});
  }
  void operator()(double t, const PopState& s) { w_.row(t, s.AP(), s.Ap(), s.aP(), s.ap()); }

 private:
  csv::Writer w_;
};

}  // namespace homogamy
