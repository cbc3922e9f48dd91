#pragma once

// Replica ensembles and their reduction to the invasion probability, the
// fixation-time scaling in ln K, and the post-extinction resident state.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "homogamy/branching.hpp"
#include "homogamy/csv.hpp"
#include "homogamy/params.hpp"
#include "homogamy/ssa.hpp"

namespace homogamy {

class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Seeding

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of replica `index` at carrying capacity K. Injective in `index` for a
/// fixed (master, K).
inline std::uint64_t replica_seed(std::uint64_t master, double K, std::uint64_t index) {
  const std::uint64_t stream = splitmix64(splitmix64(master) ^ std::bit_cast<std::uint64_t>(K));
  return splitmix64(stream + index);
}

// ---------------------------------------------------------------------------
// Parallel map

/// Worker count: `requested` if nonzero, else hardware concurrency; capped by
/// the HOMOGAMY_THREADS environment variable when set.
inline unsigned resolve_threads(unsigned requested = 0) {
  unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HOMOGAMY_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return std::max(1u, n);
}

/// Calls f(i) exactly once for every i in [0, n), each on a single worker.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Statistics

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
  double width() const { return hi - lo; }
};

/// Wilson score interval for k successes in n trials (z = 1.96 for 95%).
inline Interval wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double phat = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (phat + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(phat * (1.0 - phat) / nn + z2 / (4.0 * nn * nn)) / denom;
  // The endpoints are exactly 0 at k = 0 and 1 at k = n; rounding must not
  // push the point estimate outside.
  const double lo = k == 0 ? 0.0 : std::clamp(centre - half, 0.0, phat);
  const double hi = k == n ? 1.0 : std::clamp(centre + half, phat, 1.0);
  return {lo, hi};
}

namespace detail {
inline double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Ensembles

struct EnsembleSpec {
  SimConfig base;  // seed and K are overridden per replica
  std::size_t replicas = 1000;
  std::vector<double> K_schedule;  // empty: use base.params.K
  std::uint64_t master_seed = 1;
  bool allow_subcritical = false;
  unsigned threads = 0;
};

struct ReplicaRecord {
  std::uint64_t seed = 0;
  ReplicaOutcome outcome;
};

/// Predicted limit of the extinction branch: residents unchanged.
inline std::array<double, 4> predicted_extinction_point(const ModelParams& p, double rho_A) {
  const double r = p.resident_density();
  return {0.0, rho_A * r, 0.0, (1.0 - rho_A) * r};
}

inline double l1_to_extinction_point(const PopState& s, const ModelParams& p, double rho_A) {
  const auto target = predicted_extinction_point(p, rho_A);
  const auto x = s.as_reals();
  double d = 0.0;
  for (std::size_t i = 0; i < 4; ++i) d += std::abs(x[i] / p.K - target[i]);
  return d;
}

struct KSummary {
  ModelParams params;  // exactly what the replicas ran with
  std::size_t replicas = 0;
  std::size_t fixations = 0;
  std::size_t extinctions = 0;
  std::size_t undecided = 0;
  double invasion_frequency = 0.0;  // fixations / decided replicas
  Interval invasion_interval;
  double mean_fixation_time = std::numeric_limits<double>::quiet_NaN();
  double median_fixation_time = std::numeric_limits<double>::quiet_NaN();
  double mean_extinction_time = std::numeric_limits<double>::quiet_NaN();
  double mean_t_eps_given_fixation = std::numeric_limits<double>::quiet_NaN();
  double mean_sweep_duration = std::numeric_limits<double>::quiet_NaN();     // t_res - t_eps
  double mean_residual_duration = std::numeric_limits<double>::quiet_NaN();  // t_abs - t_res
  double mean_extinction_l1 = std::numeric_limits<double>::quiet_NaN();
  std::size_t reached_eps = 0;
  double mean_A_fraction_at_eps = std::numeric_limits<double>::quiet_NaN();
  std::size_t resident_size_excursions = 0;
  std::size_t resident_composition_excursions = 0;
  // Analytic predictions at this K.
  double predicted_invasion = 0.0;        // 1 - q_alpha
  double predicted_fixation_time = 0.0;   // (1/lambda + 2/(b beta1)) ln K
  double predicted_growth_phase = 0.0;    // ln K / lambda
  double predicted_residual_phase = 0.0;  // 2 ln K / (b beta1)
  std::vector<ReplicaRecord> records;
};

struct EnsembleSummary {
  SimConfig base;
  InvasionAnalysis analysis;
  double predicted_slope = 0.0;  // 1/lambda + 2/(b beta1)
  std::vector<KSummary> per_K;
};

inline double predicted_fixation_slope(const InvasionAnalysis& a, const ModelParams& p) {
  return 1.0 / a.spectrum.lambda + 2.0 / (p.b * p.beta1);
}

/// Aggregates one K's replicas in index order.
inline KSummary summarize(const ModelParams& params, double rho_A, const InvasionAnalysis& a,
                          Allele mutant, std::vector<ReplicaRecord> records) {
  KSummary s;
  s.params = params;
  s.replicas = records.size();
  std::vector<double> fix_times, ext_times, teps_fix, sweep, residual, l1, frac;
  for (const auto& r : records) {
    const auto& o = r.outcome;
    switch (o.outcome) {
      case Outcome::Fixation:
        ++s.fixations;
        fix_times.push_back(o.t_absorb);
        if (o.t_eps) teps_fix.push_back(*o.t_eps);
        if (o.t_eps && o.t_residual_eps) {
          sweep.push_back(*o.t_residual_eps - *o.t_eps);
          residual.push_back(o.t_absorb - *o.t_residual_eps);
        }
        break;
      case Outcome::MutantExtinction:
        ++s.extinctions;
        ext_times.push_back(o.t_absorb);
        l1.push_back(l1_to_extinction_point(o.final_state, params, rho_A));
        break;
      case Outcome::Undecided: ++s.undecided; break;
    }
    if (o.proportion_A_in_P_at_eps) frac.push_back(*o.proportion_A_in_P_at_eps);
    if (o.resident_size_excursion) ++s.resident_size_excursions;
    if (o.resident_composition_excursion) ++s.resident_composition_excursions;
  }
  const std::size_t decided = s.fixations + s.extinctions;
  s.invasion_frequency =
      decided ? static_cast<double>(s.fixations) / static_cast<double>(decided) : 0.0;
  s.invasion_interval = wilson_interval(s.fixations, decided);
  s.mean_fixation_time = detail::mean(fix_times);
  s.median_fixation_time = detail::median(fix_times);
  s.mean_extinction_time = detail::mean(ext_times);
  s.mean_t_eps_given_fixation = detail::mean(teps_fix);
  s.mean_sweep_duration = detail::mean(sweep);
  s.mean_residual_duration = detail::mean(residual);
  s.mean_extinction_l1 = detail::mean(l1);
  s.reached_eps = frac.size();
  s.mean_A_fraction_at_eps = detail::mean(frac);

  const double lnK = std::log(params.K);
  s.predicted_invasion = 1.0 - a.q(mutant);
  if (a.spectrum.lambda > kCriticalLambda && params.beta1 > 0.0) {
    s.predicted_growth_phase = lnK / a.spectrum.lambda;
    s.predicted_residual_phase = 2.0 * lnK / (params.b * params.beta1);
    s.predicted_fixation_time = s.predicted_growth_phase + s.predicted_residual_phase;
  } else {
    s.predicted_growth_phase = s.predicted_residual_phase = s.predicted_fixation_time =
        std::numeric_limits<double>::quiet_NaN();
  }
  s.records = std::move(records);
  return s;
}

/// Runs spec.replicas replicas at every K of the schedule. Refuses critical
/// parameters (|lambda| < 1e-10) and, unless allow_subcritical, subcritical ones.
inline EnsembleSummary run_ensemble(const EnsembleSpec& spec) {
  spec.base.validate();
  if (spec.replicas < 1) throw ValidationError("invalid parameter replicas: requires R ≥ 1");
  std::vector<double> Ks = spec.K_schedule;
  if (Ks.empty()) Ks.push_back(spec.base.params.K);
  for (double K : Ks) {
    if (!(K > 0.0)) throw ValidationError("invalid parameter K: requires K > 0");
  }

  EnsembleSummary out;
  out.base = spec.base;
  const auto ctx = ResidentContext::from_rho_A(spec.base.rho_A);
  out.analysis = analyze_invasion(ctx, spec.base.params);
  const double lambda = out.analysis.spectrum.lambda;
  if (std::abs(lambda) < kCriticalLambda) {
    throw ValidationError("critical parameters (|λ| < 1e-10): ensemble refused");
  }
  if (lambda < 0.0 && !spec.allow_subcritical) {
    throw ValidationError("subcritical parameters (λ < 0): pass allow_subcritical to run");
  }
  out.predicted_slope = lambda > 0.0 && spec.base.params.beta1 > 0.0
                            ? predicted_fixation_slope(out.analysis, spec.base.params)
                            : std::numeric_limits<double>::quiet_NaN();

  const unsigned threads = resolve_threads(spec.threads);
  for (double K : Ks) {
    SimConfig cfg = spec.base;
    cfg.params.K = K;
    cfg.validate();
    init_state(cfg);  // surfaces degenerate-K before spawning work
    std::vector<ReplicaRecord> records(spec.replicas);
    parallel_for(spec.replicas, threads, [&](std::size_t i) {
      SimConfig local = cfg;
      local.seed = replica_seed(spec.master_seed, K, i);
      records[i].seed = local.seed;
      records[i].outcome = run_replica(local);
    });
    out.per_K.push_back(summarize(cfg.params, cfg.rho_A, out.analysis, cfg.mutant, std::move(records)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

struct ScalingFit {
  LinearFit total;          // mean fixation time vs ln K
  LinearFit growth_phase;   // mean t_eps (fixations) vs ln K
  LinearFit residual_phase; // mean t_absorb - t_residual_eps vs ln K
  double predicted_slope = 0.0;
  double predicted_growth_slope = 0.0;    // 1 / lambda
  double predicted_residual_slope = 0.0;  // 2 / (b beta1)
  std::vector<double> lnK;
  std::vector<double> mean_times;
};

/// Least-squares slope of the conditional mean fixation time against ln K,
/// with the growth and residual-extinction phases fitted separately.
inline ScalingFit fixation_time_scaling(const EnsembleSummary& s, std::size_t min_fixations = 200) {
  std::vector<double> Ks;
  for (const auto& k : s.per_K) {
    if (std::find(Ks.begin(), Ks.end(), k.params.K) == Ks.end()) Ks.push_back(k.params.K);
  }
  if (Ks.size() < 3) throw InsufficientData("insufficient-fixations: need ≥ 3 distinct K values");
  if (!(s.analysis.spectrum.lambda > kCriticalLambda)) {
    throw InsufficientData("insufficient-fixations: parameters are not supercritical");
  }
  ScalingFit fit;
  std::vector<double> growth, residual;
  for (const auto& k : s.per_K) {
    if (k.fixations < min_fixations) {
      std::ostringstream os;
      os << "insufficient-fixations: K = " << k.params.K << " has " << k.fixations << " < "
         << min_fixations;
      throw InsufficientData(os.str());
    }
    fit.lnK.push_back(std::log(k.params.K));
    fit.mean_times.push_back(k.mean_fixation_time);
    growth.push_back(k.mean_t_eps_given_fixation);
    residual.push_back(k.mean_residual_duration);
  }
  fit.total = least_squares(fit.lnK, fit.mean_times);
  fit.growth_phase = least_squares(fit.lnK, growth);
  fit.residual_phase = least_squares(fit.lnK, residual);
  const ModelParams& p = s.base.params;
  fit.predicted_slope = predicted_fixation_slope(s.analysis, p);
  fit.predicted_growth_slope = 1.0 / s.analysis.spectrum.lambda;
  fit.predicted_residual_slope = 2.0 / (p.b * p.beta1);
  return fit;
}

struct CompositionReport {
  std::array<double, 4> predicted{};  // (0, rho_A, 0, 1-rho_A)(b-d)/c
  std::vector<double> K;
  std::vector<double> mean_l1;
  bool shrinks = false;  // distance at largest K < distance at smallest K
};

inline CompositionReport extinction_composition_check(const EnsembleSummary& s,
                                                      std::size_t min_extinctions = 200) {
  CompositionReport r;
  r.predicted = predicted_extinction_point(s.base.params, s.base.rho_A);
  for (const auto& k : s.per_K) {
    if (k.extinctions < min_extinctions) {
      std::ostringstream os;
      os << "insufficient-extinctions: K = " << k.params.K << " has " << k.extinctions << " < "
         << min_extinctions;
      throw InsufficientData(os.str());
    }
    r.K.push_back(k.params.K);
    r.mean_l1.push_back(k.mean_extinction_l1);
  }
  if (!r.K.empty()) {
    const auto lo = std::min_element(r.K.begin(), r.K.end()) - r.K.begin();
    const auto hi = std::max_element(r.K.begin(), r.K.end()) - r.K.begin();
    r.shrinks = r.K.size() > 1 && r.mean_l1[hi] < r.mean_l1[lo];
  }
  return r;
}

// ---------------------------------------------------------------------------
// Extinction-probability sweep over rho_A

struct Figure1Row {
  double beta1, beta2, rho_A, q_A, q_a;
};

struct SweepCurve {
  double beta1, beta2;
};

/// Left panel: beta2 = 0.7 with beta1 varying; right panel: beta1 = 0.2 with beta2 varying.
inline std::vector<SweepCurve> figure1_default_curves() {
  std::vector<SweepCurve> c;
  for (double b1 : {0.1, 0.2, 0.3, 0.5, 0.8}) c.push_back({b1, 0.7});
  for (double b2 : {0.1, 0.3, 0.5, 0.9}) c.push_back({0.2, b2});
  return c;
}

/// q_A and q_a on the grid rho_A = k / (points - 1). Grid points are built so
/// that rho_A at k and rho_a at points-1-k are bit-identical.
inline std::vector<Figure1Row> figure1_sweep(double b, const std::vector<SweepCurve>& curves,
                                             std::size_t points = 201) {
  if (curves.empty() || points < 2) throw ValidationError("figure1_sweep: empty grid");
  std::vector<Figure1Row> rows;
  rows.reserve(curves.size() * points);
  const double last = static_cast<double>(points - 1);
  for (const auto& c : curves) {
    ModelParams p;
    p.b = b;
    p.d = 0.0;
    p.beta1 = c.beta1;
    p.beta2 = c.beta2;
    p.validate();
    for (std::size_t k = 0; k < points; ++k) {
      const ResidentContext ctx{static_cast<double>(k) / last,
                                static_cast<double>(points - 1 - k) / last};
      const auto q = extinction_probabilities(branching_rates(ctx, p));
      rows.push_back({c.beta1, c.beta2, ctx.rho_A, q.q_A, q.q_a});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV output

inline void write_replicas_csv(std::ostream& out, const EnsembleSummary& s) {
  csv::Writer w(out);
  w.header({"seed", "K", "outcome", "t_eps", "t_sqrt_eps", "t_absorb", "n_AP", "n_Ap", "n_aP",
            "n_ap", "events"});
  for (const auto& k : s.per_K) {
    for (const auto& r : k.records) {
      const auto& o = r.outcome;
      w.row(r.seed, k.params.K, std::string(name(o.outcome)),
            csv::format_optional(o.t_eps.has_value(), o.t_eps.value_or(0.0)),
            csv::format_optional(o.t_sqrt_eps.has_value(), o.t_sqrt_eps.value_or(0.0)),
            o.t_absorb, o.final_state.AP(), o.final_state.Ap(), o.final_state.aP(),
            o.final_state.ap(), o.events);
    }
  }
}

inline void write_summary_csv(std::ostream& out, const EnsembleSummary& s) {
  csv::Writer w(out);
  w.header({"K", "replicas", "fixations", "extinctions", "undecided", "invasion_freq",
            "wilson_lo", "wilson_hi", "predicted_invasion", "mean_fix_time", "median_fix_time",
            "predicted_fix_time", "mean_t_eps_fix", "predicted_growth_phase",
            "mean_residual_phase", "predicted_residual_phase", "mean_ext_time",
            "mean_extinction_l1", "reached_eps", "mean_A_fraction_at_eps", "pi_A"});
  for (const auto& k : s.per_K) {
    w.row(k.params.K, k.replicas, k.fixations, k.extinctions, k.undecided, k.invasion_frequency,
          k.invasion_interval.lo, k.invasion_interval.hi, k.predicted_invasion,
          k.mean_fixation_time, k.median_fixation_time, k.predicted_fixation_time,
          k.mean_t_eps_given_fixation, k.predicted_growth_phase, k.mean_residual_duration,
          k.predicted_residual_phase, k.mean_extinction_time, k.mean_extinction_l1,
          k.reached_eps, k.mean_A_fraction_at_eps, s.analysis.spectrum.pi[0]);
  }
}

inline void write_figure1_csv(std::ostream& out, const std::vector<Figure1Row>& rows) {
  csv::Writer w(out);
  w.header({"beta1", "beta2", "rho_A", "q_A", "q_a"});
  for (const auto& r : rows) w.row(r.beta1, r.beta2, r.rho_A, r.q_A, r.q_a);
}

}  // namespace homogamy
