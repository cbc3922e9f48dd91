#pragma once

// Bi-type linear birth-death process approximating the early mutant
// population: offspring rates, mean matrix, Perron data, extinction
// probabilities, a direct Monte Carlo simulator, and the three-type
// subcritical process governing the final extinction of residual types.
//
// Type index convention: 0 = A, 1 = a. All 2x2 matrices are indexed
// [parent][offspring].

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string_view>

#include <Eigen/Dense>

#include "homogamy/params.hpp"

namespace homogamy {

using Matrix2 = std::array<std::array<double, 2>, 2>;

/// Allelic composition of the p-resident population. Both fractions are kept
/// explicitly so that the A <-> a mirror of a context is exact in floating point.
struct ResidentContext {
  double rho_A = 1.0;
  double rho_a = 0.0;

  static ResidentContext from_rho_A(double rho) {
    ResidentContext ctx{rho, 1.0 - rho};
    ctx.validate();
    return ctx;
  }

  ResidentContext swapped() const { return {rho_a, rho_A}; }

  void validate() const {
    if (!(rho_A >= 0.0 && rho_A <= 1.0) || !(rho_a >= 0.0 && rho_a <= 1.0)) {
      std::ostringstream os;
      os << "invalid parameter rho_a = " << rho_A << ": requires 0 ≤ ρ_A ≤ 1";
      throw ValidationError(os.str());
    }
  }
};

struct BranchingModel {
  Matrix2 beta_bar{};  // birth rates, [parent][offspring]
  double death = 0.0;  // uniform per-capita death rate (= b)
  Matrix2 J{};         // mean matrix: beta_bar - death * I
};

namespace detail {
inline double self_rate(double b, double beta1, double beta2, double rho_self, double rho_other) {
  return 0.5 * b * (1.0 + (beta1 + 1.0) * rho_self - 0.5 * beta2 * rho_other);
}
inline double cross_rate(double b, double beta2, double rho_other) {
  return 0.5 * b * (1.0 - 0.5 * beta2) * rho_other;
}
}  // namespace detail

inline Matrix2 mean_matrix(const BranchingModel& m) {
  return {{{m.beta_bar[0][0] - m.death, m.beta_bar[0][1]},
           {m.beta_bar[1][0], m.beta_bar[1][1] - m.death}}};
}

/// Offspring rates of the approximating branching process for a mutant P
/// individual among residents of composition ctx (death rate b for both types).
inline BranchingModel branching_rates(const ResidentContext& ctx, const ModelParams& p) {
  BranchingModel m;
  m.beta_bar[0][0] = detail::self_rate(p.b, p.beta1, p.beta2, ctx.rho_A, ctx.rho_a);
  m.beta_bar[0][1] = detail::cross_rate(p.b, p.beta2, ctx.rho_a);
  m.beta_bar[1][0] = detail::cross_rate(p.b, p.beta2, ctx.rho_A);
  m.beta_bar[1][1] = detail::self_rate(p.b, p.beta1, p.beta2, ctx.rho_a, ctx.rho_A);
  m.death = p.b;
  m.J = mean_matrix(m);
  return m;
}

struct GrowthSpectrum {
  double lambda = 0.0;        // Perron (largest) eigenvalue of J
  double lambda_other = 0.0;  // the remaining eigenvalue
  std::array<double, 2> pi{};            // left eigenvector, nonnegative, sums to 1
  std::array<double, 2> gamma{};         // right eigenvector, min-normalized (min entry 1)
  std::array<double, 2> gamma_scaled{};  // 2 gamma / (lambda min gamma) when lambda != 0
  bool degenerate = false;               // repeated eigenvalue
};

/// Closed-form spectrum of a 2x2 matrix with nonnegative off-diagonal entries.
inline GrowthSpectrum growth_spectrum(const Matrix2& J) {
  GrowthSpectrum s;
  const double tr = J[0][0] + J[1][1];
  const double gap = J[0][0] - J[1][1];
  const double disc = gap * gap + 4.0 * J[0][1] * J[1][0];
  const double root = std::sqrt(std::max(disc, 0.0));
  s.lambda = 0.5 * (tr + root);
  s.lambda_other = 0.5 * (tr - root);
  const double scale = std::max({std::abs(J[0][0]), std::abs(J[1][1]), std::abs(J[0][1]),
                                 std::abs(J[1][0]), std::numeric_limits<double>::min()});
  s.degenerate = root <= 1e-12 * scale;

  auto pick = [](std::array<double, 2> u, std::array<double, 2> v) {
    for (auto& x : u) x = std::max(x, 0.0);
    for (auto& x : v) x = std::max(x, 0.0);
    return (u[0] + u[1] >= v[0] + v[1]) ? u : v;
  };
  auto dominant_unit = [&J]() -> std::array<double, 2> {
    return J[0][0] >= J[1][1] ? std::array<double, 2>{1.0, 0.0} : std::array<double, 2>{0.0, 1.0};
  };

  // pi (J - lambda I) = 0
  auto pi = pick({J[1][0], s.lambda - J[0][0]}, {s.lambda - J[1][1], J[0][1]});
  if (pi[0] + pi[1] <= 1e-300) pi = dominant_unit();
  const double pi_sum = pi[0] + pi[1];
  s.pi = {pi[0] / pi_sum, pi[1] / pi_sum};

  // (J - lambda I) gamma = 0
  auto gamma = pick({J[0][1], s.lambda - J[0][0]}, {s.lambda - J[1][1], J[1][0]});
  if (gamma[0] + gamma[1] <= 1e-300) gamma = dominant_unit();
  double norm = std::min(gamma[0], gamma[1]);
  if (norm <= 0.0) norm = std::max(gamma[0], gamma[1]);
  s.gamma = {gamma[0] / norm, gamma[1] / norm};
  if (std::abs(s.lambda) > 1e-10) {
    const double f = 2.0 / s.lambda;
    s.gamma_scaled = {f * s.gamma[0], f * s.gamma[1]};
  } else {
    s.gamma_scaled = s.gamma;
  }
  return s;
}

// |lambda| below this is treated as critical.
inline constexpr double kCriticalLambda = 1e-10;

/// Invasion criterion: beta1 > beta2, or rho_A rho_a below
/// beta1 (beta2 + 2) / (2 (beta1 + beta2)(beta1 + 2)). Points on the boundary
/// (to within 1e-12 relative) are critical and reported as not supercritical.
inline bool is_supercritical(const ResidentContext& ctx, const ModelParams& p) {
  if (p.beta1 > p.beta2) return true;
  if (p.beta1 + p.beta2 == 0.0) return false;
  const double threshold =
      p.beta1 * (p.beta2 + 2.0) / (2.0 * (p.beta1 + p.beta2) * (p.beta1 + 2.0));
  return ctx.rho_A * ctx.rho_a < threshold * (1.0 - 1e-12);
}

enum class ExtinctionMethod { NotSupercritical, Newton, FixedPoint };

constexpr std::string_view name(ExtinctionMethod m) {
  switch (m) {
    case ExtinctionMethod::NotSupercritical: return "not-supercritical";
    case ExtinctionMethod::Newton: return "newton";
    case ExtinctionMethod::FixedPoint: return "fixed-point";
  }
  return "?";
}

struct ExtinctionProbs {
  double q_A = 1.0;
  double q_a = 1.0;
  double solver_residual = 0.0;  // max(|u_A|, |u_a|) at the returned point
  double newton_fixed_point_gap = 0.0;
  ExtinctionMethod method = ExtinctionMethod::NotSupercritical;
};

namespace detail {

// u_self(s) of the extinction system and its partial derivatives. Every
// formula is written once and applied with the labels swapped, so the solver
// is exactly label-symmetric.
struct TypeRates {
  double death, self, cross;  // b, beta_bar[i][i], beta_bar[i][other]
};

inline double u_value(const TypeRates& r, double s, double so) {
  return r.death * (1.0 - s) + r.self * (s * s - s) + r.cross * (s * so - s);
}
inline double u_d_self(const TypeRates& r, double s, double so) {
  return -r.death + r.self * (2.0 * s - 1.0) + r.cross * (so - 1.0);
}
inline double u_d_other(const TypeRates& r, double s) { return r.cross * s; }

inline double generating_fn(const TypeRates& r, double s, double so) {
  return (r.death + r.self * s * s + r.cross * s * so) / (r.death + r.self + r.cross);
}

struct SolveResult {
  std::array<double, 2> s{0.0, 0.0};
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
};

inline double residual(const TypeRates& A, const TypeRates& a, const std::array<double, 2>& s) {
  return std::max(std::abs(u_value(A, s[0], s[1])), std::abs(u_value(a, s[1], s[0])));
}

inline SolveResult newton_from_origin(const TypeRates& A, const TypeRates& a, int max_iter = 200) {
  SolveResult out;
  std::array<double, 2> s{0.0, 0.0};
  double res = residual(A, a, s);
  int polish = 0;
  for (int it = 0; it < max_iter; ++it) {
    const double uA = u_value(A, s[0], s[1]);
    const double ua = u_value(a, s[1], s[0]);
    const double a11 = u_d_self(A, s[0], s[1]);
    const double a12 = u_d_other(A, s[0]);
    const double a21 = u_d_other(a, s[1]);
    const double a22 = u_d_self(a, s[1], s[0]);
    const double det = a11 * a22 - a12 * a21;
    if (det == 0.0 || !std::isfinite(det)) break;
    const double dA = (-(uA * a22) + ua * a12) / det;
    const double da = (-(ua * a11) + uA * a21) / det;

    double t = 1.0;
    std::array<double, 2> trial{};
    double trial_res = 0.0;
    for (;;) {
      trial = {std::clamp(s[0] + t * dA, 0.0, 1.0), std::clamp(s[1] + t * da, 0.0, 1.0)};
      trial_res = residual(A, a, trial);
      if (trial_res <= (1.0 - 1e-4 * t) * res || t < 1e-10 || res < 1e-15) break;
      t *= 0.5;
    }
    const double step = std::max(std::abs(trial[0] - s[0]), std::abs(trial[1] - s[1]));
    s = trial;
    res = trial_res;
    if (step < 1e-15 || res < 1e-16) {
      if (++polish >= 2) break;
    }
  }
  out.s = s;
  out.residual = res;
  out.converged = res < 1e-12;
  return out;
}

inline SolveResult fixed_point_from_origin(const TypeRates& A, const TypeRates& a,
                                           long max_iter = 1'000'000) {
  SolveResult out;
  std::array<double, 2> s{0.0, 0.0};
  for (long it = 0; it < max_iter; ++it) {
    const std::array<double, 2> next{generating_fn(A, s[0], s[1]), generating_fn(a, s[1], s[0])};
    const double change = std::max(std::abs(next[0] - s[0]), std::abs(next[1] - s[1]));
    s = next;
    if (change == 0.0) {
      out.converged = true;
      break;
    }
    if (change < 1e-13) {
      // Monotone linear convergence at the Perron rate r of the iteration's
      // Jacobian: remaining error ~ change * r / (1 - r).
      const double nA = A.death + A.self + A.cross, na = a.death + a.self + a.cross;
      const double g11 = (2.0 * A.self * s[0] + A.cross * s[1]) / nA, g12 = A.cross * s[0] / nA;
      const double g21 = a.cross * s[1] / na, g22 = (2.0 * a.self * s[1] + a.cross * s[0]) / na;
      const double half_gap = 0.5 * (g11 - g22);
      const double r = 0.5 * (g11 + g22) + std::sqrt(half_gap * half_gap + g12 * g21);
      if (r < 1.0 && change * r / (1.0 - r) < 1e-13) {
        out.converged = true;
        break;
      }
    }
  }
  out.s = s;
  out.residual = residual(A, a, s);
  return out;
}

}  // namespace detail

/// Extinction probabilities (q_A, q_a) from one A or one a individual: the
/// smallest root in [0,1]^2 of the extinction system, found by damped Newton
/// from the origin and certified by the monotone generating-function iteration.
inline ExtinctionProbs extinction_probabilities(const BranchingModel& m) {
  ExtinctionProbs out;
  const GrowthSpectrum spec = growth_spectrum(m.J);
  if (spec.lambda <= kCriticalLambda) {
    out.method = ExtinctionMethod::NotSupercritical;
    return out;
  }
  const detail::TypeRates A{m.death, m.beta_bar[0][0], m.beta_bar[0][1]};
  const detail::TypeRates a{m.death, m.beta_bar[1][1], m.beta_bar[1][0]};
  const auto newton = detail::newton_from_origin(A, a);
  const auto fp = detail::fixed_point_from_origin(A, a);

  if (newton.converged) {
    const double gap =
        std::max(std::abs(newton.s[0] - fp.s[0]), std::abs(newton.s[1] - fp.s[1]));
    // A non-converged fixed-point iterate is still a lower bound of the minimal root.
    const bool lower_bound_ok = fp.s[0] <= newton.s[0] + 1e-12 && fp.s[1] <= newton.s[1] + 1e-12;
    if (gap > 1e-9 && (fp.converged || !lower_bound_ok)) {
      std::ostringstream os;
      os.precision(17);
      os << "extinction solvers disagree: newton (" << newton.s[0] << ", " << newton.s[1]
         << ") vs fixed point (" << fp.s[0] << ", " << fp.s[1] << ")";
      throw ModelError(os.str());
    }
    out.q_A = newton.s[0];
    out.q_a = newton.s[1];
    out.solver_residual = newton.residual;
    out.newton_fixed_point_gap = gap;
    out.method = ExtinctionMethod::Newton;
    return out;
  }
  if (fp.converged) {
    out.q_A = fp.s[0];
    out.q_a = fp.s[1];
    out.solver_residual = fp.residual;
    out.method = ExtinctionMethod::FixedPoint;
    return out;
  }
  throw ModelError("no-convergence: Newton and fixed-point iteration both failed");
}

/// Closed forms at rho_A = 1 (only A residents).
inline std::array<double, 2> extinction_closed_form_rho1(const ModelParams& p) {
  const double qA = 2.0 / (2.0 + p.beta1);
  const double k = (6.0 - p.beta1 * p.beta2 + 4.0 * p.beta1 - p.beta2) / (2.0 + p.beta1);
  const double qa = (k - std::sqrt(k * k - 4.0 * (2.0 - p.beta2))) / (2.0 - p.beta2);
  return {qA, qa};
}

/// Everything the branching approximation predicts for one resident context.
struct InvasionAnalysis {
  BranchingModel model;
  GrowthSpectrum spectrum;
  ExtinctionProbs extinction;
  bool supercritical = false;

  double q(Allele a) const { return a == Allele::A ? extinction.q_A : extinction.q_a; }
};

inline InvasionAnalysis analyze_invasion(const ResidentContext& ctx, const ModelParams& p) {
  InvasionAnalysis out;
  out.model = branching_rates(ctx, p);
  out.spectrum = growth_spectrum(out.model.J);
  out.extinction = extinction_probabilities(out.model);
  out.supercritical = is_supercritical(ctx, p);
  return out;
}

// ---------------------------------------------------------------------------

enum class BranchingOutcome { Extinct, ReachedCap, Undecided };

struct BranchingRun {
  BranchingOutcome outcome = BranchingOutcome::Undecided;
  std::int64_t n_A = 0;
  std::int64_t n_a = 0;
  double t = 0.0;
  std::int64_t events = 0;
};

struct BranchingSimOptions {
  std::int64_t size_cap = 10'000;
  double t_max = std::numeric_limits<double>::infinity();
  std::int64_t max_events = std::numeric_limits<std::int64_t>::max();
};

/// Exact simulation of the bi-type branching process from one individual of
/// the given type until extinction, total size >= size_cap, or t_max.
inline BranchingRun simulate_branching(const BranchingModel& m, Allele initial,
                                       std::uint64_t seed, const BranchingSimOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);

  BranchingRun run;
  std::int64_t nA = initial == Allele::A ? 1 : 0;
  std::int64_t na = 1 - nA;
  const double bAA = m.beta_bar[0][0], bAa = m.beta_bar[0][1];
  const double baA = m.beta_bar[1][0], baa = m.beta_bar[1][1];
  double t = 0.0;
  for (;;) {
    if (nA + na == 0) {
      run.outcome = BranchingOutcome::Extinct;
      break;
    }
    if (nA + na >= opt.size_cap) {
      run.outcome = BranchingOutcome::ReachedCap;
      break;
    }
    if (run.events >= opt.max_events) break;
    const double xA = static_cast<double>(nA), xa = static_cast<double>(na);
    const double birth_A = bAA * xA + baA * xa;
    const double birth_a = bAa * xA + baa * xa;
    const double death_A = m.death * xA;
    const double death_a = m.death * xa;
    const double total = birth_A + birth_a + death_A + death_a;
    t += expo(rng) / total;
    if (t > opt.t_max) {
      t = opt.t_max;
      break;
    }
    const double u = unif(rng) * total;
    if (u < birth_A) {
      ++nA;
    } else if (u < birth_A + birth_a) {
      ++na;
    } else if (u < birth_A + birth_a + death_A) {
      --nA;
    } else {
      --na;
    }
    ++run.events;
  }
  run.n_A = nA;
  run.n_a = na;
  run.t = t;
  return run;
}

// ---------------------------------------------------------------------------

struct ExtinctionPhase {
  Eigen::Matrix3d matrix;  // types (Ap, ap, aP), [parent][offspring]
  double r = 0.0;          // largest eigenvalue
};

/// Mean matrix of the subcritical three-type process (Ap, ap, aP) that
/// governs the disappearance of the residual types once AP is near fixation.
inline ExtinctionPhase extinction_phase_matrix(const ModelParams& p) {
  const double b = p.b;
  const double death = b * (1.0 + p.beta1);
  const double to_ap = b * (2.0 - p.beta2) / 4.0;
  ExtinctionPhase out;
  out.matrix << b * (2.0 + p.beta1) / 2.0 - death, to_ap, 0.0,  //
      0.0, to_ap - death, 0.0,                                   //
      0.0, to_ap, b * (1.0 - p.beta2) - death;
  Eigen::EigenSolver<Eigen::Matrix3d> solver(out.matrix, false);
  out.r = solver.eigenvalues().real().maxCoeff();
  return out;
}

}  // namespace homogamy
