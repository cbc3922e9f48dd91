#pragma once

// Deterministic large-population limit of the rescaled process N/K:
//   dz_i/dt = b_i(z) - (d + c z) z_i,   i in {AP, Ap, aP, ap},
// with b_i the closed-form birth rates evaluated on densities.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>

#include "homogamy/branching.hpp"
#include "homogamy/csv.hpp"
#include "homogamy/params.hpp"
#include "homogamy/rates.hpp"

namespace homogamy {

struct MFState {
  std::array<double, 4> z{};

  MFState() = default;
  MFState(double AP, double Ap, double aP, double ap) : z{AP, Ap, aP, ap} {}
  explicit MFState(const std::array<double, 4>& v) : z(v) {}

  double AP() const { return z[0]; }
  double Ap() const { return z[1]; }
  double aP() const { return z[2]; }
  double ap() const { return z[3]; }
  double total() const { return z[0] + z[1] + z[2] + z[3]; }
  double A() const { return z[0] + z[1]; }
  double a() const { return z[2] + z[3]; }
  double P() const { return z[0] + z[2]; }
  double p() const { return z[1] + z[3]; }

  MFState swapped() const { return MFState(swap_alleles(z)); }

  double distance_inf(const MFState& o) const {
    double m = 0.0;
    for (std::size_t i = 0; i < 4; ++i) m = std::max(m, std::abs(z[i] - o.z[i]));
    return m;
  }
};

/// Right-hand side of the mean-field system. Vanishes at the origin.
inline std::array<double, 4> vector_field(const MFState& s, const ModelParams& p) {
  const double total = s.total();
  if (total == 0.0) return {0.0, 0.0, 0.0, 0.0};
  auto f = detail::birth_terms(s.z, p);
  const double per_capita = p.d + p.c * total;
  for (std::size_t i = 0; i < 4; ++i) f[i] -= per_capita * s.z[i];
  return f;
}

inline double norm_inf(const std::array<double, 4>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// Diversity at locus 1, z_A z_a / z^2. Undefined at the origin.
inline double diversity_D(const MFState& s) {
  const double total = s.total();
  if (!(total > 0.0)) throw ModelError("diversity_D: total density must be positive");
  return s.A() * s.a() / (total * total);
}

/// (z_AP - z_aP)(z_Ap - z_ap).
inline double pi_product(const MFState& s) { return (s.AP() - s.aP()) * (s.Ap() - s.ap()); }

// ---------------------------------------------------------------------------
// Integration

struct IntegrateOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  // Output times in (0, t_end]. Empty: record every accepted step.
  std::vector<double> sample_times;
  // Stop early once ||field||_inf < equilibrium_tol.
  bool stop_at_equilibrium = false;
  double equilibrium_tol = 1e-10;
};

struct MFTrajectory {
  std::vector<double> t;
  std::vector<MFState> z;
  bool reached_equilibrium = false;
  double t_stop = 0.0;
  std::size_t steps = 0;

  const MFState& final_state() const { return z.back(); }
};

namespace detail {

inline constexpr double kClampBand = 1e-10;

// Clamp values in [-1e-10, 0) to zero; returns false if a component is below the band.
inline bool clamp_state(std::array<double, 4>& x) {
  for (double& v : x) {
    if (v < -kClampBand) return false;
    if (v < 0.0) v = 0.0;
  }
  return true;
}

[[noreturn]] inline void negative_density(double t, const std::array<double, 4>& x) {
  std::ostringstream os;
  os.precision(17);
  os << "mean-field density below -1e-10 at t = " << t << ": (" << x[0] << ", " << x[1] << ", "
     << x[2] << ", " << x[3] << ")";
  throw ModelError(os.str());
}

}  // namespace detail

/// Adaptive Dormand-Prince 5(4) integration from z0 over [0, t_end].
/// Throws ModelError("step-size-underflow ...") if the step falls below
/// 1e-14 t_end, or on a genuine negative density.
inline MFTrajectory integrate(const MFState& z0, const ModelParams& p, double t_end,
                              const IntegrateOptions& opt = {}) {
  namespace odeint = boost::numeric::odeint;
  using State = std::array<double, 4>;
  if (!(t_end > 0.0)) throw ValidationError("integrate: requires t_end > 0");
  for (double v : z0.z) {
    if (!(v >= 0.0)) throw ValidationError("integrate: initial densities must be ≥ 0");
  }

  auto system = [&p](const State& x, State& dxdt, double /*t*/) {
    dxdt = vector_field(MFState(x), p);
  };

  MFTrajectory traj;
  traj.t.push_back(0.0);
  traj.z.push_back(z0);

  const bool record_steps = opt.sample_times.empty();
  std::size_t next_sample = 0;
  const double min_step = 1e-14 * t_end;

  // Step capped well inside the explicit stability region of the fastest
  // linear rate, so trajectories settle onto stable equilibria instead of
  // hovering at the tolerance level.
  const double fastest = p.b * (2.0 + p.beta1) + p.d;
  const double max_dt = std::min(t_end, 1.0 / fastest);
  auto stepper =
      odeint::make_dense_output(opt.atol, opt.rtol, max_dt, odeint::runge_kutta_dopri5<State>());
  State x = z0.z;
  double dt0 = std::min(1e-3, 1e-3 * t_end);
  stepper.initialize(x, 0.0, dt0);

  auto at_equilibrium = [&](const State& s) {
    return opt.stop_at_equilibrium && norm_inf(vector_field(MFState(s), p)) < opt.equilibrium_tol;
  };

  if (at_equilibrium(x)) {
    traj.reached_equilibrium = true;
    traj.t_stop = 0.0;
    return traj;
  }

  while (stepper.current_time() < t_end) {
    std::pair<double, double> span;
    try {
      span = stepper.do_step(system);
    } catch (const odeint::step_adjustment_error& e) {
      throw ModelError(std::string("step-size-underflow: ") + e.what());
    }
    ++traj.steps;
    const double t1 = span.second;
    if (stepper.current_time_step() < min_step && t1 < t_end) {
      std::ostringstream os;
      os << "step-size-underflow at t = " << t1;
      throw ModelError(os.str());
    }

    // Samples inside the accepted step come from the dense interpolant.
    if (!record_steps) {
      while (next_sample < opt.sample_times.size() && opt.sample_times[next_sample] <= t1 &&
             opt.sample_times[next_sample] <= t_end) {
        State xs;
        stepper.calc_state(opt.sample_times[next_sample], xs);
        if (!detail::clamp_state(xs)) detail::negative_density(opt.sample_times[next_sample], xs);
        traj.t.push_back(opt.sample_times[next_sample]);
        traj.z.emplace_back(xs);
        ++next_sample;
      }
    }

    State xe = stepper.current_state();
    if (!detail::clamp_state(xe)) detail::negative_density(t1, xe);
    if (xe != stepper.current_state()) {
      stepper.initialize(xe, t1, stepper.current_time_step());
    }

    if (t1 >= t_end) {
      if (record_steps) {
        State xs;
        stepper.calc_state(t_end, xs);
        detail::clamp_state(xs);
        traj.t.push_back(t_end);
        traj.z.emplace_back(xs);
      }
      traj.t_stop = t_end;
      break;
    }
    if (record_steps) {
      traj.t.push_back(t1);
      traj.z.emplace_back(xe);
    }
    if (at_equilibrium(xe)) {
      if (!record_steps && (traj.t.back() != t1)) {
        traj.t.push_back(t1);
        traj.z.emplace_back(xe);
      }
      traj.reached_equilibrium = true;
      traj.t_stop = t1;
      break;
    }
  }
  return traj;
}

/// CSV with columns t, z_AP, z_Ap, z_aP, z_ap, D, Pi.
inline void write_trajectory_csv(std::ostream& out, const MFTrajectory& traj) {
  csv::Writer w(out);
  w.header({"t", "z_AP", "z_Ap", "z_aP", "z_ap", "D", "Pi"});
  for (std::size_t i = 0; i < traj.t.size(); ++i) {
    const auto& s = traj.z[i];
    const double D = s.total() > 0.0 ? diversity_D(s) : std::numeric_limits<double>::quiet_NaN();
    w.row(traj.t[i], s.AP(), s.Ap(), s.aP(), s.ap(), D, pi_product(s));
  }
}

// ---------------------------------------------------------------------------
// Linearisation

/// Central-difference Jacobian, step max(1e-6, 1e-6 ||z||_inf) per coordinate.
inline Eigen::Matrix4d jacobian(const MFState& s, const ModelParams& p) {
  if (s.total() == 0.0) throw ModelError("origin-jacobian: field is not differentiable at z = 0");
  double zmax = 0.0;
  for (double v : s.z) zmax = std::max(zmax, std::abs(v));
  const double h = std::max(1e-6, 1e-6 * zmax);
  Eigen::Matrix4d Jm;
  for (int j = 0; j < 4; ++j) {
    MFState plus = s, minus = s;
    plus.z[j] += h;
    minus.z[j] -= h;
    const auto fp = vector_field(plus, p);
    const auto fm = vector_field(minus, p);
    for (int i = 0; i < 4; ++i) Jm(i, j) = (fp[i] - fm[i]) / (2.0 * h);
  }
  return Jm;
}

/// Eigenvalues sorted by real part, descending.
template <int N>
std::vector<std::complex<double>> eigenvalues(const Eigen::Matrix<double, N, N>& m) {
  Eigen::EigenSolver<Eigen::Matrix<double, N, N>> solver(m, false);
  std::vector<std::complex<double>> out;
  for (int i = 0; i < N; ++i) out.push_back(solver.eigenvalues()[i]);
  std::sort(out.begin(), out.end(),
            [](const auto& x, const auto& y) { return x.real() > y.real(); });
  return out;
}

// ---------------------------------------------------------------------------
// Equilibria

enum class EquilibriumFamily { Origin, PLine, ChiAP, ChiaP, SymmetricP };
enum class Stability { Stable, Unstable, NonHyperbolic };

constexpr std::string_view name(EquilibriumFamily f) {
  switch (f) {
    case EquilibriumFamily::Origin: return "origin";
    case EquilibriumFamily::PLine: return "p-line";
    case EquilibriumFamily::ChiAP: return "chi_AP";
    case EquilibriumFamily::ChiaP: return "chi_aP";
    case EquilibriumFamily::SymmetricP: return "symmetric-P";
  }
  return "?";
}

constexpr std::string_view name(Stability s) {
  switch (s) {
    case Stability::Stable: return "stable";
    case Stability::Unstable: return "unstable";
    case Stability::NonHyperbolic: return "non-hyperbolic";
  }
  return "?";
}

struct EquilibriumRecord {
  MFState point;
  EquilibriumFamily family = EquilibriumFamily::Origin;
  double rho = std::numeric_limits<double>::quiet_NaN();  // p-line only
  Stability stability = Stability::Unstable;
  std::vector<double> eigenvalues;  // closed form, descending; empty for the origin
};

inline MFState chi_AP(const ModelParams& p) { return {p.fixation_density(), 0.0, 0.0, 0.0}; }
inline MFState chi_aP(const ModelParams& p) { return {0.0, 0.0, p.fixation_density(), 0.0}; }

inline MFState p_line_point(const ModelParams& p, double rho) {
  const double r = p.resident_density();
  return {0.0, rho * r, 0.0, (1.0 - rho) * r};
}

inline std::vector<double> chi_eigenvalues(const ModelParams& p) {
  const double b = p.b, b1 = p.beta1, b2 = p.beta2;
  std::vector<double> ev{-b * b1 / 2.0, -b * (b1 + b2), -(b / 4.0) * (2.0 + 4.0 * b1 + b2),
                         -b * (1.0 + b1) + p.d};
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

inline std::vector<double> symmetric_eigenvalues(const ModelParams& p) {
  const double b = p.b, b1 = p.beta1, b2 = p.beta2;
  std::vector<double> ev{(b / 2.0) * (b1 + b2), (b / 4.0) * (b2 - b1),
                         -(b / 4.0) * (2.0 + b1 - 2.0 * b2), -(b / 2.0) * (2.0 + b1 - b2) + p.d};
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

inline Stability classify(const std::vector<double>& eigenvalues, double tol = 1e-12) {
  const double top = *std::max_element(eigenvalues.begin(), eigenvalues.end());
  if (top > tol) return Stability::Unstable;
  if (top < -tol) return Stability::Stable;
  return Stability::NonHyperbolic;
}

/// Catalogue of equilibria with at least one null coordinate. p-line points
/// are produced for each requested rho.
inline std::vector<EquilibriumRecord> equilibria(const ModelParams& p,
                                                 std::span<const double> p_line_rhos = {}) {
  p.validate();
  std::vector<EquilibriumRecord> out;
  out.push_back({MFState{}, EquilibriumFamily::Origin, std::numeric_limits<double>::quiet_NaN(),
                 Stability::Unstable, {}});

  for (double rho : p_line_rhos) {
    const auto ctx = ResidentContext::from_rho_A(rho);
    const auto spec = growth_spectrum(branching_rates(ctx, p).J);
    std::vector<double> ev{spec.lambda, spec.lambda_other, 0.0, -(p.b - p.d)};
    std::sort(ev.rbegin(), ev.rend());
    out.push_back({p_line_point(p, rho), EquilibriumFamily::PLine, rho,
                   spec.lambda > kCriticalLambda ? Stability::Unstable : Stability::NonHyperbolic,
                   ev});
  }

  out.push_back({chi_AP(p), EquilibriumFamily::ChiAP, std::numeric_limits<double>::quiet_NaN(),
                 classify(chi_eigenvalues(p)), chi_eigenvalues(p)});
  out.push_back({chi_aP(p), EquilibriumFamily::ChiaP, std::numeric_limits<double>::quiet_NaN(),
                 classify(chi_eigenvalues(p)), chi_eigenvalues(p)});

  const double growth = p.b * (1.0 + (p.beta1 - p.beta2) / 2.0) - p.d;
  if (growth > 0.0) {
    const double x = growth / (2.0 * p.c);
    out.push_back({MFState{x, 0.0, x, 0.0}, EquilibriumFamily::SymmetricP,
                   std::numeric_limits<double>::quiet_NaN(),
                   classify(symmetric_eigenvalues(p)), symmetric_eigenvalues(p)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hypotheses of the convergence result towards chi_AP

enum class ConvergenceCondition { BetaDominance, LowDiversity, Neither };

constexpr std::string_view name(ConvergenceCondition c) {
  switch (c) {
    case ConvergenceCondition::BetaDominance: return "beta1>beta2";
    case ConvergenceCondition::LowDiversity: return "low-diversity";
    case ConvergenceCondition::Neither: return "neither";
  }
  return "?";
}

struct ConvergenceHypotheses {
  bool ordering = false;  // z_Ap(0) > z_ap(0) and z_AP(0) > z_aP(0)
  ConvergenceCondition condition = ConvergenceCondition::Neither;

  bool admissible() const { return ordering && condition != ConvergenceCondition::Neither; }
};

/// Checks the initial-condition hypotheses as stated: the diversity threshold
/// uses D(0) = z_A(0) z_a(0) / z(0)^2.
inline ConvergenceHypotheses convergence_hypotheses(const MFState& z0, const ModelParams& p) {
  ConvergenceHypotheses h;
  h.ordering = z0.Ap() > z0.ap() && z0.AP() > z0.aP();
  if (p.beta1 > p.beta2) {
    h.condition = ConvergenceCondition::BetaDominance;
  } else if (p.beta1 + p.beta2 > 0.0 && z0.total() > 0.0) {
    const double threshold =
        p.beta1 * (p.beta2 + 2.0) / (2.0 * (p.beta1 + p.beta2) * (p.beta1 + 2.0));
    if (diversity_D(z0) < threshold) h.condition = ConvergenceCondition::LowDiversity;
  }
  return h;
}

}  // namespace homogamy
