// homogamy: command-line front end for the assortative-mating invasion toolkit.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "homogamy/branching.hpp"
#include "homogamy/config.hpp"
#include "homogamy/meanfield.hpp"
#include "homogamy/montecarlo.hpp"
#include "homogamy/rates.hpp"
#include "homogamy/ssa.hpp"

namespace fs = std::filesystem;
using namespace homogamy;

namespace {

struct Outputs {
  fs::path dir;
  std::string stem;  // <subcommand>-<timestamp>
  std::vector<std::string> files;

  fs::path path(const std::string& suffix) {
    const fs::path p = dir / (stem + suffix);
    files.push_back(p.filename().string());
    return p;
  }
};

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t secs = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%S", &tm);
  char out[48];
  std::snprintf(out, sizeof(out), "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

Outputs make_outputs(const RunConfig& c, const std::string& subcommand) {
  Outputs o;
  o.dir = c.out;
  fs::create_directories(o.dir);
  const std::string base = subcommand + "-" + timestamp();
  o.stem = base;
  for (int n = 2; fs::exists(o.dir / (o.stem + ".csv")) || fs::exists(o.dir / (o.stem + ".manifest"));
       ++n) {
    o.stem = base + "-" + std::to_string(n);
  }
  return o;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

void finish(Outputs& o, const ResolvedConfig& r, const std::string& subcommand) {
  const auto manifest = o.dir / (o.stem + ".manifest");
  auto f = open_out(manifest);
  write_manifest(f, r, subcommand, o.files);
  std::cout << "manifest: " << manifest.string() << '\n';
  for (const auto& file : o.files) std::cout << "output: " << (o.dir / file).string() << '\n';
}

void print_value(const char* key, double v) { std::printf("%s=%.12g\n", key, v); }

double single_K(const RunConfig& c, const char* subcommand) {
  if (c.K_schedule.size() != 1) {
    throw ValidationError(std::string(subcommand) + " takes a single K; got " +
                          std::to_string(c.K_schedule.size()) + " values");
  }
  return c.K_schedule.front();
}

// ---------------------------------------------------------------------------

int cmd_check_rates(const ResolvedConfig& r) {
  const RunConfig& c = r.config;
  auto out = make_outputs(c, "check-rates");
  auto f = open_out(out.path(".csv"));
  csv::Writer w(f);
  w.header({"sample", "b", "beta1", "beta2", "K", "n_AP", "n_Ap", "n_aP", "n_ap", "max_rel_diff"});

  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::int64_t> count(0, 2000);
  double worst = 0.0;
  for (std::size_t i = 0; i < c.samples; ++i) {
    ModelParams p;
    p.b = 0.1 + 4.9 * unit(rng);
    p.beta1 = 3.0 * unit(rng);
    p.beta2 = unit(rng);
    p.K = 100.0 + 9900.0 * unit(rng);
    PopState s;
    do {
      s = PopState(count(rng), count(rng), count(rng), count(rng));
      // Thin out genotypes so boundary states (missing types) are covered.
      for (auto& n : s.n) {
        if (unit(rng) < 0.2) n = 0;
      }
    } while (s.total() == 0);
    const auto closed = birth_rates(s, p);
    const auto table = pair_rate_aggregate(s, p);
    double diff = 0.0;
    for (int g = 0; g < 4; ++g) {
      const double scale = std::max({std::abs(closed[g]), std::abs(table[g]), p.b});
      diff = std::max(diff, std::abs(closed[g] - table[g]) / scale);
    }
    worst = std::max(worst, diff);
    w.row(static_cast<std::uint64_t>(i), p.b, p.beta1, p.beta2, p.K, s.AP(), s.Ap(), s.aP(),
          s.ap(), diff);
  }
  f.close();
  std::printf("samples=%zu\n", c.samples);
  print_value("max_discrepancy", worst);
  finish(out, r, "check-rates");
  if (!(worst < 1e-12)) {
    std::fprintf(stderr, "error: birth-rate discrepancy %.3g exceeds 1e-12\n", worst);
    return 2;
  }
  return 0;
}

int cmd_extinction_prob(const ResolvedConfig& r) {
  const RunConfig& c = r.config;
  const auto a = analyze_invasion(ResidentContext::from_rho_A(c.rho_A), c.params);
  auto out = make_outputs(c, "extinction-prob");
  auto f = open_out(out.path(".csv"));
  csv::Writer w(f);
  w.header({"b", "beta1", "beta2", "rho_A", "lambda", "lambda_other", "pi_A", "pi_a", "q_A", "q_a",
            "supercritical", "method"});
  w.row(c.params.b, c.params.beta1, c.params.beta2, c.rho_A, a.spectrum.lambda,
        a.spectrum.lambda_other, a.spectrum.pi[0], a.spectrum.pi[1], a.extinction.q_A,
        a.extinction.q_a, std::string(a.supercritical ? "true" : "false"),
        std::string(name(a.extinction.method)));
  f.close();
  print_value("lambda", a.spectrum.lambda);
  print_value("pi_A", a.spectrum.pi[0]);
  print_value("q_A", a.extinction.q_A);
  print_value("q_a", a.extinction.q_a);
  std::printf("supercritical=%s\n", a.supercritical ? "true" : "false");
  finish(out, r, "extinction-prob");
  return 0;
}

int cmd_meanfield(const ResolvedConfig& r) {
  const RunConfig& c = r.config;
  const MFState z0(c.z0);
  IntegrateOptions opt;
  opt.stop_at_equilibrium = c.stop_at_equilibrium;
  if (c.sample_dt > 0.0) {
    for (double t = c.sample_dt; t < c.t_end; t += c.sample_dt) opt.sample_times.push_back(t);
    opt.sample_times.push_back(c.t_end);
  }
  const auto h = convergence_hypotheses(z0, c.params);
  const auto traj = integrate(z0, c.params, c.t_end, opt);
  auto out = make_outputs(c, "meanfield");
  auto f = open_out(out.path(".csv"));
  write_trajectory_csv(f, traj);
  f.close();

  const auto& z = traj.final_state();
  std::printf("final_state=%.12g,%.12g,%.12g,%.12g\n", z.AP(), z.Ap(), z.aP(), z.ap());
  print_value("t_stop", traj.t_stop);
  std::printf("reached_equilibrium=%s\n", traj.reached_equilibrium ? "true" : "false");
  print_value("distance_to_chi_AP", z.distance_inf(chi_AP(c.params)));
  std::printf("hypotheses=ordering:%s,condition:%s\n", h.ordering ? "true" : "false",
              std::string(name(h.condition)).c_str());
  finish(out, r, "meanfield");
  return 0;
}

int cmd_simulate(const ResolvedConfig& r) {
  const RunConfig& c = r.config;
  single_K(c, "simulate");
  const SimConfig cfg = c.sim_config();
  cfg.validate();
  init_state(cfg);
  auto out = make_outputs(c, "simulate");

  ReplicaOutcome o;
  if (cfg.record_stride > 0) {
    auto tf = open_out(out.path("-trajectory.csv"));
    TrajectoryCsv sink(tf);
    o = run_replica(cfg, std::ref(sink));
  } else {
    o = run_replica(cfg);
  }
  auto f = open_out(out.path(".csv"));
  EnsembleSummary single;
  single.base = cfg;
  KSummary k;
  k.params = cfg.params;
  k.records.push_back({cfg.seed, o});
  single.per_K.push_back(std::move(k));
  write_replicas_csv(f, single);
  f.close();

  std::printf("outcome=%s\n", std::string(name(o.outcome)).c_str());
  print_value("t_absorb", o.t_absorb);
  if (o.t_eps) print_value("t_eps", *o.t_eps);
  std::printf("events=%lld\n", static_cast<long long>(o.events));
  std::printf("final_state=%lld,%lld,%lld,%lld\n", static_cast<long long>(o.final_state.AP()),
              static_cast<long long>(o.final_state.Ap()), static_cast<long long>(o.final_state.aP()),
              static_cast<long long>(o.final_state.ap()));
  finish(out, r, "simulate");
  return 0;
}

int cmd_ensemble(const ResolvedConfig& r) {
  const RunConfig& c = r.config;
  EnsembleSpec spec;
  spec.base = c.sim_config();
  spec.replicas = c.replicas;
  spec.K_schedule = c.K_schedule;
  spec.master_seed = c.seed;
  spec.allow_subcritical = c.allow_subcritical;
  spec.threads = c.threads;
  const auto e = run_ensemble(spec);

  auto out = make_outputs(c, "ensemble");
  {
    auto f = open_out(out.path(".csv"));
    write_replicas_csv(f, e);
  }
  {
    auto f = open_out(out.path("-summary.csv"));
    write_summary_csv(f, e);
  }
  print_value("lambda", e.analysis.spectrum.lambda);
  for (const auto& k : e.per_K) {
    std::printf(
        "K=%g replicas=%zu fixations=%zu extinctions=%zu undecided=%zu invasion=%.6g "
        "[%.6g, %.6g] predicted=%.6g mean_fix_time=%.6g predicted_fix_time=%.6g\n",
        k.params.K, k.replicas, k.fixations, k.extinctions, k.undecided, k.invasion_frequency,
        k.invasion_interval.lo, k.invasion_interval.hi, k.predicted_invasion,
        k.mean_fixation_time, k.predicted_fixation_time);
  }
  if (e.per_K.size() >= 3 && e.analysis.supercritical) {
    try {
      const auto fit = fixation_time_scaling(e);
      std::printf("fitted_slope=%.6g predicted_slope=%.6g growth_slope=%.6g predicted_growth=%.6g\n",
                  fit.total.slope, fit.predicted_slope, fit.growth_phase.slope,
                  fit.predicted_growth_slope);
    } catch (const InsufficientData& err) {
      std::printf("scaling_fit=unavailable (%s)\n", err.what());
    }
  }
  finish(out, r, "ensemble");
  return 0;
}

int cmd_figure1(const ResolvedConfig& r) {
  const RunConfig& c = r.config;
  const auto rows = figure1_sweep(c.params.b, figure1_default_curves(), c.points);
  auto out = make_outputs(c, "figure1");
  auto f = open_out(out.path(".csv"));
  write_figure1_csv(f, rows);
  f.close();
  std::printf("rows=%zu\n", rows.size());
  finish(out, r, "figure1");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invasion of an assortative-mating allele: rates, branching approximation, "
               "mean-field limit and exact simulation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path;
  app.add_option("--config", config_path, "Configuration file (key = value, [section] headers)");

  // Flag name -> config key. Every flag is kept as text and typed by the config layer.
  std::map<std::string, std::optional<std::string>> flag_values;
  const std::vector<std::pair<std::string, std::string>> flags{
      {"--out", "out"},         {"--seed", "seed"},
      {"--replicas", "replicas"}, {"--b", "b"},
      {"--d", "d"},             {"--c", "c"},
      {"--beta1", "beta1"},     {"--beta2", "beta2"},
      {"--rho-a", "rho_a"},     {"--mutant", "mutant"},
      {"--eps", "eps"},         {"--mu", "mu"},
      {"--max-events", "max_events"}, {"--record-stride", "record_stride"},
      {"--threads", "threads"}, {"--preset", "preset"},   {"--z0", "z0"},
      {"--t-end", "t_end"},     {"--sample-dt", "sample_dt"},
      {"--samples", "samples"}, {"--points", "points"}};
  for (const auto& [flag, key] : flags) {
    app.add_option(flag, flag_values[key], "Sets '" + key + "'");
  }
  bool allow_subcritical = false;
  app.add_flag("--allow-subcritical", allow_subcritical, "Run ensembles with a subcritical mutant");
  std::vector<std::string> K_values;
  app.add_option("--K", K_values, "Carrying capacity; repeat for a schedule")->take_all()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

  const std::vector<std::pair<std::string, std::string>> commands{
      {"check-rates", "Compare closed-form birth rates with the mating-table aggregation"},
      {"extinction-prob", "Growth rate and extinction probabilities of the invading allele"},
      {"meanfield", "Integrate the deterministic large-population limit"},
      {"simulate", "Run one exact stochastic replica"},
      {"ensemble", "Run replica ensembles over a K schedule"},
      {"figure1", "Extinction probability as a function of the resident A-fraction"}};
  for (const auto& [cmd, help] : commands) app.add_subcommand(cmd, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    std::map<std::string, std::string> overrides;
    for (const auto& [key, v] : flag_values) {
      if (v) overrides[key] = *v;
    }
    if (allow_subcritical) overrides["allow_subcritical"] = "true";
    if (!K_values.empty()) {
      std::string joined;
      for (const auto& k : K_values) joined += (joined.empty() ? "" : ", ") + k;
      overrides["K"] = joined;
    }
    const auto resolved = resolve_config(config_path, overrides);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "check-rates") return cmd_check_rates(resolved);
    if (cmd == "extinction-prob") return cmd_extinction_prob(resolved);
    if (cmd == "meanfield") return cmd_meanfield(resolved);
    if (cmd == "simulate") return cmd_simulate(resolved);
    if (cmd == "ensemble") return cmd_ensemble(resolved);
    if (cmd == "figure1") return cmd_figure1(resolved);
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
}
