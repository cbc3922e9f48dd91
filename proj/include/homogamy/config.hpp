#pragma once

// Run configuration for the command-line tool: `key = value` files with `#`
// comments and `[section]` headers, command-line overrides, and a manifest
// that records every resolved value together with where it came from.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "homogamy/branching.hpp"
#include "homogamy/csv.hpp"
#include "homogamy/params.hpp"
#include "homogamy/ssa.hpp"

namespace homogamy {

struct RunConfig {
  ModelParams params;
  std::vector<double> K_schedule{1000.0};
  double rho_A = 1.0;
  Allele mutant = Allele::A;
  double eps = 0.05;
  std::optional<double> mu;
  std::uint64_t seed = 1;
  std::optional<std::int64_t> max_events;
  std::int64_t record_stride = 0;

  std::size_t replicas = 1000;
  bool allow_subcritical = false;
  unsigned threads = 0;

  std::string preset = "none";
  std::array<double, 4> z0{0.3, 0.6, 0.1, 0.4};
  double t_end = 200.0;
  double sample_dt = 0.0;  // 0: every accepted step
  bool stop_at_equilibrium = false;

  std::size_t samples = 1000;  // check-rates
  std::size_t points = 201;    // figure1

  std::string out = ".";

  /// Single-replica configuration at the first K of the schedule.
  SimConfig sim_config() const {
    SimConfig s;
    s.params = params;
    s.params.K = K_schedule.front();
    s.rho_A = rho_A;
    s.mutant = mutant;
    s.eps = eps;
    s.mu = mu;
    s.seed = seed;
    s.max_events = max_events;
    s.record_stride = record_stride;
    return s;
  }
};

enum class Source { Default, Preset, File, Flag };

constexpr std::string_view name(Source s) {
  switch (s) {
    case Source::Default: return "default";
    case Source::Preset: return "preset";
    case Source::File: return "file";
    case Source::Flag: return "flag";
  }
  return "?";
}

struct ResolvedValue {
  std::string value;
  Source source = Source::Default;
  std::optional<std::string> file_value;  // set when a flag overrode the file
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] inline void bad_value(std::string_view key, std::string_view value,
                                   std::string_view expected) {
  std::ostringstream os;
  os << "invalid value for " << key << ": '" << value << "' is not " << expected;
  throw ValidationError(os.str());
}

inline double to_double(std::string_view key, const std::string& v) {
  double x = 0.0;
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc{} || ptr != end) bad_value(key, v, "a number");
  return x;
}

template <class Int>
Int to_integer(std::string_view key, const std::string& v) {
  Int x{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc{} || ptr != end) bad_value(key, v, "an integer in range");
  return x;
}

inline bool to_bool(std::string_view key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean (true/false)");
}

inline std::vector<double> to_list(std::string_view key, const std::string& v) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) out.push_back(to_double(key, trim(item)));
  if (out.empty()) bad_value(key, v, "a comma-separated list of numbers");
  return out;
}

template <class T>
std::string list_string(const T& values) {
  std::string s;
  for (const auto& x : values) {
    if (!s.empty()) s += ", ";
    s += csv::format(x);
  }
  return s;
}

struct KeySpec {
  std::string_view key;
  std::string_view section;
  std::string_view default_value;
  std::function<void(RunConfig&, const std::string&)> apply;
  std::function<std::string(const RunConfig&)> show;
};

inline const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = [] {
    std::vector<KeySpec> s;
    auto real = [&s](std::string_view key, std::string_view section, std::string_view def,
                     double RunConfig::*field) {
      s.push_back({key, section, def,
                   [key, field](RunConfig& c, const std::string& v) { c.*field = to_double(key, v); },
                   [field](const RunConfig& c) { return csv::format(c.*field); }});
    };
    auto model = [&s](std::string_view key, std::string_view def, double ModelParams::*field) {
      s.push_back({key, "model", def,
                   [key, field](RunConfig& c, const std::string& v) {
                     c.params.*field = to_double(key, v);
                   },
                   [field](const RunConfig& c) { return csv::format(c.params.*field); }});
    };
    model("b", "1", &ModelParams::b);
    model("d", "0", &ModelParams::d);
    model("c", "1", &ModelParams::c);
    model("beta1", "0", &ModelParams::beta1);
    model("beta2", "0", &ModelParams::beta2);
    s.push_back({"K", "model", "1000",
                 [](RunConfig& c, const std::string& v) {
                   c.K_schedule = to_list("K", v);
                   c.params.K = c.K_schedule.front();
                 },
                 [](const RunConfig& c) { return list_string(c.K_schedule); }});

    real("rho_a", "simulation", "1", &RunConfig::rho_A);
    s.push_back({"mutant", "simulation", "A",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "A") {
                     c.mutant = Allele::A;
                   } else if (v == "a") {
                     c.mutant = Allele::a;
                   } else {
                     bad_value("mutant", v, "one of {A, a}");
                   }
                 },
                 [](const RunConfig& c) { return std::string(name(c.mutant)); }});
    real("eps", "simulation", "0.05", &RunConfig::eps);
    s.push_back({"mu", "simulation", "auto",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "auto") {
                     c.mu.reset();
                   } else {
                     c.mu = to_double("mu", v);
                   }
                 },
                 [](const RunConfig& c) { return csv::format(c.sim_config().resolved_mu()); }});
    s.push_back({"seed", "simulation", "1",
                 [](RunConfig& c, const std::string& v) {
                   c.seed = to_integer<std::uint64_t>("seed", v);
                 },
                 [](const RunConfig& c) { return csv::format(c.seed); }});
    s.push_back({"max_events", "simulation", "auto",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "auto") {
                     c.max_events.reset();
                   } else {
                     c.max_events = to_integer<std::int64_t>("max_events", v);
                   }
                 },
                 [](const RunConfig& c) {
                   // Per K under "auto"; the manifest keeps "auto" so a schedule re-resolves.
                   return c.max_events ? csv::format(*c.max_events) : std::string("auto");
                 }});
    s.push_back({"record_stride", "simulation", "0",
                 [](RunConfig& c, const std::string& v) {
                   c.record_stride = to_integer<std::int64_t>("record_stride", v);
                 },
                 [](const RunConfig& c) { return csv::format(c.record_stride); }});

    s.push_back({"replicas", "ensemble", "1000",
                 [](RunConfig& c, const std::string& v) {
                   c.replicas = to_integer<std::size_t>("replicas", v);
                 },
                 [](const RunConfig& c) { return std::to_string(c.replicas); }});
    s.push_back({"allow_subcritical", "ensemble", "false",
                 [](RunConfig& c, const std::string& v) {
                   c.allow_subcritical = to_bool("allow_subcritical", v);
                 },
                 [](const RunConfig& c) { return std::string(c.allow_subcritical ? "true" : "false"); }});
    s.push_back({"threads", "ensemble", "0",
                 [](RunConfig& c, const std::string& v) {
                   c.threads = to_integer<unsigned>("threads", v);
                 },
                 [](const RunConfig& c) { return std::to_string(c.threads); }});

    s.push_back({"preset", "meanfield", "none",
                 [](RunConfig& c, const std::string& v) {
                   if (v != "none" && v != "prop35") bad_value("preset", v, "one of {none, prop35}");
                   c.preset = v;
                 },
                 [](const RunConfig& c) { return c.preset; }});
    s.push_back({"z0", "meanfield", "0.3, 0.6, 0.1, 0.4",
                 [](RunConfig& c, const std::string& v) {
                   const auto l = to_list("z0", v);
                   if (l.size() != 4) bad_value("z0", v, "four densities z_AP, z_Ap, z_aP, z_ap");
                   std::copy(l.begin(), l.end(), c.z0.begin());
                 },
                 [](const RunConfig& c) { return list_string(c.z0); }});
    real("t_end", "meanfield", "200", &RunConfig::t_end);
    real("sample_dt", "meanfield", "0", &RunConfig::sample_dt);
    s.push_back({"stop_at_equilibrium", "meanfield", "false",
                 [](RunConfig& c, const std::string& v) {
                   c.stop_at_equilibrium = to_bool("stop_at_equilibrium", v);
                 },
                 [](const RunConfig& c) {
                   return std::string(c.stop_at_equilibrium ? "true" : "false");
                 }});

    s.push_back({"samples", "check-rates", "1000",
                 [](RunConfig& c, const std::string& v) {
                   c.samples = to_integer<std::size_t>("samples", v);
                 },
                 [](const RunConfig& c) { return std::to_string(c.samples); }});
    s.push_back({"points", "figure1", "201",
                 [](RunConfig& c, const std::string& v) {
                   c.points = to_integer<std::size_t>("points", v);
                 },
                 [](const RunConfig& c) { return std::to_string(c.points); }});

    s.push_back({"out", "output", ".",
                 [](RunConfig& c, const std::string& v) { c.out = v; },
                 [](const RunConfig& c) { return c.out; }});
    return s;
  }();
  return specs;
}

inline const KeySpec* find_key(std::string_view key) {
  for (const auto& k : key_specs()) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

// Values implied by a named preset; they rank above defaults and below file/flags.
inline std::map<std::string, std::string> preset_values(const std::string& preset) {
  if (preset == "prop35") {
    return {{"b", "1"},          {"d", "0"},
            {"c", "1"},          {"beta1", "0.5"},
            {"beta2", "0.3"},    {"z0", "0.3, 0.6, 0.1, 0.4"},
            {"t_end", "2000"},   {"stop_at_equilibrium", "true"}};
  }
  return {};
}

}  // namespace config_detail

/// Parses a configuration file into key -> value. Keys in the informational
/// [derived] section are skipped; unknown keys and sections are errors.
inline std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line, section;
  int lineno = 0;
  auto where = [&]() { return path + ":" + std::to_string(lineno); };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = config_detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ValidationError(where() + ": malformed section header '" + t + "'");
      section = config_detail::trim(std::string_view(t).substr(1, t.size() - 2));
      static const std::array<std::string_view, 7> known{
          "model", "simulation", "ensemble", "meanfield", "check-rates", "figure1", "output"};
      if (section != "derived" && std::find(known.begin(), known.end(), section) == known.end()) {
        throw ValidationError(where() + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(where() + ": expected 'key = value', got '" + t + "'");
    }
    const std::string key = config_detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = config_detail::trim(std::string_view(t).substr(eq + 1));
    if (section == "derived") continue;
    const auto* spec = config_detail::find_key(key);
    if (!spec) throw ValidationError(where() + ": unknown key '" + key + "'");
    if (!section.empty() && spec->section != section) {
      throw ValidationError(where() + ": key '" + key + "' belongs in [" +
                            std::string(spec->section) + "], not [" + section + "]");
    }
    if (value.empty()) throw ValidationError(where() + ": empty value for '" + key + "'");
    out[key] = value;
  }
  return out;
}

struct ResolvedConfig {
  RunConfig config;
  std::map<std::string, ResolvedValue> values;  // by key
  std::optional<std::string> config_path;
};

/// Precedence: flags > file > preset > defaults. `flags` maps key -> value
/// text; repeated keys are already joined (e.g. K = "500, 1000").
inline ResolvedConfig resolve_config(const std::optional<std::string>& config_path,
                                     const std::map<std::string, std::string>& flags) {
  ResolvedConfig r;
  r.config_path = config_path;
  std::map<std::string, std::string> file;
  if (config_path) file = read_config_file(*config_path);
  for (const auto& [key, _] : flags) {
    if (!config_detail::find_key(key)) throw ValidationError("unknown key '" + key + "'");
  }

  std::string preset = "none";
  if (auto it = flags.find("preset"); it != flags.end()) {
    preset = it->second;
  } else if (auto jt = file.find("preset"); jt != file.end()) {
    preset = jt->second;
  }
  const auto preset_map = config_detail::preset_values(preset);

  for (const auto& spec : config_detail::key_specs()) {
    const std::string key(spec.key);
    ResolvedValue v{std::string(spec.default_value), Source::Default, std::nullopt};
    if (auto it = preset_map.find(key); it != preset_map.end()) v = {it->second, Source::Preset, {}};
    if (auto it = file.find(key); it != file.end()) v = {it->second, Source::File, {}};
    if (auto it = flags.find(key); it != flags.end()) {
      std::optional<std::string> from_file;
      if (auto jt = file.find(key); jt != file.end()) from_file = jt->second;
      v = {it->second, Source::Flag, from_file};
    }
    spec.apply(r.config, v.value);
    r.values[key] = v;
  }

  const RunConfig& c = r.config;
  c.params.validate();
  for (double K : c.K_schedule) {
    if (!(K > 0.0)) throw ValidationError("invalid parameter K: requires K > 0");
  }
  c.sim_config().validate();
  if (c.replicas < 1) throw ValidationError("invalid parameter replicas: requires replicas ≥ 1");
  if (!(c.t_end > 0.0)) throw ValidationError("invalid parameter t_end: requires t_end > 0");
  if (!(c.sample_dt >= 0.0)) {
    throw ValidationError("invalid parameter sample_dt: requires sample_dt ≥ 0");
  }
  for (double z : c.z0) {
    if (!(z >= 0.0)) throw ValidationError("invalid parameter z0: requires densities ≥ 0");
  }
  if (c.points < 2) throw ValidationError("invalid parameter points: requires points ≥ 2");
  return r;
}

/// Writes the resolved configuration in the file grammar, so that passing the
/// manifest back as --config reproduces the run. A [derived] section lists
/// the branching-process quantities at the configured resident composition.
inline void write_manifest(std::ostream& out, const ResolvedConfig& r, std::string_view subcommand,
                           const std::vector<std::string>& outputs) {
  out << "# homogamy run manifest\n";
  out << "# subcommand: " << subcommand << '\n';
  if (r.config_path) out << "# config file: " << *r.config_path << '\n';
  for (const auto& o : outputs) out << "# output: " << o << '\n';

  std::string section;
  for (const auto& spec : config_detail::key_specs()) {
    if (spec.section != section) {
      section = spec.section;
      out << "\n[" << section << "]\n";
    }
    const auto& v = r.values.at(std::string(spec.key));
    out << spec.key << " = " << spec.show(r.config) << "  # " << name(v.source);
    if (v.file_value) out << " (file: " << *v.file_value << ")";
    if (v.value == "auto") {
      out << (spec.key == "max_events" ? " (auto: max(1000, 200 K ln K) at each K)"
                                       : " (auto: 0.1 (b(1+β₁)-d)/c)");
    }
    out << '\n';
  }

  out << "\n[derived]\n";
  try {
    const auto a = analyze_invasion(ResidentContext::from_rho_A(r.config.rho_A), r.config.params);
    out << "lambda = " << csv::format(a.spectrum.lambda) << '\n';
    out << "lambda_other = " << csv::format(a.spectrum.lambda_other) << '\n';
    out << "pi_A = " << csv::format(a.spectrum.pi[0]) << '\n';
    out << "pi_a = " << csv::format(a.spectrum.pi[1]) << '\n';
    out << "q_A = " << csv::format(a.extinction.q_A) << '\n';
    out << "q_a = " << csv::format(a.extinction.q_a) << '\n';
    out << "supercritical = " << (a.supercritical ? "true" : "false") << '\n';
  } catch (const std::exception& e) {
    out << "# unavailable: " << e.what() << '\n';
  }
}

}  // namespace homogamy
