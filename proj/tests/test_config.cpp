#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "homogamy/config.hpp"

using namespace homogamy;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    char tmpl[] = "/tmp/homogamy-test-XXXXXX";
    path_ = ::mkdtemp(tmpl);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int exit_code;
  std::string out;
};

CliResult run_cli(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string(HOMOGAMY_CLI_PATH) + " " + args + " > " + capture.string() +
                          " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(capture)};
}

fs::path find_one(const fs::path& dir, const std::string& prefix, const std::string& suffix) {
  fs::path found;
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind(prefix, 0) == 0 && name.size() >= suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0 &&
        name.find("-trajectory") == std::string::npos && name.find("-summary") == std::string::npos) {
      found = e.path();
      ++n;
    }
  }
  EXPECT_EQ(n, 1) << prefix << "*" << suffix << " in " << dir;
  return found;
}

}  // namespace

TEST(ConfigFile, ParsesSectionsCommentsAndLists) {
  TempDir tmp;
  const auto p = write_file(tmp.path() / "a.cfg",
                            "# leading comment\n"
                            "beta1 = 0.5   # trailing\n"
                            "\n"
                            "[model]\n"
                            "K = 500, 1000,2000\n"
                            "[simulation]\n"
                            "mutant = a\n"
                            "[derived]\n"
                            "lambda = 123\n"
                            "anything = goes\n");
  const auto values = read_config_file(p.string());
  EXPECT_EQ(values.at("beta1"), "0.5");
  EXPECT_EQ(values.at("K"), "500, 1000,2000");
  EXPECT_EQ(values.count("lambda"), 0u);
  const auto r = resolve_config(p.string(), {});
  EXPECT_EQ(r.config.params.beta1, 0.5);
  EXPECT_EQ(r.config.K_schedule, (std::vector<double>{500, 1000, 2000}));
  EXPECT_EQ(r.config.mutant, Allele::a);
}

TEST(ConfigFile, Errors) {
  TempDir tmp;
  try {
    read_config_file((tmp.path() / "missing.cfg").string());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("missing.cfg"), std::string::npos);
  }
  auto expect_error = [&](const std::string& text, const std::string& needle) {
    const auto p = write_file(tmp.path() / "bad.cfg", text);
    try {
      resolve_config(p.string(), {});
      ADD_FAILURE() << "no error for: " << text;
    } catch (const ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error("betta1 = 0.5\n", "unknown key 'betta1'");
  expect_error("[model]\nrho_a = 0.5\n", "belongs in [simulation]");
  expect_error("[modle]\n", "unknown section");
  expect_error("beta1 0.5\n", "expected 'key = value'");
  expect_error("beta1 = half\n", "beta1");
  expect_error("beta2 = 1.5\n", "0 ≤ β₂ ≤ 1");
  expect_error("mutant = B\n", "mutant");
  expect_error("z0 = 1, 2\n", "z0");
  expect_error("b = 1\nd = 2\n", "b > d");
  EXPECT_THROW(resolve_config(std::nullopt, {{"nonsense", "1"}}), ValidationError);
}

TEST(ConfigResolution, PrecedenceFlagsOverFileOverDefaults) {
  TempDir tmp;
  const auto p = write_file(tmp.path() / "a.cfg", "K = 1000\nbeta1 = 0.5\n");
  const auto r = resolve_config(p.string(), {{"K", "2000"}});
  EXPECT_EQ(r.config.params.K, 2000);
  EXPECT_EQ(r.values.at("K").source, Source::Flag);
  EXPECT_EQ(r.values.at("K").file_value, "1000");
  EXPECT_EQ(r.values.at("beta1").source, Source::File);
  EXPECT_EQ(r.values.at("beta2").source, Source::Default);

  std::ostringstream m;
  write_manifest(m, r, "simulate", {});
  EXPECT_NE(m.str().find("K = 2000  # flag (file: 1000)"), std::string::npos) << m.str();
  EXPECT_NE(m.str().find("beta2 = 0  # default"), std::string::npos);
  EXPECT_NE(m.str().find("[derived]"), std::string::npos);
  EXPECT_NE(m.str().find("q_A = "), std::string::npos);
  EXPECT_NE(m.str().find("pi_A = "), std::string::npos);
}

TEST(ConfigResolution, PresetRanksBetweenDefaultsAndFile) {
  const auto r = resolve_config(std::nullopt, {{"preset", "prop35"}, {"t_end", "500"}});
  EXPECT_EQ(r.config.params.beta1, 0.5);
  EXPECT_EQ(r.values.at("beta1").source, Source::Preset);
  EXPECT_EQ(r.config.t_end, 500);
  EXPECT_TRUE(r.config.stop_at_equilibrium);
}

TEST(Manifest, EveryKeyAppearsAndRoundTrips) {
  TempDir tmp;
  const auto r = resolve_config(std::nullopt, {{"beta1", "0.3"}, {"K", "500, 700"}, {"seed", "9"}});
  std::ostringstream m;
  write_manifest(m, r, "ensemble", {"x.csv"});
  for (const auto& [key, _] : r.values) {
    EXPECT_NE(m.str().find("\n" + key + " = "), std::string::npos) << key;
  }
  const auto p = write_file(tmp.path() / "m.manifest", m.str());
  const auto again = resolve_config(p.string(), {});
  std::ostringstream m2;
  write_manifest(m2, again, "ensemble", {"x.csv"});
  // Same resolved values; only the provenance annotations differ.
  for (const auto& [key, v] : r.values) {
    const auto& spec = *config_detail::find_key(key);
    EXPECT_EQ(spec.show(again.config), spec.show(r.config)) << key;
  }
  EXPECT_EQ(again.config.K_schedule, r.config.K_schedule);
  EXPECT_EQ(again.config.sim_config().resolved_mu(), r.config.sim_config().resolved_mu());
}

TEST(Cli, ExtinctionProbPrintsMonomorphicValue) {
  TempDir tmp;
  const auto r = run_cli("extinction-prob --rho-a 1 --beta1 0.5 --out " + tmp.path().string(),
                         tmp.path() / "stdout.txt");
  EXPECT_EQ(r.exit_code, 0) << r.out;
  EXPECT_NE(r.out.find("q_A=0.8\n"), std::string::npos) << r.out;
  find_one(tmp.path(), "extinction-prob-", ".csv");
  find_one(tmp.path(), "extinction-prob-", ".manifest");
}

TEST(Cli, CheckRatesReportsTinyDiscrepancy) {
  TempDir tmp;
  const auto r = run_cli("check-rates --samples 1000 --seed 7 --out " + tmp.path().string(),
                         tmp.path() / "stdout.txt");
  EXPECT_EQ(r.exit_code, 0) << r.out;
  const auto pos = r.out.find("max_discrepancy=");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::stod(r.out.substr(pos + 16)), 1e-12);
}

TEST(Cli, MeanfieldPresetConverges) {
  TempDir tmp;
  const auto r = run_cli("meanfield --preset prop35 --out " + tmp.path().string(),
                         tmp.path() / "stdout.txt");
  EXPECT_EQ(r.exit_code, 0) << r.out;
  const auto pos = r.out.find("distance_to_chi_AP=");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::stod(r.out.substr(pos + 19)), 1e-6);
  const auto csv = slurp(find_one(tmp.path(), "meanfield-", ".csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,z_AP,z_Ap,z_aP,z_ap,D,Pi");
}

TEST(Cli, ExitCodes) {
  TempDir tmp;
  const auto cap = tmp.path() / "stdout.txt";
  auto bad = run_cli("extinction-prob --beta2 1.5 --out " + tmp.path().string(), cap);
  EXPECT_EQ(bad.exit_code, 1);
  EXPECT_NE(bad.out.find("0 ≤ β₂ ≤ 1"), std::string::npos) << bad.out;
  auto missing = run_cli("simulate --config /nonexistent/run.cfg", cap);
  EXPECT_EQ(missing.exit_code, 1);
  EXPECT_NE(missing.out.find("/nonexistent/run.cfg"), std::string::npos);
  EXPECT_EQ(run_cli("no-such-command", cap).exit_code, 1);
  EXPECT_EQ(run_cli("simulate --K 5 --beta1 0.5 --out " + tmp.path().string(), cap).exit_code, 1);
  EXPECT_EQ(run_cli("ensemble --beta1 0 --beta2 0 --rho-a 0.5 --out " + tmp.path().string(), cap)
                .exit_code,
            1);
  EXPECT_EQ(run_cli("--help", cap).exit_code, 0);
}

TEST(Cli, ManifestReproducesEnsembleOutputs) {
  TempDir tmp;
  const auto first = tmp.path() / "first";
  const auto second = tmp.path() / "second";
  const auto cap = tmp.path() / "stdout.txt";
  auto r = run_cli("ensemble --beta1 0.5 --beta2 0.3 --rho-a 0.8 --K 200 --K 300 --replicas 40 "
                   "--seed 11 --out " + first.string(),
                   cap);
  ASSERT_EQ(r.exit_code, 0) << r.out;
  const auto manifest = find_one(first, "ensemble-", ".manifest");
  r = run_cli("ensemble --config " + manifest.string() + " --out " + second.string(), cap);
  ASSERT_EQ(r.exit_code, 0) << r.out;
  EXPECT_EQ(slurp(find_one(first, "ensemble-", ".csv")), slurp(find_one(second, "ensemble-", ".csv")));
  const auto summary = [](const fs::path& dir) {
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto n = e.path().filename().string();
      if (n.find("-summary.csv") != std::string::npos) return slurp(e.path());
    }
    return std::string();
  };
  EXPECT_FALSE(summary(first).empty());
  EXPECT_EQ(summary(first), summary(second));
}
