#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "qtraj/commands.hpp"

using namespace qtraj;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"({
  "model": {"nu0": 1, "alpha1": 0.5, "alpha2": 0.5, "beta": 1, "lambda": 0.5,
            "laser": {"g": 0.3, "nu3": 1.0, "epsilon": 0.05},
            "channels": [{"b": 0.4}, {"b": 0, "kernel": {"kind": "exponential", "g": 0.2, "gamma": 0.3, "nu": 1}}]},
  "run": {"trajectories": 5, "horizon": 3, "dt": 0.01, "seed": 9},
  "detection": {"counting_windows": [1, 3], "oracle_mu": [-1, 0, 1], "spectrum": {"segment": 64}}
})";

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("qtraj_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Commands, OutputIsIndependentOfThreadCount) {
  auto c = parse_config(kSmall);
  for (auto cmd : {Command::simulate, Command::counting, Command::spectrum}) {
    c.run.threads = 1;
    const auto a = scratch("a");
    const auto sa = run_command(cmd, c, a);
    c.run.threads = 3;
    const auto b = scratch("b");
    run_command(cmd, c, b);
    for (const auto& f : sa.outputs) EXPECT_EQ(slurp(a / f), slurp(b / f)) << to_string(cmd) << " " << f;
  }
}

TEST(Commands, ManifestRecordsHashSeedAndOutputs) {
  const auto c = parse_config(kSmall);
  const auto d = scratch("manifest");
  const auto s = run_command(Command::simulate, c, d);
  const auto j = nlohmann::json::parse(slurp(d / "manifest.json"));
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(c)));
  EXPECT_EQ(j["config_hash"], hash);
  EXPECT_EQ(j["seed"], 9u);
  EXPECT_EQ(j["command"], "simulate");
  EXPECT_EQ(j["outputs"].size(), s.outputs.size());
  for (const auto& f : s.outputs) EXPECT_TRUE(fs::exists(d / f)) << f;
  // the saved config reproduces the hash
  EXPECT_EQ(config_hash(parse_config(slurp(d / "config.json"))), config_hash(c));
}

TEST(Commands, CsvHeadersCarryUnits) {
  auto c = parse_config(kSmall);
  const auto d = scratch("units");
  run_command(Command::simulate, c, d);
  EXPECT_EQ(slurp(d / "paths.csv").substr(0, 22), "trajectory,time[raw],r");
  c.detection.gamma_time_units = true;
  run_command(Command::oracle, c, d);
  EXPECT_EQ(slurp(d / "oracle_spectrum.csv").substr(0, 11), "mu[gamma0],");
}

TEST(Commands, OracleReportsEffectivePhotonNumberForWhiteBath) {
  const auto c = parse_config(R"({
    "model": {"nu0": 1, "alpha1": 0.5, "alpha2": 0.5, "beta": 1, "lambda": 0.5,
              "channels": [{"b": 0.6}, {"b": [0.2, 0.3]}]}
  })");
  const auto d = scratch("white");
  run_command(Command::oracle, c, d);
  std::istringstream in(slurp(d / "oracle_lambda.csv"));
  std::string line, total;
  while (std::getline(in, line))
    if (line.rfind("total,", 0) == 0) total = line;
  // gamma0 = 1 so n = |b1|^2 + |b2|^2 = Lambda
  EXPECT_EQ(total.substr(0, 26), "total,0.48999999999999999,");
  EXPECT_NE(total.find(",0.48999999999999999,"), std::string::npos);
}

TEST(Commands, CountingWithWhiteBathCarriesOracleColumn) {
  const auto c = parse_config(R"({
    "model": {"nu0": 1, "alpha1": 0.5, "alpha2": 0.5, "beta": 1, "lambda": 0.5, "channels": [{"b": 0.6}]},
    "run": {"trajectories": 50, "horizon": 5, "dt": 0.005},
    "detection": {"counting_windows": [5]}
  })");
  const auto d = scratch("qcol");
  run_command(Command::counting, c, d);
  const auto text = slurp(d / "counting.csv");
  const auto last = text.substr(text.rfind(',', text.size() - 2) + 1);
  EXPECT_NEAR(std::stod(last), mandel_Q(derive_params(c.model), 5.0, Route::closed_form), 1e-15);
}

TEST(Commands, SpectrumRejectsSegmentLongerThanRecord) {
  auto c = parse_config(kSmall);
  c.detection.spectrum.segment = 1024;
  EXPECT_THROW(run_command(Command::spectrum, c, scratch("seg")), InvalidConfiguration);
}
