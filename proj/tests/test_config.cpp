#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <string>

#include "qtraj/config.hpp"

using namespace qtraj;

namespace {

const char* kMinimal = R"({
  "model": {"nu0": 2.0, "alpha1": [0.6, 0.2], "beta": 0.8, "lambda": 0.5}
})";

bool mentions(const ConfigError& e, const std::string& what) {
  return std::any_of(e.violations.begin(), e.violations.end(),
                     [&](const std::string& v) { return v.find(what) != std::string::npos; });
}

ConfigError error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "expected a ConfigError for:\n" << text;
  return ConfigError({});
}

}  // namespace

TEST(Config, MinimalFillsDefaults) {
  const auto c = parse_config(kMinimal);
  EXPECT_EQ(c.model.alpha1, cplx(0.6, 0.2));
  EXPECT_EQ(c.model.alpha2, cplx(0.0));
  EXPECT_EQ(c.model.beta, cplx(0.8));
  EXPECT_TRUE(c.model.channels.empty());
  EXPECT_EQ(c.command, Command::simulate);
  EXPECT_GE(c.run.trajectories, 1u);
  const auto m = derive_params(c.model);
  EXPECT_NEAR(m.gamma0, 0.4 + 0.5 * 0.64, 1e-15);
}

TEST(Config, NegativeLambdaNamesTheField) {
  const auto e = error_of(R"({"model": {"nu0": 1, "alpha1": 1, "beta": 1, "lambda": -0.5}})");
  EXPECT_TRUE(mentions(e, "model.lambda"));
}

TEST(Config, CollectsEveryViolation) {
  const auto e = error_of(R"({
    "model": {"nu0": 1, "alpha1": 1, "beta": 1, "lambda": -1, "colour": 3,
              "laser": {"epsilon": -0.1},
              "channels": [{"b": 0.1, "kernel": {"kind": "exponential", "gamma": -1}}]},
    "run": {"trajectories": 0, "horizon": 10},
    "detection": {"filter": {"kind": "exponential", "Gamma": 0}}
  })");
  EXPECT_TRUE(mentions(e, "model.lambda"));
  EXPECT_TRUE(mentions(e, "model.colour: unknown key"));
  EXPECT_TRUE(mentions(e, "model.laser.epsilon"));
  EXPECT_TRUE(mentions(e, "model.channels[0]"));
  EXPECT_TRUE(mentions(e, "run.trajectories"));
  EXPECT_TRUE(mentions(e, "detection.filter"));
  EXPECT_GE(e.violations.size(), 6u);
}

TEST(Config, UnknownKeysAreRejectedAtEveryLevel) {
  EXPECT_TRUE(mentions(error_of(R"({"model": {"nu0": 1, "alpha1": 1, "beta": 1, "lambda": 0.5}, "extra": 1})"),
                       "config.extra"));
  EXPECT_TRUE(mentions(
      error_of(R"({"model": {"nu0": 1, "alpha1": 1, "beta": 1, "lambda": 0.5}, "run": {"tmax": 3}})"), "run.tmax"));
}

TEST(Config, RequiredModelFields) {
  const auto e = error_of(R"({"model": {"alpha1": 1}})");
  EXPECT_TRUE(mentions(e, "model.nu0: required"));
  EXPECT_TRUE(mentions(e, "model.beta: required"));
  EXPECT_TRUE(mentions(e, "model.lambda: required"));
  EXPECT_TRUE(mentions(error_of("{}"), "model: required"));
}

TEST(Config, StepSizeBound) {
  // gamma0 = 1 + 0.5 = 1.5, so dt = 0.01 is too coarse
  const auto e = error_of(
      R"({"model": {"nu0": 1, "alpha1": 1, "beta": 1, "lambda": 0.5}, "run": {"dt": 0.01}})");
  EXPECT_TRUE(mentions(e, "run.dt"));
  EXPECT_NO_THROW(
      parse_config(R"({"model": {"nu0": 1, "alpha1": 1, "beta": 1, "lambda": 0.5}, "run": {"dt": 0.005}})"));
}

TEST(Config, ZeroTrajectoriesIsAnError) {
  EXPECT_TRUE(mentions(
      error_of(R"({"model": {"nu0": 1, "alpha1": 1, "beta": 1, "lambda": 0.5}, "run": {"trajectories": 0}})"),
      "run.trajectories"));
}

TEST(Config, HomodyneNeedsLaser) {
  const auto e = error_of(R"({"model": {"nu0": 1, "alpha1": 1, "beta": 1, "lambda": 0.5,
                                        "local_oscillator": {"kind": "homodyne", "theta": 0.3}}})");
  EXPECT_TRUE(mentions(e, "model.local_oscillator"));
}

TEST(Config, MalformedJson) {
  const auto e = error_of("{ model: ");
  EXPECT_TRUE(mentions(e, "not valid JSON"));
}

TEST(Config, FullRoundTrip) {
  const char* text = R"({
    "command": "spectrum",
    "model": {"nu0": 10, "alpha1": [0.6, 0.2], "alpha2": [0.3, -0.1], "beta": [0.1, 0.7], "lambda": 0.4,
              "xi0": [0.1, 0.2],
              "laser": {"g": [0.3, 0.1], "nu3": 9.5, "epsilon": 0.5},
              "local_oscillator": {"kind": "homodyne", "theta": 0.25, "delay": 1.5},
              "channels": [
                {"b": [0.2, 0.1]},
                {"b": 0, "kernel": {"kind": "exponential", "g": [0.2, 0], "gamma": 0.5, "nu": 9.0}},
                {"b": 0, "kernel": {"kind": "tabulated", "times": [0, 1, 2], "values": [[1, 0], [0.5, 0.1], 0]}}
              ]},
    "run": {"trajectories": 40, "horizon": 300, "dt": 0.01, "burn_in": 10, "seed": 1234567890123,
            "threads": 3, "mode": "reference"},
    "detection": {"filter": {"kind": "tabulated", "times": [0, 0.5, 1], "values": [2, 1, 0], "normalization": 1.5},
                  "spectrum": {"segment": 4096, "overlap": 0.25},
                  "counting_windows": [1, 2],
                  "oracle_mu": [0.5, 1.5],
                  "gamma_time_units": true}
  })";
  const auto a = parse_config(text);
  const std::string s1 = serialize_config(a);
  const auto b = parse_config(s1);
  EXPECT_EQ(s1, serialize_config(b));
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(b.command, Command::spectrum);
  EXPECT_EQ(b.run.seed, 1234567890123ull);
  EXPECT_EQ(b.run.mode, Mode::reference);
  ASSERT_EQ(b.model.channels.size(), 3u);
  EXPECT_EQ(std::get<TabulatedKernel>(b.model.channels[2].kernel).values[1], cplx(0.5, 0.1));
  EXPECT_EQ(std::get<HomodyneLO>(b.model.lo).delay, 1.5);
}

// Property: random valid configurations survive parse -> serialize -> parse.
TEST(Config, RandomRoundTripIsIdentity) {
  std::mt19937_64 g(17);
  std::uniform_real_distribution<double> U(-2.0, 2.0), P(0.01, 2.0);
  for (int n = 0; n < 200; ++n) {
    ExperimentConfig c;
    c.model.nu0 = U(g);
    c.model.alpha1 = {U(g), U(g)};
    c.model.alpha2 = {U(g), U(g)};
    c.model.beta = {U(g), U(g)};
    c.model.lambda = P(g);
    c.model.laser = {{U(g), U(g)}, U(g), P(g)};
    if (n % 2) c.model.lo = HomodyneLO{U(g), P(g)};
    else c.model.lo = HeterodyneLO{U(g), P(g), U(g)};
    for (int k = 0; k < n % 4; ++k) {
      if (k % 2) c.model.channels.push_back({{U(g), U(g)}, WhiteKernel{}});
      else c.model.channels.push_back({{U(g), U(g)}, ExponentialKernel{{U(g), U(g)}, P(g), U(g)}});
    }
    c.detection.filter.kind = ExponentialResponse{P(g)};
    c.detection.spectrum.overlap = 0.5 * P(g) / 2.0;
    const auto m = derive_params(c.model);
    c.run.dt = 0.01 / std::max(m.p.lambda, m.gamma0) * P(g) / 2.0;
    c.run.seed = g();
    c.command = static_cast<Command>(n % 5);
    const std::string s = serialize_config(c);
    const auto back = parse_config(s);
    EXPECT_EQ(s, serialize_config(back)) << "case " << n;
  }
}

TEST(Config, HashIgnoresThreadCount) {
  auto a = parse_config(kMinimal);
  auto b = a;
  b.run.threads = 8;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.run.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
}
