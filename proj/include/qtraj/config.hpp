#pragma once

// Experiment configuration: JSON in, validated ExperimentConfig out. Parsing
// is strict (unknown keys are errors) and reports every violation at once.
// Complex numbers are written as [re, im]; a bare number is accepted as real.

#include <json.hpp>

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "qtraj/detection.hpp"
#include "qtraj/errors.hpp"
#include "qtraj/oscillator.hpp"

namespace qtraj {

enum class Command { simulate, counting, spectrum, oracle, validate };

inline const char* to_string(Command c) {
  switch (c) {
    case Command::simulate: return "simulate";
    case Command::counting: return "counting";
    case Command::spectrum: return "spectrum";
    case Command::oracle: return "oracle";
    case Command::validate: return "validate";
  }
  return "?";
}

struct RunControls {
  std::size_t trajectories = 100;
  double horizon = 20.0;
  double dt = 0.005;
  double burn_in = 0.0;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  Mode mode = Mode::physical;
};

struct DetectionControls {
  ResponseFilter filter{};
  SpectrumConfig spectrum{};
  std::vector<double> counting_windows{1.0, 5.0, 20.0};  // lengths t after burn-in
  std::vector<double> oracle_mu{};                       // empty: derived from the spectrum grid
  bool gamma_time_units = false;  // report times in units of 1/gamma0
};

struct ExperimentConfig {
  OscillatorParams model;
  RunControls run;
  DetectionControls detection;
  Command command = Command::simulate;
};

struct ConfigError : InvalidConfiguration {
  std::vector<std::string> violations;
  explicit ConfigError(std::vector<std::string> v)
      : InvalidConfiguration(join(v)), violations(std::move(v)) {}

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid configuration:";
    for (const auto& e : v) s += "\n  " + e;
    return s;
  }
};

namespace detail {

using nlohmann::json;

// Walks a JSON tree, recording every problem with its path.
class Reader {
 public:
  std::vector<std::string> errors;

  void error(const std::string& path, const std::string& what) { errors.push_back(path + ": " + what); }

  bool object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
      error(path, "expected an object");
      return false;
    }
    for (const auto& [k, v] : j.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || k == a;
      if (!ok) error(path + "." + k, "unknown key");
    }
    return true;
  }

  void real(const json& j, const char* key, const std::string& path, double& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number()) return error(path + "." + key, "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) error(path + "." + key, "must be finite");
  }

  void complex(const json& j, const char* key, const std::string& path, cplx& out) {
    if (!j.contains(key)) return;
    out = complex_value(j.at(key), path + "." + key);
  }

  cplx complex_value(const json& v, const std::string& path) {
    if (v.is_number()) return {v.get<double>(), 0.0};
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
      return {v[0].get<double>(), v[1].get<double>()};
    error(path, "expected a number or [re, im]");
    return {};
  }

  template <class U>
  void unsigned_int(const json& j, const char* key, const std::string& path, U& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (v.is_number_unsigned()) {
      out = v.get<U>();
    } else if (v.is_number_integer()) {
      error(path + "." + key, "must be >= 0");
    } else {
      error(path + "." + key, "expected a non-negative integer");
    }
  }

  std::vector<double> reals(const json& v, const std::string& path) {
    std::vector<double> r;
    if (!v.is_array()) {
      error(path, "expected an array of numbers");
      return r;
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i].is_number()) r.push_back(v[i].get<double>());
      else error(path + "[" + std::to_string(i) + "]", "expected a number");
    }
    return r;
  }
};

inline Kernel read_kernel(Reader& r, const json& j, const std::string& path) {
  if (!r.object(j, path, {"kind", "g", "gamma", "nu", "times", "values", "window"})) return WhiteKernel{};
  const std::string kind = j.value("kind", "white");
  if (kind == "white") {
    for (const char* k : {"g", "gamma", "nu", "times", "values", "window"})
      if (j.contains(k)) r.error(path + "." + k, "not used by a white kernel");
    return WhiteKernel{};
  }
  if (kind == "exponential") {
    ExponentialKernel e;
    r.complex(j, "g", path, e.g);
    r.real(j, "gamma", path, e.gamma);
    r.real(j, "nu", path, e.nu);
    return e;
  }
  if (kind == "tabulated") {
    TabulatedKernel t;
    if (j.contains("times")) t.times = r.reals(j["times"], path + ".times");
    if (j.contains("values")) {
      const auto& v = j["values"];
      if (!v.is_array()) r.error(path + ".values", "expected an array");
      else
        for (std::size_t i = 0; i < v.size(); ++i)
          t.values.push_back(r.complex_value(v[i], path + ".values[" + std::to_string(i) + "]"));
    }
    r.real(j, "window", path, t.window);
    return t;
  }
  r.error(path + ".kind", "expected white, exponential or tabulated");
  return WhiteKernel{};
}

inline void read_model(Reader& r, const json& j, OscillatorParams& p) {
  const std::string path = "model";
  if (!r.object(j, path, {"nu0", "alpha1", "alpha2", "beta", "lambda", "xi0", "laser", "local_oscillator", "channels"}))
    return;
  for (const char* k : {"nu0", "alpha1", "beta", "lambda"})
    if (!j.contains(k)) r.error(path + "." + k, "required");
  r.real(j, "nu0", path, p.nu0);
  r.complex(j, "alpha1", path, p.alpha1);
  r.complex(j, "alpha2", path, p.alpha2);
  r.complex(j, "beta", path, p.beta);
  r.real(j, "lambda", path, p.lambda);
  r.complex(j, "xi0", path, p.xi0);
  if (p.lambda < 0.0) r.error(path + ".lambda", "must be >= 0");

  if (j.contains("laser")) {
    const auto& l = j["laser"];
    if (r.object(l, path + ".laser", {"g", "nu3", "epsilon"})) {
      r.complex(l, "g", path + ".laser", p.laser.g);
      r.real(l, "nu3", path + ".laser", p.laser.nu3);
      r.real(l, "epsilon", path + ".laser", p.laser.epsilon);
      if (p.laser.epsilon < 0.0) r.error(path + ".laser.epsilon", "must be >= 0");
    }
  }
  if (j.contains("local_oscillator")) {
    const auto& l = j["local_oscillator"];
    const std::string lp = path + ".local_oscillator";
    if (r.object(l, lp, {"kind", "nu", "kappa", "vartheta", "theta", "delay"})) {
      const std::string kind = l.value("kind", "heterodyne");
      if (kind == "heterodyne") {
        HeterodyneLO h;
        r.real(l, "nu", lp, h.nu);
        r.real(l, "kappa", lp, h.kappa);
        r.real(l, "vartheta", lp, h.vartheta);
        for (const char* k : {"theta", "delay"})
          if (l.contains(k)) r.error(lp + "." + k, "not used by a heterodyne oscillator");
        if (h.kappa < 0.0) r.error(lp + ".kappa", "must be >= 0");
        p.lo = h;
      } else if (kind == "homodyne") {
        HomodyneLO h;
        r.real(l, "theta", lp, h.theta);
        r.real(l, "delay", lp, h.delay);
        for (const char* k : {"nu", "kappa", "vartheta"})
          if (l.contains(k)) r.error(lp + "." + k, "not used by a homodyne oscillator");
        if (h.delay < 0.0) r.error(lp + ".delay", "must be >= 0");
        if (std::abs(p.laser.g) == 0.0) r.error(lp, "homodyne detection requires a laser with g != 0");
        p.lo = h;
      } else {
        r.error(lp + ".kind", "expected heterodyne or homodyne");
      }
    }
  }
  if (j.contains("channels")) {
    const auto& c = j["channels"];
    if (!c.is_array()) {
      r.error(path + ".channels", "expected an array");
    } else {
      for (std::size_t i = 0; i < c.size(); ++i) {
        const std::string cp = path + ".channels[" + std::to_string(i) + "]";
        if (!r.object(c[i], cp, {"b", "kernel"})) continue;
        ColoredChannelSpec ch;
        r.complex(c[i], "b", cp, ch.b);
        if (c[i].contains("kernel")) ch.kernel = read_kernel(r, c[i]["kernel"], cp + ".kernel");
        try {
          validate_channel(ch);
        } catch (const std::exception& e) {
          r.error(cp, e.what());
        }
        p.channels.push_back(std::move(ch));
      }
    }
  }
}

inline void read_run(Reader& r, const json& j, RunControls& run) {
  const std::string path = "run";
  if (!r.object(j, path, {"trajectories", "horizon", "dt", "burn_in", "seed", "threads", "mode"})) return;
  r.unsigned_int(j, "trajectories", path, run.trajectories);
  r.real(j, "horizon", path, run.horizon);
  r.real(j, "dt", path, run.dt);
  r.real(j, "burn_in", path, run.burn_in);
  r.unsigned_int(j, "seed", path, run.seed);
  r.unsigned_int(j, "threads", path, run.threads);
  if (j.contains("mode")) {
    const auto m = j["mode"];
    if (m == "physical") run.mode = Mode::physical;
    else if (m == "reference") run.mode = Mode::reference;
    else r.error(path + ".mode", "expected physical or reference");
  }
}

inline void read_detection(Reader& r, const json& j, DetectionControls& d) {
  const std::string path = "detection";
  if (!r.object(j, path, {"filter", "spectrum", "counting_windows", "oracle_mu", "gamma_time_units"})) return;
  if (j.contains("filter")) {
    const auto& f = j["filter"];
    const std::string fp = path + ".filter";
    if (r.object(f, fp, {"kind", "Gamma", "times", "values", "normalization"})) {
      const std::string kind = f.value("kind", "exponential");
      if (kind == "exponential") {
        ExponentialResponse e;
        r.real(f, "Gamma", fp, e.Gamma);
        d.filter.kind = e;
      } else if (kind == "tabulated") {
        TabulatedResponse t;
        if (f.contains("times")) t.times = r.reals(f["times"], fp + ".times");
        if (f.contains("values")) t.values = r.reals(f["values"], fp + ".values");
        d.filter.kind = t;
      } else {
        r.error(fp + ".kind", "expected exponential or tabulated");
      }
      r.real(f, "normalization", fp, d.filter.normalization);
      try {
        validate_filter(d.filter);
      } catch (const std::exception& e) {
        r.error(fp, e.what());
      }
    }
  }
  if (j.contains("spectrum")) {
    const auto& s = j["spectrum"];
    const std::string sp = path + ".spectrum";
    if (r.object(s, sp, {"segment", "overlap"})) {
      r.unsigned_int(s, "segment", sp, d.spectrum.segment);
      r.real(s, "overlap", sp, d.spectrum.overlap);
      if (d.spectrum.segment < 16) r.error(sp + ".segment", "must be >= 16");
      if (!(d.spectrum.overlap >= 0.0 && d.spectrum.overlap < 1.0)) r.error(sp + ".overlap", "must be in [0, 1)");
    }
  }
  if (j.contains("counting_windows")) {
    d.counting_windows = r.reals(j["counting_windows"], path + ".counting_windows");
    for (double t : d.counting_windows)
      if (!(t > 0.0)) r.error(path + ".counting_windows", "window lengths must be > 0");
  }
  if (j.contains("oracle_mu")) d.oracle_mu = r.reals(j["oracle_mu"], path + ".oracle_mu");
  if (j.contains("gamma_time_units")) {
    if (j["gamma_time_units"].is_boolean()) d.gamma_time_units = j["gamma_time_units"].get<bool>();
    else r.error(path + ".gamma_time_units", "expected true or false");
  }
}

inline json complex_json(cplx z) { return json::array({z.real(), z.imag()}); }

}  // namespace detail

// Throws ConfigError listing every violation.
inline ExperimentConfig parse_config(const std::string& text) {
  using detail::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("not valid JSON: ") + e.what()});
  }
  detail::Reader r;
  ExperimentConfig c;
  if (r.object(j, "config", {"model", "run", "detection", "command"})) {
    if (j.contains("model")) detail::read_model(r, j["model"], c.model);
    else r.error("model", "required");
    if (j.contains("run")) detail::read_run(r, j["run"], c.run);
    if (j.contains("detection")) detail::read_detection(r, j["detection"], c.detection);
    if (j.contains("command")) {
      const auto& v = j["command"];
      bool ok = false;
      for (Command cmd : {Command::simulate, Command::counting, Command::spectrum, Command::oracle, Command::validate})
        if (v == to_string(cmd)) {
          c.command = cmd;
          ok = true;
        }
      if (!ok) r.error("command", "expected simulate, counting, spectrum, oracle or validate");
    }
  }
  // cross-field invariants
  const auto& run = c.run;
  if (run.trajectories < 1) r.error("run.trajectories", "must be >= 1");
  if (!(run.horizon > 0.0)) r.error("run.horizon", "must be > 0");
  if (!(run.dt > 0.0)) r.error("run.dt", "must be > 0");
  if (!(run.burn_in >= 0.0 && run.burn_in < run.horizon)) r.error("run.burn_in", "must be in [0, horizon)");
  if (run.threads < 1) r.error("run.threads", "must be >= 1");
  const double gamma0 = std::norm(c.model.alpha1) + std::norm(c.model.alpha2) + std::norm(c.model.beta) * c.model.lambda;
  if (!(gamma0 > 0.0)) r.error("model", "mode width |alpha1|^2 + |alpha2|^2 + lambda |beta|^2 must be > 0");
  if (run.dt > 0.0 && run.dt * std::max(c.model.lambda, gamma0) > 0.01 + 1e-12)
    r.error("run.dt", "dt * max(lambda, gamma0) must be <= 0.01");
  if (!r.errors.empty()) throw ConfigError(std::move(r.errors));
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using detail::complex_json;
  using nlohmann::json;
  const auto& p = c.model;
  json m{{"nu0", p.nu0},
         {"alpha1", complex_json(p.alpha1)},
         {"alpha2", complex_json(p.alpha2)},
         {"beta", complex_json(p.beta)},
         {"lambda", p.lambda},
         {"xi0", complex_json(p.xi0)},
         {"laser", {{"g", complex_json(p.laser.g)}, {"nu3", p.laser.nu3}, {"epsilon", p.laser.epsilon}}}};
  if (const auto* h = std::get_if<HeterodyneLO>(&p.lo))
    m["local_oscillator"] = {{"kind", "heterodyne"}, {"nu", h->nu}, {"kappa", h->kappa}, {"vartheta", h->vartheta}};
  else {
    const auto& o = std::get<HomodyneLO>(p.lo);
    m["local_oscillator"] = {{"kind", "homodyne"}, {"theta", o.theta}, {"delay", o.delay}};
  }
  json chans = json::array();
  for (const auto& ch : p.channels) {
    json k;
    if (std::holds_alternative<WhiteKernel>(ch.kernel)) {
      k = {{"kind", "white"}};
    } else if (const auto* e = std::get_if<ExponentialKernel>(&ch.kernel)) {
      k = {{"kind", "exponential"}, {"g", complex_json(e->g)}, {"gamma", e->gamma}, {"nu", e->nu}};
    } else {
      const auto& t = std::get<TabulatedKernel>(ch.kernel);
      json vals = json::array();
      for (cplx v : t.values) vals.push_back(complex_json(v));
      k = {{"kind", "tabulated"}, {"times", t.times}, {"values", vals}, {"window", t.window}};
    }
    chans.push_back({{"b", complex_json(ch.b)}, {"kernel", k}});
  }
  m["channels"] = chans;

  const auto& r = c.run;
  json run{{"trajectories", r.trajectories}, {"horizon", r.horizon}, {"dt", r.dt},
           {"burn_in", r.burn_in},           {"seed", r.seed},       {"threads", r.threads},
           {"mode", r.mode == Mode::physical ? "physical" : "reference"}};

  const auto& d = c.detection;
  json f;
  if (const auto* e = std::get_if<ExponentialResponse>(&d.filter.kind))
    f = {{"kind", "exponential"}, {"Gamma", e->Gamma}};
  else {
    const auto& t = std::get<TabulatedResponse>(d.filter.kind);
    f = {{"kind", "tabulated"}, {"times", t.times}, {"values", t.values}};
  }
  f["normalization"] = d.filter.normalization;
  json det{{"filter", f},
           {"spectrum", {{"segment", d.spectrum.segment}, {"overlap", d.spectrum.overlap}}},
           {"counting_windows", d.counting_windows},
           {"oracle_mu", d.oracle_mu},
           {"gamma_time_units", d.gamma_time_units}};
  return json{{"model", m}, {"run", run}, {"detection", det}, {"command", to_string(c.command)}};
}

// Canonical text: sorted keys, shortest round-trip doubles.
inline std::string serialize_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

// FNV-1a over the canonical serialization, with the thread count excluded
// because it does not change results.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  auto j = to_json(c);
  j["run"].erase("threads");
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace qtraj
