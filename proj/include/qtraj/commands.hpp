#pragma once

// Command orchestration behind the CLI: runs an ExperimentConfig and writes
// CSV artifacts plus a run manifest into an output directory. Every CSV has
// a header row naming columns and units. Output bytes depend only on the
// config and seed, never on the worker count.

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qtraj/acceptance.hpp"
#include "qtraj/config.hpp"
#include "qtraj/detection.hpp"
#include "qtraj/oracle.hpp"
#include "qtraj/oscillator.hpp"
#include "qtraj/parallel.hpp"

#ifndef QTRAJ_VERSION
#define QTRAJ_VERSION "0.0.0"
#endif

namespace qtraj {

inline constexpr const char* kCsvSchemaVersion = "1";

struct RunSummary {
  int exit_code = 0;
  std::vector<std::string> outputs;  // file names relative to the output dir
  std::vector<CriterionResult> criteria;
};

namespace cmd {

namespace fs = std::filesystem;

inline std::string num(double x) {
  if (std::isnan(x)) return "";
  char b[32];
  std::snprintf(b, sizeof b, "%.17g", x);
  return b;
}

class Csv {
 public:
  Csv(const fs::path& dir, const std::string& name, std::vector<std::string> header, RunSummary& s)
      : out_(dir / name), width_(header.size()) {
    if (!out_) throw InvalidArgument("cannot write " + (dir / name).string());
    s.outputs.push_back(name);
    row_strings(header);
  }
  void row(const std::vector<double>& v) {
    std::vector<std::string> s;
    for (double x : v) s.push_back(num(x));
    row_strings(s);
  }
  void row_strings(const std::vector<std::string>& v) {
    if (v.size() != width_) throw InvalidArgument("csv row width mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) out_ << (i ? "," : "") << v[i];
    out_ << "\n";
  }

 private:
  std::ofstream out_;
  std::size_t width_;
};

struct Units {
  double time_scale = 1.0;  // multiply raw times by this
  std::string time_unit, freq_unit;
  std::string time() const { return "time[" + time_unit + "]"; }
  std::string freq() const { return "mu[" + freq_unit + "]"; }
};

inline Units units(const ExperimentConfig& c, const OscillatorModel& m) {
  if (c.detection.gamma_time_units) return {m.gamma0, "1/gamma0", "gamma0"};
  return {1.0, "raw", "rad/time"};
}

// Simple SVG line plot; optional post-processing only.
inline void svg_plot(const fs::path& file, const std::string& title, const std::vector<double>& x,
                     const std::vector<std::vector<double>>& ys, const std::vector<std::string>& labels) {
  const double W = 640, H = 400, pad = 50;
  double x0 = x.front(), x1 = x.back(), y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
  for (const auto& y : ys)
    for (double v : y)
      if (std::isfinite(v)) {
        y0 = std::min(y0, v);
        y1 = std::max(y1, v);
      }
  if (!(y1 > y0)) y1 = y0 + 1.0;
  if (!(x1 > x0)) x1 = x0 + 1.0;
  std::ofstream o(file);
  o << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n"
    << "<rect width='100%' height='100%' fill='white'/>\n"
    << "<text x='" << pad << "' y='20' font-family='sans-serif' font-size='14'>" << title << "</text>\n"
    << "<text x='" << pad << "' y='" << H - 10 << "' font-family='sans-serif' font-size='11'>x: " << num(x0)
    << " .. " << num(x1) << "   y: " << num(y0) << " .. " << num(y1) << "</text>\n";
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  for (std::size_t k = 0; k < ys.size(); ++k) {
    o << "<polyline fill='none' stroke-width='1' stroke='" << colors[k % 4] << "' points='";
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(ys[k][i])) continue;
      o << pad + (W - 2 * pad) * (x[i] - x0) / (x1 - x0) << "," << H - pad - (H - 2 * pad) * (ys[k][i] - y0) / (y1 - y0)
        << " ";
    }
    o << "'/>\n<text x='" << W - 150 << "' y='" << 20 + 15 * k << "' fill='" << colors[k % 4]
      << "' font-family='sans-serif' font-size='12'>" << labels[k] << "</text>\n";
  }
  o << "</svg>\n";
}

inline void plot(bool enabled, const fs::path& dir, const std::string& name, const std::string& title,
                 const std::vector<double>& x, const std::vector<std::vector<double>>& ys,
                 const std::vector<std::string>& labels, RunSummary& s) {
  if (!enabled || x.size() < 2) return;
  svg_plot(dir / name, title, x, ys, labels);
  s.outputs.push_back(name);
}

// --------------------------------------------------------------------------

inline void simulate(const ExperimentConfig& c, const OscillatorModel& m, const fs::path& dir, bool plots,
                     RunSummary& s) {
  const auto& r = c.run;
  const auto u = units(c, m);
  struct Traj {
    TrajectoryRecord rec;
    std::vector<double> I, J;
  };
  const auto trajs = parallel_map(r.trajectories, r.threads, [&](std::size_t k) {
    TrajectoryOptions o;
    o.dt = r.dt;
    o.store_path = true;
    Traj t{simulate_trajectory(m, r.horizon, r.mode, r.seed, k, o), {}, {}};
    t.I = filter_increments(t.rec.dB1_out, r.dt, c.detection.filter);
    t.J = filter_counts(t.rec.jump_times, c.detection.filter, t.rec.times);
    return t;
  });
  Csv paths(dir, "paths.csv",
            {"trajectory", u.time(), "re_xi", "im_xi", "m1", "m2", "intensity_j[1/time]", "log_weight", "current_I",
             "current_J[1/time]"},
            s);
  Csv summary(dir, "trajectories.csv", {"trajectory", "counts_N", "log_weight", "weight", "truncation_warning"}, s);
  Csv jumps(dir, "jumps.csv", {"trajectory", u.time()}, s);
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    const auto& t = trajs[k];
    const auto kk = static_cast<double>(k);
    for (std::size_t i = 0; i < t.rec.times.size(); ++i)
      paths.row({kk, t.rec.times[i] * u.time_scale, t.rec.xi[i].real(), t.rec.xi[i].imag(), t.rec.m1[i], t.rec.m2[i],
                 t.rec.j[i], t.rec.log_weight[i], t.I[i], t.J[i]});
    summary.row({kk, static_cast<double>(t.rec.final.N), t.rec.final.log_weight(), t.rec.final.weight(),
                 t.rec.truncation_warning ? 1.0 : 0.0});
    for (double tj : t.rec.jump_times) jumps.row({kk, tj * u.time_scale});
  }
  if (!trajs.empty()) {
    std::vector<double> x;
    for (double t : trajs[0].rec.times) x.push_back(t * u.time_scale);
    plot(plots, dir, "paths.svg", "trajectory 0", x, {trajs[0].rec.m1, trajs[0].I}, {"m1", "I"}, s);
  }
}

inline void counting(const ExperimentConfig& c, const OscillatorModel& m, const fs::path& dir, bool plots,
                     RunSummary& s) {
  const auto& r = c.run;
  const auto u = units(c, m);
  auto windows = c.detection.counting_windows;
  std::erase_if(windows, [&](double t) { return r.burn_in + t > r.horizon + 1e-12; });
  if (windows.empty()) throw InvalidConfiguration("counting: no window fits between burn_in and horizon");
  struct Row {
    std::vector<double> counts;
    double weight;
  };
  const auto rows = parallel_map(r.trajectories, r.threads, [&](std::size_t k) {
    TrajectoryOptions o;
    o.dt = r.dt;
    const auto rec = simulate_trajectory(m, r.horizon, r.mode, r.seed, k, o);
    Row row{{}, rec.final.weight()};
    for (double t : windows) row.counts.push_back(count_in_window(rec.jump_times, r.burn_in, r.burn_in + t));
    return row;
  });
  std::vector<double> weights;
  for (const auto& row : rows) weights.push_back(row.weight);
  const bool weighted = r.mode == Mode::reference;
  const bool have_oracle = m.p.laser.g == cplx(0.0) && !m.p.channels.empty() && m.p.lambda > 0.0;
  Csv out(dir, "counting.csv",
          {"t0[" + u.time_unit + "]", "window_t[" + u.time_unit + "]", "mean_count", "variance", "Q", "Q_se",
           "samples", "Q_oracle"},
          s);
  std::vector<double> xs, qs, qo;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    std::vector<double> counts;
    for (const auto& row : rows) counts.push_back(row.counts[w]);
    CountingStats st;
    try {
      st = estimate_counting(counts, r.burn_in, windows[w], weighted ? &weights : nullptr);
    } catch (const NumericalDegeneracy&) {
      // too few counts for Q: report the moments and leave Q blank
      double sw = 0.0, sx = 0.0, sx2 = 0.0;
      for (std::size_t i = 0; i < counts.size(); ++i) {
        const double wi = weighted ? weights[i] : 1.0;
        sw += wi;
        sx += wi * counts[i];
        sx2 += wi * counts[i] * counts[i];
      }
      st.mean = sx / sw;
      st.variance = sx2 / sw - st.mean * st.mean;
      st.Q = st.Q_se = std::nan("");
      st.samples = counts.size();
    }
    double oracle = std::nan("");
    if (have_oracle) {
      try {
        oracle = mandel_Q(m, windows[w], Route::closed_form);
      } catch (const UnsupportedConfiguration&) {
        oracle = mandel_Q(m, windows[w], Route::quadrature);
      }
    }
    out.row({r.burn_in * u.time_scale, windows[w] * u.time_scale, st.mean, st.variance, st.Q, st.Q_se,
             static_cast<double>(st.samples), oracle});
    xs.push_back(windows[w] * u.time_scale);
    qs.push_back(st.Q);
    qo.push_back(oracle);
  }
  plot(plots, dir, "counting.svg", "Mandel Q", xs, {qs, qo}, {"estimate", "oracle"}, s);
}

// Oracle spectrum for the configured detection scheme, when one exists.
inline std::optional<SignalSpectrum> oracle_spectrum(const OscillatorModel& m, const std::vector<double>& mu,
                                                     const ResponseFilter& F) {
  if (std::holds_alternative<HeterodyneLO>(m.p.lo)) return heterodyne_spectrum(m, mu, false, F);
  const auto& hom = std::get<HomodyneLO>(m.p.lo);
  if (hom.delay == 0.0) return homodyne_spectrum(m, mu, HomodyneRegime::balanced, F);
  // the delayed laser decorrelates once epsilon * delay is large
  if (m.p.laser.epsilon * hom.delay >= 30.0) return homodyne_spectrum(m, mu, HomodyneRegime::delay_infinite, F);
  return std::nullopt;
}

inline void spectrum(const ExperimentConfig& c, const OscillatorModel& m, const fs::path& dir, bool plots,
                     RunSummary& s) {
  const auto& r = c.run;
  const auto u = units(c, m);
  const double record = r.horizon - r.burn_in;
  if (static_cast<double>(c.detection.spectrum.segment) * r.dt > record + 1e-9)
    throw InvalidConfiguration("spectrum: segment * dt exceeds horizon - burn_in");
  if (r.trajectories < 2) throw InvalidConfiguration("spectrum: needs at least two trajectories");
  const auto est = accept::streamed_spectrum(r.trajectories, r.threads, r.dt, c.detection.spectrum, [&](std::size_t k) {
    return accept::current_record(m, c.detection.filter, r.burn_in, record, r.dt, r.seed, k);
  });
  const auto o = oracle_spectrum(m, est.mu, c.detection.filter);
  const double f = 1.0 / u.time_scale;  // angular frequency scale
  Csv out(dir, "spectrum.csv", {u.freq(), "S_I[norm]", "S_I_se[norm]", "G_I_squared[1]", "S_I_oracle[norm]"}, s);
  std::vector<double> x, y, yo;
  for (std::size_t i = 0; i < est.mu.size(); ++i) {
    const double g2 = std::norm(transfer_function(c.detection.filter, est.mu[i]));
    const double so = o ? o->S_I[i] : std::nan("");
    out.row({est.mu[i] * f, est.power[i], est.se[i], g2, so});
    x.push_back(est.mu[i] * f);
    y.push_back(est.power[i]);
    yo.push_back(so);
  }
  Csv sum(dir, "spectrum_summary.csv",
          {"segments", "segment_samples", "window", "spike_weight[norm/time]", "spike_weight_se[norm/time]",
           "spike_weight_oracle[norm/time]"},
          s);
  sum.row_strings({std::to_string(est.segments), std::to_string(c.detection.spectrum.segment), est.window,
                   num(est.spike_weight), num(est.spike_weight_se), num(o ? o->spike_weight_I : std::nan(""))});
  plot(plots, dir, "spectrum.svg", "S_I", x, {y, yo}, {"estimate", "oracle"}, s);
}

inline std::vector<double> default_oracle_grid(const ExperimentConfig& c, const OscillatorModel& m) {
  if (!c.detection.oracle_mu.empty()) return c.detection.oracle_mu;
  double centre = 0.0;
  if (const auto* h = std::get_if<HeterodyneLO>(&m.p.lo)) centre = std::abs(m.p.nu0 - h->nu);
  else centre = std::abs(m.p.nu0 - m.p.laser.nu3);
  const double span = centre + 10.0 * m.gamma0;
  std::vector<double> g;
  for (int i = 0; i <= 2000; ++i) g.push_back(-span + 2 * span * i / 2000.0);
  return g;
}

inline void oracle(const ExperimentConfig& c, const OscillatorModel& m, const fs::path& dir, bool plots,
                   RunSummary& s) {
  const auto u = units(c, m);
  const auto L = lambda_total(m);
  Csv lam(dir, "oracle_lambda.csv", {"component", "Lambda[photons]", "white_bath_n[photons]", "white_bath_abs_m[1]"},
          s);
  const std::string n = m.white ? num(m.white->n) : "", am = m.white ? num(std::abs(m.white->m)) : "";
  lam.row_strings({"laser", num(L.laser), "", ""});
  for (std::size_t j = 0; j < L.channels.size(); ++j)
    lam.row_strings({"channel_" + std::to_string(j), num(L.channels[j]), "", ""});
  lam.row_strings({"total", num(L.total), n, am});
  Csv rate(dir, "oracle_rates.csv", {"quantity", "value", "unit"}, s);
  rate.row_strings({"gamma0", num(m.gamma0), "1/time"});
  rate.row_strings({"count_rate", num(m.p.lambda * std::norm(m.p.beta) * L.total), "1/time"});

  const auto mu = default_oracle_grid(c, m);
  const auto o = oracle_spectrum(m, mu, c.detection.filter);
  if (o) {
    const double f = 1.0 / u.time_scale;
    Csv sp(dir, "oracle_spectrum.csv",
           {u.freq(), "S_m_laser[norm]", "S_m_environment[norm]", "S_m[norm]", "S_I[norm]"}, s);
    std::vector<double> x;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      sp.row({mu[i] * f, o->laser_part[i], o->env_part[i], o->S_m[i], o->S_I[i]});
      x.push_back(mu[i] * f);
    }
    Csv spike(dir, "oracle_spike.csv", {"spike_weight_S_m[norm/time]", "spike_weight_S_I[norm/time]"}, s);
    spike.row({o->spike_weight_m, o->spike_weight_I});
    plot(plots, dir, "oracle_spectrum.svg", "oracle S_m", x, {o->S_m}, {"S_m"}, s);
  }
  if (m.p.laser.g == cplx(0.0) && !m.p.channels.empty() && m.p.lambda > 0.0) {
    Csv q(dir, "oracle_mandel_q.csv", {"window_t[" + u.time_unit + "]", "Q"}, s);
    for (double t : c.detection.counting_windows) {
      double v;
      try {
        v = mandel_Q(m, t, Route::closed_form);
      } catch (const UnsupportedConfiguration&) {
        v = mandel_Q(m, t, Route::quadrature);
      }
      q.row({t * u.time_scale, v});
    }
  }
}

inline void validate(const ExperimentConfig& c, const fs::path& dir, RunSummary& s) {
  AcceptanceOptions opt;
  opt.seed = c.run.seed;
  opt.threads = c.run.threads;
  s.criteria = run_acceptance(opt, [](const CriterionResult& r) { std::printf("%s\n", format_result(r).c_str()); });
  Csv out(dir, "validation.csv", {"criterion", "name", "pass", "seconds", "detail"}, s);
  for (const auto& r : s.criteria) {
    std::string d = r.detail;
    std::replace(d.begin(), d.end(), ',', ';');
    out.row_strings({std::to_string(r.id), r.name, r.pass ? "1" : "0", num(r.seconds), "\"" + d + "\""});
    if (!r.pass) s.exit_code = 1;
  }
}

inline void write_manifest(const ExperimentConfig& c, Command command, const fs::path& dir, double wall,
                           RunSummary& s) {
  nlohmann::json j;
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(c)));
  j["config_hash"] = hash;
  j["seed"] = c.run.seed;
  j["code_version"] = QTRAJ_VERSION;
  j["csv_schema"] = kCsvSchemaVersion;
  j["command"] = to_string(command);
  j["wall_time_s"] = wall;
  j["outputs"] = s.outputs;
  j["exit_code"] = s.exit_code;
  nlohmann::json crit = nlohmann::json::array();
  for (const auto& r : s.criteria) crit.push_back({{"criterion", r.id}, {"name", r.name}, {"pass", r.pass}});
  j["criteria"] = crit;
  std::ofstream(dir / "manifest.json") << j.dump(2) << "\n";
  std::ofstream(dir / "config.json") << serialize_config(c);
}

}  // namespace cmd

// Runs `command` on a validated config, writing artifacts to `out_dir`.
// Returns the summary; exit_code is nonzero if a validation criterion failed.
inline RunSummary run_command(Command command, const ExperimentConfig& c, const std::filesystem::path& out_dir,
                              bool plots = false) {
  std::filesystem::create_directories(out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  RunSummary s;
  const auto m = derive_params(c.model);
  switch (command) {
    case Command::simulate: cmd::simulate(c, m, out_dir, plots, s); break;
    case Command::counting: cmd::counting(c, m, out_dir, plots, s); break;
    case Command::spectrum: cmd::spectrum(c, m, out_dir, plots, s); break;
    case Command::oracle: cmd::oracle(c, m, out_dir, plots, s); break;
    case Command::validate: cmd::validate(c, out_dir, s); break;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  cmd::write_manifest(c, command, out_dir, wall, s);
  return s;
}

}  // namespace qtraj
