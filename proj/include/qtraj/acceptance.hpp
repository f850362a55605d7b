#pragma once

// End-to-end acceptance suite: Monte Carlo runs of the oscillator compared
// against the analytic oracle. Shared by the acceptance test binary and the
// `validate` command of the CLI.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "qtraj/detection.hpp"
#include "qtraj/oracle.hpp"
#include "qtraj/oscillator.hpp"
#include "qtraj/parallel.hpp"

namespace qtraj {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  std::uint64_t seed = 20240601;
  unsigned threads = 1;
  std::vector<int> only;  // empty: all criteria
};

namespace accept {

inline std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct MeanSe {
  double mean = 0.0, se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double m = 0.0;
  for (double v : x) m += v;
  m /= n;
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return {m, std::sqrt(ss / (n - 1) / n)};
}

inline double combined_se(double a, double b) { return std::sqrt(a * a + b * b); }

// gamma0 = 1 with the detection weight split between the two diffusive
// channels and the counter.
inline OscillatorParams unit_width_params(double nu0) {
  OscillatorParams p;
  p.nu0 = nu0;
  p.alpha1 = 0.5;
  p.alpha2 = 0.5;
  p.beta = 1.0;
  p.lambda = 0.5;
  return p;
}

// Martingale / Girsanov / rate configuration.
inline OscillatorModel model_weights() {
  auto p = unit_width_params(1.0);
  p.laser = {0.3, 1.0, 0.05};
  p.channels = {{0.0, ExponentialKernel{0.2, 0.3, 1.0}}};
  return derive_params(p);
}

inline OscillatorModel model_white(cplx b2) {
  auto p = unit_width_params(1.0);
  p.channels = {{0.6, WhiteKernel{}}, {b2, WhiteKernel{}}};
  return derive_params(p);
}

inline OscillatorModel model_gaussian() {
  auto p = unit_width_params(1.0);
  p.channels = {{0.7, WhiteKernel{}}, {0.0, ExponentialKernel{0.3, 0.5, 1.0}}};
  return derive_params(p);
}

inline OscillatorModel model_heterodyne() {
  OscillatorParams p;
  p.nu0 = 10.0;
  p.alpha1 = std::sqrt(0.4);
  p.alpha2 = std::sqrt(0.1);
  p.beta = 1.0;
  p.lambda = 0.5;
  p.laser = {0.5, 10.0, 0.5};
  p.lo = HeterodyneLO{0.0, 0.5, 0.0};
  p.channels = {{0.3, WhiteKernel{}}, {0.0, ExponentialKernel{0.3, 0.5, 10.5}}};
  return derive_params(p);
}

// Resonant homodyne with zero delay; theta chosen so that zeta hits the target.
inline OscillatorModel model_homodyne(double zeta) {
  auto p = unit_width_params(2.0);
  p.laser = {1.0, 2.0, 0.5};
  p.lo = HomodyneLO{0.0, 0.0};
  const auto m0 = derive_params(p);
  p.lo = HomodyneLO{zeta - homodyne_zeta(m0, 0.0), 0.0};
  return derive_params(p);
}

inline OscillatorModel model_weak_drive() {
  auto p = unit_width_params(1.0);
  p.laser = {0.1, 1.0, 0.05};
  p.channels = {{0.0, ExponentialKernel{0.1, 0.3, 1.0}}};
  return derive_params(p);
}

inline OscillatorModel model_noise_sources() {
  auto p = unit_width_params(1.0);
  p.laser = {{0.7, 0.4}, 1.1, 0.3};
  TabulatedKernel tab;
  for (int i = 0; i <= 20; ++i) {
    const double t = 0.1 * i;
    tab.times.push_back(t);
    tab.values.push_back(cplx(0.3, 0.1) * (1.0 - 0.5 * t) * std::exp(cplx(0.0, -2.0 * t)));
  }
  p.channels = {{0.3, WhiteKernel{}}, {0.0, ExponentialKernel{0.4, 0.6, 1.0}}, {0.1, tab}};
  return derive_params(p);
}

// Physical-mode counts in (t0, t0 + t] for each window, one row per trajectory.
inline std::vector<std::vector<double>> window_counts(const OscillatorModel& m, double t0,
                                                      const std::vector<double>& windows, std::size_t n,
                                                      double dt, std::uint64_t seed, unsigned threads) {
  const double horizon = t0 + *std::max_element(windows.begin(), windows.end());
  auto rows = parallel_map(n, threads, [&](std::size_t k) {
    TrajectoryOptions o;
    o.dt = dt;
    const auto r = simulate_trajectory(m, horizon, Mode::physical, seed, k, o);
    std::vector<double> c;
    for (double t : windows) c.push_back(count_in_window(r.jump_times, t0, t0 + t));
    return c;
  });
  std::vector<std::vector<double>> cols(windows.size(), std::vector<double>(n));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t w = 0; w < windows.size(); ++w) cols[w][k] = rows[k][w];
  return cols;
}

// Filtered output current I(t) after burn-in for trajectory k.
inline std::vector<double> current_record(const OscillatorModel& m, const ResponseFilter& F, double burn_in,
                                          double length, double dt, std::uint64_t seed, std::size_t k) {
  std::vector<double> dB;
  TrajectoryOptions o;
  o.dt = dt;
  o.observer = [&](const OscillatorStep& st) { dB.push_back(st.dB1_out); };
  simulate_trajectory(m, burn_in + length, Mode::physical, seed, k, o);
  const auto I = filter_increments(dB, dt, F);
  const auto skip = static_cast<std::ptrdiff_t>(std::llround(burn_in / dt));
  return std::vector<double>(I.begin() + skip + 1, I.end());
}

// Welch estimate over n records produced in parallel batches and consumed in
// index order.
template <class Gen>
SpectrumEstimate streamed_spectrum(std::size_t n, unsigned threads, double dt, const SpectrumConfig& cfg, Gen&& gen) {
  WelchAccumulator acc(dt, cfg);
  const std::size_t batch = 4 * std::max(1u, threads);
  for (std::size_t s = 0; s < n; s += batch) {
    const auto recs = parallel_map(std::min(batch, n - s), threads, [&](std::size_t i) { return gen(s + i); });
    for (const auto& r : recs) acc.add(r);
  }
  return acc.result();
}

// ---------------------------------------------------------------------------

inline std::vector<CriterionResult> martingale_and_girsanov(const AcceptanceOptions& opt) {
  const auto m = model_weights();
  const double T = 20.0 / m.gamma0, dt = 0.01;
  const std::size_t nq = 100000, np = 20000;
  struct Row {
    double p, pN;
  };
  const auto ref = parallel_map(nq, opt.threads, [&](std::size_t k) {
    TrajectoryOptions o;
    o.dt = dt;
    const auto r = simulate_trajectory(m, T, Mode::reference, opt.seed, k, o);
    const double w = r.final.weight();
    return Row{w, w * static_cast<double>(r.final.N)};
  });
  std::vector<double> p, pN;
  for (const auto& r : ref) {
    p.push_back(r.p);
    pN.push_back(r.pN);
  }
  const auto phys = parallel_map(np, opt.threads, [&](std::size_t k) {
    TrajectoryOptions o;
    o.dt = dt;
    return static_cast<double>(simulate_trajectory(m, T, Mode::physical, opt.seed + 1, k, o).final.N);
  });
  const auto P = mean_se(p), QN = mean_se(pN), PN = mean_se(phys);
  const double pmax = *std::max_element(p.begin(), p.end());
  CriterionResult c1{1, "martingale", std::abs(P.mean - 1.0) <= 3.0 * P.se,
                     fmt("E_Q[p(T)] = %.4f +- %.4f over %zu trajectories (max p = %.3g)", P.mean, P.se, nq, pmax)};
  const double se = combined_se(QN.se, PN.se);
  CriterionResult c2{2, "girsanov mode equivalence", std::abs(QN.mean - PN.mean) <= 3.0 * se,
                     fmt("E_Q[p N] = %.4f +- %.4f, E_P[N] = %.4f +- %.4f, |diff| / SE = %.2f", QN.mean, QN.se,
                         PN.mean, PN.se, std::abs(QN.mean - PN.mean) / se)};
  return {c1, c2};
}

inline CriterionResult count_rate(const AcceptanceOptions& opt) {
  const auto m = model_weights();
  const double burn = 20.0, window = 80.0;
  const auto L = lambda_total(m);
  const double L5a = lambda_channel(m, 0, Route::closed_form);
  const double L5b = lambda_channel(m, 0, Route::quadrature);
  const bool dual = std::abs(L5a - L5b) <= 1e-8 * L5a;
  const auto counts = window_counts(m, burn, {window}, 4000, 0.01, opt.seed + 2, opt.threads)[0];
  auto rate = mean_se(counts);
  rate.mean /= window;
  rate.se /= window;
  const double want = m.p.lambda * std::norm(m.p.beta) * L.total;
  return {3, "direct-detection rate", dual && std::abs(rate.mean - want) <= 3.0 * rate.se,
          fmt("rate %.5f +- %.5f vs lambda|beta|^2 Lambda = %.5f; Lambda_5 closed %.12g quadrature %.12g", rate.mean,
              rate.se, want, L5a, L5b)};
}

inline CriterionResult squeezed_reservoir(const AcceptanceOptions& opt) {
  const auto a = model_white(0.6), b = model_white(cplx(0.0, 0.6));
  const double La = lambda_total(a).total, Lb = lambda_total(b).total;
  const bool exact = La == a.white->n && Lb == b.white->n;
  const double burn = 20.0, window = 80.0;
  auto ra = mean_se(window_counts(a, burn, {window}, 4000, 0.01, opt.seed + 3, opt.threads)[0]);
  auto rb = mean_se(window_counts(b, burn, {window}, 4000, 0.01, opt.seed + 4, opt.threads)[0]);
  for (auto* r : {&ra, &rb}) {
    r->mean /= window;
    r->se /= window;
  }
  const double want = a.p.lambda * std::norm(a.p.beta) * a.white->n;
  const bool pass = exact && std::abs(ra.mean - want) <= 3 * ra.se && std::abs(rb.mean - want) <= 3 * rb.se &&
                    std::abs(ra.mean - rb.mean) <= 3 * combined_se(ra.se, rb.se);
  return {4, "squeezed-reservoir identity", pass,
          fmt("n = %.6f, |m| = %.3f vs %.3f; Lambda == n: %s; rates %.5f +- %.5f and %.5f +- %.5f vs %.5f",
              a.white->n, std::abs(a.white->m), std::abs(b.white->m), exact ? "yes" : "no", ra.mean, ra.se,
              rb.mean, rb.se, want)};
}

inline CriterionResult mandel_q(const AcceptanceOptions& opt) {
  const auto m = model_gaussian();
  const double burn = 20.0;
  const std::vector<double> checked{1.0, 5.0, 20.0};
  const std::vector<double> windows{0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0};
  const auto cols = window_counts(m, burn, windows, 20000, 0.01, opt.seed + 5, opt.threads);
  bool pass = mandel_Q(m, 0.0, Route::closed_form) == 0.0;
  std::string detail = fmt("Q(0) = %g;", mandel_Q(m, 0.0, Route::closed_form));
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto s = estimate_counting(cols[w], burn, windows[w]);
    if (s.Q < -3.0 * s.Q_se) pass = false;
    if (std::find(checked.begin(), checked.end(), windows[w]) == checked.end()) continue;
    const double qa = mandel_Q(m, windows[w], Route::closed_form);
    const double qb = mandel_Q(m, windows[w], Route::quadrature);
    if (std::abs(qa - qb) > 1e-7 * qa || std::abs(s.Q - qa) > 3.0 * s.Q_se) pass = false;
    detail += fmt(" t=%g: %.4f +- %.4f vs %.4f;", windows[w], s.Q, s.Q_se, qa);
  }
  return {5, "mandel Q", pass, detail};
}

inline CriterionResult heterodyne(const AcceptanceOptions& opt) {
  const auto m = model_heterodyne();
  const ResponseFilter F{ExponentialResponse{20.0}, 1.0};
  const double dt = 0.01;
  const SpectrumConfig cfg{32768, 0.5};
  const auto est = streamed_spectrum(200, opt.threads, dt, cfg, [&](std::size_t k) {
    return current_record(m, F, 20.0, 1000.0, dt, opt.seed + 6, k);
  });
  const double lo = m.p.nu0 - 5 * m.gamma0, hi = m.p.nu0 + 5 * m.gamma0;
  std::vector<double> mu;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < est.mu.size(); ++i)
    if (est.mu[i] >= lo && est.mu[i] <= hi) {
      mu.push_back(est.mu[i]);
      idx.push_back(i);
    }
  const auto o = heterodyne_spectrum(m, mu, false, F);
  double ss = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) ss += std::pow(est.power[idx[k]] / o.S_I[k] - 1.0, 2);
  const double rms = std::sqrt(ss / static_cast<double>(mu.size()));
  // floor S_I >= |G_I|^2 on every bin; at 3 SE a correct estimator still
  // dips below on about 0.135% of bins, so the count is held to the
  // binomial upper bound for that rate
  std::size_t below = 0;
  for (std::size_t i = 0; i < est.mu.size(); ++i)
    if (est.power[i] < std::norm(transfer_function(F, est.mu[i])) - 3.0 * est.se[i]) ++below;
  const double expect = 0.00135 * static_cast<double>(est.mu.size());
  const auto allowed = static_cast<std::size_t>(std::ceil(expect + 3.0 * std::sqrt(expect)));
  const bool pass = rms <= 0.10 && below <= allowed;
  return {6, "heterodyne spectrum", pass,
          fmt("RMS relative deviation %.4f over %zu bins in [%g, %g] from %zu segments; floor violations %zu of %zu "
              "bins (allowed %zu)",
              rms, mu.size(), lo, hi, est.segments, below, est.mu.size(), allowed)};
}

inline CriterionResult sum_rules(const AcceptanceOptions&) {
  const auto m = model_heterodyne();
  const double kappa = std::get<HeterodyneLO>(m.p.lo).kappa, a1 = std::norm(m.p.alpha1);
  QuadratureControls q;
  std::vector<double> peaks{m.p.nu0, m.p.laser.nu3};
  for (const auto& ch : m.p.channels)
    if (const auto* e = std::get_if<ExponentialKernel>(&ch.kernel)) peaks.push_back(e->nu);
  const double I1 = integrate_real_line([&](double x) { return spectrum_s1(m, x, kappa); }, m.p.nu0, 0.5, peaks, q);
  const double I2 = integrate_real_line([&](double x) { return spectrum_s2(m, x, kappa); }, m.p.nu0, 0.5, peaks, q);
  const double I2b = integrate_real_line(
      [&](double x) { return spectrum_s2(m, x, 0.0, Route::quadrature); }, m.p.nu0, 0.5, peaks, q);
  const auto L = lambda_total(m);
  double Lj = 0.0;
  for (double v : L.channels) Lj += v;
  const double w1 = a1 * L.laser / 2, w2 = a1 * Lj / 2;
  const double e1 = std::abs(I1 / (4 * std::numbers::pi) / w1 - 1);
  const double e2 = std::abs(I2 / (4 * std::numbers::pi) / w2 - 1);
  const double e3 = std::abs(I2b / (4 * std::numbers::pi) / w2 - 1);
  return {7, "spectral sum rules", e1 <= 1e-6 && e2 <= 1e-6 && e3 <= 1e-6,
          fmt("relative errors: laser part %.2e, environment part %.2e (width kappa), %.2e (perfect oscillator)", e1,
              e2, e3)};
}

inline CriterionResult homodyne(const AcceptanceOptions& opt) {
  // oracle: infinite delay against the heterodyne formula at (nu3, epsilon)
  auto het_p = model_heterodyne().p;
  het_p.lo = HeterodyneLO{het_p.laser.nu3, het_p.laser.epsilon, 0.0};
  auto hom_p = het_p;
  hom_p.lo = HomodyneLO{0.7, 1e12};
  std::vector<double> grid;
  for (double x = -15.0; x <= 15.0; x += 0.05) grid.push_back(x);
  const auto a = homodyne_spectrum(derive_params(hom_p), grid, HomodyneRegime::delay_infinite);
  const auto b = heterodyne_spectrum(derive_params(het_p), grid);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) worst = std::max(worst, std::abs(a.S_m[i] / b.S_m[i] - 1));
  bool pass = worst <= 1e-12;
  std::string detail = fmt("delay-infinite vs heterodyne max rel diff %.2e;", worst);

  const ResponseFilter F{ExponentialResponse{20.0}, 1.0};
  const double dt = 0.01;
  const SpectrumConfig cfg{16384, 0.5};
  int tag = 0;
  for (double zeta : {std::numbers::pi / 2, -std::numbers::pi / 2, 0.0}) {
    const auto m = model_homodyne(zeta);
    const std::uint64_t seed = opt.seed + 7 + tag++;
    const auto est = streamed_spectrum(200, opt.threads, dt, cfg, [&](std::size_t k) {
      return current_record(m, F, 20.0, 500.0, dt, seed, k);
    });
    const double want = zeta == 0.0 ? 0.5 * std::numbers::pi * m.gamma0 * homodyne_l(m, 0.0) : 0.0;
    const bool ok = zeta == 0.0 ? std::abs(est.spike_weight - want) <= 0.1 * want
                                : std::abs(est.spike_weight) <= 3.0 * est.spike_weight_se;
    pass = pass && ok;
    detail += fmt(" zeta=%+.3f: spike %.4f +- %.4f vs %.4f;", zeta, est.spike_weight, est.spike_weight_se, want);
  }
  return {8, "homodyne limits", pass, detail};
}

inline CriterionResult cross_validation(const AcceptanceOptions& opt) {
  const auto m = model_weak_drive();
  const double T = 20.0, dt = 0.01;
  const std::size_t paths = 10;
  struct Pair {
    FidelityReport coarse, fine;
  };
  const auto runs = parallel_map(paths, opt.threads, [&](std::size_t k) {
    return Pair{cross_validate_fock(m, T, dt, opt.seed + 10, 32, 2, k),
                cross_validate_fock(m, T, dt / 2, opt.seed + 10, 32, 1, k)};
  });
  // The state error of a first-order scheme scales like dt; the infidelity is
  // its square. Compare the Fubini-Study angle arccos sqrt(F).
  auto angle = [](const FidelityReport& r) { return std::acos(std::sqrt(std::clamp(r.min_fidelity, 0.0, 1.0))); };
  double min_f = 1.0, ac = 0.0, af = 0.0, dc = 0.0, df = 0.0;
  for (const auto& r : runs) {
    min_f = std::min({min_f, r.coarse.min_fidelity, r.fine.min_fidelity});
    ac += angle(r.coarse);
    af += angle(r.fine);
    dc += r.coarse.max_deficit;
    df += r.fine.max_deficit;
  }
  const double ratio = af / ac;
  const bool pass = min_f >= 0.999 && ratio >= 0.4 && ratio <= 0.6;
  return {9, "engine cross-validation", pass,
          fmt("min fidelity %.6f over %zu paths; error angle ratio (dt/2 : dt) %.3f; infidelity ratio %.3f", min_f,
              paths, ratio, df / dc)};
}

inline CriterionResult noise_fidelity(const AcceptanceOptions& opt) {
  const auto m = model_noise_sources();
  const double dt = 0.01;
  const SpectrumConfig cfg{32768, 0.5};
  const std::size_t len = 5 * cfg.segment / 2;
  const auto est = streamed_spectrum(600, opt.threads, dt, cfg, [&](std::size_t k) {
    OscillatorNoise noise(m, dt, opt.seed + 11, k);
    std::vector<cplx> y(len);
    for (auto& v : y) v = noise.next().dY / dt;
    return y;
  });
  double ss = 0.0;
  std::size_t nb = 0;
  for (std::size_t i = 0; i < est.mu.size(); ++i) {
    if (std::abs(est.mu[i]) > 10.0) continue;
    const double s = colored_spectrum(m.p.channels, est.mu[i]);
    ss += std::pow(est.power[i] / s - 1.0, 2);
    ++nb;
  }
  const double rms = std::sqrt(ss / static_cast<double>(nb));

  // laser two-point function at a few lags from a fixed origin
  const double s0 = 2.0;
  const std::vector<double> lags{0.0, 0.5, 1.0, 3.0, 6.0};
  const std::size_t n_paths = 20000;
  const auto s_step = static_cast<std::size_t>(std::llround(s0 / dt));
  const auto last = s_step + static_cast<std::size_t>(std::llround(lags.back() / dt));
  const auto samples = parallel_map(n_paths, opt.threads, [&](std::size_t k) {
    OscillatorNoise noise(m, dt, opt.seed + 12, k);
    std::vector<cplx> f_at;
    cplx f_s{};
    for (std::size_t i = 0; i <= last; ++i) {
      const cplx f = i == 0 ? noise.f() : (noise.next(), noise.f());
      if (i == s_step) f_s = f;
      for (double u : lags)
        if (i == s_step + static_cast<std::size_t>(std::llround(u / dt))) f_at.push_back(f * std::conj(f_s));
    }
    return f_at;
  });
  bool laser_ok = true;
  std::string ldetail;
  for (std::size_t l = 0; l < lags.size(); ++l) {
    std::vector<double> re, im;
    for (const auto& s : samples) {
      re.push_back(s[l].real());
      im.push_back(s[l].imag());
    }
    const auto R = mean_se(re), I = mean_se(im);
    const cplx want = laser_ffbar(m.p.laser, s0 + lags[l], s0);
    const bool ok = std::abs(R.mean - want.real()) <= 3 * R.se + 1e-12 && std::abs(I.mean - want.imag()) <= 3 * I.se + 1e-12;
    laser_ok = laser_ok && ok;
    ldetail += fmt(" u=%g: (%.4f, %.4f) vs (%.4f, %.4f);", lags[l], R.mean, I.mean, want.real(), want.imag());
  }
  return {10, "classical noise fidelity", rms <= 0.05 && laser_ok,
          fmt("S_Y RMS relative deviation %.4f over %zu bins, %zu segments; laser E[f(s+u) conj f(s)]:%s", rms, nb,
              est.segments, ldetail.c_str())};
}

}  // namespace accept

// Runs the selected criteria in order, reporting each through `report` as it
// finishes.
inline std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opt,
                                                   const std::function<void(const CriterionResult&)>& report = {}) {
  using clock = std::chrono::steady_clock;
  auto wanted = [&](int id) { return opt.only.empty() || std::find(opt.only.begin(), opt.only.end(), id) != opt.only.end(); };
  std::vector<CriterionResult> out;
  auto add = [&](CriterionResult r, double secs) {
    r.seconds = secs;
    if (report) report(r);
    out.push_back(std::move(r));
  };
  auto timed = [&](auto&& fn) {
    const auto t0 = clock::now();
    auto r = fn();
    return std::pair(std::move(r), std::chrono::duration<double>(clock::now() - t0).count());
  };
  auto guarded = [&](int id, const char* name, auto&& fn) {
    try {
      auto [r, s] = timed(fn);
      add(std::move(r), s);
    } catch (const std::exception& e) {
      add({id, name, false, std::string("error: ") + e.what()}, 0.0);
    }
  };
  if (wanted(1) || wanted(2)) {
    try {
      auto [rs, s] = timed([&] { return accept::martingale_and_girsanov(opt); });
      for (auto& r : rs)
        if (wanted(r.id)) add(std::move(r), s / 2);
    } catch (const std::exception& e) {
      for (int id : {1, 2})
        if (wanted(id)) add({id, id == 1 ? "martingale" : "girsanov mode equivalence", false, e.what()}, 0.0);
    }
  }
  if (wanted(3)) guarded(3, "direct-detection rate", [&] { return accept::count_rate(opt); });
  if (wanted(4)) guarded(4, "squeezed-reservoir identity", [&] { return accept::squeezed_reservoir(opt); });
  if (wanted(5)) guarded(5, "mandel Q", [&] { return accept::mandel_q(opt); });
  if (wanted(6)) guarded(6, "heterodyne spectrum", [&] { return accept::heterodyne(opt); });
  if (wanted(7)) guarded(7, "spectral sum rules", [&] { return accept::sum_rules(opt); });
  if (wanted(8)) guarded(8, "homodyne limits", [&] { return accept::homodyne(opt); });
  if (wanted(9)) guarded(9, "engine cross-validation", [&] { return accept::cross_validation(opt); });
  if (wanted(10)) guarded(10, "classical noise fidelity", [&] { return accept::noise_fidelity(opt); });
  return out;
}

inline std::string format_result(const CriterionResult& r) {
  return accept::fmt("criterion %2d %-28s %s (%.0f s): ", r.id, r.name.c_str(), r.pass ? "PASS" : "FAIL", r.seconds) +
         r.detail;
}

}  // namespace qtraj
