#pragma once

// Detector post-processing: response-filtered currents, photocount
// statistics and Welch spectra of sampled currents.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qtraj/errors.hpp"
#include "qtraj/fock.hpp"
#include "qtraj/numerics.hpp"

namespace qtraj {

// ---------------------------------------------------------------------------
// Response filters

struct ExponentialResponse {
  double Gamma = 1.0;
};

struct TabulatedResponse {
  std::vector<double> times;   // increasing, times[0] >= 0
  std::vector<double> values;  // zero beyond the last time
};

struct ResponseFilter {
  std::variant<ExponentialResponse, TabulatedResponse> kind = ExponentialResponse{};
  double normalization = 1.0;

  double operator()(double t) const {
    if (t < 0.0) return 0.0;
    if (const auto* e = std::get_if<ExponentialResponse>(&kind)) return normalization * e->Gamma * std::exp(-e->Gamma * t);
    const auto& tab = std::get<TabulatedResponse>(kind);
    if (t < tab.times.front() || t > tab.times.back()) return 0.0;
    const auto it = std::upper_bound(tab.times.begin(), tab.times.end(), t);
    if (it == tab.times.end()) return normalization * tab.values.back();
    const auto k = static_cast<std::size_t>(it - tab.times.begin());
    const double u = (t - tab.times[k - 1]) / (tab.times[k] - tab.times[k - 1]);
    return normalization * ((1 - u) * tab.values[k - 1] + u * tab.values[k]);
  }
};

inline void validate_filter(const ResponseFilter& f) {
  if (!std::isfinite(f.normalization)) throw InvalidConfiguration("filter normalization must be finite");
  if (const auto* e = std::get_if<ExponentialResponse>(&f.kind)) {
    if (!(e->Gamma > 0.0)) throw InvalidConfiguration("filter Gamma must be > 0");
    return;
  }
  const auto& t = std::get<TabulatedResponse>(f.kind);
  if (t.times.size() < 2 || t.times.size() != t.values.size())
    throw InvalidConfiguration("tabulated filter needs matching times/values with at least 2 points");
  if (t.times.front() < 0.0) throw InvalidConfiguration("tabulated filter must be causal");
  for (std::size_t i = 1; i < t.times.size(); ++i)
    if (!(t.times[i] > t.times[i - 1])) throw InvalidConfiguration("tabulated filter times must increase");
}

// G(mu) = int_0^inf e^{i mu t} F(t) dt
inline cplx transfer_function(const ResponseFilter& f, double mu) {
  if (const auto* e = std::get_if<ExponentialResponse>(&f.kind))
    return f.normalization * e->Gamma / cplx(e->Gamma, -mu);
  const auto& t = std::get<TabulatedResponse>(f.kind);
  const std::vector<cplx> c(t.values.begin(), t.values.end());
  return f.normalization * piecewise_linear_laplace(t.times, c, cplx(0.0, -mu));
}

// J(t_k) = sum over events before t_k of F(t_k - t_event); grid increasing.
inline std::vector<double> filter_counts(const std::vector<double>& event_times, const ResponseFilter& f,
                                         const std::vector<double>& grid) {
  validate_filter(f);
  std::vector<double> ev(event_times);
  std::sort(ev.begin(), ev.end());
  std::vector<double> out(grid.size(), 0.0);
  if (const auto* e = std::get_if<ExponentialResponse>(&f.kind)) {
    double acc = 0.0, t_prev = grid.empty() ? 0.0 : grid.front();
    std::size_t i = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      acc *= std::exp(-e->Gamma * (grid[k] - t_prev));
      for (; i < ev.size() && ev[i] < grid[k]; ++i) acc += f(grid[k] - ev[i]);
      out[k] = acc;
      t_prev = grid[k];
    }
    return out;
  }
  const double support = std::get<TabulatedResponse>(f.kind).times.back();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    auto lo = std::lower_bound(ev.begin(), ev.end(), grid[k] - support);
    for (auto it = lo; it != ev.end() && *it < grid[k]; ++it) out[k] += f(grid[k] - *it);
  }
  return out;
}

// I(t_n) = int F(t_n - r) dB(r) on the uniform grid t_n = n dt, n = 0..size.
// dB[k] is the increment over [k dt, (k+1) dt]; the kernel is evaluated at
// the step midpoint.
inline std::vector<double> filter_increments(const std::vector<double>& dB, double dt, const ResponseFilter& f) {
  validate_filter(f);
  if (!(dt > 0.0)) throw InvalidArgument("filter_increments: dt must be > 0");
  std::vector<double> out(dB.size() + 1, 0.0);
  if (const auto* e = std::get_if<ExponentialResponse>(&f.kind)) {
    const double decay = std::exp(-e->Gamma * dt), gain = f(0.5 * dt);
    for (std::size_t n = 0; n < dB.size(); ++n) out[n + 1] = decay * out[n] + gain * dB[n];
    return out;
  }
  const double support = std::get<TabulatedResponse>(f.kind).times.back();
  const auto L = static_cast<std::size_t>(std::ceil(support / dt)) + 1;
  std::vector<double> w(L);
  for (std::size_t j = 0; j < L; ++j) w[j] = f((static_cast<double>(j) + 0.5) * dt);
  for (std::size_t n = 1; n <= dB.size(); ++n) {
    double s = 0.0;
    for (std::size_t j = 0; j < std::min(L, n); ++j) s += w[j] * dB[n - 1 - j];
    out[n] = s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Counting statistics

inline double count_in_window(const std::vector<double>& jump_times, double t0, double t1) {
  return static_cast<double>(std::count_if(jump_times.begin(), jump_times.end(),
                                           [&](double t) { return t > t0 && t <= t1; }));
}

struct CountingStats {
  double t0 = 0.0, t = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  double Q = 0.0;
  double Q_se = 0.0;
  std::size_t samples = 0;
};

namespace detail {

struct WeightedSums {
  double w = 0, wx = 0, wx2 = 0;
  double Q() const {
    const double m = wx / w;
    if (!(m > 0.0)) throw NumericalDegeneracy("Mandel Q undefined: zero mean count");
    return (wx2 / w - m * m) / m - 1.0;
  }
};

}  // namespace detail

// Q = Var[N]/E[N] - 1 over the window counts; with weights the moments are
// the self-normalized E_Q[p X] / E_Q[p]. SE by leave-one-out jackknife.
inline CountingStats estimate_counting(const std::vector<double>& counts, double t0, double t,
                                       const std::vector<double>* weights = nullptr) {
  const std::size_t n = counts.size();
  if (n < 2) throw InvalidArgument("estimate_counting: need at least two samples");
  if (weights && weights->size() != n) throw InvalidArgument("estimate_counting: weight count mismatch");
  detail::WeightedSums all;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights ? (*weights)[i] : 1.0;
    all.w += w;
    all.wx += w * counts[i];
    all.wx2 += w * counts[i] * counts[i];
  }
  CountingStats s;
  s.t0 = t0;
  s.t = t;
  s.samples = n;
  s.mean = all.wx / all.w;
  s.variance = all.wx2 / all.w - s.mean * s.mean;
  s.Q = all.Q();
  std::vector<double> loo(n);
  double loo_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights ? (*weights)[i] : 1.0;
    detail::WeightedSums r{all.w - w, all.wx - w * counts[i], all.wx2 - w * counts[i] * counts[i]};
    loo[i] = r.Q();
    loo_mean += loo[i] / static_cast<double>(n);
  }
  double ss = 0.0;
  for (double q : loo) ss += (q - loo_mean) * (q - loo_mean);
  s.Q_se = std::sqrt(ss * static_cast<double>(n - 1) / static_cast<double>(n));
  return s;
}

// ---------------------------------------------------------------------------
// Spectra

struct SpectrumConfig {
  std::size_t segment = 1024;  // samples per segment
  double overlap = 0.5;
};

struct SpectrumEstimate {
  std::vector<double> mu;  // ascending angular frequencies
  std::vector<double> power;
  std::vector<double> se;
  std::size_t segments = 0;      // total over all records
  std::string window = "hann";
  double spike_weight = 0.0;     // estimated weight of a delta at mu = 0
  double spike_weight_se = 0.0;
  std::size_t zero_bin = 0;      // index of mu = 0 in the arrays
};

namespace detail {

class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n) {
    in_ = fftw_alloc_complex(n);
    out_ = fftw_alloc_complex(n);
    plan_ = fftw_plan_dft_1d(static_cast<int>(n), in_, out_, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~FftPlan() {
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  fftw_complex* in() { return in_; }
  const fftw_complex* out() const { return out_; }
  void run() { fftw_execute(plan_); }

 private:
  std::size_t n_;
  fftw_complex *in_, *out_;
  fftw_plan plan_;
};

// bins +-1 around zero minus the level of bins +-2..4
inline double spike_weight_of(const std::vector<double>& p, std::size_t zero, double dmu) {
  double ref = 0.0;
  for (int k = 2; k <= 4; ++k) ref += p[zero + k] + p[zero - k];
  ref /= 6.0;
  double w = 0.0;
  for (int k = -1; k <= 1; ++k) w += p[zero + k] - ref;
  return dmu * w;
}

}  // namespace detail

// Averaged periodogram (dt / (L U)) |sum_n w_n x_n e^{i mu t_n}|^2 with a
// periodic Hann window and U = mean(w^2). Each record contributes the mean
// over its segments; SE is across records. Records are consumed one at a
// time so long ensembles need not be held in memory.
class WelchAccumulator {
 public:
  WelchAccumulator(double dt, const SpectrumConfig& cfg) : dt_(dt), L_(cfg.segment) {
    if (!(dt > 0.0)) throw InvalidArgument("estimate_spectrum: dt must be > 0");
    if (L_ < 16) throw InvalidArgument("estimate_spectrum: segment must have at least 16 samples");
    if (!(cfg.overlap >= 0.0 && cfg.overlap < 1.0)) throw InvalidArgument("estimate_spectrum: overlap in [0, 1)");
    hop_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(L_) * (1.0 - cfg.overlap))));
    w_.resize(L_);
    double U = 0.0;
    for (std::size_t n = 0; n < L_; ++n) {
      w_[n] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(L_)));
      U += w_[n] * w_[n];
    }
    U /= static_cast<double>(L_);
    scale_ = dt / (static_cast<double>(L_) * U);
    plan_ = std::make_unique<detail::FftPlan>(L_);
    sum_.assign(L_, 0.0);
    sum2_.assign(L_, 0.0);
    rec_.assign(L_, 0.0);
  }

  template <class T>
    requires std::same_as<T, double> || std::same_as<T, cplx>
  void add(const std::vector<T>& x) {
    if (x.size() < L_) throw InvalidArgument("estimate_spectrum: segment longer than record");
    std::fill(rec_.begin(), rec_.end(), 0.0);
    const std::size_t half = L_ / 2;
    std::size_t nseg = 0;
    for (std::size_t start = 0; start + L_ <= x.size(); start += hop_, ++nseg) {
      for (std::size_t n = 0; n < L_; ++n) {
        const cplx v = w_[n] * cplx(x[start + n]);
        plan_->in()[n][0] = v.real();
        plan_->in()[n][1] = v.imag();
      }
      plan_->run();
      for (std::size_t k = 0; k < L_; ++k) {
        const double re = plan_->out()[k][0], im = plan_->out()[k][1];
        rec_[(k + half) % L_] += scale_ * (re * re + im * im);
      }
    }
    for (auto& v : rec_) v /= static_cast<double>(nseg);
    segments_ += nseg;
    ++records_;
    for (std::size_t i = 0; i < L_; ++i) {
      sum_[i] += rec_[i];
      sum2_[i] += rec_[i] * rec_[i];
    }
    const double sw = detail::spike_weight_of(rec_, half, dmu());
    spike_ += sw;
    spike2_ += sw * sw;
  }

  double dmu() const { return 2.0 * std::numbers::pi / (static_cast<double>(L_) * dt_); }

  SpectrumEstimate result() const {
    if (records_ < 2) throw InvalidArgument("estimate_spectrum: need at least two records");
    SpectrumEstimate est;
    const std::size_t half = L_ / 2;
    est.mu.resize(L_);
    for (std::size_t i = 0; i < L_; ++i) est.mu[i] = (static_cast<double>(i) - static_cast<double>(half)) * dmu();
    est.zero_bin = half;
    est.segments = segments_;
    const double R = static_cast<double>(records_);
    est.power.resize(L_);
    est.se.resize(L_);
    for (std::size_t i = 0; i < L_; ++i) {
      est.power[i] = sum_[i] / R;
      est.se[i] = std::sqrt(std::max(0.0, sum2_[i] / R - est.power[i] * est.power[i]) / (R - 1.0));
    }
    est.spike_weight = spike_ / R;
    est.spike_weight_se = std::sqrt(std::max(0.0, spike2_ / R - est.spike_weight * est.spike_weight) / (R - 1.0));
    return est;
  }

 private:
  double dt_;
  std::size_t L_, hop_ = 1;
  double scale_ = 0.0;
  std::vector<double> w_, sum_, sum2_, rec_;
  std::unique_ptr<detail::FftPlan> plan_;
  std::size_t segments_ = 0, records_ = 0;
  double spike_ = 0.0, spike2_ = 0.0;
};

template <class T>
  requires std::same_as<T, double> || std::same_as<T, cplx>
SpectrumEstimate estimate_spectrum(const std::vector<std::vector<T>>& records, double dt,
                                   const SpectrumConfig& cfg = {}) {
  WelchAccumulator acc(dt, cfg);
  if (records.size() < 2) throw InvalidArgument("estimate_spectrum: need at least two records");
  for (const auto& x : records) acc.add(x);
  return acc.result();
}

}  // namespace qtraj
