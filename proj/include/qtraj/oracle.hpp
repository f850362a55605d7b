#pragma once

// Analytic results for the noisy oscillator: mean intensity, Mandel Q,
// autocorrelations of the driving processes, and homodyne/heterodyne spectra.
// Several quantities have two independent evaluation routes so that each can
// be checked against the other.

#include <boost/math/quadrature/ooura_fourier_integrals.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "qtraj/detection.hpp"
#include "qtraj/errors.hpp"
#include "qtraj/oscillator.hpp"

namespace qtraj {

enum class Route { closed_form, quadrature };

// ---------------------------------------------------------------------------
// Laser and local-oscillator moments

inline cplx laser_mean(const LaserParams& p, double t) {
  return p.g * std::exp(cplx(-0.5 * p.epsilon * t, -p.nu3 * t));
}

// E[f(r) conj f(s)]
inline cplx laser_ffbar(const LaserParams& p, double r, double s) {
  return std::norm(p.g) * std::exp(cplx(-0.5 * p.epsilon * std::abs(s - r), p.nu3 * (s - r)));
}

// E[f(r) f(s)]
inline cplx laser_ff(const LaserParams& p, double r, double s) {
  return p.g * p.g * std::exp(-cplx(0.5 * p.epsilon, p.nu3) * (s + r) - p.epsilon * std::min(r, s));
}

// E[conj h(t) h(s)] for the heterodyne oscillator
inline cplx lo_hbar_h(const HeterodyneLO& lo, double t, double s) {
  return std::exp(cplx(-0.5 * lo.kappa * std::abs(t - s), lo.nu * (t - s)));
}

// E[conj h(t) conj h(s)] for the heterodyne oscillator
inline cplx lo_hbar_hbar(const HeterodyneLO& lo, double t, double s) {
  return std::exp(cplx(0.0, -2.0 * lo.vartheta) + cplx(-0.5 * lo.kappa, lo.nu) * (t + s) -
                  lo.kappa * std::min(t, s));
}

// Variance of B(t1) - B(t2) + B(t3) - B(t4) for a standard Wiener process,
// by ordering cases. Ties take the value of a nearby strict ordering, which
// is the limit because the expression is continuous.
inline double delta4(double t1, double t2, double t3, double t4) {
  const std::array<double, 4> t{t1, t2, t3, t4};
  std::array<int, 4> rank{};
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      if (t[b] < t[a] || (t[b] == t[a] && b < a)) ++rank[a];
  auto lt = [&](int a, int b) { return rank[a] < rank[b]; };
  auto below = [&](int a, int b, int c, int d) {  // max(a,b) < min(c,d)
    return std::max(rank[a], rank[b]) < std::min(rank[c], rank[d]);
  };
  auto chain = [&](int a, int b, int c, int d) { return lt(a, b) && lt(b, c) && lt(c, d); };
  const int i1 = 0, i2 = 1, i3 = 2, i4 = 3;
  if (below(i1, i2, i3, i4) || below(i3, i4, i1, i2)) return std::abs(t4 - t3) + std::abs(t2 - t1);
  if (below(i1, i4, i2, i3) || below(i2, i3, i1, i4)) return std::abs(t4 - t1) + std::abs(t3 - t2);
  if (chain(i4, i2, i3, i1) || chain(i1, i3, i2, i4)) return std::abs(t4 - t1) + 3 * std::abs(t3 - t2);
  if (chain(i4, i2, i1, i3) || chain(i3, i1, i2, i4)) return std::abs(t4 - t3) + 3 * std::abs(t2 - t1);
  if (chain(i2, i4, i1, i3) || chain(i3, i1, i4, i2)) return std::abs(t2 - t3) + 3 * std::abs(t4 - t1);
  return std::abs(t2 - t1) + 3 * std::abs(t3 - t4);  // t2<t4<t3<t1 or t1<t3<t4<t2
}

// E[f(r1) conj f(r2) conj h(t) h(s)] with the homodyne oscillator of delay dt
inline cplx homodyne_ffbar_hbar_h(const LaserParams& p, double delay, double r1, double r2, double t, double s) {
  return std::norm(p.g) * std::exp(cplx(-0.5 * p.epsilon * delta4(r1, t - delay, s - delay, r2),
                                        p.nu3 * (t - r1 - s + r2)));
}

// E[f(r1) f(r2) conj h(t) conj h(s)] with the homodyne oscillator
inline cplx homodyne_ff_hbar_hbar(const LaserParams& p, double theta, double delay, double r1, double r2, double t,
                                  double s) {
  return std::norm(p.g) * std::exp(cplx(0.0, -2.0 * theta)) *
         std::exp(cplx(-0.5 * p.epsilon * delta4(r1, t - delay, r2, s - delay),
                       p.nu3 * (t - r1 + s - r2 - 2 * delay)));
}

// ---------------------------------------------------------------------------
// Mean intensity

namespace detail {

inline double channel_density(const OscillatorModel& m, const ColoredChannelSpec& ch, double x) {
  return std::norm(ch.b + kernel_transform(ch.kernel, cplx(0.0, -x))) / std::norm(m.kappa0 + cplx(0.0, x));
}

inline std::vector<double> channel_peaks(const OscillatorModel& m) {
  std::vector<double> b{m.p.nu0};
  for (const auto& ch : m.p.channels)
    if (const auto* e = std::get_if<ExponentialKernel>(&ch.kernel)) b.push_back(e->nu);
  return b;
}

}  // namespace detail

inline double lambda_laser(const OscillatorModel& m) {
  const auto& L = m.p.laser;
  const double dnu = m.p.nu0 - L.nu3, ge = m.gamma0 + L.epsilon;
  return std::norm(m.p.alpha2) * std::norm(L.g) * ge / (m.gamma0 * (0.25 * ge * ge + dnu * dnu));
}

// Contribution of colored channel j. The closed form exists for white
// channels (|b|^2 / gamma0) and for exponential kernels with b = 0.
inline double lambda_channel(const OscillatorModel& m, std::size_t j, Route route,
                             const QuadratureControls& q = {}) {
  if (j >= m.p.channels.size()) throw InvalidArgument("lambda_channel: no such channel");
  const auto& ch = m.p.channels[j];
  if (route == Route::closed_form) {
    if (std::holds_alternative<WhiteKernel>(ch.kernel)) return std::norm(ch.b) / m.gamma0;
    const auto* e = std::get_if<ExponentialKernel>(&ch.kernel);
    if (e && ch.b == cplx(0.0)) {
      return std::norm(e->g) * (m.gamma0 + e->gamma) /
             (m.gamma0 * e->gamma * std::norm(m.kappa0 + e->kappa_bar()));
    }
    throw UnsupportedConfiguration("lambda_channel: no closed form for this channel");
  }
  const double I = integrate_real_line([&](double x) { return detail::channel_density(m, ch, x); }, m.p.nu0,
                                       0.5 * m.gamma0, detail::channel_peaks(m), q);
  return I / (2.0 * std::numbers::pi);
}

struct LambdaBreakdown {
  double total = 0.0;
  double laser = 0.0;
  std::vector<double> channels;
};

inline LambdaBreakdown lambda_total(const OscillatorModel& m, const QuadratureControls& q = {}) {
  LambdaBreakdown b;
  b.laser = lambda_laser(m);
  b.total = b.laser;
  for (std::size_t j = 0; j < m.p.channels.size(); ++j) {
    double v;
    try {
      v = lambda_channel(m, j, Route::closed_form, q);
    } catch (const UnsupportedConfiguration&) {
      v = lambda_channel(m, j, Route::quadrature, q);
    }
    b.channels.push_back(v);
    b.total += v;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Stationary autocorrelations of U_f and U_Y, lag u = t - s >= 0

inline cplx uf_autocorrelation(const OscillatorModel& m, double u) {
  if (u < 0.0) throw InvalidArgument("uf_autocorrelation: lag must be >= 0");
  const auto& L = m.p.laser;
  const cplx k0 = m.kappa0, k0b = std::conj(k0);
  const cplx k3(0.5 * L.epsilon, -L.nu3), k3b = std::conj(k3);
  const cplx e0 = std::exp(-k0b * u), e3 = std::exp(-k3b * u);
  // (e3 - e0) / (k0b - k3b) written to stay finite when the rates coincide
  const cplx mix = u * e0 * expm1_over((k0b - k3b) * u);
  return std::norm(m.p.alpha2) * std::norm(L.g) / m.gamma0 * (e0 / (k0b + k3) + e3 / (k0 + k3b) + mix);
}

struct UyCorrelation {
  cplx with_conj;  // E[U_Y(t) conj U_Y(s)]
  cplx plain;      // E[U_Y(t) U_Y(s)]
};

namespace detail {

// g_j(t) = sum_p c_p e^{-a_p t} for white and exponential kernels
struct ExpSum {
  std::vector<cplx> c, a;
};

inline std::optional<ExpSum> exp_sum(const OscillatorModel& m, const ColoredChannelSpec& ch) {
  const cplx k0b = m.kappa0_bar();
  if (std::holds_alternative<WhiteKernel>(ch.kernel)) return ExpSum{{ch.b}, {k0b}};
  const auto* e = std::get_if<ExponentialKernel>(&ch.kernel);
  if (!e) return std::nullopt;
  const cplx k5b = e->kappa_bar();
  if (std::abs(k0b - k5b) < 1e-8 * std::abs(k0b)) return std::nullopt;
  const cplx B = e->g / (k0b - k5b);
  return ExpSum{{ch.b - B, B}, {k0b, k5b}};
}

inline UyCorrelation uy_closed(const OscillatorModel& m, double u) {
  UyCorrelation r{0.0, 0.0};
  for (const auto& ch : m.p.channels) {
    const auto s = exp_sum(m, ch);
    if (!s) throw UnsupportedConfiguration("uy_autocorrelation: no exponential-sum form for this channel");
    for (std::size_t p = 0; p < s->c.size(); ++p)
      for (std::size_t q = 0; q < s->c.size(); ++q) {
        const cplx e = s->c[p] * std::exp(-s->a[p] * u);
        r.with_conj += e * std::conj(s->c[q]) / (s->a[p] + std::conj(s->a[q]));
        r.plain += e * s->c[q] / (s->a[p] + s->a[q]);
      }
  }
  return r;
}

// (1/2pi) int e^{-i x u} F(x) dx for complex F, centred at x0
template <class F>
cplx fourier_line(F&& f, double x0, double scale, double u, const std::vector<double>& peaks,
                  const QuadratureControls& q) {
  if (u == 0.0) return integrate_real_line(f, x0, scale, peaks, q) / (2.0 * std::numbers::pi);
  using boost::math::quadrature::ooura_fourier_cos;
  using boost::math::quadrature::ooura_fourier_sin;
  static thread_local ooura_fourier_cos<double> cos_int(1e-12, 10);
  static thread_local ooura_fourier_sin<double> sin_int(1e-12, 10);
  auto even_re = [&](double y) { return (f(x0 + y) + f(x0 - y)).real(); };
  auto even_im = [&](double y) { return (f(x0 + y) + f(x0 - y)).imag(); };
  auto odd_re = [&](double y) { return (f(x0 + y) - f(x0 - y)).real(); };
  auto odd_im = [&](double y) { return (f(x0 + y) - f(x0 - y)).imag(); };
  const cplx c(cos_int.integrate(even_re, u).first, cos_int.integrate(even_im, u).first);
  const cplx s(sin_int.integrate(odd_re, u).first, sin_int.integrate(odd_im, u).first);
  // e^{-i(x0+y)u} = e^{-i x0 u}(cos yu - i sin yu)
  const cplx r = std::exp(cplx(0.0, -x0 * u)) * (c - cplx(0.0, 1.0) * s) / (2.0 * std::numbers::pi);
  if (!std::isfinite(std::abs(r))) throw QuadratureError("fourier_line: non-finite result");
  return r;
}

inline UyCorrelation uy_fourier(const OscillatorModel& m, double u, const QuadratureControls& q) {
  const cplx k0b = m.kappa0_bar();
  auto with_conj = [&](double x) {
    double s = 0.0;
    for (const auto& ch : m.p.channels) s += channel_density(m, ch, x);
    return cplx(s, 0.0);
  };
  auto plain = [&](double x) {
    cplx s = 0.0;
    for (const auto& ch : m.p.channels)
      s += (ch.b + kernel_transform(ch.kernel, cplx(0.0, -x))) * (ch.b + kernel_transform(ch.kernel, cplx(0.0, x)));
    return s / (k0b * k0b + x * x);
  };
  const auto peaks = channel_peaks(m);
  // the plain integrand peaks at x = +-nu0
  std::vector<double> pk2 = peaks;
  for (double p : peaks) pk2.push_back(-p);
  return {fourier_line(with_conj, m.p.nu0, 0.5 * m.gamma0, u, peaks, q),
          fourier_line(plain, 0.0, std::max(0.5 * m.gamma0, std::abs(m.p.nu0)), u, pk2, q)};
}

}  // namespace detail

inline UyCorrelation uy_autocorrelation(const OscillatorModel& m, double u, Route route,
                                        const QuadratureControls& q = {}) {
  if (u < 0.0) throw InvalidArgument("uy_autocorrelation: lag must be >= 0");
  if (m.p.channels.empty()) return {0.0, 0.0};
  return route == Route::closed_form ? detail::uy_closed(m, u) : detail::uy_fourier(m, u, q);
}

// ---------------------------------------------------------------------------
// Mandel Q for long times, laser off

namespace detail {

// int_0^t (1 - u/t) e^{-c u} du
inline cplx triangle_exp(cplx c, double t) {
  const cplx ct = c * t;
  if (std::abs(ct) < 1e-4) return t * (0.5 - ct / 6.0 + ct * ct / 24.0);
  return (1.0 - (1.0 - std::exp(-ct)) / ct) / c;
}

// K(u) = sum_k A_k e^{-a_k u}, M(u) = sum_k B_k e^{-a_k u}
struct CorrelationExponentials {
  std::vector<cplx> A, B, a;
};

inline std::optional<CorrelationExponentials> correlation_exponentials(const OscillatorModel& m) {
  CorrelationExponentials r;
  for (const auto& ch : m.p.channels) {
    const auto s = exp_sum(m, ch);
    if (!s) return std::nullopt;
    for (std::size_t p = 0; p < s->c.size(); ++p) {
      cplx ka = 0.0, kb = 0.0;
      for (std::size_t q = 0; q < s->c.size(); ++q) {
        ka += s->c[p] * std::conj(s->c[q]) / (s->a[p] + std::conj(s->a[q]));
        kb += s->c[p] * s->c[q] / (s->a[p] + s->a[q]);
      }
      r.A.push_back(ka);
      r.B.push_back(kb);
      r.a.push_back(s->a[p]);
    }
  }
  return r;
}

}  // namespace detail

// Q(t) = (2 lambda |beta|^2 / Lambda) int_0^t (1 - u/t) (|K(u)|^2 + |M(u)|^2) du
// with K, M the two stationary autocorrelations of U_Y.
inline double mandel_Q(const OscillatorModel& m, double t, Route route, const QuadratureControls& q = {}) {
  if (std::abs(m.p.laser.g) != 0.0)
    throw UnsupportedConfiguration("mandel_Q: closed evaluation requires the laser to be off (g = 0)");
  if (t < 0.0) throw InvalidArgument("mandel_Q: t must be >= 0");
  const double c = m.p.lambda * std::norm(m.p.beta);
  const double Lambda = lambda_total(m, q).total;
  if (!(c > 0.0) || !(Lambda > 0.0)) throw InvalidConfiguration("mandel_Q: zero mean count rate");
  if (t == 0.0) return 0.0;
  double integral = 0.0;
  if (route == Route::closed_form) {
    const auto e = detail::correlation_exponentials(m);
    if (!e) throw UnsupportedConfiguration("mandel_Q: no exponential-sum form for this channel");
    const auto& [A, B, a] = *e;
    cplx acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
      for (std::size_t l = 0; l < a.size(); ++l)
        acc += (A[k] * std::conj(A[l]) + B[k] * std::conj(B[l])) * detail::triangle_exp(a[k] + std::conj(a[l]), t);
    integral = acc.real();
  } else {
    auto integrand = [&](double u) {
      const auto r = uy_autocorrelation(m, u, Route::quadrature, q);
      return (1.0 - u / t) * (std::norm(r.with_conj) + std::norm(r.plain));
    };
    QuadratureControls qq = q;
    qq.rel_tol = std::max(q.rel_tol, 1e-10);
    integral = integrate_interval(integrand, 0.0, t, {}, qq);
  }
  return 2.0 * c / Lambda * integral;
}

// ---------------------------------------------------------------------------
// Spectra of the homodyne/heterodyne signal m1

// Laser part S_1 at argument x for an oscillator of width kappa centred at x.
inline double spectrum_s1(const OscillatorModel& m, double x, double kappa) {
  const auto& L = m.p.laser;
  const double eps = L.epsilon, g0 = m.gamma0, nu0 = m.p.nu0, nu3 = L.nu3, dnu = nu0 - nu3;
  const double A = std::norm(m.p.alpha1) * std::norm(m.p.alpha2) * std::norm(L.g);
  const double d_ke = 0.25 * (kappa + eps) * (kappa + eps) + (nu3 - x) * (nu3 - x);
  const double d_ge = 0.25 * (g0 + eps) * (g0 + eps) + dnu * dnu;
  const double d_gk = 0.25 * (g0 + kappa) * (g0 + kappa) + (x - nu0) * (x - nu0);
  return A * ((kappa / d_ge + eps / d_gk) / d_ke + kappa * eps / (d_ge * d_gk) * (1.0 / g0 + (g0 + kappa + eps) / d_ke));
}

// Same quantity from the compact resolvent form before partial fractions.
inline double spectrum_s1_compact(const OscillatorModel& m, double x, double kappa) {
  const auto& L = m.p.laser;
  const double eps = L.epsilon, g0 = m.gamma0;
  const cplx k0 = m.kappa0, k0b = std::conj(k0), I(0.0, 1.0);
  const double A = std::norm(m.p.alpha1) * std::norm(m.p.alpha2) * std::norm(L.g);
  const cplx v = 2.0 * A / (k0b + 0.5 * kappa - I * x) *
                 (1.0 / (k0 + 0.5 * eps + I * L.nu3) * (1.0 / (0.5 * (kappa + eps) + I * (L.nu3 - x)) + 1.0 / g0) +
                  1.0 / ((k0b + 0.5 * eps - I * L.nu3) * g0));
  return v.real();
}

// Environment part S_2 at x seen through an oscillator of width gamma4: the
// density convolved with a normalized Lorentzian of full width gamma4. The
// closed form uses K(u) e^{-gamma4 |u| / 2} with K an exponential sum.
inline double spectrum_s2(const OscillatorModel& m, double x, double gamma4, Route route,
                          const QuadratureControls& q = {}) {
  if (m.p.channels.empty()) return 0.0;
  const double a1 = std::norm(m.p.alpha1);
  if (route == Route::closed_form) {
    const auto e = detail::correlation_exponentials(m);
    if (!e) throw UnsupportedConfiguration("spectrum_s2: no exponential-sum form for this channel");
    cplx s = 0.0;
    for (std::size_t k = 0; k < e->a.size(); ++k) s += e->A[k] / (e->a[k] + 0.5 * gamma4 - cplx(0.0, x));
    return a1 * 2.0 * s.real();
  }
  auto density = [&](double y) {
    double s = 0.0;
    for (const auto& ch : m.p.channels) s += detail::channel_density(m, ch, y);
    return s;
  };
  if (gamma4 == 0.0) return a1 * density(x);
  auto lor = [&](double y) {
    const double d = x - y;
    return 2.0 * gamma4 / (std::numbers::pi * (gamma4 * gamma4 + 4.0 * d * d)) * density(y);
  };
  auto peaks = detail::channel_peaks(m);
  peaks.push_back(x);
  return a1 * integrate_real_line(lor, x, 0.5 * gamma4, peaks, q);
}

inline double spectrum_s2(const OscillatorModel& m, double x, double gamma4, const QuadratureControls& q = {}) {
  try {
    return spectrum_s2(m, x, gamma4, Route::closed_form, q);
  } catch (const UnsupportedConfiguration&) {
    return spectrum_s2(m, x, gamma4, Route::quadrature, q);
  }
}

struct SignalSpectrum {
  std::vector<double> mu;
  std::vector<double> S_m;         // regular part of the signal spectrum
  std::vector<double> laser_part;  // S11 + S12 regular part
  std::vector<double> env_part;    // S2(nu4 + mu) + S2(nu4 - mu)
  std::vector<double> S_I;         // |G_I|^2 (1 + S_m), when a filter is given
  double spike_weight_m = 0.0;     // weight of a delta at mu = 0 in S_m
  double spike_weight_I = 0.0;     // the same in S_I
};

namespace detail {

inline void finish_spectrum(SignalSpectrum& s, const std::optional<ResponseFilter>& filter) {
  s.S_m.resize(s.mu.size());
  for (std::size_t i = 0; i < s.mu.size(); ++i) s.S_m[i] = s.laser_part[i] + s.env_part[i];
  if (!filter) return;
  s.S_I.resize(s.mu.size());
  for (std::size_t i = 0; i < s.mu.size(); ++i) s.S_I[i] = std::norm(transfer_function(*filter, s.mu[i])) * (1.0 + s.S_m[i]);
  s.spike_weight_I = std::norm(transfer_function(*filter, 0.0)) * s.spike_weight_m;
}

inline SignalSpectrum independent_lo_spectrum(const OscillatorModel& m, const std::vector<double>& mu, double nu4,
                                              double gamma4, bool perfect_lo,
                                              const std::optional<ResponseFilter>& filter,
                                              const QuadratureControls& q) {
  SignalSpectrum s;
  s.mu = mu;
  const double w = perfect_lo ? 0.0 : gamma4;
  for (double x : mu) {
    s.laser_part.push_back(spectrum_s1(m, nu4 + x, w) + spectrum_s1(m, nu4 - x, w));
    s.env_part.push_back(spectrum_s2(m, nu4 + x, w, q) + spectrum_s2(m, nu4 - x, w, q));
  }
  finish_spectrum(s, filter);
  return s;
}

}  // namespace detail

inline SignalSpectrum heterodyne_spectrum(const OscillatorModel& m, const std::vector<double>& mu,
                                          bool perfect_lo = false,
                                          const std::optional<ResponseFilter>& filter = std::nullopt,
                                          const QuadratureControls& q = {}) {
  const auto* lo = std::get_if<HeterodyneLO>(&m.p.lo);
  if (!lo) throw InvalidConfiguration("heterodyne_spectrum: model uses a homodyne oscillator");
  return detail::independent_lo_spectrum(m, mu, lo->nu, lo->kappa, perfect_lo, filter, q);
}

enum class HomodyneRegime { delay_infinite, balanced };

inline double homodyne_zeta(const OscillatorModel& m, double theta) {
  const double dnu = m.p.nu0 - m.p.laser.nu3;
  return std::arg(m.p.alpha1 * std::conj(m.p.alpha2) / cplx(0.5 * (m.gamma0 + m.p.laser.epsilon), -dnu)) + theta;
}

// l(mu) of the zero-detuning homodyne discussion
inline double homodyne_l(const OscillatorModel& m, double mu) {
  const double h = 0.5 * (m.gamma0 + m.p.laser.epsilon);
  return 16.0 * std::norm(m.p.alpha1) * std::norm(m.p.alpha2) * std::norm(m.p.laser.g) /
         (m.gamma0 * (h * h + mu * mu));
}

inline SignalSpectrum homodyne_spectrum(const OscillatorModel& m, const std::vector<double>& mu, HomodyneRegime regime,
                                        const std::optional<ResponseFilter>& filter = std::nullopt,
                                        const QuadratureControls& q = {}) {
  const auto* lo = std::get_if<HomodyneLO>(&m.p.lo);
  if (!lo) throw InvalidConfiguration("homodyne_spectrum: model uses a heterodyne oscillator");
  const auto& L = m.p.laser;
  if (regime == HomodyneRegime::delay_infinite) {
    // the delayed laser acts as an independent oscillator at nu3 with width
    // epsilon; the laser part goes through the resolvent form so that the
    // heterodyne evaluation is an independent cross-check
    SignalSpectrum s;
    s.mu = mu;
    for (double x : mu) {
      s.laser_part.push_back(spectrum_s1_compact(m, L.nu3 + x, L.epsilon) + spectrum_s1_compact(m, L.nu3 - x, L.epsilon));
      s.env_part.push_back(spectrum_s2(m, L.nu3 + x, L.epsilon, q) + spectrum_s2(m, L.nu3 - x, L.epsilon, q));
    }
    detail::finish_spectrum(s, filter);
    return s;
  }

  SignalSpectrum s;
  s.mu = mu;
  const double g0 = m.gamma0, eps = L.epsilon, dnu = m.p.nu0 - L.nu3;
  const double A = std::norm(m.p.alpha1) * std::norm(m.p.alpha2) * std::norm(L.g);
  const double pref = 2.0 * A / (0.25 * (g0 + eps) * (g0 + eps) + dnu * dnu);
  const double zeta = homodyne_zeta(m, lo->theta);
  const cplx I(0.0, 1.0);
  const cplx phase = 1.0 - g0 * std::exp(2.0 * I * zeta) / cplx(g0 + 2 * eps, -2 * dnu);
  for (double x : mu) {
    const cplx r = 1.0 / cplx(0.5 * (g0 + eps), -(dnu - x)) + 1.0 / cplx(0.5 * (g0 + eps), -(dnu + x));
    s.laser_part.push_back(pref * eps / g0 * (r * phase).real());
    s.env_part.push_back(spectrum_s2(m, L.nu3 + x, eps, q) + spectrum_s2(m, L.nu3 - x, eps, q));
  }
  s.spike_weight_m = pref * std::cos(zeta) * std::cos(zeta) * 4.0 * std::numbers::pi;
  detail::finish_spectrum(s, filter);
  return s;
}

// ---------------------------------------------------------------------------
// Mean output current

// E[I(t)] = -2 Re conj(alpha1) alpha2 int_0^t ds F(t - s) int_0^s dr e^{-kb0 (s - r)} E[conj h(s) f(r)]
inline double mean_heterodyne_current(const OscillatorModel& m, const ResponseFilter& filter, double t,
                                      const QuadratureControls& q = {}) {
  if (t <= 0.0 || m.p.alpha1 == cplx(0.0) || m.p.alpha2 == cplx(0.0) || m.p.laser.g == cplx(0.0)) return 0.0;
  const auto& L = m.p.laser;
  const cplx k0b = m.kappa0_bar(), I(0.0, 1.0);
  std::function<cplx(double)> inner;
  if (const auto* lo = std::get_if<HeterodyneLO>(&m.p.lo)) {
    // independent factors, inner integral in closed form
    const cplx k3b(0.5 * L.epsilon, L.nu3);
    inner = [=](double s) {
      const cplx hb = std::exp(cplx(-0.5 * lo->kappa * s, lo->nu * s - lo->vartheta));
      return hb * L.g * s * std::exp(-k0b * s) * expm1_over((k0b - k3b) * s);
    };
  } else {
    const auto hom = std::get<HomodyneLO>(m.p.lo);
    const QuadratureControls qi = q;
    inner = [=](double s) {
      const double tau = std::max(s - hom.delay, 0.0);
      auto f = [&](double r) {
        const double var = r + tau - 2.0 * std::min(r, tau);
        return std::exp(-k0b * (s - r)) * std::abs(L.g) * std::exp(-I * hom.theta) *
               std::exp(cplx(-0.5 * L.epsilon * var, L.nu3 * (s - hom.delay - r)));
      };
      return integrate_interval(f, 0.0, s, {tau}, qi);
    };
  }
  auto outer = [&](double s) { return filter(t - s) * inner(s); };
  std::vector<double> breaks;
  if (const auto* tab = std::get_if<TabulatedResponse>(&filter.kind))
    for (double x : tab->times) breaks.push_back(t - x);
  const cplx v = integrate_interval(outer, 0.0, t, breaks, q);
  return -2.0 * (std::conj(m.p.alpha1) * m.p.alpha2 * v).real();
}

// ---------------------------------------------------------------------------
// Counting functional by Monte Carlo over the forward noise

struct CountingFunctional {
  cplx Phi{};          // E exp(int (e^{i k} - 1) j dt)
  double Phi_se = 0.0;
  double P0 = 0.0;     // probability of no counts on [0, T]
  double P0_se = 0.0;
  double mean_kN = 0.0;  // E int k dN = int k E j dt
  double mean_kN_se = 0.0;
};

inline CountingFunctional counting_functional(const OscillatorModel& m, const std::function<double(double)>& k,
                                              double T, std::size_t trajectories, std::uint64_t seed,
                                              double dt = 0.01) {
  if (trajectories < 2) throw InvalidArgument("counting_functional: need at least two trajectories");
  std::vector<cplx> phi(trajectories);
  std::vector<double> p0(trajectories), mk(trajectories);
  for (std::size_t n = 0; n < trajectories; ++n) {
    cplx a = 0.0;
    double J = 0.0, K = 0.0;
    TrajectoryOptions o;
    o.dt = dt;
    o.observer = [&](const OscillatorStep& st) {
      // trapezoid in time for j and k j
      const double j1 = st.left.j, j2 = m.p.lambda * std::norm(m.p.beta) * std::norm(st.state->xi);
      const double t1 = st.time - dt, t2 = st.time;
      const double k1 = k(t1), k2 = k(t2);
      a += 0.5 * dt * ((std::exp(cplx(0.0, k1)) - 1.0) * j1 + (std::exp(cplx(0.0, k2)) - 1.0) * j2);
      J += 0.5 * dt * (j1 + j2);
      K += 0.5 * dt * (k1 * j1 + k2 * j2);
    };
    simulate_trajectory(m, T, Mode::reference, seed, n, o);
    phi[n] = std::exp(a);
    p0[n] = std::exp(-J);
    mk[n] = K;
  }
  auto mean_se = [](const auto& v) {
    using V = std::decay_t<decltype(v[0])>;
    V s{};
    for (const auto& x : v) s += x;
    const double n = static_cast<double>(v.size());
    s /= n;
    double ss = 0.0;
    for (const auto& x : v) ss += std::norm(x - s);
    return std::pair<V, double>(s, std::sqrt(ss / (n - 1) / n));
  };
  CountingFunctional r;
  std::tie(r.Phi, r.Phi_se) = mean_se(phi);
  std::tie(r.P0, r.P0_se) = mean_se(p0);
  std::tie(r.mean_kN, r.mean_kN_se) = mean_se(mk);
  return r;
}

}  // namespace qtraj
