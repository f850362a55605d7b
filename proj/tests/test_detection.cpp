#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "qtraj/detection.hpp"
#include "qtraj/rng.hpp"

using namespace qtraj;

namespace {

ResponseFilter exp_filter(double G) { return ResponseFilter{ExponentialResponse{G}, 1.0}; }

ResponseFilter tabulated_triangle() {
  TabulatedResponse t;
  for (int i = 0; i <= 40; ++i) {
    const double x = 0.05 * i;
    t.times.push_back(x);
    t.values.push_back(x < 1.0 ? x : 2.0 - x);
  }
  return ResponseFilter{t, 1.0};
}

}  // namespace

TEST(Filter, SingleJumpExponential) {
  const double G = 3.0, t1 = 0.4;
  std::vector<double> grid;
  for (int k = 0; k <= 100; ++k) grid.push_back(0.01 * k);
  const auto J = filter_counts({t1}, exp_filter(G), grid);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double expect = grid[k] > t1 ? G * std::exp(-G * (grid[k] - t1)) : 0.0;
    EXPECT_NEAR(J[k], expect, 1e-12);
  }
}

TEST(Filter, NoEventsNoCurrent) {
  const std::vector<double> grid{0.0, 0.5, 1.0};
  for (const auto& f : {exp_filter(2.0), tabulated_triangle()}) {
    for (double x : filter_counts({}, f, grid)) EXPECT_EQ(x, 0.0);
    for (double x : filter_increments(std::vector<double>(10, 0.0), 0.1, f)) EXPECT_EQ(x, 0.0);
  }
}

TEST(Filter, TabulatedCountsMatchDirectSum) {
  const auto f = tabulated_triangle();
  const std::vector<double> ev{0.1, 0.7, 1.3, 2.9};
  std::vector<double> grid;
  for (int k = 0; k <= 400; ++k) grid.push_back(0.01 * k);
  const auto J = filter_counts(ev, f, grid);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    double s = 0.0;
    for (double e : ev) {
      const double u = grid[k] - e;
      if (u > 0 && u <= 2.0) s += u < 1.0 ? u : 2.0 - u;
    }
    EXPECT_NEAR(J[k], s, 1e-12);
  }
}

// Campbell: the stationary mean of a filtered Poisson stream is rate * int F.
TEST(Filter, CampbellMean) {
  const double rate = 4.0, T = 2000.0;
  Stream s(1, 0, "campbell");
  std::vector<double> ev;
  for (double t = s.exponential() / rate; t < T; t += s.exponential() / rate) ev.push_back(t);
  std::vector<double> grid;
  for (double t = 10.0; t < T; t += 0.5) grid.push_back(t);
  const auto J = filter_counts(ev, exp_filter(2.0), grid);
  const double m = std::accumulate(J.begin(), J.end(), 0.0) / static_cast<double>(J.size());
  // samples 0.5 apart with correlation time 0.5 are nearly independent;
  // Var J = rate * int F^2 = rate * Gamma / 2
  const double se = std::sqrt(rate * 1.0 / static_cast<double>(J.size()) * 3.0);
  EXPECT_NEAR(m, rate, 3 * se);
}

TEST(Filter, IncrementsAgreeAcrossFilterKinds) {
  // the same exponential as a dense table
  const double G = 2.0;
  TabulatedResponse t;
  for (int i = 0; i <= 20000; ++i) {
    t.times.push_back(0.001 * i);
    t.values.push_back(G * std::exp(-G * 0.001 * i));
  }
  Stream s(2, 0, "inc");
  std::vector<double> dB(2000);
  for (auto& x : dB) x = 0.1 * s.normal();
  const auto a = filter_increments(dB, 0.01, exp_filter(G));
  const auto b = filter_increments(dB, 0.01, ResponseFilter{t, 1.0});
  for (std::size_t k = 0; k < a.size(); ++k) ASSERT_NEAR(a[k], b[k], 1e-5);
}

TEST(Transfer, Exponential) {
  const auto f = exp_filter(5.0);
  EXPECT_EQ(transfer_function(f, 0.0), cplx(1.0));
  for (double mu : {-7.0, 0.3, 11.0}) EXPECT_NEAR(std::norm(transfer_function(f, mu)), 25.0 / (25.0 + mu * mu), 1e-15);
}

TEST(Transfer, TabulatedAgainstQuadrature) {
  const auto f = tabulated_triangle();
  using boost::math::quadrature::gauss_kronrod;
  for (double mu : {0.0, 0.7, -3.0, 12.0}) {
    double re = 0.0, im = 0.0;
    for (int seg = 0; seg < 40; ++seg) {
      const double a = 0.05 * seg, b = a + 0.05;
      re += gauss_kronrod<double, 15>::integrate([&](double t) { return std::cos(mu * t) * f(t); }, a, b, 0, 1e-14);
      im += gauss_kronrod<double, 15>::integrate([&](double t) { return std::sin(mu * t) * f(t); }, a, b, 0, 1e-14);
    }
    const cplx g = transfer_function(f, mu);
    EXPECT_NEAR(g.real(), re, 1e-8) << mu;
    EXPECT_NEAR(g.imag(), im, 1e-8) << mu;
  }
}

TEST(Filter, RejectsBadFilters) {
  EXPECT_THROW(validate_filter(exp_filter(0.0)), InvalidConfiguration);
  TabulatedResponse t{{-1.0, 1.0}, {0.0, 1.0}};
  EXPECT_THROW(validate_filter(ResponseFilter{t, 1.0}), InvalidConfiguration);
}

TEST(Counting, PoissonHasZeroQ) {
  Stream s(3, 0, "q");
  std::vector<double> n(20000);
  for (auto& x : n) x = static_cast<double>(s.poisson(3.5));
  const auto st = estimate_counting(n, 0.0, 1.0);
  EXPECT_NEAR(st.mean, 3.5, 0.1);
  EXPECT_NEAR(st.Q, 0.0, 3 * st.Q_se);
  const std::vector<double> ones(n.size(), 1.0);
  const auto w = estimate_counting(n, 0.0, 1.0, &ones);
  EXPECT_NEAR(w.Q, st.Q, 1e-12);
  EXPECT_NEAR(w.Q_se, st.Q_se, 1e-9);
}

TEST(Counting, JackknifeMatchesRepeatSpread) {
  std::vector<double> qs, ses;
  for (int r = 0; r < 200; ++r) {
    Stream s(4, r, "rep");
    std::vector<double> n(400);
    // negative binomial via gamma-mixed Poisson would need more machinery; a
    // two-rate mixture is super-Poissonian too
    for (auto& x : n) x = static_cast<double>(s.poisson(s.uniform() < 0.5 ? 1.0 : 4.0));
    const auto st = estimate_counting(n, 0, 1);
    qs.push_back(st.Q);
    ses.push_back(st.Q_se);
  }
  const double m = std::accumulate(qs.begin(), qs.end(), 0.0) / qs.size();
  double v = 0.0;
  for (double q : qs) v += (q - m) * (q - m);
  const double sd = std::sqrt(v / (qs.size() - 1));
  const double mean_se = std::accumulate(ses.begin(), ses.end(), 0.0) / ses.size();
  EXPECT_NEAR(mean_se / sd, 1.0, 0.2);
  EXPECT_NEAR(m, 2.25 / 2.5, 0.05);  // Var = 2.5 + 2.25, mean 2.5
}

TEST(Counting, ZeroMeanIsUndefined) {
  EXPECT_THROW(estimate_counting({0.0, 0.0, 0.0}, 0, 1), NumericalDegeneracy);
}

TEST(Counting, WindowCount) {
  EXPECT_EQ(count_in_window({0.5, 1.0, 1.5, 2.0}, 1.0, 2.0), 2.0);
}

TEST(Spectrum, FilteredWhiteNoise) {
  const double dt = 0.01, G = 20.0;
  const auto f = exp_filter(G);
  std::vector<std::vector<double>> recs;
  for (int r = 0; r < 40; ++r) {
    Stream s(5, r, "white");
    std::vector<double> dB(20000);
    for (auto& x : dB) x = std::sqrt(dt) * s.normal();
    auto I = filter_increments(dB, dt, f);
    I.erase(I.begin(), I.begin() + 200);
    recs.push_back(std::move(I));
  }
  const auto est = estimate_spectrum(recs, dt, {1024, 0.5});
  double chi = 0.0;
  int bins = 0;
  for (std::size_t i = 0; i < est.mu.size(); ++i) {
    if (std::abs(est.mu[i]) > 60.0) continue;
    const double g2 = std::norm(transfer_function(f, est.mu[i]));
    chi += (est.power[i] - g2) * (est.power[i] - g2) / (est.se[i] * est.se[i]);
    ++bins;
    EXPECT_NEAR(est.power[i], g2, 4 * est.se[i] + 0.02 * g2) << est.mu[i];
  }
  EXPECT_LT(chi / bins, 1.5);
}

TEST(Spectrum, SinusoidPeaksAtItsFrequency) {
  const double dt = 0.01, w0 = 2 * std::numbers::pi * 4.0;  // exactly a bin centre for L = 1000
  std::vector<std::vector<double>> recs(2, std::vector<double>(5000));
  for (auto& r : recs)
    for (std::size_t n = 0; n < r.size(); ++n) r[n] = std::cos(w0 * n * dt);
  const auto est = estimate_spectrum(recs, dt, {1000, 0.5});
  const auto imax = std::max_element(est.power.begin(), est.power.end()) - est.power.begin();
  EXPECT_NEAR(std::abs(est.mu[imax]), w0, 1e-9);
  // Hann leakage reaches only the adjacent bins
  for (std::size_t i = 0; i < est.mu.size(); ++i)
    if (std::abs(std::abs(est.mu[i]) - w0) > 1.5 * (est.mu[1] - est.mu[0])) EXPECT_LT(est.power[i], 1e-12 * est.power[imax]);
}

TEST(Spectrum, SymmetricForRealInput) {
  Stream s(6, 0, "sym");
  std::vector<std::vector<double>> recs(3, std::vector<double>(4096));
  for (auto& r : recs)
    for (auto& x : r) x = s.normal();
  const auto est = estimate_spectrum(recs, 0.1, {256, 0.5});
  for (std::size_t k = 1; k < est.zero_bin; ++k)
    EXPECT_NEAR(est.power[est.zero_bin + k], est.power[est.zero_bin - k], 1e-12 * est.power[est.zero_bin + k]);
}

// With R(u) = E[x(t+u) conj x(t)] the estimate targets int R(u) e^{i mu u} du,
// so e^{i w t} puts its power at mu = -w only.
TEST(Spectrum, ComplexToneIsOneSided) {
  const double dt = 0.05, w = 3.0;
  std::vector<std::vector<cplx>> recs(2, std::vector<cplx>(4096));
  for (auto& r : recs)
    for (std::size_t n = 0; n < r.size(); ++n) r[n] = std::exp(cplx(0.0, w * dt * static_cast<double>(n)));
  const auto est = estimate_spectrum(recs, dt, {512, 0.5});
  const auto peak = std::max_element(est.power.begin(), est.power.end()) - est.power.begin();
  const double dmu = est.mu[1] - est.mu[0];
  EXPECT_NEAR(est.mu[peak], -w, dmu);
  const auto mirror = 2 * est.zero_bin - peak;
  EXPECT_LT(est.power[mirror], 1e-6 * est.power[peak]);
}

TEST(Spectrum, ConstantGivesSpikeWeight) {
  const double c = 0.7, dt = 0.05;
  std::vector<std::vector<double>> recs(4, std::vector<double>(4096, c));
  const auto est = estimate_spectrum(recs, dt, {512, 0.5});
  EXPECT_NEAR(est.spike_weight, 2 * std::numbers::pi * c * c, 1e-9);
}

TEST(Spectrum, Rejections) {
  std::vector<std::vector<double>> recs(2, std::vector<double>(100));
  EXPECT_THROW(estimate_spectrum(recs, 0.1, {128, 0.5}), InvalidArgument);
  EXPECT_THROW(estimate_spectrum(recs, 0.0, {64, 0.5}), InvalidArgument);
}
