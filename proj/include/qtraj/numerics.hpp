#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qtraj/errors.hpp"

namespace qtraj {

using cplx = std::complex<double>;

// (1 - e^{-z}) / z, with the removable singularity at 0 handled by series.
inline cplx phi1(cplx z) {
  if (std::abs(z) < 1e-3) {
    cplx term = 1.0, sum = 0.0;
    for (int k = 0; k < 8; ++k) {
      sum += term;
      term *= -z / static_cast<double>(k + 2);
    }
    return sum;
  }
  return (1.0 - std::exp(-z)) / z;
}

// (e^{z} - 1) / z
inline cplx expm1_over(cplx z) {
  if (std::abs(z) < 1e-3) {
    cplx term = 1.0, sum = 0.0;
    for (int k = 0; k < 8; ++k) {
      sum += term;
      term *= z / static_cast<double>(k + 2);
    }
    return sum;
  }
  return (std::exp(z) - 1.0) / z;
}

// int_0^1 u e^{-w u} du = (1 - e^{-w}(1 + w)) / w^2
inline cplx phi2(cplx w) {
  if (std::abs(w) < 1e-2) {
    cplx sum = 0.0, pw = 1.0;
    double fact = 1.0;
    for (int k = 0; k < 10; ++k) {
      if (k > 0) fact *= k;
      sum += pw / (fact * (k + 2));
      pw *= -w;
    }
    return sum;
  }
  return (1.0 - std::exp(-w) * (1.0 + w)) / (w * w);
}

// int_0^inf e^{-z t} c(t) dt for c linear between table nodes and zero past the
// last node. Exact for the interpolant.
inline cplx piecewise_linear_laplace(const std::vector<double>& t, const std::vector<cplx>& c, cplx z) {
  cplx total = 0.0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double h = t[i + 1] - t[i];
    const cplx w = z * h;
    total += std::exp(-z * t[i]) * h * (c[i] * phi1(w) + (c[i + 1] - c[i]) * phi2(w));
  }
  return total;
}

inline cplx lerp_table(const std::vector<double>& t, const std::vector<cplx>& c, double x) {
  if (t.empty() || x < t.front() || x > t.back()) return 0.0;
  auto it = std::upper_bound(t.begin(), t.end(), x);
  if (it == t.end()) return c.back();
  const auto i = static_cast<std::size_t>(it - t.begin()) - 1;
  const double u = (x - t[i]) / (t[i + 1] - t[i]);
  return c[i] + u * (c[i + 1] - c[i]);
}

struct QuadratureControls {
  double rel_tol = 1e-10;
  double abs_tol = 1e-14;
  unsigned max_depth = 12;
};

namespace detail {

template <class F>
auto gk_segment(F&& f, double a, double b, const QuadratureControls& q, double& err_sum) {
  using boost::math::quadrature::gauss_kronrod;
  double err = 0.0, l1 = 0.0;
  auto r = gauss_kronrod<double, 31>::integrate(f, a, b, q.max_depth, q.rel_tol, &err, &l1);
  err_sum += err;
  return r;
}

}  // namespace detail

// Integral over [a, b] split at the given interior breakpoints.
template <class F>
auto integrate_interval(F&& f, double a, double b, std::vector<double> breaks = {},
                        const QuadratureControls& q = {}) {
  std::erase_if(breaks, [&](double x) { return !(x > a && x < b); });
  breaks.push_back(a);
  breaks.push_back(b);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  using R = decltype(f(a));
  R total{};
  double err = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) total += detail::gk_segment(f, breaks[i], breaks[i + 1], q, err);
  if (!std::isfinite(std::abs(total))) throw QuadratureError("integrate_interval: non-finite result");
  return total;
}

// Integral over the real line using x = center + scale tan(u); breakpoints
// (peak locations) are mapped into u and used to split the finite range.
template <class F>
auto integrate_real_line(F&& f, double center, double scale, std::vector<double> breaks = {},
                         const QuadratureControls& q = {}) {
  if (!(scale > 0.0)) throw InvalidArgument("integrate_real_line: scale must be positive");
  const double h = std::numbers::pi / 2;
  auto g = [&](double u) {
    const double c = std::cos(u);
    using R = decltype(f(center));
    if (std::abs(c) < 1e-300) return R{};
    return f(center + scale * std::tan(u)) * (scale / (c * c));
  };
  std::vector<double> ub;
  for (double x : breaks) ub.push_back(std::atan((x - center) / scale));
  // Extra splits near the ends keep the adaptive scheme away from the
  // 1/cos^2 endpoints until it has resolved the bulk.
  for (double frac : {0.5, 0.9, 0.99}) {
    ub.push_back(frac * h);
    ub.push_back(-frac * h);
  }
  return integrate_interval(g, -h, h, ub, q);
}

// Fixed-order Gauss-Legendre rule for smooth integrands on [a, b].
template <class F>
auto gauss_legendre(F&& f, double a, double b) {
  return boost::math::quadrature::gauss<double, 20>::integrate(f, a, b);
}

}  // namespace qtraj
