// Free decay of a coherent oscillator watched by the photon counter.
// With no drive and no bath the amplitude follows xi0 exp(-kappa0 t) on every
// trajectory, and the expected total count is lambda |beta|^2 |xi0|^2 / gamma0.

#include <cmath>
#include <cstdio>

#include "qtraj/oscillator.hpp"
#include "qtraj/parallel.hpp"

using namespace qtraj;

int main() {
  OscillatorParams p;
  p.nu0 = 3.0;
  p.alpha1 = 0.5;
  p.alpha2 = 0.5;
  p.beta = 1.0;
  p.lambda = 0.5;
  p.xi0 = {2.0, 0.0};
  const auto m = derive_params(p);
  const double T = 12.0, dt = 0.005;

  TrajectoryOptions o;
  o.dt = dt;
  o.store_path = true;
  const auto r = simulate_trajectory(m, T, Mode::physical, 1, 0, o);
  std::printf("%6s %14s %14s\n", "t", "|xi|^2", "exact");
  for (std::size_t i = 0; i < r.times.size(); i += 400) {
    const double t = r.times[i];
    std::printf("%6.2f %14.8f %14.8f\n", t, std::norm(r.xi[i]), std::norm(p.xi0) * std::exp(-m.gamma0 * t));
  }

  const std::size_t n = 4000;
  const auto counts = parallel_map(n, 1, [&](std::size_t k) {
    TrajectoryOptions q;
    q.dt = dt;
    return static_cast<double>(simulate_trajectory(m, T, Mode::physical, 2, k, q).final.N);
  });
  double mean = 0.0, m2 = 0.0;
  for (double c : counts) {
    mean += c / n;
    m2 += c * c / n;
  }
  const double expected = p.lambda * std::norm(p.beta) * std::norm(p.xi0) / m.gamma0 * (1.0 - std::exp(-m.gamma0 * T));
  std::printf("\nmean count %.4f +- %.4f, expected %.4f (Poisson: variance %.4f)\n", mean,
              std::sqrt((m2 - mean * mean) / n), expected, m2 - mean * mean);
}
