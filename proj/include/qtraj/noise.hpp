#pragma once

// Classical driving processes: Wiener and Poisson increments, the colored
// Gaussian environment Y(t) = sum_j (b_j B_j(t) + int_0^t X_j(s) ds), the
// phase-diffusion laser f(t) and the local oscillator h(t).

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "qtraj/errors.hpp"
#include "qtraj/numerics.hpp"
#include "qtraj/rng.hpp"

namespace qtraj {

inline std::vector<double> sample_wiener_increments(double dt, int n, Stream& stream) {
  if (!(dt > 0.0)) throw InvalidArgument("sample_wiener_increments: dt must be > 0");
  if (n < 0) throw InvalidArgument("sample_wiener_increments: negative channel count");
  const double s = std::sqrt(dt);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (auto& x : out) x = s * stream.normal();
  return out;
}

inline std::uint64_t sample_reference_count(double lambda, double dt, Stream& stream) {
  if (lambda < 0.0) throw InvalidArgument("sample_reference_count: lambda must be >= 0");
  if (!(dt > 0.0)) throw InvalidArgument("sample_reference_count: dt must be > 0");
  if (lambda == 0.0) return 0;
  return stream.poisson(lambda * dt);
}

// ---------------------------------------------------------------------------
// Colored channels

struct WhiteKernel {};

// c(t) = g exp(-conj(kappa) t) with kappa = gamma/2 - i nu.
struct ExponentialKernel {
  cplx g{};
  double gamma = 1.0;
  double nu = 0.0;

  cplx kappa_bar() const { return {0.5 * gamma, nu}; }
};

// c(t) linear between nodes, zero after the last node. `window` is the
// length of increment history kept by the simulator (0 means the table span).
struct TabulatedKernel {
  std::vector<double> times;
  std::vector<cplx> values;
  double window = 0.0;
};

using Kernel = std::variant<WhiteKernel, ExponentialKernel, TabulatedKernel>;

struct ColoredChannelSpec {
  cplx b{};
  Kernel kernel = WhiteKernel{};
};

inline constexpr double kTailMassLimit = 1e-4;

struct TabulatedMass {
  double l1 = 0.0;
  double beyond_window = 0.0;
};

inline TabulatedMass tabulated_mass(const TabulatedKernel& k) {
  TabulatedMass m;
  const double w = k.window > 0.0 ? k.window : k.times.back();
  for (std::size_t i = 0; i + 1 < k.times.size(); ++i) {
    const double a = k.times[i], b = k.times[i + 1];
    auto absc = [&](double x) { return std::abs(lerp_table(k.times, k.values, x)); };
    const double seg = gauss_legendre(absc, a, b);
    m.l1 += seg;
    if (b > w) m.beyond_window += a >= w ? seg : gauss_legendre(absc, w, b);
  }
  return m;
}

inline void validate_channel(const ColoredChannelSpec& ch) {
  if (const auto* e = std::get_if<ExponentialKernel>(&ch.kernel)) {
    if (!(e->gamma > 0.0)) throw InvalidConfiguration("exponential kernel: gamma must be > 0");
  } else if (const auto* t = std::get_if<TabulatedKernel>(&ch.kernel)) {
    if (t->times.size() < 2 || t->times.size() != t->values.size())
      throw InvalidConfiguration("tabulated kernel: need >= 2 nodes with matching values");
    if (t->times.front() != 0.0) throw InvalidConfiguration("tabulated kernel: first node must be t = 0");
    for (std::size_t i = 1; i < t->times.size(); ++i)
      if (!(t->times[i] > t->times[i - 1])) throw InvalidConfiguration("tabulated kernel: times must increase");
    if (t->window < 0.0) throw InvalidConfiguration("tabulated kernel: window must be >= 0");
    const auto m = tabulated_mass(*t);
    if (m.l1 > 0.0 && m.beyond_window >= kTailMassLimit * m.l1)
      throw InvalidConfiguration("tabulated kernel: mass beyond memory window exceeds 1e-4 of L1 norm");
  }
}

// Laplace transform s(z) = int_0^inf e^{-z t} c(t) dt of a channel kernel.
inline cplx kernel_transform(const Kernel& k, cplx z) {
  return std::visit(
      [&](const auto& ker) -> cplx {
        using T = std::decay_t<decltype(ker)>;
        if constexpr (std::is_same_v<T, WhiteKernel>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, ExponentialKernel>) {
          return ker.g / (z + ker.kappa_bar());
        } else {
          return piecewise_linear_laplace(ker.times, ker.values, z);
        }
      },
      k);
}

namespace detail {

// Exact one-step law of an Ornstein-Uhlenbeck channel. Over a step of length
// h, with tau = h - s, the channel needs the jointly Gaussian triple
//   dB, A = int e^{-kb tau} dB(s), C = int (1 - e^{-kb tau})/kb dB(s).
// The given dB fixes the first component; (A, C) are drawn conditionally.
struct OuStepLaw {
  double dt = 0.0;
  cplx decay{};          // e^{-kb h}
  cplx mean_drift{};     // h phi1(kb h)
  Eigen::Vector4d cond_mean;  // E[(ReA, ImA, ReC, ImC) | dB] / dB
  Eigen::Matrix4d cond_sqrt;

  OuStepLaw(cplx kb, double h) : dt(h) {
    decay = std::exp(-kb * h);
    mean_drift = h * phi1(kb * h);
    Eigen::Matrix<double, 5, 5> cov = Eigen::Matrix<double, 5, 5>::Zero();
    for (int i = 0; i < 5; ++i)
      for (int j = i; j < 5; ++j) {
        auto integrand = [&](double tau) {
          const cplx e = std::exp(-kb * tau);
          const cplx p = tau * phi1(kb * tau);
          const double u[5] = {1.0, e.real(), e.imag(), p.real(), p.imag()};
          return u[i] * u[j];
        };
        cov(i, j) = cov(j, i) = gauss_legendre(integrand, 0.0, h);
      }
    const Eigen::Vector4d c0 = cov.block<4, 1>(1, 0);
    cond_mean = c0 / cov(0, 0);
    Eigen::Matrix4d cc = cov.block<4, 4>(1, 1) - c0 * c0.transpose() / cov(0, 0);
    cc = 0.5 * (cc + cc.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(cc);
    const Eigen::Vector4d ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    cond_sqrt = es.eigenvectors() * ev.asDiagonal();
  }
};

}  // namespace detail

struct ChannelState {
  ColoredChannelSpec spec;
  cplx X{};
  // exponential
  std::vector<detail::OuStepLaw> laws;
  // tabulated: weights w_k for the increment k steps back, ring buffer of dB
  std::vector<cplx> weights;
  std::vector<double> history;
  std::size_t head = 0;
  std::size_t filled = 0;
  double weights_dt = 0.0;
  double tail_mass = 0.0;
};

struct NoiseBankState {
  std::vector<ChannelState> channels;
  double time = 0.0;
  std::uint64_t steps = 0;
  bool truncation_warning = false;

  cplx sum_X() const {
    cplx s = 0.0;
    for (const auto& c : channels) s += c.X;
    return s;
  }
};

inline NoiseBankState make_noise_bank(const std::vector<ColoredChannelSpec>& specs) {
  NoiseBankState st;
  for (const auto& s : specs) {
    validate_channel(s);
    ChannelState c;
    c.spec = s;
    if (const auto* t = std::get_if<TabulatedKernel>(&s.kernel)) c.tail_mass = tabulated_mass(*t).beyond_window;
    st.channels.push_back(std::move(c));
  }
  return st;
}

// Number of auxiliary normals consumed per step by channel j.
inline int auxiliary_normals(const ColoredChannelSpec& s) {
  return std::holds_alternative<ExponentialKernel>(s.kernel) ? 4 : 0;
}

namespace detail {

inline const OuStepLaw& ou_law(ChannelState& c, const ExponentialKernel& k, double dt) {
  for (const auto& l : c.laws)
    if (l.dt == dt) return l;
  c.laws.emplace_back(k.kappa_bar(), dt);
  return c.laws.back();
}

inline void prepare_tabulated(ChannelState& c, const TabulatedKernel& k, double dt) {
  if (c.weights_dt == dt) return;
  if (c.filled > 0) throw InvalidArgument("tabulated channel: step size cannot change mid-path");
  const double w = k.window > 0.0 ? k.window : k.times.back();
  const auto n = static_cast<std::size_t>(std::ceil(w / dt - 1e-9));
  c.weights.resize(std::max<std::size_t>(n, 1));
  for (std::size_t i = 0; i < c.weights.size(); ++i) {
    const double a = static_cast<double>(i) * dt;
    c.weights[i] = 0.5 * (lerp_table(k.times, k.values, a) + lerp_table(k.times, k.values, a + dt));
  }
  c.history.assign(c.weights.size(), 0.0);
  c.weights_dt = dt;
}

}  // namespace detail

// Advances every channel by dt given its real increment dB_j. Returns dY.
// `aux` supplies the extra normals needed by the exact OU step.
inline cplx step_colored_noise(NoiseBankState& st, double dt, std::span<const double> dB, Stream& aux) {
  if (!(dt > 0.0)) throw InvalidArgument("step_colored_noise: dt must be > 0");
  if (dB.size() != st.channels.size()) throw InvalidArgument("step_colored_noise: increment count mismatch");
  cplx dY = 0.0;
  for (std::size_t j = 0; j < st.channels.size(); ++j) {
    auto& c = st.channels[j];
    dY += c.spec.b * dB[j];
    if (const auto* e = std::get_if<ExponentialKernel>(&c.spec.kernel)) {
      const auto& law = detail::ou_law(c, *e, dt);
      Eigen::Vector4d z;
      for (int i = 0; i < 4; ++i) z[i] = aux.normal();
      const Eigen::Vector4d v = law.cond_mean * dB[j] + law.cond_sqrt * z;
      const cplx A(v[0], v[1]), C(v[2], v[3]);
      dY += c.X * law.mean_drift + e->g * C;
      c.X = law.decay * c.X + e->g * A;
    } else if (const auto* t = std::get_if<TabulatedKernel>(&c.spec.kernel)) {
      detail::prepare_tabulated(c, *t, dt);
      const std::size_t W = c.weights.size();
      c.head = (c.head + W - 1) % W;
      c.history[c.head] = dB[j];
      if (c.filled == W && c.tail_mass > 0.0) st.truncation_warning = true;
      c.filled = std::min(c.filled + 1, W);
      cplx x = 0.0;
      for (std::size_t k = 0; k < c.filled; ++k) x += c.weights[k] * c.history[(c.head + k) % W];
      dY += 0.5 * (c.X + x) * dt;
      c.X = x;
    }
  }
  st.time += dt;
  ++st.steps;
  return dY;
}

// ---------------------------------------------------------------------------
// Laser f(t) = g exp(-i nu3 t + i sqrt(eps) B3(t))

struct LaserParams {
  cplx g{};
  double nu3 = 0.0;
  double epsilon = 0.0;
};

struct LaserState {
  LaserParams p;
  double time = 0.0;
  double B3 = 0.0;

  double phase() const { return std::arg(p.g) - p.nu3 * time + std::sqrt(p.epsilon) * B3; }
  cplx value() const { return std::polar(std::abs(p.g), phase()); }
};

inline LaserState make_laser(const LaserParams& p) {
  if (p.epsilon < 0.0) throw InvalidConfiguration("laser: epsilon must be >= 0");
  return LaserState{p};
}

inline cplx step_laser(LaserState& s, double dt, double dB3) {
  s.time += dt;
  s.B3 += dB3;
  return s.value();
}

// ---------------------------------------------------------------------------
// Local oscillator

struct HeterodyneLO {
  double nu = 0.0;
  double kappa = 0.0;
  double vartheta = 0.0;
};

// h(t) = e^{i theta} f(t - delay) / |f(t - delay)|; the delay is rounded to
// the integration grid.
struct HomodyneLO {
  double theta = 0.0;
  double delay = 0.0;
};

using LocalOscillatorParams = std::variant<HeterodyneLO, HomodyneLO>;

struct LocalOscillatorState {
  LocalOscillatorParams p;
  double time = 0.0;
  double B4 = 0.0;
  // homodyne: unit laser phasors for the last delay_steps + 1 grid points
  LaserParams laser;
  std::size_t delay_steps = 0;
  std::vector<cplx> ring;
  std::uint64_t step = 0;
  cplx h{1.0, 0.0};

  cplx value() const { return h; }
};

namespace detail {

inline cplx homodyne_value(const LocalOscillatorState& s, const HomodyneLO& hp) {
  cplx u;
  if (s.step < s.delay_steps) {
    // before the delayed laser exists, continue its deterministic phase
    const double t = s.time - hp.delay;
    u = std::polar(1.0, std::arg(s.laser.g) - s.laser.nu3 * t);
  } else {
    u = s.ring[(s.step - s.delay_steps) % s.ring.size()];
  }
  return std::polar(1.0, hp.theta + std::arg(u));
}

}  // namespace detail

inline LocalOscillatorState make_local_oscillator(const LocalOscillatorParams& p, const LaserState& laser,
                                                  double dt) {
  LocalOscillatorState s;
  s.p = p;
  if (const auto* het = std::get_if<HeterodyneLO>(&p)) {
    if (het->kappa < 0.0) throw InvalidConfiguration("local oscillator: kappa must be >= 0");
    s.h = std::polar(1.0, het->vartheta);
  } else {
    const auto& hom = std::get<HomodyneLO>(p);
    if (std::abs(laser.p.g) == 0.0) throw InvalidConfiguration("homodyne detection requires a laser with g != 0");
    if (hom.delay < 0.0) throw InvalidConfiguration("homodyne delay must be >= 0");
    if (!(dt > 0.0)) throw InvalidArgument("local oscillator: dt must be > 0");
    s.laser = laser.p;
    s.delay_steps = static_cast<std::size_t>(std::llround(hom.delay / dt));
    s.ring.assign(s.delay_steps + 1, cplx{});
    s.ring[0] = std::polar(1.0, laser.phase());
    s.p = HomodyneLO{hom.theta, static_cast<double>(s.delay_steps) * dt};
    s.h = detail::homodyne_value(s, std::get<HomodyneLO>(s.p));
  }
  return s;
}

// `laser` must already be advanced to the new time.
inline cplx step_local_oscillator(LocalOscillatorState& s, double dt, double dB4, const LaserState& laser) {
  s.time += dt;
  ++s.step;
  if (const auto* het = std::get_if<HeterodyneLO>(&s.p)) {
    s.B4 += dB4;
    s.h = std::polar(1.0, het->vartheta - het->nu * s.time + std::sqrt(het->kappa) * s.B4);
  } else {
    s.ring[s.step % s.ring.size()] = std::polar(1.0, laser.phase());
    s.h = detail::homodyne_value(s, std::get<HomodyneLO>(s.p));
  }
  return s.h;
}

// ---------------------------------------------------------------------------
// Classical spectra

inline double laser_spectrum(const LaserParams& p, double mu) {
  const double d = mu - p.nu3;
  return p.epsilon * std::norm(p.g) / (d * d + 0.25 * p.epsilon * p.epsilon);
}

// S_Y(mu) = sum_j |b_j + s_j(-i mu)|^2
inline double colored_spectrum(const std::vector<ColoredChannelSpec>& channels, double mu) {
  double s = 0.0;
  for (const auto& c : channels) s += std::norm(c.b + kernel_transform(c.kernel, cplx(0.0, -mu)));
  return s;
}

}  // namespace qtraj
