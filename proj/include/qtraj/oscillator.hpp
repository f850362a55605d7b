#pragma once

// Noisy driven oscillator solved on its coherent-state track.
//
// The unnormalized state is phi(t) = V(t) exp(Z(t)/2) e(xi(t)); xi follows a
// linear SDE driven by the laser f and the colored noise Y, while the weight
// p = |V|^2 exp(Re Z) collects the detection channels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qtraj/engine.hpp"
#include "qtraj/fock.hpp"
#include "qtraj/noise.hpp"
#include "qtraj/numerics.hpp"
#include "qtraj/rng.hpp"

namespace qtraj {

struct OscillatorParams {
  double nu0 = 0.0;
  cplx alpha1{};
  cplx alpha2{};
  cplx beta{};
  double lambda = 0.0;
  LaserParams laser{};
  LocalOscillatorParams lo = HeterodyneLO{};
  std::vector<ColoredChannelSpec> channels;
  cplx xi0{};
};

// Effective photon number and squeezing of the white channels.
struct WhiteBath {
  double n = 0.0;
  cplx m{};
};

struct OscillatorModel {
  OscillatorParams p;
  double gamma0 = 0.0;
  cplx kappa0{};  // -i nu0 + gamma0 / 2
  cplx q{};       // sum b_j^2
  double k = 0.0; // sum |b_j|^2
  std::optional<WhiteBath> white;  // set when every channel is white

  cplx kappa0_bar() const { return std::conj(kappa0); }
};

inline OscillatorModel derive_params(const OscillatorParams& raw) {
  OscillatorModel m;
  m.p = raw;
  if (!(raw.lambda >= 0.0)) throw InvalidConfiguration("lambda must be >= 0");
  if (!std::isfinite(raw.nu0)) throw InvalidConfiguration("nu0 must be finite");
  m.gamma0 = std::norm(raw.alpha1) + std::norm(raw.alpha2) + std::norm(raw.beta) * raw.lambda;
  if (!(m.gamma0 > 0.0)) throw InvalidConfiguration("mode width must be positive");
  m.kappa0 = cplx(m.gamma0 / 2, -raw.nu0);
  if (raw.laser.epsilon < 0.0) throw InvalidConfiguration("laser: epsilon must be >= 0");
  if (const auto* het = std::get_if<HeterodyneLO>(&raw.lo)) {
    if (het->kappa < 0.0) throw InvalidConfiguration("local oscillator: kappa must be >= 0");
  } else {
    const auto& hom = std::get<HomodyneLO>(raw.lo);
    if (std::abs(raw.laser.g) == 0.0) throw InvalidConfiguration("homodyne detection requires a laser with g != 0");
    if (hom.delay < 0.0) throw InvalidConfiguration("homodyne delay must be >= 0");
  }
  bool all_white = true;
  for (const auto& ch : raw.channels) {
    validate_channel(ch);
    m.q += ch.b * ch.b;
    m.k += std::norm(ch.b);
    if (!std::holds_alternative<WhiteKernel>(ch.kernel)) all_white = false;
  }
  if (all_white) m.white = WhiteBath{m.k / m.gamma0, -m.q / m.gamma0};
  return m;
}

// ---------------------------------------------------------------------------
// Exogenous noise of one trajectory

// Increments over one step [t, t + dt]. Within a step the laser phase is taken
// linear (the Brownian bridge mean), which makes both laser integrals closed.
struct OscillatorIncrement {
  double dt = 0.0;
  double dB1 = 0.0, dB2 = 0.0;  // detection channels (W1, W2 in physical mode)
  std::vector<double> dBj;      // colored channels
  cplx f_left{}, h_left{};
  cplx f_integral{};            // int f ds
  cplx f_relaxed{};             // int e^{-kb0 (t + dt - s)} f(s) ds
  cplx dY{};
  cplx dY_colored{};            // dY minus its white part sum b_j dB_j
  cplx h_right{};
};

// Named streams make the forward noise (f, h, Y) identical in both measures.
class OscillatorNoise {
 public:
  OscillatorNoise(const OscillatorModel& m, double dt, std::uint64_t seed, std::uint64_t traj)
      : m_(&m),
        dt_(dt),
        detect_(seed, traj, "detect"),
        forward_(seed, traj, "forward"),
        laser_rng_(seed, traj, "laser"),
        lo_rng_(seed, traj, "lo"),
        aux_(seed, traj, "colored/aux"),
        bank_(make_noise_bank(m.p.channels)),
        laser_(make_laser(m.p.laser)),
        lo_(make_local_oscillator(m.p.lo, laser_, dt)) {
    inc_.dBj.resize(m.p.channels.size());
    inc_.dt = dt;
  }

  const OscillatorIncrement& next() {
    const double s = std::sqrt(dt_);
    inc_.dB1 = s * detect_.normal();
    inc_.dB2 = s * detect_.normal();
    cplx white = 0.0;
    for (std::size_t j = 0; j < inc_.dBj.size(); ++j) {
      inc_.dBj[j] = s * forward_.normal();
      white += m_->p.channels[j].b * inc_.dBj[j];
    }
    inc_.dY = step_colored_noise(bank_, dt_, inc_.dBj, aux_);
    inc_.dY_colored = inc_.dY - white;

    const double dB3 = m_->p.laser.epsilon > 0.0 ? s * laser_rng_.normal() : 0.0;
    inc_.f_left = laser_.value();
    inc_.h_left = lo_.value();
    const cplx omega(0.0, -m_->p.laser.nu3 + std::sqrt(m_->p.laser.epsilon) * dB3 / dt_);
    const cplx kb = m_->kappa0_bar();
    inc_.f_integral = inc_.f_left * dt_ * expm1_over(omega * dt_);
    inc_.f_relaxed = inc_.f_left * std::exp(-kb * dt_) * dt_ * expm1_over((kb + omega) * dt_);
    step_laser(laser_, dt_, dB3);
    const bool heterodyne = std::holds_alternative<HeterodyneLO>(lo_.p);
    const double dB4 = heterodyne && std::get<HeterodyneLO>(lo_.p).kappa > 0.0 ? s * lo_rng_.normal() : 0.0;
    inc_.h_right = step_local_oscillator(lo_, dt_, dB4, laser_);
    return inc_;
  }

  bool truncation_warning() const { return bank_.truncation_warning; }
  cplx h() const { return lo_.value(); }
  cplx f() const { return laser_.value(); }

 private:
  const OscillatorModel* m_;
  double dt_;
  Stream detect_, forward_, laser_rng_, lo_rng_, aux_;
  NoiseBankState bank_;
  LaserState laser_;
  LocalOscillatorState lo_;
  OscillatorIncrement inc_;
};

// ---------------------------------------------------------------------------
// Analytic track

struct AnalyticState {
  double time = 0.0;
  cplx xi{};
  cplx Uf{}, UY{};
  double re_Z = 0.0;
  double log_V2 = 0.0;  // log |V|^2
  double arg_V = 0.0;   // phase ledger; never enters a weight
  double im_Z = 0.0;
  std::uint64_t N = 0;
  bool absorbed = false;

  double log_weight() const {
    return absorbed ? -std::numeric_limits<double>::infinity() : re_Z + log_V2;
  }
  double weight() const { return absorbed ? 0.0 : std::exp(re_Z + log_V2); }
};

inline AnalyticState make_analytic_state(const OscillatorModel& m) {
  AnalyticState s;
  s.xi = m.p.xi0;
  return s;
}

struct Signals {
  double m1 = 0.0, m2 = 0.0, j = 0.0;
};

inline Signals signals(const OscillatorModel& m, cplx xi, cplx h) {
  return {2.0 * (std::conj(m.p.alpha1) * std::conj(h) * xi).imag(), 2.0 * (std::conj(m.p.alpha2) * xi).imag(),
          m.p.lambda * std::norm(m.p.beta) * std::norm(xi)};
}

// xi <- e^{-kb0 dt} xi - i alpha2 int e^{-kb0 (t+dt-s)} f ds - i phi1(kb0 dt) dY
inline void step_xi(const OscillatorModel& m, AnalyticState& s, double dt, cplx f_relaxed, cplx dY) {
  const cplx z = m.kappa0_bar() * dt;
  const cplx decay = std::exp(-z);
  const cplx uf = m.p.alpha2 * f_relaxed;
  const cplx uy = phi1(z) * dY;
  s.Uf = decay * s.Uf + uf;
  s.UY = decay * s.UY + uy;
  s.xi = decay * s.xi - cplx(0.0, 1.0) * (uf + uy);
  s.time += dt;
}

// A jump inside a step, with the intensity and amplitude at its instant.
struct JumpEvent {
  double time = 0.0;
  double j = 0.0;
  cplx xi{};
};

// Reference-probability weight over one step. Signals are evaluated at the
// left end; j_mean is the step average of the intensity. Each factor has
// Q-mean one, so the discrete weight is an exact martingale.
inline void evolve_weight(const OscillatorModel& m, AnalyticState& s, double dt, cplx xi_left, cplx h_left,
                          double dB1, double dB2, cplx dY1, double j_mean, const std::vector<JumpEvent>& jumps) {
  const Signals sg = signals(m, xi_left, h_left);
  s.re_Z += sg.m1 * dB1 + sg.m2 * dB2 - 0.5 * (sg.m1 * sg.m1 + sg.m2 * sg.m2) * dt;
  const cplx w1 = std::conj(m.p.alpha1) * std::conj(h_left), w2 = std::conj(m.p.alpha2);
  const cplx I(0.0, 1.0);
  s.im_Z += (-2.0 * I * xi_left * (w1 * dB1 + w2 * dB2)).imag() - 2.0 * (std::conj(xi_left) * dY1).real() +
            ((w1 * w1 + w2 * w2) * xi_left * xi_left).imag() * dt;
  s.log_V2 += (m.p.lambda - j_mean) * dt;
  for (const auto& e : jumps) {
    ++s.N;
    if (s.absorbed) continue;
    if (!(e.j > 0.0)) {
      s.absorbed = true;
      continue;
    }
    s.log_V2 += std::log(e.j / m.p.lambda);
    s.arg_V += std::arg(std::conj(m.p.beta) * e.xi);
  }
}

// ---------------------------------------------------------------------------
// Trajectory driver

enum class Mode { reference, physical };

struct OscillatorStep {
  double time = 0.0;  // right end of the step
  const AnalyticState* state = nullptr;
  Signals left;       // signals at the left end
  double dB1_out = 0.0, dB2_out = 0.0;  // detector output increments
  std::uint32_t dN = 0;
  const OscillatorIncrement* noise = nullptr;
};

struct TrajectoryOptions {
  double dt = 0.01;
  bool store_path = false;
  std::function<void(const OscillatorStep&)> observer;
};

struct TrajectoryRecord {
  Mode mode = Mode::reference;
  AnalyticState final;
  bool truncation_warning = false;
  std::vector<double> jump_times;
  // per grid point (index 0 is t = 0) when store_path is set
  std::vector<double> times;
  std::vector<cplx> xi, Uf, UY;
  std::vector<double> m1, m2, j, log_weight;
  // per step
  std::vector<double> dB1_out, dB2_out;
  std::vector<std::uint32_t> dN;
};

namespace detail {

inline void push_point(TrajectoryRecord& r, const OscillatorModel& m, const AnalyticState& s, cplx h) {
  const Signals sg = signals(m, s.xi, h);
  r.times.push_back(s.time);
  r.xi.push_back(s.xi);
  r.Uf.push_back(s.Uf);
  r.UY.push_back(s.UY);
  r.m1.push_back(sg.m1);
  r.m2.push_back(sg.m2);
  r.j.push_back(sg.j);
  r.log_weight.push_back(s.log_weight());
}

}  // namespace detail

inline TrajectoryRecord simulate_trajectory(const OscillatorModel& m, double horizon, Mode mode, std::uint64_t seed,
                                            std::uint64_t traj, const TrajectoryOptions& opt = {}) {
  if (!(horizon > 0.0)) throw InvalidArgument("simulate_trajectory: horizon must be > 0");
  if (!(opt.dt > 0.0)) throw InvalidArgument("simulate_trajectory: dt must be > 0");
  const double dt = opt.dt;
  const auto steps = std::max<std::int64_t>(1, std::llround(horizon / dt));
  OscillatorNoise noise(m, dt, seed, traj);
  Stream count(seed, traj, "count");
  const double lb2 = m.p.lambda * std::norm(m.p.beta);

  TrajectoryRecord r;
  r.mode = mode;
  AnalyticState s = make_analytic_state(m);
  if (opt.store_path) {
    r.times.reserve(steps + 1);
    detail::push_point(r, m, s, noise.h());
    r.dB1_out.reserve(steps);
    r.dB2_out.reserve(steps);
    r.dN.reserve(steps);
  }
  std::vector<JumpEvent> jumps;
  for (std::int64_t n = 0; n < steps; ++n) {
    const double t0 = s.time;
    const cplx xi0 = s.xi;
    const OscillatorIncrement& inc = noise.next();
    const Signals left = signals(m, xi0, inc.h_left);
    // xi does not depend on the detection noise, so the right end is known
    // before the counts are drawn.
    step_xi(m, s, dt, inc.f_relaxed, inc.dY);
    const double j1 = lb2 * std::norm(s.xi);
    auto j_at = [&](double u) { return left.j + (j1 - left.j) * u; };
    auto xi_at = [&](double u) { return xi0 + (s.xi - xi0) * u; };

    jumps.clear();
    if (mode == Mode::reference) {
      const auto k = sample_reference_count(m.p.lambda, dt, count);
      std::vector<double> u(k);
      for (auto& x : u) x = count.uniform();
      std::sort(u.begin(), u.end());
      for (double x : u) jumps.push_back({t0 + x * dt, j_at(x), xi_at(x)});
    } else {
      // thinning against the exact maximum of the linear intensity
      const double jbar = std::max(left.j, j1);
      if (jbar > 0.0) {
        double tau = count.exponential() / jbar;
        while (tau < dt) {
          const double x = tau / dt;
          if (count.uniform() * jbar < j_at(x)) jumps.push_back({t0 + tau, j_at(x), xi_at(x)});
          tau += count.exponential() / jbar;
        }
      }
    }

    double dB1 = inc.dB1, dB2 = inc.dB2;
    if (mode == Mode::physical) {
      dB1 += left.m1 * dt;
      dB2 += left.m2 * dt;
      s.N += jumps.size();
    } else {
      const cplx dY1 = m.p.alpha2 * inc.f_integral + inc.dY;
      evolve_weight(m, s, dt, xi0, inc.h_left, dB1, dB2, dY1, 0.5 * (left.j + j1), jumps);
    }
    for (const auto& e : jumps) r.jump_times.push_back(e.time);

    if (opt.store_path) {
      detail::push_point(r, m, s, inc.h_right);
      r.dB1_out.push_back(dB1);
      r.dB2_out.push_back(dB2);
      r.dN.push_back(static_cast<std::uint32_t>(jumps.size()));
    }
    if (opt.observer) {
      OscillatorStep st;
      st.time = s.time;
      st.state = &s;
      st.left = left;
      st.dB1_out = dB1;
      st.dB2_out = dB2;
      st.dN = static_cast<std::uint32_t>(jumps.size());
      st.noise = &inc;
      opt.observer(st);
    }
  }
  r.final = s;
  r.truncation_warning = noise.truncation_warning();
  return r;
}

// ---------------------------------------------------------------------------
// Cross-validation against the generic Fock integrator

// Operators of the model at one instant. `drive` is the complex amplitude
// alpha2 f + sum X_j multiplying a^dagger in the Hamiltonian.
inline Channels oscillator_channels(const OscillatorModel& m, int dim, cplx h, cplx drive) {
  const FockOperator a = annihilation(dim), ad = creation(dim);
  const cplx I(0.0, 1.0);
  Channels c;
  c.H = m.p.nu0 * number_operator(dim) + std::conj(drive) * a + drive * ad;
  c.L.push_back(-I * std::conj(m.p.alpha1) * std::conj(h) * a);
  c.L.push_back(-I * std::conj(m.p.alpha2) * a);
  for (const auto& ch : m.p.channels) c.L.push_back(-I * (std::conj(ch.b) * a + ch.b * ad));
  if (m.p.lambda > 0.0) c.counting.push_back({std::conj(m.p.beta) * a, m.p.lambda});
  return c;
}

struct FidelityReport {
  std::vector<double> times;
  std::vector<double> fidelity;
  double min_fidelity = 1.0;
  double max_deficit = 0.0;
};

// Runs the Fock engine with step dt on the noise path drawn at the finer
// step dt / noise_substeps; the analytic track advances on the fine grid.
// Runs sharing seed and dt / noise_substeps therefore see the same path.
inline FidelityReport cross_validate_fock(const OscillatorModel& m, double horizon, double dt, std::uint64_t seed,
                                          int dim, int noise_substeps = 1, std::uint64_t traj = 0,
                                          const EngineOptions& eopt = {}) {
  if (!(horizon > 0.0)) throw InvalidArgument("cross_validate_fock: horizon must be > 0");
  if (!(dt > 0.0) || noise_substeps < 1) throw InvalidArgument("cross_validate_fock: bad step");
  const double h = dt / noise_substeps;
  const auto steps = std::max<std::int64_t>(1, std::llround(horizon / dt));
  OscillatorNoise noise(m, h, seed, traj);
  Stream count(seed, traj, "count");

  AnalyticState s = make_analytic_state(m);
  WeightedState q = make_state(make_coherent_vector(m.p.xi0, dim), m.p.lambda > 0.0 ? 1 : 0);
  const std::size_t nb = 2 + m.p.channels.size();

  FidelityReport rep;
  auto record = [&] {
    const FockVector e = make_coherent_vector(s.xi, dim);
    const double f = std::norm(q.vec.amps.dot(e.amps));
    rep.times.push_back(s.time);
    rep.fidelity.push_back(f);
    rep.min_fidelity = std::min(rep.min_fidelity, f);
    rep.max_deficit = std::max(rep.max_deficit, 1.0 - f);
  };
  record();

  std::vector<double> dB(nb);
  std::vector<std::uint32_t> dN(q.jump_counts.size());
  for (std::int64_t n = 0; n < steps; ++n) {
    std::fill(dB.begin(), dB.end(), 0.0);
    std::fill(dN.begin(), dN.end(), 0u);
    cplx f_int = 0.0, y_col = 0.0, h_left = noise.h();
    for (int k = 0; k < noise_substeps; ++k) {
      const OscillatorIncrement& inc = noise.next();
      dB[0] += inc.dB1;
      dB[1] += inc.dB2;
      for (std::size_t j = 0; j < inc.dBj.size(); ++j) dB[2 + j] += inc.dBj[j];
      f_int += inc.f_integral;
      y_col += inc.dY_colored;
      step_xi(m, s, h, inc.f_relaxed, inc.dY);
      if (!dN.empty()) dN[0] += static_cast<std::uint32_t>(sample_reference_count(m.p.lambda, h, count));
    }
    const cplx drive = (m.p.alpha2 * f_int + y_col) / dt;
    const Channels c = oscillator_channels(m, dim, h_left, drive);
    step_linear_sse(q, c, dt, dB, dN, eopt);
    if (q.absorbed) throw NumericalDegeneracy("cross_validate_fock: Fock state absorbed");
    record();
  }
  return rep;
}

}  // namespace qtraj
