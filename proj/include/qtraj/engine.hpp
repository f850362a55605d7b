#pragma once

// Generic trajectory integrators: linear and nonlinear SSE, linear and
// nonlinear SME, for operator processes sampled at the left end of each step.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qtraj/fock.hpp"
#include "qtraj/rng.hpp"

namespace qtraj {

struct CountingChannel {
  FockOperator R;
  double intensity = 0.0;  // reference intensity i_k(t) >= 0
};

// Operator values at one instant.
struct Channels {
  FockOperator H;
  std::vector<FockOperator> L;  // diffusive
  std::vector<CountingChannel> counting;

  int dim() const { return static_cast<int>(H.rows()); }
};

// An adapted operator process t -> Channels. It is queried once per step at
// the left end point, so it may read any state advanced in lockstep.
using ChannelProcess = std::function<Channels(double t)>;

inline constexpr double kHermiticityTol = 1e-10;

inline void validate_channels(const Channels& c) {
  const auto d = c.H.rows();
  if (c.H.cols() != d) throw InvalidArgument("H must be square");
  if ((c.H - c.H.adjoint()).norm() > kHermiticityTol * (1.0 + c.H.norm()))
    throw InvalidArgument("H must be Hermitian");
  for (const auto& L : c.L)
    if (L.rows() != d || L.cols() != d) throw InvalidArgument("diffusive operator shape mismatch");
  for (const auto& k : c.counting) {
    if (!(k.intensity >= 0.0)) throw InvalidArgument("counting intensity must be >= 0");
    if (k.R.rows() != d || k.R.cols() != d) throw InvalidArgument("jump operator shape mismatch");
  }
}

// K = -iH - 1/2 sum L^+L + 1/2 sum i_k (1 - R^+R)
inline FockOperator build_drift_K(const FockOperator& H, const std::vector<FockOperator>& Ls,
                                  const std::vector<CountingChannel>& counting) {
  Channels c{H, Ls, counting};
  validate_channels(c);
  const auto d = H.rows();
  FockOperator K = cplx(0.0, -1.0) * H;
  for (const auto& L : Ls) K.noalias() -= 0.5 * (L.adjoint() * L);
  for (const auto& k : counting) {
    if (k.intensity == 0.0) continue;
    K += 0.5 * k.intensity * (FockOperator::Identity(d, d) - k.R.adjoint() * k.R);
  }
  return K;
}

inline FockOperator build_drift_K(const Channels& c) { return build_drift_K(c.H, c.L, c.counting); }

// State of one trajectory. `vec` is always the unit direction; in linear mode
// the unnormalized solution is phi = exp(log_weight / 2) * vec, so the
// weight p = |phi|^2 never underflows in storage.
struct WeightedState {
  FockVector vec;
  double log_weight = 0.0;
  std::vector<std::uint64_t> jump_counts;
  double time = 0.0;
  bool absorbed = false;
  std::uint64_t rejected_steps = 0;

  double weight() const { return absorbed ? 0.0 : std::exp(log_weight); }
  Eigen::VectorXcd phi() const { return std::sqrt(weight()) * vec.amps; }
};

inline WeightedState make_state(const FockVector& psi0, std::size_t n_counting) {
  WeightedState s;
  const double n2 = psi0.norm2();
  if (!(n2 > 0.0)) throw InvalidArgument("initial vector must be nonzero");
  s.vec = psi0;
  s.vec.amps /= std::sqrt(n2);
  s.log_weight = std::log(n2);
  s.jump_counts.assign(n_counting, 0);
  return s;
}

struct EngineOptions {
  double truncation_threshold = kDefaultTruncationThreshold;
  double underflow = 1e-300;
  double thinning_safety = 1.5;
  // Intensity floor, relative to i_k, used for the thinning bound so that a
  // channel starting at zero rate does not force endless halving.
  double thinning_floor = 1e-3;
  int max_halvings = 20;
  double norm_alarm = 0.1;
};

namespace detail {

inline void check_truncation(const Eigen::VectorXcd& v, const EngineOptions& opt) {
  if (top_occupation(v) > opt.truncation_threshold)
    throw TruncationOverflow("top Fock level occupation exceeds threshold; increase dim");
}

inline void check_truncation(const DensityMatrix& rho, const EngineOptions& opt) {
  if (top_occupation(rho) > opt.truncation_threshold)
    throw TruncationOverflow("top Fock level occupation exceeds threshold; increase dim");
}

// Candidate jumps of a thinned Poisson process over a step, intensity linear
// between j0 and j1 and dominated by jbar. Returns the accepted count.
inline std::uint32_t thinned_count(double j0, double j1, double jbar, double dt, Stream& rng) {
  std::uint32_t n = 0;
  if (jbar <= 0.0) return 0;
  double tau = rng.exponential() / jbar;
  while (tau < dt) {
    const double j = j0 + (j1 - j0) * tau / dt;
    if (rng.uniform() * jbar < j) ++n;
    tau += rng.exponential() / jbar;
  }
  return n;
}

}  // namespace detail

// Euler-Maruyama step of the linear SSE under the reference probability:
// dphi = K phi dt + sum L_i phi dB_i + sum (R_k - 1) phi dN_k.
// Every jump counted in dN is applied.
// K must equal build_drift_K(c); callers with constant channels reuse it.
inline void step_linear_sse(WeightedState& s, const Channels& c, const FockOperator& K, double dt,
                            std::span<const double> dB, std::span<const std::uint32_t> dN,
                            const EngineOptions& opt = {}) {
  if (!(dt > 0.0)) throw InvalidArgument("step_linear_sse: dt must be > 0");
  if (dB.size() != c.L.size() || dN.size() != c.counting.size())
    throw InvalidArgument("step_linear_sse: noise count mismatch");
  s.time += dt;
  if (s.absorbed) return;
  Eigen::VectorXcd v = s.vec.amps + dt * (K * s.vec.amps);
  for (std::size_t i = 0; i < c.L.size(); ++i) v.noalias() += dB[i] * (c.L[i] * s.vec.amps);
  for (std::size_t k = 0; k < c.counting.size(); ++k)
    for (std::uint32_t n = 0; n < dN[k]; ++n) {
      v = c.counting[k].R * v;
      ++s.jump_counts[k];
    }
  const double n2 = v.squaredNorm();
  if (!(n2 > 0.0) || s.log_weight + std::log(n2) < std::log(opt.underflow)) {
    s.absorbed = true;
    s.log_weight = -std::numeric_limits<double>::infinity();
    s.vec = FockVector::basis(s.vec.dim(), 0);
    return;
  }
  s.vec.amps = v / std::sqrt(n2);
  s.log_weight += std::log(n2);
  detail::check_truncation(s.vec.amps, opt);
}

inline void step_linear_sse(WeightedState& s, const Channels& c, double dt, std::span<const double> dB,
                            std::span<const std::uint32_t> dN, const EngineOptions& opt = {}) {
  step_linear_sse(s, c, build_drift_K(c), dt, dB, dN, opt);
}

namespace detail {

inline void nonlinear_substep(WeightedState& s, const Channels& c, const FockOperator& K, double dt,
                              std::span<const double> dW, Stream& rng, const EngineOptions& opt, int depth) {
  const Eigen::VectorXcd& psi = s.vec.amps;
  const std::size_t nl = c.L.size(), nk = c.counting.size();
  std::vector<Eigen::VectorXcd> Lpsi(nl);
  std::vector<double> m(nl), j0(nk);
  Eigen::VectorXcd drift = K * psi;
  double scalar = 0.0;
  for (std::size_t i = 0; i < nl; ++i) {
    Lpsi[i] = c.L[i] * psi;
    m[i] = 2.0 * psi.dot(Lpsi[i]).real();
    drift.noalias() += 0.5 * m[i] * Lpsi[i];
    scalar -= m[i] * m[i] / 8.0;
  }
  for (std::size_t k = 0; k < nk; ++k) {
    j0[k] = c.counting[k].intensity * (c.counting[k].R * psi).squaredNorm();
    scalar += 0.5 * (j0[k] - c.counting[k].intensity);
  }
  Eigen::VectorXcd v = psi + dt * (drift + scalar * psi);
  for (std::size_t i = 0; i < nl; ++i) v.noalias() += dW[i] * (Lpsi[i] - 0.5 * m[i] * psi);

  bool reject = std::abs(v.squaredNorm() - 1.0) > opt.norm_alarm;
  v.normalize();
  std::vector<double> j1(nk), jbar(nk);
  for (std::size_t k = 0; k < nk && !reject; ++k) {
    const double ik = c.counting[k].intensity;
    j1[k] = ik * (c.counting[k].R * v).squaredNorm();
    jbar[k] = opt.thinning_safety * std::max(j0[k], opt.thinning_floor * ik);
    if (j1[k] > jbar[k]) reject = true;
  }
  if (reject && depth < opt.max_halvings) {
    ++s.rejected_steps;
    // Brownian bridge split of the step's increments
    std::vector<double> a(nl), b(nl);
    for (std::size_t i = 0; i < nl; ++i) {
      a[i] = 0.5 * dW[i] + std::sqrt(dt / 4.0) * rng.normal();
      b[i] = dW[i] - a[i];
    }
    nonlinear_substep(s, c, K, 0.5 * dt, a, rng, opt, depth + 1);
    nonlinear_substep(s, c, K, 0.5 * dt, b, rng, opt, depth + 1);
    return;
  }
  for (std::size_t k = 0; k < nk; ++k) {
    if (reject) {
      j1[k] = c.counting[k].intensity * (c.counting[k].R * v).squaredNorm();
      jbar[k] = opt.thinning_safety * std::max({j0[k], j1[k], opt.thinning_floor * c.counting[k].intensity});
    }
    const std::uint32_t n = thinned_count(j0[k], j1[k], jbar[k], dt, rng);
    for (std::uint32_t q = 0; q < n; ++q) {
      Eigen::VectorXcd r = c.counting[k].R * v;
      const double rn = r.norm();
      if (!(rn > 0.0)) throw NumericalDegeneracy("accepted jump with |R psi| = 0");
      v = r / rn;
      ++s.jump_counts[k];
    }
  }
  s.vec.amps = v;
}

}  // namespace detail

// Nonlinear SSE under the physical probability. Diffusive increments dW are
// supplied; jumps are drawn from `rng` by thinning at j_k = i_k |R_k psi|^2.
// A step whose end-point intensity exceeds the thinning bound is rejected and
// retried as two halves.
inline void step_nonlinear_sse(WeightedState& s, const Channels& c, const FockOperator& K, double dt,
                               std::span<const double> dW, Stream& rng, const EngineOptions& opt = {}) {
  if (!(dt > 0.0)) throw InvalidArgument("step_nonlinear_sse: dt must be > 0");
  if (dW.size() != c.L.size()) throw InvalidArgument("step_nonlinear_sse: noise count mismatch");
  detail::nonlinear_substep(s, c, K, dt, dW, rng, opt, 0);
  s.time += dt;
  detail::check_truncation(s.vec.amps, opt);
}

inline void step_nonlinear_sse(WeightedState& s, const Channels& c, double dt, std::span<const double> dW,
                               Stream& rng, const EngineOptions& opt = {}) {
  step_nonlinear_sse(s, c, build_drift_K(c), dt, dW, rng, opt);
}

// Output signals m_i = 2 Re <psi|L_i psi> of a normalized state.
inline std::vector<double> diffusive_signals(const WeightedState& s, const Channels& c) {
  std::vector<double> m;
  for (const auto& L : c.L) m.push_back(2.0 * s.vec.amps.dot(L * s.vec.amps).real());
  return m;
}

// ---------------------------------------------------------------------------
// Stochastic master equations

struct WeightedDensity {
  DensityMatrix rho;  // unit trace; linear mode keeps the trace in log_weight
  double log_weight = 0.0;
  std::vector<std::uint64_t> jump_counts;
  double time = 0.0;
  bool absorbed = false;
  std::uint64_t rejected_steps = 0;

  double weight() const { return absorbed ? 0.0 : std::exp(log_weight); }
};

inline WeightedDensity make_density(const DensityMatrix& rho0, std::size_t n_counting) {
  WeightedDensity w;
  const double tr = rho0.trace().real();
  if (!(tr > 0.0)) throw InvalidArgument("initial density matrix must have positive trace");
  w.rho = rho0 / tr;
  hermitize(w.rho);
  w.log_weight = std::log(tr);
  w.jump_counts.assign(n_counting, 0);
  return w;
}

enum class SmeMode { linear, nonlinear };

// Linear SME: dsigma = L[sigma] dt + sum (L sigma + sigma L^+) dB
//   + sum (R sigma R^+ - sigma)(dN - i dt).
inline void step_linear_sme(WeightedDensity& w, const Channels& c, double dt, std::span<const double> dB,
                            std::span<const std::uint32_t> dN, const EngineOptions& opt = {}) {
  if (!(dt > 0.0)) throw InvalidArgument("step_sme: dt must be > 0");
  if (dB.size() != c.L.size() || dN.size() != c.counting.size())
    throw InvalidArgument("step_sme: noise count mismatch");
  w.time += dt;
  if (w.absorbed) return;
  const FockOperator K = build_drift_K(c);
  const DensityMatrix& r = w.rho;
  DensityMatrix next = r + dt * (K * r + r * K.adjoint());
  for (std::size_t i = 0; i < c.L.size(); ++i) {
    const DensityMatrix Lr = c.L[i] * r;
    next += dt * (Lr * c.L[i].adjoint()) + dB[i] * (Lr + Lr.adjoint());
  }
  for (std::size_t k = 0; k < c.counting.size(); ++k)
    for (std::uint32_t n = 0; n < dN[k]; ++n) {
      next = c.counting[k].R * next * c.counting[k].R.adjoint();
      ++w.jump_counts[k];
    }
  hermitize(next);
  const double tr = next.trace().real();
  if (!(tr > 0.0) || w.log_weight + std::log(tr) < std::log(opt.underflow)) {
    w.absorbed = true;
    w.log_weight = -std::numeric_limits<double>::infinity();
    return;
  }
  w.rho = next / tr;
  w.log_weight += std::log(tr);
  detail::check_truncation(w.rho, opt);
}

namespace detail {

inline void nonlinear_sme_substep(WeightedDensity& w, const Channels& c, const FockOperator& K, double dt,
                                  std::span<const double> dW, Stream& rng, const EngineOptions& opt,
                                  int depth) {
  const DensityMatrix& r = w.rho;
  const std::size_t nl = c.L.size(), nk = c.counting.size();
  DensityMatrix next = r + dt * (K * r + r * K.adjoint());
  for (std::size_t i = 0; i < nl; ++i) {
    const DensityMatrix Lr = c.L[i] * r;
    const double m = 2.0 * Lr.trace().real();
    next += dt * (Lr * c.L[i].adjoint()) + dW[i] * (Lr + Lr.adjoint() - m * r);
  }
  std::vector<double> j0(nk), j1(nk), jbar(nk);
  double scalar = 0.0;
  for (std::size_t k = 0; k < nk; ++k) {
    const auto& R = c.counting[k].R;
    j0[k] = c.counting[k].intensity * (R.adjoint() * R * r).trace().real();
    scalar += j0[k] - c.counting[k].intensity;
  }
  next += dt * scalar * r;
  hermitize(next);
  const double tr = next.trace().real();
  bool reject = !(tr > 0.0) || std::abs(tr - 1.0) > opt.norm_alarm;
  if (tr > 0.0) next /= tr;
  for (std::size_t k = 0; k < nk && !reject; ++k) {
    const auto& R = c.counting[k].R;
    const double ik = c.counting[k].intensity;
    j1[k] = ik * (R.adjoint() * R * next).trace().real();
    jbar[k] = opt.thinning_safety * std::max(j0[k], opt.thinning_floor * ik);
    if (j1[k] > jbar[k]) reject = true;
  }
  if (reject && depth < opt.max_halvings) {
    ++w.rejected_steps;
    std::vector<double> a(nl), b(nl);
    for (std::size_t i = 0; i < nl; ++i) {
      a[i] = 0.5 * dW[i] + std::sqrt(dt / 4.0) * rng.normal();
      b[i] = dW[i] - a[i];
    }
    nonlinear_sme_substep(w, c, K, 0.5 * dt, a, rng, opt, depth + 1);
    nonlinear_sme_substep(w, c, K, 0.5 * dt, b, rng, opt, depth + 1);
    return;
  }
  if (!(tr > 0.0)) throw NumericalDegeneracy("nonlinear SME lost positivity of the trace");
  for (std::size_t k = 0; k < nk; ++k) {
    const auto& R = c.counting[k].R;
    if (reject) {
      j1[k] = c.counting[k].intensity * (R.adjoint() * R * next).trace().real();
      jbar[k] = opt.thinning_safety * std::max({j0[k], j1[k], opt.thinning_floor * c.counting[k].intensity});
    }
    const std::uint32_t n = thinned_count(j0[k], j1[k], jbar[k], dt, rng);
    for (std::uint32_t q = 0; q < n; ++q) {
      DensityMatrix jumped = R * next * R.adjoint();
      const double den = jumped.trace().real();
      if (!(den > 0.0)) throw NumericalDegeneracy("accepted jump with Tr(R^+R rho) = 0");
      next = jumped / den;
      ++w.jump_counts[k];
    }
  }
  hermitize(next);
  w.rho = next;
}

}  // namespace detail

inline void step_nonlinear_sme(WeightedDensity& w, const Channels& c, double dt, std::span<const double> dW,
                               Stream& rng, const EngineOptions& opt = {}) {
  if (!(dt > 0.0)) throw InvalidArgument("step_sme: dt must be > 0");
  if (dW.size() != c.L.size()) throw InvalidArgument("step_sme: noise count mismatch");
  const FockOperator K = build_drift_K(c);
  detail::nonlinear_sme_substep(w, c, K, dt, dW, rng, opt, 0);
  w.time += dt;
  detail::check_truncation(w.rho, opt);
}

// Mode dispatch. Linear mode reads dB and dN; nonlinear mode reads dB as the
// physical-probability increments dW and samples jumps from `rng`.
inline void step_sme(WeightedDensity& w, SmeMode mode, const Channels& c, double dt, std::span<const double> dB,
                     std::span<const std::uint32_t> dN, Stream& rng, const EngineOptions& opt = {}) {
  if (mode == SmeMode::linear)
    step_linear_sme(w, c, dt, dB, dN, opt);
  else
    step_nonlinear_sme(w, c, dt, dB, rng, opt);
}

// ---------------------------------------------------------------------------
// Drivers

enum class Measure { reference, physical };

struct TrajectoryNoise {
  Stream diffusive;
  Stream counting;

  TrajectoryNoise(std::uint64_t seed, std::uint64_t traj)
      : diffusive(seed, traj, "engine/diffusive"), counting(seed, traj, "engine/count") {}
};

namespace detail {

template <class Source>
WeightedState run_sse_impl(Source&& source, bool constant, const FockVector& psi0, double horizon, double dt,
                           Measure measure, std::uint64_t seed, std::uint64_t traj, const EngineOptions& opt,
                           const std::function<void(const WeightedState&)>& observer) {
  if (!(horizon > 0.0)) throw InvalidArgument("run_sse: horizon must be > 0");
  if (!(dt > 0.0)) throw InvalidArgument("run_sse: dt must be > 0");
  TrajectoryNoise noise(seed, traj);
  const Channels& first = source(0.0);
  WeightedState s = make_state(psi0, first.counting.size());
  if (measure == Measure::physical) s.log_weight = 0.0;
  FockOperator K = build_drift_K(first);
  const auto steps = static_cast<std::int64_t>(std::llround(horizon / dt));
  std::vector<double> dB;
  std::vector<std::uint32_t> dN;
  for (std::int64_t n = 0; n < steps; ++n) {
    const Channels& c = source(static_cast<double>(n) * dt);
    if (!constant && n > 0) K = build_drift_K(c);
    dB.resize(c.L.size());
    for (auto& x : dB) x = std::sqrt(dt) * noise.diffusive.normal();
    if (measure == Measure::reference) {
      dN.resize(c.counting.size());
      for (std::size_t k = 0; k < dN.size(); ++k)
        dN[k] = static_cast<std::uint32_t>(noise.counting.poisson(c.counting[k].intensity * dt));
      step_linear_sse(s, c, K, dt, dB, dN, opt);
    } else {
      step_nonlinear_sse(s, c, K, dt, dB, noise.counting, opt);
    }
    s.time = static_cast<double>(n + 1) * dt;
    if (observer) observer(s);
  }
  return s;
}

}  // namespace detail

// Integrates one SSE trajectory on a fixed grid. Reference measure uses the
// linear SSE with Poisson(i_k dt) counts; physical measure the nonlinear SSE.
inline WeightedState run_sse(const ChannelProcess& process, const FockVector& psi0, double horizon, double dt,
                             Measure measure, std::uint64_t seed, std::uint64_t traj,
                             const EngineOptions& opt = {},
                             const std::function<void(const WeightedState&)>& observer = {}) {
  Channels current;
  auto source = [&](double t) -> const Channels& {
    current = process(t);
    return current;
  };
  return detail::run_sse_impl(source, false, psi0, horizon, dt, measure, seed, traj, opt, observer);
}

// Time-independent channels: K is built once.
inline WeightedState run_sse(const Channels& channels, const FockVector& psi0, double horizon, double dt,
                             Measure measure, std::uint64_t seed, std::uint64_t traj,
                             const EngineOptions& opt = {},
                             const std::function<void(const WeightedState&)>& observer = {}) {
  auto source = [&](double) -> const Channels& { return channels; };
  return detail::run_sse_impl(source, true, psi0, horizon, dt, measure, seed, traj, opt, observer);
}

// ---------------------------------------------------------------------------
// A priori state

struct AprioriEstimate {
  DensityMatrix eta;
  Eigen::MatrixXd se;  // elementwise standard error (modulus of complex SE)
  double ess = 0.0;
  bool low_ess = false;
};

namespace detail {

template <class Sample>
AprioriEstimate accumulate_apriori(const std::vector<Sample>& samples, std::size_t n, double ess_floor) {
  if (n < 2) throw InvalidArgument("estimate_apriori_state: need >= 2 trajectories");
  AprioriEstimate est;
  DensityMatrix sum, sum_re2, sum_im2;
  double wsum = 0.0, w2sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [w, rho] = samples[i];
    if (i == 0) {
      const auto d = rho.rows();
      sum = DensityMatrix::Zero(d, d);
      sum_re2 = DensityMatrix::Zero(d, d);
      sum_im2 = DensityMatrix::Zero(d, d);
    }
    if (w == 0.0) continue;
    const DensityMatrix x = w * rho;
    sum += x;
    sum_re2 += x.real().cwiseAbs2().cast<cplx>();
    sum_im2 += x.imag().cwiseAbs2().cast<cplx>();
    wsum += w;
    w2sum += w * w;
  }
  const double N = static_cast<double>(n);
  est.eta = sum / N;
  hermitize(est.eta);
  const Eigen::MatrixXd var_re = sum_re2.real() / N - est.eta.real().cwiseAbs2();
  const Eigen::MatrixXd var_im = sum_im2.real() / N - est.eta.imag().cwiseAbs2();
  est.se = ((var_re + var_im).cwiseMax(0.0) / (N - 1.0)).cwiseSqrt();
  est.ess = w2sum > 0.0 ? wsum * wsum / w2sum : 0.0;
  est.low_ess = est.ess < ess_floor;
  return est;
}

}  // namespace detail

// Weighted mode: eta = E_Q[p |psi><psi|]; plain mode: eta = E_P[|psi><psi|].
inline AprioriEstimate estimate_apriori_state(const std::vector<WeightedState>& ensemble, bool weighted,
                                              double ess_floor = 30.0) {
  std::vector<std::pair<double, DensityMatrix>> s;
  s.reserve(ensemble.size());
  for (const auto& t : ensemble)
    s.emplace_back(weighted ? t.weight() : 1.0, t.vec.amps * t.vec.amps.adjoint());
  return detail::accumulate_apriori(s, s.size(), ess_floor);
}

inline AprioriEstimate estimate_apriori_state(const std::vector<WeightedDensity>& ensemble, bool weighted,
                                              double ess_floor = 30.0) {
  std::vector<std::pair<double, DensityMatrix>> s;
  s.reserve(ensemble.size());
  for (const auto& t : ensemble) s.emplace_back(weighted ? t.weight() : 1.0, t.rho);
  return detail::accumulate_apriori(s, s.size(), ess_floor);
}

}  // namespace qtraj
