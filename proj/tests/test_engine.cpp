#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qtraj/engine.hpp"

using namespace qtraj;

namespace {

constexpr int kDim = 8;

Channels driven_cavity(double drive = 0.4, double count_rate = 0.8) {
  const auto a = annihilation(kDim), ad = creation(kDim);
  Channels c;
  c.H = 1.0 * ad * a + drive * (a + ad);
  c.L = {0.5 * a, 0.3 * (a - ad)};
  c.counting = {{a, count_rate}};
  return c;
}

EngineOptions loose() {
  EngineOptions o;
  o.truncation_threshold = 1e-2;
  return o;
}

struct MeanSe {
  double mean = 0, se = 0;
};

MeanSe mean_se(const std::vector<double>& x) {
  double s = 0, s2 = 0;
  for (double v : x) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(x.size());
  const double m = s / n;
  return {m, std::sqrt(std::max(s2 / n - m * m, 0.0) / (n - 1))};
}

}  // namespace

TEST(DriftK, Examples) {
  const auto a = annihilation(2);
  auto K = build_drift_K(FockOperator::Zero(2, 2), {a}, {});
  EXPECT_NEAR((K - Eigen::Vector2cd(0.0, -0.5).asDiagonal().toDenseMatrix()).norm(), 0.0, 1e-15);
  K = build_drift_K(FockOperator::Zero(2, 2), {a}, {{a, 2.0}});
  EXPECT_NEAR((K - Eigen::Vector2cd(1.0, -0.5).asDiagonal().toDenseMatrix()).norm(), 0.0, 1e-15);
  EXPECT_THROW(build_drift_K(FockOperator::Zero(2, 2), {a}, {{a, -1.0}}), InvalidArgument);
  FockOperator notH = FockOperator::Zero(2, 2);
  notH(0, 1) = 1.0;
  EXPECT_THROW(build_drift_K(notH, {}, {}), InvalidArgument);
}

TEST(DriftK, RandomIdentity) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  auto rnd = [&](int d) {
    FockOperator m(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) m(i, j) = {n(rng), n(rng)};
    return m;
  };
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 3 + trial;
    FockOperator H = rnd(d);
    H = 0.5 * (H + H.adjoint()).eval();
    std::vector<FockOperator> Ls{rnd(d), rnd(d)};
    std::vector<CountingChannel> cs{{rnd(d), 0.7}, {rnd(d), 2.1}};
    const auto K = build_drift_K(H, Ls, cs);
    FockOperator resid = K + K.adjoint();
    for (const auto& L : Ls) resid += L.adjoint() * L;
    for (const auto& k : cs) resid -= k.intensity * (FockOperator::Identity(d, d) - k.R.adjoint() * k.R);
    EXPECT_LT(resid.norm(), 1e-12 * (1 + K.norm()));
  }
}

TEST(LinearSse, NullDynamicsLeavesStateAlone) {
  Channels c{FockOperator::Zero(3, 3), {FockOperator::Zero(3, 3)}, {}};
  auto s = make_state(FockVector::basis(3, 1), 0);
  const double dB[1] = {0.7};
  for (int i = 0; i < 10; ++i) step_linear_sse(s, c, 0.1, dB, {});
  EXPECT_EQ(s.vec.amps, FockVector::basis(3, 1).amps);
  EXPECT_EQ(s.log_weight, 0.0);
}

TEST(LinearSse, JumpAppliesR) {
  const auto a = annihilation(4);
  Channels c{FockOperator::Zero(4, 4), {}, {{a, 1.3}}};
  FockVector v(4);
  v.amps << 0.1, 0.5, cplx(0.2, 0.4), 0.3;
  auto s = make_state(v, 1);
  const Eigen::VectorXcd phi0 = s.phi();
  const std::uint32_t one[1] = {1};
  const double dt = 1e-3;
  step_linear_sse(s, c, dt, {}, one);
  const Eigen::VectorXcd expect = a * (phi0 + dt * (build_drift_K(c) * phi0));
  EXPECT_LT((s.phi() - expect).norm(), 1e-13);
  EXPECT_EQ(s.jump_counts[0], 1u);
}

TEST(LinearSse, AbsorbedWhenJumpAnnihilates) {
  const auto a = annihilation(3);
  Channels c{FockOperator::Zero(3, 3), {}, {{a, 1.0}}};
  auto s = make_state(FockVector::basis(3, 0), 1);
  const std::uint32_t one[1] = {1};
  step_linear_sse(s, c, 0.01, {}, one);
  EXPECT_TRUE(s.absorbed);
  EXPECT_EQ(s.weight(), 0.0);
  step_linear_sse(s, c, 0.01, {}, one);
  EXPECT_TRUE(s.absorbed);
  EXPECT_NEAR(s.time, 0.02, 1e-15);
}

TEST(LinearSse, MeanOneMartingale) {
  const Channels c = driven_cavity();
  const Channels& proc = c;
  for (double T : {0.5, 2.0}) {
    std::vector<double> w;
    for (int k = 0; k < 10000; ++k)
      w.push_back(run_sse(proc, FockVector::basis(kDim, 0), T, 0.01, Measure::reference, 3, k, loose()).weight());
    const auto ms = mean_se(w);
    EXPECT_NEAR(ms.mean, 1.0, 3 * ms.se) << T;
    EXPECT_LT(ms.se, 0.05);
  }
}

// E_Q[p(t) 1_A] does not depend on t >= s for A observed by time s.
TEST(LinearSse, ConsistencyOfProbabilities) {
  const Channels c = driven_cavity();
  const Channels& proc = c;
  std::vector<double> early, late, diff;
  for (int k = 0; k < 10000; ++k) {
    double w_s = 0.0;
    bool A = false;
    auto obs = [&](const WeightedState& st) {
      if (std::abs(st.time - 1.0) < 1e-9) {
        w_s = st.weight();
        A = st.jump_counts[0] >= 1;
      }
    };
    const auto fin = run_sse(proc, FockVector::basis(kDim, 0), 2.0, 0.01, Measure::reference, 9, k, loose(), obs);
    early.push_back(A ? w_s : 0.0);
    late.push_back(A ? fin.weight() : 0.0);
    diff.push_back(late.back() - early.back());
  }
  const auto d = mean_se(diff);
  EXPECT_NEAR(d.mean, 0.0, 3 * d.se);
  EXPECT_GT(mean_se(early).mean, 0.05);
}

TEST(NonlinearSse, SelfAdjointIlGivesZeroSignal) {
  const auto a = annihilation(kDim), ad = creation(kDim);
  // i L self-adjoint for L = 0.3 (a - a^+)
  Channels c{ad * a + 0.2 * (a + ad), {0.3 * (a - ad)}, {}};
  auto s = make_state(make_coherent_vector(cplx(0.4, 0.2), kDim, 1.0), 0);
  s.log_weight = 0.0;
  Stream dw(1, 0, "w"), jr(1, 0, "j");
  for (int i = 0; i < 500; ++i) {
    EXPECT_NEAR(diffusive_signals(s, c)[0], 0.0, 1e-12);
    const double dW[1] = {0.1 * dw.normal()};
    step_nonlinear_sse(s, c, 0.01, dW, jr, loose());
    ASSERT_NEAR(s.vec.norm2(), 1.0, 1e-9);
  }
}

TEST(NonlinearSse, NormPreservedEveryStep) {
  const Channels c = driven_cavity();
  int steps = 0;
  const Channels& proc = c;
  run_sse(proc, FockVector::basis(kDim, 0), 3.0, 0.01, Measure::physical, 1, 0, loose(), [&](const WeightedState& s) {
    ++steps;
    ASSERT_NEAR(s.vec.norm2(), 1.0, 1e-9);
  });
  EXPECT_EQ(steps, 300);
}

// Girsanov two-mode oracle: E_Q[p N(T)] = E_P[N(T)].
TEST(NonlinearSse, CountsAgreeWithReweightedLinearMode) {
  const Channels c = driven_cavity(0.6, 1.5);
  const Channels& proc = c;
  std::vector<double> lin, nl;
  for (int k = 0; k < 10000; ++k) {
    const auto q = run_sse(proc, FockVector::basis(kDim, 0), 2.0, 0.01, Measure::reference, 21, k, loose());
    lin.push_back(q.weight() * static_cast<double>(q.jump_counts[0]));
    const auto p = run_sse(proc, FockVector::basis(kDim, 0), 2.0, 0.01, Measure::physical, 22, k, loose());
    nl.push_back(static_cast<double>(p.jump_counts[0]));
  }
  const auto a = mean_se(lin), b = mean_se(nl);
  EXPECT_GT(b.mean, 0.2);
  EXPECT_NEAR(a.mean, b.mean, 3 * std::hypot(a.se, b.se));
}

// Coarse steps from the vacuum force the thinning bound to be exceeded; the
// halved steps must still produce the right count law.
TEST(NonlinearSse, BoundViolationsHalveAndStayUnbiased) {
  const auto a = annihilation(kDim), ad = creation(kDim);
  Channels c{1.5 * (a + ad), {}, {{a, 1.0}}};
  const Channels& proc = c;
  std::vector<double> lin, nl;
  std::uint64_t rejected = 0;
  for (int k = 0; k < 10000; ++k) {
    const auto q = run_sse(proc, FockVector::basis(kDim, 0), 1.0, 0.002, Measure::reference, 31, k, loose());
    lin.push_back(q.weight() * static_cast<double>(q.jump_counts[0]));
    const auto p = run_sse(proc, FockVector::basis(kDim, 0), 1.0, 0.05, Measure::physical, 32, k, loose());
    rejected += p.rejected_steps;
    nl.push_back(static_cast<double>(p.jump_counts[0]));
  }
  EXPECT_GT(rejected, 0u);
  const auto x = mean_se(lin), y = mean_se(nl);
  // the coarse physical run carries O(dt) bias on top of sampling error
  EXPECT_NEAR(x.mean, y.mean, 3 * std::hypot(x.se, y.se) + 0.05 * x.mean);
}

TEST(Sme, PureStateConsistency) {
  Channels c = driven_cavity();
  // keep the jump map invertible so rare-event weights stay comparable
  c.counting[0].R = 0.5 * FockOperator::Identity(kDim, kDim) + annihilation(kDim);
  // the Ito correction dB^2 - dt separates the two per path, so the gap
  // shrinks like sqrt(dt)
  auto gap = [&](double dt) {
    double total = 0.0;
    for (int k = 0; k < 20; ++k) {
      auto s = make_state(FockVector::basis(kDim, 0), 1);
      auto w = make_density(s.vec.amps * s.vec.amps.adjoint(), 1);
      Stream fine(4, k, "fine"), jumps(4, k, "jumps");
      const double T = 1.0;
      const double h = 2.5e-4;
      const int sub = static_cast<int>(std::lround(dt / h));
      double next_jump = jumps.exponential() / 0.8;
      for (int n = 0; n < static_cast<int>(std::lround(T / dt)); ++n) {
        double dB[2] = {0, 0};
        for (int q = 0; q < sub; ++q) {
          dB[0] += std::sqrt(h) * fine.normal();
          dB[1] += std::sqrt(h) * fine.normal();
        }
        std::uint32_t dN[1] = {0};
        while (next_jump < (n + 1) * dt) {
          ++dN[0];
          next_jump += jumps.exponential() / 0.8;
        }
        step_linear_sse(s, c, dt, dB, dN, loose());
        step_linear_sme(w, c, dt, dB, dN, loose());
      }
      const DensityMatrix a = s.weight() * s.vec.amps * s.vec.amps.adjoint();
      const DensityMatrix b = w.weight() * w.rho;
      total += (a - b).norm() / a.norm();
    }
    return total / 20;
  };
  const double g1 = gap(4e-3), g3 = gap(2.5e-4);
  EXPECT_LT(g3, 0.4 * g1);
  EXPECT_GT(g3, 0.1 * g1);
}

TEST(Sme, NonlinearTraceIsOne) {
  const Channels c = driven_cavity();
  const auto vac = FockVector::basis(kDim, 0).amps;
  auto w = make_density(vac * vac.adjoint(), 1);
  Stream dw(2, 0, "w"), jr(2, 0, "j");
  for (int i = 0; i < 300; ++i) {
    const double dW[2] = {0.1 * dw.normal(), 0.1 * dw.normal()};
    step_sme(w, SmeMode::nonlinear, c, 0.01, dW, {}, jr, loose());
    ASSERT_NEAR(w.rho.trace().real(), 1.0, 1e-9);
    ASSERT_LT((w.rho - w.rho.adjoint()).norm(), 1e-14);
  }
}

TEST(Sme, UnitaryCaseKeepsSpectrum) {
  const auto a = annihilation(4), ad = creation(4);
  Channels c{ad * a + 0.5 * (a + ad), {}, {}};
  DensityMatrix rho = DensityMatrix::Zero(4, 4);
  rho(0, 0) = 0.6;
  rho(1, 1) = 0.3;
  rho(2, 2) = 0.1;
  rho(0, 1) = rho(1, 0) = 0.1;
  auto w = make_density(rho, 0);
  const Eigen::VectorXd ev0 = Eigen::SelfAdjointEigenSolver<DensityMatrix>(rho).eigenvalues();
  Stream rng(1, 0, "x");
  for (int i = 0; i < 1000; ++i) step_sme(w, SmeMode::linear, c, 1e-4, {}, {}, rng, loose());
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<DensityMatrix>(w.rho).eigenvalues();
  EXPECT_LT((ev - ev0).norm(), 1e-4);
  EXPECT_GT((w.rho - rho).norm(), 1e-3);
}

TEST(Apriori, DeterministicTrajectoryGivesItsProjector) {
  WeightedState s = make_state(make_coherent_vector(0.3, 6, 1.0), 0);
  s.log_weight = 0.0;
  const auto est = estimate_apriori_state(std::vector<WeightedState>{s, s, s}, false);
  EXPECT_LT((est.eta - s.vec.amps * s.vec.amps.adjoint()).norm(), 1e-14);
  EXPECT_LT(est.se.maxCoeff(), 1e-12);
  EXPECT_THROW(estimate_apriori_state(std::vector<WeightedState>{s}, false), InvalidArgument);
}

TEST(Apriori, LinearAndNonlinearAgree) {
  const Channels c = driven_cavity(0.5, 0.8);
  const Channels& proc = c;
  std::vector<WeightedState> lin, nl;
  for (int k = 0; k < 10000; ++k) {
    lin.push_back(run_sse(proc, FockVector::basis(kDim, 0), 1.5, 0.01, Measure::reference, 41, k, loose()));
    nl.push_back(run_sse(proc, FockVector::basis(kDim, 0), 1.5, 0.01, Measure::physical, 42, k, loose()));
  }
  const auto a = estimate_apriori_state(lin, true), b = estimate_apriori_state(nl, false);
  EXPECT_FALSE(a.low_ess);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double tol = 3 * std::hypot(a.se(i, j), b.se(i, j)) + 1e-12;
      EXPECT_LT(std::abs(a.eta(i, j) - b.eta(i, j)), tol) << i << "," << j;
    }
  for (const auto* e : {&a, &b}) {
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<DensityMatrix>(e->eta).eigenvalues();
    EXPECT_GE(ev.minCoeff(), -1e-9);
    EXPECT_LT((e->eta - e->eta.adjoint()).norm(), 1e-14);
  }
  EXPECT_NEAR(b.eta.trace().real(), 1.0, 1e-12);
  EXPECT_NEAR(a.eta.trace().real(), 1.0, 0.05);
}
