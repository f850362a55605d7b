#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "qtraj/rng.hpp"

using namespace qtraj;

// Known-answer vectors from the Random123 distribution.
TEST(Philox, KnownAnswers) {
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}), (PhiloxBlock{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
            (PhiloxBlock{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (PhiloxBlock{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Stream, Deterministic) {
  Stream a(42, 7, "detect"), b(42, 7, "detect");
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.normal(), b.normal());
}

TEST(Stream, DistinctKeys) {
  Stream a(42, 7, "detect"), b(42, 7, "forward"), c(42, 8, "detect"), d(43, 7, "detect");
  const double x = a.uniform();
  EXPECT_NE(x, b.uniform());
  EXPECT_NE(x, c.uniform());
  EXPECT_NE(x, d.uniform());
}

TEST(Stream, UniformOpenInterval) {
  Stream s(1, 0, "u");
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_NEAR(sum / n, 0.5, 4 * std::sqrt(1.0 / 12 / n));
}

TEST(Stream, NormalMoments) {
  Stream s(3, 1, "n");
  const int n = 400000;
  double m1 = 0, m2 = 0, m4 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = s.normal();
    m1 += x;
    m2 += x * x;
    m4 += x * x * x * x;
  }
  m1 /= n;
  m2 /= n;
  m4 /= n;
  EXPECT_NEAR(m1, 0.0, 4 / std::sqrt(n));
  EXPECT_NEAR(m2, 1.0, 4 * std::sqrt(2.0 / n));
  EXPECT_NEAR(m4, 3.0, 4 * std::sqrt(96.0 / n));
}

TEST(Stream, PoissonMeanAndVariance) {
  for (double mean : {0.003, 0.7, 12.0, 95.0}) {
    Stream s(5, 2, "p");
    const int n = 100000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
      const double k = static_cast<double>(s.poisson(mean));
      sum += k;
      sum2 += k * k;
    }
    const double m = sum / n, v = sum2 / n - m * m;
    EXPECT_NEAR(m, mean, 4 * std::sqrt(mean / n)) << mean;
    EXPECT_NEAR(v, mean, 6 * mean * std::sqrt(2.0 / n) + 4 * std::sqrt(mean / n)) << mean;
  }
  Stream s(5, 2, "p");
  EXPECT_EQ(s.poisson(0.0), 0u);
  EXPECT_THROW(s.poisson(-1.0), InvalidArgument);
}
