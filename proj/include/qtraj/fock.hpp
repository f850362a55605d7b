#pragma once

// Dense linear algebra on the truncated number basis |0>, ..., |dim-1>.

#include <cmath>
#include <complex>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qtraj/errors.hpp"

namespace qtraj {

using cplx = std::complex<double>;
using FockOperator = Eigen::MatrixXcd;
using DensityMatrix = Eigen::MatrixXcd;

inline constexpr double kDefaultTruncationThreshold = 1e-6;

struct FockVector {
  Eigen::VectorXcd amps;
  // Probability mass known to lie outside the basis (exact for coherent
  // vectors, accumulated from a-dagger overflow otherwise).
  double leakage = 0.0;
  bool truncated = false;

  FockVector() = default;
  explicit FockVector(int dim) : amps(Eigen::VectorXcd::Zero(check_dim(dim))) {}
  explicit FockVector(Eigen::VectorXcd a) : amps(std::move(a)) { check_dim(static_cast<int>(amps.size())); }

  int dim() const { return static_cast<int>(amps.size()); }
  double norm2() const { return amps.squaredNorm(); }

  static FockVector basis(int dim, int n) {
    FockVector v(dim);
    if (n < 0 || n >= dim) throw InvalidArgument("basis index out of range");
    v.amps[n] = 1.0;
    return v;
  }

 private:
  static int check_dim(int dim) {
    if (dim < 1) throw InvalidArgument("Fock dimension must be >= 1");
    return dim;
  }
};

inline FockOperator annihilation(int dim) {
  if (dim < 1) throw InvalidArgument("Fock dimension must be >= 1");
  FockOperator a = FockOperator::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

inline FockOperator creation(int dim) { return annihilation(dim).adjoint(); }

inline FockOperator number_operator(int dim) {
  FockOperator n = FockOperator::Zero(dim, dim);
  for (int k = 0; k < dim; ++k) n(k, k) = static_cast<double>(k);
  return n;
}

// e(xi) = exp(-|xi|^2/2) sum_n xi^n/sqrt(n!) |n>.
inline FockVector make_coherent_vector(cplx xi, int dim, double leakage_cap = kDefaultTruncationThreshold) {
  if (dim <= 0) throw InvalidArgument("make_coherent_vector: dim must be >= 1");
  const double x2 = std::norm(xi);
  FockVector v(dim);
  cplx amp = std::exp(-0.5 * x2);
  for (int n = 0; n < dim; ++n) {
    if (n > 0) amp *= xi / std::sqrt(static_cast<double>(n));
    v.amps[n] = amp;
  }
  // Poisson tail P(N >= dim), summed directly rather than as 1 - sum.
  double term = std::norm(amp) * x2 / dim;
  double tail = 0.0;
  for (int n = dim; term > 0.0 && n < dim + 100000; ++n) {
    tail += term;
    if (n > x2 && term < 1e-18 * tail) break;
    term *= x2 / (n + 1);
  }
  v.leakage = tail;
  if (v.leakage > leakage_cap)
    throw TruncationOverflow("coherent vector leakage " + std::to_string(v.leakage) + " exceeds cap at dim " +
                             std::to_string(dim));
  return v;
}

enum class Ladder { annihilate, create };

inline FockVector apply_ladder(Ladder kind, const FockVector& v) {
  const int d = v.dim();
  FockVector out(d);
  out.leakage = v.leakage;
  out.truncated = v.truncated;
  if (kind == Ladder::annihilate) {
    for (int n = 0; n + 1 < d; ++n) out.amps[n] = std::sqrt(static_cast<double>(n + 1)) * v.amps[n + 1];
  } else {
    for (int n = 1; n < d; ++n) out.amps[n] = std::sqrt(static_cast<double>(n)) * v.amps[n - 1];
    const double lost = d * std::norm(v.amps[d - 1]);
    if (lost > 0.0) {
      out.truncated = true;
      out.leakage += lost;
    }
  }
  return out;
}

// Fraction of the squared norm sitting in the top basis level.
inline double top_occupation(const Eigen::VectorXcd& v) {
  const double n2 = v.squaredNorm();
  return n2 > 0.0 ? std::norm(v[v.size() - 1]) / n2 : 0.0;
}

inline double top_occupation(const DensityMatrix& rho) {
  const double tr = rho.trace().real();
  const auto d = rho.rows();
  return tr > 0.0 ? std::abs(rho(d - 1, d - 1).real()) / tr : 0.0;
}

inline void hermitize(DensityMatrix& rho) {
  rho = (0.5 * (rho + rho.adjoint())).eval();
}

struct Lindblad {
  FockOperator L;
  double rate = 1.0;
};

// -i[H, rho] + sum rate (L rho L^+ - {L^+L, rho}/2)
inline DensityMatrix apply_liouvillian(const FockOperator& H, const std::vector<Lindblad>& lindblads,
                                       const DensityMatrix& rho) {
  const auto d = rho.rows();
  if (rho.cols() != d || H.rows() != d || H.cols() != d)
    throw InvalidArgument("apply_liouvillian: shape mismatch");
  const cplx I(0.0, 1.0);
  DensityMatrix out = -I * (H * rho - rho * H);
  for (const auto& [L, rate] : lindblads) {
    if (rate < 0.0) throw InvalidArgument("apply_liouvillian: negative rate");
    if (L.rows() != d || L.cols() != d) throw InvalidArgument("apply_liouvillian: shape mismatch");
    if (rate == 0.0) continue;
    const FockOperator LdL = L.adjoint() * L;
    out += rate * (L * rho * L.adjoint() - 0.5 * (LdL * rho + rho * LdL));
  }
  return out;
}

}  // namespace qtraj
