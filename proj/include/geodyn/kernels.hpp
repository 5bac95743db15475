#pragma once

// Value-level kernels shared by the plain and taped algebras, so both
// evaluation paths run the exact same floating-point code.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

#include "geodyn/errors.hpp"
#include "geodyn/spd_core.hpp"

namespace geodyn::kernels {

inline constexpr double kInvSqrt2 = 1.0 / std::numbers::sqrt2;

inline Matrix inverse(const Matrix& x) {
  Eigen::PartialPivLU<Matrix> lu(x);
  Matrix inv = lu.inverse();
  if (!inv.allFinite()) throw NumericError("inverse: singular matrix");
  return inv;
}

inline Matrix symmetrize(const Matrix& x) { return 0.5 * (x + x.transpose()); }

/// expm1(x)/x with the x -> 0 limit.
inline double phi1(double x) { return x == 0.0 ? 1.0 : std::expm1(x) / x; }

inline double phi1_derivative(double x) {
  if (std::abs(x) < 1e-3) return 0.5 + x / 3.0 + x * x / 8.0 + x * x * x / 30.0;
  return (std::exp(x) * x - std::expm1(x)) / (x * x);
}

enum class SpectralFn { Exp, Log };

inline double spectral_apply(SpectralFn f, double l) { return f == SpectralFn::Exp ? std::exp(l) : std::log(l); }

/// Divided difference (f(a) - f(b)) / (a - b), evaluated stably; f'(a) when a == b.
inline double spectral_divided_difference(SpectralFn f, double a, double b) {
  const double d = a - b;
  if (f == SpectralFn::Exp) return std::exp(b) * phi1(d);
  if (d == 0.0) return 1.0 / b;
  return std::log1p(d / b) / d;
}

/// f(S) for symmetric S through the eigendecomposition of sym(S).
inline std::pair<Matrix, EigenPair> spectral_function(SpectralFn f, const Matrix& x) {
  EigenPair e = detail::sym_eig_raw(symmetrize(x));
  if (f == SpectralFn::Log && !(e.values.minCoeff() > 0.0)) {
    throw DomainError("matrix log: non-positive eigenvalue");
  }
  Vector mapped(e.values.size());
  for (Eigen::Index i = 0; i < mapped.size(); ++i) mapped(i) = spectral_apply(f, e.values(i));
  Matrix out = e.vectors * mapped.asDiagonal() * e.vectors.transpose();
  return {symmetrize(out), std::move(e)};
}

/// Adjoint of X -> f(sym(X)) (Daleckii-Krein form).
inline Matrix spectral_function_adjoint(SpectralFn f, const EigenPair& e, const Matrix& out_adj) {
  const Eigen::Index n = e.values.size();
  Matrix inner = e.vectors.transpose() * symmetrize(out_adj) * e.vectors;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      inner(i, j) *= spectral_divided_difference(f, e.values(i), e.values(j));
    }
  }
  return symmetrize(e.vectors * inner * e.vectors.transpose());
}

inline Matrix pad(const Matrix& x, int p, double rho) { return pad_matrix(x, p, rho); }

inline Matrix crop(const Matrix& x, Eigen::Index offset, Eigen::Index n) { return x.block(offset, offset, n, n); }

/// Valid 2-D cross-correlation: out(i,j) = sum_{u,v} h(u,v) x(i+u, j+v).
inline Matrix conv_valid(const Matrix& x, const Matrix& h) {
  const Eigen::Index k = h.rows();
  const Eigen::Index n = x.rows() - k + 1;
  if (n <= 0 || h.cols() != k) throw DimensionError("conv_valid: kernel larger than input");
  Matrix out = Matrix::Zero(n, n);
  for (Eigen::Index u = 0; u < k; ++u) {
    for (Eigen::Index v = 0; v < k; ++v) out += h(u, v) * x.block(u, v, n, n);
  }
  return out;
}

/// Largest entry and its (row, col), scanning row-major; first wins on ties.
inline std::pair<double, std::pair<Eigen::Index, Eigen::Index>> max_entry(const Matrix& x) {
  double best = -std::numeric_limits<double>::infinity();
  std::pair<Eigen::Index, Eigen::Index> arg{0, 0};
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (x(i, j) > best) {
        best = x(i, j);
        arg = {i, j};
      }
    }
  }
  return {best, arg};
}

/// Upper-triangle vectorization with off-diagonals scaled by sqrt(2), so that
/// <vec(A), vec(B)> equals the Frobenius product for symmetric A, B.
inline Matrix vec_iso(const Matrix& x) {
  const Eigen::Index n = x.rows();
  Matrix v(n * (n + 1) / 2, 1);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    v(k++, 0) = x(i, i);
    for (Eigen::Index j = i + 1; j < n; ++j) v(k++, 0) = kInvSqrt2 * (x(i, j) + x(j, i));
  }
  return v;
}

inline Matrix vec_iso_adjoint(const Matrix& v_adj, Eigen::Index n) {
  Matrix g = Matrix::Zero(n, n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    g(i, i) = v_adj(k++, 0);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      g(i, j) = kInvSqrt2 * v_adj(k, 0);
      g(j, i) = kInvSqrt2 * v_adj(k, 0);
      ++k;
    }
  }
  return g;
}

/// Column softmax with max subtraction.
inline Matrix softmax(const Matrix& x) {
  const double m = x.maxCoeff();
  Matrix e = (x.array() - m).exp().matrix();
  return e / e.sum();
}

}  // namespace geodyn::kernels
