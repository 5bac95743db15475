#pragma once

// Dense symmetric / SPD matrix primitives: validation, eigendecomposition,
// matrix exp/log, Cholesky log-determinant, Stein distance, padding.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "geodyn/errors.hpp"

namespace geodyn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace detail {

inline double symmetry_tolerance(const Matrix& m) {
  const double scale = m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
  return 1e-12 * std::max(1.0, scale);
}

inline bool is_symmetric(const Matrix& m) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= symmetry_tolerance(m);
}

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw DimensionError(std::string(what) + ": expected a non-empty square matrix, got " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

inline void require_same_dim(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension mismatch " + std::to_string(a) + " vs " +
                         std::to_string(b));
  }
}

}  // namespace detail

/// True when `m` is square, symmetric to working tolerance and admits a Cholesky factor.
inline bool is_spd(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0 || !m.allFinite()) return false;
  if (!detail::is_symmetric(m)) return false;
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::LLT<Matrix> llt(sym);
  return llt.info() == Eigen::Success;
}

/// Symmetric (not necessarily definite) square matrix.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(Matrix m) : m_(std::move(m)) {
    detail::require_square(m_, "SymMatrix");
    if (!detail::is_symmetric(m_)) throw DomainError("SymMatrix: input is not symmetric");
    m_ = 0.5 * (m_ + m_.transpose()).eval();
  }
  static SymMatrix trusted(Matrix m) {
    SymMatrix s;
    s.m_ = std::move(m);
    return s;
  }

  const Matrix& matrix() const noexcept { return m_; }
  Eigen::Index dim() const noexcept { return m_.rows(); }

 private:
  Matrix m_;
};

/// Symmetric positive-definite matrix; an element of the SPD manifold.
class SpdMatrix {
 public:
  SpdMatrix() = default;
  /// Validates symmetry, symmetrizes away rounding noise, and requires a Cholesky factor.
  explicit SpdMatrix(Matrix m) : m_(std::move(m)) {
    detail::require_square(m_, "SpdMatrix");
    if (!m_.allFinite()) throw DomainError("SpdMatrix: non-finite entries");
    if (!detail::is_symmetric(m_)) throw DomainError("SpdMatrix: input is not symmetric");
    m_ = 0.5 * (m_ + m_.transpose()).eval();
    Eigen::LLT<Matrix> llt(m_);
    if (llt.info() != Eigen::Success) throw DomainError("SpdMatrix: Cholesky factorization failed");
  }
  /// Skips validation; for values that are SPD by construction.
  static SpdMatrix trusted(Matrix m) {
    SpdMatrix s;
    s.m_ = std::move(m);
    return s;
  }
  static SpdMatrix identity(Eigen::Index n) { return trusted(Matrix::Identity(n, n)); }

  const Matrix& matrix() const noexcept { return m_; }
  Eigen::Index dim() const noexcept { return m_.rows(); }

  friend bool operator==(const SpdMatrix& a, const SpdMatrix& b) {
    return a.m_.rows() == b.m_.rows() && a.m_.cols() == b.m_.cols() && a.m_ == b.m_;
  }

 private:
  Matrix m_;
};

/// Ordered sequence of SPD matrices sharing one dimension.
class SpdSequence {
 public:
  SpdSequence() = default;
  explicit SpdSequence(std::vector<SpdMatrix> items) : items_(std::move(items)) {
    for (const auto& x : items_) detail::require_same_dim(x.dim(), items_.front().dim(), "SpdSequence");
  }

  void push_back(SpdMatrix x) {
    if (!items_.empty()) detail::require_same_dim(x.dim(), items_.front().dim(), "SpdSequence");
    items_.push_back(std::move(x));
  }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  Eigen::Index dim() const noexcept { return items_.empty() ? 0 : items_.front().dim(); }
  const SpdMatrix& operator[](std::size_t i) const { return items_[i]; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  const std::vector<SpdMatrix>& items() const noexcept { return items_; }

  std::vector<Matrix> matrices() const {
    std::vector<Matrix> out;
    out.reserve(items_.size());
    for (const auto& x : items_) out.push_back(x.matrix());
    return out;
  }

  friend bool operator==(const SpdSequence& a, const SpdSequence& b) { return a.items_ == b.items_; }

 private:
  std::vector<SpdMatrix> items_;
};

/// Eigenvalues in descending order with paired orthonormal eigenvector columns.
struct EigenPair {
  Vector values;
  Matrix vectors;
};

/// (M + M^T) / 2.
inline SymMatrix symmetrize(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw DimensionError("symmetrize: non-square " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
  return SymMatrix::trusted(0.5 * (m + m.transpose()));
}

namespace detail {

// Eigen's self-adjoint solver (Householder tridiagonalization + implicit
// symmetric QR) reads the lower triangle; callers pass symmetric input.
inline EigenPair sym_eig_raw(const Matrix& s) {
  const Eigen::Index n = s.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(s, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw NumericError("sym_eig: eigensolver did not converge");
  EigenPair out{Vector(n), Matrix(n, n)};
  // Eigen returns ascending order; a stable descending sort keeps its order within ties.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return solver.eigenvalues()(a) > solver.eigenvalues()(b); });
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.values(k) = solver.eigenvalues()(src);
    auto col = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(col(i)) > best) {
        best = std::abs(col(i));
        arg = i;
      }
    }
    out.vectors.col(k) = col(arg) < 0 ? (-col).eval() : col.eval();
  }
  return out;
}

template <class F>
Matrix apply_spectral(const EigenPair& e, F&& f) {
  Vector mapped = e.values.unaryExpr(f);
  return e.vectors * mapped.asDiagonal() * e.vectors.transpose();
}

}  // namespace detail

/// Symmetric eigendecomposition. Eigenvalues descending; each eigenvector's
/// largest-magnitude component is made positive (first one on ties).
inline EigenPair sym_eig(const SymMatrix& s) { return detail::sym_eig_raw(s.matrix()); }

/// Matrix exponential of a symmetric matrix; always SPD.
inline SpdMatrix spd_exp(const SymMatrix& s) {
  const EigenPair e = sym_eig(s);
  Matrix out = detail::apply_spectral(e, [](double l) { return std::exp(l); });
  return SpdMatrix::trusted(0.5 * (out + out.transpose()));
}

/// Principal matrix logarithm of an SPD matrix.
inline SymMatrix spd_log(const SpdMatrix& p) {
  if (!is_spd(p.matrix())) throw DomainError("spd_log: input is not SPD");
  const EigenPair e = detail::sym_eig_raw(p.matrix());
  if (e.values.minCoeff() <= 0.0) throw DomainError("spd_log: non-positive eigenvalue");
  Matrix out = detail::apply_spectral(e, [](double l) { return std::log(l); });
  return SymMatrix::trusted(0.5 * (out + out.transpose()));
}

/// log det via Cholesky: 2 * sum(log(diag(L))).
inline double log_det(const Matrix& p) {
  detail::require_square(p, "log_det");
  Eigen::LLT<Matrix> llt(p);
  if (llt.info() != Eigen::Success) throw DomainError("log_det: Cholesky factorization failed");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

inline double log_det(const SpdMatrix& p) { return log_det(p.matrix()); }

/// Stein metric sqrt(log det((X+Y)/2) - 1/2 log det(XY)).
inline double stein_distance(const SpdMatrix& x, const SpdMatrix& y) {
  detail::require_same_dim(x.dim(), y.dim(), "stein_distance");
  const Matrix mid = 0.5 * (x.matrix() + y.matrix());
  double radicand = log_det(mid) - 0.5 * (log_det(x) + log_det(y));
  if (radicand < 0.0) {
    if (radicand < -1e-12) {
      throw DomainError("stein_distance: negative radicand " + std::to_string(radicand));
    }
    radicand = 0.0;
  }
  return std::sqrt(radicand);
}

/// Embeds X centrally in an (N+2p)x(N+2p) matrix whose extra diagonal entries are rho.
inline Matrix pad_matrix(const Matrix& x, int p, double rho) {
  const Eigen::Index n = x.rows();
  Matrix out = Matrix::Zero(n + 2 * p, n + 2 * p);
  for (int i = 0; i < p; ++i) {
    out(i, i) = rho;
    out(n + p + i, n + p + i) = rho;
  }
  out.block(p, p, n, n) = x;
  return out;
}

/// Border padding of width p with diagonal value rho; preserves SPD-ness.
inline SpdMatrix pad_spd(const SpdMatrix& x, int p, double rho) {
  if (!(rho > 0.0)) throw ParameterError("pad_spd: rho must be positive");
  if (p < 0) throw ParameterError("pad_spd: pad width must be nonnegative");
  return SpdMatrix::trusted(pad_matrix(x.matrix(), p, rho));
}

/// X / ||X||_F.
inline SpdMatrix frobenius_normalize(const SpdMatrix& x) {
  const double norm = x.matrix().norm();
  if (!(norm > 0.0)) throw DomainError("frobenius_normalize: zero norm");
  return SpdMatrix::trusted(x.matrix() / norm);
}

}  // namespace geodyn
