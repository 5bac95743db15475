#pragma once

// Manifold operators: Stein weighted Frechet mean, orthogonal group-action
// translation (Cayley-parameterized), and SPD-preserving convolution.

#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geodyn/algebra.hpp"
#include "geodyn/errors.hpp"
#include "geodyn/spd_core.hpp"

namespace geodyn {

/// Nonnegative weights summing to one.
class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(std::vector<double> w) : w_(std::move(w)) {
    if (w_.empty()) throw ParameterError("WeightVector: empty");
    double sum = 0.0;
    for (double x : w_) {
      if (!(x >= 0.0)) throw ParameterError("WeightVector: negative or NaN weight");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ParameterError("WeightVector: weights do not sum to one");
  }
  /// Scales nonnegative raw weights to unit sum.
  static WeightVector normalized(std::vector<double> raw) {
    const double sum = std::accumulate(raw.begin(), raw.end(), 0.0);
    if (!(sum > 0.0)) throw ParameterError("WeightVector: raw weights sum to zero");
    for (double& x : raw) x /= sum;
    return WeightVector(std::move(raw));
  }
  static WeightVector uniform(std::size_t m) { return WeightVector(std::vector<double>(m, 1.0 / static_cast<double>(m))); }

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  const std::vector<double>& values() const noexcept { return w_; }

 private:
  std::vector<double> w_;
};

class OrthogonalMatrix {
 public:
  OrthogonalMatrix() = default;
  explicit OrthogonalMatrix(Matrix g) : g_(std::move(g)) {
    detail::require_square(g_, "OrthogonalMatrix");
    const Matrix defect = g_ * g_.transpose() - Matrix::Identity(g_.rows(), g_.rows());
    if (defect.norm() > 1e-10) throw DomainError("OrthogonalMatrix: g g^T deviates from I");
  }
  static OrthogonalMatrix trusted(Matrix g) {
    OrthogonalMatrix o;
    o.g_ = std::move(g);
    return o;
  }
  const Matrix& matrix() const noexcept { return g_; }
  Eigen::Index dim() const noexcept { return g_.rows(); }

 private:
  Matrix g_;
};

/// Unconstrained theta x theta factor Z; the induced kernel H = Z^T Z + eps I is SPD.
struct ConvKernelFactor {
  Matrix z;
  double eps = 1e-5;

  ConvKernelFactor() = default;
  ConvKernelFactor(Matrix z_in, double eps_in) : z(std::move(z_in)), eps(eps_in) {
    if (z.rows() != z.cols() || z.rows() % 2 == 0) throw ParameterError("ConvKernelFactor: size must be odd and square");
    if (!(eps > 0.0)) throw ParameterError("ConvKernelFactor: eps must be positive");
  }
  Eigen::Index size() const noexcept { return z.rows(); }
  Matrix kernel() const {
    Matrix h = z.transpose() * z;
    h.diagonal().array() += eps;
    return h;
  }
};

struct WfmOptions {
  double tol = 1e-9;
  int max_iter = 200;
};

namespace ops {

/// Stein wFM by the fixed-point map F <- [sum_n w_n ((X_n + F)/2)^{-1}]^{-1},
/// started at the weighted arithmetic mean. `observer` (optional) sees every iterate.
template <class Alg>
typename Alg::Mat stein_wfm(const Alg& alg, const std::vector<typename Alg::Mat>& points,
                            const std::vector<typename Alg::Scalar>& weights, const WfmOptions& opt,
                            const std::function<void(const Matrix&)>* observer = nullptr) {
  if (points.empty()) throw DimensionError("stein_wfm: no points");
  if (points.size() != weights.size()) throw DimensionError("stein_wfm: points/weights length mismatch");
  if (points.size() == 1) return points.front();

  using Mat = typename Alg::Mat;
  Mat f = alg.scale(weights[0], points[0]);
  for (std::size_t n = 1; n < points.size(); ++n) f = alg.add(f, alg.scale(weights[n], points[n]));
  if (observer) (*observer)(Alg::value(f));

  double residual = 0.0;
  for (int it = 0; it < opt.max_iter; ++it) {
    Mat acc = alg.scale(weights[0], alg.inverse(alg.scale_by(0.5, alg.add(points[0], f))));
    for (std::size_t n = 1; n < points.size(); ++n) {
      acc = alg.add(acc, alg.scale(weights[n], alg.inverse(alg.scale_by(0.5, alg.add(points[n], f)))));
    }
    Mat next = alg.symmetrize(alg.inverse(acc));
    const Matrix& prev_v = Alg::value(f);
    residual = (Alg::value(next) - prev_v).norm() / prev_v.norm();
    f = next;
    if (observer) (*observer)(Alg::value(f));
    if (residual <= opt.tol) return f;
  }
  throw ConvergenceError("stein_wfm: no convergence after " + std::to_string(opt.max_iter) + " sweeps", residual);
}

/// (I - K/2)^{-1} (I + K/2).
template <class Alg>
typename Alg::Mat cayley(const Alg& alg, const typename Alg::Mat& k) {
  auto minus = alg.add_identity(alg.scale_by(-0.5, k), 1.0);
  auto plus = alg.add_identity(alg.scale_by(0.5, k), 1.0);
  return alg.matmul(alg.inverse(minus), plus);
}

/// g = cayley(WV - (WV)^T).
template <class Alg>
typename Alg::Mat group_action_generator(const Alg& alg, const typename Alg::Mat& w, const typename Alg::Mat& v) {
  auto wv = alg.matmul(w, v);
  return cayley(alg, alg.sub(wv, alg.transpose(wv)));
}

/// sym(g U g^T).
template <class Alg>
typename Alg::Mat translate(const Alg& alg, const typename Alg::Mat& u, const typename Alg::Mat& g) {
  return alg.symmetrize(alg.matmul(alg.matmul(g, u), alg.transpose(g)));
}

/// Valid correlation of X with H = Z^T Z + eps I.
template <class Alg>
typename Alg::Mat spd_conv(const Alg& alg, const typename Alg::Mat& x, const typename Alg::Mat& z, double eps) {
  auto h = alg.add_identity(alg.matmul(alg.transpose(z), z), eps);
  return alg.conv_valid(x, h);
}

}  // namespace ops

inline std::vector<Matrix> as_matrices(std::span<const SpdMatrix> points) {
  std::vector<Matrix> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.matrix());
  return out;
}

/// Weighted Frechet mean under the Stein metric.
inline SpdMatrix stein_wfm(std::span<const SpdMatrix> points, const WeightVector& w, double tol = 1e-9,
                           int max_iter = 200) {
  if (points.empty()) throw DimensionError("stein_wfm: no points");
  if (points.size() != w.size()) throw DimensionError("stein_wfm: points/weights length mismatch");
  if (!(tol > 0.0)) throw ParameterError("stein_wfm: tol must be positive");
  for (const auto& p : points) detail::require_same_dim(p.dim(), points.front().dim(), "stein_wfm");
  PlainAlgebra alg;
  Matrix f = ops::stein_wfm(alg, as_matrices(points), w.values(), WfmOptions{tol, max_iter});
  return SpdMatrix::trusted(std::move(f));
}

/// sum_n w_n d^2(X_n, F).
inline double wfm_objective(std::span<const SpdMatrix> points, const WeightVector& w, const SpdMatrix& f) {
  if (points.empty()) throw DimensionError("wfm_objective: no points");
  if (points.size() != w.size()) throw DimensionError("wfm_objective: points/weights length mismatch");
  double total = 0.0;
  for (std::size_t n = 0; n < points.size(); ++n) {
    const double d = stein_distance(points[n], f);
    total += w[n] * d * d;
  }
  return total;
}

inline OrthogonalMatrix cayley(const Matrix& k) {
  detail::require_square(k, "cayley");
  if ((k + k.transpose()).norm() > 1e-10) throw DomainError("cayley: input is not skew-symmetric");
  PlainAlgebra alg;
  return OrthogonalMatrix::trusted(ops::cayley(alg, k));
}

inline OrthogonalMatrix group_action_generator(const Matrix& w, const SpdMatrix& v) {
  detail::require_square(w, "group_action_generator");
  detail::require_same_dim(w.rows(), v.dim(), "group_action_generator");
  PlainAlgebra alg;
  return OrthogonalMatrix::trusted(ops::group_action_generator(alg, w, v.matrix()));
}

/// g U g^T; an isometry of the Stein metric for orthogonal g.
inline SpdMatrix translate(const SpdMatrix& u, const OrthogonalMatrix& g) {
  detail::require_same_dim(u.dim(), g.dim(), "translate");
  PlainAlgebra alg;
  return SpdMatrix::trusted(ops::translate(alg, u.matrix(), g.matrix()));
}

/// Valid (no padding, stride 1) SPD convolution with H = Z^T Z + eps I.
inline SpdMatrix spd_conv(const SpdMatrix& x, const ConvKernelFactor& factor) {
  if (factor.size() > x.dim()) throw DimensionError("spd_conv: kernel larger than input");
  PlainAlgebra alg;
  Matrix out = ops::spd_conv(alg, x.matrix(), factor.z, factor.eps);
  return SpdMatrix::trusted(kernels::symmetrize(out));
}

/// Multi-channel form: sum over input channels of per-channel convolutions.
inline SpdMatrix spd_conv(std::span<const SpdMatrix> channels, std::span<const ConvKernelFactor> factors) {
  if (channels.empty() || channels.size() != factors.size()) {
    throw DimensionError("spd_conv: channel/kernel count mismatch");
  }
  Matrix acc = spd_conv(channels[0], factors[0]).matrix();
  for (std::size_t l = 1; l < channels.size(); ++l) {
    const Matrix o = spd_conv(channels[l], factors[l]).matrix();
    detail::require_same_dim(o.rows(), acc.rows(), "spd_conv");
    acc += o;
  }
  return SpdMatrix::trusted(std::move(acc));
}

}  // namespace geodyn
