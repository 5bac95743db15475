#pragma once

// Two interchangeable evaluation back-ends for the model code:
//   PlainAlgebra - direct evaluation on Eigen matrices and doubles;
//   TapeAlgebra  - the same arithmetic recorded on an ad::Tape.
// Model routines are templates over the algebra, so inference and
// differentiation share one implementation and produce identical values.

#include <cmath>

#include "geodyn/autodiff.hpp"
#include "geodyn/kernels.hpp"

namespace geodyn {

struct PlainAlgebra {
  using Mat = Matrix;
  using Scalar = double;

  Mat constant(const Matrix& m) const { return m; }
  Scalar constant_scalar(double v) const { return v; }
  static const Matrix& value(const Mat& m) { return m; }
  static double value(Scalar s) { return s; }

  Mat add(const Mat& a, const Mat& b) const { return a + b; }
  Mat sub(const Mat& a, const Mat& b) const { return a - b; }
  Mat scale(Scalar s, const Mat& x) const { return s * x; }
  Mat scale_by(double s, const Mat& x) const { return s * x; }
  Mat add_identity(const Mat& x, double s) const {
    Mat v = x;
    v.diagonal().array() += s;
    return v;
  }
  Mat matmul(const Mat& a, const Mat& b) const { return a * b; }
  Mat transpose(const Mat& a) const { return a.transpose(); }
  Mat symmetrize(const Mat& a) const { return kernels::symmetrize(a); }
  Mat inverse(const Mat& a) const { return kernels::inverse(a); }
  Mat sym_exp(const Mat& a) const { return kernels::spectral_function(kernels::SpectralFn::Exp, a).first; }
  Mat sym_log(const Mat& a) const { return kernels::spectral_function(kernels::SpectralFn::Log, a).first; }
  Mat exp_entry(const Mat& a) const { return a.array().exp().matrix(); }
  Mat hadamard(const Mat& a, const Mat& b) const { return (a.array() * b.array()).matrix(); }
  Scalar max_entry(const Mat& a) const { return kernels::max_entry(a).first; }
  Mat divide(const Mat& x, Scalar s) const { return x / s; }
  Mat pad(const Mat& x, int p, double rho) const { return kernels::pad(x, p, rho); }
  Mat crop(const Mat& x, Eigen::Index offset, Eigen::Index n) const { return kernels::crop(x, offset, n); }
  Mat conv_valid(const Mat& x, const Mat& h) const { return kernels::conv_valid(x, h); }
  Scalar frob_norm(const Mat& x) const { return x.norm(); }
  Scalar sq_norm(const Mat& x) const { return x.squaredNorm(); }
  Mat vec_iso(const Mat& x) const { return kernels::vec_iso(x); }
  Mat softmax(const Mat& x) const { return kernels::softmax(x); }
  Scalar entry(const Mat& x, Eigen::Index i, Eigen::Index j) const { return x(i, j); }

  Scalar s_mul(Scalar a, Scalar b) const { return a * b; }
  Scalar s_div(Scalar a, Scalar b) const { return a / b; }
  Scalar s_add(Scalar a, Scalar b) const { return a + b; }
  Scalar s_exp(Scalar a) const { return std::exp(a); }
  Scalar s_log(Scalar a) const { return std::log(a); }
  Scalar s_abs(Scalar a) const { return std::abs(a); }
  Scalar s_sqrt(Scalar a) const { return std::sqrt(a); }
  Scalar s_phi1(Scalar a) const { return kernels::phi1(a); }
};

class TapeAlgebra {
 public:
  using Mat = ad::Var;
  using Scalar = ad::Var;

  explicit TapeAlgebra(ad::Tape& tape) : tape_(&tape) {}

  ad::Tape& tape() const { return *tape_; }

  Mat constant(const Matrix& m) const { return tape_->leaf(m); }
  Scalar constant_scalar(double v) const { return tape_->leaf_scalar(v); }
  static const Matrix& value(const Mat& m) { return m.value(); }

  Mat add(Mat a, Mat b) const { return ad::add(a, b); }
  Mat sub(Mat a, Mat b) const { return ad::sub(a, b); }
  Mat scale(Scalar s, Mat x) const { return ad::scale(s, x); }
  Mat scale_by(double s, Mat x) const { return ad::scale(s, x); }
  Mat add_identity(Mat x, double s) const { return ad::add_identity(x, s); }
  Mat matmul(Mat a, Mat b) const { return ad::matmul(a, b); }
  Mat transpose(Mat a) const { return ad::transpose(a); }
  Mat symmetrize(Mat a) const { return ad::symmetrize(a); }
  Mat inverse(Mat a) const { return ad::inverse(a); }
  Mat sym_exp(Mat a) const { return ad::sym_exp(a); }
  Mat sym_log(Mat a) const { return ad::sym_log(a); }
  Mat exp_entry(Mat a) const { return ad::exp_entry(a); }
  Mat hadamard(Mat a, Mat b) const { return ad::hadamard(a, b); }
  Scalar max_entry(Mat a) const { return ad::max_entry(a); }
  Mat divide(Mat x, Scalar s) const { return ad::divide(x, s); }
  Mat pad(Mat x, int p, double rho) const { return ad::pad(x, p, rho); }
  Mat crop(Mat x, Eigen::Index offset, Eigen::Index n) const { return ad::crop(x, offset, n); }
  Mat conv_valid(Mat x, Mat h) const { return ad::conv_valid(x, h); }
  Scalar frob_norm(Mat x) const { return ad::frob_norm(x); }
  Scalar sq_norm(Mat x) const { return ad::sq_norm(x); }
  Mat vec_iso(Mat x) const { return ad::vec_iso(x); }
  Mat softmax(Mat x) const { return ad::softmax(x); }
  Scalar entry(Mat x, Eigen::Index i, Eigen::Index j) const { return ad::entry(x, i, j); }

  Scalar s_mul(Scalar a, Scalar b) const { return ad::s_mul(a, b); }
  Scalar s_div(Scalar a, Scalar b) const { return ad::s_div(a, b); }
  Scalar s_add(Scalar a, Scalar b) const { return ad::add(a, b); }
  Scalar s_exp(Scalar a) const { return ad::s_exp(a); }
  Scalar s_log(Scalar a) const { return ad::s_log(a); }
  Scalar s_abs(Scalar a) const { return ad::s_abs(a); }
  Scalar s_sqrt(Scalar a) const { return ad::s_sqrt(a); }
  Scalar s_phi1(Scalar a) const { return ad::s_phi1(a); }

 private:
  ad::Tape* tape_;
};

/// Scalar value of either algebra's scalar type.
inline double scalar_value(double s) { return s; }
inline double scalar_value(const ad::Var& s) { return s.scalar(); }

}  // namespace geodyn
