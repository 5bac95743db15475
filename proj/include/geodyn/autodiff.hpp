#pragma once

// Reverse-mode differentiation over dense matrix primitives.
//
// A Tape records every primitive as a node holding its value, the ids of its
// parents, a forward rule (recomputes the value from parent values) and an
// adjoint rule. Scalars are 1x1 nodes. Data-dependent control flow (e.g. the
// number of fixed-point sweeps) is frozen into the tape when it is recorded.

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "geodyn/errors.hpp"
#include "geodyn/kernels.hpp"

namespace geodyn::ad {

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  using Forward = std::function<Matrix(const Tape&)>;
  using Backward = std::function<void(Tape&, const Matrix& adjoint)>;

  Tape() { nodes_.reserve(4096); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Independent variable (or constant; constants simply never get read back).
  Var leaf(Matrix value) {
    nodes_.push_back(Node{std::move(value), Matrix(), nullptr, nullptr});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }
  Var leaf_scalar(double v) { return leaf(Matrix::Constant(1, 1, v)); }

  /// Records a primitive; evaluates `forward` immediately.
  Var record(Forward forward, Backward backward) {
    Matrix v = forward(*this);
    nodes_.push_back(Node{std::move(v), Matrix(), std::move(forward), std::move(backward)});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Matrix& value(Var v) const { return value(v.id); }

  /// Accumulated adjoint; a zero matrix of the value's shape if nothing flowed in.
  Matrix adjoint(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.adjoint.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.adjoint;
  }

  void accumulate(int id, const Matrix& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.adjoint.size() == 0) {
      n.adjoint = g;
    } else {
      n.adjoint += g;
    }
  }

  /// Seeds d(output)/d(output) = 1 for a 1x1 output and sweeps the tape backwards.
  void backward(Var output) {
    if (value(output).size() != 1) throw DimensionError("backward: output must be a scalar node");
    for (auto& n : nodes_) n.adjoint.resize(0, 0);
    nodes_[static_cast<std::size_t>(output.id)].adjoint = Matrix::Ones(1, 1);
    for (int i = output.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.backward || n.adjoint.size() == 0) continue;
      const Matrix adj = n.adjoint;
      n.backward(*this, adj);
    }
  }

  /// Recomputes every recorded node from the leaves, in recording order.
  void replay() {
    for (auto& n : nodes_) {
      if (n.forward) n.value = n.forward(*this);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix adjoint;
    Forward forward;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(id); }

// ---------------------------------------------------------------------------
// Primitives. Each captures parent ids by value; adjoint rules read parent
// values from the tape at backward time.

inline Var add(Var a, Var b) {
  const int ia = a.id, ib = b.id;
  return a.tape->record([=](const Tape& t) -> Matrix { return t.value(ia) + t.value(ib); },
                        [=](Tape& t, const Matrix& g) {
                          t.accumulate(ia, g);
                          t.accumulate(ib, g);
                        });
}

inline Var sub(Var a, Var b) {
  const int ia = a.id, ib = b.id;
  return a.tape->record([=](const Tape& t) -> Matrix { return t.value(ia) - t.value(ib); },
                        [=](Tape& t, const Matrix& g) {
                          t.accumulate(ia, g);
                          t.accumulate(ib, -g);
                        });
}

/// Scalar node times matrix node.
inline Var scale(Var s, Var x) {
  const int is = s.id, ix = x.id;
  return x.tape->record([=](const Tape& t) -> Matrix { return t.value(is)(0, 0) * t.value(ix); },
                        [=](Tape& t, const Matrix& g) {
                          t.accumulate(ix, t.value(is)(0, 0) * g);
                          t.accumulate(is, Matrix::Constant(1, 1, (g.array() * t.value(ix).array()).sum()));
                        });
}

inline Var scale(double s, Var x) {
  const int ix = x.id;
  return x.tape->record([=](const Tape& t) -> Matrix { return s * t.value(ix); },
                        [=](Tape& t, const Matrix& g) { t.accumulate(ix, s * g); });
}

inline Var add_identity(Var x, double s) {
  const int ix = x.id;
  return x.tape->record(
      [=](const Tape& t) -> Matrix {
        Matrix v = t.value(ix);
        v.diagonal().array() += s;
        return v;
      },
      [=](Tape& t, const Matrix& g) { t.accumulate(ix, g); });
}

inline Var matmul(Var a, Var b) {
  const int ia = a.id, ib = b.id;
  return a.tape->record([=](const Tape& t) -> Matrix { return t.value(ia) * t.value(ib); },
                        [=](Tape& t, const Matrix& g) {
                          t.accumulate(ia, g * t.value(ib).transpose());
                          t.accumulate(ib, t.value(ia).transpose() * g);
                        });
}

inline Var transpose(Var a) {
  const int ia = a.id;
  return a.tape->record([=](const Tape& t) -> Matrix { return t.value(ia).transpose(); },
                        [=](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

inline Var symmetrize(Var a) {
  const int ia = a.id;
  return a.tape->record([=](const Tape& t) -> Matrix { return kernels::symmetrize(t.value(ia)); },
                        [=](Tape& t, const Matrix& g) { t.accumulate(ia, kernels::symmetrize(g)); });
}

inline Var inverse(Var a) {
  const int ia = a.id;
  auto out_id = std::make_shared<int>(-1);
  Var out = a.tape->record([=](const Tape& t) -> Matrix { return kernels::inverse(t.value(ia)); },
                           [=](Tape& t, const Matrix& g) {
                             const Matrix& inv = t.value(*out_id);
                             t.accumulate(ia, -inv.transpose() * g * inv.transpose());
                           });
  *out_id = out.id;
  return out;
}

namespace detail {

inline Var spectral(Var a, kernels::SpectralFn f) {
  const int ia = a.id;
  auto eig = std::make_shared<EigenPair>();
  return a.tape->record(
      [=](const Tape& t) -> Matrix {
        auto [value, e] = kernels::spectral_function(f, t.value(ia));
        *eig = std::move(e);
        return value;
      },
      [=](Tape& t, const Matrix& g) { t.accumulate(ia, kernels::spectral_function_adjoint(f, *eig, g)); });
}

}  // namespace detail

/// exp(sym(X)) through the eigendecomposition.
inline Var sym_exp(Var a) { return detail::spectral(a, kernels::SpectralFn::Exp); }
/// log(sym(X)) through the eigendecomposition; X must be SPD.
inline Var sym_log(Var a) { return detail::spectral(a, kernels::SpectralFn::Log); }

inline Var exp_entry(Var a) {
  const int ia = a.id;
  auto out_id = std::make_shared<int>(-1);
  Var out = a.tape->record([=](const Tape& t) -> Matrix { return t.value(ia).array().exp().matrix(); },
                           [=](Tape& t, const Matrix& g) {
                             t.accumulate(ia, (g.array() * t.value(*out_id).array()).matrix());
                           });
  *out_id = out.id;
  return out;
}

inline Var hadamard(Var a, Var b) {
  const int ia = a.id, ib = b.id;
  return a.tape->record(
      [=](const Tape& t) -> Matrix { return (t.value(ia).array() * t.value(ib).array()).matrix(); },
      [=](Tape& t, const Matrix& g) {
        t.accumulate(ia, (g.array() * t.value(ib).array()).matrix());
        t.accumulate(ib, (g.array() * t.value(ia).array()).matrix());
      });
}

/// Largest entry; the adjoint flows to the first maximizer (row-major).
inline Var max_entry(Var a) {
  const int ia = a.id;
  auto arg = std::make_shared<std::pair<Eigen::Index, Eigen::Index>>();
  return a.tape->record(
      [=](const Tape& t) -> Matrix {
        auto [v, where] = kernels::max_entry(t.value(ia));
        *arg = where;
        return Matrix::Constant(1, 1, v);
      },
      [=](Tape& t, const Matrix& g) {
        Matrix d = Matrix::Zero(t.value(ia).rows(), t.value(ia).cols());
        d(arg->first, arg->second) = g(0, 0);
        t.accumulate(ia, d);
      });
}

/// Matrix node divided by scalar node.
inline Var divide(Var x, Var s) {
  const int ix = x.id, is = s.id;
  return x.tape->record([=](const Tape& t) -> Matrix { return t.value(ix) / t.value(is)(0, 0); },
                        [=](Tape& t, const Matrix& g) {
                          const double sv = t.value(is)(0, 0);
                          t.accumulate(ix, g / sv);
                          const double dot = (g.array() * t.value(ix).array()).sum();
                          t.accumulate(is, Matrix::Constant(1, 1, -dot / (sv * sv)));
                        });
}

inline Var pad(Var x, int p, double rho) {
  const int ix = x.id;
  return x.tape->record([=](const Tape& t) -> Matrix { return kernels::pad(t.value(ix), p, rho); },
                        [=](Tape& t, const Matrix& g) {
                          const Eigen::Index n = t.value(ix).rows();
                          t.accumulate(ix, g.block(p, p, n, n));
                        });
}

inline Var crop(Var x, Eigen::Index offset, Eigen::Index n) {
  const int ix = x.id;
  return x.tape->record([=](const Tape& t) -> Matrix { return kernels::crop(t.value(ix), offset, n); },
                        [=](Tape& t, const Matrix& g) {
                          const Matrix& v = t.value(ix);
                          Matrix d = Matrix::Zero(v.rows(), v.cols());
                          d.block(offset, offset, n, n) = g;
                          t.accumulate(ix, d);
                        });
}

inline Var conv_valid(Var x, Var h) {
  const int ix = x.id, ih = h.id;
  return x.tape->record([=](const Tape& t) -> Matrix { return kernels::conv_valid(t.value(ix), t.value(ih)); },
                        [=](Tape& t, const Matrix& g) {
                          const Matrix& xv = t.value(ix);
                          const Matrix& hv = t.value(ih);
                          const Eigen::Index k = hv.rows();
                          const Eigen::Index n = g.rows();
                          Matrix dx = Matrix::Zero(xv.rows(), xv.cols());
                          Matrix dh(k, k);
                          for (Eigen::Index u = 0; u < k; ++u) {
                            for (Eigen::Index v = 0; v < k; ++v) {
                              dx.block(u, v, n, n) += hv(u, v) * g;
                              dh(u, v) = (g.array() * xv.block(u, v, n, n).array()).sum();
                            }
                          }
                          t.accumulate(ix, dx);
                          t.accumulate(ih, dh);
                        });
}

inline Var frob_norm(Var x) {
  const int ix = x.id;
  return x.tape->record([=](const Tape& t) -> Matrix { return Matrix::Constant(1, 1, t.value(ix).norm()); },
                        [=](Tape& t, const Matrix& g) {
                          const Matrix& v = t.value(ix);
                          t.accumulate(ix, (g(0, 0) / v.norm()) * v);
                        });
}

/// Sum of squared entries (smooth at zero, unlike frob_norm).
inline Var sq_norm(Var x) {
  const int ix = x.id;
  return x.tape->record([=](const Tape& t) -> Matrix { return Matrix::Constant(1, 1, t.value(ix).squaredNorm()); },
                        [=](Tape& t, const Matrix& g) { t.accumulate(ix, (2.0 * g(0, 0)) * t.value(ix)); });
}

inline Var vec_iso(Var x) {
  const int ix = x.id;
  return x.tape->record([=](const Tape& t) -> Matrix { return kernels::vec_iso(t.value(ix)); },
                        [=](Tape& t, const Matrix& g) {
                          t.accumulate(ix, kernels::vec_iso_adjoint(g, t.value(ix).rows()));
                        });
}

inline Var softmax(Var x) {
  const int ix = x.id;
  auto out_id = std::make_shared<int>(-1);
  Var out = x.tape->record([=](const Tape& t) -> Matrix { return kernels::softmax(t.value(ix)); },
                           [=](Tape& t, const Matrix& g) {
                             const Matrix& p = t.value(*out_id);
                             const double dot = (p.array() * g.array()).sum();
                             t.accumulate(ix, (p.array() * (g.array() - dot)).matrix());
                           });
  *out_id = out.id;
  return out;
}

inline Var entry(Var x, Eigen::Index i, Eigen::Index j) {
  const int ix = x.id;
  return x.tape->record([=](const Tape& t) -> Matrix { return Matrix::Constant(1, 1, t.value(ix)(i, j)); },
                        [=](Tape& t, const Matrix& g) {
                          const Matrix& v = t.value(ix);
                          Matrix d = Matrix::Zero(v.rows(), v.cols());
                          d(i, j) = g(0, 0);
                          t.accumulate(ix, d);
                        });
}

/// 2 * sum(log(diag(chol(X)))); adjoint X^{-1} (symmetric part).
inline Var log_det(Var x) {
  const int ix = x.id;
  return x.tape->record([=](const Tape& t) -> Matrix { return Matrix::Constant(1, 1, geodyn::log_det(t.value(ix))); },
                        [=](Tape& t, const Matrix& g) {
                          const Matrix inv = kernels::inverse(t.value(ix));
                          t.accumulate(ix, g(0, 0) * kernels::symmetrize(inv));
                        });
}

// Elementwise scalar-valued maps on 1x1 nodes.

inline Var s_mul(Var a, Var b) {
  const int ia = a.id, ib = b.id;
  return a.tape->record([=](const Tape& t) -> Matrix { return Matrix::Constant(1, 1, t.value(ia)(0, 0) * t.value(ib)(0, 0)); },
                        [=](Tape& t, const Matrix& g) {
                          t.accumulate(ia, g * t.value(ib)(0, 0));
                          t.accumulate(ib, g * t.value(ia)(0, 0));
                        });
}

inline Var s_div(Var a, Var b) {
  const int ia = a.id, ib = b.id;
  return a.tape->record([=](const Tape& t) -> Matrix { return Matrix::Constant(1, 1, t.value(ia)(0, 0) / t.value(ib)(0, 0)); },
                        [=](Tape& t, const Matrix& g) {
                          const double bv = t.value(ib)(0, 0);
                          t.accumulate(ia, g / bv);
                          t.accumulate(ib, -g * t.value(ia)(0, 0) / (bv * bv));
                        });
}

inline Var s_exp(Var a) {
  const int ia = a.id;
  return a.tape->record([=](const Tape& t) -> Matrix { return Matrix::Constant(1, 1, std::exp(t.value(ia)(0, 0))); },
                        [=](Tape& t, const Matrix& g) { t.accumulate(ia, g * std::exp(t.value(ia)(0, 0))); });
}

inline Var s_log(Var a) {
  const int ia = a.id;
  return a.tape->record([=](const Tape& t) -> Matrix { return Matrix::Constant(1, 1, std::log(t.value(ia)(0, 0))); },
                        [=](Tape& t, const Matrix& g) { t.accumulate(ia, g / t.value(ia)(0, 0)); });
}

inline Var s_abs(Var a) {
  const int ia = a.id;
  return a.tape->record([=](const Tape& t) -> Matrix { return Matrix::Constant(1, 1, std::abs(t.value(ia)(0, 0))); },
                        [=](Tape& t, const Matrix& g) {
                          const double v = t.value(ia)(0, 0);
                          t.accumulate(ia, g * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0)));
                        });
}

inline Var s_sqrt(Var a) {
  const int ia = a.id;
  return a.tape->record([=](const Tape& t) -> Matrix { return Matrix::Constant(1, 1, std::sqrt(t.value(ia)(0, 0))); },
                        [=](Tape& t, const Matrix& g) { t.accumulate(ia, g * (0.5 / std::sqrt(t.value(ia)(0, 0)))); });
}

/// expm1(x)/x.
inline Var s_phi1(Var a) {
  const int ia = a.id;
  return a.tape->record([=](const Tape& t) -> Matrix { return Matrix::Constant(1, 1, kernels::phi1(t.value(ia)(0, 0))); },
                        [=](Tape& t, const Matrix& g) {
                          t.accumulate(ia, g * kernels::phi1_derivative(t.value(ia)(0, 0)));
                        });
}

}  // namespace geodyn::ad
