#pragma once

// Geometric state-space model on SPD(N) under the Stein metric.
//
// Recurrent path (per layer, step k = 1..T, S_0 = I):
//   V_B = wFM(X_k..X_{k-tau}; B weights)             input aggregate
//   U   = wFM(S_{k-1}..S_{k-tau}, V_B; keep*A, gain)  state aggregate
//   S_k = g(V_B) U g(V_B)^T,  g(V) = cayley(WV - (WV)^T)
//   Y_k = g(V_D) wFM(S_k..S_{k-tau}; C) g(V_D)^T,  V_D = wFM(X_k..X_{k-tau}; D)
// Lag weights are softmax(logit_l + l * step * a), i.e. a_tilde^l exp(logit_l)
// normalized; keep = a_tilde / (a_tilde + |b_tilde|), gain = 1 - keep.
//
// Convolutional path (per layer, per step):
//   pad -> SPD conv (Z^T Z + eps I) -> attention mask -> log -> bounded tangent
//   rescale -> exp -> Frobenius normalize, followed by a lag-weighted wFM over
//   the tau most recent features (C weights).
//
// Readout: softmax(W_q vec(log Y_T)).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geodyn/algebra.hpp"
#include "geodyn/errors.hpp"
#include "geodyn/manifold_ops.hpp"
#include "geodyn/spd_core.hpp"

namespace geodyn {

enum class Mode { Recurrent, Convolutional };

inline const char* to_string(Mode m) { return m == Mode::Recurrent ? "recurrent" : "convolutional"; }

inline Mode parse_mode(const std::string& s) {
  if (s == "recurrent") return Mode::Recurrent;
  if (s == "convolutional" || s == "conv") return Mode::Convolutional;
  throw ParameterError("unknown mode '" + s + "' (expected recurrent|convolutional)");
}

/// Architecture hyperparameters (not trained).
struct ModelConfig {
  int dim = 0;             // N, inferred from data
  int classes = 2;         // Q
  int layers = 2;
  int tau = 4;             // lag window
  double step = 0.1;       // discretization step
  double eps = 1e-5;       // floor for Z^T Z + eps I and the attention guard
  double rho = 0.01;       // padding diagonal value
  int kernel = 3;          // conv kernel size theta (odd)
  int attention_pad = 1;   // attention pad width p
  bool attention = true;
  double wfm_tol = 1e-9;
  int wfm_max_iter = 200;
  double init_scale = 0.01;

  void validate() const {
    if (dim < 1) throw ParameterError("model: dim must be >= 1");
    if (classes < 2) throw ParameterError("model: classes must be >= 2");
    if (layers < 1) throw ParameterError("model: layers must be >= 1");
    if (tau < 1) throw ParameterError("model: tau must be >= 1");
    if (!(step > 0.0)) throw ParameterError("model: step must be positive");
    if (!(eps > 0.0)) throw ParameterError("model: eps must be positive");
    if (!(rho > 0.0)) throw ParameterError("model: rho must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw ParameterError("model: kernel must be odd and positive");
    if (attention_pad < 0) throw ParameterError("model: attention_pad must be nonnegative");
    if (!(wfm_tol > 0.0) || wfm_max_iter < 1) throw ParameterError("model: invalid wFM solver settings");
  }
  int readout_dim() const { return dim * (dim + 1) / 2; }
};

/// Continuous dynamics scalars and lag logits of the four weight families.
struct DynamicsParams {
  Matrix a;         // 1x1
  Matrix b;         // 1x1
  Matrix logits_a;  // tau x 1      states, lags 1..tau
  Matrix logits_b;  // (tau+1) x 1  inputs for the state update, lags 0..tau
  Matrix logits_c;  // (tau+1) x 1  states for the observation, lags 0..tau
  Matrix logits_d;  // (tau+1) x 1  inputs for the observation, lags 0..tau
};

struct LayerParams {
  Matrix z;  // theta x theta conv factor
  Matrix w;  // N x N action generator
};

struct ReadoutParams {
  Matrix weights;  // Q x N(N+1)/2
};

struct ModelParams {
  ModelConfig config;
  DynamicsParams dynamics;
  std::vector<LayerParams> layers;
  ReadoutParams readout;

  /// Visits every trainable field in a fixed order.
  template <class F>
  void for_each_field(F&& f) {
    f(std::string("dynamics.a"), dynamics.a);
    f(std::string("dynamics.b"), dynamics.b);
    f(std::string("dynamics.logits_a"), dynamics.logits_a);
    f(std::string("dynamics.logits_b"), dynamics.logits_b);
    f(std::string("dynamics.logits_c"), dynamics.logits_c);
    f(std::string("dynamics.logits_d"), dynamics.logits_d);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      f("layer" + std::to_string(l) + ".z", layers[l].z);
      f("layer" + std::to_string(l) + ".w", layers[l].w);
    }
    f(std::string("readout.weights"), readout.weights);
  }
  template <class F>
  void for_each_field(F&& f) const {
    const_cast<ModelParams*>(this)->for_each_field(
        [&](const std::string& name, Matrix& m) { f(name, static_cast<const Matrix&>(m)); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_field([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  /// Same shapes, all zeros (used for gradients and optimizer moments).
  ModelParams zeros_like() const {
    ModelParams z = *this;
    z.for_each_field([](const std::string&, Matrix& m) { m.setZero(); });
    return z;
  }

  /// Near-identity initialization: a = -1, b = 1, zero logits, conv factor
  /// concentrated on the kernel centre, small random W and classifier.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto randn = [&](Eigen::Index r, Eigen::Index c, double s) {
      Matrix m(r, c);
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = s * normal(rng);
      return m;
    };
    p.dynamics.a = Matrix::Constant(1, 1, -1.0);
    p.dynamics.b = Matrix::Constant(1, 1, 1.0);
    p.dynamics.logits_a = Matrix::Zero(cfg.tau, 1);
    p.dynamics.logits_b = Matrix::Zero(cfg.tau + 1, 1);
    p.dynamics.logits_c = Matrix::Zero(cfg.tau + 1, 1);
    p.dynamics.logits_d = Matrix::Zero(cfg.tau + 1, 1);
    for (int l = 0; l < cfg.layers; ++l) {
      LayerParams lp;
      lp.z = randn(cfg.kernel, cfg.kernel, cfg.init_scale);
      lp.z(cfg.kernel / 2, cfg.kernel / 2) += 1.0;
      lp.w = randn(cfg.dim, cfg.dim, cfg.init_scale);
      p.layers.push_back(std::move(lp));
    }
    p.readout.weights = randn(cfg.classes, cfg.readout_dim(), cfg.init_scale);
    return p;
  }
};

// ---------------------------------------------------------------------------
// Discretization and lag weights

struct Discretized {
  double a_tilde;
  double b_tilde;
};

/// Zero-order hold: a~ = exp(step a), b~ = (step a)^{-1} (exp(step a) - 1) step b.
inline Discretized discretize(double a, double b, double step) {
  if (!(step > 0.0)) throw ParameterError("discretize: step must be positive");
  return {std::exp(step * a), kernels::phi1(step * a) * step * b};
}

/// Normalized a~^l exp(logit_l), l = 1..m, for the first m logits.
inline WeightVector lag_weights(double a_tilde, int m, std::span<const double> logits) {
  if (m < 1) throw ParameterError("lag_weights: horizon must be >= 1");
  if (static_cast<int>(logits.size()) < m) throw DimensionError("lag_weights: fewer logits than lags");
  if (!(a_tilde > 0.0)) throw ParameterError("lag_weights: decay must be positive");
  Matrix z(m, 1);
  const double log_decay = std::log(a_tilde);
  for (int l = 0; l < m; ++l) z(l, 0) = logits[static_cast<std::size_t>(l)] + (l + 1) * log_decay;
  const Matrix w = kernels::softmax(z);
  std::vector<double> out(w.data(), w.data() + m);
  return WeightVector::normalized(std::move(out));
}

// ---------------------------------------------------------------------------
// Generic (algebra-parameterized) model internals

struct AttentionStats {
  std::size_t calls = 0;
  std::size_t guard_activations = 0;
  double rate() const { return calls == 0 ? 0.0 : static_cast<double>(guard_activations) / static_cast<double>(calls); }
};

/// Accumulates per-layer attention masks (cropped to N x N) for export.
struct AttentionRecorder {
  std::vector<Matrix> mask_sum;
  std::vector<std::size_t> count;

  void add(std::size_t layer, const Matrix& mask) {
    if (mask_sum.size() <= layer) {
      mask_sum.resize(layer + 1);
      count.resize(layer + 1, 0);
    }
    if (mask_sum[layer].size() == 0) {
      mask_sum[layer] = mask;
    } else {
      mask_sum[layer] += mask;
    }
    ++count[layer];
  }
  Matrix mean(std::size_t layer) const { return mask_sum[layer] / static_cast<double>(count[layer]); }
};

struct ForwardOptions {
  bool attention = true;
  AttentionStats* stats = nullptr;
  AttentionRecorder* recorder = nullptr;
};

namespace model {

/// Model parameters lifted into an algebra (tape leaves or plain copies).
template <class Alg>
struct Bound {
  using Mat = typename Alg::Mat;
  Mat a, b, logits_a, logits_b, logits_c, logits_d;
  std::vector<Mat> z, w;
  Mat readout;
};

template <class Alg>
std::vector<typename Alg::Mat> lift(const Alg& alg, const std::vector<Matrix>& xs) {
  std::vector<typename Alg::Mat> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(alg.constant(x));
  return out;
}

template <class Alg>
Bound<Alg> bind(const Alg& alg, const ModelParams& p) {
  Bound<Alg> out;
  out.a = alg.constant(p.dynamics.a);
  out.b = alg.constant(p.dynamics.b);
  out.logits_a = alg.constant(p.dynamics.logits_a);
  out.logits_b = alg.constant(p.dynamics.logits_b);
  out.logits_c = alg.constant(p.dynamics.logits_c);
  out.logits_d = alg.constant(p.dynamics.logits_d);
  for (const auto& l : p.layers) {
    out.z.push_back(alg.constant(l.z));
    out.w.push_back(alg.constant(l.w));
  }
  out.readout = alg.constant(p.readout.weights);
  return out;
}

/// Quantities derived once per forward pass from the dynamics parameters.
template <class Alg>
struct Dynamics {
  using Mat = typename Alg::Mat;
  using Scalar = typename Alg::Scalar;
  Scalar keep;  // weight share of the state history
  Scalar gain;  // weight share of the input aggregate
  // weights[family][m-1] = weights over the m most recent lags
  std::vector<std::vector<Scalar>> a, b, c, d;
};

// First m rows of a column vector, via a constant selection matrix.
template <class Alg>
typename Alg::Mat crop_rows(const Alg& alg, const typename Alg::Mat& v, int m) {
  const Eigen::Index n = Alg::value(v).rows();
  Matrix sel = Matrix::Zero(m, n);
  for (int i = 0; i < m; ++i) sel(i, i) = 1.0;
  return alg.matmul(alg.constant(sel), v);
}

template <class Alg>
std::vector<std::vector<typename Alg::Scalar>> lag_family(const Alg& alg, const typename Alg::Scalar& log_decay,
                                                           const typename Alg::Mat& logits, int count) {
  std::vector<std::vector<typename Alg::Scalar>> table;
  for (int m = 1; m <= count; ++m) {
    Matrix ramp(m, 1);
    for (int l = 0; l < m; ++l) ramp(l, 0) = l + 1;
    auto head = m == count ? logits : crop_rows(alg, logits, m);
    auto w = alg.softmax(alg.add(head, alg.scale(log_decay, alg.constant(ramp))));
    std::vector<typename Alg::Scalar> ws;
    for (int l = 0; l < m; ++l) ws.push_back(alg.entry(w, l, 0));
    table.push_back(std::move(ws));
  }
  return table;
}

template <class Alg>
Dynamics<Alg> derive_dynamics(const Alg& alg, const Bound<Alg>& p, const ModelConfig& cfg) {
  Dynamics<Alg> d;
  auto step = alg.constant_scalar(cfg.step);
  auto log_decay = alg.s_mul(step, alg.entry(p.a, 0, 0));  // log a~
  auto a_tilde = alg.s_exp(log_decay);
  auto b_tilde = alg.s_mul(alg.s_mul(alg.s_phi1(log_decay), step), alg.entry(p.b, 0, 0));
  auto abs_b = alg.s_abs(b_tilde);
  auto denom = alg.s_add(a_tilde, abs_b);
  d.keep = alg.s_div(a_tilde, denom);
  d.gain = alg.s_div(abs_b, denom);
  d.a = lag_family(alg, log_decay, p.logits_a, cfg.tau);
  d.b = lag_family(alg, log_decay, p.logits_b, cfg.tau + 1);
  d.c = lag_family(alg, log_decay, p.logits_c, cfg.tau + 1);
  d.d = lag_family(alg, log_decay, p.logits_d, cfg.tau + 1);
  return d;
}

template <class Alg>
WfmOptions wfm_options(const ModelConfig& cfg) {
  return WfmOptions{cfg.wfm_tol, cfg.wfm_max_iter};
}

/// State update. `states` and `inputs` are ordered most recent first.
template <class Alg>
typename Alg::Mat state_update(const Alg& alg, const Dynamics<Alg>& dyn, const typename Alg::Mat& w,
                               const std::vector<typename Alg::Mat>& states,
                               const std::vector<typename Alg::Mat>& inputs, const ModelConfig& cfg) {
  const auto opt = wfm_options<Alg>(cfg);
  auto v = ops::stein_wfm(alg, inputs, dyn.b[inputs.size() - 1], opt);
  std::vector<typename Alg::Mat> pts = states;
  std::vector<typename Alg::Scalar> ws;
  for (const auto& wa : dyn.a[states.size() - 1]) ws.push_back(alg.s_mul(dyn.keep, wa));
  pts.push_back(v);
  ws.push_back(dyn.gain);
  auto u = ops::stein_wfm(alg, pts, ws, opt);
  auto g = ops::group_action_generator(alg, w, v);
  return ops::translate(alg, u, g);
}

/// Observation. `states` (including S_k) and `inputs` ordered most recent first.
template <class Alg>
typename Alg::Mat observe(const Alg& alg, const Dynamics<Alg>& dyn, const typename Alg::Mat& w,
                          const std::vector<typename Alg::Mat>& states, const std::vector<typename Alg::Mat>& inputs,
                          const ModelConfig& cfg) {
  const auto opt = wfm_options<Alg>(cfg);
  auto u = ops::stein_wfm(alg, states, dyn.c[states.size() - 1], opt);
  auto v = ops::stein_wfm(alg, inputs, dyn.d[inputs.size() - 1], opt);
  auto g = ops::group_action_generator(alg, w, v);
  return ops::translate(alg, u, g);
}

template <class T>
std::vector<T> recent(const std::vector<T>& seq, std::size_t end, std::size_t count) {
  // seq[end-1], seq[end-2], ... (at most `count` items)
  std::vector<T> out;
  for (std::size_t i = 0; i < count && i < end; ++i) out.push_back(seq[end - 1 - i]);
  return out;
}

/// Unrolled recurrence for one layer. Returns all outputs, or only Y_T when
/// `last_only` is set.
template <class Alg>
std::vector<typename Alg::Mat> run_recurrent(const Alg& alg, const Dynamics<Alg>& dyn, const typename Alg::Mat& w,
                                             const std::vector<typename Alg::Mat>& inputs, const ModelConfig& cfg,
                                             bool last_only = false) {
  using Mat = typename Alg::Mat;
  if (inputs.empty()) throw DimensionError("run_recurrent: empty sequence");
  const auto n = Alg::value(inputs.front()).rows();
  const auto tau = static_cast<std::size_t>(cfg.tau);
  std::vector<Mat> states{alg.constant(Matrix::Identity(n, n))};
  std::vector<Mat> outputs;
  for (std::size_t k = 1; k <= inputs.size(); ++k) {
    auto xin = recent(inputs, k, tau + 1);
    auto s_hist = recent(states, k, tau);
    states.push_back(state_update(alg, dyn, w, s_hist, xin, cfg));
    if (!last_only || k == inputs.size()) {
      auto s_obs = recent(states, k + 1, tau + 1);
      outputs.push_back(observe(alg, dyn, w, s_obs, xin, cfg));
    }
  }
  return outputs;
}

/// Entrywise-exp mask over the padded response, normalized by its largest entry.
template <class Alg>
typename Alg::Mat spa_attention(const Alg& alg, const typename Alg::Mat& resp, int p, double rho) {
  auto e = alg.exp_entry(alg.pad(resp, p, rho));
  return alg.divide(e, alg.max_entry(e));
}

/// sym(mask o resp), lifted by (|lambda_min| + eps) I if lambda_min < eps.
/// LLT alone is not enough: a mask spanning ~20 decades gives eigenvalues of
/// order -1e-15 that Cholesky accepts and the matrix log then rejects.
template <class Alg>
typename Alg::Mat apply_attention(const Alg& alg, const typename Alg::Mat& mask, const typename Alg::Mat& resp,
                                  double eps, AttentionStats* stats) {
  auto m = alg.symmetrize(alg.hadamard(mask, resp));
  if (stats) ++stats->calls;
  const Eigen::SelfAdjointEigenSolver<Matrix> es(Alg::value(m), Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  if (!(lmin >= eps)) {
    if (stats) ++stats->guard_activations;
    return alg.add_identity(m, std::abs(lmin) + eps);
  }
  return m;
}

/// Log, bounded tangent rescale L * 4 / sqrt(|L|_F^2 + 16) (eigenvalues in (-4, 4)), exp, normalize.
template <class Alg>
typename Alg::Mat exp_nonlinearity(const Alg& alg, const typename Alg::Mat& x) {
  auto l = alg.sym_log(x);
  auto s = alg.s_div(alg.constant_scalar(4.0),
                     alg.s_sqrt(alg.s_add(alg.sq_norm(l), alg.constant_scalar(16.0))));
  auto e = alg.sym_exp(alg.scale(s, l));
  return alg.divide(e, alg.frob_norm(e));
}

/// One convolutional layer over a whole sequence.
template <class Alg>
std::vector<typename Alg::Mat> conv_layer(const Alg& alg, const Dynamics<Alg>& dyn, const typename Alg::Mat& z,
                                          const std::vector<typename Alg::Mat>& inputs, const ModelConfig& cfg,
                                          const ForwardOptions& opt, std::size_t layer_index, bool last_only = false) {
  using Mat = typename Alg::Mat;
  const auto tau = static_cast<std::size_t>(cfg.tau);
  const int half = cfg.kernel / 2;
  std::vector<Mat> feats;
  const std::size_t first = last_only && inputs.size() > tau + 1 ? inputs.size() - (tau + 1) : 0;
  for (std::size_t t = first; t < inputs.size(); ++t) {
    const Eigen::Index n = Alg::value(inputs[t]).rows();
    auto resp = ops::spd_conv(alg, alg.pad(inputs[t], half, cfg.rho), z, cfg.eps);
    if (opt.attention) {
      auto mask = spa_attention(alg, resp, cfg.attention_pad, cfg.rho);
      auto cropped = alg.crop(mask, cfg.attention_pad, n);
      if (opt.recorder) opt.recorder->add(layer_index, Alg::value(cropped));
      resp = apply_attention(alg, cropped, resp, cfg.eps, opt.stats);
    } else {
      resp = alg.symmetrize(resp);
    }
    feats.push_back(exp_nonlinearity(alg, resp));
  }
  std::vector<Mat> out;
  const auto opts = wfm_options<Alg>(cfg);
  for (std::size_t k = 1; k <= feats.size(); ++k) {
    if (last_only && k != feats.size()) continue;
    auto hist = recent(feats, k, tau + 1);
    out.push_back(ops::stein_wfm(alg, hist, dyn.c[hist.size() - 1], opts));
  }
  return out;
}

template <class Alg>
typename Alg::Mat readout(const Alg& alg, const typename Alg::Mat& weights, const typename Alg::Mat& y) {
  return alg.softmax(alg.matmul(weights, alg.vec_iso(alg.sym_log(y))));
}

/// Final-step SPD output Y_T of the stacked layers.
template <class Alg>
typename Alg::Mat final_output(const Alg& alg, const Bound<Alg>& p, const ModelConfig& cfg,
                               const std::vector<typename Alg::Mat>& seq, Mode mode, const ForwardOptions& opt) {
  auto dyn = derive_dynamics(alg, p, cfg);
  std::vector<typename Alg::Mat> cur = seq;
  const auto layers = p.w.size();
  for (std::size_t l = 0; l < layers; ++l) {
    const bool last = l + 1 == layers;
    // Full sequences are needed by every layer except the last, which only feeds the readout.
    cur = mode == Mode::Recurrent ? run_recurrent(alg, dyn, p.w[l], cur, cfg, last)
                                  : conv_layer(alg, dyn, p.z[l], cur, cfg, opt, l, last && opt.recorder == nullptr);
  }
  return cur.back();
}

template <class Alg>
typename Alg::Mat forward_probs(const Alg& alg, const Bound<Alg>& p, const ModelConfig& cfg,
                                const std::vector<typename Alg::Mat>& seq, Mode mode, const ForwardOptions& opt) {
  return readout(alg, p.readout, final_output(alg, p, cfg, seq, mode, opt));
}

}  // namespace model

// ---------------------------------------------------------------------------
// Public value-level API

namespace detail {

inline void check_sequence(const ModelParams& p, std::span<const SpdMatrix> seq) {
  if (seq.empty()) throw DimensionError("model: empty sequence");
  for (const auto& x : seq) require_same_dim(x.dim(), p.config.dim, "model input");
}

inline std::vector<Matrix> chronological_reversed(std::span<const SpdMatrix> s) {
  std::vector<Matrix> out;
  for (auto it = s.rbegin(); it != s.rend(); ++it) out.push_back(it->matrix());
  return out;
}

}  // namespace detail

/// S_k from the chronological history S_{k-tau}..S_{k-1} and inputs X_{k-tau}..X_k.
inline SpdMatrix state_update(std::span<const SpdMatrix> states, std::span<const SpdMatrix> inputs,
                              const ModelParams& p, std::size_t layer = 0) {
  if (states.empty() || inputs.empty()) throw DimensionError("state_update: empty slice");
  if (states.size() > static_cast<std::size_t>(p.config.tau) || inputs.size() > static_cast<std::size_t>(p.config.tau) + 1) {
    throw DimensionError("state_update: slice longer than the lag window");
  }
  PlainAlgebra alg;
  auto bound = model::bind(alg, p);
  auto dyn = model::derive_dynamics(alg, bound, p.config);
  return SpdMatrix::trusted(model::state_update(alg, dyn, bound.w.at(layer), detail::chronological_reversed(states),
                                                detail::chronological_reversed(inputs), p.config));
}

/// Y_k from chronological S_{k-tau}..S_k and X_{k-tau}..X_k.
inline SpdMatrix observe(std::span<const SpdMatrix> states, std::span<const SpdMatrix> inputs, const ModelParams& p,
                         std::size_t layer = 0) {
  if (states.empty() || inputs.empty()) throw DimensionError("observe: empty slice");
  if (states.size() > static_cast<std::size_t>(p.config.tau) + 1 ||
      inputs.size() > static_cast<std::size_t>(p.config.tau) + 1) {
    throw DimensionError("observe: slice longer than the lag window");
  }
  PlainAlgebra alg;
  auto bound = model::bind(alg, p);
  auto dyn = model::derive_dynamics(alg, bound, p.config);
  return SpdMatrix::trusted(model::observe(alg, dyn, bound.w.at(layer), detail::chronological_reversed(states),
                                           detail::chronological_reversed(inputs), p.config));
}

/// Outputs Y_1..Y_T of one recurrent layer.
inline SpdSequence run_recurrent(const SpdSequence& seq, const ModelParams& p, std::size_t layer = 0) {
  detail::check_sequence(p, seq.items());
  PlainAlgebra alg;
  auto bound = model::bind(alg, p);
  auto dyn = model::derive_dynamics(alg, bound, p.config);
  SpdSequence out;
  for (auto& y : model::run_recurrent(alg, dyn, bound.w.at(layer), seq.matrices(), p.config)) {
    out.push_back(SpdMatrix::trusted(std::move(y)));
  }
  return out;
}

/// Feature sequence after all convolutional layers.
inline SpdSequence forward_conv(const SpdSequence& seq, const ModelParams& p, const ForwardOptions& opt = {}) {
  detail::check_sequence(p, seq.items());
  PlainAlgebra alg;
  auto bound = model::bind(alg, p);
  auto dyn = model::derive_dynamics(alg, bound, p.config);
  std::vector<Matrix> cur = seq.matrices();
  for (std::size_t l = 0; l < bound.z.size(); ++l) cur = model::conv_layer(alg, dyn, bound.z[l], cur, p.config, opt, l);
  SpdSequence out;
  for (auto& y : cur) out.push_back(SpdMatrix::trusted(std::move(y)));
  return out;
}

/// Attention mask (size N + 2p) of a convolutional response.
inline Matrix spa_attention(const SpdMatrix& resp, int p, double rho) {
  if (!(rho > 0.0)) throw ParameterError("spa_attention: rho must be positive");
  if (p < 0) throw ParameterError("spa_attention: pad width must be nonnegative");
  PlainAlgebra alg;
  return model::spa_attention(alg, resp.matrix(), p, rho);
}

inline SpdMatrix apply_attention(const Matrix& mask, const SpdMatrix& resp, double eps = 1e-5,
                                 AttentionStats* stats = nullptr) {
  if (mask.rows() != resp.dim() || mask.cols() != resp.dim()) throw DimensionError("apply_attention: shape mismatch");
  PlainAlgebra alg;
  return SpdMatrix::trusted(model::apply_attention(alg, mask, resp.matrix(), eps, stats));
}

/// Class probabilities from an SPD output.
inline Vector readout(const SpdMatrix& y, const ReadoutParams& r) {
  if (!is_spd(y.matrix())) throw DomainError("readout: input is not SPD");
  if (r.weights.cols() != y.dim() * (y.dim() + 1) / 2) throw DimensionError("readout: weight width mismatch");
  PlainAlgebra alg;
  return model::readout(alg, r.weights, y.matrix());
}

/// Class probabilities for a whole sequence.
inline Vector model_forward(const SpdSequence& seq, const ModelParams& p, Mode mode, const ForwardOptions& opt = {}) {
  detail::check_sequence(p, seq.items());
  PlainAlgebra alg;
  auto bound = model::bind(alg, p);
  ForwardOptions o = opt;
  o.attention = opt.attention && p.config.attention;
  return model::forward_probs(alg, bound, p.config, seq.matrices(), mode, o);
}

/// Final SPD output Y_T (before the readout).
inline SpdMatrix model_final_output(const SpdSequence& seq, const ModelParams& p, Mode mode,
                                    const ForwardOptions& opt = {}) {
  detail::check_sequence(p, seq.items());
  PlainAlgebra alg;
  auto bound = model::bind(alg, p);
  ForwardOptions o = opt;
  o.attention = opt.attention && p.config.attention;
  return SpdMatrix::trusted(model::final_output(alg, bound, p.config, seq.matrices(), mode, o));
}

// ---------------------------------------------------------------------------
// Euclidean scalar SSM reference

struct ScalarSsmResult {
  std::vector<double> kernel;       // (c b~ + d, c a~ b~, c a~^2 b~, ...)
  std::vector<double> recurrence;   // y via s_k = a~ s_{k-1} + b~ x_k, y_k = c s_k + d x_k
  std::vector<double> convolution;  // y via y = x * kernel
};

inline ScalarSsmResult scalar_ssm_discrete(double a_tilde, double b_tilde, double c, double d, std::span<const double> x) {
  ScalarSsmResult r;
  const std::size_t n = x.size();
  r.kernel.resize(n);
  double power = 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    r.kernel[j] = j == 0 ? c * b_tilde + d : c * power * b_tilde;
    power *= a_tilde;
    if (j == 0) power = a_tilde;
  }
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    s = a_tilde * s + b_tilde * x[k];
    r.recurrence.push_back(c * s + d * x[k]);
  }
  for (std::size_t k = 0; k < n; ++k) {
    double y = 0.0;
    for (std::size_t j = 0; j <= k; ++j) y += r.kernel[j] * x[k - j];
    r.convolution.push_back(y);
  }
  return r;
}

/// Continuous (a, b, c, d) discretized with `step`, evaluated both ways.
inline ScalarSsmResult scalar_ssm_oracle(double a, double b, double c, double d, std::span<const double> x,
                                         double step = 0.1) {
  const auto disc = discretize(a, b, step);
  return scalar_ssm_discrete(disc.a_tilde, disc.b_tilde, c, d, x);
}

}  // namespace geodyn
