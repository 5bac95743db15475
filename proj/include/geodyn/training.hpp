#pragma once

// Loss, reverse-mode gradients, optimizers, stratified k-fold splitting,
// classification metrics and the train / cross-validate loops.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "geodyn/algebra.hpp"
#include "geodyn/dataset.hpp"
#include "geodyn/errors.hpp"
#include "geodyn/model.hpp"

namespace geodyn {

inline constexpr double kProbFloor = 1e-12;

/// -(1/E) sum_i log P_i[label_i], with log clamped at log(1e-12).
inline double cross_entropy(const Matrix& probs, std::span<const std::uint32_t> labels) {
  if (probs.rows() != static_cast<Eigen::Index>(labels.size()) || probs.rows() == 0) {
    throw DimensionError("cross_entropy: row count does not match label count");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
    if (y >= probs.cols()) throw DimensionError("cross_entropy: label out of range");
    if (std::abs(probs.row(i).sum() - 1.0) > 1e-9) throw ParameterError("cross_entropy: row does not sum to one");
    total -= std::log(std::max(probs(i, y), kProbFloor));
  }
  return total / static_cast<double>(probs.rows());
}

/// One-hot form: `onehot` is E x Q.
inline double cross_entropy(const Matrix& probs, const Matrix& onehot) {
  if (probs.rows() != onehot.rows() || probs.cols() != onehot.cols()) {
    throw DimensionError("cross_entropy: shape mismatch");
  }
  std::vector<std::uint32_t> labels;
  for (Eigen::Index i = 0; i < onehot.rows(); ++i) {
    Eigen::Index arg = 0;
    if (onehot.row(i).sum() != 1.0 || onehot.row(i).maxCoeff(&arg) != 1.0) {
      throw ParameterError("cross_entropy: label row is not one-hot");
    }
    labels.push_back(static_cast<std::uint32_t>(arg));
  }
  return cross_entropy(probs, labels);
}

// ---------------------------------------------------------------------------
// Gradients

struct GradResult {
  double loss = 0.0;    // mean cross-entropy over the batch
  ModelParams grad;     // same shapes as the parameters
};

namespace detail {

inline std::size_t resolve_threads(std::size_t threads, std::size_t work) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(threads, work));
}

/// Runs f(i) for i in [0, n) on up to `threads` workers.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& f) {
  threads = resolve_threads(threads, n);
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) f(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct SampleGrad {
  double loss = 0.0;
  ModelParams grad;
};

inline SampleGrad sample_grad(const ModelParams& params, const LabeledSequence& item, Mode mode) {
  ad::Tape tape;
  TapeAlgebra alg(tape);
  auto bound = model::bind(alg, params);
  ForwardOptions opt;
  opt.attention = params.config.attention;
  auto probs = model::forward_probs(alg, bound, params.config, model::lift(alg, item.seq.matrices()), mode, opt);
  const auto y = static_cast<Eigen::Index>(item.label);
  auto p = alg.entry(probs, y, 0);
  SampleGrad out;
  if (p.scalar() < kProbFloor) {
    // Clamped: constant loss, no gradient.
    out.loss = -std::log(kProbFloor);
    out.grad = params.zeros_like();
    return out;
  }
  auto loss = alg.scale_by(-1.0, alg.s_log(p));
  tape.backward(loss);
  out.loss = loss.scalar();
  out.grad = params.zeros_like();
  out.grad.dynamics.a = tape.adjoint(bound.a);
  out.grad.dynamics.b = tape.adjoint(bound.b);
  out.grad.dynamics.logits_a = tape.adjoint(bound.logits_a);
  out.grad.dynamics.logits_b = tape.adjoint(bound.logits_b);
  out.grad.dynamics.logits_c = tape.adjoint(bound.logits_c);
  out.grad.dynamics.logits_d = tape.adjoint(bound.logits_d);
  for (std::size_t l = 0; l < bound.z.size(); ++l) {
    out.grad.layers[l].z = tape.adjoint(bound.z[l]);
    out.grad.layers[l].w = tape.adjoint(bound.w[l]);
  }
  out.grad.readout.weights = tape.adjoint(bound.readout);
  return out;
}

/// a += s * b, field by field.
inline void axpy(ModelParams& a, double s, const ModelParams& b) {
  std::vector<const Matrix*> src;
  b.for_each_field([&](const std::string&, const Matrix& m) { src.push_back(&m); });
  std::size_t k = 0;
  a.for_each_field([&](const std::string&, Matrix& m) { m += s * *src[k++]; });
}

}  // namespace detail

/// Exact reverse-mode gradient of the mean cross-entropy over `batch`.
/// Per-sample tapes are reduced in index order, so the result does not
/// depend on the thread count.
inline GradResult grad(const ModelParams& params, std::span<const LabeledSequence* const> batch, Mode mode,
                       std::size_t threads = 1) {
  if (batch.empty()) throw DimensionError("grad: empty batch");
  std::vector<detail::SampleGrad> parts(batch.size());
  detail::parallel_for(batch.size(), threads, [&](std::size_t i) {
    parts[i] = detail::sample_grad(params, *batch[i], mode);
  });
  GradResult out;
  out.grad = params.zeros_like();
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& p : parts) {
    out.loss += p.loss * inv;
    detail::axpy(out.grad, inv, p.grad);
  }
  return out;
}

inline GradResult grad(const ModelParams& params, const LabeledDataset& data, Mode mode, std::size_t threads = 1) {
  std::vector<const LabeledSequence*> batch;
  for (const auto& it : data.items) batch.push_back(&it);
  return grad(params, batch, mode, threads);
}

/// Class probabilities for each item, as an E x Q matrix.
inline Matrix predict_probs(const ModelParams& params, std::span<const LabeledSequence* const> batch, Mode mode,
                            std::size_t threads = 1) {
  Matrix out(static_cast<Eigen::Index>(batch.size()), params.config.classes);
  detail::parallel_for(batch.size(), threads, [&](std::size_t i) {
    out.row(static_cast<Eigen::Index>(i)) = model_forward(batch[i]->seq, params, mode).transpose();
  });
  return out;
}

inline double batch_loss(const ModelParams& params, std::span<const LabeledSequence* const> batch, Mode mode,
                         std::size_t threads = 1) {
  std::vector<std::uint32_t> labels;
  for (const auto* it : batch) labels.push_back(it->label);
  return cross_entropy(predict_probs(params, batch, mode, threads), labels);
}

/// Central differences, one forward pair per scalar parameter.
inline ModelParams finite_diff_grad(const ModelParams& params, std::span<const LabeledSequence* const> batch, Mode mode,
                                    double h = 1e-5) {
  if (!(h > 0.0)) throw ParameterError("finite_diff_grad: step must be positive");
  ModelParams g = params.zeros_like();
  ModelParams probe = params;
  std::vector<Matrix*> gfields;
  g.for_each_field([&](const std::string&, Matrix& m) { gfields.push_back(&m); });
  std::size_t k = 0;
  probe.for_each_field([&](const std::string&, Matrix& m) {
    Matrix& gm = *gfields[k++];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + h;
      const double up = batch_loss(probe, batch, mode);
      m.data()[i] = orig - h;
      const double down = batch_loss(probe, batch, mode);
      m.data()[i] = orig;
      gm.data()[i] = (up - down) / (2.0 * h);
    }
  });
  return g;
}

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { Sgd, Adam };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ParameterError("unknown optimizer '" + s + "' (expected sgd|adam)");
}

struct TrainConfig {
  double lr = 5e-5;
  double weight_decay = 0.0;
  std::size_t batch_size = 16;
  std::size_t epochs = 300;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 0;
  std::size_t folds = 10;
  std::size_t threads = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (!(lr > 0.0)) throw ParameterError("train: lr must be positive");
    if (!(weight_decay >= 0.0)) throw ParameterError("train: weight_decay must be nonnegative");
    if (batch_size < 1) throw ParameterError("train: batch_size must be positive");
    if (folds < 2) throw ParameterError("train: folds must be >= 2");
  }
};

/// p <- p - lr (g + wd p).
inline void sgd_step(ModelParams& params, const ModelParams& grads, const TrainConfig& cfg) {
  std::vector<const Matrix*> gs;
  grads.for_each_field([&](const std::string&, const Matrix& m) { gs.push_back(&m); });
  std::size_t k = 0;
  params.for_each_field([&](const std::string& name, Matrix& m) {
    const Matrix& g = *gs[k++];
    if (g.rows() != m.rows() || g.cols() != m.cols()) throw DimensionError("sgd_step: shape mismatch in " + name);
    m -= cfg.lr * (g + cfg.weight_decay * m);
  });
}

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::uint64_t t = 0;

  static AdamState zeros_like(const ModelParams& p) { return AdamState{p.zeros_like(), p.zeros_like(), 0}; }
};

/// Bias-corrected Adam with L2 weight decay folded into the gradient.
inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const TrainConfig& cfg) {
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  std::vector<const Matrix*> gs;
  std::vector<Matrix*> ms, vs;
  grads.for_each_field([&](const std::string&, const Matrix& m) { gs.push_back(&m); });
  state.m.for_each_field([&](const std::string&, Matrix& m) { ms.push_back(&m); });
  state.v.for_each_field([&](const std::string&, Matrix& m) { vs.push_back(&m); });
  std::size_t k = 0;
  params.for_each_field([&](const std::string& name, Matrix& p) {
    const Matrix& g0 = *gs[k];
    Matrix& m = *ms[k];
    Matrix& v = *vs[k];
    ++k;
    if (g0.rows() != p.rows() || g0.cols() != p.cols()) throw DimensionError("adam_step: shape mismatch in " + name);
    const Matrix g = g0 + cfg.weight_decay * p;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    p.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
  });
}

// ---------------------------------------------------------------------------
// Splits and metrics

/// k disjoint folds, stratified by class, deterministic in `seed`.
/// k == E gives leave-one-out; otherwise every class needs at least k samples.
inline std::vector<std::vector<std::size_t>> kfold_split(std::span<const std::uint32_t> labels, std::size_t k,
                                                         std::uint64_t seed) {
  const std::size_t e = labels.size();
  if (k < 2) throw ParameterError("kfold_split: k must be >= 2");
  if (k > e) throw ParameterError("kfold_split: more folds than samples");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> folds(k);
  auto shuffle = [&](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(v[i - 1], v[pick(rng)]);
    }
  };
  if (k == e) {
    std::vector<std::size_t> all(e);
    std::iota(all.begin(), all.end(), 0);
    shuffle(all);
    for (std::size_t i = 0; i < e; ++i) folds[i].push_back(all[i]);
    return folds;
  }
  std::uint32_t max_label = 0;
  for (auto y : labels) max_label = std::max(max_label, y);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label) + 1);
  for (std::size_t i = 0; i < e; ++i) by_class[labels[i]].push_back(i);
  // Deal each shuffled class round-robin, continuing where the previous class
  // stopped so overall fold sizes also stay within one of each other.
  std::size_t next = 0;
  for (std::size_t q = 0; q < by_class.size(); ++q) {
    auto& members = by_class[q];
    if (members.empty()) continue;
    if (members.size() < k) {
      throw ParameterError("kfold_split: class " + std::to_string(q) + " has " + std::to_string(members.size()) +
                           " samples, fewer than " + std::to_string(k) + " folds");
    }
    shuffle(members);
    for (auto idx : members) {
      folds[next].push_back(idx);
      next = (next + 1) % k;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

struct Metrics {
  Eigen::MatrixXi confusion;  // rows: true class, cols: predicted class
  double accuracy = 0.0;
  double precision = 0.0;  // macro
  double recall = 0.0;     // macro
  double f1 = 0.0;         // macro

  /// Derives every score from the confusion matrix; 0/0 counts as 0.
  static Metrics from_confusion(const Eigen::MatrixXi& c) {
    Metrics m;
    m.confusion = c;
    const auto q = c.rows();
    const double total = c.sum();
    m.accuracy = total > 0 ? c.trace() / total : 0.0;
    for (Eigen::Index k = 0; k < q; ++k) {
      const double tp = c(k, k);
      const double pred = c.col(k).sum();
      const double actual = c.row(k).sum();
      const double p = pred > 0 ? tp / pred : 0.0;
      const double r = actual > 0 ? tp / actual : 0.0;
      m.precision += p;
      m.recall += r;
      m.f1 += p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    if (q > 0) {
      m.precision /= static_cast<double>(q);
      m.recall /= static_cast<double>(q);
      m.f1 /= static_cast<double>(q);
    }
    return m;
  }

  static Metrics from_predictions(std::span<const std::uint32_t> truth, std::span<const std::uint32_t> pred,
                                  std::size_t classes) {
    if (truth.size() != pred.size()) throw DimensionError("metrics: prediction count mismatch");
    Eigen::MatrixXi c = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(classes));
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] >= classes || pred[i] >= classes) throw DimensionError("metrics: label out of range");
      ++c(truth[i], pred[i]);
    }
    return from_confusion(c);
  }
};

/// Argmax with ties going to the lower index.
inline std::uint32_t argmax(const Vector& p) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < p.size(); ++i) {
    if (p(i) > p(best)) best = i;
  }
  return static_cast<std::uint32_t>(best);
}

struct Evaluation {
  Metrics metrics;
  double loss = 0.0;
  std::vector<std::uint32_t> predictions;
};

inline Evaluation evaluate_detailed(const ModelParams& params, const LabeledDataset& data, Mode mode,
                                    std::size_t threads = 1) {
  if (data.empty()) throw DimensionError("evaluate: empty dataset");
  std::vector<const LabeledSequence*> batch;
  for (const auto& it : data.items) batch.push_back(&it);
  const Matrix probs = predict_probs(params, batch, mode, threads);
  Evaluation ev;
  const auto truth = data.labels();
  for (Eigen::Index i = 0; i < probs.rows(); ++i) ev.predictions.push_back(argmax(probs.row(i).transpose()));
  ev.loss = cross_entropy(probs, truth);
  ev.metrics = Metrics::from_predictions(truth, ev.predictions, static_cast<std::size_t>(params.config.classes));
  return ev;
}

inline Metrics evaluate(const ModelParams& params, const LabeledDataset& data, Mode mode, std::size_t threads = 1) {
  return evaluate_detailed(params, data, mode, threads).metrics;
}

// ---------------------------------------------------------------------------
// Loops

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean minibatch loss over the epoch
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> history;
  double initial_loss = 0.0;
};

/// Minibatch training with a per-epoch shuffle drawn from `cfg.seed`.
inline TrainResult train(ModelParams params, const LabeledDataset& data, Mode mode, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (data.empty()) throw DimensionError("train: empty dataset");
  TrainResult out;
  std::vector<const LabeledSequence*> all;
  for (const auto& it : data.items) all.push_back(&it);
  out.initial_loss = batch_loss(params, all, mode, cfg.threads);

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamState adam = AdamState::zeros_like(params);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<const LabeledSequence*> batch;
      for (std::size_t j = start; j < stop; ++j) batch.push_back(all[order[j]]);
      auto g = grad(params, batch, mode, cfg.threads);
      epoch_loss += g.loss * static_cast<double>(batch.size());
      if (cfg.optimizer == OptimizerKind::Sgd) {
        sgd_step(params, g.grad, cfg);
      } else {
        adam_step(params, g.grad, adam, cfg);
      }
    }
    EpochLog log{epoch + 1, epoch_loss / static_cast<double>(order.size())};
    out.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  out.params = std::move(params);
  return out;
}

struct FoldResult {
  std::size_t fold = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  Metrics metrics;
  double seconds = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)

  /// Percent "mean ± std" with two decimals.
  std::string format() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << 100.0 * mean << " ± " << 100.0 * std;
    return os.str();
  }
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd r;
  if (xs.empty()) return r;
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

struct XvalResult {
  std::vector<FoldResult> folds;
  MeanStd accuracy, precision, f1;
};

/// Stratified k-fold cross-validation; fold f trains a fresh model seeded with seed + f.
inline XvalResult cross_validate(const LabeledDataset& data, const ModelConfig& model_cfg, Mode mode,
                                 const TrainConfig& cfg,
                                 const std::function<void(const FoldResult&)>& on_fold = {}) {
  cfg.validate();
  const auto labels = data.labels();
  const auto folds = kfold_split(labels, cfg.folds, cfg.seed);
  XvalResult out;
  std::vector<double> acc, pre, f1;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> train_idx;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    const auto train_set = data.subset(train_idx);
    const auto test_set = data.subset(folds[f]);
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = cfg.seed + f;
    auto init = ModelParams::init(model_cfg, fold_cfg.seed);
    auto trained = train(std::move(init), train_set, mode, fold_cfg);
    FoldResult fr;
    fr.fold = f;
    fr.train_size = train_idx.size();
    fr.test_size = folds[f].size();
    fr.metrics = evaluate(trained.params, test_set, mode, cfg.threads);
    fr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    acc.push_back(fr.metrics.accuracy);
    pre.push_back(fr.metrics.precision);
    f1.push_back(fr.metrics.f1);
    if (on_fold) on_fold(fr);
    out.folds.push_back(std::move(fr));
  }
  out.accuracy = mean_std(acc);
  out.precision = mean_std(pre);
  out.f1 = mean_std(f1);
  return out;
}

}  // namespace geodyn
