#pragma once

// `geodyn <generate|ingest|train|eval|xval|attention-dump> [flags]`
//
// Exit codes: 0 success, 2 usage/validation, 3 I/O or file format, 4 numeric failure.
// Every output file is written to a temporary path and renamed into place.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "geodyn/checkpoint.hpp"
#include "geodyn/config_json.hpp"
#include "geodyn/data.hpp"
#include "geodyn/dataset_io.hpp"
#include "geodyn/training.hpp"

namespace geodyn::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kIo = 3, kNumeric = 4 };

struct UsageError : Error {
  using Error::Error;
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline nlohmann::json to_json(const Metrics& m) {
  nlohmann::json confusion = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.confusion.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.confusion.cols(); ++j) row.push_back(m.confusion(i, j));
    confusion.push_back(row);
  }
  return {{"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"confusion", confusion}};
}

inline void write_text_atomic(const std::string& path, const std::string& text) { io::write_file_atomic(path, text); }

inline nlohmann::json load_config_file(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  try {
    auto j = nlohmann::json::parse(io::read_file(path));
    if (!j.is_object()) throw UsageError("config " + path + ": top level must be an object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
}

/// Flags shared by train / xval / eval / attention-dump.
struct RunOptions {
  std::string data;
  std::string config;
  std::string mode;
  std::string out;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  // Overrides (unset means: keep the config-file or default value).
  std::optional<double> lr, weight_decay, step, eps, rho;
  std::optional<std::size_t> batch_size, epochs, folds, threads;
  std::optional<std::string> optimizer;
  std::optional<int> layers, tau, kernel, attention_pad;
  bool no_attention = false;
};

inline void add_run_flags(CLI::App* app, RunOptions& o, bool training) {
  app->add_option("--config", o.config, "JSON config file ({\"model\": {...}, \"train\": {...}, \"mode\": ...})");
  app->add_option("--mode", o.mode, "recurrent | convolutional");
  app->add_option("--seed", o.seed, "Random seed");
  app->add_flag("--deterministic", o.deterministic, "Single-threaded evaluation");
  app->add_option("--threads", o.threads, "Worker threads for per-sample gradients");
  if (!training) return;
  app->add_option("--lr", o.lr, "Learning rate");
  app->add_option("--weight-decay", o.weight_decay, "L2 weight decay");
  app->add_option("--batch-size", o.batch_size, "Minibatch size");
  app->add_option("--epochs", o.epochs, "Training epochs");
  app->add_option("--optimizer", o.optimizer, "sgd | adam");
  app->add_option("--layers", o.layers, "Model layers");
  app->add_option("--tau", o.tau, "Lag window");
  app->add_option("--step", o.step, "Discretization step");
  app->add_option("--eps", o.eps, "SPD floor");
  app->add_option("--rho", o.rho, "Padding diagonal value");
  app->add_option("--kernel", o.kernel, "Convolution kernel size (odd)");
  app->add_option("--attention-pad", o.attention_pad, "Attention padding width");
  app->add_flag("--no-attention", o.no_attention, "Disable the attention mask");
}

struct Resolved {
  ModelConfig model;
  TrainConfig train;
  Mode mode = Mode::Recurrent;

  nlohmann::json to_json() const {
    return {{"model", geodyn::to_json(model)}, {"train", geodyn::to_json(train)}, {"mode", to_string(mode)}};
  }
};

inline Resolved resolve(const RunOptions& o) {
  Resolved r;
  const auto file = load_config_file(o.config);
  try {
    if (file.contains("model")) merge_json(file["model"], r.model);
    if (file.contains("train")) merge_json(file["train"], r.train);
    if (file.contains("mode")) r.mode = parse_mode(file["mode"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config " + o.config + ": " + e.what());
  }
  if (!o.mode.empty()) r.mode = parse_mode(o.mode);
  if (o.seed) r.train.seed = *o.seed;
  if (o.lr) r.train.lr = *o.lr;
  if (o.weight_decay) r.train.weight_decay = *o.weight_decay;
  if (o.batch_size) r.train.batch_size = *o.batch_size;
  if (o.epochs) r.train.epochs = *o.epochs;
  if (o.folds) r.train.folds = *o.folds;
  if (o.threads) r.train.threads = *o.threads;
  if (o.optimizer) r.train.optimizer = parse_optimizer(*o.optimizer);
  if (o.layers) r.model.layers = *o.layers;
  if (o.tau) r.model.tau = *o.tau;
  if (o.step) r.model.step = *o.step;
  if (o.eps) r.model.eps = *o.eps;
  if (o.rho) r.model.rho = *o.rho;
  if (o.kernel) r.model.kernel = *o.kernel;
  if (o.attention_pad) r.model.attention_pad = *o.attention_pad;
  if (o.no_attention) r.model.attention = false;
  if (o.deterministic) r.train.threads = 1;
  return r;
}

/// Fills the data-dependent fields (N, Q) and validates.
inline void bind_to_data(Resolved& r, const LabeledDataset& ds) {
  if (ds.empty()) throw UsageError("dataset is empty");
  ds.validate();
  r.model.dim = static_cast<int>(ds.dim());
  r.model.classes = static_cast<int>(std::max<std::size_t>(2, ds.num_classes()));
  r.model.validate();
  r.train.validate();
}

inline nlohmann::json base_report(const std::string& command) {
  return {{"command", command}, {"version", kVersion}};
}

// ---------------------------------------------------------------------------
// Commands

struct GenerateOptions {
  std::string kind = "spd";
  SynthConfig synth;
  SynthSeriesConfig series;
  std::string out;
};

inline int cmd_generate(const GenerateOptions& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("generate: --out is required");
  if (o.kind == "spd") {
    if (o.synth.per_class < 1) throw UsageError("generate: --per-class must be >= 1");
    if (o.synth.classes < 2) throw UsageError("generate: --classes must be >= 2");
    if (o.synth.dim < 2 || o.synth.length < 1) throw UsageError("generate: --dim must be >= 2 and --length >= 1");
    const auto ds = synth_generate(o.synth);
    write_dataset(o.out, ds);
    auto report = base_report("generate");
    report["out"] = o.out;
    report["items"] = ds.size();
    report["manifest"] = ds.manifest;
    out << report.dump(2) << "\n";
    return kOk;
  }
  if (o.kind == "timeseries") {
    if (o.series.per_class < 1) throw UsageError("generate: --per-class must be >= 1");
    if (o.series.classes < 2) throw UsageError("generate: --classes must be >= 2");
    if (o.series.channels < 2 || o.series.length < 1) throw UsageError("generate: --dim must be >= 2 and --length >= 1");
    const auto items = synth_timeseries(o.series);
    std::filesystem::create_directories(o.out);
    std::ostringstream labels;
    labels << "file,label\n";
    for (std::size_t k = 0; k < items.size(); ++k) {
      const std::string name = "series_" + std::to_string(k) + ".csv";
      std::ostringstream csv;
      const auto& v = items[k].ts.values;
      for (Eigen::Index i = 0; i < v.rows(); ++i) {
        for (Eigen::Index j = 0; j < v.cols(); ++j) csv << (j ? "," : "") << format_double(v(i, j));
        csv << "\n";
      }
      write_text_atomic(o.out + "/" + name, csv.str());
      labels << name << ",class" << items[k].label << "\n";
    }
    write_text_atomic(o.out + "/labels.csv", labels.str());
    auto report = base_report("generate");
    report["out"] = o.out;
    report["items"] = items.size();
    report["kind"] = "timeseries";
    report["seed"] = o.series.seed;
    out << report.dump(2) << "\n";
    return kOk;
  }
  throw UsageError("generate: --kind must be spd or timeseries");
}

struct IngestOptions {
  std::string kind;
  int window = 15;
  double shrinkage = 0.1;
  double eps = 1e-5;
  int root = 0;
  std::string labels;
  std::string out;
};

inline int cmd_ingest(const IngestOptions& o, std::ostream& out, std::ostream& err) {
  if (o.labels.empty() || o.out.empty()) throw UsageError("ingest: --labels and --out are required");
  if (o.kind != "timeseries" && o.kind != "skeleton") throw UsageError("ingest: --kind must be timeseries or skeleton");
  const auto list = read_label_list(o.labels);
  std::vector<std::string> names;
  for (const auto& [file, label] : list) names.push_back(label);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  LabeledDataset ds;
  std::size_t warnings = 0;
  for (const auto& [file, label] : list) {
    ConstructionResult built;
    try {
      if (o.kind == "timeseries") {
        built = sliding_window_fc(read_timeseries_csv(file), o.window, o.shrinkage);
      } else {
        built = skeleton_covariance_sequence(read_skeleton_csv(file, o.root), o.window, o.eps);
      }
    } catch (const ParameterError& e) {
      throw UsageError(file + ": " + e.what());
    } catch (const DimensionError& e) {
      throw UsageError(file + ": " + e.what());
    }
    warnings += built.warnings;
    const auto pos = std::lower_bound(names.begin(), names.end(), label) - names.begin();
    ds.items.push_back({std::move(built.seq), static_cast<std::uint32_t>(pos)});
  }
  ds.validate();
  nlohmann::json construction = {{"kind", o.kind}, {"window", o.window}};
  if (o.kind == "timeseries") {
    construction["shrinkage"] = o.shrinkage;
  } else {
    construction["eps"] = o.eps;
    construction["root"] = o.root;
  }
  ds.manifest = {{"classes", names},
                 {"dim", ds.dim()},
                 {"provenance", "ingest:" + o.labels},
                 {"construction", construction},
                 {"seed", nullptr}};
  write_dataset(o.out, ds);
  if (warnings > 0) err << "ingest: " << warnings << " degenerate window(s) encountered\n";
  auto report = base_report("ingest");
  report["out"] = o.out;
  report["items"] = ds.size();
  report["warnings"] = warnings;
  report["manifest"] = ds.manifest;
  out << report.dump(2) << "\n";
  return kOk;
}

inline std::string default_report_path(const std::string& out) { return out + ".json"; }

inline int cmd_train(const RunOptions& o, std::ostream& out, std::ostream& err) {
  if (o.data.empty() || o.out.empty()) throw UsageError("train: --data and --out are required");
  const auto ds = read_dataset(o.data);
  auto r = resolve(o);
  bind_to_data(r, ds);
  const auto t0 = std::chrono::steady_clock::now();
  auto init = ModelParams::init(r.model, r.train.seed);
  auto result = train(std::move(init), ds, r.mode, r.train, [&](const EpochLog& l) {
    err << "epoch " << l.epoch << " loss " << format_double(l.loss) << "\n";
  });
  const auto ev = evaluate_detailed(result.params, ds, r.mode, r.train.threads);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_checkpoint(o.out, Checkpoint{result.params, r.mode});
  auto report = base_report("train");
  report["config"] = r.to_json();
  report["data"] = o.data;
  report["checkpoint"] = o.out;
  report["initial_loss"] = result.initial_loss;
  report["final_loss"] = ev.loss;
  report["train_metrics"] = to_json(ev.metrics);
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : result.history) hist.push_back(h.loss);
  report["epoch_loss"] = hist;
  report["wall_time_s"] = secs;
  write_text_atomic(default_report_path(o.out), report.dump(2) + "\n");
  out << report.dump(2) << "\n";
  return kOk;
}

inline Checkpoint load_checkpoint_for(const std::string& path) {
  if (path.empty()) throw UsageError("--checkpoint is required");
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path);
  return read_checkpoint(path);
}

inline int cmd_eval(const RunOptions& o, std::ostream& out) {
  if (o.data.empty()) throw UsageError("eval: --data is required");
  const auto ck = load_checkpoint_for(o.checkpoint);
  const auto ds = read_dataset(o.data);
  ds.validate();
  if (ds.dim() != ck.params.config.dim) throw UsageError("eval: dataset dimension does not match the checkpoint");
  if (ds.num_classes() > static_cast<std::size_t>(ck.params.config.classes)) {
    throw UsageError("eval: dataset has more classes than the checkpoint");
  }
  const Mode mode = o.mode.empty() ? ck.mode : parse_mode(o.mode);
  const std::size_t threads = o.deterministic ? 1 : o.threads.value_or(1);
  const auto ev = evaluate_detailed(ck.params, ds, mode, threads);
  auto report = base_report("eval");
  report["config"] = {{"model", to_json(ck.params.config)}, {"mode", to_string(mode)}};
  report["data"] = o.data;
  report["checkpoint"] = o.checkpoint;
  report["loss"] = ev.loss;
  report["metrics"] = to_json(ev.metrics);
  if (!o.out.empty()) write_text_atomic(o.out, report.dump(2) + "\n");
  out << report.dump(2) << "\n";
  return kOk;
}

inline int cmd_xval(const RunOptions& o, std::ostream& out, std::ostream& err) {
  if (o.data.empty()) throw UsageError("xval: --data is required");
  const auto ds = read_dataset(o.data);
  auto r = resolve(o);
  bind_to_data(r, ds);
  if (r.train.folds > ds.size()) throw UsageError("xval: more folds than samples");
  XvalResult res;
  try {
    res = cross_validate(ds, r.model, r.mode, r.train, [&](const FoldResult& f) {
      err << "fold " << f.fold << " accuracy " << format_double(f.metrics.accuracy) << "\n";
    });
  } catch (const ParameterError& e) {
    throw UsageError(std::string("xval: ") + e.what());
  }
  auto report = base_report("xval");
  report["config"] = r.to_json();
  report["data"] = o.data;
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : res.folds) {
    auto j = to_json(f.metrics);
    j["fold"] = f.fold;
    j["train_size"] = f.train_size;
    j["test_size"] = f.test_size;
    folds.push_back(j);
  }
  report["folds"] = folds;
  report["aggregate"] = {
      {"accuracy", {{"mean", res.accuracy.mean}, {"std", res.accuracy.std}, {"formatted", res.accuracy.format()}}},
      {"precision", {{"mean", res.precision.mean}, {"std", res.precision.std}, {"formatted", res.precision.format()}}},
      {"f1", {{"mean", res.f1.mean}, {"std", res.f1.std}, {"formatted", res.f1.format()}}}};
  if (!o.out.empty()) write_text_atomic(o.out, report.dump(2) + "\n");
  out << report.dump(2) << "\n";
  return kOk;
}

struct Edge {
  Eigen::Index i, j;
  double weight;
};

/// Strict upper-triangle entries, largest first (ties keep row-major order).
inline std::vector<Edge> top_k_edges(const Matrix& m, std::size_t k) {
  std::vector<Edge> edges;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) edges.push_back({i, j, m(i, j)});
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.weight > b.weight; });
  if (edges.size() > k) edges.resize(k);
  return edges;
}

struct DumpOptions {
  RunOptions run;
  std::size_t index = 0;
  std::size_t top_k = 20;
  std::string out_dir;
};

inline int cmd_attention_dump(const DumpOptions& o, std::ostream& out) {
  if (o.run.data.empty() || o.out_dir.empty()) throw UsageError("attention-dump: --data and --out-dir are required");
  const auto ck = load_checkpoint_for(o.run.checkpoint);
  const auto ds = read_dataset(o.run.data);
  if (o.index >= ds.size()) throw UsageError("attention-dump: --index out of range");
  const auto& seq = ds.items[o.index].seq;
  if (seq.dim() != ck.params.config.dim) throw UsageError("attention-dump: dataset dimension does not match");
  AttentionRecorder rec;
  AttentionStats stats;
  ForwardOptions fo;
  fo.attention = true;
  fo.recorder = &rec;
  fo.stats = &stats;
  forward_conv(seq, ck.params, fo);
  std::filesystem::create_directories(o.out_dir);
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t l = 0; l < rec.mask_sum.size(); ++l) {
    const Matrix mask = rec.mean(l);
    std::ostringstream csv;
    for (Eigen::Index i = 0; i < mask.rows(); ++i) {
      for (Eigen::Index j = 0; j < mask.cols(); ++j) csv << (j ? "," : "") << format_double(mask(i, j));
      csv << "\n";
    }
    const std::string base = o.out_dir + "/layer" + std::to_string(l);
    write_text_atomic(base + "_mask.csv", csv.str());
    std::ostringstream top;
    top << "i,j,weight\n";
    for (const auto& e : top_k_edges(mask, o.top_k)) top << e.i << "," << e.j << "," << format_double(e.weight) << "\n";
    write_text_atomic(base + "_topk.csv", top.str());
    files.push_back(base + "_mask.csv");
    files.push_back(base + "_topk.csv");
  }
  auto report = base_report("attention-dump");
  report["config"] = {{"model", to_json(ck.params.config)}, {"mode", "convolutional"}};
  report["index"] = o.index;
  report["top_k"] = o.top_k;
  report["files"] = files;
  report["guard_activations"] = stats.guard_activations;
  report["attention_calls"] = stats.calls;
  out << report.dump(2) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

/// Parses argv and dispatches; never throws.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Geometric state-space models on SPD matrix sequences"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic dataset");
  g->add_option("--kind", gen.kind, "spd (GDDS file) | timeseries (directory of CSVs + labels.csv)");
  g->add_option("--classes", gen.synth.classes, "Class count");
  g->add_option("--per-class", gen.synth.per_class, "Samples per class");
  g->add_option("--dim", gen.synth.dim, "Matrix dimension / channel count");
  g->add_option("--length", gen.synth.length, "Sequence length");
  g->add_option("--seed", gen.synth.seed, "Random seed");
  g->add_option("--noise", gen.synth.noise, "Observation noise scale");
  bool easy = false;
  g->add_flag("--easy", easy, "No drift (classes differ only by base matrix)");
  g->add_option("--out", gen.out, "Output path")->required();

  IngestOptions ing;
  auto* in = app.add_subcommand("ingest", "Build a dataset from raw CSV files");
  in->add_option("--kind", ing.kind, "timeseries | skeleton")->required();
  in->add_option("--window", ing.window, "Window length");
  in->add_option("--shrinkage", ing.shrinkage, "Correlation shrinkage (timeseries)");
  in->add_option("--eps", ing.eps, "Covariance floor (skeleton)");
  in->add_option("--root", ing.root, "Root joint index (skeleton)");
  in->add_option("--labels", ing.labels, "CSV of file,label")->required();
  in->add_option("--out", ing.out, "Output dataset")->required();

  RunOptions tr;
  auto* t = app.add_subcommand("train", "Train a model and write a checkpoint");
  t->add_option("--data", tr.data, "Dataset file")->required();
  t->add_option("--out", tr.out, "Checkpoint path (report goes to <out>.json)")->required();
  add_run_flags(t, tr, true);

  RunOptions ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--data", ev.data, "Dataset file")->required();
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--out", ev.out, "Optional report path");
  add_run_flags(e, ev, false);

  RunOptions xv;
  auto* x = app.add_subcommand("xval", "Stratified k-fold cross-validation");
  x->add_option("--data", xv.data, "Dataset file")->required();
  x->add_option("--folds", xv.folds, "Fold count (default 10)");
  x->add_option("--out", xv.out, "Optional report path");
  add_run_flags(x, xv, true);

  DumpOptions dump;
  auto* a = app.add_subcommand("attention-dump", "Export time-averaged attention masks as CSV");
  a->add_option("--data", dump.run.data, "Dataset file")->required();
  a->add_option("--checkpoint", dump.run.checkpoint, "Checkpoint file")->required();
  a->add_option("--index", dump.index, "Sample index");
  a->add_option("--top-k", dump.top_k, "Edges in the top-k list");
  a->add_option("--out-dir", dump.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    const int rc = app.exit(pe, out, err);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*g) {
      gen.synth.drift = !easy;
      gen.series.classes = gen.synth.classes;
      gen.series.per_class = gen.synth.per_class;
      gen.series.channels = gen.synth.dim;
      gen.series.length = gen.synth.length;
      gen.series.seed = gen.synth.seed;
      return cmd_generate(gen, out);
    }
    if (*in) return cmd_ingest(ing, out, err);
    if (*t) return cmd_train(tr, out, err);
    if (*e) return cmd_eval(ev, out);
    if (*x) return cmd_xval(xv, out, err);
    if (*a) return cmd_attention_dump(dump, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const ParameterError& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const IoError& ex) {
    err << "error: " << ex.what() << "\n";
    return kIo;
  } catch (const FormatError& ex) {
    err << "error: " << ex.what() << "\n";
    return kIo;
  } catch (const DimensionError& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return kNumeric;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "error: " << ex.what() << "\n";
    return kIo;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kNumeric;
  }
  return kUsage;
}

}  // namespace geodyn::cli
