#pragma once

// SPD-sequence construction: windowed Pearson correlation of multichannel
// signals, relative-joint covariance of skeleton clips, and a synthetic
// generator of isospectral rotating trajectories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "geodyn/dataset.hpp"
#include "geodyn/errors.hpp"
#include "geodyn/spd_core.hpp"

namespace geodyn {

/// Channels x samples.
struct TimeSeries {
  Matrix values;

  Eigen::Index channels() const noexcept { return values.rows(); }
  Eigen::Index length() const noexcept { return values.cols(); }
};

/// One J x 3 position matrix per frame.
struct SkeletonClip {
  std::vector<Matrix> frames;
  int root = 0;

  Eigen::Index joints() const { return frames.empty() ? 0 : frames.front().rows(); }
};

struct ConstructionResult {
  SpdSequence seq;
  std::size_t warnings = 0;  // zero-variance channels / single-frame windows encountered
};

/// Per-step Pearson correlation over a centred window of odd length w
/// (clipped at the ends), shrunk towards I: (1 - lambda) C + lambda I.
inline ConstructionResult sliding_window_fc(const TimeSeries& ts, int w, double lambda = 0.1) {
  if (w < 3 || w % 2 == 0) throw ParameterError("sliding_window_fc: window must be odd and >= 3");
  if (!(lambda > 0.0 && lambda < 1.0)) throw ParameterError("sliding_window_fc: shrinkage must lie in (0, 1)");
  const Eigen::Index n = ts.channels();
  const Eigen::Index t_len = ts.length();
  if (n < 1) throw DimensionError("sliding_window_fc: no channels");
  if (t_len < w) {
    throw ParameterError("sliding_window_fc: series length " + std::to_string(t_len) + " shorter than window " +
                         std::to_string(w));
  }
  if (!ts.values.allFinite()) throw DomainError("sliding_window_fc: non-finite sample");
  const Eigen::Index half = w / 2;
  ConstructionResult out;
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, t - half);
    const Eigen::Index hi = std::min<Eigen::Index>(t_len - 1, t + half);
    const Eigen::Index m = hi - lo + 1;
    Matrix block = ts.values.middleCols(lo, m);
    const Vector mean = block.rowwise().mean();
    block.colwise() -= mean;
    Vector sd = block.rowwise().norm();
    Matrix c = Matrix::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (sd(i) == 0.0) {
        ++out.warnings;
        continue;
      }
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (sd(j) == 0.0) continue;
        const double r = block.row(i).dot(block.row(j)) / (sd(i) * sd(j));
        c(i, j) = c(j, i) = std::clamp(r, -1.0, 1.0);
      }
    }
    Matrix reg = (1.0 - lambda) * c;
    reg.diagonal().array() += lambda;
    out.seq.push_back(SpdMatrix(std::move(reg)));
  }
  return out;
}

/// Per-frame covariance (unbiased) of root-relative joint displacements over a
/// centred window of w frames, plus eps I. Output dimension 3(J - 1).
inline ConstructionResult skeleton_covariance_sequence(const SkeletonClip& clip, int w, double eps = 1e-5) {
  const Eigen::Index j_count = clip.joints();
  if (j_count < 2) throw ParameterError("skeleton_covariance_sequence: need at least two joints");
  if (w < 2) throw ParameterError("skeleton_covariance_sequence: window must be >= 2");
  if (!(eps > 0.0)) throw ParameterError("skeleton_covariance_sequence: eps must be positive");
  if (clip.root < 0 || clip.root >= j_count) throw ParameterError("skeleton_covariance_sequence: root out of range");
  const Eigen::Index d = 3 * (j_count - 1);
  const auto t_len = static_cast<Eigen::Index>(clip.frames.size());
  Matrix feats(d, t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const Matrix& f = clip.frames[static_cast<std::size_t>(t)];
    if (f.rows() != j_count || f.cols() != 3) throw DimensionError("skeleton_covariance_sequence: frame shape");
    if (!f.allFinite()) throw DomainError("skeleton_covariance_sequence: non-finite position");
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < j_count; ++j) {
      if (j == clip.root) continue;
      for (int a = 0; a < 3; ++a) feats(k++, t) = f(j, a) - f(clip.root, a);
    }
  }
  const Eigen::Index before = (w - 1) / 2;
  const Eigen::Index after = w / 2;
  ConstructionResult out;
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, t - before);
    const Eigen::Index hi = std::min<Eigen::Index>(t_len - 1, t + after);
    const Eigen::Index m = hi - lo + 1;
    Matrix cov = Matrix::Zero(d, d);
    if (m < 2) {
      ++out.warnings;
    } else {
      Matrix block = feats.middleCols(lo, m);
      const Vector mean = block.rowwise().mean();
      block.colwise() -= mean;
      cov = block * block.transpose() / static_cast<double>(m - 1);
    }
    cov.diagonal().array() += eps;
    out.seq.push_back(SpdMatrix(std::move(cov)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthConfig {
  int classes = 2;
  int per_class = 100;
  int dim = 8;
  int length = 30;
  std::uint64_t seed = 7;
  bool drift = true;          // false: omega = 0 for every class (easy mode)
  bool shared_spectrum = true;
  double noise = 0.05;
  double omega0 = 0.05;       // drift rate of class 0, radians per step
  double omega_step = 0.15;   // increment per class

  void validate() const {
    if (classes < 2) throw ParameterError("synth: classes must be >= 2");
    if (per_class < 1) throw ParameterError("synth: per_class must be >= 1");
    if (dim < 2) throw ParameterError("synth: dim must be >= 2");
    if (length < 1) throw ParameterError("synth: length must be >= 1");
    if (!(noise >= 0.0)) throw ParameterError("synth: noise must be nonnegative");
  }
  double omega(int q) const { return drift ? omega0 + omega_step * q : 0.0; }
};

namespace detail {

/// Haar-distributed orthogonal matrix (QR of a Gaussian with sign fix).
inline Matrix haar_orthogonal(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

/// exp(theta * Omega) for Omega = U blockdiag(J, J, ...) U^T, J the 2x2 rotation generator.
inline Matrix planar_rotation(const Matrix& basis, double theta) {
  const Eigen::Index n = basis.rows();
  Matrix r = Matrix::Identity(n, n);
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  for (Eigen::Index k = 0; k + 1 < n; k += 2) {
    r(k, k) = c;
    r(k, k + 1) = -s;
    r(k + 1, k) = s;
    r(k + 1, k + 1) = c;
  }
  return basis * r * basis.transpose();
}

/// Symmetric part of an eigenvalue-clipped matrix.
inline Matrix clip_spectrum(const Matrix& m, double floor) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
  const Vector l = es.eigenvalues().cwiseMax(floor);
  Matrix out = es.eigenvectors() * l.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace detail

inline Vector synth_spectrum(int n) {
  Vector d(n);
  for (int i = 0; i < n; ++i) d(i) = std::exp(n == 1 ? 0.0 : -1.0 + 2.0 * i / (n - 1));
  return d;
}

/// Class q: trajectory X(t) = R(omega_q t + phi) B_q R(omega_q t + phi)^T with
/// B_q = V_q D V_q^T, a shared rotation plane system, a random phase phi per
/// sample, and symmetric Gaussian noise re-projected to SPD (eigenvalues >= 1e-3).
inline LabeledDataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const int n = cfg.dim;
  const Matrix basis = detail::haar_orthogonal(n, rng);
  std::vector<Matrix> bases;
  std::vector<Vector> spectra;
  std::uniform_real_distribution<double> spread(-1.5, 1.5);
  for (int q = 0; q < cfg.classes; ++q) {
    const Matrix v = detail::haar_orthogonal(n, rng);
    Vector d = synth_spectrum(n);
    if (!cfg.shared_spectrum) {
      for (int i = 0; i < n; ++i) d(i) = std::exp(spread(rng));
    }
    spectra.push_back(d);
    bases.push_back(v * d.asDiagonal() * v.transpose());
  }
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> normal(0.0, 1.0);
  LabeledDataset ds;
  for (int q = 0; q < cfg.classes; ++q) {
    for (int s = 0; s < cfg.per_class; ++s) {
      const double phi = cfg.drift ? phase(rng) : 0.0;
      LabeledSequence item;
      item.label = static_cast<std::uint32_t>(q);
      for (int t = 0; t < cfg.length; ++t) {
        const Matrix r = detail::planar_rotation(basis, cfg.omega(q) * t + phi);
        Matrix x = r * bases[static_cast<std::size_t>(q)] * r.transpose();
        if (cfg.noise > 0.0) {
          Matrix e(n, n);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) e(i, j) = normal(rng);
          x = detail::clip_spectrum(x + cfg.noise * 0.5 * (e + e.transpose()), 1e-3);
        } else {
          x = 0.5 * (x + x.transpose());
        }
        item.seq.push_back(SpdMatrix(std::move(x)));
      }
      ds.items.push_back(std::move(item));
    }
  }
  nlohmann::json classes = nlohmann::json::array();
  for (int q = 0; q < cfg.classes; ++q) classes.push_back("class" + std::to_string(q));
  ds.manifest = {{"classes", classes},
                 {"dim", n},
                 {"length", cfg.length},
                 {"provenance", "synthetic"},
                 {"construction",
                  {{"kind", "synthetic"},
                   {"per_class", cfg.per_class},
                   {"drift", cfg.drift},
                   {"shared_spectrum", cfg.shared_spectrum},
                   {"noise", cfg.noise},
                   {"omega0", cfg.omega0},
                   {"omega_step", cfg.omega_step}}},
                 {"seed", cfg.seed}};
  return ds;
}

struct SynthSeriesConfig {
  int classes = 2;
  int per_class = 50;
  int channels = 6;
  int length = 60;
  std::uint64_t seed = 11;
  double omega0 = 0.02;
  double omega_step = 0.08;

  void validate() const {
    if (classes < 2 || per_class < 1 || channels < 2 || length < 1) {
      throw ParameterError("synth_timeseries: invalid sizes");
    }
  }
};

struct LabeledSeries {
  TimeSeries ts;
  std::uint32_t label = 0;
};

/// Gaussian signals x_t = R(omega_q t + phi) L_q z_t, with L_q L_q^T a
/// class-specific covariance of shared spectrum, so windowed correlations
/// rotate at a class-dependent rate.
inline std::vector<LabeledSeries> synth_timeseries(const SynthSeriesConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const int n = cfg.channels;
  const Matrix basis = detail::haar_orthogonal(n, rng);
  const Vector d = synth_spectrum(n).cwiseSqrt();
  std::vector<Matrix> factors;
  for (int q = 0; q < cfg.classes; ++q) factors.push_back(detail::haar_orthogonal(n, rng) * d.asDiagonal());
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<LabeledSeries> out;
  for (int q = 0; q < cfg.classes; ++q) {
    const double omega = cfg.omega0 + cfg.omega_step * q;
    for (int s = 0; s < cfg.per_class; ++s) {
      const double phi = phase(rng);
      LabeledSeries item;
      item.label = static_cast<std::uint32_t>(q);
      item.ts.values.resize(n, cfg.length);
      for (int t = 0; t < cfg.length; ++t) {
        Vector z(n);
        for (int i = 0; i < n; ++i) z(i) = normal(rng);
        item.ts.values.col(t) = detail::planar_rotation(basis, omega * t + phi) * factors[static_cast<std::size_t>(q)] * z;
      }
      out.push_back(std::move(item));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV input

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) {
    const auto b = cur.find_first_not_of(" \t\r");
    const auto e = cur.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? std::string() : cur.substr(b, e - b + 1));
  }
  return fields;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(s, &used);
  } catch (...) {
    return false;
  }
  return used == s.size();
}

/// Numeric rows of a CSV file; a first row whose first field is not numeric is a header.
inline std::vector<std::vector<double>> read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_csv_line(line);
    double v = 0.0;
    if (first && !parse_double(fields.front(), v)) {
      first = false;
      continue;
    }
    first = false;
    std::vector<double> row;
    for (const auto& f : fields) {
      if (!parse_double(f, v)) throw FormatError(path + ":" + std::to_string(lineno) + ": non-numeric field '" + f + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(path + ": no data rows");
  return rows;
}

}  // namespace detail

/// One row per channel, comma-separated samples.
inline TimeSeries read_timeseries_csv(const std::string& path) {
  const auto rows = detail::read_numeric_csv(path);
  TimeSeries ts;
  ts.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) ts.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return ts;
}

/// One row per frame holding x, y, z of every joint in order (3J columns).
inline SkeletonClip read_skeleton_csv(const std::string& path, int root) {
  const auto rows = detail::read_numeric_csv(path);
  if (rows.front().size() % 3 != 0) throw FormatError(path + ": column count is not a multiple of 3");
  const auto j = static_cast<Eigen::Index>(rows.front().size() / 3);
  SkeletonClip clip;
  clip.root = root;
  for (const auto& r : rows) {
    Matrix f(j, 3);
    for (Eigen::Index k = 0; k < j; ++k)
      for (int a = 0; a < 3; ++a) f(k, a) = r[static_cast<std::size_t>(3 * k + a)];
    clip.frames.push_back(std::move(f));
  }
  return clip;
}

/// "file,label" lines; relative paths resolve against the list's directory.
inline std::vector<std::pair<std::string, std::string>> read_label_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  const auto slash = path.find_last_of('/');
  const std::string dir = slash == std::string::npos ? std::string() : path.substr(0, slash + 1);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 2) throw FormatError(path + ":" + std::to_string(lineno) + ": expected 'file,label'");
    if (lineno == 1 && (f[0] == "file" || f[0] == "path")) continue;
    std::string file = f[0];
    if (!file.empty() && file.front() != '/') file = dir + file;
    out.emplace_back(file, f[1]);
  }
  if (out.empty()) throw FormatError(path + ": no entries");
  return out;
}

}  // namespace geodyn
