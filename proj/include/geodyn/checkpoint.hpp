#pragma once

// GDYN checkpoints:
//   "GDYN" | u32 version | u32 len + JSON (model config, mode) | u32 fields |
//   fields x (u32 len + name | u32 rows | u32 cols | rows*cols f64 row-major) | u32 CRC32

#include <string>

#include "geodyn/binary_io.hpp"
#include "geodyn/config_json.hpp"
#include "geodyn/model.hpp"

namespace geodyn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  Mode mode = Mode::Recurrent;
};

inline std::string encode_checkpoint(const Checkpoint& ck) {
  io::Writer w;
  w.raw("GDYN");
  w.u32(kCheckpointVersion);
  nlohmann::json meta = {{"model", to_json(ck.params.config)}, {"mode", to_string(ck.mode)}};
  w.str(meta.dump());
  std::uint32_t count = 0;
  ck.params.for_each_field([&](const std::string&, const Matrix&) { ++count; });
  w.u32(count);
  ck.params.for_each_field([&](const std::string& name, const Matrix& m) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) w.f64(m(i, j));
  });
  w.seal();
  return w.bytes();
}

inline Checkpoint decode_checkpoint(std::string_view file, const std::string& what = "checkpoint") {
  io::Reader r(io::verify_crc(file, what), what);
  if (r.raw(4) != "GDYN") throw FormatError(what + ": bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": malformed header: " + e.what());
  }
  Checkpoint ck;
  ModelConfig cfg;
  merge_json(meta.at("model"), cfg);
  ck.mode = parse_mode(meta.at("mode").get<std::string>());
  ck.params = ModelParams::init(cfg, 0);
  std::uint32_t expected = 0;
  ck.params.for_each_field([&](const std::string&, const Matrix&) { ++expected; });
  if (r.u32() != expected) throw FormatError(what + ": field count does not match the model config");
  ck.params.for_each_field([&](const std::string& name, Matrix& m) {
    const auto got = r.str();
    if (got != name) throw FormatError(what + ": expected field '" + name + "', found '" + got + "'");
    const auto rows = r.u32();
    const auto cols = r.u32();
    if (rows != m.rows() || cols != m.cols()) throw FormatError(what + ": shape mismatch in '" + name + "'");
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.f64();
  });
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes");
  return ck;
}

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  io::write_file_atomic(path, encode_checkpoint(ck));
}

inline Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path), path); }

}  // namespace geodyn
