#pragma once

// GDDS dataset files:
//   "GDDS" | u32 version | u32 len + JSON manifest | u32 count |
//   count x (u32 label | u32 T | u32 N | T*N*N f64 row-major) | u32 CRC32
// All integers and floats little-endian; the CRC covers every preceding byte.

#include <string>
#include <vector>

#include "geodyn/binary_io.hpp"
#include "geodyn/dataset.hpp"

namespace geodyn {

inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::string encode_dataset(const LabeledDataset& ds) {
  io::Writer w;
  w.raw("GDDS");
  w.u32(kDatasetVersion);
  w.str(ds.manifest.dump());
  w.u32(static_cast<std::uint32_t>(ds.items.size()));
  for (const auto& it : ds.items) {
    w.u32(it.label);
    w.u32(static_cast<std::uint32_t>(it.seq.size()));
    const auto n = it.seq.dim();
    w.u32(static_cast<std::uint32_t>(n));
    for (const auto& x : it.seq) {
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) w.f64(x.matrix()(i, j));
    }
  }
  w.seal();
  return w.bytes();
}

namespace detail {

inline nlohmann::json read_dataset_header(io::Reader& r, const std::string& what) {
  if (r.raw(4) != "GDDS") throw FormatError(what + ": bad magic");
  const auto version = r.u32();
  if (version != kDatasetVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
  try {
    return nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": malformed manifest: " + e.what());
  }
}

}  // namespace detail

/// Decodes a dataset; matrices are re-validated as SPD.
inline LabeledDataset decode_dataset(std::string_view file, const std::string& what = "dataset") {
  io::Reader r(io::verify_crc(file, what), what);
  LabeledDataset ds;
  ds.manifest = detail::read_dataset_header(r, what);
  const auto count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    LabeledSequence it;
    it.label = r.u32();
    const auto t = r.u32();
    const auto n = r.u32();
    for (std::uint32_t s = 0; s < t; ++s) {
      Matrix m(n, n);
      for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < n; ++j) m(i, j) = r.f64();
      if (!is_spd(m)) throw FormatError(what + ": item " + std::to_string(k) + " holds a non-SPD matrix");
      it.seq.push_back(SpdMatrix::trusted(std::move(m)));
    }
    ds.items.push_back(std::move(it));
  }
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes");
  return ds;
}

inline void write_dataset(const std::string& path, const LabeledDataset& ds) {
  io::write_file_atomic(path, encode_dataset(ds));
}

inline LabeledDataset read_dataset(const std::string& path) { return decode_dataset(io::read_file(path), path); }

struct DatasetSummary {
  nlohmann::json manifest;
  std::uint32_t count = 0;
  std::vector<std::uint32_t> labels;
  std::vector<std::uint32_t> lengths;
  std::uint32_t dim = 0;
};

/// Reads the manifest and per-item headers, skipping matrix payloads.
/// Does not verify the CRC (that would require reading every byte).
inline DatasetSummary scan_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  auto read_exact = [&](std::size_t n) {
    std::string buf(n, '\0');
    in.read(buf.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError(path + ": truncated file");
    return buf;
  };
  std::string head = read_exact(12);
  io::Reader hr(head, path);
  if (hr.raw(4) != "GDDS") throw FormatError(path + ": bad magic");
  const auto version = hr.u32();
  if (version != kDatasetVersion) throw FormatError(path + ": unsupported version " + std::to_string(version));
  const auto mlen = hr.u32();
  DatasetSummary s;
  try {
    s.manifest = nlohmann::json::parse(read_exact(mlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": malformed manifest: " + e.what());
  }
  std::string cnt = read_exact(4);
  s.count = io::Reader(cnt, path).u32();
  for (std::uint32_t k = 0; k < s.count; ++k) {
    std::string ih = read_exact(12);
    io::Reader ir(ih, path);
    s.labels.push_back(ir.u32());
    const auto t = ir.u32();
    const auto n = ir.u32();
    s.lengths.push_back(t);
    s.dim = n;
    in.seekg(static_cast<std::streamoff>(8ull * t * n * n), std::ios::cur);
    if (!in) throw FormatError(path + ": truncated file");
  }
  return s;
}

}  // namespace geodyn
