#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "geodyn/checkpoint.hpp"
#include "geodyn/data.hpp"
#include "geodyn/dataset_io.hpp"

using namespace geodyn;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("geodyn_io_" + std::to_string(::getpid()) + "_" +
                                         ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

LabeledDataset small_dataset() {
  SynthConfig c;
  c.per_class = 3;
  c.dim = 4;
  c.length = 5;
  return synth_generate(c);
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Crc32, KnownVector) { EXPECT_EQ(io::crc32("123456789"), 0xCBF43926u); }

TEST(BinaryIo, LittleEndianLayout) {
  io::Writer w;
  w.u32(0x01020304u);
  w.f64(1.0);
  const auto& b = w.bytes();
  ASSERT_EQ(b.size(), 12u);
  EXPECT_EQ(static_cast<unsigned char>(b[0]), 0x04);
  EXPECT_EQ(static_cast<unsigned char>(b[3]), 0x01);
  EXPECT_EQ(static_cast<unsigned char>(b[11]), 0x3F);
  io::Reader r(b, "buf");
  EXPECT_EQ(r.u32(), 0x01020304u);
  EXPECT_EQ(r.f64(), 1.0);
  EXPECT_THROW(r.u32(), FormatError);
}

TEST(DatasetIo, RoundTripIsByteIdentical) {
  TempDir dir;
  const auto ds = small_dataset();
  write_dataset(dir.file("a.gdds"), ds);
  const auto back = read_dataset(dir.file("a.gdds"));
  EXPECT_EQ(back, ds);
  write_dataset(dir.file("b.gdds"), back);
  EXPECT_EQ(io::read_file(dir.file("a.gdds")), io::read_file(dir.file("b.gdds")));
  EXPECT_FALSE(fs::exists(dir.file("a.gdds.tmp")));
}

TEST(DatasetIo, HeaderLayout) {
  const auto bytes = encode_dataset(small_dataset());
  EXPECT_EQ(bytes.substr(0, 4), "GDDS");
  io::Reader r(bytes, "buf");
  r.skip(4);
  EXPECT_EQ(r.u32(), kDatasetVersion);
  const auto mlen = r.u32();
  const auto manifest = nlohmann::json::parse(r.raw(mlen));
  EXPECT_EQ(manifest["dim"], 4);
  EXPECT_EQ(r.u32(), 6u);
  EXPECT_EQ(r.u32(), 0u);  // first label
  EXPECT_EQ(r.u32(), 5u);  // T
  EXPECT_EQ(r.u32(), 4u);  // N
  // 12 header bytes + manifest + count + 6 * (12 + T N N * 8) + CRC
  EXPECT_EQ(bytes.size(), 12 + mlen + 4 + 6 * (12 + 5 * 16 * 8) + 4);
}

TEST(DatasetIo, CorruptedPayloadByteIsCrcError) {
  TempDir dir;
  auto bytes = encode_dataset(small_dataset());
  for (std::size_t pos : {std::size_t{20}, bytes.size() / 2, bytes.size() - 5}) {
    auto bad = bytes;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x10);
    write_bytes(dir.file("bad.gdds"), bad);
    try {
      read_dataset(dir.file("bad.gdds"));
      FAIL() << "corruption at " << pos << " not detected";
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find("CRC"), std::string::npos) << e.what();
    }
  }
}

TEST(DatasetIo, TruncationAndMagic) {
  TempDir dir;
  const auto bytes = encode_dataset(small_dataset());
  write_bytes(dir.file("short.gdds"), bytes.substr(0, bytes.size() / 3));
  EXPECT_THROW(read_dataset(dir.file("short.gdds")), FormatError);
  EXPECT_THROW(scan_dataset(dir.file("short.gdds")), FormatError);
  write_bytes(dir.file("tiny.gdds"), "GD");
  EXPECT_THROW(read_dataset(dir.file("tiny.gdds")), FormatError);
  // A resealed file with the wrong magic fails on the magic check, not the CRC.
  io::Writer w;
  w.raw("XXXX" + bytes.substr(4, bytes.size() - 8));
  w.seal();
  write_bytes(dir.file("magic.gdds"), w.bytes());
  EXPECT_THROW(read_dataset(dir.file("magic.gdds")), FormatError);
  EXPECT_THROW(read_dataset(dir.file("missing.gdds")), IoError);
}

TEST(DatasetIo, HeaderScanMatchesFullRead) {
  TempDir dir;
  const auto ds = small_dataset();
  write_dataset(dir.file("a.gdds"), ds);
  const auto s = scan_dataset(dir.file("a.gdds"));
  EXPECT_EQ(s.count, 6u);
  EXPECT_EQ(s.dim, 4u);
  EXPECT_EQ(s.labels, ds.labels());
  EXPECT_EQ(s.lengths, std::vector<std::uint32_t>(6, 5));
  EXPECT_EQ(s.manifest, ds.manifest);
}

TEST(DatasetIo, RejectsNonSpdPayload) {
  auto ds = small_dataset();
  auto bytes = encode_dataset(ds);
  // Overwrite the first diagonal entry of the first matrix with -1 and reseal.
  const auto mlen = io::Reader(bytes.substr(8, 4), "buf").u32();
  const std::size_t first = 12 + mlen + 4 + 12;
  io::Writer neg;
  neg.f64(-1.0);
  bytes.replace(first, 8, neg.bytes());
  io::Writer w;
  w.raw(bytes.substr(0, bytes.size() - 4));
  w.seal();
  EXPECT_THROW(decode_dataset(w.bytes()), FormatError);
}

TEST(CheckpointIo, RoundTripPreservesEveryField) {
  TempDir dir;
  ModelConfig c;
  c.dim = 4;
  c.classes = 3;
  c.tau = 3;
  c.step = 0.07;
  auto params = ModelParams::init(c, 42);
  params.dynamics.a(0, 0) = -0.123456789012345;
  write_checkpoint(dir.file("m.ckpt"), Checkpoint{params, Mode::Convolutional});
  const auto back = read_checkpoint(dir.file("m.ckpt"));
  EXPECT_EQ(back.mode, Mode::Convolutional);
  EXPECT_EQ(back.params.config.step, 0.07);
  EXPECT_EQ(back.params.config.tau, 3);
  std::vector<Matrix> want;
  params.for_each_field([&](const std::string&, const Matrix& m) { want.push_back(m); });
  std::size_t k = 0;
  back.params.for_each_field([&](const std::string&, const Matrix& m) { EXPECT_EQ(m, want[k++]); });
  EXPECT_EQ(k, want.size());
  EXPECT_EQ(encode_checkpoint(back), io::read_file(dir.file("m.ckpt")));
}

TEST(CheckpointIo, CorruptionDetected) {
  ModelConfig c;
  c.dim = 3;
  auto bytes = encode_checkpoint(Checkpoint{ModelParams::init(c, 1), Mode::Recurrent});
  bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 1);
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, 10)), FormatError);
}
