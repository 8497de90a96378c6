#include "sdqn/checkpoint.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

using namespace sdqn;

namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path(testing::TempDir() + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST(Checkpoint, RoundTripIsByteExact) {
  Network net = NetBuilder({4}, 1).dense(8).relu().concat_aux().dense(3).build(0xDEADBEEF);
  TempFile a("ckpt_a.sdqn"), b("ckpt_b.sdqn");
  save_network(a.path, net);

  Network reloaded = NetBuilder({4}, 1).dense(8).relu().concat_aux().dense(3).build(1);
  load_network(a.path, reloaded);
  EXPECT_EQ(reloaded.rng_seed, 0xDEADBEEFu);
  save_network(b.path, reloaded);

  const auto bytes_a = read_bytes(a.path);
  const auto bytes_b = read_bytes(b.path);
  ASSERT_FALSE(bytes_a.empty());
  EXPECT_EQ(bytes_a, bytes_b);
}

TEST(Checkpoint, HeaderLayout) {
  TempFile f("ckpt_hdr.sdqn");
  std::map<std::string, Tensor> t;
  t.emplace("w", Tensor({2}, {1.f, 2.f}));
  save_tensors(f.path, t);
  const auto bytes = read_bytes(f.path);
  ASSERT_GE(bytes.size(), 4u + 4 + 4 + 2 + 1 + 1 + 4 + 8);
  EXPECT_EQ(bytes.substr(0, 4), "SDQN");
  // u32 version = 1, u32 count = 1, little endian
  EXPECT_EQ(std::uint8_t(bytes[4]), 1);
  EXPECT_EQ(std::uint8_t(bytes[8]), 1);
  // u16 name length = 1, name 'w', rank 1, extent 2
  EXPECT_EQ(std::uint8_t(bytes[12]), 1);
  EXPECT_EQ(bytes[14], 'w');
  EXPECT_EQ(std::uint8_t(bytes[15]), 1);
  EXPECT_EQ(std::uint8_t(bytes[16]), 2);
}

TEST(Checkpoint, BadMagicRejected) {
  TempFile f("ckpt_bad.sdqn");
  std::ofstream os(f.path, std::ios::binary);
  os << "NOPE    garbage";
  os.close();
  EXPECT_THROW(load_tensors(f.path), CheckpointError);
}

TEST(Checkpoint, TruncationRejected) {
  TempFile f("ckpt_trunc.sdqn");
  std::map<std::string, Tensor> t;
  t.emplace("w", Tensor({128}));
  save_tensors(f.path, t);
  auto bytes = read_bytes(f.path);
  std::ofstream os(f.path, std::ios::binary);
  os.write(bytes.data(), std::streamsize(bytes.size() - 32));
  os.close();
  EXPECT_THROW(load_tensors(f.path), CheckpointError);
}

TEST(Checkpoint, MissingTensorRejected) {
  TempFile f("ckpt_missing.sdqn");
  Network small = NetBuilder({2}).dense(1).build(3);
  save_network(f.path, small);
  Network bigger = NetBuilder({2}).dense(1).dense(1).build(3);
  EXPECT_THROW(load_network(f.path, bigger), CheckpointError);
}

TEST(Checkpoint, SidebandTensorsSurvive) {
  TempFile f("ckpt_extra.sdqn");
  Network net = NetBuilder({2}).dense(1).build(3);
  std::map<std::string, Tensor> extra;
  extra.emplace("norm/feat_min", Tensor({4}, {0.f, 1.f, 2.f, 3.f}));
  save_network(f.path, net, extra);
  Network reloaded = NetBuilder({2}).dense(1).build(9);
  auto leftover = load_network(f.path, reloaded);
  ASSERT_TRUE(leftover.count("norm/feat_min"));
  EXPECT_EQ(leftover.at("norm/feat_min").data[3], 3.f);
}
