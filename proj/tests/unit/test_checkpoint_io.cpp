#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "inductlab/checkpoint_io.hpp"
#include "json.hpp"
#include "test_support.hpp"

namespace inductlab {
namespace {

using nlohmann::json;
using testing::small_model;

struct NativeParts {
  json manifest;
  std::vector<std::uint8_t> blob;
};

NativeParts split_native(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[8 + i]) << (8 * i);
  const std::string text(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
  return {json::parse(text), {bytes.begin() + 16 + static_cast<long>(len), bytes.end()}};
}

std::vector<std::uint8_t> join_native(const NativeParts& p) {
  const std::string text = p.manifest.dump();
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(text.size() >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), p.blob.begin(), p.blob.end());
  return out;
}

TEST(CheckpointIo, NativeRoundTripIsExact) {
  for (bool mlp : {false, true}) {
    const Checkpoint ck = small_model(3, 2, 2, mlp, mlp ? NormKind::kLayerNorm : NormKind::kNone);
    EXPECT_EQ(decode_checkpoint(encode_checkpoint(ck)), ck);
  }
  const Checkpoint circuit = testing::small_circuit();
  EXPECT_EQ(decode_checkpoint(encode_checkpoint(circuit)), circuit);
}

TEST(CheckpointIo, SafetensorsRoundTripIsExact) {
  const Checkpoint ck = small_model(4, 2, 2, true, NormKind::kLayerNorm);
  const auto bytes = encode_safetensors(ck);
  EXPECT_EQ(decode_checkpoint(bytes), ck);

  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  EXPECT_EQ(len % 8, 0u);
  const json header = json::parse(std::string(bytes.begin() + 8, bytes.begin() + 8 + static_cast<long>(len)));
  EXPECT_EQ(header["tok_embedding"]["dtype"], "F32");
  EXPECT_EQ(header["tok_embedding"]["shape"], json::array({11, 8}));
  EXPECT_TRUE(header["__metadata__"]["inductlab.config"].is_string());
}

TEST(CheckpointIo, EncodingIsDeterministic) {
  const Checkpoint ck = small_model(5);
  EXPECT_EQ(encode_checkpoint(ck), encode_checkpoint(ck));
  EXPECT_EQ(encode_safetensors(ck), encode_safetensors(ck));
}

TEST(CheckpointIo, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "inductlab_ckpt_test";
  std::filesystem::create_directories(dir);
  const Checkpoint ck = small_model(6);
  save_checkpoint(ck, dir / "m.ckpt");
  save_safetensors(ck, dir / "m.safetensors");
  EXPECT_EQ(load_checkpoint(dir / "m.ckpt"), ck);
  EXPECT_EQ(load_checkpoint(dir / "m.safetensors"), ck);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST(CheckpointIo, ConfigJsonRoundTrip) {
  ModelConfig c = testing::small_config(3, 2, true, NormKind::kLayerNorm);
  c.positional_kind = PositionalKind::kOneHotChannel;
  c.d_model = 40;
  c.pos_channel_offset = 11;
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
}

TEST(CheckpointIo, RejectsTruncation) {
  const auto bytes = encode_checkpoint(small_model(7));
  for (std::size_t cut : {std::size_t{4}, std::size_t{12}, std::size_t{40}, bytes.size() - 1}) {
    const std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    EXPECT_THROW(decode_checkpoint(t), std::runtime_error) << cut;
  }
}

TEST(CheckpointIo, RejectsManifestMismatches) {
  const auto bytes = encode_checkpoint(small_model(8));

  auto missing = split_native(bytes);
  missing.manifest["tensors"].erase("unembedding");
  EXPECT_THROW(decode_checkpoint(join_native(missing)), std::runtime_error);

  auto extra = split_native(bytes);
  extra.manifest["tensors"]["bogus"] = extra.manifest["tensors"]["unembedding"];
  EXPECT_THROW(decode_checkpoint(join_native(extra)), std::runtime_error);

  auto shape = split_native(bytes);
  shape.manifest["tensors"]["unembedding"]["shape"] = json::array({11, 8});
  EXPECT_THROW(decode_checkpoint(join_native(shape)), std::runtime_error);

  auto dtype = split_native(bytes);
  dtype.manifest["tensors"]["unembedding"]["dtype"] = "f16";
  EXPECT_THROW(decode_checkpoint(join_native(dtype)), std::runtime_error);

  auto config = split_native(bytes);
  config.manifest["config"]["d_model"] = 9;
  EXPECT_ANY_THROW(decode_checkpoint(join_native(config)));
}

TEST(CheckpointIo, RejectsNonFiniteWeights) {
  auto parts = split_native(encode_checkpoint(small_model(9)));
  const float nan = std::nanf("");
  std::memcpy(parts.blob.data(), &nan, sizeof nan);
  EXPECT_ANY_THROW(decode_checkpoint(join_native(parts)));
}

TEST(CheckpointIo, RejectsUnknownFormat) {
  std::vector<std::uint8_t> junk(64, 0x7f);
  EXPECT_THROW(decode_checkpoint(junk), std::runtime_error);
}

}  // namespace
}  // namespace inductlab
