#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "inductlab/transformer.hpp"

namespace inductlab {

// Native checkpoint file:
//
//   bytes 0..7    magic "IHWCKPT1"
//   bytes 8..15   manifest length M, unsigned little-endian
//   next M bytes  JSON manifest {"format", "version", "config", "tensors"}
//                 where tensors maps name -> {"offset", "shape", "dtype": "f32"}
//   remainder     raw little-endian float32 blobs; offsets count from here
//
// The loader also accepts safetensors files (8-byte header length, JSON
// header, raw bytes) holding only F32 tensors, with the model config stored
// as a JSON string under __metadata__["inductlab.config"].

inline constexpr char kCheckpointMagic[] = "IHWCKPT1";

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
std::vector<std::uint8_t> encode_safetensors(const Checkpoint& ckpt);
// Detects the layout from the leading bytes.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
void save_safetensors(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace inductlab
