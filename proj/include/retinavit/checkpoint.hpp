#pragma once

#include <string>

#include "retinavit/encoder.hpp"

namespace retinavit {

// Flat binary checkpoint, all little-endian:
//   u32 magic 'RVIT', u32 version,
//   u32 dim, depth, heads, mlp_dim, patch_edge, channels, num_classes,
//   u32 pooling (0 = global average, 1 = class token),
//   u32 tensor_count,
//   per tensor: u32 name_len, name bytes, u32 rank, u32 dims[rank],
//               f32 data (row-major).
// Save -> load -> save is byte-identical.
constexpr uint32_t kCheckpointMagic = 0x54495652;  // "RVIT"
constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const EncoderConfig& cfg,
                     const EncoderParams& params);

struct LoadedCheckpoint {
    EncoderConfig config;
    EncoderParams params;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace retinavit
