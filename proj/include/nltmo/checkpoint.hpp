#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "nltmo/hdr_io.hpp"
#include "nltmo/tonemap.hpp"

namespace nltmo {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// One file may carry the tone-mapping model, the fusion model, or both.
struct ModelBundle {
  std::optional<ToneMapModel> tonemap;
  std::optional<FusionModel> fusion;
};

// Layout: "NLTMOCKP", u32 version, u32 pyramid levels, u32 network count;
// per network a u32 role, the config descriptor (u32 in_channels, u32 layer
// count, per layer u32 kernel, dilation, width and u8 bias / norm / lrelu
// flags) and float32 blocks per layer (weight OIHW, bias, lambda1, lambda2);
// finally a u64 FNV-1a checksum of everything before it. All little-endian.
Bytes save_checkpoint(const ModelBundle& bundle);
// Throws CheckpointError on any malformed, truncated or nonconforming input.
ModelBundle load_checkpoint(std::span<const std::uint8_t> bytes);

// Human-readable key=value summary written next to the binary.
std::string checkpoint_manifest(const ModelBundle& bundle);

// Writes `path` and `path` + ".txt".
void save_checkpoint_file(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_checkpoint_file(const std::filesystem::path& path);

}  // namespace nltmo
