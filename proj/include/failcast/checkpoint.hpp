#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "failcast/model.hpp"

namespace failcast {

// "SFCK" v1 layout, little-endian:
//   char[4] "SFCK" | u32 version | u32 descriptor length | descriptor (JSON
//   NetworkSpec) | u64 weight count | f32 weights | metadata JSON to EOF.
// Weights follow Model::parameters() order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<char> serialize_checkpoint(const Model& model);
Model parse_checkpoint(std::span<const char> bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

// Hex digest of the serialized checkpoint.
std::string model_digest(const Model& model);

}  // namespace failcast
