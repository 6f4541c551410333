#pragma once

// Checkpoint file format, shared by the classifier and the GAN:
//
//   "DRNET1"                     6 bytes magic
//   version                      1 byte (currently 1)
//   repeated until end of file, in sorted name order:
//     name_length  u32 LE
//     name         name_length bytes, UTF-8
//     rank         u32 LE
//     dims         rank x u32 LE
//     data         product(dims) x IEEE-754 float32 LE

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "drnet/network.hpp"

namespace drnet {

inline constexpr std::uint8_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const NetworkParams<float>& params);
NetworkParams<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const NetworkParams<float>& params);
/// Throws DataError on missing files, bad magic/version or truncated records.
NetworkParams<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace drnet
