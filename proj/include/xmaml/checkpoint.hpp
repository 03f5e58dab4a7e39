#pragma once

// Binary parameter checkpoints. Layout, all integers little-endian:
//
//   magic        8 bytes  "XMAML01\0"
//   config hash  u64
//   segments     u32
//   per segment: name length u32, name bytes, rank u32, extents u64 * rank,
//                payload f64 * product(extents)

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xmaml/params.hpp"

namespace xmaml {

struct Checkpoint {
  std::uint64_t config_hash = 0;
  ParamVector params;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError (byte offset as "line") on a malformed buffer.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace xmaml
