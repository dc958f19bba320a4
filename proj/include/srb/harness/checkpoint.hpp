#pragma once

// Binary checkpoint files:
//
//   "SPRB1\n" | u32 LE header length | JSON header | payload | u64 LE FNV-1a(payload)
//
// The header lists every tensor with its shape, dtype, byte offset and byte
// length inside the payload. Floats are stored as raw little-endian IEEE-754
// values, masks as one byte per element.

#include <filesystem>
#include <string>

#include "srb/train.hpp"

namespace srb {

inline constexpr int kCheckpointFormatVersion = 1;

/// Header fields that can be read without knowing the precision.
struct CheckpointInfo {
  int format_version = 0;
  Precision precision = Precision::f32;
  ModelSpec spec;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  std::uint64_t rng_counter = 0;
  bool has_velocity = false;
  bool has_mask = false;
};

template <class T>
std::string encode_checkpoint(const Checkpoint<T>& checkpoint);

/// Throws FormatError on any structural problem and on a precision that
/// differs from T.
template <class T>
Checkpoint<T> decode_checkpoint(const std::string& bytes);

CheckpointInfo inspect_checkpoint(const std::string& bytes);

template <class T>
void save_checkpoint(const Checkpoint<T>& checkpoint, const std::filesystem::path& path);

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

CheckpointInfo inspect_checkpoint_file(const std::filesystem::path& path);

}  // namespace srb
