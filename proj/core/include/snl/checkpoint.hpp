#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "snl/network.hpp"

namespace snl {

// Checkpoint layout, all integers and floats little-endian:
//
//   magic        8 bytes  "SNLCKPT\0"
//   version      u32      (kCheckpointVersion)
//   descriptor   u32 length + UTF-8 ArchSpec text
//   seed         u64
//   epoch        u64
//   lambda       f64
//   n_weights    u32
//     per weight: u64 count, count * f64 values, u8 has_mask, [count * f64 mask]
//   n_gates      u32
//     per gate:  u8 granularity, u8 mode, u8 frozen, f64 epsilon,
//                u64 count, count * f64 values
//   crc32        u32 over every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointChecksumError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  double lambda = 0.0;
};

struct Checkpoint {
  GatedNetwork net;
  CheckpointMeta meta;
};

std::vector<std::uint8_t> encode_checkpoint(const GatedNetwork& net, const CheckpointMeta& meta);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const GatedNetwork& net, const std::filesystem::path& path,
                     const CheckpointMeta& meta = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace snl
