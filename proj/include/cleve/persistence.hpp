#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cleve/errors.hpp"
#include "cleve/params.hpp"

namespace cleve {

// Checkpoint byte layout (all integers little-endian):
//
//   "CLVE"                       4-byte magic
//   u32 version                  currently 1
//   repeated, sorted by name:
//     u16 name_length, name bytes (UTF-8)
//     u8  dtype                  0 = f32
//     u8  rank
//     u32 dims[rank]
//     f32 payload[prod(dims)]    row-major
//   u32 crc32                    over every preceding byte
//
// Tensors run until the trailing CRC; there is no count field.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};
class BadMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class VersionMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CrcMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class TruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Serializes in name order. Duplicate names or size/dims mismatches throw
/// CheckpointError before anything is produced.
std::vector<std::uint8_t> encode_checkpoint(std::vector<NamedTensor> tensors);
std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_tensors(const std::vector<NamedTensor>& tensors, const std::string& path);
std::vector<NamedTensor> load_tensors(const std::string& path);

/// Matrices become rank-2 tensors; rank 0/1 tensors load as 1 x n rows.
std::vector<NamedTensor> to_tensors(const ParameterSet& p);
ParameterSet from_tensors(const std::vector<NamedTensor>& tensors);

void save(const ParameterSet& p, const std::string& path);
ParameterSet load(const std::string& path);

}  // namespace cleve
