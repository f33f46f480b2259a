#pragma once

#include <string>

#include "spm/model.hpp"

namespace spm {

/// A checkpoint is a directory holding two files:
///
///   tensors.bin   "SPMCKPT1" magic, u32 tensor count, then per tensor:
///                 u32 name length, name bytes, u32 rank, u32 dims[rank],
///                 f32 payload (row-major, little-endian)
///   manifest.json {"format": "spm-checkpoint/1", "arch": {...},
///                  "tensors": [{"name", "shape", "offset", "numel"}]}
///
/// `offset` is the byte offset of the tensor's payload inside tensors.bin.
struct Checkpoint {
  ArchConfig arch;
  ParamSet<float> params;
};

void save_checkpoint(const std::string& dir, const ArchConfig& arch, const ParamSet<float>& params);
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace spm
