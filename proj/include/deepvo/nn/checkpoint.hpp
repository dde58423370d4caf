#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "deepvo/keyvalue.hpp"
#include "deepvo/nn/tensor.hpp"

namespace deepvo::nn {

/// Named f32 tensors plus a UTF-8 key=value metadata block.
///
/// Layout (little endian): "DVOC", u32 version, u64 count, then per tensor
/// u32 name length, name bytes, u32 rank, rank x u64 dims, f32 payload; finally
/// u64 metadata length and the metadata text.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  KeyValues metadata;

  const Tensor<float>* find(const std::string& name) const;
  void put(std::string name, Tensor<float> t);
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace deepvo::nn
