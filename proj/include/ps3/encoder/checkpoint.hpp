#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ps3/core/tensor.hpp"
#include "ps3/encoder/config.hpp"
#include "ps3/encoder/model.hpp"

namespace ps3 {

// Binary layout, all integers little-endian:
//   "PS3CKPT\0"                       8-byte magic
//   u32 version (1)
//   u32 n, n bytes                    EncoderConfig as JSON
//   u32 tensor count
//   per tensor:
//     u32 n, n bytes                  name
//     u32 rank, rank x u64            dims
//     u8 dtype (0 = f32)
//     product(dims) x f32             values, row-major
struct Checkpoint {
  EncoderConfig config;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& source = "<memory>");
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Model parameters plus any extra named tensors.
Checkpoint make_checkpoint(const Ps3Model<float>& model,
                           std::vector<std::pair<std::string, Tensor<float>>> extra = {});
// Rebuilds the model from the layout tensors; extra tensors are ignored.
Ps3Model<float> model_from_checkpoint(const Checkpoint& ckpt);

// 64-bit FNV-1a of a byte string, for provenance columns.
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace ps3
