#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "svgan/errors.hpp"
#include "svgan/params.hpp"
#include "svgan/tensor.hpp"

namespace svgan {

// One named tensor in a checkpoint. Values are stored as little-endian 32-bit
// floats on disk regardless of the engine's scalar type.
struct ParamBlock {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

// Binary layout: magic "SVGAN1", length-prefixed UTF-8 descriptor (the saver's
// config document), then named parameter blocks (name, shape, payload).
struct Checkpoint {
  std::string descriptor;
  std::vector<ParamBlock> blocks;

  const ParamBlock* find(std::string_view name) const {
    auto it = std::find_if(blocks.begin(), blocks.end(),
                           [&](const ParamBlock& b) { return b.name == name; });
    return it == blocks.end() ? nullptr : &*it;
  }
};

// Writes to <path>.tmp and renames, so a failed save never leaves a partially
// written checkpoint at path.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies registry parameters into blocks, optionally namespacing names with
// prefix.
template <typename T>
void append_param_blocks(const std::vector<NamedParam<T>>& params, std::vector<ParamBlock>& out,
                         const std::string& prefix = {}) {
  for (const NamedParam<T>& p : params) {
    ParamBlock block;
    block.name = prefix + p.name;
    block.shape = p.tensor.shape();
    const auto values = p.tensor.data();
    block.values.assign(values.begin(), values.end());
    out.push_back(std::move(block));
  }
}

// Restores every registry parameter from its checkpoint block. A missing
// block or a shape mismatch is a config mismatch, never a silent reshape.
template <typename T>
void restore_param_blocks(std::vector<NamedParam<T>>& params, const Checkpoint& ckpt,
                          const std::string& prefix = {}) {
  for (NamedParam<T>& p : params) {
    const std::string name = prefix + p.name;
    const ParamBlock* block = ckpt.find(name);
    if (block == nullptr) {
      throw ValidationError("checkpoint has no parameter '" + name + "'");
    }
    if (block->shape != p.tensor.shape()) {
      throw ValidationError("checkpoint parameter '" + name + "' has shape " +
                            shape_str(block->shape) + ", model expects " +
                            shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.data();
    std::copy(block->values.begin(), block->values.end(), dst.begin());
  }
}

}  // namespace svgan
