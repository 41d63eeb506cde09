#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flash/tensor.hpp"

namespace flash {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

// Parameter checkpoint ("FLSH" format, little-endian):
//   magic "FLSH" | u16 version = 1 | u32 count
//   per tensor: u32 name_len | name bytes (UTF-8) | u32 rank | u32 dims[rank]
//               | f64 values[prod(dims)]
// Writes go to a temporary sibling and are renamed into place.
void save_checkpoint(const ParameterList& params, const std::filesystem::path& path);
ParameterList load_checkpoint(const std::filesystem::path& path);

// Copies values from a checkpoint into existing tensors, matched by name.
// Throws on a missing name or a shape mismatch.
void restore_parameters(ParameterList& params, const std::filesystem::path& path);

// Writes `bytes` to path via temp-file-then-rename.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

}  // namespace flash
