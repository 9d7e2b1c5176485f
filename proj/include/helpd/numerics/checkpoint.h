#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "helpd/numerics/tensor.h"

namespace helpd {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Flat binary layout, little-endian:
//   "HELPD1" | u8 dtype (1 = f32, 2 = f64) | u32 tensor count
//   per tensor: u32 name length | name bytes | u32 rank | u64 dims[rank]
//               | row-major payload in the file dtype
// Loading converts the payload to the build's Real.
void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace helpd
