#pragma once

#include <string>
#include <utility>
#include <vector>

#include "samcl/tensor.hpp"

namespace samcl {

// Binary container for named tensors:
//   magic "SCKP" | version u32 | count u32 |
//   per entry: name_len u32, name bytes, rank u32, dims u32..., payload f64...
// All integers and floats little-endian.
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;
};

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& named);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

}  // namespace samcl
