#pragma once

#include <filesystem>
#include <iosfwd>

#include "fedsvm/model.hpp"

namespace fedsvm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   "FSVM" | u32 version | u32 layer_count
//   per layer: u32 out_dim | u32 in_dim
//   u32 num_classes | u32 embedding_dim | u64 value_count
//   value_count x f64 in flatten_params order
void write_checkpoint(std::ostream& out, const Model& model);
Model read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace fedsvm
