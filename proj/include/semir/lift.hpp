#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "semir/minor.hpp"
#include "semir/tensor.hpp"

namespace semir {

/// Writes prediction[u] to every voxel of supernode u via the membership
/// array; deleted voxels get `background`.
LabelMap lift(const GraphMinor &minor, std::span<const std::uint16_t> predictions, std::uint16_t background = 0);

/// Same result reached by walking contraction links in the tensor from each
/// supernode's canonical voxel.
LabelMap lift_tensor_walk(const GraphMinor &minor, const ExpandedTensor &tensor,
                          std::span<const std::uint16_t> predictions, std::uint16_t background = 0);

/// Dice of (pred == target) against (gt == target); 1 when both are empty.
double voxel_dice(const LabelMap &pred, const LabelMap &gt, std::uint16_t target);

/// Majority voxel label per supernode, ties toward the smaller class.
std::vector<std::uint16_t> majority_labels(const GraphMinor &minor, const LabelMap &labels);

/// Per-supernode classes as stored in pred.bin.
struct NodePredictions {
  std::uint32_t classes = 2;
  std::vector<std::uint16_t> labels;
};

/// pred.bin: "SPRD", u32 version=1, u32 n, u32 k, n u8 classes (< k <= 256).
void write_predictions(const std::filesystem::path &path, const NodePredictions &pred);
NodePredictions read_predictions(const std::filesystem::path &path);

} // namespace semir
