#pragma once

#include <cstdint>
#include <vector>

#include "semir/minor.hpp"
#include "semir/tensor.hpp"

namespace semir {

/// Binary per-voxel mask.
struct BoundaryMap {
  VolumeDims dims;
  std::vector<std::uint8_t> mask;

  std::size_t count() const;
};

/// 1 where an in-bounds neighbour carries a different label.
BoundaryMap extract_gt_boundary(const LabelMap &labels, const Connectivity &conn);

/// 1 where the node position carries Boundary. Every node must have been
/// visited by a flood fill.
BoundaryMap extract_minor_boundary(const ExpandedTensor &tensor);

/// 2|a & b| / (|a| + |b|), 1 when both are empty.
double dice(const BoundaryMap &a, const BoundaryMap &b);

struct LabeledVolume {
  Volume volume;
  LabelMap labels;
};

/// Mean of 1 - dice(minor boundary, label boundary) over a few-shot set.
/// Label boundaries are computed once. A sample whose minor cannot be built
/// scores 1.
class BoundaryObjective {
public:
  BoundaryObjective(std::vector<LabeledVolume> samples, int connectivity, std::size_t jobs = 1);

  double operator()(const MinorParams &params) const;
  std::vector<double> per_sample(const MinorParams &params) const;

  const std::vector<LabeledVolume> &samples() const { return samples_; }
  int connectivity() const { return connectivity_; }

private:
  std::vector<LabeledVolume> samples_;
  std::vector<BoundaryMap> gt_;
  int connectivity_;
  std::size_t jobs_;
};

} // namespace semir
