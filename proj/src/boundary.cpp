#include "semir/boundary.hpp"

#include <algorithm>
#include <numeric>

#include "semir/error.hpp"
#include "semir/parallel.hpp"

namespace semir {

std::size_t BoundaryMap::count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

BoundaryMap extract_gt_boundary(const LabelMap &labels, const Connectivity &conn) {
  const auto &dims = labels.dims;
  BoundaryMap out{dims, std::vector<std::uint8_t>(dims.voxels(), 0)};
  for (std::size_t p = 0; p < dims.voxels(); ++p) {
    const auto c = dims.coord_of(p);
    for (const auto &d : conn.offsets()) {
      const Coord q{c[0] + d[0], c[1] + d[1], c[2] + d[2]};
      if (dims.contains(q) && labels.labels[dims.voxel_index(q)] != labels.labels[p]) {
        out.mask[p] = 1;
        break;
      }
    }
  }
  return out;
}

BoundaryMap extract_minor_boundary(const ExpandedTensor &tensor) {
  const auto dims = tensor.voxel_dims();
  BoundaryMap out{dims, std::vector<std::uint8_t>(dims.voxels(), 0)};
  const auto visited = flag_bit(Flag::Visited);
  const auto boundary = flag_bit(Flag::Boundary);
  for (std::size_t p = 0; p < dims.voxels(); ++p) {
    const auto c = dims.coord_of(p);
    const auto idx = tensor.index({2 * c[0], 2 * c[1], 2 * c[2]});
    if (!tensor.test(idx, visited)) {
      throw ContractViolation("tensor carries no construction flags at voxel " + std::to_string(p));
    }
    out.mask[p] = tensor.test(idx, boundary) ? 1 : 0;
  }
  return out;
}

double dice(const BoundaryMap &a, const BoundaryMap &b) {
  if (!a.dims.same_grid(b.dims) || a.mask.size() != b.mask.size()) {
    throw InvalidParams("dice: mask dimensions differ");
  }
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.mask.size(); ++i) {
    na += a.mask[i];
    nb += b.mask[i];
    both += a.mask[i] & b.mask[i];
  }
  if (na + nb == 0) {
    return 1.0;
  }
  return 2.0 * double(both) / double(na + nb);
}

BoundaryObjective::BoundaryObjective(std::vector<LabeledVolume> samples, int connectivity, std::size_t jobs)
    : samples_(std::move(samples)), connectivity_(connectivity), jobs_(jobs) {
  if (samples_.empty()) {
    throw InvalidParams("few-shot set is empty");
  }
  const Connectivity conn(connectivity);
  for (const auto &s : samples_) {
    if (!s.volume.dims.same_grid(s.labels.dims)) {
      throw InvalidParams("few-shot volume and label map differ in shape");
    }
    gt_.push_back(extract_gt_boundary(s.labels, conn));
  }
}

std::vector<double> BoundaryObjective::per_sample(const MinorParams &params) const {
  std::vector<double> loss(samples_.size(), 1.0);
  auto p = params;
  p.connectivity = connectivity_;
  parallel_for(samples_.size(), jobs_, [&](std::size_t i) {
    try {
      const auto built = build_minor(samples_[i].volume, p);
      loss[i] = 1.0 - dice(extract_minor_boundary(built.tensor), gt_[i]);
    } catch (const std::exception &) {
      loss[i] = 1.0;
    }
  });
  return loss;
}

double BoundaryObjective::operator()(const MinorParams &params) const {
  const auto l = per_sample(params);
  return std::accumulate(l.begin(), l.end(), 0.0) / double(l.size());
}

} // namespace semir
