#include "semir/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "semir/error.hpp"

namespace semir {

bool VolumeDims::contains(const Coord &v) const {
  return v[0] >= 0 && v[1] >= 0 && v[2] >= 0 && static_cast<std::size_t>(v[0]) < h &&
         static_cast<std::size_t>(v[1]) < w && static_cast<std::size_t>(v[2]) < d;
}

Coord VolumeDims::coord_of(std::size_t index) const {
  const auto l = static_cast<std::int64_t>(index % d);
  index /= d;
  const auto k = static_cast<std::int64_t>(index % w);
  const auto j = static_cast<std::int64_t>(index / w);
  return {j, k, l};
}

void VolumeDims::validate() const {
  if (h == 0 || w == 0 || d == 0 || c == 0) {
    throw InvalidParams("volume dimensions must be positive");
  }
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (h > kMax / w || h * w > kMax / d || voxels() > kMax / c) {
    throw InvalidParams("volume too large for 32-bit voxel indexing");
  }
}

Volume::Volume(VolumeDims dims_) : dims(dims_), data(dims_.voxels() * dims_.c, 0.0f) {}

void Volume::validate() const {
  dims.validate();
  if (data.size() != dims.voxels() * dims.c) {
    throw InvalidParams("volume payload length does not match h*w*d*c");
  }
  if (!std::all_of(data.begin(), data.end(), [](float v) { return std::isfinite(v); })) {
    throw InvalidParams("volume contains non-finite intensities");
  }
}

LabelMap::LabelMap(VolumeDims dims_) : dims(dims_), labels(dims_.voxels(), 0) { dims.c = 1; }

std::uint16_t LabelMap::max_label() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
}

void LabelMap::validate(std::size_t num_classes) const {
  dims.validate();
  if (labels.size() != dims.voxels()) {
    throw InvalidParams("label map length does not match h*w*d");
  }
  if (!labels.empty() && max_label() >= num_classes) {
    throw InvalidParams("label " + std::to_string(max_label()) + " >= class count " +
                        std::to_string(num_classes));
  }
}

LabelMap LabelMap::binarized(std::uint16_t target) const {
  LabelMap out(dims);
  std::transform(labels.begin(), labels.end(), out.labels.begin(),
                 [target](std::uint16_t v) { return static_cast<std::uint16_t>(v == target); });
  return out;
}

Connectivity::Connectivity(int n) : n_(n) {
  if (n != 6 && n != 18 && n != 26) {
    // 10 is named in the literature without a defined stencil.
    throw InvalidParams("unsupported connectivity " + std::to_string(n) + " (expected 6, 18 or 26)");
  }
  for (std::int64_t a = -1; a <= 1; ++a) {
    for (std::int64_t b = -1; b <= 1; ++b) {
      for (std::int64_t c = -1; c <= 1; ++c) {
        const int nz = (a != 0) + (b != 0) + (c != 0);
        if (nz == 0 || (n == 6 && nz > 1) || (n == 18 && nz > 2)) {
          continue;
        }
        offsets_.push_back({a, b, c});
        if (Coord{a, b, c} > Coord{0, 0, 0}) {
          forward_.push_back({a, b, c});
        }
      }
    }
  }
}

std::uint8_t flag_bit(Flag f) {
  switch (f) {
  case Flag::Visited: return 1u << 0;
  case Flag::Merged: return 1u << 1;
  case Flag::EdgeDeleted: return 1u << 2;
  case Flag::Boundary: return 1u << 3;
  case Flag::NodeDeleted: return 1u << 4;
  case Flag::ParentDiag: return 1u << 5;
  case Flag::ParentSign: return 1u << 6;
  case Flag::Link0: return 1u << 5;
  case Flag::Link1: return 1u << 6;
  case Flag::Link2: return 1u << 7;
  }
  return 0;
}

bool is_node_flag(Flag f) {
  switch (f) {
  case Flag::Visited:
  case Flag::Merged:
  case Flag::Boundary:
  case Flag::NodeDeleted:
  case Flag::ParentDiag:
  case Flag::ParentSign: return true;
  default: return false;
  }
}

std::array<std::size_t, 3> expanded_dims(const VolumeDims &dims) {
  dims.validate();
  return {2 * dims.h - 1, 2 * dims.w - 1, 2 * dims.d - 1};
}

Coord node_position(const VolumeDims &dims, const Coord &voxel) {
  if (!dims.contains(voxel)) {
    throw IndexError("voxel outside volume");
  }
  return {2 * voxel[0], 2 * voxel[1], 2 * voxel[2]};
}

bool edge_position(const VolumeDims &dims, const Coord &voxel, const Coord &delta, Coord &out) {
  if (!dims.contains(voxel)) {
    throw IndexError("voxel outside volume");
  }
  const Coord nb{voxel[0] + delta[0], voxel[1] + delta[1], voxel[2] + delta[2]};
  if (!dims.contains(nb)) {
    return false;
  }
  out = {2 * voxel[0] + delta[0], 2 * voxel[1] + delta[1], 2 * voxel[2] + delta[2]};
  return true;
}

ExpandedTensor::ExpandedTensor(const VolumeDims &dims) : shape_(expanded_dims(dims)) {
  flags_.assign(shape_[0] * shape_[1] * shape_[2], 0);
}

ExpandedTensor::ExpandedTensor(std::array<std::size_t, 3> expanded, std::vector<std::uint8_t> flags)
    : shape_(expanded), flags_(std::move(flags)) {
  for (auto s : shape_) {
    if (s == 0 || s % 2 == 0) {
      throw FormatError("expanded tensor dimensions must be odd and positive");
    }
  }
  if (flags_.size() != shape_[0] * shape_[1] * shape_[2]) {
    throw FormatError("expanded tensor payload size mismatch");
  }
}

VolumeDims ExpandedTensor::voxel_dims() const {
  return {(shape_[0] + 1) / 2, (shape_[1] + 1) / 2, (shape_[2] + 1) / 2, 1};
}

bool ExpandedTensor::in_bounds(const Coord &pos) const {
  return pos[0] >= 0 && pos[1] >= 0 && pos[2] >= 0 && static_cast<std::size_t>(pos[0]) < shape_[0] &&
         static_cast<std::size_t>(pos[1]) < shape_[1] && static_cast<std::size_t>(pos[2]) < shape_[2];
}

void ExpandedTensor::check(const Coord &pos, Flag f) const {
  if (!in_bounds(pos)) {
    throw IndexError("expanded position out of bounds");
  }
  if (is_node(pos) != is_node_flag(f)) {
    throw ContractViolation(is_node(pos) ? "edge flag used at a node position"
                                         : "node flag used at an edge position");
  }
}

bool ExpandedTensor::get(const Coord &pos, Flag f) const {
  check(pos, f);
  return test(index(pos), flag_bit(f));
}

void ExpandedTensor::set(const Coord &pos, Flag f) {
  check(pos, f);
  mark(index(pos), flag_bit(f));
}

std::size_t ExpandedTensor::parity_violations() const {
  std::size_t bad = 0;
  for (std::size_t a = 0; a < shape_[0]; ++a) {
    for (std::size_t b = 0; b < shape_[1]; ++b) {
      for (std::size_t c = 0; c < shape_[2]; ++c) {
        const bool node = ((a | b | c) & 1) == 0;
        const std::uint8_t v = flags_[(a * shape_[1] + b) * shape_[2] + c];
        bad += (v & ~(node ? kNodeBits : kEdgeBits)) != 0;
      }
    }
  }
  return bad;
}

namespace {

struct DiagonalClass {
  int odd = 0;   // nonzero components of the offset
  int klass = 0; // 0..3
  int sign = 1;  // sign of the first nonzero component
};

DiagonalClass classify(const Coord &delta) {
  DiagonalClass out;
  std::array<std::int64_t, 3> nz{};
  for (auto v : delta) {
    if (v != 0) {
      nz[out.odd++] = v;
    }
  }
  out.sign = nz[0] > 0 ? 1 : -1;
  if (out.odd == 2) {
    out.klass = nz[0] * nz[1] > 0 ? 0 : 1;
  } else if (out.odd == 3) {
    // normalise so the first component is +1: (1,a,b)
    const auto a = nz[1] * out.sign;
    const auto b = nz[2] * out.sign;
    out.klass = (a > 0 ? 0 : 2) + (b > 0 ? 0 : 1);
  }
  return out;
}

constexpr Coord kClass3{1, -1, -1};

std::uint8_t link_bit(int klass) { return flag_bit(klass == 0 ? Flag::Link0 : klass == 1 ? Flag::Link1 : Flag::Link2); }

Coord node_pos(const Coord &v) { return {2 * v[0], 2 * v[1], 2 * v[2]}; }

} // namespace

void mark_contraction(ExpandedTensor &t, const Coord &parent, const Coord &delta) {
  const auto cls = classify(delta);
  if (cls.odd == 3 && cls.klass == 3) {
    const Coord child{parent[0] + delta[0], parent[1] + delta[1], parent[2] + delta[2]};
    const auto idx = t.index(node_pos(child));
    t.mark(idx, flag_bit(Flag::ParentDiag));
    if (cls.sign < 0) {
      t.mark(idx, flag_bit(Flag::ParentSign));
    }
    return;
  }
  const Coord mid{2 * parent[0] + delta[0], 2 * parent[1] + delta[1], 2 * parent[2] + delta[2]};
  t.mark(t.index(mid), link_bit(cls.klass));
}

bool has_contraction(const ExpandedTensor &t, const Coord &voxel, const Coord &delta) {
  const auto cls = classify(delta);
  if (cls.odd == 3 && cls.klass == 3) {
    // parent(child) = child - sign * (1,-1,-1)
    auto parent_is = [&](const Coord &child, const Coord &candidate) {
      const auto idx = t.index(node_pos(child));
      if (!t.test(idx, flag_bit(Flag::ParentDiag))) {
        return false;
      }
      const int s = t.test(idx, flag_bit(Flag::ParentSign)) ? -1 : 1;
      return Coord{child[0] - s * kClass3[0], child[1] - s * kClass3[1], child[2] - s * kClass3[2]} == candidate;
    };
    const Coord nb{voxel[0] + delta[0], voxel[1] + delta[1], voxel[2] + delta[2]};
    return parent_is(nb, voxel) || parent_is(voxel, nb);
  }
  const Coord mid{2 * voxel[0] + delta[0], 2 * voxel[1] + delta[1], 2 * voxel[2] + delta[2]};
  return t.test(t.index(mid), link_bit(cls.klass));
}

} // namespace semir
