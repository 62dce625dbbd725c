#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace semir {

/// Voxel or expanded-tensor coordinate (j, k, l).
using Coord = std::array<std::int64_t, 3>;

struct VolumeDims {
  std::size_t h = 1;
  std::size_t w = 1;
  std::size_t d = 1;
  std::size_t c = 1;

  std::size_t voxels() const { return h * w * d; }
  bool contains(const Coord &v) const;
  std::size_t voxel_index(const Coord &v) const { return (v[0] * w + v[1]) * d + v[2]; }
  Coord coord_of(std::size_t index) const;
  bool same_grid(const VolumeDims &o) const { return h == o.h && w == o.w && d == o.d; }
  void validate() const;

  friend bool operator==(const VolumeDims &, const VolumeDims &) = default;
};

/// Dense H x W x D x C intensities, row-major, channel-last.
struct Volume {
  VolumeDims dims;
  std::vector<float> data;

  Volume() = default;
  explicit Volume(VolumeDims dims_);

  std::span<const float> intensity(std::size_t voxel) const {
    return {data.data() + voxel * dims.c, dims.c};
  }
  float &at(std::size_t voxel, std::size_t channel = 0) { return data[voxel * dims.c + channel]; }
  float at(std::size_t voxel, std::size_t channel = 0) const { return data[voxel * dims.c + channel]; }

  void validate() const;
};

struct LabelMap {
  VolumeDims dims; // c == 1
  std::vector<std::uint16_t> labels;

  LabelMap() = default;
  explicit LabelMap(VolumeDims dims_);

  std::uint16_t max_label() const;
  /// Throws InvalidParams when a label is >= num_classes or sizes disagree.
  void validate(std::size_t num_classes) const;
  /// 1 where label == target, 0 elsewhere.
  LabelMap binarized(std::uint16_t target) const;
};

/// N-connected neighbourhood offsets, lexicographic on (dj, dk, dl).
class Connectivity {
public:
  /// Accepts 6, 18 or 26; anything else (including 10) throws InvalidParams.
  explicit Connectivity(int n = 6);

  int n() const { return n_; }
  const std::vector<Coord> &offsets() const { return offsets_; }
  /// Offsets that are lexicographically positive; each undirected grid edge
  /// is produced once when scanning with these.
  const std::vector<Coord> &forward_offsets() const { return forward_; }

private:
  int n_;
  std::vector<Coord> offsets_;
  std::vector<Coord> forward_;
};

/// Bit assignment per tensor cell. The node/edge split follows index parity:
/// all-even positions are voxels, anything with an odd index is an edge.
enum class Flag : std::uint8_t {
  // node positions
  Visited,     // bit0: popped by a flood fill
  Merged,      // bit1: claimed by a supernode
  Boundary,    // bit3: has an exposed grid edge
  NodeDeleted, // bit4: supernode failed retention
  ParentDiag,  // bit5: contraction parent reached through body-diagonal class 3
  ParentSign,  // bit6: sign of that parent offset
  // edge positions
  EdgeDeleted, // bit2: severed by the cut threshold
  Link0,       // bit5: contraction edge of diagonal class 0 crosses here
  Link1,       // bit6: class 1
  Link2,       // bit7: class 2
};

std::uint8_t flag_bit(Flag f);
bool is_node_flag(Flag f);

/// Bits that may legally appear at node / edge positions.
inline constexpr std::uint8_t kNodeBits = 0b0111'1011;
inline constexpr std::uint8_t kEdgeBits = 0b1110'0100;

std::array<std::size_t, 3> expanded_dims(const VolumeDims &dims);

/// (2j, 2k, 2l); throws IndexError when the voxel is outside dims.
Coord node_position(const VolumeDims &dims, const Coord &voxel);

/// Midpoint of the two node positions (2v + delta). Returns false when the
/// neighbour v + delta is outside the grid.
bool edge_position(const VolumeDims &dims, const Coord &voxel, const Coord &delta, Coord &out);

class ExpandedTensor {
public:
  ExpandedTensor() = default;
  explicit ExpandedTensor(const VolumeDims &dims);
  ExpandedTensor(std::array<std::size_t, 3> expanded, std::vector<std::uint8_t> flags);

  const std::array<std::size_t, 3> &shape() const { return shape_; }
  /// Voxel grid recovered from the odd-sized shape (c = 1).
  VolumeDims voxel_dims() const;
  std::size_t size() const { return flags_.size(); }

  bool in_bounds(const Coord &pos) const;
  std::size_t index(const Coord &pos) const {
    return (static_cast<std::size_t>(pos[0]) * shape_[1] + static_cast<std::size_t>(pos[1])) * shape_[2] +
           static_cast<std::size_t>(pos[2]);
  }
  static bool is_node(const Coord &pos) { return ((pos[0] | pos[1] | pos[2]) & 1) == 0; }

  /// Checked accessors: bounds and flag/parity agreement.
  bool get(const Coord &pos, Flag f) const;
  void set(const Coord &pos, Flag f);

  /// Unchecked accessors for the hot loops; the caller guarantees parity.
  bool test(std::size_t idx, std::uint8_t bit) const { return (flags_[idx] & bit) != 0; }
  void mark(std::size_t idx, std::uint8_t bit) { flags_[idx] |= bit; }

  std::span<const std::uint8_t> raw() const { return flags_; }

  /// Counts positions whose bits violate the node/edge parity split.
  std::size_t parity_violations() const;

  friend bool operator==(const ExpandedTensor &, const ExpandedTensor &) = default;

private:
  void check(const Coord &pos, Flag f) const;

  std::array<std::size_t, 3> shape_{0, 0, 0};
  std::vector<std::uint8_t> flags_;
};

// Contraction links. Crossing diagonals share a midpoint, so a link is keyed
// by the diagonal class of its offset: face edges and the two face-diagonal
// classes live on the edge cell, body diagonals of classes 0-2 as well, and
// class 3 body diagonals are recorded on the child node (ParentDiag/ParentSign).

/// Records that `child = parent + delta` was contracted into its supernode.
void mark_contraction(ExpandedTensor &t, const Coord &parent, const Coord &delta);

/// True when the grid edge (v, v + delta) was used for contraction, in either
/// direction. Both endpoints must be in bounds.
bool has_contraction(const ExpandedTensor &t, const Coord &voxel, const Coord &delta);

} // namespace semir
