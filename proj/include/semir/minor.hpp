#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "semir/features.hpp"
#include "semir/tensor.hpp"

namespace semir {

enum class NormOrder { L1, L2, Linf };

/// Parameters of minor construction (contraction, deletion, retention,
/// traversal).
struct MinorParams {
  double psi = 0.0;   // contraction threshold
  double alpha = 0.0; // edge-deletion threshold
  std::uint64_t beta_min = 1;
  std::uint64_t beta_max = std::numeric_limits<std::uint64_t>::max();
  double m_min = -std::numeric_limits<double>::infinity();
  double m_max = std::numeric_limits<double>::infinity();
  NormOrder norm = NormOrder::L2;
  int connectivity = 6;
  std::uint32_t traversal_divisor = 3;
  std::uint64_t seed = 42;
  double epsilon = 1e-6;

  /// Throws InvalidParams unless 0 <= psi <= alpha, 1 <= beta_min <= beta_max,
  /// m_min <= m_max, epsilon > 0 and the connectivity is supported.
  void validate() const;

  friend bool operator==(const MinorParams &, const MinorParams &) = default;
};

double intensity_distance(std::span<const float> a, std::span<const float> b, NormOrder norm);

/// Step coprime to n used by the strided traversal; scans upward from
/// clamp(n / max(d, 1), 1, n - 1), then downward, then falls back to 1.
std::size_t get_coprime(std::size_t n, std::size_t d);

struct TraversalPlan {
  Coord start{0, 0, 0};
  std::array<std::size_t, 3> steps{1, 1, 1};
};

TraversalPlan make_traversal(const VolumeDims &dims, const MinorParams &params);

/// Calls fn(voxel_index) for every voxel in strided order
/// ((r0 + i*s_h) mod H, (c0 + j*s_w) mod W, (l0 + k*s_d) mod D).
template <typename Fn> void for_each_in_traversal(const VolumeDims &dims, const TraversalPlan &plan, Fn &&fn) {
  for (std::size_t i = 0; i < dims.h; ++i) {
    const std::size_t r = (static_cast<std::size_t>(plan.start[0]) + i * plan.steps[0]) % dims.h;
    for (std::size_t j = 0; j < dims.w; ++j) {
      const std::size_t c = (static_cast<std::size_t>(plan.start[1]) + j * plan.steps[1]) % dims.w;
      for (std::size_t k = 0; k < dims.d; ++k) {
        const std::size_t l = (static_cast<std::size_t>(plan.start[2]) + k * plan.steps[2]) % dims.d;
        fn((r * dims.w + c) * dims.d + l);
      }
    }
  }
}

enum class Retention { Keep, Delete };

/// Inclusive bounds on area and on the channel-averaged mean intensity.
Retention retention_check(std::uint64_t area, double mean_intensity, const MinorParams &params);

inline constexpr std::uint32_t kDeleted = 0xFFFFFFFFu;

struct Supernode {
  std::uint32_t id = 0;
  Coord canonical{0, 0, 0};
  std::uint64_t area = 0;
  std::uint64_t boundary_len = 0;

  friend bool operator==(const Supernode &, const Supernode &) = default;
};

struct GraphMinor {
  VolumeDims dims;
  int connectivity = 6;
  std::vector<Supernode> nodes;
  std::vector<MinorEdge> edges; // u < v, sorted
  Eigen::MatrixXf node_features;
  Eigen::MatrixXf edge_features;
  std::vector<std::uint32_t> membership; // per voxel: supernode id or kDeleted

  // Full-precision descriptors; only present on freshly built minors.
  std::vector<NodeFeatures> descriptors;

  std::size_t deleted_voxels() const;
};

struct BuildStats {
  std::uint64_t pops = 0;  // flood-fill stack pops, equals voxel count
  std::uint64_t fills = 0; // supernodes grown before retention
  std::uint64_t deleted_nodes = 0;
  std::uint64_t deleted_voxels = 0;
};

struct MinorBuild {
  ExpandedTensor tensor;
  GraphMinor minor;
  BuildStats stats;
};

/// Result of growing one supernode.
struct FillResult {
  SupernodeAccumulator<double> stats;
  std::vector<std::uint32_t> members; // voxel indices in pop order
};

inline constexpr std::uint32_t kUnclaimed = 0xFFFFFFFFu;

/// Seed-anchored region growing. A neighbour joins when it is unclaimed and
/// within psi of the seed intensity; a failing neighbour exposes the current
/// voxel (Boundary, one boundary_len unit per edge) and, at distance >= alpha,
/// severs the connecting edge. Neighbours already claimed by another
/// supernode also count as exposure. `claim` holds the fill id per voxel.
FillResult flood_fill_contract(const Volume &volume, ExpandedTensor &tensor, std::span<std::uint32_t> claim,
                               std::size_t seed_voxel, std::uint32_t fill_id, const MinorParams &params,
                               const Connectivity &conn, std::uint64_t &pops);

/// Unordered pairs of distinct retained supernodes joined by at least one
/// grid edge whose midpoint is not EdgeDeleted; sorted, no duplicates.
std::vector<MinorEdge> extract_edges(const ExpandedTensor &tensor, std::span<const std::uint32_t> membership,
                                     const VolumeDims &dims, const Connectivity &conn);

MinorBuild build_minor(const Volume &volume, const MinorParams &params);

} // namespace semir
