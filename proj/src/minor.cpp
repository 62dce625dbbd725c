#include "semir/minor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "semir/error.hpp"
#include "semir/random.hpp"

namespace semir {

void MinorParams::validate() const {
  if (!(psi >= 0.0) || !(psi <= alpha)) {
    throw InvalidParams("thresholds must satisfy 0 <= psi <= alpha");
  }
  if (beta_min < 1 || beta_min > beta_max) {
    throw InvalidParams("retention bounds must satisfy 1 <= beta_min <= beta_max");
  }
  if (!(m_min <= m_max)) {
    throw InvalidParams("intensity bounds must satisfy m_min <= m_max");
  }
  if (!(epsilon > 0.0)) {
    throw InvalidParams("epsilon must be positive");
  }
  Connectivity{connectivity};
}

double intensity_distance(std::span<const float> a, std::span<const float> b, NormOrder norm) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = std::abs(double(a[i]) - double(b[i]));
    switch (norm) {
    case NormOrder::L1: acc += diff; break;
    case NormOrder::L2: acc += diff * diff; break;
    case NormOrder::Linf: acc = std::max(acc, diff); break;
    }
  }
  return norm == NormOrder::L2 ? std::sqrt(acc) : acc;
}

std::size_t get_coprime(std::size_t n, std::size_t d) {
  if (n <= 2) {
    return 1;
  }
  const std::size_t s = std::clamp<std::size_t>(n / std::max<std::size_t>(d, 1), 1, n - 1);
  for (std::size_t i = s; i <= n - 1; ++i) {
    if (std::gcd(n, i) == 1) {
      return i;
    }
  }
  for (std::size_t i = s - 1; i >= 1; --i) {
    if (std::gcd(n, i) == 1) {
      return i;
    }
  }
  return 1;
}

TraversalPlan make_traversal(const VolumeDims &dims, const MinorParams &params) {
  TraversalPlan plan;
  auto rng = make_rng(params.seed, "traversal");
  const std::size_t extent[3] = {dims.h, dims.w, dims.d};
  for (int a = 0; a < 3; ++a) {
    std::uniform_int_distribution<std::int64_t> pick(0, static_cast<std::int64_t>(extent[a]) - 1);
    plan.start[a] = pick(rng);
    plan.steps[a] = get_coprime(extent[a], params.traversal_divisor);
  }
  return plan;
}

Retention retention_check(std::uint64_t area, double mean_intensity, const MinorParams &params) {
  const bool keep = area >= params.beta_min && area <= params.beta_max && mean_intensity >= params.m_min &&
                    mean_intensity <= params.m_max;
  return keep ? Retention::Keep : Retention::Delete;
}

std::size_t GraphMinor::deleted_voxels() const {
  return static_cast<std::size_t>(std::count(membership.begin(), membership.end(), kDeleted));
}

namespace {

// Neighbour stencil with precomputed index strides for both grids.
struct Stencil {
  struct Entry {
    Coord delta;
    std::int64_t voxel_stride;
    std::int64_t edge_stride; // expanded-grid offset from node to edge midpoint
  };
  std::vector<Entry> entries;

  Stencil(const VolumeDims &dims, const Connectivity &conn) {
    const auto w = static_cast<std::int64_t>(dims.w);
    const auto d = static_cast<std::int64_t>(dims.d);
    const auto ew = 2 * w - 1;
    const auto ed = 2 * d - 1;
    for (const auto &dl : conn.offsets()) {
      entries.push_back({dl, (dl[0] * w + dl[1]) * d + dl[2], (dl[0] * ew + dl[1]) * ed + dl[2]});
    }
  }
};

std::size_t node_index(const ExpandedTensor &t, const Coord &v) { return t.index({2 * v[0], 2 * v[1], 2 * v[2]}); }

} // namespace

FillResult flood_fill_contract(const Volume &volume, ExpandedTensor &tensor, std::span<std::uint32_t> claim,
                               std::size_t seed_voxel, std::uint32_t fill_id, const MinorParams &params,
                               const Connectivity &conn, std::uint64_t &pops) {
  const auto &dims = volume.dims;
  const Stencil stencil(dims, conn);
  const auto bit_visited = flag_bit(Flag::Visited);
  const auto bit_merged = flag_bit(Flag::Merged);
  const auto bit_boundary = flag_bit(Flag::Boundary);
  const auto bit_cut = flag_bit(Flag::EdgeDeleted);

  const Coord seed = dims.coord_of(seed_voxel);
  const auto seed_node = node_index(tensor, seed);
  if (tensor.test(seed_node, bit_visited) || claim[seed_voxel] != kUnclaimed) {
    throw ContractViolation("flood fill seeded on an already visited voxel");
  }
  const auto seed_intensity = volume.intensity(seed_voxel);

  FillResult out;
  out.stats.reset(seed, seed_intensity);
  claim[seed_voxel] = fill_id;
  tensor.mark(seed_node, bit_merged);

  std::vector<std::size_t> stack{seed_voxel};
  while (!stack.empty()) {
    const std::size_t p = stack.back();
    stack.pop_back();
    ++pops;
    const Coord pc = dims.coord_of(p);
    const auto p_node = node_index(tensor, pc);
    if (tensor.test(p_node, bit_visited)) {
      continue;
    }
    tensor.mark(p_node, bit_visited);
    out.members.push_back(static_cast<std::uint32_t>(p));
    out.stats.add(pc, volume.intensity(p));

    for (const auto &e : stencil.entries) {
      const Coord qc{pc[0] + e.delta[0], pc[1] + e.delta[1], pc[2] + e.delta[2]};
      if (!dims.contains(qc)) {
        continue; // volume border: not an exposure
      }
      const auto q = static_cast<std::size_t>(static_cast<std::int64_t>(p) + e.voxel_stride);
      const auto owner = claim[q];
      if (owner == fill_id) {
        continue;
      }
      if (owner != kUnclaimed) {
        tensor.mark(p_node, bit_boundary);
        out.stats.add_exposure();
        continue;
      }
      const double diff = intensity_distance(seed_intensity, volume.intensity(q), params.norm);
      if (diff <= params.psi) {
        claim[q] = fill_id;
        tensor.mark(node_index(tensor, qc), bit_merged);
        mark_contraction(tensor, pc, e.delta);
        stack.push_back(q);
      } else {
        if (diff >= params.alpha) {
          tensor.mark(static_cast<std::size_t>(static_cast<std::int64_t>(p_node) + e.edge_stride), bit_cut);
        }
        tensor.mark(p_node, bit_boundary);
        out.stats.add_exposure();
      }
    }
  }
  return out;
}

std::vector<MinorEdge> extract_edges(const ExpandedTensor &tensor, std::span<const std::uint32_t> membership,
                                     const VolumeDims &dims, const Connectivity &conn) {
  const auto bit_cut = flag_bit(Flag::EdgeDeleted);
  const auto bit_deleted = flag_bit(Flag::NodeDeleted);
  std::vector<MinorEdge> edges;
  for (std::size_t p = 0; p < dims.voxels(); ++p) {
    const Coord pc = dims.coord_of(p);
    const auto u = membership[p];
    const bool flagged_deleted = tensor.test(node_index(tensor, pc), bit_deleted);
    if ((u == kDeleted) != flagged_deleted) {
      throw ContractViolation("membership disagrees with NodeDeleted flag at voxel " + std::to_string(p));
    }
    if (u == kDeleted) {
      continue;
    }
    for (const auto &dl : conn.forward_offsets()) {
      const Coord qc{pc[0] + dl[0], pc[1] + dl[1], pc[2] + dl[2]};
      if (!dims.contains(qc)) {
        continue;
      }
      const auto v = membership[dims.voxel_index(qc)];
      if (v == kDeleted || v == u) {
        continue;
      }
      const Coord mid{2 * pc[0] + dl[0], 2 * pc[1] + dl[1], 2 * pc[2] + dl[2]};
      if (tensor.test(tensor.index(mid), bit_cut)) {
        continue;
      }
      edges.emplace_back(std::min(u, v), std::max(u, v));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

MinorBuild build_minor(const Volume &volume, const MinorParams &params) {
  volume.validate();
  params.validate();
  const Connectivity conn(params.connectivity);
  const auto &dims = volume.dims;

  MinorBuild out{ExpandedTensor(dims), {}, {}};
  auto &tensor = out.tensor;
  auto &minor = out.minor;
  minor.dims = dims;
  minor.connectivity = params.connectivity;

  std::vector<std::uint32_t> claim(dims.voxels(), kUnclaimed);
  std::vector<std::uint32_t> fill_to_node; // fill id -> retained id or kDeleted
  const auto bit_visited = flag_bit(Flag::Visited);
  const auto bit_deleted = flag_bit(Flag::NodeDeleted);

  for_each_in_traversal(dims, make_traversal(dims, params), [&](std::size_t v) {
    const Coord vc = dims.coord_of(v);
    if (tensor.test(node_index(tensor, vc), bit_visited)) {
      return;
    }
    const auto fill_id = static_cast<std::uint32_t>(fill_to_node.size());
    auto fill = flood_fill_contract(volume, tensor, claim, v, fill_id, params, conn, out.stats.pops);
    ++out.stats.fills;
    const double mean = fill.stats.mean_intensity().mean();
    if (retention_check(fill.stats.area(), mean, params) == Retention::Keep) {
      const auto id = static_cast<std::uint32_t>(minor.nodes.size());
      fill_to_node.push_back(id);
      minor.nodes.push_back({id, fill.stats.canonical(), fill.stats.area(), fill.stats.boundary_len()});
      minor.descriptors.push_back(finalize_node_features(fill.stats, id, params.epsilon));
    } else {
      fill_to_node.push_back(kDeleted);
      ++out.stats.deleted_nodes;
      out.stats.deleted_voxels += fill.members.size();
      for (auto m : fill.members) {
        tensor.mark(node_index(tensor, dims.coord_of(m)), bit_deleted);
      }
    }
  });

  minor.membership.resize(dims.voxels());
  std::transform(claim.begin(), claim.end(), minor.membership.begin(),
                 [&](std::uint32_t f) { return fill_to_node.at(f); });

  minor.edges = extract_edges(tensor, minor.membership, dims, conn);
  auto mats = assemble_feature_matrices(minor.descriptors, minor.edges, dims, params.epsilon);
  minor.node_features = std::move(mats.nodes);
  minor.edge_features = std::move(mats.edges);
  return out;
}

} // namespace semir
