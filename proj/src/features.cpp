#include "semir/features.hpp"

namespace semir {

std::vector<std::string> node_feature_names(std::size_t channels) {
  std::vector<std::string> out{"area",   "boundary_len", "compactness", "elongation", "axis_j",
                               "axis_k", "axis_l",       "canon_j",     "canon_k",    "canon_l"};
  for (std::size_t i = 0; i < channels; ++i) {
    out.push_back("std_c" + std::to_string(i));
  }
  for (std::size_t i = 0; i < channels; ++i) {
    out.push_back("mean_c" + std::to_string(i));
  }
  for (std::size_t i = 0; i < channels; ++i) {
    for (std::size_t j = i; j < channels; ++j) {
      out.push_back("cov_" + std::to_string(i) + "_" + std::to_string(j));
    }
  }
  return out;
}

std::vector<std::string> edge_feature_names(std::size_t channels) {
  std::vector<std::string> out{"logratio_area", "logratio_boundary_len", "logratio_compactness",
                               "logratio_elongation", "dmu_j", "dmu_k", "dmu_l", "cos_theta"};
  for (std::size_t i = 0; i < channels; ++i) {
    out.push_back("dI_c" + std::to_string(i));
  }
  return out;
}

FeatureMatrices assemble_feature_matrices(std::span<const NodeFeatures> nodes, std::span<const MinorEdge> edges,
                                          const VolumeDims &dims, double epsilon) {
  FeatureMatrices out;
  out.nodes.resize(static_cast<Eigen::Index>(nodes.size()), static_cast<Eigen::Index>(node_feature_dim(dims.c)));
  out.edges.resize(static_cast<Eigen::Index>(edges.size()), static_cast<Eigen::Index>(edge_feature_dim(dims.c)));
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id != i) {
      throw ContractViolation("node features must be indexed by supernode id");
    }
    write_node_row(nodes[i], dims, out.nodes.row(static_cast<Eigen::Index>(i)));
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [u, v] = edges[e];
    if (u >= nodes.size() || v >= nodes.size()) {
      throw ContractViolation("edge references a missing supernode");
    }
    write_edge_row(compute_edge_features(nodes[u], nodes[v], epsilon), out.edges.row(static_cast<Eigen::Index>(e)));
  }
  return out;
}

} // namespace semir
