#include "semir/minor_io.hpp"

#include <fstream>
#include <limits>

#include "semir/binary_io.hpp"

namespace semir {

namespace {
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream &os, std::uint64_t v) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError("value does not fit SMIN u32 field");
  }
  binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(v));
}

std::uint32_t get_u32(std::istream &is) { return binary::get<std::uint32_t>(is); }
} // namespace

void write_minor(std::ostream &os, const GraphMinor &m) {
  const auto dx = static_cast<std::size_t>(m.node_features.cols());
  const auto df = static_cast<std::size_t>(m.edge_features.cols());
  binary::put_magic(os, "SMIN");
  binary::put<std::uint32_t>(os, kVersion);
  for (auto v : {m.dims.h, m.dims.w, m.dims.d, m.dims.c}) {
    put_u32(os, v);
  }
  put_u32(os, static_cast<std::uint64_t>(m.connectivity));
  put_u32(os, m.nodes.size());
  put_u32(os, m.edges.size());
  put_u32(os, dx);
  put_u32(os, df);
  for (const auto &n : node_feature_names(m.dims.c)) {
    binary::put_string(os, n);
  }
  for (const auto &n : edge_feature_names(m.dims.c)) {
    binary::put_string(os, n);
  }
  for (const auto &n : m.nodes) {
    put_u32(os, n.id);
    for (auto c : n.canonical) {
      put_u32(os, static_cast<std::uint64_t>(c));
    }
    put_u32(os, n.area);
    put_u32(os, n.boundary_len);
  }
  for (Eigen::Index r = 0; r < m.node_features.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.node_features.cols(); ++c) {
      binary::put<float>(os, m.node_features(r, c));
    }
  }
  for (Eigen::Index r = 0; r < m.edge_features.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.edge_features.cols(); ++c) {
      binary::put<float>(os, m.edge_features(r, c));
    }
  }
  for (const auto &[u, v] : m.edges) {
    put_u32(os, u);
    put_u32(os, v);
  }
  for (auto id : m.membership) {
    binary::put<std::uint32_t>(os, id);
  }
}

GraphMinor read_minor(std::istream &is) {
  binary::expect_magic(is, "SMIN");
  binary::expect_version(is, kVersion);
  GraphMinor m;
  m.dims.h = get_u32(is);
  m.dims.w = get_u32(is);
  m.dims.d = get_u32(is);
  m.dims.c = get_u32(is);
  m.connectivity = static_cast<int>(get_u32(is));
  try {
    m.dims.validate();
    Connectivity{m.connectivity};
  } catch (const InvalidParams &e) {
    throw FormatError(std::string("SMIN header: ") + e.what());
  }
  const auto nv = get_u32(is);
  const auto ne = get_u32(is);
  const auto dx = get_u32(is);
  const auto df = get_u32(is);
  if (dx != node_feature_dim(m.dims.c) || df != edge_feature_dim(m.dims.c)) {
    throw FormatError("SMIN feature width does not match channel count");
  }
  const auto node_names = node_feature_names(m.dims.c);
  const auto edge_names = edge_feature_names(m.dims.c);
  for (const auto &want : node_names) {
    if (binary::get_string(is) != want) {
      throw FormatError("SMIN node column layout mismatch");
    }
  }
  for (const auto &want : edge_names) {
    if (binary::get_string(is) != want) {
      throw FormatError("SMIN edge column layout mismatch");
    }
  }
  if (nv > m.dims.voxels()) {
    throw FormatError("SMIN declares more supernodes than voxels");
  }
  m.nodes.resize(nv);
  for (auto &n : m.nodes) {
    n.id = get_u32(is);
    for (auto &c : n.canonical) {
      c = get_u32(is);
    }
    n.area = get_u32(is);
    n.boundary_len = get_u32(is);
  }
  m.node_features.resize(nv, dx);
  for (Eigen::Index r = 0; r < m.node_features.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.node_features.cols(); ++c) {
      m.node_features(r, c) = binary::get<float>(is);
    }
  }
  m.edge_features.resize(ne, df);
  for (Eigen::Index r = 0; r < m.edge_features.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.edge_features.cols(); ++c) {
      m.edge_features(r, c) = binary::get<float>(is);
    }
  }
  m.edges.resize(ne);
  for (auto &[u, v] : m.edges) {
    u = get_u32(is);
    v = get_u32(is);
    if (u >= nv || v >= nv || u == v) {
      throw FormatError("SMIN edge references an invalid supernode");
    }
  }
  m.membership.resize(m.dims.voxels());
  for (auto &id : m.membership) {
    id = get_u32(is);
    if (id != kDeleted && id >= nv) {
      throw FormatError("SMIN membership references an invalid supernode");
    }
  }
  return m;
}

void write_minor(const std::filesystem::path &path, const GraphMinor &minor) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  write_minor(os, minor);
  if (!os) {
    throw FormatError("write failed: " + path.string());
  }
}

GraphMinor read_minor(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw FormatError("cannot open " + path.string());
  }
  return read_minor(is);
}

nlohmann::json minor_to_json(const GraphMinor &m) {
  using nlohmann::json;
  json j;
  j["dims"] = {m.dims.h, m.dims.w, m.dims.d, m.dims.c};
  j["connectivity"] = m.connectivity;
  j["node_columns"] = node_feature_names(m.dims.c);
  j["edge_columns"] = edge_feature_names(m.dims.c);
  json nodes = json::array();
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(m.nodes.size()); ++i) {
    const auto &n = m.nodes[static_cast<std::size_t>(i)];
    std::vector<float> row(m.node_features.row(i).begin(), m.node_features.row(i).end());
    nodes.push_back({{"id", n.id},
                     {"canonical", n.canonical},
                     {"area", n.area},
                     {"boundary_len", n.boundary_len},
                     {"features", row}});
  }
  j["nodes"] = std::move(nodes);
  json edges = json::array();
  for (Eigen::Index e = 0; e < static_cast<Eigen::Index>(m.edges.size()); ++e) {
    std::vector<float> row(m.edge_features.row(e).begin(), m.edge_features.row(e).end());
    const auto &[u, v] = m.edges[static_cast<std::size_t>(e)];
    edges.push_back({{"u", u}, {"v", v}, {"features", row}});
  }
  j["edges"] = std::move(edges);
  json membership = json::array();
  for (auto id : m.membership) {
    membership.push_back(id == kDeleted ? json(nullptr) : json(id));
  }
  j["membership"] = std::move(membership);
  return j;
}

bool same_serialized_content(const GraphMinor &a, const GraphMinor &b) {
  return a.dims == b.dims && a.connectivity == b.connectivity && a.nodes == b.nodes && a.edges == b.edges &&
         a.membership == b.membership && a.node_features.rows() == b.node_features.rows() &&
         a.node_features.cols() == b.node_features.cols() && a.node_features == b.node_features &&
         a.edge_features.rows() == b.edge_features.rows() && a.edge_features.cols() == b.edge_features.cols() &&
         a.edge_features == b.edge_features;
}

NormOrder parse_norm(const std::string &s) {
  if (s == "1" || s == "l1") {
    return NormOrder::L1;
  }
  if (s == "2" || s == "l2") {
    return NormOrder::L2;
  }
  if (s == "inf" || s == "linf") {
    return NormOrder::Linf;
  }
  throw InvalidParams("unknown norm order '" + s + "' (expected 1, 2 or inf)");
}

std::string norm_name(NormOrder n) {
  switch (n) {
  case NormOrder::L1: return "1";
  case NormOrder::L2: return "2";
  case NormOrder::Linf: return "inf";
  }
  return "2";
}

nlohmann::json params_to_json(const MinorParams &p) {
  nlohmann::json j;
  j["psi"] = p.psi;
  j["alpha"] = p.alpha;
  j["beta_min"] = p.beta_min;
  j["beta_max"] = p.beta_max;
  // JSON has no infinities; open bounds are written as null
  j["m_min"] = std::isfinite(p.m_min) ? nlohmann::json(p.m_min) : nlohmann::json(nullptr);
  j["m_max"] = std::isfinite(p.m_max) ? nlohmann::json(p.m_max) : nlohmann::json(nullptr);
  j["norm_order"] = norm_name(p.norm);
  j["connectivity"] = p.connectivity;
  j["traversal_divisor"] = p.traversal_divisor;
  j["seed"] = p.seed;
  j["epsilon"] = p.epsilon;
  return j;
}

MinorParams params_from_json(const nlohmann::json &j) {
  MinorParams p;
  try {
    p.psi = j.at("psi").get<double>();
    p.alpha = j.at("alpha").get<double>();
    p.beta_min = j.value("beta_min", p.beta_min);
    p.beta_max = j.value("beta_max", p.beta_max);
    if (j.contains("m_min") && !j["m_min"].is_null()) {
      p.m_min = j["m_min"].get<double>();
    }
    if (j.contains("m_max") && !j["m_max"].is_null()) {
      p.m_max = j["m_max"].get<double>();
    }
    if (j.contains("norm_order")) {
      const auto &n = j["norm_order"];
      p.norm = parse_norm(n.is_string() ? n.get<std::string>() : std::to_string(n.get<int>()));
    }
    p.connectivity = j.value("connectivity", p.connectivity);
    p.traversal_divisor = j.value("traversal_divisor", p.traversal_divisor);
    p.seed = j.value("seed", p.seed);
    p.epsilon = j.value("epsilon", p.epsilon);
  } catch (const nlohmann::json::exception &e) {
    throw InvalidParams(std::string("bad params JSON: ") + e.what());
  }
  p.validate();
  return p;
}

} // namespace semir
