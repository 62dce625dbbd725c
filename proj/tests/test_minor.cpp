#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <numeric>
#include <sstream>

#include "semir/error.hpp"
#include "semir/minor.hpp"
#include "semir/minor_io.hpp"
#include "support.hpp"

using namespace semir;
using testing::half_split;
using testing::make_volume;

namespace {

MinorParams params(double psi, double alpha, std::uint64_t bmax = 64) {
  MinorParams p;
  p.psi = psi;
  p.alpha = alpha;
  p.beta_max = bmax;
  return p;
}

} // namespace

TEST_CASE("get_coprime") {
  CHECK(get_coprime(10, 3) == 3);
  CHECK(get_coprime(2, 1) == 1);
  CHECK(get_coprime(12, 2) == 7);
  CHECK(get_coprime(1, 0) == 1);
  for (std::size_t n = 1; n < 150; ++n) {
    for (std::size_t d = 0; d < 8; ++d) {
      const auto s = get_coprime(n, d);
      CHECK(std::gcd(n, s) == 1);
      CHECK(s >= 1);
      CHECK(s <= std::max<std::size_t>(n - 1, 1));
      CHECK(s == testing::coprime_step(n, d));
    }
  }
}

TEST_CASE("traversal visits every voxel once") {
  for (std::uint64_t seed : {1u, 42u, 99u}) {
    const VolumeDims dims{7, 12, 5, 1};
    MinorParams p;
    p.seed = seed;
    std::vector<int> hits(dims.voxels(), 0);
    std::vector<std::size_t> order;
    for_each_in_traversal(dims, make_traversal(dims, p), [&](std::size_t v) {
      ++hits[v];
      order.push_back(v);
    });
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    CHECK(order == testing::traversal_order(dims, p));
  }
}

TEST_CASE("params validation") {
  CHECK_NOTHROW(params(0, 0).validate());
  CHECK_THROWS_AS(params(5, 4).validate(), InvalidParams);
  CHECK_THROWS_AS(params(-1, 4).validate(), InvalidParams);
  auto p = params(1, 2);
  p.beta_min = 0;
  CHECK_THROWS_AS(p.validate(), InvalidParams);
  p.beta_min = 10;
  p.beta_max = 5;
  CHECK_THROWS_AS(p.validate(), InvalidParams);
  p = params(1, 2);
  p.m_min = 3;
  p.m_max = 2;
  CHECK_THROWS_AS(p.validate(), InvalidParams);
  p = params(1, 2);
  p.connectivity = 10;
  CHECK_THROWS_AS(p.validate(), InvalidParams);
  CHECK_THROWS_AS(build_minor(testing::uniform_volume(2, 1.0f), p), InvalidParams);
}

TEST_CASE("retention bounds are inclusive") {
  auto p = params(0, 0, 10);
  CHECK(retention_check(1, 0.0, p) == Retention::Keep);
  CHECK(retention_check(10, 0.0, p) == Retention::Keep);
  CHECK(retention_check(11, 0.0, p) == Retention::Delete);
  p.m_min = 0;
  p.m_max = 255;
  CHECK(retention_check(3, 300.0, p) == Retention::Delete);
  CHECK(retention_check(3, 255.0, p) == Retention::Keep);
  CHECK(retention_check(3, -0.5, p) == Retention::Delete);
}

TEST_CASE("uniform volume collapses to one supernode") {
  const auto b = build_minor(testing::uniform_volume(4, 7.0f), params(0, 100));
  REQUIRE(b.minor.nodes.size() == 1);
  CHECK(b.minor.nodes[0].area == 64);
  CHECK(b.minor.nodes[0].boundary_len == 0);
  CHECK(b.minor.nodes[0].canonical == Coord{0, 0, 0});
  CHECK(b.minor.edges.empty());
  CHECK(b.stats.pops == 64);
}

TEST_CASE("half split volume") {
  const auto vol = half_split(4, 0.0f, 100.0f);
  SUBCASE("cut edges") {
    const auto b = build_minor(vol, params(10, 50));
    REQUIRE(b.minor.nodes.size() == 2);
    CHECK(b.minor.nodes[0].area == 32);
    CHECK(b.minor.nodes[1].area == 32);
    CHECK(b.minor.nodes[0].boundary_len == 16);
    CHECK(b.minor.edges.empty());
  }
  SUBCASE("kept edge") {
    const auto b = build_minor(vol, params(10, 200));
    REQUIRE(b.minor.nodes.size() == 2);
    CHECK(b.minor.edges == std::vector<MinorEdge>{{0, 1}});
    CHECK(b.minor.edge_features.rows() == 1);
  }
}

TEST_CASE("stripes connect only neighbours") {
  const auto vol = make_volume({6, 3, 3, 1}, [](const Coord &c) { return float(50 * (c[0] / 2)); });
  const auto b = build_minor(vol, params(10, 200));
  REQUIRE(b.minor.nodes.size() == 3);
  // ids follow discovery order; map them back to stripes
  std::vector<std::uint32_t> stripe_of(3);
  for (int s = 0; s < 3; ++s) {
    stripe_of[s] = b.minor.membership[b.minor.dims.voxel_index({2 * s, 0, 0})];
  }
  std::vector<MinorEdge> want{{std::min(stripe_of[0], stripe_of[1]), std::max(stripe_of[0], stripe_of[1])},
                              {std::min(stripe_of[1], stripe_of[2]), std::max(stripe_of[1], stripe_of[2])}};
  std::sort(want.begin(), want.end());
  CHECK(b.minor.edges == want);
}

TEST_CASE("fully cut volume has no edges") {
  const auto vol = make_volume({4, 4, 4, 1}, [](const Coord &c) { return float(10 * ((c[0] + c[1] + c[2]) % 2)); });
  const auto b = build_minor(vol, params(1, 5));
  CHECK(b.minor.nodes.size() == 64);
  CHECK(b.minor.edges.empty());
}

TEST_CASE("flood fill details") {
  SUBCASE("isolated bright voxel") {
    const auto vol = make_volume({3, 3, 3, 1}, [](const Coord &c) { return c == Coord{1, 1, 1} ? 200.0f : 0.0f; });
    ExpandedTensor t(vol.dims);
    std::vector<std::uint32_t> claim(vol.dims.voxels(), kUnclaimed);
    std::uint64_t pops = 0;
    const auto center = vol.dims.voxel_index({1, 1, 1});
    const auto r = flood_fill_contract(vol, t, claim, center, 0, params(10, 50), Connectivity(6), pops);
    CHECK(r.stats.area() == 1);
    CHECK(r.stats.boundary_len() == 6);
    CHECK(pops == 1);
    CHECK(t.get({2, 2, 2}, Flag::Boundary));
    CHECK(t.get({2, 2, 2}, Flag::Visited));
    CHECK(t.get({1, 2, 2}, Flag::EdgeDeleted));
    CHECK(t.get({2, 2, 3}, Flag::EdgeDeleted));
  }
  SUBCASE("uniform region exposure counts exterior edges") {
    // 2x2x2 block of 5 inside a zero 4^3 volume
    const auto vol = make_volume({4, 4, 4, 1}, [](const Coord &c) {
      return c[0] >= 1 && c[0] <= 2 && c[1] >= 1 && c[1] <= 2 && c[2] >= 1 && c[2] <= 2 ? 5.0f : 0.0f;
    });
    ExpandedTensor t(vol.dims);
    std::vector<std::uint32_t> claim(vol.dims.voxels(), kUnclaimed);
    std::uint64_t pops = 0;
    const auto r =
        flood_fill_contract(vol, t, claim, vol.dims.voxel_index({1, 1, 1}), 0, params(0, 100), Connectivity(6), pops);
    CHECK(r.stats.area() == 8);
    CHECK(r.stats.boundary_len() == 24);
  }
  SUBCASE("growth is anchored to the seed") {
    // ramp 0, 5, 10, 15 along depth; neighbours are within 5 of each other
    const auto vol = make_volume({1, 1, 4, 1}, [](const Coord &c) { return float(5 * c[2]); });
    ExpandedTensor t(vol.dims);
    std::vector<std::uint32_t> claim(vol.dims.voxels(), kUnclaimed);
    std::uint64_t pops = 0;
    const auto r = flood_fill_contract(vol, t, claim, 0, 0, params(6, 20), Connectivity(6), pops);
    CHECK(r.members == std::vector<std::uint32_t>{0, 1});
    CHECK(r.stats.boundary_len() == 1);
    CHECK(claim[2] == kUnclaimed);
  }
  SUBCASE("reseeding a visited voxel is a contract violation") {
    const auto vol = testing::uniform_volume(2, 1.0f);
    ExpandedTensor t(vol.dims);
    std::vector<std::uint32_t> claim(vol.dims.voxels(), kUnclaimed);
    std::uint64_t pops = 0;
    flood_fill_contract(vol, t, claim, 0, 0, params(0, 0), Connectivity(6), pops);
    CHECK_THROWS_AS(flood_fill_contract(vol, t, claim, 3, 1, params(0, 0), Connectivity(6), pops),
                    ContractViolation);
  }
}

TEST_CASE("node deletion") {
  // 2x2x2 bright cube inside a dark 4^3 volume; drop everything below 10 voxels
  const auto vol = make_volume({4, 4, 4, 1}, [](const Coord &c) {
    return c[0] < 2 && c[1] < 2 && c[2] < 2 ? 100.0f : 0.0f;
  });
  auto p = params(10, 50);
  p.beta_min = 10;
  auto b = build_minor(vol, p);
  REQUIRE(b.minor.nodes.size() == 1);
  CHECK(b.minor.nodes[0].area == 56);
  CHECK(b.minor.deleted_voxels() == 8);
  CHECK(b.stats.deleted_nodes == 1);
  CHECK(b.tensor.get({0, 0, 0}, Flag::NodeDeleted));
  CHECK_FALSE(b.tensor.get({6, 6, 6}, Flag::NodeDeleted));
  CHECK(b.minor.edges.empty());

  p = params(10, 50);
  p.m_max = 50;
  b = build_minor(vol, p);
  REQUIRE(b.minor.nodes.size() == 1);
  CHECK(b.minor.deleted_voxels() == 8);

  p.m_max = -1;
  p.m_min = -2;
  b = build_minor(vol, p);
  CHECK(b.minor.nodes.empty());
  CHECK(b.minor.deleted_voxels() == 64);
  CHECK(b.minor.node_features.rows() == 0);
  CHECK(b.minor.node_features.cols() == 13);
  CHECK(b.minor.edge_features.cols() == 9);
}

TEST_CASE("edge extraction checks membership against tensor flags") {
  const auto b = build_minor(half_split(4, 0, 100), params(10, 200));
  auto membership = b.minor.membership;
  membership[0] = kDeleted;
  CHECK_THROWS_AS(extract_edges(b.tensor, membership, b.minor.dims, Connectivity(6)), ContractViolation);
  CHECK(extract_edges(b.tensor, b.minor.membership, b.minor.dims, Connectivity(6)) == b.minor.edges);
}

TEST_CASE("random volumes agree with the brute-force oracle") {
  auto rng = make_rng(2024, "minor_oracle");
  for (int trial = 0; trial < 40; ++trial) {
    const VolumeDims dims{std::uniform_int_distribution<std::size_t>(1, 8)(rng),
                          std::uniform_int_distribution<std::size_t>(1, 8)(rng),
                          std::uniform_int_distribution<std::size_t>(1, 8)(rng),
                          std::uniform_int_distribution<std::size_t>(1, 2)(rng)};
    const auto vol = testing::random_piecewise(dims, 5, 6.0, rng);
    const auto p = testing::random_params(rng, dims.voxels());
    CAPTURE(trial);
    const auto b = build_minor(vol, p);
    const auto o = testing::brute_force_minor(vol, p);
    CHECK(b.minor.membership == o.membership);
    REQUIRE(b.minor.nodes.size() == o.area.size());
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < o.area.size(); ++i) {
      CHECK(b.minor.nodes[i].area == o.area[i]);
      CHECK(b.minor.nodes[i].boundary_len == o.boundary_len[i]);
      total += b.minor.nodes[i].area;
    }
    CHECK(total + b.minor.deleted_voxels() == dims.voxels());
    CHECK(b.stats.pops == dims.voxels());
    CHECK(testing::disconnected_supernodes(b.minor) == 0);
    CHECK(b.tensor.parity_violations() == 0);
    // every member stays within psi of its seed
    for (std::size_t v = 0; v < dims.voxels(); ++v) {
      const auto id = b.minor.membership[v];
      if (id != kDeleted) {
        CHECK(testing::distance(vol, o.seed[id], v, p.norm) <= p.psi);
      }
    }
    // edges: unique, ordered, between live ids, each backed by a grid edge
    for (std::size_t e = 0; e < b.minor.edges.size(); ++e) {
      const auto [u, w] = b.minor.edges[e];
      CHECK(u < w);
      CHECK(w < b.minor.nodes.size());
      if (e) {
        CHECK(b.minor.edges[e - 1] < b.minor.edges[e]);
      }
    }
  }
}

TEST_CASE("build is deterministic and SMIN round trips") {
  auto rng = make_rng(5, "smin");
  const auto vol = testing::random_piecewise({8, 7, 6, 2}, 6, 4.0, rng);
  auto p = params(12, 30, 1000);
  p.connectivity = 18;
  const auto a = build_minor(vol, p);
  const auto b = build_minor(vol, p);
  std::ostringstream sa, sb;
  write_minor(sa, a.minor);
  write_minor(sb, b.minor);
  CHECK(sa.str() == sb.str());
  CHECK(a.tensor == b.tensor);

  std::istringstream in(sa.str());
  const auto back = read_minor(in);
  CHECK(same_serialized_content(back, a.minor));
  std::ostringstream again;
  write_minor(again, back);
  CHECK(again.str() == sa.str());

  auto truncated = sa.str();
  truncated.resize(truncated.size() - 3);
  std::istringstream bad(truncated);
  CHECK_THROWS_AS(read_minor(bad), FormatError);

  const auto j = minor_to_json(a.minor);
  CHECK(j["nodes"].size() == a.minor.nodes.size());
  CHECK(j["edges"].size() == a.minor.edges.size());
  CHECK(j["node_columns"].size() == node_feature_dim(2));
  CHECK(j["membership"].size() == vol.dims.voxels());
}

TEST_CASE("params JSON round trip") {
  auto p = params(3.5, 9.25, 500);
  p.m_min = 1;
  p.norm = NormOrder::Linf;
  p.connectivity = 26;
  CHECK(params_from_json(params_to_json(p)) == p);
  const auto q = params(1, 2);
  CHECK(params_from_json(params_to_json(q)) == q);
  CHECK_THROWS_AS(params_from_json(nlohmann::json{{"psi", 3}, {"alpha", 1}}), InvalidParams);
  CHECK_THROWS_AS(params_from_json(nlohmann::json{{"alpha", 1}}), InvalidParams);
  CHECK_THROWS_AS(parse_norm("3"), InvalidParams);
}
