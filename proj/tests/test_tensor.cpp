#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "semir/error.hpp"
#include "semir/tensor.hpp"
#include "semir/volume_io.hpp"
#include "support.hpp"

using namespace semir;

TEST_CASE("expanded dims") {
  CHECK(expanded_dims({3, 3, 3, 1}) == std::array<std::size_t, 3>{5, 5, 5});
  CHECK(expanded_dims({1, 1, 1, 1}) == std::array<std::size_t, 3>{1, 1, 1});
  CHECK(expanded_dims({240, 240, 155, 4}) == std::array<std::size_t, 3>{479, 479, 309});
  CHECK_THROWS_AS(expanded_dims({0, 3, 3, 1}), InvalidParams);
}

TEST_CASE("node and edge positions") {
  const VolumeDims dims{3, 3, 4, 1};
  CHECK(node_position(dims, {0, 0, 0}) == Coord{0, 0, 0});
  CHECK(node_position(dims, {1, 2, 3}) == Coord{2, 4, 6});
  CHECK(node_position({240, 240, 155, 1}, {239, 239, 154}) == Coord{478, 478, 308});
  CHECK_THROWS_AS(node_position(dims, {3, 0, 0}), IndexError);
  CHECK_THROWS_AS(node_position(dims, {0, -1, 0}), IndexError);

  Coord e{};
  REQUIRE(edge_position(dims, {0, 0, 0}, {1, 0, 0}, e));
  CHECK(e == Coord{1, 0, 0});
  REQUIRE(edge_position(dims, {1, 1, 1}, {0, -1, 0}, e));
  CHECK(e == Coord{2, 1, 2});
  REQUIRE(edge_position(dims, {0, 0, 0}, {1, 1, 0}, e));
  CHECK(e == Coord{1, 1, 0});
  CHECK_FALSE(edge_position(dims, {0, 0, 0}, {-1, 0, 0}, e));
  CHECK_FALSE(edge_position(dims, {2, 2, 3}, {0, 0, 1}, e));
}

TEST_CASE("edge midpoints are symmetric") {
  const VolumeDims dims{3, 4, 2, 1};
  for (std::size_t i = 0; i < dims.voxels(); ++i) {
    const auto v = dims.coord_of(i);
    for (const auto &d : Connectivity(26).offsets()) {
      Coord a{}, b{};
      if (!edge_position(dims, v, d, a)) {
        continue;
      }
      const Coord nb{v[0] + d[0], v[1] + d[1], v[2] + d[2]};
      REQUIRE(edge_position(dims, nb, {-d[0], -d[1], -d[2]}, b));
      CHECK(a == b);
      CHECK_FALSE(ExpandedTensor::is_node(a));
    }
  }
}

TEST_CASE("connectivity stencils") {
  for (int n : {6, 18, 26}) {
    const Connectivity c(n);
    CHECK(c.offsets().size() == std::size_t(n));
    CHECK(std::is_sorted(c.offsets().begin(), c.offsets().end()));
    CHECK(std::set<Coord>(c.offsets().begin(), c.offsets().end()).size() == std::size_t(n));
    CHECK(c.forward_offsets().size() == std::size_t(n / 2));
    CHECK(c.offsets() == testing::stencil(n));
  }
  CHECK_THROWS_AS(Connectivity(10), InvalidParams);
  CHECK_THROWS_AS(Connectivity(4), InvalidParams);
}

TEST_CASE("flag get and set") {
  ExpandedTensor t(VolumeDims{3, 3, 3, 1});
  CHECK(t.size() == 125);
  CHECK_FALSE(t.get({2, 2, 2}, Flag::Merged));
  t.set({2, 2, 2}, Flag::Visited);
  CHECK(t.get({2, 2, 2}, Flag::Visited));
  t.set({2, 2, 2}, Flag::Visited);
  t.set({2, 2, 2}, Flag::Boundary);
  CHECK(t.get({2, 2, 2}, Flag::Visited));
  CHECK(t.get({2, 2, 2}, Flag::Boundary));
  CHECK_FALSE(t.get({2, 2, 2}, Flag::Merged));

  t.set({1, 0, 0}, Flag::EdgeDeleted);
  CHECK(t.get({1, 0, 0}, Flag::EdgeDeleted));
  CHECK_FALSE(t.get({2, 0, 0}, Flag::Visited));

  CHECK_THROWS_AS(t.set({1, 0, 0}, Flag::Visited), ContractViolation);
  CHECK_THROWS_AS(t.get({2, 0, 0}, Flag::EdgeDeleted), ContractViolation);
  CHECK_THROWS_AS(t.set({5, 0, 0}, Flag::Visited), IndexError);
  CHECK(t.parity_violations() == 0);
}

TEST_CASE("flag bits are disjoint within each parity class") {
  const Flag node[] = {Flag::Visited, Flag::Merged, Flag::Boundary, Flag::NodeDeleted, Flag::ParentDiag,
                       Flag::ParentSign};
  const Flag edge[] = {Flag::EdgeDeleted, Flag::Link0, Flag::Link1, Flag::Link2};
  std::uint8_t seen = 0;
  for (auto f : node) {
    CHECK((seen & flag_bit(f)) == 0);
    seen |= flag_bit(f);
  }
  CHECK(seen == kNodeBits);
  seen = 0;
  for (auto f : edge) {
    CHECK((seen & flag_bit(f)) == 0);
    seen |= flag_bit(f);
  }
  CHECK(seen == kEdgeBits);
  CHECK(flag_bit(Flag::Visited) == 1);
  CHECK(flag_bit(Flag::Merged) == 2);
  CHECK(flag_bit(Flag::EdgeDeleted) == 4);
  CHECK(flag_bit(Flag::Boundary) == 8);
  CHECK(flag_bit(Flag::NodeDeleted) == 16);
}

TEST_CASE("contraction links recover exactly the marked tree edges") {
  // Random spanning forests under 26-connectivity, one parent per voxel.
  const VolumeDims dims{4, 5, 3, 1};
  const auto offsets = Connectivity(26).offsets();
  for (int trial = 0; trial < 20; ++trial) {
    auto rng = make_rng(trial, "forest");
    ExpandedTensor t(dims);
    std::vector<char> in(dims.voxels(), 0);
    std::set<std::pair<std::size_t, std::size_t>> marked;
    std::vector<std::size_t> order(dims.voxels());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    in[order[0]] = 1;
    for (int round = 0; round < 200; ++round) {
      for (auto p : order) {
        if (!in[p]) {
          continue;
        }
        const auto pc = dims.coord_of(p);
        const auto &d = offsets[std::uniform_int_distribution<std::size_t>(0, offsets.size() - 1)(rng)];
        const Coord qc{pc[0] + d[0], pc[1] + d[1], pc[2] + d[2]};
        if (!dims.contains(qc) || in[dims.voxel_index(qc)]) {
          continue;
        }
        const auto q = dims.voxel_index(qc);
        in[q] = 1;
        mark_contraction(t, pc, d);
        marked.insert({std::min(p, q), std::max(p, q)});
      }
    }
    std::size_t hits = 0;
    for (std::size_t p = 0; p < dims.voxels(); ++p) {
      const auto pc = dims.coord_of(p);
      for (const auto &d : offsets) {
        const Coord qc{pc[0] + d[0], pc[1] + d[1], pc[2] + d[2]};
        if (!dims.contains(qc)) {
          continue;
        }
        const auto q = dims.voxel_index(qc);
        const bool expect = marked.count({std::min(p, q), std::max(p, q)}) > 0;
        CHECK(has_contraction(t, pc, d) == expect);
        hits += expect;
      }
    }
    CHECK(hits == 2 * marked.size());
    CHECK(t.parity_violations() == 0);
  }
}

TEST_CASE("volume, label and tensor files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "semir_test_tensor";
  std::filesystem::create_directories(dir);
  auto rng = make_rng(7, "io");
  const auto vol = testing::random_piecewise({5, 4, 3, 2}, 4, 3.0, rng);
  write_volume(dir / "v.svol", vol);
  const auto back = read_volume(dir / "v.svol");
  CHECK(back.dims == vol.dims);
  CHECK(back.data == vol.data);

  LabelMap lab(VolumeDims{5, 4, 3, 1});
  for (std::size_t i = 0; i < lab.labels.size(); ++i) {
    lab.labels[i] = static_cast<std::uint16_t>(i % 3);
  }
  write_labels(dir / "l.svol", lab);
  const auto lab2 = read_labels(dir / "l.svol");
  CHECK(lab2.labels == lab.labels);
  CHECK(lab2.dims == lab.dims);
  CHECK_THROWS_AS(read_labels(dir / "v.svol"), FormatError);

  lab.labels[0] = 700;
  write_labels(dir / "l16.svol", lab);
  CHECK(read_labels(dir / "l16.svol").labels == lab.labels);

  ExpandedTensor t(VolumeDims{5, 4, 3, 1});
  t.set({2, 2, 2}, Flag::Boundary);
  t.set({1, 0, 0}, Flag::EdgeDeleted);
  write_tensor(dir / "t.sexp", t);
  CHECK(read_tensor(dir / "t.sexp") == t);
  CHECK(std::filesystem::file_size(dir / "t.sexp") == 4 + 4 + 12 + t.size());

  std::ofstream(dir / "junk.svol") << "NOPE";
  CHECK_THROWS_AS(read_volume(dir / "junk.svol"), FormatError);
  std::filesystem::remove_all(dir);
}
