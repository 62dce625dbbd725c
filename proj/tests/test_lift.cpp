#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "semir/error.hpp"
#include "semir/lift.hpp"
#include "support.hpp"

using namespace semir;

TEST_CASE("half split lift") {
  MinorParams p;
  p.psi = 10;
  p.alpha = 50;
  const auto b = build_minor(testing::half_split(4, 0, 100), p);
  REQUIRE(b.minor.nodes.size() == 2);
  // predict 1 for whichever supernode owns the left half
  const auto left = b.minor.membership[0];
  std::vector<std::uint16_t> pred(2, 0);
  pred[left] = 1;
  const auto out = lift(b.minor, pred);
  for (std::size_t v = 0; v < out.labels.size(); ++v) {
    CHECK(out.labels[v] == (b.minor.dims.coord_of(v)[0] < 2 ? 1 : 0));
  }
  CHECK(lift_tensor_walk(b.minor, b.tensor, pred).labels == out.labels);
  CHECK_THROWS_AS(lift(b.minor, std::vector<std::uint16_t>{1}), InvalidParams);
}

TEST_CASE("all supernodes deleted lifts to background") {
  MinorParams p;
  p.psi = 10;
  p.alpha = 50;
  p.beta_max = 5;
  const auto b = build_minor(testing::half_split(4, 0, 100), p);
  CHECK(b.minor.nodes.empty());
  const auto out = lift(b.minor, {});
  CHECK(std::all_of(out.labels.begin(), out.labels.end(), [](auto l) { return l == 0; }));
  CHECK(lift(b.minor, {}, 3).labels == std::vector<std::uint16_t>(64, 3));
  CHECK(lift_tensor_walk(b.minor, b.tensor, {}).labels == out.labels);
}

TEST_CASE("voxel dice") {
  LabelMap a(VolumeDims{4, 1, 1, 1}), g(VolumeDims{4, 1, 1, 1});
  a.labels = {1, 1, 0, 0};
  g.labels = {1, 1, 0, 0};
  CHECK(voxel_dice(a, g, 1) == 1.0);
  CHECK(voxel_dice(a, g, 2) == 1.0);
  g.labels = {0, 1, 1, 0};
  CHECK(voxel_dice(a, g, 1) == 0.5);
  CHECK_THROWS_AS(voxel_dice(a, LabelMap(VolumeDims{2, 1, 1, 1}), 1), InvalidParams);
}

TEST_CASE("majority labels") {
  MinorParams p;
  p.psi = 300;
  p.alpha = 300;
  const auto b = build_minor(testing::uniform_volume(2, 1.0f), p);
  LabelMap l(VolumeDims{2, 2, 2, 1});
  l.labels = {1, 1, 1, 1, 0, 0, 0, 0};
  CHECK(majority_labels(b.minor, l) == std::vector<std::uint16_t>{0}); // tie
  l.labels[4] = 1;
  CHECK(majority_labels(b.minor, l) == std::vector<std::uint16_t>{1});
}

TEST_CASE("membership and tensor walk agree; lifting is exact") {
  auto rng = make_rng(77, "lift");
  for (int trial = 0; trial < 40; ++trial) {
    const VolumeDims dims{std::uniform_int_distribution<std::size_t>(1, 10)(rng),
                          std::uniform_int_distribution<std::size_t>(1, 10)(rng),
                          std::uniform_int_distribution<std::size_t>(1, 10)(rng), 1};
    const auto vol = testing::random_piecewise(dims, 6, 10.0, rng);
    const auto p = testing::random_params(rng, dims.voxels());
    const auto b = build_minor(vol, p);
    std::vector<std::uint16_t> pred(b.minor.nodes.size());
    for (auto &x : pred) {
      x = static_cast<std::uint16_t>(1 + rng() % 4);
    }
    const auto a = lift(b.minor, pred);
    CHECK(lift_tensor_walk(b.minor, b.tensor, pred).labels == a.labels);
    for (std::size_t v = 0; v < dims.voxels(); ++v) {
      const auto id = b.minor.membership[v];
      CHECK(a.labels[v] == (id == kDeleted ? 0 : pred[id]));
    }
    // majority extraction of the lifted map returns the predictions
    CHECK(majority_labels(b.minor, a) == pred);
  }
}
