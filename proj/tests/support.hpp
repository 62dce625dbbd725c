#pragma once

// Builders and brute-force oracles shared by the unit tests and the
// acceptance runner. Nothing here calls into the flood fill.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "semir/minor.hpp"
#include "semir/random.hpp"

namespace semir::testing {

inline Volume make_volume(VolumeDims dims, const std::function<float(const Coord &)> &fn) {
  Volume v(dims);
  for (std::size_t i = 0; i < dims.voxels(); ++i) {
    v.at(i) = fn(dims.coord_of(i));
  }
  return v;
}

inline Volume uniform_volume(std::size_t n, float value) {
  return make_volume({n, n, n, 1}, [value](const Coord &) { return value; });
}

// Left half (j < n/2) at lo, right half at hi.
inline Volume half_split(std::size_t n, float lo, float hi) {
  return make_volume({n, n, n, 1}, [=](const Coord &c) { return c[0] < std::int64_t(n / 2) ? lo : hi; });
}

// Piecewise-constant volume: nearest of `regions` random sites, levels in
// [0, 255], plus Gaussian noise.
inline Volume random_piecewise(VolumeDims dims, int regions, double noise, Rng &rng) {
  std::uniform_int_distribution<std::int64_t> pj(0, std::int64_t(dims.h) - 1), pk(0, std::int64_t(dims.w) - 1),
      pl(0, std::int64_t(dims.d) - 1);
  std::uniform_real_distribution<float> level(0.0f, 255.0f);
  std::vector<Coord> sites;
  std::vector<std::vector<float>> levels;
  for (int r = 0; r < regions; ++r) {
    sites.push_back({pj(rng), pk(rng), pl(rng)});
    std::vector<float> lv(dims.c);
    for (auto &x : lv) {
      x = level(rng);
    }
    levels.push_back(lv);
  }
  std::normal_distribution<float> gauss(0.0f, static_cast<float>(noise));
  Volume v(dims);
  for (std::size_t i = 0; i < dims.voxels(); ++i) {
    const auto c = dims.coord_of(i);
    std::size_t best = 0;
    std::int64_t best_d = std::numeric_limits<std::int64_t>::max();
    for (std::size_t s = 0; s < sites.size(); ++s) {
      std::int64_t d = 0;
      for (int a = 0; a < 3; ++a) {
        d += (c[a] - sites[s][a]) * (c[a] - sites[s][a]);
      }
      if (d < best_d) {
        best_d = d;
        best = s;
      }
    }
    for (std::size_t ch = 0; ch < dims.c; ++ch) {
      v.at(i, ch) = levels[best][ch] + (noise > 0 ? gauss(rng) : 0.0f);
    }
  }
  return v;
}

inline MinorParams random_params(Rng &rng, std::size_t voxels) {
  MinorParams p;
  std::uniform_real_distribution<double> t(0.0, 80.0);
  const double a = t(rng), b = t(rng);
  p.psi = std::min(a, b);
  p.alpha = std::max(a, b);
  const int conns[3] = {6, 18, 26};
  p.connectivity = conns[std::uniform_int_distribution<int>(0, 2)(rng)];
  p.norm = static_cast<NormOrder>(std::uniform_int_distribution<int>(0, 2)(rng));
  std::uniform_int_distribution<std::uint64_t> bmin(1, 4);
  p.beta_min = bmin(rng);
  p.beta_max = std::max<std::uint64_t>(p.beta_min, voxels / std::uniform_int_distribution<std::uint64_t>(1, 3)(rng));
  if (std::uniform_int_distribution<int>(0, 3)(rng) == 0) {
    p.m_min = 20.0;
    p.m_max = 230.0;
  }
  p.seed = rng();
  return p;
}

// Plain lexicographic stencil, written out independently of Connectivity.
inline std::vector<Coord> stencil(int n) {
  std::vector<Coord> out;
  for (int a = -1; a <= 1; ++a) {
    for (int b = -1; b <= 1; ++b) {
      for (int c = -1; c <= 1; ++c) {
        const int nz = std::abs(a) + std::abs(b) + std::abs(c);
        if (nz == 0 || (n == 6 && nz > 1) || (n == 18 && nz > 2)) {
          continue;
        }
        out.push_back({a, b, c});
      }
    }
  }
  return out;
}

inline double distance(const Volume &v, std::size_t a, std::size_t b, NormOrder norm) {
  double acc = 0.0;
  for (std::size_t ch = 0; ch < v.dims.c; ++ch) {
    const double d = std::fabs(double(v.at(a, ch)) - double(v.at(b, ch)));
    acc = norm == NormOrder::L1 ? acc + d : norm == NormOrder::L2 ? acc + d * d : std::max(acc, d);
  }
  return norm == NormOrder::L2 ? std::sqrt(acc) : acc;
}

inline std::size_t coprime_step(std::size_t n, std::size_t d) {
  if (n <= 2) {
    return 1;
  }
  std::size_t s = n / std::max<std::size_t>(d, 1);
  s = std::clamp<std::size_t>(s, 1, n - 1);
  for (std::size_t i = s; i < n; ++i) {
    if (std::gcd(i, n) == 1) {
      return i;
    }
  }
  for (std::size_t i = s; i-- > 1;) {
    if (std::gcd(i, n) == 1) {
      return i;
    }
  }
  return 1;
}

// Visiting order of the strided traversal, derived from the same seed stream.
inline std::vector<std::size_t> traversal_order(const VolumeDims &dims, const MinorParams &p) {
  auto rng = make_rng(p.seed, "traversal");
  const std::size_t ext[3] = {dims.h, dims.w, dims.d};
  std::size_t start[3], step[3];
  for (int a = 0; a < 3; ++a) {
    start[a] = static_cast<std::size_t>(std::uniform_int_distribution<std::int64_t>(0, std::int64_t(ext[a]) - 1)(rng));
    step[a] = coprime_step(ext[a], p.traversal_divisor);
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dims.h; ++i) {
    for (std::size_t j = 0; j < dims.w; ++j) {
      for (std::size_t k = 0; k < dims.d; ++k) {
        const auto r = (start[0] + i * step[0]) % dims.h;
        const auto c = (start[1] + j * step[1]) % dims.w;
        const auto l = (start[2] + k * step[2]) % dims.d;
        order.push_back((r * dims.w + c) * dims.d + l);
      }
    }
  }
  return order;
}

struct OracleMinor {
  std::vector<std::uint32_t> membership; // kDeleted for removed voxels
  std::vector<std::uint64_t> area;
  std::vector<std::uint64_t> boundary_len;
  std::vector<std::size_t> seed;
};

// Breadth-first components of {unclaimed q : dist(seed, q) <= psi} in
// traversal order, then retention on the two-pass mean.
inline OracleMinor brute_force_minor(const Volume &v, const MinorParams &p) {
  const auto &dims = v.dims;
  const auto offsets = stencil(p.connectivity);
  std::vector<std::int64_t> fill(dims.voxels(), -1);
  std::vector<std::vector<std::size_t>> regions;
  for (auto s : traversal_order(dims, p)) {
    if (fill[s] >= 0) {
      continue;
    }
    const auto id = static_cast<std::int64_t>(regions.size());
    std::vector<std::size_t> members{s};
    fill[s] = id;
    for (std::size_t head = 0; head < members.size(); ++head) {
      const auto c = dims.coord_of(members[head]);
      for (const auto &o : offsets) {
        const Coord q{c[0] + o[0], c[1] + o[1], c[2] + o[2]};
        if (!dims.contains(q)) {
          continue;
        }
        const auto qi = dims.voxel_index(q);
        if (fill[qi] < 0 && distance(v, s, qi, p.norm) <= p.psi) {
          fill[qi] = id;
          members.push_back(qi);
        }
      }
    }
    regions.push_back(std::move(members));
  }
  OracleMinor out;
  out.membership.assign(dims.voxels(), kDeleted);
  std::vector<std::uint32_t> fill_to_id;
  for (const auto &members : regions) {
    double mean = 0.0;
    for (auto m : members) {
      for (std::size_t ch = 0; ch < dims.c; ++ch) {
        mean += v.at(m, ch);
      }
    }
    mean /= double(members.size() * dims.c);
    const bool keep = members.size() >= p.beta_min && members.size() <= p.beta_max && mean >= p.m_min &&
                      mean <= p.m_max;
    if (!keep) {
      fill_to_id.push_back(kDeleted);
      continue;
    }
    const auto id = static_cast<std::uint32_t>(out.area.size());
    fill_to_id.push_back(id);
    out.area.push_back(members.size());
    out.seed.push_back(members.front());
    std::uint64_t exposed = 0;
    for (auto m : members) {
      const auto c = dims.coord_of(m);
      for (const auto &o : offsets) {
        const Coord q{c[0] + o[0], c[1] + o[1], c[2] + o[2]};
        if (dims.contains(q) && fill[dims.voxel_index(q)] != fill[m]) {
          ++exposed;
        }
      }
    }
    out.boundary_len.push_back(exposed);
  }
  for (std::size_t i = 0; i < dims.voxels(); ++i) {
    out.membership[i] = fill_to_id[static_cast<std::size_t>(fill[i])];
  }
  return out;
}

// Voxels of each retained supernode reachable from its canonical voxel
// through members only; returns the number of supernodes that fall apart.
inline std::size_t disconnected_supernodes(const GraphMinor &m) {
  const auto offsets = stencil(m.connectivity);
  std::vector<std::vector<std::size_t>> members(m.nodes.size());
  for (std::size_t i = 0; i < m.membership.size(); ++i) {
    if (m.membership[i] != kDeleted) {
      members[m.membership[i]].push_back(i);
    }
  }
  std::size_t bad = 0;
  std::vector<char> seen(m.membership.size(), 0);
  for (const auto &node : m.nodes) {
    const auto start = m.dims.voxel_index(node.canonical);
    if (m.membership[start] != node.id) {
      ++bad;
      continue;
    }
    std::deque<std::size_t> queue{start};
    seen[start] = 1;
    std::size_t reached = 0;
    while (!queue.empty()) {
      const auto p = queue.front();
      queue.pop_front();
      ++reached;
      const auto c = m.dims.coord_of(p);
      for (const auto &o : offsets) {
        const Coord q{c[0] + o[0], c[1] + o[1], c[2] + o[2]};
        if (!m.dims.contains(q)) {
          continue;
        }
        const auto qi = m.dims.voxel_index(q);
        if (!seen[qi] && m.membership[qi] == node.id) {
          seen[qi] = 1;
          queue.push_back(qi);
        }
      }
    }
    bad += reached != members[node.id].size();
  }
  return bad;
}

} // namespace semir::testing
