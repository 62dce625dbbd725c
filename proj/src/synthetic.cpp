#include "semir/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "semir/error.hpp"
#include "semir/random.hpp"
#include "semir/volume_io.hpp"

namespace semir {

void SyntheticSpec::validate() const {
  dims.validate();
  if (regions < 2) {
    throw InvalidParams("synthetic volumes need at least 2 regions");
  }
  if (!levels.empty() && levels.size() != static_cast<std::size_t>(regions)) {
    throw InvalidParams("levels must list one intensity per region");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) {
    throw InvalidParams("noise must be finite and >= 0");
  }
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw InvalidParams("radius must be finite and positive");
  }
}

double SyntheticSpec::level(int region) const {
  return levels.empty() ? 50.0 + 100.0 * region : levels[static_cast<std::size_t>(region)];
}

namespace {

double distance2(const Coord &c, const std::array<double, 3> &p) {
  double s = 0.0;
  for (int a = 0; a < 3; ++a) {
    s += (double(c[a]) - p[a]) * (double(c[a]) - p[a]);
  }
  return s;
}

// Nearest site, ties toward the lower index.
int nearest(const Coord &c, const std::vector<std::array<double, 3>> &sites, const std::vector<int> &ids) {
  int best = ids.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < sites.size(); ++s) {
    const double d = distance2(c, sites[s]);
    if (d < best_d) {
      best_d = d;
      best = ids[s];
    }
  }
  return best;
}

} // namespace

LabeledVolume generate_synthetic(const SyntheticSpec &spec) {
  spec.validate();
  const auto &dims = spec.dims;
  auto layout = make_rng(spec.seed, "synthetic_layout");
  auto noise_rng = make_rng(spec.seed, "synthetic_noise");
  const std::size_t extent[3] = {dims.h, dims.w, dims.d};

  auto random_point = [&](double margin) {
    std::array<double, 3> p{};
    for (int a = 0; a < 3; ++a) {
      const double lo = margin, hi = double(extent[a]) - 1.0 - margin;
      p[a] = lo < hi ? std::uniform_real_distribution<double>(lo, hi)(layout) : 0.5 * (double(extent[a]) - 1.0);
    }
    return p;
  };

  const auto centre = random_point(spec.radius);
  std::vector<std::array<double, 3>> sites;
  std::vector<int> ids;
  if (spec.geometry == Geometry::Voronoi) {
    for (int r = 0; r < spec.regions; ++r) {
      sites.push_back(random_point(0.0));
      ids.push_back(r);
    }
  } else {
    for (int r = 0; r < spec.regions; ++r) {
      if (r == 1) {
        continue;
      }
      sites.push_back(random_point(0.0));
      ids.push_back(r);
    }
  }

  const double r2 = spec.radius * spec.radius;
  const double inner2 = 0.25 * r2;
  auto region_of = [&](const Coord &c) {
    switch (spec.geometry) {
    case Geometry::Blob:
      if (distance2(c, centre) <= r2) return 1;
      break;
    case Geometry::Shell: {
      const double d2 = distance2(c, centre);
      if (d2 <= r2 && d2 >= inner2) return 1;
      break;
    }
    case Geometry::Stripe:
      if (std::abs(double(c[0]) - centre[0]) <= spec.radius) return 1;
      break;
    case Geometry::Voronoi: break;
    }
    return sites.size() == 1 ? ids.front() : nearest(c, sites, ids);
  };

  std::uniform_real_distribution<double> jitter(-spec.noise, spec.noise);
  LabeledVolume out{Volume(dims), LabelMap(dims)};
  for (std::size_t v = 0; v < dims.voxels(); ++v) {
    const int region = region_of(dims.coord_of(v));
    out.labels.labels[v] = region == 1 ? 1 : 0;
    for (std::size_t ch = 0; ch < dims.c; ++ch) {
      const double n = spec.noise > 0.0 ? jitter(noise_rng) : 0.0;
      out.volume.at(v, ch) = static_cast<float>(spec.level(region) + n);
    }
  }
  return out;
}

Geometry parse_geometry(const std::string &name) {
  static const std::map<std::string, Geometry> names{
      {"blob", Geometry::Blob}, {"stripe", Geometry::Stripe}, {"shell", Geometry::Shell}, {"voronoi", Geometry::Voronoi}};
  const auto it = names.find(name);
  if (it == names.end()) {
    throw InvalidParams("unknown geometry '" + name + "'");
  }
  return it->second;
}

std::string geometry_name(Geometry g) {
  switch (g) {
  case Geometry::Blob: return "blob";
  case Geometry::Stripe: return "stripe";
  case Geometry::Shell: return "shell";
  case Geometry::Voronoi: return "voronoi";
  }
  return "blob";
}

nlohmann::json synthetic_to_json(const SyntheticSpec &spec) {
  return {{"dims", {spec.dims.h, spec.dims.w, spec.dims.d}},
          {"channels", spec.dims.c},
          {"regions", spec.regions},
          {"levels", spec.levels},
          {"noise", spec.noise},
          {"geometry", geometry_name(spec.geometry)},
          {"radius", spec.radius},
          {"seed", spec.seed}};
}

SyntheticSpec synthetic_from_json(const nlohmann::json &j) {
  try {
    SyntheticSpec s;
    if (j.contains("dims")) {
      const auto d = j.at("dims").get<std::vector<std::size_t>>();
      if (d.size() != 3) {
        throw InvalidParams("dims must have three entries");
      }
      s.dims = {d[0], d[1], d[2], j.value("channels", std::size_t{1})};
    }
    s.regions = j.value("regions", s.regions);
    s.levels = j.value("levels", s.levels);
    s.noise = j.value("noise", s.noise);
    s.geometry = parse_geometry(j.value("geometry", geometry_name(s.geometry)));
    s.radius = j.value("radius", s.radius);
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception &e) {
    throw InvalidParams(std::string("synthetic spec: ") + e.what());
  }
}

std::vector<CorpusEntry> write_corpus(const std::filesystem::path &dir, const SyntheticSpec &spec,
                                      std::size_t count) {
  spec.validate();
  std::filesystem::create_directories(dir);
  std::vector<CorpusEntry> out;
  for (std::size_t i = 0; i < count; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "case_%03zu", i);
    auto s = spec;
    s.seed = spec.seed + i;
    const auto lv = generate_synthetic(s);
    CorpusEntry e{stem, dir / (std::string(stem) + ".svol"), dir / (std::string(stem) + ".labels.svol")};
    write_volume(e.volume, lv.volume);
    write_labels(e.labels, lv.labels);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<CorpusEntry> list_corpus(const std::filesystem::path &dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw InvalidParams("corpus directory not found: " + dir.string());
  }
  std::vector<CorpusEntry> out;
  for (const auto &f : std::filesystem::directory_iterator(dir)) {
    const auto name = f.path().filename().string();
    const std::string suffix = ".svol", label_suffix = ".labels.svol";
    if (name.size() <= suffix.size() || !name.ends_with(suffix) || name.ends_with(label_suffix)) {
      continue;
    }
    const auto stem = name.substr(0, name.size() - suffix.size());
    const auto labels = dir / (stem + label_suffix);
    if (std::filesystem::exists(labels)) {
      out.push_back({stem, f.path(), labels});
    }
  }
  std::sort(out.begin(), out.end(), [](const CorpusEntry &a, const CorpusEntry &b) { return a.stem < b.stem; });
  return out;
}

LabeledVolume load_case(const CorpusEntry &entry) {
  LabeledVolume lv{read_volume(entry.volume), read_labels(entry.labels)};
  if (!lv.volume.dims.same_grid(lv.labels.dims)) {
    throw InvalidParams("labels for " + entry.stem + " do not match the volume grid");
  }
  return lv;
}

} // namespace semir
