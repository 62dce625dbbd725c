#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "semir/boundary.hpp"
#include "semir/tensor.hpp"

namespace semir {

enum class Geometry { Blob, Stripe, Shell, Voronoi };

/// Piecewise-constant volume with additive uniform noise. Region 1 is the
/// labeled target; region 0 is background. Extra regions (index >= 2) split
/// the background into random Voronoi cells; with Voronoi geometry every
/// region is a cell.
struct SyntheticSpec {
  VolumeDims dims{32, 32, 32, 1};
  int regions = 2;
  std::vector<double> levels; // one per region; empty -> 50 + 100 * i
  double noise = 0.0;         // half-width of the uniform noise
  Geometry geometry = Geometry::Blob;
  double radius = 8.0; // blob / shell outer radius, stripe half-thickness
  std::uint64_t seed = 42;

  void validate() const;
  double level(int region) const;
};

LabeledVolume generate_synthetic(const SyntheticSpec &spec);

nlohmann::json synthetic_to_json(const SyntheticSpec &spec);
SyntheticSpec synthetic_from_json(const nlohmann::json &j);
Geometry parse_geometry(const std::string &name);
std::string geometry_name(Geometry g);

/// Corpus on disk: `<stem>.svol` plus `<stem>.labels.svol` per case.
struct CorpusEntry {
  std::string stem;
  std::filesystem::path volume;
  std::filesystem::path labels;
};

/// Writes `count` cases named case_000, case_001, ...; case i uses seed
/// spec.seed + i.
std::vector<CorpusEntry> write_corpus(const std::filesystem::path &dir, const SyntheticSpec &spec,
                                      std::size_t count);

/// Stems that have both files, sorted.
std::vector<CorpusEntry> list_corpus(const std::filesystem::path &dir);

LabeledVolume load_case(const CorpusEntry &entry);

} // namespace semir
