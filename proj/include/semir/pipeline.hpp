#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "semir/gnn.hpp"
#include "semir/minor.hpp"
#include "semir/smbo.hpp"
#include "semir/synthetic.hpp"

namespace semir {

nlohmann::json model_config_to_json(const MpnnConfig &c);
MpnnConfig model_config_from_json(const nlohmann::json &j, MpnnConfig fallback = {});

/// End-to-end run over one corpus directory. Split entries are indices into
/// the stem-sorted corpus. `seed` overrides the traversal, optimizer and model
/// seeds so one number reproduces every artifact.
struct PipelineConfig {
  std::filesystem::path corpus;
  std::filesystem::path out;
  std::uint64_t seed = 42;
  std::size_t jobs = 1;
  std::vector<std::size_t> few_shot; // empty -> the first 5 training cases
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test; // empty -> every case outside train and val
  MinorParams base;              // norm, connectivity, traversal, epsilon
  std::optional<MinorParams> params;      // fixed parameters skip the optimizer
  std::optional<nlohmann::json> space;    // search space; default derived from the few-shot set
  OptimizeOptions optimizer;
  MpnnConfig model;

  /// Throws InvalidParams on empty or overlapping splits.
  void validate() const;
};

/// Relative paths in the JSON resolve against `relative_to`.
PipelineConfig pipeline_from_json(const nlohmann::json &j, const std::filesystem::path &relative_to = {});
nlohmann::json pipeline_to_json(const PipelineConfig &c);

struct VolumeMetrics {
  std::string stem;
  std::string split;
  std::size_t voxels = 0;
  std::size_t supernodes = 0;
  std::size_t edges = 0;
  std::size_t deleted_voxels = 0;
  double reduction_factor = 0.0; // voxels / max(supernodes, 1)
  double dice = 0.0;             // lifted target-class Dice
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct PipelineSummary {
  MinorParams params;
  double best_loss = 0.0;
  TrainReport training;
  std::vector<VolumeMetrics> volumes;
  std::vector<StageTiming> timings;

  /// Mean Dice / reduction over the volumes of one split.
  double mean_dice(const std::string &split) const;
  double mean_reduction(const std::string &split) const;
};

/// Writes params.json, history.csv, minors/, model.smdl, train_metrics.csv,
/// predictions/, metrics.csv and timings.csv under config.out. Stage failures
/// throw StageError; bad configs throw InvalidParams before any stage runs.
PipelineSummary run_pipeline(const PipelineConfig &config);

inline constexpr int kMetricsSchema = 1;
void write_metrics_csv(const std::filesystem::path &path, const std::vector<VolumeMetrics> &rows);
void write_timings_csv(const std::filesystem::path &path, const std::vector<StageTiming> &rows);

struct BenchRow {
  std::size_t edge = 0; // cube side
  std::size_t voxels = 0;
  double seconds = 0.0; // median over repeats
  std::uint64_t pops = 0;
  std::size_t supernodes = 0;
};

/// Builds minors on size^3 synthetic volumes (dims and radius rescaled from
/// `volume`) and reports the median build time per size.
std::vector<BenchRow> bench_scaling(const std::vector<std::size_t> &sizes, const MinorParams &params,
                                    std::size_t repeats, const SyntheticSpec &volume);
void write_bench_csv(const std::filesystem::path &path, const std::vector<BenchRow> &rows);

} // namespace semir
