#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "semir/boundary.hpp"
#include "semir/minor.hpp"
#include "semir/random.hpp"

namespace semir {

/// Quantized range of one parameter. lo == hi pins the value.
struct GridAxis {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t levels = 1;
  bool log_scale = false;
  bool integer = false;

  std::vector<double> values() const;
  void validate(const std::string &name) const;
};

/// Search space over (psi, alpha, beta_min, beta_max, m_min, m_max). The
/// remaining construction settings come from `base`.
struct ParamSpace {
  GridAxis psi, alpha, beta_min, beta_max, m_min, m_max;
  MinorParams base;

  static constexpr std::size_t kDims = 6;

  void validate() const;
  /// Uniform over grid points, rejecting combinations that break the
  /// MinorParams ordering constraints.
  MinorParams sample(Rng &rng) const;
  /// Surrogate coordinates; area bounds enter on a log scale.
  static std::array<double, kDims> encode(const MinorParams &p);
};

/// Thresholds over [0, intensity range] with 64 levels; area bounds fixed to
/// [1, floor(voxels / 3)]; intensity bounds fixed to the observed range.
ParamSpace default_space(const std::vector<LabeledVolume> &samples, const MinorParams &base);

nlohmann::json space_to_json(const ParamSpace &s);
ParamSpace space_from_json(const nlohmann::json &j, const MinorParams &base);

/// Extremely randomized regression trees. At each node every non-constant
/// feature draws a threshold uniformly from its range and the split with
/// the largest variance reduction wins.
class ExtraTrees {
public:
  struct Options {
    std::size_t trees = 100;
    std::size_t min_leaf = 1;
  };

  ExtraTrees() = default;
  explicit ExtraTrees(Options opt) : opt_(opt) {}

  void fit(const Eigen::MatrixXd &x, const Eigen::VectorXd &y, std::uint64_t seed);
  /// Ensemble mean and standard deviation of per-tree predictions.
  std::pair<double, double> predict(const Eigen::RowVectorXd &x) const;
  std::size_t size() const { return trees_.size(); }

private:
  struct Node {
    int feature = -1; // -1: leaf
    double threshold = 0.0;
    double value = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
  };
  using Tree = std::vector<Node>;

  std::int32_t grow(Tree &tree, const Eigen::MatrixXd &x, const Eigen::VectorXd &y, std::vector<Eigen::Index> &rows,
                    std::size_t begin, std::size_t end, Rng &rng) const;

  Options opt_;
  std::vector<Tree> trees_;
};

/// Expected improvement for minimization.
double expected_improvement(double mean, double std, double best);

struct HistoryEntry {
  std::size_t iteration = 0;
  std::string phase; // "init" or "smbo"
  MinorParams params;
  double loss = 1.0;
};

struct OptimizeOptions {
  std::size_t n_init = 10;
  std::size_t n_iter = 50;
  std::size_t candidates = 1000;
  std::uint64_t seed = 42;
  ExtraTrees::Options surrogate;
};

struct OptimizeResult {
  MinorParams best;
  double best_loss = 1.0;
  std::vector<HistoryEntry> history;
};

/// Sequential model-based search: n_init uniform draws, then n_iter rounds of
/// fit surrogate / maximize EI over random candidates / evaluate. Candidates
/// already evaluated are skipped. Returns the first history entry with the
/// lowest loss.
OptimizeResult few_shot_optimize(const ParamSpace &space, const BoundaryObjective &objective,
                                 const OptimizeOptions &opt);

void write_history_csv(std::ostream &os, const std::vector<HistoryEntry> &history);
void write_history_csv(const std::filesystem::path &path, const std::vector<HistoryEntry> &history);

} // namespace semir
