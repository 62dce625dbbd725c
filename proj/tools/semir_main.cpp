#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "semir/boundary.hpp"
#include "semir/error.hpp"
#include "semir/gnn.hpp"
#include "semir/lift.hpp"
#include "semir/minor_io.hpp"
#include "semir/parallel.hpp"
#include "semir/pipeline.hpp"
#include "semir/smbo.hpp"
#include "semir/synthetic.hpp"
#include "semir/volume_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace semir;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kStageFailure = 3;

json load_json(const fs::path &path) {
  std::ifstream is(path);
  if (!is) {
    throw InvalidParams("cannot open " + path.string());
  }
  try {
    return json::parse(is);
  } catch (const json::exception &e) {
    throw InvalidParams(path.string() + ": " + e.what());
  }
}

void save_json(const fs::path &path, const json &j) {
  std::ofstream os(path);
  if (!os) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  os << j.dump(2) << '\n';
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
};

std::vector<LabeledVolume> load_dir(const fs::path &dir, std::size_t jobs) {
  const auto entries = list_corpus(dir);
  if (entries.empty()) {
    throw InvalidParams("no <stem>.svol / <stem>.labels.svol pairs in " + dir.string());
  }
  std::vector<LabeledVolume> out(entries.size());
  parallel_for(entries.size(), jobs, [&](std::size_t i) { out[i] = load_case(entries[i]); });
  return out;
}

MinorParams load_params(const fs::path &path, const Globals &g) {
  auto p = params_from_json(load_json(path));
  if (g.seed) {
    p.seed = *g.seed;
  }
  return p;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"semir: graph-minor segmentation pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Root seed overriding component seeds");
  app.add_option("--jobs", g.jobs, "Worker threads for per-volume stages")->check(CLI::PositiveNumber);

  // gen-synthetic
  auto *gen = app.add_subcommand("gen-synthetic", "Write a synthetic corpus");
  fs::path gen_spec, gen_out;
  std::size_t gen_count = 1;
  std::vector<std::size_t> gen_dims;
  std::optional<int> gen_regions;
  std::vector<double> gen_levels;
  std::optional<double> gen_noise, gen_radius;
  std::optional<std::string> gen_geometry;
  gen->add_option("--spec", gen_spec, "SyntheticSpec JSON")->check(CLI::ExistingFile);
  gen->add_option("--dims", gen_dims, "h w d")->expected(3)->delimiter(',');
  gen->add_option("--regions", gen_regions);
  gen->add_option("--levels", gen_levels)->delimiter(',');
  gen->add_option("--noise", gen_noise, "Uniform noise half-width");
  gen->add_option("--geometry", gen_geometry)->check(CLI::IsMember({"blob", "stripe", "shell", "voronoi"}));
  gen->add_option("--radius", gen_radius);
  gen->add_option("--count", gen_count, "Cases to write (default: spec \"count\" or 1)")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out)->required();

  // optimize
  auto *opt = app.add_subcommand("optimize", "Tune minor parameters on a few-shot set");
  fs::path opt_dir, opt_space, opt_out, opt_history, opt_base;
  OptimizeOptions opt_options;
  opt->add_option("--few-shot", opt_dir)->required()->check(CLI::ExistingDirectory);
  opt->add_option("--space", opt_space)->check(CLI::ExistingFile);
  opt->add_option("--base", opt_base, "Params JSON supplying norm/connectivity")->check(CLI::ExistingFile);
  opt->add_option("--n-init", opt_options.n_init);
  opt->add_option("--n-iter", opt_options.n_iter);
  opt->add_option("--candidates", opt_options.candidates);
  opt->add_option("--out", opt_out)->required();
  opt->add_option("--history", opt_history, "History CSV (default: <out>.history.csv)");

  // build-minor
  auto *bm = app.add_subcommand("build-minor", "Build a graph minor from one volume");
  fs::path bm_volume, bm_params, bm_out, bm_tensor, bm_json;
  bm->add_option("--volume", bm_volume)->required()->check(CLI::ExistingFile);
  bm->add_option("--params", bm_params)->required()->check(CLI::ExistingFile);
  bm->add_option("--out", bm_out)->required();
  bm->add_option("--tensor", bm_tensor, "Also write the expanded tensor (SEXP)");
  bm->add_option("--json", bm_json, "Also write a JSON mirror of the minor");

  // train
  auto *tr = app.add_subcommand("train", "Train the supernode classifier");
  fs::path tr_train, tr_val, tr_params, tr_out, tr_metrics, tr_config;
  tr->add_option("--train", tr_train)->required()->check(CLI::ExistingDirectory);
  tr->add_option("--val", tr_val)->required()->check(CLI::ExistingDirectory);
  tr->add_option("--params", tr_params)->required()->check(CLI::ExistingFile);
  tr->add_option("--config", tr_config, "Model config JSON")->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out)->required();
  tr->add_option("--metrics", tr_metrics);

  // predict
  auto *pr = app.add_subcommand("predict", "Classify the supernodes of a minor");
  fs::path pr_model, pr_minor, pr_out;
  pr->add_option("--model", pr_model)->required()->check(CLI::ExistingFile);
  pr->add_option("--minor", pr_minor)->required()->check(CLI::ExistingFile);
  pr->add_option("--out", pr_out)->required();

  // lift
  auto *lf = app.add_subcommand("lift", "Map supernode predictions to voxels");
  fs::path lf_minor, lf_pred, lf_out, lf_tensor;
  std::uint16_t lf_background = 0;
  lf->add_option("--minor", lf_minor)->required()->check(CLI::ExistingFile);
  lf->add_option("--pred", lf_pred)->required()->check(CLI::ExistingFile);
  lf->add_option("--out", lf_out)->required();
  lf->add_option("--tensor", lf_tensor, "Walk contraction links in this SEXP instead of the membership array")
      ->check(CLI::ExistingFile);
  lf->add_option("--background", lf_background);

  // eval
  auto *ev = app.add_subcommand("eval", "Voxel Dice of a segmentation");
  fs::path ev_pred, ev_gt, ev_report;
  std::uint16_t ev_class = 1;
  ev->add_option("--pred", ev_pred)->required()->check(CLI::ExistingFile);
  ev->add_option("--gt", ev_gt)->required()->check(CLI::ExistingFile);
  ev->add_option("--class", ev_class);
  ev->add_option("--report", ev_report);

  // run
  auto *rn = app.add_subcommand("run", "Run the whole pipeline from a config");
  fs::path rn_config;
  rn->add_option("--config", rn_config)->required()->check(CLI::ExistingFile);

  // bench
  auto *bn = app.add_subcommand("bench", "Minor construction time against volume size");
  std::vector<std::size_t> bn_sizes{32, 64};
  std::size_t bn_repeats = 5;
  fs::path bn_params, bn_spec, bn_out;
  bn->add_option("--sizes", bn_sizes)->delimiter(',');
  bn->add_option("--repeats", bn_repeats)->check(CLI::PositiveNumber);
  bn->add_option("--params", bn_params)->check(CLI::ExistingFile);
  bn->add_option("--spec", bn_spec, "SyntheticSpec JSON for the bench volumes")->check(CLI::ExistingFile);
  bn->add_option("--out", bn_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen) {
      const auto spec_json = gen_spec.empty() ? json::object() : load_json(gen_spec);
      SyntheticSpec spec = synthetic_from_json(spec_json);
      if (!gen->count("--count")) gen_count = spec_json.value("count", gen_count);
      if (!gen_dims.empty()) spec.dims = {gen_dims[0], gen_dims[1], gen_dims[2], spec.dims.c};
      if (gen_regions) spec.regions = *gen_regions;
      if (!gen_levels.empty()) spec.levels = gen_levels;
      if (gen_noise) spec.noise = *gen_noise;
      if (gen_geometry) spec.geometry = parse_geometry(*gen_geometry);
      if (gen_radius) spec.radius = *gen_radius;
      if (g.seed) spec.seed = *g.seed;
      spec.validate();
      write_corpus(gen_out, spec, gen_count);
      save_json(gen_out / "spec.json", synthetic_to_json(spec));
    } else if (*opt) {
      MinorParams base;
      if (!opt_base.empty()) {
        base = load_params(opt_base, g);
      }
      if (g.seed) {
        base.seed = *g.seed;
        opt_options.seed = *g.seed;
      }
      auto samples = load_dir(opt_dir, g.jobs);
      const auto space = opt_space.empty() ? default_space(samples, base) : space_from_json(load_json(opt_space), base);
      const BoundaryObjective objective(std::move(samples), space.base.connectivity, g.jobs);
      const auto result = few_shot_optimize(space, objective, opt_options);
      save_json(opt_out, params_to_json(result.best));
      write_history_csv(opt_history.empty() ? fs::path(opt_out.string() + ".history.csv") : opt_history,
                        result.history);
      std::cout << "best loss " << result.best_loss << '\n';
    } else if (*bm) {
      const auto params = load_params(bm_params, g);
      const auto build = build_minor(read_volume(bm_volume), params);
      write_minor(bm_out, build.minor);
      if (!bm_tensor.empty()) write_tensor(bm_tensor, build.tensor);
      if (!bm_json.empty()) save_json(bm_json, minor_to_json(build.minor));
      std::cout << build.minor.nodes.size() << " supernodes, " << build.minor.edges.size() << " edges, "
                << build.stats.pops << " pops\n";
    } else if (*tr) {
      const auto params = load_params(tr_params, g);
      auto cfg = tr_config.empty() ? MpnnConfig{} : model_config_from_json(load_json(tr_config));
      if (g.seed) cfg.seed = *g.seed;
      const auto train_cases = load_dir(tr_train, g.jobs);
      const auto val_cases = load_dir(tr_val, g.jobs);
      std::vector<GraphMinor> train_minors(train_cases.size()), val_minors(val_cases.size());
      parallel_for(train_cases.size(), g.jobs,
                   [&](std::size_t i) { train_minors[i] = build_minor(train_cases[i].volume, params).minor; });
      parallel_for(val_cases.size(), g.jobs,
                   [&](std::size_t i) { val_minors[i] = build_minor(val_cases[i].volume, params).minor; });
      std::vector<TrainSample> ts, vs;
      for (std::size_t i = 0; i < train_cases.size(); ++i) ts.push_back({&train_minors[i], &train_cases[i].labels});
      for (std::size_t i = 0; i < val_cases.size(); ++i) vs.push_back({&val_minors[i], &val_cases[i].labels});
      Model model(static_cast<std::size_t>(train_minors.front().node_features.cols()),
                  static_cast<std::size_t>(train_minors.front().edge_features.cols()), cfg);
      const auto report = train(model, ts, vs);
      write_model(tr_out, model);
      if (!tr_metrics.empty()) write_train_csv(tr_metrics, report);
      std::cout << "best epoch " << report.best_epoch << ", val dice " << report.best_val_dice << '\n';
    } else if (*pr) {
      const auto model = read_model(pr_model);
      const auto minor = read_minor(pr_minor);
      write_predictions(pr_out, {static_cast<std::uint32_t>(model.config.classes), predict(model, minor)});
    } else if (*lf) {
      const auto minor = read_minor(lf_minor);
      const auto pred = read_predictions(lf_pred);
      const auto seg = lf_tensor.empty() ? lift(minor, pred.labels, lf_background)
                                         : lift_tensor_walk(minor, read_tensor(lf_tensor), pred.labels, lf_background);
      write_labels(lf_out, seg);
    } else if (*ev) {
      const auto pred = read_labels(ev_pred);
      const auto gt = read_labels(ev_gt);
      const double dice = voxel_dice(pred, gt, ev_class);
      const json report{{"class", ev_class},
                        {"dice", dice},
                        {"voxels", gt.labels.size()},
                        {"pred_count", std::count(pred.labels.begin(), pred.labels.end(), ev_class)},
                        {"gt_count", std::count(gt.labels.begin(), gt.labels.end(), ev_class)}};
      if (!ev_report.empty()) save_json(ev_report, report);
      std::cout << "dice " << dice << '\n';
    } else if (*rn) {
      auto j = load_json(rn_config);
      if (g.seed) j["seed"] = *g.seed;
      if (app.count("--jobs")) j["jobs"] = g.jobs;
      const auto config = pipeline_from_json(j, rn_config.parent_path());
      const auto summary = run_pipeline(config);
      std::cout << "test dice " << summary.mean_dice("test") << ", mean reduction "
                << summary.mean_reduction("test") << "x\n";
    } else if (*bn) {
      MinorParams params;
      if (!bn_params.empty()) {
        params = load_params(bn_params, g);
      } else {
        params.psi = 25;
        params.alpha = 60;
      }
      SyntheticSpec spec;
      spec.noise = 10;
      if (!bn_spec.empty()) spec = synthetic_from_json(load_json(bn_spec));
      if (g.seed) spec.seed = *g.seed;
      const auto rows = bench_scaling(bn_sizes, params, bn_repeats, spec);
      write_bench_csv(bn_out, rows);
      for (const auto &r : rows) {
        std::cout << r.edge << "^3: " << r.seconds << " s, " << r.pops << " pops, " << r.supernodes
                  << " supernodes\n";
      }
    }
  } catch (const InvalidParams &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const StageError &e) {
    std::cerr << "stage failure " << e.what() << '\n';
    return kStageFailure;
  } catch (const std::exception &e) {
    std::cerr << "stage failure: " << e.what() << '\n';
    return kStageFailure;
  }
  return kOk;
}
