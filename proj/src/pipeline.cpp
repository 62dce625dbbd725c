#include "semir/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>

#include "semir/boundary.hpp"
#include "semir/error.hpp"
#include "semir/lift.hpp"
#include "semir/minor_io.hpp"
#include "semir/parallel.hpp"
#include "semir/volume_io.hpp"

namespace semir {

namespace fs = std::filesystem;
using json = nlohmann::json;

json model_config_to_json(const MpnnConfig &c) {
  return {{"layers", c.layers},         {"hidden", c.hidden},     {"classes", c.classes},
          {"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},     {"max_epochs", c.max_epochs}, {"patience", c.patience},
          {"batch", c.batch},           {"target_class", c.target_class}, {"seed", c.seed}};
}

MpnnConfig model_config_from_json(const json &j, MpnnConfig c) {
  try {
    c.layers = j.value("layers", c.layers);
    c.hidden = j.value("hidden", c.hidden);
    c.classes = j.value("classes", c.classes);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.batch = j.value("batch", c.batch);
    c.target_class = j.value("target_class", c.target_class);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception &e) {
    throw InvalidParams(std::string("bad model config: ") + e.what());
  }
  c.validate();
  return c;
}

void PipelineConfig::validate() const {
  if (train.empty()) {
    throw InvalidParams("train split is empty");
  }
  if (val.empty()) {
    throw InvalidParams("validation split is empty");
  }
  std::set<std::size_t> seen;
  for (const auto *split : {&train, &val, &test}) {
    for (auto i : *split) {
      if (!seen.insert(i).second) {
        throw InvalidParams("case " + std::to_string(i) + " appears in more than one split or twice");
      }
    }
  }
  if (jobs == 0) {
    throw InvalidParams("jobs must be >= 1");
  }
  base.validate();
  if (params) {
    params->validate();
  }
  model.validate();
  if (optimizer.n_init < 2) {
    throw InvalidParams("optimizer n_init must be >= 2");
  }
}

namespace {

fs::path resolve(const fs::path &p, const fs::path &relative_to) {
  return p.is_absolute() || relative_to.empty() ? p : relative_to / p;
}

MinorParams base_from_json(const json &j, MinorParams p) {
  if (j.contains("norm_order")) {
    const auto &n = j["norm_order"];
    p.norm = parse_norm(n.is_string() ? n.get<std::string>() : std::to_string(n.get<int>()));
  }
  p.connectivity = j.value("connectivity", p.connectivity);
  p.traversal_divisor = j.value("traversal_divisor", p.traversal_divisor);
  p.epsilon = j.value("epsilon", p.epsilon);
  return p;
}

} // namespace

PipelineConfig pipeline_from_json(const json &j, const fs::path &relative_to) {
  PipelineConfig c;
  try {
    c.corpus = resolve(j.at("corpus").get<std::string>(), relative_to);
    c.out = resolve(j.at("out").get<std::string>(), relative_to);
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
    c.few_shot = j.value("few_shot", c.few_shot);
    c.train = j.at("train").get<std::vector<std::size_t>>();
    c.val = j.at("val").get<std::vector<std::size_t>>();
    c.test = j.value("test", c.test);
    if (j.contains("base")) {
      c.base = base_from_json(j["base"], c.base);
    }
    if (j.contains("params")) {
      auto pj = j["params"];
      for (const char *k : {"norm_order", "connectivity", "traversal_divisor", "epsilon"}) {
        if (!pj.contains(k) && j.contains("base") && j["base"].contains(k)) {
          pj[k] = j["base"][k];
        }
      }
      c.params = params_from_json(pj);
    }
    if (j.contains("space")) {
      c.space = j["space"];
    }
    if (j.contains("optimizer")) {
      const auto &o = j["optimizer"];
      c.optimizer.n_init = o.value("n_init", c.optimizer.n_init);
      c.optimizer.n_iter = o.value("n_iter", c.optimizer.n_iter);
      c.optimizer.candidates = o.value("candidates", c.optimizer.candidates);
      c.optimizer.surrogate.trees = o.value("trees", c.optimizer.surrogate.trees);
    }
    if (j.contains("model")) {
      c.model = model_config_from_json(j["model"]);
    }
  } catch (const json::exception &e) {
    throw InvalidParams(std::string("bad pipeline config: ") + e.what());
  }
  c.base.seed = c.seed;
  if (c.params) {
    c.params->seed = c.seed;
  }
  c.optimizer.seed = c.seed;
  c.model.seed = c.seed;
  c.validate();
  return c;
}

json pipeline_to_json(const PipelineConfig &c) {
  json j{{"corpus", c.corpus.string()},
         {"out", c.out.string()},
         {"seed", c.seed},
         {"jobs", c.jobs},
         {"few_shot", c.few_shot},
         {"train", c.train},
         {"val", c.val},
         {"test", c.test},
         {"base",
          {{"norm_order", norm_name(c.base.norm)},
           {"connectivity", c.base.connectivity},
           {"traversal_divisor", c.base.traversal_divisor},
           {"epsilon", c.base.epsilon}}},
         {"optimizer",
          {{"n_init", c.optimizer.n_init},
           {"n_iter", c.optimizer.n_iter},
           {"candidates", c.optimizer.candidates},
           {"trees", c.optimizer.surrogate.trees}}},
         {"model", model_config_to_json(c.model)}};
  if (c.params) {
    j["params"] = params_to_json(*c.params);
  }
  if (c.space) {
    j["space"] = *c.space;
  }
  return j;
}

double PipelineSummary::mean_dice(const std::string &split) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto &v : volumes) {
    if (v.split == split) {
      sum += v.dice;
      ++n;
    }
  }
  return n ? sum / double(n) : 0.0;
}

double PipelineSummary::mean_reduction(const std::string &split) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto &v : volumes) {
    if (v.split == split) {
      sum += v.reduction_factor;
      ++n;
    }
  }
  return n ? sum / double(n) : 0.0;
}

void write_metrics_csv(const fs::path &path, const std::vector<VolumeMetrics> &rows) {
  std::ofstream os(path);
  if (!os) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  os << "schema_version,stem,split,voxels,supernodes,edges,deleted_voxels,reduction_factor,dice\n"
     << std::setprecision(10);
  for (const auto &r : rows) {
    os << kMetricsSchema << ',' << r.stem << ',' << r.split << ',' << r.voxels << ',' << r.supernodes << ','
       << r.edges << ',' << r.deleted_voxels << ',' << r.reduction_factor << ',' << r.dice << '\n';
  }
}

void write_timings_csv(const fs::path &path, const std::vector<StageTiming> &rows) {
  std::ofstream os(path);
  if (!os) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  os << "stage,seconds\n" << std::setprecision(6);
  for (const auto &r : rows) {
    os << r.stage << ',' << r.seconds << '\n';
  }
}

namespace {

class StageClock {
public:
  explicit StageClock(std::vector<StageTiming> &sink) : sink_(sink) {}

  // Runs fn, records its wall time and tags any failure with the stage name.
  template <typename Fn> void run(const std::string &stage, Fn &&fn) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const StageError &) {
      throw;
    } catch (const std::exception &e) {
      throw StageError(stage, e.what());
    }
    sink_.push_back({stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
  }

private:
  std::vector<StageTiming> &sink_;
};

} // namespace

PipelineSummary run_pipeline(const PipelineConfig &config) {
  config.validate();
  const auto corpus = list_corpus(config.corpus);
  const std::size_t n = corpus.size();
  auto check_range = [&](const std::vector<std::size_t> &split, const char *name) {
    for (auto i : split) {
      if (i >= n) {
        throw InvalidParams(std::string(name) + " index " + std::to_string(i) + " outside corpus of " +
                            std::to_string(n) + " cases");
      }
    }
  };
  check_range(config.train, "train");
  check_range(config.val, "val");
  check_range(config.test, "test");
  check_range(config.few_shot, "few_shot");

  auto test = config.test;
  if (test.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      if (std::find(config.train.begin(), config.train.end(), i) == config.train.end() &&
          std::find(config.val.begin(), config.val.end(), i) == config.val.end()) {
        test.push_back(i);
      }
    }
  }
  auto few_shot = config.few_shot;
  if (few_shot.empty()) {
    few_shot.assign(config.train.begin(), config.train.begin() + std::min<std::size_t>(5, config.train.size()));
  }
  std::vector<std::string> split(n);
  for (auto i : config.train) split[i] = "train";
  for (auto i : config.val) split[i] = "val";
  for (auto i : test) split[i] = "test";

  const auto &out = config.out;
  PipelineSummary summary;
  StageClock clock(summary.timings);
  std::vector<LabeledVolume> cases(n);
  std::vector<GraphMinor> minors(n);

  clock.run("load", [&] {
    fs::create_directories(out / "minors");
    fs::create_directories(out / "predictions");
    parallel_for(n, config.jobs, [&](std::size_t i) { cases[i] = load_case(corpus[i]); });
  });

  clock.run("optimize", [&] {
    std::vector<HistoryEntry> history;
    if (config.params) {
      summary.params = *config.params;
    } else {
      std::vector<LabeledVolume> shots;
      for (auto i : few_shot) {
        shots.push_back(cases[i]);
      }
      const auto space = config.space ? space_from_json(*config.space, config.base) : default_space(shots, config.base);
      const BoundaryObjective objective(std::move(shots), space.base.connectivity, config.jobs);
      const auto result = few_shot_optimize(space, objective, config.optimizer);
      summary.params = result.best;
      summary.best_loss = result.best_loss;
      history = result.history;
    }
    std::ofstream(out / "params.json") << params_to_json(summary.params).dump(2) << '\n';
    write_history_csv(out / "history.csv", history);
  });

  clock.run("build", [&] {
    parallel_for(n, config.jobs, [&](std::size_t i) {
      const auto path = out / "minors" / (corpus[i].stem + ".smin");
      write_minor(path, build_minor(cases[i].volume, summary.params).minor);
      minors[i] = read_minor(path);
    });
  });

  clock.run("train", [&] {
    std::vector<TrainSample> tr, va;
    for (auto i : config.train) tr.push_back({&minors[i], &cases[i].labels});
    for (auto i : config.val) va.push_back({&minors[i], &cases[i].labels});
    const auto dx = static_cast<std::size_t>(minors[config.train.front()].node_features.cols());
    const auto df = static_cast<std::size_t>(minors[config.train.front()].edge_features.cols());
    Model model(dx, df, config.model);
    summary.training = train(model, tr, va);
    write_model(out / "model.smdl", model);
    write_train_csv(out / "train_metrics.csv", summary.training);
  });

  clock.run("predict", [&] {
    const auto model = read_model(out / "model.smdl");
    parallel_for(n, config.jobs, [&](std::size_t i) {
      NodePredictions p{static_cast<std::uint32_t>(model.config.classes), predict(model, minors[i])};
      write_predictions(out / "predictions" / (corpus[i].stem + ".pred.bin"), p);
    });
  });

  std::vector<LabelMap> lifted(n);
  clock.run("lift", [&] {
    parallel_for(n, config.jobs, [&](std::size_t i) {
      const auto p = read_predictions(out / "predictions" / (corpus[i].stem + ".pred.bin"));
      lifted[i] = lift(minors[i], p.labels);
      write_labels(out / "predictions" / (corpus[i].stem + ".seg.svol"), lifted[i]);
    });
  });

  clock.run("eval", [&] {
    for (std::size_t i = 0; i < n; ++i) {
      if (split[i].empty()) {
        continue;
      }
      const auto &m = minors[i];
      VolumeMetrics row;
      row.stem = corpus[i].stem;
      row.split = split[i];
      row.voxels = m.dims.voxels();
      row.supernodes = m.nodes.size();
      row.edges = m.edges.size();
      row.deleted_voxels = m.deleted_voxels();
      row.reduction_factor = double(row.voxels) / double(std::max<std::size_t>(row.supernodes, 1));
      row.dice = voxel_dice(lifted[i], cases[i].labels.binarized(config.model.target_class), 1);
      summary.volumes.push_back(row);
    }
    write_metrics_csv(out / "metrics.csv", summary.volumes);
  });

  write_timings_csv(out / "timings.csv", summary.timings);
  return summary;
}

std::vector<BenchRow> bench_scaling(const std::vector<std::size_t> &sizes, const MinorParams &params,
                                    std::size_t repeats, const SyntheticSpec &volume) {
  if (sizes.size() < 2) {
    throw InvalidParams("bench needs at least two sizes");
  }
  if (repeats == 0) {
    throw InvalidParams("bench needs at least one repeat");
  }
  std::vector<BenchRow> rows;
  for (auto s : sizes) {
    auto spec = volume;
    spec.dims = {s, s, s, volume.dims.c};
    spec.radius = volume.radius * double(s) / double(std::max<std::size_t>(volume.dims.h, 1));
    const auto lv = generate_synthetic(spec);
    BenchRow row{s, spec.dims.voxels(), 0.0, 0, 0};
    std::vector<double> times;
    for (std::size_t r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto build = build_minor(lv.volume, params);
      times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      row.pops = build.stats.pops;
      row.supernodes = build.minor.nodes.size();
    }
    std::sort(times.begin(), times.end());
    row.seconds = times[times.size() / 2];
    rows.push_back(row);
  }
  return rows;
}

void write_bench_csv(const fs::path &path, const std::vector<BenchRow> &rows) {
  std::ofstream os(path);
  if (!os) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  os << "edge,voxels,seconds,pops,supernodes\n" << std::setprecision(6);
  for (const auto &r : rows) {
    os << r.edge << ',' << r.voxels << ',' << r.seconds << ',' << r.pops << ',' << r.supernodes << '\n';
  }
}

} // namespace semir
