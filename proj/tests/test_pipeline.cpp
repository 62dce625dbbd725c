#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "semir/error.hpp"
#include "semir/lift.hpp"
#include "semir/minor_io.hpp"
#include "semir/pipeline.hpp"
#include "semir/volume_io.hpp"

using namespace semir;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string &name) {
  const auto p = fs::temp_directory_path() / ("semir_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path &p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

// Small separable corpus: bright blob in a dark field.
fs::path small_corpus(const fs::path &root, std::size_t count = 8) {
  SyntheticSpec s;
  s.dims = {14, 14, 14, 1};
  s.radius = 4;
  s.noise = 10;
  write_corpus(root / "corpus", s, count);
  return root / "corpus";
}

json small_config(const fs::path &root) {
  return {{"corpus", "corpus"},
          {"out", "out"},
          {"seed", 42},
          {"train", {0, 1, 2, 3}},
          {"val", {4, 5}},
          {"optimizer", {{"n_init", 4}, {"n_iter", 6}, {"candidates", 200}, {"trees", 30}}},
          {"model", {{"hidden", 16}, {"max_epochs", 30}, {"patience", 10}, {"batch", 1}, {"learning_rate", 1e-2}}}};
}

} // namespace

TEST_CASE("config parsing and validation") {
  const auto root = scratch("config");
  auto j = small_config(root);
  auto c = pipeline_from_json(j, root);
  CHECK(c.corpus == root / "corpus");
  CHECK(c.model.hidden == 16);
  CHECK(c.model.seed == 42);
  CHECK(c.optimizer.seed == 42);
  CHECK(c.base.seed == 42);
  CHECK(c.optimizer.n_init == 4);

  // round trip through JSON keeps every field
  const auto again = pipeline_from_json(pipeline_to_json(c));
  CHECK(again.train == c.train);
  CHECK(again.model == c.model);
  CHECK(again.base == c.base);

  auto bad = j;
  bad["train"] = json::array();
  CHECK_THROWS_AS(pipeline_from_json(bad, root), InvalidParams);
  bad = j;
  bad["val"] = {3, 4};
  CHECK_THROWS_AS(pipeline_from_json(bad, root), InvalidParams);
  bad = j;
  bad["model"]["layers"] = "three";
  CHECK_THROWS_AS(pipeline_from_json(bad, root), InvalidParams);
  bad = j;
  bad.erase("corpus");
  CHECK_THROWS_AS(pipeline_from_json(bad, root), InvalidParams);
  bad = j;
  bad["optimizer"]["n_init"] = 1;
  CHECK_THROWS_AS(pipeline_from_json(bad, root), InvalidParams);

  // indices are checked against the corpus before any stage runs
  small_corpus(root);
  auto far = j;
  far["test"] = {40};
  CHECK_THROWS_AS(run_pipeline(pipeline_from_json(far, root)), InvalidParams);
  CHECK_FALSE(fs::exists(root / "out"));
}

TEST_CASE("model config JSON") {
  MpnnConfig c;
  c.layers = 2;
  c.hidden = 7;
  c.learning_rate = 0.25;
  c.target_class = 3;
  c.classes = 4;
  CHECK(model_config_from_json(model_config_to_json(c)) == c);
  CHECK_THROWS_AS(model_config_from_json(json{{"hidden", 0}}), InvalidParams);
}

TEST_CASE("end-to-end run writes round-trippable, deterministic artifacts") {
  const auto root = scratch("run");
  small_corpus(root);
  const auto config = pipeline_from_json(small_config(root), root);
  const auto summary = run_pipeline(config);
  const auto out = root / "out";

  for (const char *f : {"params.json", "history.csv", "model.smdl", "train_metrics.csv", "metrics.csv", "timings.csv"}) {
    CAPTURE(f);
    CHECK(fs::exists(out / f));
  }
  // history: header plus one row per evaluation
  std::ifstream hist(out / "history.csv");
  std::size_t lines = 0;
  for (std::string s; std::getline(hist, s);) ++lines;
  CHECK(lines == 1 + 4 + 6);

  const auto params = params_from_json(json::parse(slurp(out / "params.json")));
  CHECK(params == summary.params);
  const auto corpus = list_corpus(config.corpus);
  REQUIRE(summary.volumes.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto lv = load_case(corpus[i]);
    const auto fresh = build_minor(lv.volume, params).minor;
    const auto stored = read_minor(out / "minors" / (corpus[i].stem + ".smin"));
    CHECK(same_serialized_content(fresh, stored));
    const auto pred = read_predictions(out / "predictions" / (corpus[i].stem + ".pred.bin"));
    CHECK(pred.labels.size() == stored.nodes.size());
    const auto seg = read_labels(out / "predictions" / (corpus[i].stem + ".seg.svol"));
    CHECK(seg.labels == lift(stored, pred.labels).labels);
    const auto &row = summary.volumes[i];
    CHECK(row.stem == corpus[i].stem);
    CHECK(row.supernodes == stored.nodes.size());
    CHECK(row.dice == doctest::Approx(voxel_dice(seg, lv.labels, 1)).epsilon(1e-12));
    CHECK(row.split == (i < 4 ? "train" : i < 6 ? "val" : "test"));
  }
  const auto model = read_model(out / "model.smdl");
  CHECK(predict(model, read_minor(out / "minors" / "case_007.smin")) ==
        read_predictions(out / "predictions" / "case_007.pred.bin").labels);

  const auto metrics = slurp(out / "metrics.csv");
  const auto weights = slurp(out / "model.smdl");
  CHECK(metrics.rfind("schema_version,stem,split,voxels,supernodes,edges,deleted_voxels,reduction_factor,dice\n", 0) ==
        0);
  CHECK(metrics.find("seconds") == std::string::npos);

  auto parallel = config;
  parallel.out = root / "out_parallel";
  parallel.jobs = 3;
  run_pipeline(parallel);
  CHECK(slurp(parallel.out / "metrics.csv") == metrics);
  CHECK(slurp(parallel.out / "model.smdl") == weights);
  CHECK(slurp(parallel.out / "params.json") == slurp(out / "params.json"));

  auto reseeded = config;
  reseeded.out = root / "out_reseeded";
  reseeded.seed = reseeded.model.seed = reseeded.optimizer.seed = reseeded.base.seed = 7;
  run_pipeline(reseeded);
  CHECK(slurp(reseeded.out / "model.smdl") != weights);
}

TEST_CASE("fixed parameters skip the optimizer") {
  const auto root = scratch("fixed");
  small_corpus(root, 20);
  auto j = small_config(root);
  j["params"] = {{"psi", 25}, {"alpha", 60}};
  j["train"] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  j["val"] = {12, 13, 14, 15};
  const auto config = pipeline_from_json(j, root);
  const auto summary = run_pipeline(config);
  CHECK(summary.params.psi == 25);
  CHECK(summary.params.seed == 42);
  CHECK(slurp(root / "out" / "history.csv") == "iteration,phase,psi,alpha,beta_min,beta_max,m_min,m_max,loss\n");
  CHECK(summary.mean_dice("test") >= 0.9);
}

TEST_CASE("stage failures are tagged") {
  const auto root = scratch("stage");
  const auto corpus = small_corpus(root);
  std::ofstream(corpus / "case_003.svol", std::ios::binary) << "junk";
  try {
    run_pipeline(pipeline_from_json(small_config(root), root));
    FAIL("expected a stage error");
  } catch (const StageError &e) {
    CHECK(e.stage() == "load");
  }
}

TEST_CASE("prediction file") {
  const auto dir = scratch("pred");
  NodePredictions p{3, {0, 2, 1, 1, 0}};
  write_predictions(dir / "p.bin", p);
  const auto back = read_predictions(dir / "p.bin");
  CHECK(back.classes == 3);
  CHECK(back.labels == p.labels);
  CHECK(fs::file_size(dir / "p.bin") == 16 + 5);

  CHECK_THROWS_AS(write_predictions(dir / "q.bin", {2, {0, 2}}), InvalidParams);
  CHECK_THROWS_AS(write_predictions(dir / "q.bin", {300, {0}}), InvalidParams);
  auto bytes = slurp(dir / "p.bin");
  std::ofstream(dir / "trail.bin", std::ios::binary) << bytes << 'x';
  CHECK_THROWS_AS(read_predictions(dir / "trail.bin"), FormatError);
  std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 1);
  CHECK_THROWS_AS(read_predictions(dir / "short.bin"), FormatError);
  bytes[16] = 9;
  std::ofstream(dir / "range.bin", std::ios::binary) << bytes;
  CHECK_THROWS_AS(read_predictions(dir / "range.bin"), FormatError);
  bytes[0] = 'X';
  std::ofstream(dir / "magic.bin", std::ios::binary) << bytes;
  CHECK_THROWS_AS(read_predictions(dir / "magic.bin"), FormatError);
}

TEST_CASE("bench scaling") {
  MinorParams p;
  p.psi = 25;
  p.alpha = 60;
  SyntheticSpec s;
  s.noise = 10;
  const auto rows = bench_scaling({8, 16, 32}, p, 2, s);
  REQUIRE(rows.size() == 3);
  CHECK(rows[2].pops == 32768);
  for (const auto &r : rows) {
    CHECK(r.pops == r.voxels);
    CHECK(r.voxels == r.edge * r.edge * r.edge);
  }
  SyntheticSpec flat;
  flat.levels = {80, 80};
  for (const auto &r : bench_scaling({5, 12, 20}, p, 1, flat)) {
    CHECK(r.supernodes == 1);
  }
  CHECK_THROWS_AS(bench_scaling({32}, p, 1, s), InvalidParams);
  CHECK_THROWS_AS(bench_scaling({8, 16}, p, 0, s), InvalidParams);
}
