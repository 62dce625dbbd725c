#include "semir/gnn.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "semir/binary_io.hpp"
#include "semir/lift.hpp"

namespace semir {

void MpnnConfig::validate() const {
  if (layers < 1 || hidden < 1 || classes < 2) {
    throw InvalidParams("model needs layers >= 1, hidden >= 1 and classes >= 2");
  }
  if (!(learning_rate > 0) || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(adam_eps > 0)) {
    throw InvalidParams("invalid Adam settings");
  }
  if (patience < 1) {
    throw InvalidParams("patience must be at least 1");
  }
  if (max_epochs < 1 || batch < 1) {
    throw InvalidParams("max_epochs and batch must be positive");
  }
}

FeatureScaler FeatureScaler::identity(std::size_t dx, std::size_t df) {
  FeatureScaler s;
  s.node_mean = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(dx));
  s.node_scale = Eigen::RowVectorXd::Ones(static_cast<Eigen::Index>(dx));
  s.edge_mean = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(df));
  s.edge_scale = Eigen::RowVectorXd::Ones(static_cast<Eigen::Index>(df));
  return s;
}

namespace {

void column_stats(const std::vector<const Eigen::MatrixXf *> &mats, Eigen::Index cols, Eigen::RowVectorXd &mean,
                  Eigen::RowVectorXd &scale) {
  mean = Eigen::RowVectorXd::Zero(cols);
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(cols);
  double n = 0;
  for (const auto *m : mats) {
    mean += m->cast<double>().colwise().sum();
    n += double(m->rows());
  }
  if (n == 0) {
    scale = Eigen::RowVectorXd::Ones(cols);
    return;
  }
  mean /= n;
  for (const auto *m : mats) {
    sq += (m->cast<double>().rowwise() - mean).array().square().matrix().colwise().sum();
  }
  scale = (sq / n).cwiseSqrt();
  for (Eigen::Index c = 0; c < cols; ++c) {
    if (!(scale[c] > 1e-12)) {
      scale[c] = 1.0;
    }
  }
}

} // namespace

FeatureScaler FeatureScaler::fit(std::span<const GraphMinor *const> minors) {
  if (minors.empty()) {
    throw InvalidParams("cannot fit feature scaling on an empty set");
  }
  std::vector<const Eigen::MatrixXf *> x, f;
  for (const auto *m : minors) {
    x.push_back(&m->node_features);
    f.push_back(&m->edge_features);
  }
  FeatureScaler s;
  column_stats(x, minors.front()->node_features.cols(), s.node_mean, s.node_scale);
  column_stats(f, minors.front()->edge_features.cols(), s.edge_mean, s.edge_scale);
  return s;
}

double loss_and_gradient(const Model &model, const GraphInput<double> &in, std::span<const std::uint16_t> labels,
                         Model::Params &grad, double weight) {
  Model::Cache cache;
  const auto logits = model.forward(in, &cache);
  Model::Mat dlogits;
  const double loss = weighted_cross_entropy<double>(logits, labels, in.area, &dlogits);
  if (weight != 1.0) {
    dlogits *= weight;
  }
  model.backward(in, cache, dlogits, grad);
  return loss;
}

void adam_step(Model &model, Model::Params &grad) {
  const auto &c = model.config;
  ++model.step;
  const double t = double(model.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  std::vector<Eigen::Map<Model::Mat>> ms, vs;
  model.adam_m.visit([&](const std::string &, auto &m) { ms.emplace_back(m.data(), m.rows(), m.cols()); });
  model.adam_v.visit([&](const std::string &, auto &m) { vs.emplace_back(m.data(), m.rows(), m.cols()); });
  std::size_t i = 0;
  zip(model.params, grad, [&](const std::string &, auto &p, auto &g) {
    auto &m = ms[i];
    auto &v = vs[i];
    ++i;
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    p.array() -= c.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.adam_eps);
  });
}

std::vector<std::uint16_t> predict(const Model &model, const GraphMinor &minor) {
  const auto in = prepare_input<double>(minor, model.scaler);
  return argmax_rows(model.forward(in));
}

std::vector<std::uint16_t> supernode_targets(const GraphMinor &minor, const LabelMap &labels, std::uint16_t target) {
  return majority_labels(minor, labels.binarized(target));
}

double lifted_dice(const Model &model, std::span<const TrainSample> set) {
  if (set.empty()) {
    return 0.0;
  }
  double sum = 0.0;
  for (const auto &s : set) {
    const auto pred = lift(*s.minor, predict(model, *s.minor));
    sum += voxel_dice(pred, s.labels->binarized(model.config.target_class), 1);
  }
  return sum / double(set.size());
}

TrainReport train(Model &model, std::span<const TrainSample> train_set, std::span<const TrainSample> val_set) {
  const auto cfg = model.config;
  cfg.validate();
  if (train_set.empty() || val_set.empty()) {
    throw InvalidParams("training needs nonempty train and validation splits");
  }
  std::vector<const GraphMinor *> minors;
  for (const auto &s : train_set) {
    minors.push_back(s.minor);
  }
  const auto dx = static_cast<std::size_t>(minors.front()->node_features.cols());
  const auto df = static_cast<std::size_t>(minors.front()->edge_features.cols());
  model = Model(dx, df, cfg);
  model.scaler = FeatureScaler::fit(minors);

  std::vector<GraphInput<double>> inputs;
  std::vector<std::vector<std::uint16_t>> targets;
  for (const auto &s : train_set) {
    inputs.push_back(prepare_input<double>(*s.minor, model.scaler));
    targets.push_back(supernode_targets(*s.minor, *s.labels, cfg.target_class));
  }

  auto order_rng = make_rng(cfg.seed, "train_order");
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  Model best = model;
  Model::Params grad(dx, df, cfg);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const auto end = std::min(order.size(), start + cfg.batch);
      grad.set_zero();
      for (auto k = start; k < end; ++k) {
        const auto i = order[k];
        loss_sum += loss_and_gradient(model, inputs[i], targets[i], grad, 1.0 / double(end - start));
      }
      adam_step(model, grad);
    }
    const double train_loss = loss_sum / double(order.size());
    if (!std::isfinite(train_loss)) {
      throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch));
    }
    const double val = lifted_dice(model, val_set);
    report.epochs.push_back({epoch, train_loss, val});
    report.stopped_epoch = epoch;
    if (epoch == 1 || val > report.best_val_dice) {
      report.best_val_dice = val;
      report.best_epoch = epoch;
      best = model;
    } else if (epoch - report.best_epoch >= cfg.patience) {
      break;
    }
  }
  model = std::move(best);
  return report;
}

void write_train_csv(const std::filesystem::path &path, const TrainReport &report) {
  std::ofstream os(path);
  if (!os) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  os << "epoch,train_loss,val_dice,best\n" << std::setprecision(10);
  for (const auto &e : report.epochs) {
    os << e.epoch << ',' << e.train_loss << ',' << e.val_dice << ',' << (e.epoch == report.best_epoch ? 1 : 0)
       << '\n';
  }
}

namespace {

constexpr std::uint32_t kModelVersion = 1;

void put_row(std::ostream &os, const Eigen::RowVectorXd &r) {
  binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(r.size()));
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    binary::put<double>(os, r[i]);
  }
}

Eigen::RowVectorXd get_row(std::istream &is, Eigen::Index want) {
  const auto n = binary::get<std::uint32_t>(is);
  if (Eigen::Index(n) != want) {
    throw FormatError("SMDL scaler width mismatch");
  }
  Eigen::RowVectorXd r(want);
  for (Eigen::Index i = 0; i < want; ++i) {
    r[i] = binary::get<double>(is);
  }
  return r;
}

template <typename Fn> void visit_all(Model &m, Fn &&fn) {
  m.params.visit([&](const std::string &n, auto &t) { fn(n, t); });
  m.adam_m.visit([&](const std::string &n, auto &t) { fn("adam_m." + n, t); });
  m.adam_v.visit([&](const std::string &n, auto &t) { fn("adam_v." + n, t); });
}

} // namespace

void write_model(const std::filesystem::path &path, const Model &model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  const auto &c = model.config;
  binary::put_magic(os, "SMDL");
  binary::put<std::uint32_t>(os, kModelVersion);
  for (auto v : {c.layers, c.hidden, c.classes, c.max_epochs, c.patience, c.batch}) {
    binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(v));
  }
  binary::put<std::uint32_t>(os, c.target_class);
  binary::put<std::uint64_t>(os, c.seed);
  for (auto v : {c.learning_rate, c.beta1, c.beta2, c.adam_eps}) {
    binary::put<double>(os, v);
  }
  binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(model.node_dim()));
  binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(model.edge_dim()));
  put_row(os, model.scaler.node_mean);
  put_row(os, model.scaler.node_scale);
  put_row(os, model.scaler.edge_mean);
  put_row(os, model.scaler.edge_scale);
  binary::put<std::uint64_t>(os, model.step);
  auto &m = const_cast<Model &>(model);
  std::uint32_t sections = 0;
  visit_all(m, [&](const std::string &, auto &) { ++sections; });
  binary::put<std::uint32_t>(os, sections);
  visit_all(m, [&](const std::string &name, auto &t) {
    binary::put_string(os, name);
    binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rows()));
    binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index k = 0; k < t.cols(); ++k) {
        binary::put<float>(os, static_cast<float>(t(r, k)));
      }
    }
  });
  if (!os) {
    throw FormatError("write failed: " + path.string());
  }
}

Model read_model(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw FormatError("cannot open " + path.string());
  }
  binary::expect_magic(is, "SMDL");
  binary::expect_version(is, kModelVersion);
  MpnnConfig c;
  for (auto *v : {&c.layers, &c.hidden, &c.classes, &c.max_epochs, &c.patience, &c.batch}) {
    *v = binary::get<std::uint32_t>(is);
  }
  c.target_class = static_cast<std::uint16_t>(binary::get<std::uint32_t>(is));
  c.seed = binary::get<std::uint64_t>(is);
  for (auto *v : {&c.learning_rate, &c.beta1, &c.beta2, &c.adam_eps}) {
    *v = binary::get<double>(is);
  }
  try {
    c.validate();
  } catch (const InvalidParams &e) {
    throw FormatError(std::string("SMDL config: ") + e.what());
  }
  if (c.hidden > 4096 || c.layers > 64 || c.classes > 65535) {
    throw FormatError("SMDL config out of range");
  }
  const auto dx = binary::get<std::uint32_t>(is);
  const auto df = binary::get<std::uint32_t>(is);
  if (dx == 0 || df == 0 || dx > 100000 || df > 100000) {
    throw FormatError("SMDL feature widths out of range");
  }
  Model m;
  m.config = c;
  m.params = Model::Params(dx, df, c);
  m.adam_m = Model::Params(dx, df, c);
  m.adam_v = Model::Params(dx, df, c);
  m.scaler.node_mean = get_row(is, dx);
  m.scaler.node_scale = get_row(is, dx);
  m.scaler.edge_mean = get_row(is, df);
  m.scaler.edge_scale = get_row(is, df);
  m.step = binary::get<std::uint64_t>(is);
  const auto sections = binary::get<std::uint32_t>(is);
  std::uint32_t seen = 0;
  visit_all(m, [&](const std::string &name, auto &t) {
    if (seen++ >= sections) {
      throw FormatError("SMDL is missing section " + name);
    }
    if (binary::get_string(is) != name) {
      throw FormatError("SMDL section order mismatch at " + name);
    }
    const auto rows = binary::get<std::uint32_t>(is);
    const auto cols = binary::get<std::uint32_t>(is);
    if (Eigen::Index(rows) != t.rows() || Eigen::Index(cols) != t.cols()) {
      throw FormatError("SMDL section " + name + " has the wrong shape");
    }
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index k = 0; k < t.cols(); ++k) {
        t(r, k) = double(binary::get<float>(is));
      }
    }
  });
  if (seen != sections) {
    throw FormatError("SMDL has unexpected extra sections");
  }
  return m;
}

} // namespace semir
