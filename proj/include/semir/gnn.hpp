#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "semir/error.hpp"
#include "semir/minor.hpp"
#include "semir/random.hpp"

namespace semir {

struct MpnnConfig {
  std::size_t layers = 3;
  std::size_t hidden = 128;
  std::size_t classes = 2;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::size_t batch = 4; // minors per gradient step
  std::uint16_t target_class = 1;
  std::uint64_t seed = 42;

  void validate() const;
  friend bool operator==(const MpnnConfig &, const MpnnConfig &) = default;
};

/// Trainable tensors. Rows are nodes/edges throughout: H' = H W + b.
template <typename Scalar> struct MpnnParams {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  struct Layer {
    Mat edge_w; // d_f x d
    Row edge_b;
    Mat eps;    // 1 x 1 self weight
    Mat w1, w2; // d x d
    Row b1, b2;
  };

  Mat enc_w; // d_x x d
  Row enc_b;
  std::vector<Layer> layers;
  Mat out_w; // d x K
  Row out_b;

  MpnnParams() = default;
  MpnnParams(std::size_t dx, std::size_t df, const MpnnConfig &cfg) {
    const auto d = static_cast<Eigen::Index>(cfg.hidden);
    enc_w = Mat::Zero(static_cast<Eigen::Index>(dx), d);
    enc_b = Row::Zero(d);
    layers.resize(cfg.layers);
    for (auto &l : layers) {
      l.edge_w = Mat::Zero(static_cast<Eigen::Index>(df), d);
      l.edge_b = Row::Zero(d);
      l.eps = Mat::Zero(1, 1);
      l.w1 = Mat::Zero(d, d);
      l.w2 = Mat::Zero(d, d);
      l.b1 = Row::Zero(d);
      l.b2 = Row::Zero(d);
    }
    out_w = Mat::Zero(d, static_cast<Eigen::Index>(cfg.classes));
    out_b = Row::Zero(static_cast<Eigen::Index>(cfg.classes));
  }

  /// fn(name, tensor) over every tensor in a fixed order. Row vectors are
  /// passed as Eigen::Ref so one callback covers both shapes.
  template <typename Fn> void visit(Fn &&fn) {
    fn("enc.w", enc_w);
    fn("enc.b", enc_b);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      auto &l = layers[i];
      const auto p = "layer" + std::to_string(i) + ".";
      fn(p + "edge.w", l.edge_w);
      fn(p + "edge.b", l.edge_b);
      fn(p + "eps", l.eps);
      fn(p + "mlp.w1", l.w1);
      fn(p + "mlp.b1", l.b1);
      fn(p + "mlp.w2", l.w2);
      fn(p + "mlp.b2", l.b2);
    }
    fn("out.w", out_w);
    fn("out.b", out_b);
  }
  template <typename Fn> void visit(Fn &&fn) const { const_cast<MpnnParams *>(this)->visit(fn); }

  /// Visits matching tensors of two parameter sets side by side.
  template <typename Fn> friend void zip(MpnnParams &a, MpnnParams &b, Fn &&fn) {
    std::vector<std::pair<std::string, Eigen::Map<Mat>>> rhs;
    b.visit([&](const std::string &name, auto &m) { rhs.emplace_back(name, Eigen::Map<Mat>(m.data(), m.rows(), m.cols())); });
    std::size_t i = 0;
    a.visit([&](const std::string &name, auto &m) {
      Eigen::Map<Mat> lhs(m.data(), m.rows(), m.cols());
      fn(name, lhs, rhs[i++].second);
    });
  }

  void set_zero() {
    visit([](const std::string &, auto &m) { m.setZero(); });
  }

  std::size_t count() const {
    std::size_t n = 0;
    visit([&](const std::string &, const auto &m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }
};

/// Per-column standardization fitted on the training minors.
struct FeatureScaler {
  Eigen::RowVectorXd node_mean, node_scale;
  Eigen::RowVectorXd edge_mean, edge_scale;

  static FeatureScaler fit(std::span<const GraphMinor *const> minors);
  static FeatureScaler identity(std::size_t dx, std::size_t df);
};

/// Network input prepared from a minor: standardized features in the model
/// scalar, the undirected edge list, and areas for the loss weights.
template <typename Scalar> struct GraphInput {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Mat x;
  Mat f;
  std::vector<MinorEdge> edges;
  std::vector<double> area;
};

template <typename Scalar> GraphInput<Scalar> prepare_input(const GraphMinor &m, const FeatureScaler &s) {
  using Mat = typename GraphInput<Scalar>::Mat;
  if (m.node_features.cols() != s.node_mean.size() || m.edge_features.cols() != s.edge_mean.size()) {
    throw ContractViolation("feature width does not match the model");
  }
  GraphInput<Scalar> in;
  const Eigen::MatrixXd x = m.node_features.cast<double>();
  const Eigen::MatrixXd f = m.edge_features.cast<double>();
  in.x = ((x.rowwise() - s.node_mean).array().rowwise() / s.node_scale.array()).matrix().template cast<Scalar>();
  in.f = ((f.rowwise() - s.edge_mean).array().rowwise() / s.edge_scale.array()).matrix().template cast<Scalar>();
  if (in.x.rows() == 0) {
    in.x = Mat(0, s.node_mean.size());
  }
  if (in.f.rows() == 0) {
    in.f = Mat(0, s.edge_mean.size());
  }
  in.edges = m.edges;
  for (const auto &n : m.nodes) {
    in.area.push_back(double(n.area));
  }
  return in;
}

/// Edge-conditioned message passing classifier:
///   h0 = x W_enc + b_enc
///   h'_u = MLP((1 + eps) h_u + sum_v relu(h_v + f_uv W_e + b_e))
///   MLP(z) = relu(z W1 + b1) W2 + b2,   logits = h_L W_out + b_out
template <typename Scalar> class MpnnModel {
public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Params = MpnnParams<Scalar>;

  MpnnConfig config;
  FeatureScaler scaler;
  Params params;
  // Adam state
  Params adam_m, adam_v;
  std::uint64_t step = 0;

  MpnnModel() = default;
  MpnnModel(std::size_t dx, std::size_t df, const MpnnConfig &cfg)
      : config(cfg), scaler(FeatureScaler::identity(dx, df)), params(dx, df, cfg), adam_m(dx, df, cfg),
        adam_v(dx, df, cfg) {
    cfg.validate();
    initialize();
  }

  std::size_t node_dim() const { return static_cast<std::size_t>(params.enc_w.rows()); }
  std::size_t edge_dim() const { return static_cast<std::size_t>(params.layers.front().edge_w.rows()); }

  /// Weights uniform in +-1/sqrt(fan_in), biases and eps zero.
  void initialize() {
    auto rng = make_rng(config.seed, "model_init");
    params.visit([&](const std::string &name, auto &m) {
      const bool weight = name.ends_with(".w") || name.ends_with(".w1") || name.ends_with(".w2");
      if (!weight) {
        m.setZero();
        return;
      }
      const double bound = 1.0 / std::sqrt(double(m.rows()));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
          m(i, j) = Scalar(u(rng));
        }
      }
    });
    adam_m.set_zero();
    adam_v.set_zero();
    step = 0;
  }

  struct LayerCache {
    Mat h_in, ee, z, a1, r1;
  };
  struct Cache {
    std::vector<LayerCache> layers;
    Mat h_out;
  };

  Mat forward(const GraphInput<Scalar> &in, Cache *cache = nullptr) const {
    check_input(in);
    const auto n = in.x.rows();
    Mat h = (in.x * params.enc_w).rowwise() + params.enc_b;
    if (cache) {
      cache->layers.clear();
    }
    for (const auto &l : params.layers) {
      const Mat ee = (in.f * l.edge_w).rowwise() + l.edge_b;
      Mat z = (Scalar(1) + l.eps(0, 0)) * h;
      for (std::size_t e = 0; e < in.edges.size(); ++e) {
        const auto [u, v] = in.edges[e];
        const auto ei = static_cast<Eigen::Index>(e);
        z.row(u) += (h.row(v) + ee.row(ei)).cwiseMax(Scalar(0));
        z.row(v) += (h.row(u) + ee.row(ei)).cwiseMax(Scalar(0));
      }
      const Mat a1 = (z * l.w1).rowwise() + l.b1;
      const Mat r1 = a1.cwiseMax(Scalar(0));
      Mat next = (r1 * l.w2).rowwise() + l.b2;
      if (cache) {
        cache->layers.push_back({std::move(h), ee, std::move(z), a1, r1});
      }
      h = std::move(next);
    }
    Mat logits = (h * params.out_w).rowwise() + params.out_b;
    if (cache) {
      cache->h_out = std::move(h);
    }
    (void)n;
    return logits;
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logits).
  void backward(const GraphInput<Scalar> &in, const Cache &cache, const Mat &dlogits, Params &grad) const {
    grad.out_w.noalias() += cache.h_out.transpose() * dlogits;
    grad.out_b += dlogits.colwise().sum();
    Mat dh = dlogits * params.out_w.transpose();
    for (std::size_t li = params.layers.size(); li-- > 0;) {
      const auto &l = params.layers[li];
      const auto &c = cache.layers[li];
      auto &g = grad.layers[li];
      g.w2.noalias() += c.r1.transpose() * dh;
      g.b2 += dh.colwise().sum();
      const Mat da1 = (dh * l.w2.transpose()).cwiseProduct((c.a1.array() > Scalar(0)).matrix().template cast<Scalar>());
      g.w1.noalias() += c.z.transpose() * da1;
      g.b1 += da1.colwise().sum();
      const Mat dz = da1 * l.w1.transpose();
      g.eps(0, 0) += dz.cwiseProduct(c.h_in).sum();
      Mat dh_in = (Scalar(1) + l.eps(0, 0)) * dz;
      Mat dee = Mat::Zero(c.ee.rows(), c.ee.cols());
      for (std::size_t e = 0; e < in.edges.size(); ++e) {
        const auto [u, v] = in.edges[e];
        const auto ei = static_cast<Eigen::Index>(e);
        for (Eigen::Index k = 0; k < dz.cols(); ++k) {
          if (c.h_in(v, k) + c.ee(ei, k) > Scalar(0)) { // message v -> u
            dh_in(v, k) += dz(u, k);
            dee(ei, k) += dz(u, k);
          }
          if (c.h_in(u, k) + c.ee(ei, k) > Scalar(0)) { // message u -> v
            dh_in(u, k) += dz(v, k);
            dee(ei, k) += dz(v, k);
          }
        }
      }
      g.edge_w.noalias() += in.f.transpose() * dee;
      g.edge_b += dee.colwise().sum();
      dh = std::move(dh_in);
    }
    grad.enc_w.noalias() += in.x.transpose() * dh;
    grad.enc_b += dh.colwise().sum();
  }

private:
  void check_input(const GraphInput<Scalar> &in) const {
    if (static_cast<std::size_t>(in.x.cols()) != node_dim() || static_cast<std::size_t>(in.f.cols()) != edge_dim()) {
      throw ContractViolation("input feature width does not match the model");
    }
    if (static_cast<std::size_t>(in.f.rows()) != in.edges.size()) {
      throw ContractViolation("edge feature rows do not match the edge list");
    }
    for (const auto &[u, v] : in.edges) {
      if (u >= in.x.rows() || v >= in.x.rows()) {
        throw ContractViolation("edge references a missing node");
      }
    }
  }
};

/// Area-weighted softmax cross entropy, sum_u a_u CE_u / sum_u a_u. Writes
/// d(loss)/d(logits) when `dlogits` is given.
template <typename Scalar, typename Mat>
double weighted_cross_entropy(const Mat &logits, std::span<const std::uint16_t> labels, std::span<const double> area,
                              Mat *dlogits = nullptr) {
  const auto n = logits.rows();
  if (static_cast<std::size_t>(n) != labels.size() || labels.size() != area.size()) {
    throw ContractViolation("loss: logits, labels and areas disagree in length");
  }
  if (dlogits) {
    *dlogits = Mat::Zero(n, logits.cols());
  }
  double total = 0.0;
  for (auto a : area) {
    total += a;
  }
  if (n == 0 || total <= 0) {
    return 0.0;
  }
  double loss = 0.0;
  for (Eigen::Index u = 0; u < n; ++u) {
    const auto y = labels[static_cast<std::size_t>(u)];
    if (y >= logits.cols()) {
      throw InvalidParams("label " + std::to_string(y) + " outside the class range");
    }
    const Scalar mx = logits.row(u).maxCoeff();
    const auto shifted = (logits.row(u).array() - mx).eval();
    const Scalar lse = std::log(shifted.exp().sum());
    const double w = area[static_cast<std::size_t>(u)] / total;
    loss += w * double(lse - shifted(y));
    if (dlogits) {
      auto p = (shifted - lse).exp().eval();
      p(y) -= Scalar(1);
      dlogits->row(u) = Scalar(w) * p.matrix();
    }
  }
  return loss;
}

/// Argmax per row; ties go to the smaller class.
template <typename Mat> std::vector<std::uint16_t> argmax_rows(const Mat &logits) {
  std::vector<std::uint16_t> out(static_cast<std::size_t>(logits.rows()), 0);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(r, c) > logits(r, best)) {
        best = c;
      }
    }
    out[static_cast<std::size_t>(r)] = static_cast<std::uint16_t>(best);
  }
  return out;
}

using Model = MpnnModel<double>;

/// Loss and gradient of one minor; gradient is added to `grad` scaled by `weight`.
double loss_and_gradient(const Model &model, const GraphInput<double> &in, std::span<const std::uint16_t> labels,
                         Model::Params &grad, double weight = 1.0);

/// One Adam update from an accumulated gradient.
void adam_step(Model &model, Model::Params &grad);

std::vector<std::uint16_t> predict(const Model &model, const GraphMinor &minor);

/// One labeled graph for training or validation.
struct TrainSample {
  const GraphMinor *minor = nullptr;
  const LabelMap *labels = nullptr; // voxel ground truth
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_dice = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_dice = 0.0;
  std::size_t stopped_epoch = 0;
};

/// Fits the scaler on `train`, reinitializes weights, then runs Adam over
/// shuffled mini-batches until validation lifted Dice stalls for `patience`
/// epochs. The model ends holding the best epoch's weights. Throws
/// DivergenceError on a non-finite loss.
TrainReport train(Model &model, std::span<const TrainSample> train_set, std::span<const TrainSample> val_set);

/// Mean lifted Dice of the target class over a set.
double lifted_dice(const Model &model, std::span<const TrainSample> set);

/// Node labels used as training targets: majority over the target-class mask.
std::vector<std::uint16_t> supernode_targets(const GraphMinor &minor, const LabelMap &labels, std::uint16_t target);

void write_train_csv(const std::filesystem::path &path, const TrainReport &report);

/// SMDL: "SMDL", u32 version, config block, scaler, step, then named f32
/// sections (parameters, then Adam moments as "adam_m.*" / "adam_v.*").
void write_model(const std::filesystem::path &path, const Model &model);
Model read_model(const std::filesystem::path &path);

} // namespace semir
