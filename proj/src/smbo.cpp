#include "semir/smbo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>

#include "semir/error.hpp"
#include "semir/minor_io.hpp"

namespace semir {

std::vector<double> GridAxis::values() const {
  if (lo == hi || levels <= 1) {
    return {lo};
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < levels; ++i) {
    const double t = double(i) / double(levels - 1);
    double v = log_scale ? lo * std::pow(hi / lo, t) : lo + t * (hi - lo);
    if (integer) {
      v = std::round(v);
    }
    if (out.empty() || v != out.back()) {
      out.push_back(v);
    }
  }
  return out;
}

void GridAxis::validate(const std::string &name) const {
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
    throw InvalidParams(name + ": bounds must be finite with lo <= hi");
  }
  if (levels == 0) {
    throw InvalidParams(name + ": grid needs at least one level");
  }
  if (log_scale && lo <= 0) {
    throw InvalidParams(name + ": log-spaced grid needs lo > 0");
  }
}

void ParamSpace::validate() const {
  psi.validate("psi");
  alpha.validate("alpha");
  beta_min.validate("beta_min");
  beta_max.validate("beta_max");
  m_min.validate("m_min");
  m_max.validate("m_max");
  if (psi.lo < 0) {
    throw InvalidParams("psi: lower bound must be >= 0");
  }
  if (beta_min.lo < 1) {
    throw InvalidParams("beta_min: lower bound must be >= 1");
  }
  if (psi.lo > alpha.hi || beta_min.lo > beta_max.hi || m_min.lo > m_max.hi) {
    throw InvalidParams("parameter space has no feasible point");
  }
  base.validate();
}

MinorParams ParamSpace::sample(Rng &rng) const {
  const std::array<std::vector<double>, kDims> grid{psi.values(),      alpha.values(), beta_min.values(),
                                                    beta_max.values(), m_min.values(), m_max.values()};
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::array<double, kDims> v{};
    for (std::size_t i = 0; i < kDims; ++i) {
      v[i] = grid[i][std::uniform_int_distribution<std::size_t>(0, grid[i].size() - 1)(rng)];
    }
    if (v[0] > v[1] || v[2] > v[3] || v[4] > v[5]) {
      continue;
    }
    MinorParams p = base;
    p.psi = v[0];
    p.alpha = v[1];
    p.beta_min = static_cast<std::uint64_t>(v[2]);
    p.beta_max = static_cast<std::uint64_t>(v[3]);
    p.m_min = v[4];
    p.m_max = v[5];
    return p;
  }
  throw InvalidParams("parameter space rejected 10000 consecutive samples");
}

std::array<double, ParamSpace::kDims> ParamSpace::encode(const MinorParams &p) {
  return {p.psi, p.alpha, std::log10(double(p.beta_min)), std::log10(double(p.beta_max)), p.m_min, p.m_max};
}

ParamSpace default_space(const std::vector<LabeledVolume> &samples, const MinorParams &base) {
  if (samples.empty()) {
    throw InvalidParams("few-shot set is empty");
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t voxels = std::numeric_limits<std::size_t>::max();
  double spread = 0.0;
  for (const auto &s : samples) {
    const auto [mn, mx] = std::minmax_element(s.volume.data.begin(), s.volume.data.end());
    lo = std::min(lo, double(*mn));
    hi = std::max(hi, double(*mx));
    voxels = std::min(voxels, s.volume.dims.voxels());
    // the largest possible distance grows with the channel count under L1/L2
    const double c = double(s.volume.dims.c);
    spread = std::max(spread, base.norm == NormOrder::L1 ? c : base.norm == NormOrder::L2 ? std::sqrt(c) : 1.0);
  }
  const double range = (hi - lo) * spread;
  ParamSpace s;
  s.base = base;
  s.psi = {0.0, range, 64};
  s.alpha = {0.0, range, 64};
  const double cap = std::max(1.0, std::floor(double(voxels) / 3.0));
  s.beta_min = {1.0, 1.0, 1, false, true};
  s.beta_max = {cap, cap, 1, false, true};
  s.m_min = {lo, lo, 1};
  s.m_max = {hi, hi, 1};
  return s;
}

namespace {

nlohmann::json axis_to_json(const GridAxis &a) {
  return {{"lo", a.lo}, {"hi", a.hi}, {"levels", a.levels}, {"log", a.log_scale}};
}

GridAxis axis_from_json(const nlohmann::json &j, const GridAxis &fallback, bool integer) {
  GridAxis a = fallback;
  a.integer = integer;
  if (j.is_number()) {
    a.lo = a.hi = j.get<double>();
    a.levels = 1;
    return a;
  }
  a.lo = j.value("lo", a.lo);
  a.hi = j.value("hi", a.hi);
  a.levels = j.value("levels", a.lo == a.hi ? std::size_t{1} : a.levels);
  a.log_scale = j.value("log", a.log_scale);
  return a;
}

} // namespace

nlohmann::json space_to_json(const ParamSpace &s) {
  nlohmann::json j;
  j["psi"] = axis_to_json(s.psi);
  j["alpha"] = axis_to_json(s.alpha);
  j["beta_min"] = axis_to_json(s.beta_min);
  j["beta_max"] = axis_to_json(s.beta_max);
  j["m_min"] = axis_to_json(s.m_min);
  j["m_max"] = axis_to_json(s.m_max);
  j["norm_order"] = norm_name(s.base.norm);
  j["connectivity"] = s.base.connectivity;
  j["traversal_divisor"] = s.base.traversal_divisor;
  j["epsilon"] = s.base.epsilon;
  return j;
}

ParamSpace space_from_json(const nlohmann::json &j, const MinorParams &base) {
  ParamSpace s;
  s.base = base;
  try {
    s.psi = axis_from_json(j.at("psi"), {0, 0, 64}, false);
    s.alpha = axis_from_json(j.at("alpha"), {0, 0, 64}, false);
    s.beta_min = axis_from_json(j.value("beta_min", nlohmann::json(1.0)), {1, 1, 16, true}, true);
    s.beta_max = axis_from_json(j.value("beta_max", nlohmann::json(double(std::numeric_limits<std::uint32_t>::max()))),
                                {1, 1, 16, true}, true);
    s.m_min = axis_from_json(j.value("m_min", nlohmann::json(-1e30)), {0, 0, 16}, false);
    s.m_max = axis_from_json(j.value("m_max", nlohmann::json(1e30)), {0, 0, 16}, false);
    if (j.contains("norm_order")) {
      const auto &n = j["norm_order"];
      s.base.norm = parse_norm(n.is_string() ? n.get<std::string>() : std::to_string(n.get<int>()));
    }
    s.base.connectivity = j.value("connectivity", s.base.connectivity);
    s.base.traversal_divisor = j.value("traversal_divisor", s.base.traversal_divisor);
    s.base.epsilon = j.value("epsilon", s.base.epsilon);
  } catch (const nlohmann::json::exception &e) {
    throw InvalidParams(std::string("bad space JSON: ") + e.what());
  }
  s.validate();
  return s;
}

void ExtraTrees::fit(const Eigen::MatrixXd &x, const Eigen::VectorXd &y, std::uint64_t seed) {
  if (x.rows() != y.size() || x.rows() == 0) {
    throw InvalidParams("surrogate needs a nonempty, aligned training set");
  }
  Rng rng(seed);
  trees_.assign(opt_.trees, {});
  for (auto &tree : trees_) {
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(x.rows()));
    std::iota(rows.begin(), rows.end(), 0);
    grow(tree, x, y, rows, 0, rows.size(), rng);
  }
}

std::int32_t ExtraTrees::grow(Tree &tree, const Eigen::MatrixXd &x, const Eigen::VectorXd &y,
                              std::vector<Eigen::Index> &rows, std::size_t begin, std::size_t end, Rng &rng) const {
  const auto id = static_cast<std::int32_t>(tree.size());
  tree.emplace_back();
  const double n = double(end - begin);
  double mean = 0.0;
  for (auto i = begin; i < end; ++i) {
    mean += y[rows[i]];
  }
  mean /= n;
  tree[static_cast<std::size_t>(id)].value = mean;

  double sse = 0.0;
  for (auto i = begin; i < end; ++i) {
    sse += (y[rows[i]] - mean) * (y[rows[i]] - mean);
  }
  if (end - begin < 2 * opt_.min_leaf || sse <= 0.0) {
    return id;
  }

  int best_feature = -1;
  double best_threshold = 0.0, best_score = -std::numeric_limits<double>::infinity();
  for (int f = 0; f < x.cols(); ++f) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (auto i = begin; i < end; ++i) {
      lo = std::min(lo, x(rows[i], f));
      hi = std::max(hi, x(rows[i], f));
    }
    if (!(hi > lo)) {
      continue;
    }
    double t = std::uniform_real_distribution<double>(lo, hi)(rng);
    if (t <= lo) {
      t = std::nextafter(lo, hi); // keep both sides nonempty
    }
    double sl = 0, sr = 0, ql = 0, qr = 0;
    std::size_t nl = 0, nr = 0;
    for (auto i = begin; i < end; ++i) {
      const double v = y[rows[i]];
      if (x(rows[i], f) < t) {
        sl += v, ql += v * v, ++nl;
      } else {
        sr += v, qr += v * v, ++nr;
      }
    }
    if (nl < opt_.min_leaf || nr < opt_.min_leaf) {
      continue;
    }
    const double child_sse = (ql - sl * sl / double(nl)) + (qr - sr * sr / double(nr));
    const double score = sse - child_sse;
    if (score > best_score) {
      best_score = score;
      best_feature = f;
      best_threshold = t;
    }
  }
  if (best_feature < 0) {
    return id;
  }
  const auto mid = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                  rows.begin() + static_cast<std::ptrdiff_t>(end),
                                  [&](Eigen::Index r) { return x(r, best_feature) < best_threshold; }) -
                   rows.begin();
  const auto left = grow(tree, x, y, rows, begin, static_cast<std::size_t>(mid), rng);
  const auto right = grow(tree, x, y, rows, static_cast<std::size_t>(mid), end, rng);
  auto &node = tree[static_cast<std::size_t>(id)];
  node.feature = best_feature;
  node.threshold = best_threshold;
  node.left = left;
  node.right = right;
  return id;
}

std::pair<double, double> ExtraTrees::predict(const Eigen::RowVectorXd &x) const {
  if (trees_.empty()) {
    throw ContractViolation("surrogate used before fit");
  }
  double s = 0.0, q = 0.0;
  for (const auto &tree : trees_) {
    std::size_t n = 0;
    while (tree[n].feature >= 0) {
      n = static_cast<std::size_t>(x[tree[n].feature] < tree[n].threshold ? tree[n].left : tree[n].right);
    }
    s += tree[n].value;
    q += tree[n].value * tree[n].value;
  }
  const double m = double(trees_.size());
  const double mean = s / m;
  return {mean, std::sqrt(std::max(0.0, q / m - mean * mean))};
}

double expected_improvement(double mean, double std, double best) {
  if (!(std >= 1e-12)) {
    return std::max(best - mean, 0.0);
  }
  const double z = (best - mean) / std;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(0.0, (best - mean) * cdf + std * pdf);
}

namespace {

bool same_point(const MinorParams &a, const MinorParams &b) {
  return a.psi == b.psi && a.alpha == b.alpha && a.beta_min == b.beta_min && a.beta_max == b.beta_max &&
         a.m_min == b.m_min && a.m_max == b.m_max;
}

} // namespace

OptimizeResult few_shot_optimize(const ParamSpace &space, const BoundaryObjective &objective,
                                 const OptimizeOptions &opt) {
  space.validate();
  if (opt.n_init < 2) {
    throw InvalidParams("n_init must be at least 2");
  }
  auto sampler = make_rng(opt.seed, "optimizer");
  auto surrogate_seeds = make_rng(opt.seed, "surrogate");
  OptimizeResult out;
  auto evaluated = [&](const MinorParams &p) {
    return std::any_of(out.history.begin(), out.history.end(),
                       [&](const HistoryEntry &h) { return same_point(h.params, p); });
  };
  auto record = [&](const MinorParams &p, const char *phase) {
    const double loss = objective(p);
    out.history.push_back({out.history.size(), phase, p, loss});
  };

  for (std::size_t i = 0; i < opt.n_init; ++i) {
    record(space.sample(sampler), "init");
  }

  ExtraTrees surrogate(opt.surrogate);
  for (std::size_t it = 0; it < opt.n_iter; ++it) {
    const auto n = static_cast<Eigen::Index>(out.history.size());
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(ParamSpace::kDims));
    Eigen::VectorXd y(n);
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto &h = out.history[static_cast<std::size_t>(r)];
      const auto e = ParamSpace::encode(h.params);
      for (std::size_t c = 0; c < e.size(); ++c) {
        x(r, static_cast<Eigen::Index>(c)) = e[c];
      }
      y[r] = h.loss;
      best = std::min(best, h.loss);
    }
    surrogate.fit(x, y, surrogate_seeds());

    std::optional<MinorParams> pick;
    double pick_ei = -1.0;
    for (std::size_t c = 0; c < opt.candidates; ++c) {
      const auto cand = space.sample(sampler);
      if (evaluated(cand)) {
        continue;
      }
      const auto e = ParamSpace::encode(cand);
      const auto [mu, sd] =
          surrogate.predict(Eigen::Map<const Eigen::RowVectorXd>(e.data(), static_cast<Eigen::Index>(e.size())));
      const double ei = expected_improvement(mu, sd, best);
      if (ei > pick_ei) {
        pick_ei = ei;
        pick = cand;
      }
    }
    if (!pick) {
      break; // every candidate drawn was already evaluated: the grid is exhausted
    }
    record(*pick, "smbo");
  }

  const auto best = std::min_element(out.history.begin(), out.history.end(),
                                     [](const HistoryEntry &a, const HistoryEntry &b) { return a.loss < b.loss; });
  out.best = best->params;
  out.best_loss = best->loss;
  return out;
}

void write_history_csv(std::ostream &os, const std::vector<HistoryEntry> &history) {
  os << "iteration,phase,psi,alpha,beta_min,beta_max,m_min,m_max,loss\n";
  os << std::setprecision(10);
  for (const auto &h : history) {
    os << h.iteration << ',' << h.phase << ',' << h.params.psi << ',' << h.params.alpha << ',' << h.params.beta_min
       << ',' << h.params.beta_max << ',' << h.params.m_min << ',' << h.params.m_max << ',' << h.loss << '\n';
  }
}

void write_history_csv(const std::filesystem::path &path, const std::vector<HistoryEntry> &history) {
  std::ofstream os(path);
  if (!os) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  write_history_csv(os, history);
}

} // namespace semir
