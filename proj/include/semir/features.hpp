#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "semir/error.hpp"
#include "semir/tensor.hpp"

namespace semir {

/// Streaming per-supernode sums gathered during flood fill. Coordinates and
/// intensities are accumulated relative to the seed voxel so the second
/// moments stay well conditioned on large volumes.
template <typename Scalar> class SupernodeAccumulator {
public:
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
  using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  SupernodeAccumulator() = default;
  SupernodeAccumulator(const Coord &seed, std::span<const float> seed_intensity) { reset(seed, seed_intensity); }

  void reset(const Coord &seed, std::span<const float> seed_intensity) {
    const auto c = static_cast<Eigen::Index>(seed_intensity.size());
    area_ = 0;
    boundary_len_ = 0;
    seed_ = seed;
    canonical_ = seed;
    coord_origin_ = Vec3(Scalar(seed[0]), Scalar(seed[1]), Scalar(seed[2]));
    intensity_origin_.resize(c);
    for (Eigen::Index i = 0; i < c; ++i) {
      intensity_origin_[i] = Scalar(seed_intensity[static_cast<std::size_t>(i)]);
    }
    coord_sum_.setZero();
    coord_outer_.setZero();
    intensity_sum_ = VecX::Zero(c);
    intensity_outer_ = MatX::Zero(c, c);
    scratch_.resize(c);
  }

  void add(const Coord &v, std::span<const float> intensity) {
    ++area_;
    if (v < canonical_) {
      canonical_ = v;
    }
    const Vec3 x = Vec3(Scalar(v[0]), Scalar(v[1]), Scalar(v[2])) - coord_origin_;
    coord_sum_ += x;
    coord_outer_.noalias() += x * x.transpose();
    for (Eigen::Index i = 0; i < scratch_.size(); ++i) {
      scratch_[i] = Scalar(intensity[static_cast<std::size_t>(i)]) - intensity_origin_[i];
    }
    intensity_sum_ += scratch_;
    intensity_outer_.noalias() += scratch_ * scratch_.transpose();
  }

  void add_exposure(std::uint64_t n = 1) { boundary_len_ += n; }

  std::uint64_t area() const { return area_; }
  std::uint64_t boundary_len() const { return boundary_len_; }
  const Coord &canonical() const { return canonical_; }
  const Coord &seed() const { return seed_; }
  Eigen::Index channels() const { return intensity_origin_.size(); }

  VecX mean_intensity() const { return intensity_origin_ + intensity_sum_ / Scalar(area_); }
  Vec3 centroid() const { return coord_origin_ + coord_sum_ / Scalar(area_); }

  MatX intensity_covariance() const {
    const VecX m = intensity_sum_ / Scalar(area_);
    MatX cov = intensity_outer_ / Scalar(area_) - m * m.transpose();
    return Scalar(0.5) * (cov + cov.transpose());
  }

  Mat3 coord_covariance() const {
    const Vec3 m = coord_sum_ / Scalar(area_);
    Mat3 cov = coord_outer_ / Scalar(area_) - m * m.transpose();
    return Scalar(0.5) * (cov + cov.transpose());
  }

private:
  std::uint64_t area_ = 0;
  std::uint64_t boundary_len_ = 0;
  Coord seed_{0, 0, 0};
  Coord canonical_{0, 0, 0};
  Vec3 coord_origin_ = Vec3::Zero();
  VecX intensity_origin_;
  Vec3 coord_sum_ = Vec3::Zero();
  Mat3 coord_outer_ = Mat3::Zero();
  VecX intensity_sum_;
  MatX intensity_outer_;
  VecX scratch_;
};

/// Eigen-decomposition of a symmetric 3x3 matrix, eigenvalues descending.
/// Closed form first; when two roots nearly coincide the closed form loses
/// its eigenvectors, so the Jacobi SVD (exact for PSD input) takes over.
template <typename Scalar>
void symmetric_eigen3(const Eigen::Matrix<Scalar, 3, 3> &m, Eigen::Matrix<Scalar, 3, 1> &values,
                      Eigen::Matrix<Scalar, 3, 3> &vectors) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, 3, 3>> es;
  es.computeDirect(m);
  const auto &ev = es.eigenvalues(); // ascending
  const Scalar scale = std::max<Scalar>(Scalar(1), ev.cwiseAbs().maxCoeff());
  const Scalar gap = std::min(ev[1] - ev[0], ev[2] - ev[1]);
  const Scalar residual = (m * es.eigenvectors() - es.eigenvectors() * ev.asDiagonal()).norm();
  if (es.info() == Eigen::Success && gap > Scalar(1e-12) * scale && residual <= Scalar(1e-9) * scale) {
    for (int i = 0; i < 3; ++i) {
      values[i] = ev[2 - i];
      vectors.col(i) = es.eigenvectors().col(2 - i);
    }
    return;
  }
  Eigen::JacobiSVD<Eigen::Matrix<Scalar, 3, 3>> svd(m, Eigen::ComputeFullU);
  values = svd.singularValues();
  vectors = svd.matrixU();
}

template <typename Scalar> struct NodeFeaturesT {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  std::uint32_t id = 0;
  Scalar area = 0;
  Scalar boundary_len = 0;
  Scalar compactness = 0;
  Scalar elongation = 0;
  VecX sigma;      // per-channel std
  MatX covariance; // C x C intensity covariance
  Vec3 axis = Vec3::UnitX();
  Coord canonical{0, 0, 0};
  // kept for edge features
  VecX mean;
  Vec3 centroid = Vec3::Zero();
  Vec3 eigenvalues = Vec3::Zero(); // spatial, descending
};

template <typename Scalar>
NodeFeaturesT<Scalar> finalize_node_features(const SupernodeAccumulator<Scalar> &acc, std::uint32_t id,
                                             Scalar epsilon) {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
  if (acc.area() == 0) {
    throw ContractViolation("cannot finalize an empty supernode");
  }
  if (!(epsilon > 0)) {
    throw ContractViolation("epsilon must be positive");
  }
  NodeFeaturesT<Scalar> f;
  f.id = id;
  f.area = Scalar(acc.area());
  f.boundary_len = Scalar(acc.boundary_len());
  f.canonical = acc.canonical();
  f.mean = acc.mean_intensity();
  f.centroid = acc.centroid();
  f.covariance = acc.intensity_covariance();
  f.sigma = f.covariance.diagonal().cwiseMax(Scalar(0)).cwiseSqrt();

  Vec3 lambda;
  Mat3 vecs;
  symmetric_eigen3<Scalar>(acc.coord_covariance(), lambda, vecs);
  lambda = lambda.cwiseMax(Scalar(0));
  f.eigenvalues = lambda;
  Vec3 axis = vecs.col(0).normalized();
  Eigen::Index big = 0;
  axis.cwiseAbs().maxCoeff(&big);
  if (axis[big] < 0) {
    axis = -axis;
  }
  f.axis = axis;
  f.elongation = std::sqrt((lambda[0] + epsilon) / (lambda[1] + epsilon));

  const Scalar b = f.boundary_len;
  const Scalar comp = Scalar(36) * std::numbers::pi_v<Scalar> * f.area * f.area / (b * b * b + epsilon);
  f.compactness = std::min(comp, Scalar(1));
  return f;
}

template <typename Scalar> struct EdgeFeaturesT {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Scalar log_area = 0;
  Scalar log_boundary = 0;
  Scalar log_compactness = 0;
  Scalar log_elongation = 0;
  Vec3 centroid_delta = Vec3::Zero();
  Scalar cos_theta = 0;
  VecX intensity_delta;
};

/// Relative features for an undirected minor edge. The endpoints are ordered
/// by area (ties: smaller id first) so the result does not depend on the
/// argument order; signed differences are larger-minus-smaller.
template <typename Scalar>
EdgeFeaturesT<Scalar> compute_edge_features(const NodeFeaturesT<Scalar> &u, const NodeFeaturesT<Scalar> &v,
                                            Scalar epsilon) {
  const bool u_first = u.area > v.area || (u.area == v.area && u.id <= v.id);
  const auto &hi = u_first ? u : v;
  const auto &lo = u_first ? v : u;
  auto log_ratio = [epsilon](Scalar a, Scalar b) { return std::log((a + epsilon) / (b + epsilon)); };

  EdgeFeaturesT<Scalar> e;
  e.log_area = log_ratio(hi.area, lo.area);
  e.log_boundary = log_ratio(hi.boundary_len, lo.boundary_len);
  e.log_compactness = log_ratio(hi.compactness, lo.compactness);
  e.log_elongation = log_ratio(hi.elongation, lo.elongation);
  e.centroid_delta = (hi.centroid - lo.centroid) / std::sqrt(hi.eigenvalues[0] + lo.eigenvalues[0] + epsilon);
  e.cos_theta = std::min(Scalar(1), std::abs(hi.axis.dot(lo.axis)));
  const auto var = (hi.sigma.array().square() + lo.sigma.array().square() + epsilon).sqrt();
  e.intensity_delta = ((hi.mean - lo.mean).array() / var).matrix();
  return e;
}

/// Column counts of the assembled matrices for C channels.
inline std::size_t node_feature_dim(std::size_t channels) { return 10 + 2 * channels + channels * (channels + 1) / 2; }
inline std::size_t edge_feature_dim(std::size_t channels) { return 8 + channels; }

std::vector<std::string> node_feature_names(std::size_t channels);
std::vector<std::string> edge_feature_names(std::size_t channels);

/// Row layout: area, boundary_len, compactness, elongation, axis(3),
/// canonical voxel scaled to [0,1]^3, sigma(C), mean(C), covariance upper triangle.
template <typename Scalar, typename Row>
void write_node_row(const NodeFeaturesT<Scalar> &f, const VolumeDims &dims, Row &&row) {
  const auto c = static_cast<Eigen::Index>(f.mean.size());
  Eigen::Index k = 0;
  row[k++] = static_cast<float>(f.area);
  row[k++] = static_cast<float>(f.boundary_len);
  row[k++] = static_cast<float>(f.compactness);
  row[k++] = static_cast<float>(f.elongation);
  for (int i = 0; i < 3; ++i) {
    row[k++] = static_cast<float>(f.axis[i]);
  }
  const std::size_t extent[3] = {dims.h, dims.w, dims.d};
  for (int i = 0; i < 3; ++i) {
    row[k++] = extent[i] > 1 ? static_cast<float>(double(f.canonical[i]) / double(extent[i] - 1)) : 0.0f;
  }
  for (Eigen::Index i = 0; i < c; ++i) {
    row[k++] = static_cast<float>(f.sigma[i]);
  }
  for (Eigen::Index i = 0; i < c; ++i) {
    row[k++] = static_cast<float>(f.mean[i]);
  }
  for (Eigen::Index i = 0; i < c; ++i) {
    for (Eigen::Index j = i; j < c; ++j) {
      row[k++] = static_cast<float>(f.covariance(i, j));
    }
  }
}

template <typename Scalar, typename Row> void write_edge_row(const EdgeFeaturesT<Scalar> &e, Row &&row) {
  Eigen::Index k = 0;
  row[k++] = static_cast<float>(e.log_area);
  row[k++] = static_cast<float>(e.log_boundary);
  row[k++] = static_cast<float>(e.log_compactness);
  row[k++] = static_cast<float>(e.log_elongation);
  for (int i = 0; i < 3; ++i) {
    row[k++] = static_cast<float>(e.centroid_delta[i]);
  }
  row[k++] = static_cast<float>(e.cos_theta);
  for (Eigen::Index i = 0; i < e.intensity_delta.size(); ++i) {
    row[k++] = static_cast<float>(e.intensity_delta[i]);
  }
}

using NodeFeatures = NodeFeaturesT<double>;
using EdgeFeatures = EdgeFeaturesT<double>;

using MinorEdge = std::pair<std::uint32_t, std::uint32_t>;

struct FeatureMatrices {
  Eigen::MatrixXf nodes; // |V| x node_feature_dim(C)
  Eigen::MatrixXf edges; // |E| x edge_feature_dim(C)
};

/// Builds X and F for a finalized minor. `nodes[i].id` must equal i.
FeatureMatrices assemble_feature_matrices(std::span<const NodeFeatures> nodes, std::span<const MinorEdge> edges,
                                          const VolumeDims &dims, double epsilon);

} // namespace semir
