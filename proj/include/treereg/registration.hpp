#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "treereg/bh_tree.hpp"
#include "treereg/point_cloud.hpp"
#include "treereg/rigid.hpp"

namespace treereg {

/// One weighted source->target match.
struct CorrPair {
  std::int64_t source;
  std::int64_t target;
  double weight;
};

struct Correspondences {
  std::vector<CorrPair> pairs;
};

/// Weighted multiply-linked correspondence cost:
/// sum of w_ij * ||(R*y_i + t) - x_j||^2.
inline double cost_eq1(const RigidTransform& transform,
                       const PointCloud& source, const PointCloud& target,
                       const Correspondences& corr) {
  double sum = 0.0;
  for (const CorrPair& p : corr.pairs) {
    if (p.source < 0 || p.source >= static_cast<std::int64_t>(source.size()) ||
        p.target < 0 || p.target >= static_cast<std::int64_t>(target.size())) {
      throw std::out_of_range("correspondence index out of range");
    }
    if (!(p.weight >= 0.0) || !std::isfinite(p.weight)) {
      throw std::invalid_argument("correspondence weight must be finite, >= 0");
    }
    sum += p.weight *
           (transform.apply(source.points[p.source]) - target.points[p.target])
               .squaredNorm();
  }
  return sum;
}

/// Closed-form weighted rigid alignment: finds (R, t) minimizing
/// sum of w_i * ||R*source_i + t - target_i||^2 via the SVD of the weighted
/// cross-covariance, with the determinant guard diag(1,1,det(UV^T)) so a
/// reflection never leaks through. Throws on rank-deficient input (all
/// points collinear or coincident after weighting).
inline RigidTransform procrustes(const std::vector<Eigen::Vector3d>& source,
                                 const std::vector<Eigen::Vector3d>& target,
                                 const std::vector<double>& weights) {
  if (source.size() != target.size() || source.size() != weights.size()) {
    throw std::invalid_argument("procrustes: size mismatch");
  }
  double wsum = 0.0;
  std::size_t positive = 0;
  for (const double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw std::invalid_argument("procrustes: weights must be finite, >= 0");
    }
    wsum += w;
    positive += w > 0.0;
  }
  if (positive < 3) {
    throw std::invalid_argument(
        "procrustes: need at least 3 pairs with positive weight");
  }

  Eigen::Vector3d mean_src = Eigen::Vector3d::Zero();
  Eigen::Vector3d mean_tgt = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    mean_src += weights[i] * source[i];
    mean_tgt += weights[i] * target[i];
  }
  mean_src /= wsum;
  mean_tgt /= wsum;

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    h += weights[i] * (target[i] - mean_tgt) * (source[i] - mean_src).transpose();
  }

  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  // Rank >= 2 is required for a unique rotation (planar sets are fine, the
  // reflection guard resolves them; collinear or collapsed sets are not).
  if (!(sv(1) > sv(0) * 1e-13)) {
    throw std::invalid_argument(
        "procrustes: rank-deficient covariance (collinear or coincident "
        "points)");
  }

  const double sign =
      (svd.matrixU() * svd.matrixV().transpose()).determinant() >= 0.0 ? 1.0
                                                                       : -1.0;
  RigidTransform out;
  out.rotation = svd.matrixU() *
                 Eigen::Vector3d(1.0, 1.0, sign).asDiagonal() *
                 svd.matrixV().transpose();
  out.translation = mean_tgt - out.rotation * mean_src;
  return out;
}

inline RigidTransform procrustes(const std::vector<Eigen::Vector3d>& source,
                                 const std::vector<Eigen::Vector3d>& target) {
  return procrustes(source, target, std::vector<double>(source.size(), 1.0));
}

/// Multi-scale tree cost: for every depth 1..d0, the fully-linked sum of
/// w_y * w_x * ||(R*mu_y + t) - mu_x||^2 over node pairs. Since the
/// normalized weights sum to 1 per depth, the double sum collapses to
/// E[|a|^2] + E[|b|^2] - 2*E[a].E[b], evaluated in linear time. Diagnostic
/// cost only; training minimizes the learned loss instead.
inline double cost_eq2(const RigidTransform& transform, const BHTree& tree_y,
                       const BHTree& tree_x) {
  if (tree_y.max_depth != tree_x.max_depth) {
    throw std::invalid_argument("cost_eq2: trees must share max_depth");
  }
  double total = 0.0;
  for (int d = 1; d <= tree_y.max_depth; ++d) {
    const DepthLevel& ly = tree_y.levels[d];
    const DepthLevel& lx = tree_x.levels[d];
    double qa = 0.0, qb = 0.0;
    Eigen::Vector3d sa = Eigen::Vector3d::Zero();
    Eigen::Vector3d sb = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < ly.size(); ++i) {
      const Eigen::Vector3d a = transform.apply(ly.com[i]);
      qa += ly.inv_density[i] * a.squaredNorm();
      sa += ly.inv_density[i] * a;
    }
    for (std::size_t i = 0; i < lx.size(); ++i) {
      const Eigen::Vector3d& b = lx.com[i];
      qb += lx.inv_density[i] * b.squaredNorm();
      sb += lx.inv_density[i] * b;
    }
    total += qa + qb - 2.0 * sa.dot(sb);
  }
  return total;
}

struct IcpResult {
  RigidTransform transform;
  int iterations = 0;
  double cost = std::numeric_limits<double>::infinity();
  std::vector<double> cost_history;  // one mean-squared cost per iteration
};

/// Classic alternation of nearest-neighbor correspondence (unit weights) and
/// the closed-form solve. The cost is the mean squared distance under the
/// freshly solved transform, which is non-increasing by construction. Stops
/// when the cost or its decrease drops below tol. Nearest neighbors come
/// from a tree built over the target (any frame: the target is normalized
/// internally, which preserves nearest neighbors); use_tree=false selects
/// the brute-force scan instead.
inline IcpResult icp(const PointCloud& source, const PointCloud& target,
                     int max_iters = 50, double tol = 1e-10,
                     bool use_tree = true) {
  source.validate();
  target.validate();

  std::optional<std::pair<PointCloud, NormalizationInfo>> norm;
  std::optional<BHTree> index;
  if (use_tree) {
    try {
      auto [scaled, info] = normalize_cloud(target);
      norm.emplace(std::move(scaled), info);
      index.emplace(build_tree(norm->first, 6));
    } catch (const std::invalid_argument&) {
      norm.reset();  // degenerate target box; fall back to linear scan
      index.reset();
    }
  }
  auto nearest = [&](const Eigen::Vector3d& q) {
    return index ? nearest_point(*index, norm->second.apply(q))
                 : nearest_point_linear(target, q);
  };

  IcpResult result;
  std::vector<Eigen::Vector3d> matched(source.size());
  const std::vector<double> unit(source.size(), 1.0);
  double prev = std::numeric_limits<double>::infinity();

  for (int k = 1; k <= max_iters; ++k) {
    for (std::size_t i = 0; i < source.size(); ++i) {
      matched[i] = target.points[nearest(result.transform.apply(
          source.points[i]))];
    }
    result.transform = procrustes(source.points, matched, unit);

    double cost = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
      cost +=
          (result.transform.apply(source.points[i]) - matched[i]).squaredNorm();
    }
    cost /= static_cast<double>(source.size());

    result.iterations = k;
    result.cost = cost;
    result.cost_history.push_back(cost);
    if (cost <= tol || (k > 1 && prev - cost < tol)) break;
    prev = cost;
  }
  return result;
}

}  // namespace treereg
