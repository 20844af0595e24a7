#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace treereg {

/// An ordered set of 3D positions with optional per-point extra channels
/// (stored row-major, channel_dim values per point).
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::size_t channel_dim = 0;
  std::vector<double> channels;
  std::optional<int> frame_id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void validate() const {
    if (points.empty()) throw std::invalid_argument("empty cloud");
    for (const auto& p : points) {
      if (!p.allFinite()) throw std::invalid_argument("non-finite coordinate");
    }
    if (channel_dim > 0 && channels.size() != points.size() * channel_dim) {
      throw std::invalid_argument("channel buffer size mismatch");
    }
  }
};

struct Aabb {
  Eigen::Vector3d lo;
  Eigen::Vector3d hi;
};

inline Aabb bounding_box(const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("empty cloud");
  Aabb box{cloud.points.front(), cloud.points.front()};
  for (const auto& p : cloud.points) {
    box.lo = box.lo.cwiseMin(p);
    box.hi = box.hi.cwiseMax(p);
  }
  return box;
}

inline Aabb merge(const Aabb& a, const Aabb& b) {
  return {a.lo.cwiseMin(b.lo), a.hi.cwiseMax(b.hi)};
}

/// Shared centering/scaling applied to a cloud pair so both land in
/// [-1,1]^3. p_norm = (p - center) / scale.
struct NormalizationInfo {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double scale = 1.0;

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return (p - center) / scale;
  }
  Eigen::Vector3d invert(const Eigen::Vector3d& p) const {
    return scale * p + center;
  }
};

struct NormalizedPair {
  PointCloud source;
  PointCloud target;
  NormalizationInfo info;
};

namespace detail {

inline PointCloud apply_normalization(const PointCloud& cloud,
                                      const NormalizationInfo& info) {
  PointCloud out = cloud;
  for (auto& p : out.points) {
    p = info.apply(p);
    // Exact boundary guarantee: rounding may land a hair outside the box.
    p = p.cwiseMax(-1.0).cwiseMin(1.0);
  }
  return out;
}

}  // namespace detail

/// Computes one center/scale from the axis-aligned bounding box of the union
/// of both clouds and applies it to both. A shared frame keeps the relative
/// rigid transform intact up to the uniform scale.
inline NormalizedPair normalize_pair(const PointCloud& source,
                                     const PointCloud& target) {
  source.validate();
  target.validate();
  const Aabb box = merge(bounding_box(source), bounding_box(target));
  const Eigen::Vector3d extent = box.hi - box.lo;
  const double max_extent = extent.maxCoeff();
  if (max_extent <= 0.0) {
    throw std::invalid_argument("degenerate bounding box: all points identical");
  }
  NormalizationInfo info;
  info.center = 0.5 * (box.lo + box.hi);
  info.scale = 0.5 * max_extent;
  return {detail::apply_normalization(source, info),
          detail::apply_normalization(target, info), info};
}

/// Single-cloud variant with the same conventions; used by generators.
inline std::pair<PointCloud, NormalizationInfo> normalize_cloud(
    const PointCloud& cloud) {
  cloud.validate();
  const Aabb box = bounding_box(cloud);
  const double max_extent = (box.hi - box.lo).maxCoeff();
  if (max_extent <= 0.0) {
    throw std::invalid_argument("degenerate bounding box: all points identical");
  }
  NormalizationInfo info;
  info.center = 0.5 * (box.lo + box.hi);
  info.scale = 0.5 * max_extent;
  return {detail::apply_normalization(cloud, info), info};
}

}  // namespace treereg
