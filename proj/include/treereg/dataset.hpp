#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "treereg/point_cloud.hpp"
#include "treereg/rigid.hpp"
#include "treereg/rng.hpp"

namespace treereg {

enum class PerturbationKind : int {
  clean,
  gaussian_noise,
  uniform_noise,
  crop,
  jitter
};

/// What to do to the source cloud after the target has been generated.
/// level is the added/removed point fraction for the noise and crop kinds
/// and the per-coordinate displacement bound for jitter.
struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::clean;
  double level = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    switch (kind) {
      case PerturbationKind::clean:
        break;
      case PerturbationKind::gaussian_noise:
      case PerturbationKind::uniform_noise:
        if (!(level >= 0.0 && level <= 1.0)) {
          throw std::invalid_argument("noise level must be in [0, 1]");
        }
        break;
      case PerturbationKind::crop:
        if (!(level >= 0.0 && level < 1.0)) {
          throw std::invalid_argument("crop level must be in [0, 1)");
        }
        break;
      case PerturbationKind::jitter:
        if (!(level >= 0.0 && level <= 1.0)) {
          throw std::invalid_argument(
              "jitter displacement must be in [0, 1]");
        }
        break;
    }
  }
};

/// A registration problem: recover gt from (source, target) where
/// target = gt.rotation * original_source + gt.translation and source is the
/// perturbed original. For crops the deleting half-space is recorded.
struct TrainSample {
  PointCloud source;
  PointCloud target;
  RigidTransform gt;
  PerturbationSpec spec;
  Eigen::Vector3d crop_normal = Eigen::Vector3d::Zero();
  double crop_offset = 0.0;
};

namespace detail {

inline double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace detail

/// Builds a source/target pair from a normalized cloud. Euler angles are
/// each drawn uniformly from (0, max_angle_deg] and translation components
/// from [-max_translation, max_translation]; the target is the transformed
/// clean source, then the perturbation is applied to the source only. All
/// randomness comes from one stream derived from (rng_seed, spec.seed), so
/// identical inputs reproduce bit-identical samples.
inline TrainSample make_pair(const PointCloud& source,
                             const PerturbationSpec& spec,
                             std::uint64_t rng_seed,
                             double max_angle_deg = 45.0,
                             double max_translation = 0.5) {
  source.validate();
  spec.validate();
  for (const auto& p : source.points) {
    if (p.cwiseAbs().maxCoeff() > 1.0) {
      throw std::invalid_argument("make_pair expects a normalized source");
    }
  }
  if (!(max_angle_deg > 0.0) || !(max_translation >= 0.0)) {
    throw std::invalid_argument("invalid pair generation bounds");
  }

  Rng rng(rng_seed ^ (spec.seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull));

  TrainSample sample;
  sample.spec = spec;

  // (1 - u) maps [0,1) onto the half-open (0, max] range.
  const double ax = deg_to_rad((1.0 - rng.uniform()) * max_angle_deg);
  const double ay = deg_to_rad((1.0 - rng.uniform()) * max_angle_deg);
  const double az = deg_to_rad((1.0 - rng.uniform()) * max_angle_deg);
  sample.gt.rotation = rotation_from_euler(ax, ay, az);
  sample.gt.translation =
      Eigen::Vector3d(rng.uniform(-max_translation, max_translation),
                      rng.uniform(-max_translation, max_translation),
                      rng.uniform(-max_translation, max_translation));

  sample.target = sample.gt.apply(source);
  sample.source = source;

  const auto n = static_cast<std::int64_t>(source.size());
  const auto extra = static_cast<std::int64_t>(
      std::llround(spec.level * static_cast<double>(n)));

  switch (spec.kind) {
    case PerturbationKind::clean:
      break;
    case PerturbationKind::gaussian_noise: {
      // Added outlier points ~ N(0, 0.02) per coordinate (0.02 is the
      // variance), clamped to the normalized cube.
      const double sigma = std::sqrt(0.02);
      for (std::int64_t k = 0; k < extra; ++k) {
        sample.source.points.emplace_back(
            detail::clamp_unit(rng.normal(0.0, sigma)),
            detail::clamp_unit(rng.normal(0.0, sigma)),
            detail::clamp_unit(rng.normal(0.0, sigma)));
      }
      break;
    }
    case PerturbationKind::uniform_noise: {
      for (std::int64_t k = 0; k < extra; ++k) {
        sample.source.points.emplace_back(rng.uniform(-1.0, 1.0),
                                          rng.uniform(-1.0, 1.0),
                                          rng.uniform(-1.0, 1.0));
      }
      break;
    }
    case PerturbationKind::crop: {
      if (extra > n - 3) {
        throw std::invalid_argument("crop level leaves fewer than 3 points");
      }
      Eigen::Vector3d normal(rng.normal(), rng.normal(), rng.normal());
      while (normal.norm() < 1e-9) {
        normal = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
      }
      normal.normalize();
      // Delete the `extra` points with the largest projection onto the
      // normal: one contiguous chunk past a plane.
      std::vector<std::size_t> order(source.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) {
                         return normal.dot(source.points[a]) <
                                normal.dot(source.points[b]);
                       });
      const std::size_t keep = source.size() - static_cast<std::size_t>(extra);
      std::vector<std::size_t> kept(order.begin(), order.begin() + keep);
      std::sort(kept.begin(), kept.end());  // preserve original point order
      sample.source.points.clear();
      for (const std::size_t i : kept) {
        sample.source.points.push_back(source.points[i]);
      }
      sample.crop_normal = normal;
      sample.crop_offset = extra > 0
                               ? normal.dot(source.points[order[keep]])
                               : std::numeric_limits<double>::infinity();
      break;
    }
    case PerturbationKind::jitter: {
      for (auto& p : sample.source.points) {
        p.x() = detail::clamp_unit(p.x() + rng.uniform(-spec.level, spec.level));
        p.y() = detail::clamp_unit(p.y() + rng.uniform(-spec.level, spec.level));
        p.z() = detail::clamp_unit(p.z() + rng.uniform(-spec.level, spec.level));
      }
      break;
    }
  }
  return sample;
}

/// Primitive surface samplers used by synth_shapes; all return raw
/// (unnormalized) clouds. Kept public so tests can probe their geometry.
inline PointCloud sphere_surface(Rng& rng, std::size_t n, double radius) {
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
    while (dir.norm() < 1e-9) {
      dir = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    }
    const double r = radius * (1.0 + rng.uniform(-0.01, 0.01));
    cloud.points.push_back(dir.normalized() * r);
  }
  return cloud;
}

inline PointCloud box_surface(Rng& rng, std::size_t n,
                              const Eigen::Vector3d& half_extent) {
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto face = static_cast<int>(rng.uniform_int(0, 5));
    const int axis = face / 2;
    const double sign = (face % 2 == 0) ? -1.0 : 1.0;
    Eigen::Vector3d p(rng.uniform(-1, 1) * half_extent.x(),
                      rng.uniform(-1, 1) * half_extent.y(),
                      rng.uniform(-1, 1) * half_extent.z());
    p[axis] = sign * half_extent[axis];
    cloud.points.push_back(p);
  }
  return cloud;
}

inline PointCloud plane_patch(Rng& rng, std::size_t n, double side) {
  Eigen::Vector3d normal(rng.normal(), rng.normal(), rng.normal());
  while (normal.norm() < 1e-9) {
    normal = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
  }
  normal.normalize();
  // Any two directions orthogonal to the normal span the patch.
  const Eigen::Vector3d seed =
      std::abs(normal.x()) < 0.9 ? Eigen::Vector3d::UnitX()
                                 : Eigen::Vector3d::UnitY();
  const Eigen::Vector3d u = normal.cross(seed).normalized();
  const Eigen::Vector3d v = normal.cross(u);
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    cloud.points.push_back(rng.uniform(-side / 2, side / 2) * u +
                           rng.uniform(-side / 2, side / 2) * v +
                           rng.uniform(-0.005, 0.005) * normal);
  }
  return cloud;
}

inline PointCloud line_clusters(Rng& rng, std::size_t n, int segments) {
  PointCloud cloud;
  cloud.points.reserve(n);
  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> segs;
  for (int s = 0; s < segments; ++s) {
    Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
    while (dir.norm() < 1e-9) {
      dir = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    }
    segs.emplace_back(Eigen::Vector3d(rng.uniform(-0.5, 0.5),
                                      rng.uniform(-0.5, 0.5),
                                      rng.uniform(-0.5, 0.5)),
                      dir.normalized() * rng.uniform(0.5, 1.5));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [start, extent] = segs[i % segs.size()];
    cloud.points.push_back(start + rng.uniform() * extent +
                           0.01 * Eigen::Vector3d(rng.normal(), rng.normal(),
                                                  rng.normal()));
  }
  return cloud;
}

/// Desk-scale stand-in for a shape dataset: a seeded mixture of primitive
/// surfaces, each 512-4096 points and normalized to [-1,1]^3. Shape i
/// depends only on (rng_seed, i), not on count.
inline std::vector<PointCloud> synth_shapes(std::size_t count,
                                            std::uint64_t rng_seed) {
  if (count < 1) throw std::invalid_argument("count must be >= 1");
  std::vector<PointCloud> shapes;
  shapes.reserve(count);
  Rng master(rng_seed);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = master.fork();
    const auto n =
        static_cast<std::size_t>(rng.uniform_int(512, 4096));
    PointCloud raw;
    switch (rng.uniform_int(0, 3)) {
      case 0:
        raw = sphere_surface(rng, n, rng.uniform(0.5, 1.0));
        break;
      case 1:
        raw = box_surface(rng, n,
                          Eigen::Vector3d(rng.uniform(0.3, 1.0),
                                          rng.uniform(0.3, 1.0),
                                          rng.uniform(0.3, 1.0)));
        break;
      case 2:
        raw = plane_patch(rng, n, rng.uniform(1.0, 2.0));
        break;
      default:
        raw = line_clusters(rng, n, static_cast<int>(rng.uniform_int(2, 5)));
        break;
    }
    shapes.push_back(normalize_cloud(raw).first);
  }
  return shapes;
}

}  // namespace treereg
