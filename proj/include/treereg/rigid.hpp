#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "treereg/point_cloud.hpp"

namespace treereg {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Rotation in SO(3) plus translation; maps p to R*p + t.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  PointCloud apply(const PointCloud& cloud) const {
    PointCloud out = cloud;
    for (auto& p : out.points) p = apply(p);
    return out;
  }

  /// this ∘ other: apply `other` first, then `this`.
  RigidTransform compose(const RigidTransform& other) const {
    return {rotation * other.rotation,
            rotation * other.translation + translation};
  }

  RigidTransform inverse() const {
    const Eigen::Matrix3d rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  Eigen::Matrix4d homogeneous() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  bool is_valid(double tol = 1e-9) const {
    const Eigen::Matrix3d err =
        rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
    return err.cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

inline RigidTransform rotation_about_axis(const Eigen::Vector3d& axis,
                                          double angle_rad) {
  RigidTransform t;
  t.rotation = Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
  return t;
}

/// R = Rz(z) * Ry(y) * Rx(x), angles in radians.
inline Eigen::Matrix3d rotation_from_euler(double x, double y, double z) {
  return (Eigen::AngleAxisd(z, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(y, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(x, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

/// Angular deviation between two rotations in radians. The acos argument is
/// clamped to [-1,1]; floating error routinely pushes the trace expression
/// just past 1.
inline double angular_error_rad(const Eigen::Matrix3d& r_gt,
                                const Eigen::Matrix3d& r_pred) {
  const double arg = 0.5 * ((r_gt.transpose() * r_pred).trace() - 1.0);
  return std::acos(std::clamp(arg, -1.0, 1.0));
}

inline double angular_error_deg(const Eigen::Matrix3d& r_gt,
                                const Eigen::Matrix3d& r_pred) {
  return rad_to_deg(angular_error_rad(r_gt, r_pred));
}

/// Same angle through the relative quaternion and atan2. The acos form above
/// cannot resolve below ~1e-8 rad (its argument saturates at 1), so
/// exactness tests measure with this variant.
inline double angular_error_precise_rad(const Eigen::Matrix3d& r_gt,
                                        const Eigen::Matrix3d& r_pred) {
  const Eigen::Quaterniond rel = Eigen::Quaterniond(r_gt).conjugate() *
                                 Eigen::Quaterniond(r_pred);
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

inline double translation_error(const Eigen::Vector3d& t_gt,
                                const Eigen::Vector3d& t_pred) {
  return (t_gt - t_pred).norm();
}

inline double rmse_aggregate(const std::vector<double>& errors) {
  if (errors.empty()) throw std::invalid_argument("rmse of empty sequence");
  double sum_sq = 0.0;
  for (double e : errors) sum_sq += e * e;
  return std::sqrt(sum_sq / static_cast<double>(errors.size()));
}

/// A transform solved between clouds that were normalized by `info`, mapped
/// back to the original frame. From x = s*x_n + c on both sides:
/// R stays, t becomes s*t_n + c - R*c.
inline RigidTransform denormalize_transform(const RigidTransform& t_norm,
                                            const NormalizationInfo& info) {
  return {t_norm.rotation, info.scale * t_norm.translation + info.center -
                               t_norm.rotation * info.center};
}

/// Inverse of denormalize_transform: expresses an original-frame transform
/// between the normalized clouds.
inline RigidTransform normalize_transform(const RigidTransform& t_orig,
                                          const NormalizationInfo& info) {
  return {t_orig.rotation,
          (t_orig.rotation * info.center + t_orig.translation - info.center) /
              info.scale};
}

/// Trajectory of `probe` under a chain of relative transforms:
/// p^f = T_init * (T_f * T_{f-1} * ... * T_1)^(-1) * probe.
inline std::vector<Eigen::Vector3d> compose_trajectory(
    const std::vector<RigidTransform>& relative, const RigidTransform& init,
    const Eigen::Vector3d& probe) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(relative.size());
  RigidTransform acc = RigidTransform::identity();
  for (const auto& rel : relative) {
    acc = rel.compose(acc);
    out.push_back(init.apply(acc.inverse().apply(probe)));
  }
  return out;
}

}  // namespace treereg
