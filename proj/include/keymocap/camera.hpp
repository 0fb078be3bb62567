#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <optional>
#include <vector>

#include "keymocap/error.hpp"
#include "keymocap/so3.hpp"

namespace keymocap {

template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;

/// Points closer than this to the camera plane (meters, camera z) do not project.
inline constexpr double kMinDepth = 1e-6;

/// Pinhole camera without distortion. The extrinsic maps world to camera
/// coordinates: x_cam = rotation * x_world + translation. Camera axes follow
/// the usual vision convention (x right, y down, z forward).
struct CameraView {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  /// Throws ParameterError when an invariant does not hold.
  void validate() const;

  template <typename Scalar>
  Vector3<Scalar> to_camera(const Vector3<Scalar>& world) const {
    return rotation.cast<Scalar>() * world + translation.cast<Scalar>();
  }

  Eigen::Vector3d center() const { return -(rotation.conjugate() * translation); }

  bool in_image(const Eigen::Vector2d& uv) const {
    return uv.x() >= 0.0 && uv.y() >= 0.0 && uv.x() <= width && uv.y() <= height;
  }
};

struct CameraRig {
  std::vector<CameraView> views;

  int size() const { return static_cast<int>(views.size()); }
  const CameraView& operator[](int c) const { return views[c]; }
  void validate() const;
};

/// Camera at `eye` looking at `target`, with image "up" aligned to `up`.
CameraView look_at_camera(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                          const Eigen::Vector3d& up, double focal, int width, int height);

/// Projection that reports a point behind the camera as nullopt.
template <typename Scalar>
std::optional<Vector2<Scalar>> try_project(const CameraView& view, const Vector3<Scalar>& point) {
  const Vector3<Scalar> pc = view.to_camera(point);
  if (!(pc.z() > Scalar(kMinDepth))) return std::nullopt;
  return Vector2<Scalar>(Scalar(view.fx) * pc.x() / pc.z() + Scalar(view.cx),
                         Scalar(view.fy) * pc.y() / pc.z() + Scalar(view.cy));
}

/// Pixel coordinates of a world point (meters).
template <typename Scalar>
Vector2<Scalar> project(const CameraView& view, const Vector3<Scalar>& point) {
  auto uv = try_project(view, point);
  if (!uv) throw BehindCameraError("point is behind or on the camera plane");
  return *uv;
}

/// d(pixel)/d(world point), 2x3.
Eigen::Matrix<double, 2, 3> project_jacobian(const CameraView& view, const Eigen::Vector3d& point);

}  // namespace keymocap
