#include "keymocap/camera.hpp"

#include <cmath>
#include <string>

namespace keymocap {

void CameraView::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ParameterError("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ParameterError("image size must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy) || !translation.allFinite() ||
      !rotation.coeffs().allFinite())
    throw ParameterError("camera parameters must be finite");
  if (std::abs(rotation.norm() - 1.0) > 1e-9)
    throw ParameterError("camera rotation is not a unit quaternion");
}

void CameraRig::validate() const {
  if (views.empty()) throw ParameterError("camera rig needs at least one view");
  for (std::size_t c = 0; c < views.size(); ++c) {
    try {
      views[c].validate();
    } catch (const ParameterError& e) {
      throw ParameterError("view " + std::to_string(c) + ": " + e.what());
    }
  }
}

CameraView look_at_camera(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                          const Eigen::Vector3d& up, double focal, int width, int height) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  const Eigen::Vector3d right = (-up).cross(forward).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d world_to_cam;
  world_to_cam.row(0) = right.transpose();
  world_to_cam.row(1) = down.transpose();
  world_to_cam.row(2) = forward.transpose();

  CameraView view;
  view.fx = view.fy = focal;
  view.width = width;
  view.height = height;
  view.cx = 0.5 * width;
  view.cy = 0.5 * height;
  view.rotation = Eigen::Quaterniond(world_to_cam).normalized();
  view.translation = -(view.rotation * eye);
  return view;
}

Eigen::Matrix<double, 2, 3> project_jacobian(const CameraView& view, const Eigen::Vector3d& point) {
  const Eigen::Vector3d pc = view.to_camera(point);
  if (!(pc.z() > kMinDepth)) throw BehindCameraError("point is behind or on the camera plane");
  const double iz = 1.0 / pc.z();
  Eigen::Matrix<double, 2, 3> d_cam;
  d_cam << view.fx * iz, 0.0, -view.fx * pc.x() * iz * iz,
           0.0, view.fy * iz, -view.fy * pc.y() * iz * iz;
  return d_cam * view.rotation.toRotationMatrix();
}

}  // namespace keymocap
