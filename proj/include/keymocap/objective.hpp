#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "keymocap/camera.hpp"
#include "keymocap/kinematics.hpp"
#include "keymocap/manifold.hpp"

namespace keymocap {

/// A detected 2D keypoint. Confidence 0 marks a missing detection.
struct Observation {
  Eigen::Vector2d keypoint = Eigen::Vector2d::Zero();  // pixels
  double confidence = 0.0;                             // [0, 1]
  bool in_image = true;  // false when the detection lies outside the image bounds
};

/// Views x joints grid of observations for one frame.
class FrameObservations {
 public:
  FrameObservations() = default;
  FrameObservations(int num_views, int num_joints)
      : num_views_(num_views), num_joints_(num_joints),
        data_(static_cast<std::size_t>(num_views) * num_joints) {}

  int num_views() const { return num_views_; }
  int num_joints() const { return num_joints_; }

  Observation& at(int view, int joint) { return data_[index(view, joint)]; }
  const Observation& at(int view, int joint) const { return data_[index(view, joint)]; }

  /// Throws ParameterError if the grid does not match the rig and skeleton or
  /// an observation breaks its invariants.
  void validate(int num_views, int num_joints) const;

 private:
  std::size_t index(int view, int joint) const {
    return static_cast<std::size_t>(view) * num_joints_ + joint;
  }
  int num_views_ = 0;
  int num_joints_ = 0;
  std::vector<Observation> data_;
};

struct ObjectiveConfig {
  double lambda_data = 1.0;
  double lambda_prior = 10.76;
  double gm_sigma = 100.0;  // pixels

  void validate() const;
};

/// Geman-McClure penalty sigma^2 |r|^2 / (sigma^2 + |r|^2).
template <typename Derived>
typename Derived::Scalar geman_mcclure(const Eigen::MatrixBase<Derived>& r,
                                       typename Derived::Scalar sigma) {
  using Scalar = typename Derived::Scalar;
  const Scalar s2 = sigma * sigma;
  const Scalar r2 = r.squaredNorm();
  return s2 * r2 / (s2 + r2);
}

/// d rho / d r.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Derived::RowsAtCompileTime, 1> geman_mcclure_gradient(
    const Eigen::MatrixBase<Derived>& r, typename Derived::Scalar sigma) {
  using Scalar = typename Derived::Scalar;
  const Scalar s2 = sigma * sigma;
  const Scalar denom = s2 + r.squaredNorm();
  return (Scalar(2) * s2 * s2 / (denom * denom)) * r;
}

/// Data term of one frame given its joint positions; optionally accumulates
/// dE/d(joint positions) into `joint_gradients` (3 x J, overwritten).
/// Missing detections and joints behind a camera contribute nothing.
double frame_data_term(const Eigen::Matrix3Xd& joints, const FrameObservations& obs,
                       const CameraRig& rig, const ObjectiveConfig& config,
                       Eigen::Matrix3Xd* joint_gradients = nullptr);

/// Data term of one frame from its articulation and root transform.
double frame_data_term(const PoseParams& pose, const RootTransform& root,
                       const FrameObservations& obs, const CameraRig& rig,
                       const Skeleton& skeleton, const ShapeParams& shape,
                       const ObjectiveConfig& config);

/// lambda_prior * |z|^2.
double prior_term(const LatentCode& z, const ObjectiveConfig& config);

/// Sum of the frame data terms over frames t = 1..T of the window, where T is
/// the number of observation frames and frame t is reconstructed by
/// interpolating between the two keyframes.
double window_data_term(const Keyframe& key0, const Keyframe& keyT, const Decoder& decoder,
                        std::span<const FrameObservations> window_obs, const CameraRig& rig,
                        const Skeleton& skeleton, const ShapeParams& shape,
                        const ObjectiveConfig& config);

/// Gradient layout shared by the keyframe objectives:
/// [latent (L) | root rotation (3) | root translation (3)]. The rotation block
/// is the derivative w.r.t. a world-frame perturbation q <- Exp(e) q.
struct KeyframeGradientLayout {
  int latent_dim;
  int rotation_offset() const { return latent_dim; }
  int translation_offset() const { return latent_dim + 3; }
  int size() const { return latent_dim + 6; }
};

struct WindowEvaluation {
  double value = 0.0;
  Eigen::VectorXd gradient;            // KeyframeGradientLayout, free keyframe only
  std::vector<double> frame_data;      // data term of frames t = 1..T
  double prior = 0.0;                  // prior on the free keyframe
};

/// Bundle objective of one sliding window: window data term plus the prior
/// on the free keyframe. Only the free keyframe is differentiated. Throws
/// NumericError naming the window frame if a non-finite value appears.
WindowEvaluation window_objective_and_gradient(const Keyframe& fixed_key0,
                                               const Keyframe& free_keyT,
                                               const Decoder& decoder,
                                               std::span<const FrameObservations> window_obs,
                                               const CameraRig& rig, const Skeleton& skeleton,
                                               const ShapeParams& shape,
                                               const ObjectiveConfig& config);

struct FrameEvaluation {
  double value = 0.0;
  double data = 0.0;
  double prior = 0.0;
  Eigen::VectorXd gradient;     // KeyframeGradientLayout
  Eigen::VectorXd bone_scales;  // dE/d(bone scales), J entries
};

/// Single-frame objective: data term of the frame decoded from `key` plus the
/// latent prior.
FrameEvaluation frame_objective_and_gradient(const Keyframe& key, const Decoder& decoder,
                                             const FrameObservations& obs, const CameraRig& rig,
                                             const Skeleton& skeleton, const ShapeParams& shape,
                                             const ObjectiveConfig& config);

}  // namespace keymocap
