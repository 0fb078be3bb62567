#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <string>
#include <utility>
#include <vector>

#include "keymocap/error.hpp"
#include "keymocap/so3.hpp"

namespace keymocap {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix3X = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

struct Joint {
  std::string name;
  int parent = -1;  // -1 for the root
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();  // meters, in the parent frame
  std::string side = "center";  // "left", "right" or "center"
  std::string mirror;            // name of the symmetric joint, empty if none
};

/// Articulated joint tree in topological order (parents before children).
/// Joint 0 is the root; every other joint owns one pose rotation, stored at
/// pose slot (index - 1).
class Skeleton {
 public:
  Skeleton() = default;
  explicit Skeleton(std::vector<Joint> joints);

  int num_joints() const { return static_cast<int>(joints_.size()); }
  int num_pose_joints() const { return num_joints() - 1; }
  int pose_dim() const { return 3 * num_pose_joints(); }

  const std::vector<Joint>& joints() const { return joints_; }
  const Joint& joint(int i) const { return joints_[i]; }
  int parent(int i) const { return joints_[i].parent; }
  const Eigen::Vector3d& offset(int i) const { return joints_[i].offset; }

  /// Index of the named joint, or -1.
  int find(const std::string& name) const;
  int index_of(const std::string& name) const;  // throws ParameterError

  /// Left/right joint pairs declared through the `mirror` field, each pair once.
  std::vector<std::pair<int, int>> symmetric_pairs() const;

 private:
  std::vector<Joint> joints_;
};

/// 17-joint body: pelvis root, spine, thorax, neck, head and per side hip,
/// knee, ankle, shoulder, elbow, wrist. World is z-up, the subject faces +x,
/// left is +y.
Skeleton default_skeleton();

/// Per-joint bone length multipliers (entry 0, the root, is unused).
template <typename Scalar>
struct ShapeParamsT {
  VectorX<Scalar> bone_scales;

  static ShapeParamsT ones(int num_joints) { return {VectorX<Scalar>::Ones(num_joints)}; }
};

/// One axis-angle rotation (radians) per non-root joint, stored column-wise.
template <typename Scalar>
struct PoseParamsT {
  Matrix3X<Scalar> axis_angle;

  static PoseParamsT zero(int num_pose_joints) {
    return {Matrix3X<Scalar>::Zero(3, num_pose_joints)};
  }
  static PoseParamsT from_flat(const VectorX<Scalar>& flat) {
    return {Eigen::Map<const Matrix3X<Scalar>>(flat.data(), 3, flat.size() / 3)};
  }
  VectorX<Scalar> flat() const {
    return Eigen::Map<const VectorX<Scalar>>(axis_angle.data(), axis_angle.size());
  }
};

template <typename Scalar>
struct RootTransformT {
  Quaternion<Scalar> rotation = Quaternion<Scalar>::Identity();
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();

  template <typename Other>
  RootTransformT<Other> cast() const {
    return {rotation.template cast<Other>(), translation.template cast<Other>()};
  }
};

using ShapeParams = ShapeParamsT<double>;
using PoseParams = PoseParamsT<double>;
using RootTransform = RootTransformT<double>;
using JointPositions = Eigen::Matrix3Xd;

/// World positions and world rotations of every joint.
template <typename Scalar>
struct FkStateT {
  Matrix3X<Scalar> positions;
  std::vector<Matrix3<Scalar>> rotations;
};
using FkState = FkStateT<double>;

namespace detail {

template <typename Scalar>
void check_fk_inputs(const Skeleton& skeleton, const ShapeParamsT<Scalar>& shape,
                     const PoseParamsT<Scalar>& pose, const RootTransformT<Scalar>& root) {
  using std::abs;
  const int J = skeleton.num_joints();
  if (J < 2) throw ParameterError("skeleton must have at least 2 joints");
  if (shape.bone_scales.size() != J)
    throw ParameterError("shape has " + std::to_string(shape.bone_scales.size()) +
                         " scales, skeleton has " + std::to_string(J) + " joints");
  if (pose.axis_angle.cols() != J - 1)
    throw ParameterError("pose has " + std::to_string(pose.axis_angle.cols()) +
                         " rotations, expected " + std::to_string(J - 1));
  if (!shape.bone_scales.allFinite() || !pose.axis_angle.allFinite() ||
      !root.translation.allFinite() || !root.rotation.coeffs().allFinite())
    throw NumericError("non-finite forward kinematics input");
  if ((shape.bone_scales.array() <= Scalar(0)).any())
    throw ParameterError("bone scales must be strictly positive");
  if (abs(root.rotation.norm() - Scalar(1)) > Scalar(1e-9))
    throw ParameterError("root rotation is not a unit quaternion");
}

}  // namespace detail

template <typename Scalar>
FkStateT<Scalar> forward_kinematics_state(const Skeleton& skeleton,
                                          const ShapeParamsT<Scalar>& shape,
                                          const PoseParamsT<Scalar>& pose,
                                          const RootTransformT<Scalar>& root) {
  detail::check_fk_inputs(skeleton, shape, pose, root);
  const int J = skeleton.num_joints();
  FkStateT<Scalar> state;
  state.positions.resize(3, J);
  state.rotations.resize(J);
  state.rotations[0] = root.rotation.toRotationMatrix();
  state.positions.col(0) = root.translation;
  for (int i = 1; i < J; ++i) {
    const int p = skeleton.parent(i);
    const Vector3<Scalar> bone = shape.bone_scales(i) * skeleton.offset(i).cast<Scalar>();
    state.positions.col(i) = state.positions.col(p) + state.rotations[p] * bone;
    state.rotations[i] =
        state.rotations[p] * so3_exp(pose.axis_angle.col(i - 1).eval()).toRotationMatrix();
  }
  return state;
}

/// Joint positions (meters, world frame), one column per joint.
template <typename Scalar>
Matrix3X<Scalar> forward_kinematics(const Skeleton& skeleton, const ShapeParamsT<Scalar>& shape,
                                    const PoseParamsT<Scalar>& pose,
                                    const RootTransformT<Scalar>& root) {
  return forward_kinematics_state(skeleton, shape, pose, root).positions;
}

/// Column layout of fk_jacobian.
struct FkJacobianLayout {
  int num_pose_joints;
  int pose_offset() const { return 0; }
  int rotation_offset() const { return 3 * num_pose_joints; }
  int translation_offset() const { return 3 * num_pose_joints + 3; }
  int cols() const { return 3 * num_pose_joints + 6; }
};

/// d(joint positions)/d(parameters): rows are (joint, xyz) stacked, columns
/// are [pose axis-angle | root rotation | root translation]. The root rotation
/// block is taken w.r.t. a world-frame (left) perturbation
/// R <- Exp(e) R.
Eigen::MatrixXd fk_jacobian(const Skeleton& skeleton, const ShapeParams& shape,
                            const PoseParams& pose, const RootTransform& root);

struct FkGradient {
  Eigen::Matrix3Xd pose;             // 3 x (J-1)
  Eigen::Vector3d rotation;          // world-left tangent
  Eigen::Vector3d translation;
  Eigen::VectorXd bone_scales;       // J, entry 0 always zero
};

/// Vector-Jacobian product: pulls dE/d(joint positions) back to the
/// parameters. `state` must come from forward_kinematics_state with the same
/// inputs.
FkGradient fk_vjp(const Skeleton& skeleton, const PoseParams& pose, const FkState& state,
                  const Eigen::Matrix3Xd& joint_gradients);

}  // namespace keymocap
