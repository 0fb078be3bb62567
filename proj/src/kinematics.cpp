#include "keymocap/kinematics.hpp"

#include <set>

namespace keymocap {

Skeleton::Skeleton(std::vector<Joint> joints) : joints_(std::move(joints)) {
  const int J = num_joints();
  if (J < 2) throw ParameterError("skeleton must have at least 2 joints");
  if (joints_[0].parent != -1) throw ParameterError("joint 0 must be the root (parent -1)");
  std::set<std::string> names;
  for (int i = 0; i < J; ++i) {
    const Joint& j = joints_[i];
    if (i > 0 && (j.parent < 0 || j.parent >= i))
      throw ParameterError("joint '" + j.name + "' must have a parent that precedes it");
    if (!j.offset.allFinite()) throw ParameterError("joint '" + j.name + "' has a non-finite offset");
    if (!names.insert(j.name).second) throw ParameterError("duplicate joint name '" + j.name + "'");
    if (j.side != "left" && j.side != "right" && j.side != "center")
      throw ParameterError("joint '" + j.name + "' has invalid side '" + j.side + "'");
  }
  for (const Joint& j : joints_) {
    if (!j.mirror.empty() && names.count(j.mirror) == 0)
      throw ParameterError("joint '" + j.name + "' mirrors unknown joint '" + j.mirror + "'");
  }
}

int Skeleton::find(const std::string& name) const {
  for (int i = 0; i < num_joints(); ++i)
    if (joints_[i].name == name) return i;
  return -1;
}

int Skeleton::index_of(const std::string& name) const {
  const int i = find(name);
  if (i < 0) throw ParameterError("unknown joint '" + name + "'");
  return i;
}

std::vector<std::pair<int, int>> Skeleton::symmetric_pairs() const {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < num_joints(); ++i) {
    if (joints_[i].mirror.empty()) continue;
    const int m = find(joints_[i].mirror);
    if (m > i) pairs.emplace_back(i, m);
  }
  return pairs;
}

Skeleton default_skeleton() {
  using V = Eigen::Vector3d;
  std::vector<Joint> joints = {
      {"pelvis", -1, V(0, 0, 0), "center", ""},
      {"spine", 0, V(0, 0, 0.22), "center", ""},
      {"thorax", 1, V(0, 0, 0.24), "center", ""},
      {"neck", 2, V(0, 0, 0.14), "center", ""},
      {"head", 3, V(0.02, 0, 0.16), "center", ""},
      {"left_hip", 0, V(0, 0.10, -0.04), "left", "right_hip"},
      {"left_knee", 5, V(0, 0, -0.42), "left", "right_knee"},
      {"left_ankle", 6, V(0, 0, -0.41), "left", "right_ankle"},
      {"right_hip", 0, V(0, -0.10, -0.04), "right", "left_hip"},
      {"right_knee", 8, V(0, 0, -0.42), "right", "left_knee"},
      {"right_ankle", 9, V(0, 0, -0.41), "right", "left_ankle"},
      {"left_shoulder", 2, V(0, 0.17, 0.08), "left", "right_shoulder"},
      {"left_elbow", 11, V(0, 0.06, -0.27), "left", "right_elbow"},
      {"left_wrist", 12, V(0.02, 0.02, -0.25), "left", "right_wrist"},
      {"right_shoulder", 2, V(0, -0.17, 0.08), "right", "left_shoulder"},
      {"right_elbow", 14, V(0, -0.06, -0.27), "right", "left_elbow"},
      {"right_wrist", 15, V(0.02, -0.02, -0.25), "right", "left_wrist"},
  };
  return Skeleton(std::move(joints));
}

namespace {

bool is_strict_descendant(const Skeleton& skeleton, int k, int i) {
  for (int a = skeleton.parent(k); a >= 0; a = skeleton.parent(a))
    if (a == i) return true;
  return false;
}

}  // namespace

Eigen::MatrixXd fk_jacobian(const Skeleton& skeleton, const ShapeParams& shape,
                            const PoseParams& pose, const RootTransform& root) {
  const FkState state = forward_kinematics_state(skeleton, shape, pose, root);
  const int J = skeleton.num_joints();
  const FkJacobianLayout layout{J - 1};
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3 * J, layout.cols());

  for (int k = 0; k < J; ++k) {
    const Eigen::Vector3d pk = state.positions.col(k);
    jac.block<3, 3>(3 * k, layout.translation_offset()).setIdentity();
    jac.block<3, 3>(3 * k, layout.rotation_offset()) = -skew(pk - root.translation);
    for (int i = 1; i < J; ++i) {
      if (!is_strict_descendant(skeleton, k, i)) continue;
      const Eigen::Vector3d pi = state.positions.col(i);
      jac.block<3, 3>(3 * k, layout.pose_offset() + 3 * (i - 1)) =
          -skew(pk - pi) * state.rotations[i] * right_jacobian(pose.axis_angle.col(i - 1));
    }
  }
  return jac;
}

FkGradient fk_vjp(const Skeleton& skeleton, const PoseParams& pose, const FkState& state,
                  const Eigen::Matrix3Xd& joint_gradients) {
  const int J = skeleton.num_joints();
  if (joint_gradients.cols() != J) throw ParameterError("joint gradient count mismatch");

  // Subtree sums of g_k and p_k x g_k, accumulated leaves-first.
  Eigen::Matrix3Xd sum_g = joint_gradients;
  Eigen::Matrix3Xd sum_pxg(3, J);
  for (int k = 0; k < J; ++k)
    sum_pxg.col(k) = state.positions.col(k).cross(joint_gradients.col(k));
  for (int k = J - 1; k > 0; --k) {
    sum_g.col(skeleton.parent(k)) += sum_g.col(k);
    sum_pxg.col(skeleton.parent(k)) += sum_pxg.col(k);
  }

  FkGradient grad;
  grad.pose.resize(3, J - 1);
  grad.bone_scales = Eigen::VectorXd::Zero(J);
  for (int i = 1; i < J; ++i) {
    const Eigen::Vector3d pi = state.positions.col(i);
    const Eigen::Vector3d gi = joint_gradients.col(i);
    const Eigen::Vector3d moment =
        (sum_pxg.col(i) - pi.cross(gi)) - pi.cross(Eigen::Vector3d(sum_g.col(i) - gi));
    grad.pose.col(i - 1) = right_jacobian(pose.axis_angle.col(i - 1)).transpose() *
                           (state.rotations[i].transpose() * moment);
    const Eigen::Vector3d bone_dir = state.rotations[skeleton.parent(i)] * skeleton.offset(i);
    grad.bone_scales(i) = bone_dir.dot(sum_g.col(i));
  }
  const Eigen::Vector3d t = state.positions.col(0);
  grad.translation = sum_g.col(0);
  grad.rotation = sum_pxg.col(0) - t.cross(Eigen::Vector3d(sum_g.col(0)));
  return grad;
}

}  // namespace keymocap
