#include <gtest/gtest.h>

#include <numbers>

#include "keymocap/kinematics.hpp"
#include "support.hpp"

using namespace keymocap;
using namespace keymocap::testing;

namespace {

Skeleton two_joint_chain(const Eigen::Vector3d& offset = Eigen::Vector3d::UnitX()) {
  return Skeleton({{"root", -1, Eigen::Vector3d::Zero()}, {"tip", 0, offset}});
}

Skeleton random_chain(CounterRng& rng, int joints) {
  std::vector<Joint> js{{"j0", -1, Eigen::Vector3d::Zero()}};
  for (int i = 1; i < joints; ++i) {
    // Branching tree: each joint hangs off a random earlier joint.
    const int parent = static_cast<int>(rng.uniform() * i);
    js.push_back({"j" + std::to_string(i), parent, normal3(rng, 0.3)});
  }
  return Skeleton(std::move(js));
}

struct Inputs {
  ShapeParams shape;
  PoseParams pose;
  RootTransform root;
};

Inputs random_inputs(CounterRng& rng, const Skeleton& s) {
  Inputs in;
  in.shape.bone_scales = (Eigen::VectorXd::Ones(s.num_joints()) + normal_vector(rng, s.num_joints(), 0.1));
  in.pose = PoseParams::zero(s.num_pose_joints());
  for (int i = 0; i < s.num_pose_joints(); ++i) in.pose.axis_angle.col(i) = normal3(rng, 0.8);
  in.root.rotation = random_rotation(rng, 1.5);
  in.root.translation = normal3(rng);
  return in;
}

Eigen::VectorXd flat(const Eigen::Matrix3Xd& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

}  // namespace

TEST(ForwardKinematics, IdentityChain) {
  const Skeleton s = two_joint_chain();
  const Eigen::Matrix3Xd p =
      forward_kinematics(s, ShapeParams::ones(2), PoseParams::zero(1), RootTransform{});
  EXPECT_TRUE(p.col(0).isZero(0.0));
  EXPECT_TRUE(p.col(1).isApprox(Eigen::Vector3d(1, 0, 0)));
}

TEST(ForwardKinematics, RootRotationQuarterTurn) {
  const Skeleton s = two_joint_chain();
  RootTransform root;
  root.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(std::numbers::pi / 2, Eigen::Vector3d::UnitZ()));
  const Eigen::Matrix3Xd p = forward_kinematics(s, ShapeParams::ones(2), PoseParams::zero(1), root);
  EXPECT_NEAR((p.col(1) - Eigen::Vector3d(0, 1, 0)).norm(), 0.0, 1e-15);
}

TEST(ForwardKinematics, BoneScaleStretchesOffset) {
  const Skeleton s = two_joint_chain();
  ShapeParams shape = ShapeParams::ones(2);
  shape.bone_scales(1) = 2.0;
  const Eigen::Matrix3Xd p = forward_kinematics(s, shape, PoseParams::zero(1), RootTransform{});
  EXPECT_TRUE(p.col(1).isApprox(Eigen::Vector3d(2, 0, 0)));
}

TEST(ForwardKinematics, RejectsMismatchedAndNonFiniteInputs) {
  const Skeleton s = two_joint_chain();
  EXPECT_THROW(forward_kinematics(s, ShapeParams::ones(3), PoseParams::zero(1), RootTransform{}),
               ParameterError);
  EXPECT_THROW(forward_kinematics(s, ShapeParams::ones(2), PoseParams::zero(2), RootTransform{}),
               ParameterError);
  PoseParams bad = PoseParams::zero(1);
  bad.axis_angle(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(forward_kinematics(s, ShapeParams::ones(2), bad, RootTransform{}), NumericError);
}

TEST(ForwardKinematics, RootTransformEquivariance) {
  CounterRng rng(11);
  const Skeleton s = default_skeleton();
  for (int trial = 0; trial < 20; ++trial) {
    const Inputs in = random_inputs(rng, s);
    const Eigen::Quaterniond g = random_rotation(rng, 2.0);
    const Eigen::Vector3d gt = normal3(rng);
    RootTransform moved = in.root;
    moved.rotation = (g * in.root.rotation).normalized();
    moved.translation = g * in.root.translation + gt;
    const Eigen::Matrix3Xd a = forward_kinematics(s, in.shape, in.pose, in.root);
    const Eigen::Matrix3Xd b = forward_kinematics(s, in.shape, in.pose, moved);
    const Eigen::Matrix3Xd expected = (g.toRotationMatrix() * a).colwise() + gt;
    EXPECT_LT((b - expected).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(ForwardKinematics, BoneLengthsArePoseIndependent) {
  CounterRng rng(12);
  const Skeleton s = default_skeleton();
  for (int trial = 0; trial < 20; ++trial) {
    const Inputs in = random_inputs(rng, s);
    const Eigen::Matrix3Xd p = forward_kinematics(s, in.shape, in.pose, in.root);
    for (int i = 1; i < s.num_joints(); ++i)
      EXPECT_NEAR((p.col(i) - p.col(s.parent(i))).norm(), in.shape.bone_scales(i) * s.offset(i).norm(), 1e-12);
  }
}

TEST(FkJacobian, TranslationIsIdentity) {
  const Skeleton s = two_joint_chain();
  const Eigen::MatrixXd jac = fk_jacobian(s, ShapeParams::ones(2), PoseParams::zero(1), RootTransform{});
  const FkJacobianLayout layout{1};
  EXPECT_EQ(jac(3, layout.translation_offset()), 1.0);
  EXPECT_TRUE(jac.block(0, layout.translation_offset(), 6, 3).isApprox(
      (Eigen::MatrixXd(6, 3) << Eigen::Matrix3d::Identity(), Eigen::Matrix3d::Identity()).finished()));
}

TEST(FkJacobian, ZeroLengthBoneHasNoOwnRotationSensitivity) {
  const Skeleton s({{"a", -1, Eigen::Vector3d::Zero()},
                    {"b", 0, Eigen::Vector3d::UnitX()},
                    {"c", 1, Eigen::Vector3d::Zero()}});
  CounterRng rng(3);
  const Inputs in = random_inputs(rng, s);
  const Eigen::MatrixXd jac = fk_jacobian(s, in.shape, in.pose, in.root);
  // Joint c sits on b; its position ignores b's and c's own rotations.
  EXPECT_TRUE(jac.block(6, 3, 3, 3).isZero(1e-15));
}

// Oracle: central differences of forward_kinematics over every block, with
// the root rotation perturbed on the left as documented.
TEST(FkJacobian, MatchesFiniteDifferencesOnRandomTrees) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CounterRng rng(derive_key(100, seed));
    const Skeleton s = random_chain(rng, 5);
    const Inputs in = random_inputs(rng, s);
    const FkJacobianLayout layout{s.num_pose_joints()};
    const Eigen::MatrixXd jac = fk_jacobian(s, in.shape, in.pose, in.root);

    for (int col = 0; col < layout.cols(); ++col) {
      auto eval = [&](double h) {
        Inputs p = in;
        if (col < layout.rotation_offset()) {
          p.pose.axis_angle(col % 3, col / 3) += h;
        } else if (col < layout.translation_offset()) {
          Eigen::Vector3d e = Eigen::Vector3d::Zero();
          e(col - layout.rotation_offset()) = h;
          p.root.rotation = (so3_exp(e) * in.root.rotation).normalized();
        } else {
          p.root.translation(col - layout.translation_offset()) += h;
        }
        return flat(forward_kinematics(s, p.shape, p.pose, p.root));
      };
      const Eigen::VectorXd fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
      EXPECT_LT(relative_error(jac.col(col), fd, 1e-3), 1e-4) << "seed " << seed << " column " << col;
    }
  }
}

TEST(FkVjp, AgreesWithJacobianTranspose) {
  CounterRng rng(21);
  const Skeleton s = default_skeleton();
  const Inputs in = random_inputs(rng, s);
  const FkState state = forward_kinematics_state(s, in.shape, in.pose, in.root);
  Eigen::Matrix3Xd v(3, s.num_joints());
  for (int j = 0; j < s.num_joints(); ++j) v.col(j) = normal3(rng);
  const FkGradient g = fk_vjp(s, in.pose, state, v);
  const Eigen::VectorXd expected = fk_jacobian(s, in.shape, in.pose, in.root).transpose() * flat(v);
  const FkJacobianLayout layout{s.num_pose_joints()};
  EXPECT_LT(relative_error(flat(g.pose), expected.head(layout.rotation_offset())), 1e-12);
  EXPECT_LT(relative_error(g.rotation, expected.segment<3>(layout.rotation_offset())), 1e-12);
  EXPECT_LT(relative_error(g.translation, expected.tail<3>()), 1e-12);
}

TEST(FkVjp, BoneScaleGradientMatchesFiniteDifferences) {
  CounterRng rng(22);
  const Skeleton s = default_skeleton();
  const Inputs in = random_inputs(rng, s);
  Eigen::Matrix3Xd v(3, s.num_joints());
  for (int j = 0; j < s.num_joints(); ++j) v.col(j) = normal3(rng);
  const FkState state = forward_kinematics_state(s, in.shape, in.pose, in.root);
  const FkGradient g = fk_vjp(s, in.pose, state, v);
  const auto f = [&](const Eigen::VectorXd& scales) {
    return flat(forward_kinematics(s, ShapeParams{scales}, in.pose, in.root)).dot(flat(v));
  };
  Eigen::VectorXd fd = central_differences(f, in.shape.bone_scales);
  fd(0) = 0.0;  // the root scale is unused
  EXPECT_LT(relative_error(g.bone_scales, fd), 1e-6);
}

TEST(Skeleton, DefaultBodyIsWellFormed) {
  const Skeleton s = default_skeleton();
  EXPECT_EQ(s.num_joints(), 17);
  EXPECT_EQ(s.symmetric_pairs().size(), 6u);
  EXPECT_GE(s.find("left_knee"), 0);
  EXPECT_EQ(s.find("nose"), -1);
  EXPECT_THROW(s.index_of("nose"), ParameterError);
}

TEST(Skeleton, RejectsBadTopology) {
  EXPECT_THROW(Skeleton({{"a", -1, Eigen::Vector3d::Zero()}}), ParameterError);
  EXPECT_THROW(Skeleton({{"a", -1, Eigen::Vector3d::Zero()}, {"b", 1, Eigen::Vector3d::UnitX()}}),
               ParameterError);
  EXPECT_THROW(Skeleton({{"a", 0, Eigen::Vector3d::Zero()}, {"b", 0, Eigen::Vector3d::UnitX()}}),
               ParameterError);
  EXPECT_THROW(Skeleton({{"a", -1, Eigen::Vector3d::Zero()}, {"a", 0, Eigen::Vector3d::UnitX()}}),
               ParameterError);
}

// Oracle: Exp(v + dv) against Exp(Jl dv) Exp(v) and Exp(v) Exp(Jr dv) by differences.
TEST(So3, JacobiansMatchFiniteDifferences) {
  CounterRng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Vector3d v = normal3(rng, 1.0);
    const Eigen::Quaterniond q = so3_exp(v);
    Eigen::Matrix3d left_fd, right_fd;
    for (int k = 0; k < 3; ++k) {
      Eigen::Vector3d h = Eigen::Vector3d::Zero();
      h(k) = 1e-6;
      const Eigen::Quaterniond plus = so3_exp(Eigen::Vector3d(v + h)), minus = so3_exp(Eigen::Vector3d(v - h));
      left_fd.col(k) = (so3_log(Eigen::Quaterniond(plus * q.conjugate())) -
                        so3_log(Eigen::Quaterniond(minus * q.conjugate()))) / 2e-6;
      right_fd.col(k) = (so3_log(Eigen::Quaterniond(q.conjugate() * plus)) -
                         so3_log(Eigen::Quaterniond(q.conjugate() * minus))) / 2e-6;
    }
    EXPECT_LT((left_jacobian(v) - left_fd).norm(), 1e-7);
    EXPECT_LT((right_jacobian(v) - right_fd).norm(), 1e-7);
    EXPECT_LT((inverse_left_jacobian(v) * left_jacobian(v) - Eigen::Matrix3d::Identity()).norm(), 1e-12);
  }
}
