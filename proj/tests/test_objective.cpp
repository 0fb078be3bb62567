#include <gtest/gtest.h>

#include "keymocap/objective.hpp"
#include "support.hpp"

using namespace keymocap;
using namespace keymocap::testing;

namespace {

struct WindowCase {
  World world;
  Decoder decoder;
  Keyframe key0, keyT;
  std::vector<FrameObservations> obs;
};

// Observations from a different target keyframe, so the window is not at a minimum.
WindowCase random_window(std::uint64_t seed, int T, int latent_dim = 12) {
  WindowCase c;
  c.decoder = make_random_decoder(latent_dim, {64, 64}, 17, seed + 1);
  CounterRng rng(derive_key(400, seed));
  c.key0 = random_keyframe(rng, latent_dim);
  Keyframe target = c.key0;
  target.latent += normal_vector(rng, latent_dim, 0.3);
  target.root.translation += normal3(rng, 0.05);
  c.keyT = perturb_keyframe(target, normal_vector(rng, latent_dim + 6, 0.05));
  for (int t = 1; t <= T; ++t) {
    const FrameState s = reconstruct_frame(c.decoder, c.key0, target, t, T);
    const Eigen::Matrix3Xd joints = forward_kinematics(c.world.skeleton, c.world.shape, s.pose, s.root);
    c.obs.push_back(noisy_observations(joints, c.world.rig, rng, 40.0));
  }
  return c;
}

FrameObservations one_observation(const Eigen::Vector2d& kp, double w) {
  FrameObservations obs(1, 2);
  obs.at(0, 1).keypoint = kp;
  obs.at(0, 1).confidence = w;
  return obs;
}

}  // namespace

TEST(GemanMcClure, Values) {
  const double sigma = 100.0;
  EXPECT_EQ(geman_mcclure(Eigen::Vector2d(0, 0), sigma), 0.0);
  EXPECT_NEAR(geman_mcclure(Eigen::Vector2d(60, 80), sigma), sigma * sigma / 2, 1e-9);
  EXPECT_GT(geman_mcclure(Eigen::Vector2d(1000 * sigma, 0), sigma), 0.999 * sigma * sigma);
}

TEST(GemanMcClure, GradientMatchesFiniteDifferences) {
  CounterRng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Vector2d r = normal_vector(rng, 2, 150.0);
    const auto f = [](const Eigen::VectorXd& x) { return geman_mcclure(Eigen::Vector2d(x), 100.0); };
    const Eigen::VectorXd fd = central_differences(f, r, 1e-4);
    EXPECT_LT(relative_error(geman_mcclure_gradient(r, 100.0), fd), 1e-7);
  }
}

TEST(FrameDataTerm, PerfectAndMaskedObservations) {
  const World w;
  CounterRng rng(2);
  const Keyframe k = random_keyframe(rng, 48, 0.3);
  const PoseParams pose = PoseParams::from_flat(k.latent);
  const Eigen::Matrix3Xd joints = forward_kinematics(w.skeleton, w.shape, pose, k.root);
  FrameObservations perfect = noisy_observations(joints, w.rig, rng, 0.0);
  const ObjectiveConfig config;
  EXPECT_LT(frame_data_term(pose, k.root, perfect, w.rig, w.skeleton, w.shape, config), 1e-18);

  FrameObservations wrong = noisy_observations(joints, w.rig, rng, 300.0);
  EXPECT_GT(frame_data_term(joints, wrong, w.rig, config), 0.0);
  for (int c = 0; c < w.rig.size(); ++c)
    for (int j = 0; j < 17; ++j) wrong.at(c, j).confidence = 0.0;
  EXPECT_EQ(frame_data_term(joints, wrong, w.rig, config), 0.0);
}

TEST(FrameDataTerm, SingleResidualAtSigma) {
  CameraRig rig;
  CameraView v;
  v.fx = v.fy = 1000;
  v.width = v.height = 1000;
  rig.views.push_back(v);
  Eigen::Matrix3Xd joints(3, 2);
  joints << 0, 0, 0, 0, 2, 2;  // second joint projects to (0, 0)
  joints.col(0) = Eigen::Vector3d(0, 0, 1);
  ObjectiveConfig config;
  config.lambda_data = 1.0;
  const double value = frame_data_term(joints, one_observation(Eigen::Vector2d(60, 80), 1.0), rig, config);
  EXPECT_NEAR(value, config.gm_sigma * config.gm_sigma / 2, 1e-9);
}

TEST(FrameDataTerm, BehindCameraJointContributesNothing) {
  CameraRig rig;
  CameraView v;
  v.width = v.height = 10;
  rig.views.push_back(v);
  Eigen::Matrix3Xd joints(3, 2);
  joints.col(0) = Eigen::Vector3d(0, 0, 1);
  joints.col(1) = Eigen::Vector3d(0, 0, -1);
  Eigen::Matrix3Xd grad;
  EXPECT_EQ(frame_data_term(joints, one_observation(Eigen::Vector2d(5, 5), 1.0), rig, ObjectiveConfig{}, &grad), 0.0);
  EXPECT_TRUE(grad.isZero(0.0));
}

TEST(FrameDataTerm, BoundedAndMonotoneInConfidence) {
  const World w;
  CounterRng rng(3);
  const Keyframe k = random_keyframe(rng, 48, 0.3);
  const Eigen::Matrix3Xd joints = forward_kinematics(w.skeleton, w.shape, PoseParams::from_flat(k.latent), k.root);
  FrameObservations obs = noisy_observations(joints, w.rig, rng, 200.0);
  const ObjectiveConfig config;
  double previous = frame_data_term(joints, obs, w.rig, config);
  EXPECT_GE(previous, 0.0);
  EXPECT_LE(previous, config.lambda_data * config.gm_sigma * config.gm_sigma * w.rig.size() * 17);
  for (int c = 0; c < w.rig.size(); ++c)
    for (int j = 0; j < 17; ++j) {
      obs.at(c, j).confidence *= rng.uniform();
      const double now = frame_data_term(joints, obs, w.rig, config);
      EXPECT_LE(now, previous);
      previous = now;
    }
}

TEST(FrameDataTerm, RejectsMismatchedObservations) {
  const World w;
  const Eigen::Matrix3Xd joints = Eigen::Matrix3Xd::Zero(3, 17);
  EXPECT_THROW(frame_data_term(joints, FrameObservations(3, 17), w.rig, ObjectiveConfig{}), ParameterError);
}

TEST(PriorTerm, Values) {
  const ObjectiveConfig config;
  EXPECT_EQ(prior_term(Eigen::VectorXd::Zero(12), config), 0.0);
  EXPECT_NEAR(prior_term(Eigen::VectorXd::Unit(12, 3), config), 10.76, 1e-15);
  CounterRng rng(4);
  const Eigen::VectorXd z = normal_vector(rng, 12);
  EXPECT_NEAR(prior_term(Eigen::VectorXd(2.0 * z), config), 4.0 * prior_term(z, config), 1e-12);
}

TEST(WindowDataTerm, EqualsSumOfReconstructedFrames) {
  WindowCase c = random_window(5, 10);
  const ObjectiveConfig config;
  double oracle = 0.0;
  for (int t = 1; t <= 10; ++t) {
    const FrameState s = reconstruct_frame(c.decoder, c.key0, c.keyT, t, 10);
    oracle += frame_data_term(s.pose, s.root, c.obs[t - 1], c.world.rig, c.world.skeleton, c.world.shape, config);
  }
  const double value = window_data_term(c.key0, c.keyT, c.decoder, c.obs, c.world.rig, c.world.skeleton, c.world.shape, config);
  EXPECT_NEAR(value, oracle, 1e-9 * oracle);
}

TEST(WindowDataTerm, SingleFrameWindowIsFrameTerm) {
  WindowCase c = random_window(6, 1);
  const ObjectiveConfig config;
  const PoseParams pose = c.decoder.decode(c.keyT.latent);
  EXPECT_EQ(window_data_term(c.key0, c.keyT, c.decoder, c.obs, c.world.rig, c.world.skeleton, c.world.shape, config),
            frame_data_term(pose, c.keyT.root, c.obs[0], c.world.rig, c.world.skeleton, c.world.shape, config));
}

TEST(WindowObjective, SingleFrameWindowEqualsFrameObjective) {
  WindowCase c = random_window(7, 1);
  const ObjectiveConfig config;
  const WindowEvaluation w = window_objective_and_gradient(c.key0, c.keyT, c.decoder, c.obs, c.world.rig,
                                                           c.world.skeleton, c.world.shape, config);
  const FrameEvaluation f = frame_objective_and_gradient(c.keyT, c.decoder, c.obs[0], c.world.rig,
                                                         c.world.skeleton, c.world.shape, config);
  EXPECT_NEAR(w.value, f.value, 1e-12 * f.value);
  EXPECT_LT(relative_error(w.gradient, f.gradient), 1e-12);
}

TEST(WindowObjective, ZeroAtPerfectObservationsAndZeroCode) {
  // Interior frames would slerp towards a zero code, so the window has T = 1:
  // its only frame is the free keyframe itself.
  const World w;
  const Decoder d = make_random_decoder(12, {32}, 17, 5);
  Keyframe kT;
  kT.latent = Eigen::VectorXd::Zero(12);
  kT.root.translation = Eigen::Vector3d(0, 0, 1);
  Keyframe k0 = kT;
  k0.latent = Eigen::VectorXd::Ones(12);
  CounterRng rng(8);
  const Eigen::Matrix3Xd joints = forward_kinematics(w.skeleton, w.shape, d.decode(kT.latent), kT.root);
  const std::vector<FrameObservations> obs{noisy_observations(joints, w.rig, rng, 0.0)};
  const WindowEvaluation e = window_objective_and_gradient(k0, kT, d, obs, w.rig, w.skeleton, w.shape, ObjectiveConfig{});
  EXPECT_LT(e.value, 1e-18);
  EXPECT_LT(e.gradient.norm(), 1e-9);
}

TEST(WindowObjective, NonFiniteFreeKeyframeIsNumericError) {
  WindowCase c = random_window(9, 3);
  c.keyT.latent(0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(window_objective_and_gradient(c.key0, c.keyT, c.decoder, c.obs, c.world.rig, c.world.skeleton,
                                             c.world.shape, ObjectiveConfig{}),
               NumericError);
}

// Oracle: central differences over [latent | world-left rotation | translation]
// of the value-only window objective.
TEST(WindowObjective, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    WindowCase c = random_window(seed, 10);
    const ObjectiveConfig config;
    const WindowEvaluation e = window_objective_and_gradient(c.key0, c.keyT, c.decoder, c.obs, c.world.rig,
                                                             c.world.skeleton, c.world.shape, config);
    const KeyframeGradientLayout layout{12};
    ASSERT_EQ(e.gradient.size(), layout.size());
    const auto f = [&](const Eigen::VectorXd& d) {
      const Keyframe k = perturb_keyframe(c.keyT, d);
      return window_data_term(c.key0, k, c.decoder, c.obs, c.world.rig, c.world.skeleton, c.world.shape, config) +
             prior_term(k.latent, config);
    };
    const Eigen::VectorXd fd = central_differences(f, Eigen::VectorXd::Zero(layout.size()));
    EXPECT_LT(relative_error(e.gradient, fd), 1e-4) << "seed " << seed;
  }
}

TEST(FrameObjective, BoneScaleGradientMatchesFiniteDifferences) {
  WindowCase c = random_window(3, 1);
  const ObjectiveConfig config;
  c.world.shape.bone_scales = Eigen::VectorXd::Constant(17, 1.05);
  const FrameEvaluation e = frame_objective_and_gradient(c.keyT, c.decoder, c.obs[0], c.world.rig,
                                                         c.world.skeleton, c.world.shape, config);
  const auto f = [&](const Eigen::VectorXd& s) {
    return frame_objective_and_gradient(c.keyT, c.decoder, c.obs[0], c.world.rig, c.world.skeleton,
                                        ShapeParams{s}, config).value;
  };
  Eigen::VectorXd fd = central_differences(f, c.world.shape.bone_scales);
  fd(0) = 0.0;
  EXPECT_LT(relative_error(e.bone_scales, fd), 1e-4);
}

TEST(ObjectiveConfig, Validation) {
  EXPECT_NO_THROW(ObjectiveConfig{}.validate());
  EXPECT_THROW((ObjectiveConfig{-1.0, 1.0, 100.0}.validate()), ParameterError);
  EXPECT_THROW((ObjectiveConfig{1.0, 1.0, 0.0}.validate()), ParameterError);
}
