#include <gtest/gtest.h>

#include "keymocap/metrics.hpp"
#include "keymocap/pipeline.hpp"
#include "support.hpp"

using namespace keymocap;
using namespace keymocap::testing;

namespace {

Scenario scenario(int frames, double sigma = 0.0, std::uint64_t seed = 7) {
  ScenarioConfig c;
  c.seed = seed;
  c.num_frames = frames;
  c.noise.gaussian_sigma = sigma;
  return build_scenario(c, default_skeleton(), default_decoder());
}

double sequence_mpjpe(const MotionSequence& m, const Scenario& s) {
  return mpjpe(joint_trajectory(m, s.skeleton), joint_trajectory(s.truth.motion, s.skeleton));
}

bool same_frame(const MotionFrame& a, const MotionFrame& b) {
  return a.pose.axis_angle == b.pose.axis_angle && a.root.rotation.coeffs() == b.root.rotation.coeffs() &&
         a.root.translation == b.root.translation;
}

Eigen::Matrix3Xd joints_of(const Keyframe& k, const Decoder& d, const Skeleton& s, const ShapeParams& shape) {
  return forward_kinematics(s, shape, d.decode(k.latent), k.root);
}

}  // namespace

TEST(KeyframeSchedule, Arithmetic) {
  EXPECT_EQ(keyframe_schedule(21, 10), (std::vector<int>{0, 10, 20}));
  EXPECT_EQ(keyframe_schedule(25, 10), (std::vector<int>{0, 10, 20, 24}));
  EXPECT_EQ(keyframe_schedule(4, 1), (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(keyframe_schedule(5, 10), (std::vector<int>{0, 4}));
  EXPECT_EQ(keyframe_schedule(1, 10), (std::vector<int>{0}));
  EXPECT_THROW(keyframe_schedule(0, 10), ParameterError);
  EXPECT_THROW(keyframe_schedule(21, 0), ParameterError);
}

TEST(SolveConfig, WeightsAndValidation) {
  SolveConfig c;
  EXPECT_EQ(c.window, 10);
  EXPECT_EQ(c.solver.max_iterations, 30);
  EXPECT_EQ(c.objective.lambda_data, 1.0);
  EXPECT_EQ(c.objective.lambda_prior, 10.76);
  c.set_weights(2.0, 3.0);
  EXPECT_EQ(c.first_frame_stages[1].lambda_prior, 3.0);
  EXPECT_EQ(c.objective.lambda_data, 2.0);
  c.window = 0;
  EXPECT_THROW(c.validate(), ParameterError);
  c = SolveConfig{};
  c.first_frame_stages[0].lambda_prior = -1.0;
  EXPECT_THROW(c.validate(), ParameterError);
}

TEST(Triangulation, RecoversCleanJoints) {
  const Scenario s = scenario(3);
  const Eigen::Matrix3Xd truth = joint_trajectory(s.truth.motion, s.skeleton)[1];
  for (int j = 0; j < 17; ++j) {
    const auto p = triangulate_joint(s.clean[1], s.rig, j);
    ASSERT_TRUE(p.has_value());
    EXPECT_LT((*p - truth.col(j)).norm(), 1e-9);
  }
  FrameObservations one_view = s.clean[1];
  for (int c = 1; c < s.rig.size(); ++c) one_view.at(c, 3).confidence = 0.0;
  EXPECT_FALSE(triangulate_joint(one_view, s.rig, 3).has_value());
}

TEST(FitFirstFrame, ZeroCodeSubjectFromZeroInit) {
  const World w;
  const Decoder d = default_decoder();
  Keyframe subject;
  subject.latent = Eigen::VectorXd::Zero(12);
  subject.root.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.7, Eigen::Vector3d::UnitZ()));
  subject.root.translation = Eigen::Vector3d(0.1, -0.2, 0.95);
  const Eigen::Matrix3Xd truth = joints_of(subject, d, w.skeleton, w.shape);
  CounterRng rng(1);
  const FrameObservations obs = noisy_observations(truth, w.rig, rng, 0.0);
  const FirstFrameResult r = fit_first_frame(obs, w.rig, w.skeleton, d, SolveConfig{});
  const Eigen::Matrix3Xd fit = joints_of(r.key, d, w.skeleton, r.shape);
  EXPECT_LT((fit - truth).colwise().norm().maxCoeff(), 1e-3);
}

TEST(FitFirstFrame, UnperturbedTruthStartsAtZeroData) {
  const Scenario s = scenario(3);
  const InitialGuess truth{s.truth.motion.keyframes[0], s.truth.motion.shape};
  const ObjectiveConfig config;
  const FirstFrameResult r = fit_first_frame(s.clean[0], s.rig, s.skeleton, default_decoder(), SolveConfig{}, truth);
  // The first evaluation is the prior alone: the data term vanishes at the truth.
  EXPECT_NEAR(r.stage1.trace.front(), prior_term(truth.key.latent, config), 1e-9);
  // The prior moves the optimum slightly off the truth.
  const Eigen::Matrix3Xd fit = joints_of(r.key, default_decoder(), s.skeleton, r.shape);
  EXPECT_LT((fit - joint_trajectory(s.truth.motion, s.skeleton)[0]).colwise().norm().maxCoeff(), 5e-3);
}

TEST(FitFirstFrame, SingleViewIsUnderConstrained) {
  const Scenario s = scenario(3);
  FrameObservations obs = s.clean[0];
  for (int c = 1; c < s.rig.size(); ++c)
    for (int j = 0; j < 17; ++j) obs.at(c, j).confidence = 0.0;
  EXPECT_THROW(fit_first_frame(obs, s.rig, s.skeleton, default_decoder(), SolveConfig{}), UnderConstrainedError);
}

// Oracle: observations rendered along a known latent geodesic from prev_key.
TEST(SolveWindow, RecoversGeodesicTarget) {
  const World w;
  const Decoder d = default_decoder();
  CounterRng rng(2);
  const Keyframe prev = random_keyframe(rng, 12);
  Keyframe target = prev;
  target.latent += normal_vector(rng, 12, 0.15);
  target.root.translation += Eigen::Vector3d(0.05, 0.02, 0.0);
  target.root.rotation = (so3_exp(Eigen::Vector3d(0, 0, 0.1)) * target.root.rotation).normalized();
  std::vector<FrameObservations> obs;
  std::vector<Eigen::Matrix3Xd> truth;
  for (int t = 1; t <= 10; ++t) {
    const FrameState f = reconstruct_frame(d, prev, target, t, 10);
    truth.push_back(forward_kinematics(w.skeleton, w.shape, f.pose, f.root));
    obs.push_back(noisy_observations(truth.back(), w.rig, rng, 0.0));
  }
  SolveConfig config;
  config.objective.lambda_prior = 1e-6;  // isolate the data term
  const KeyframeSolve r = solve_window(prev, obs, w.rig, w.skeleton, d, w.shape, config);
  for (int t = 1; t <= 10; ++t) {
    const FrameState f = reconstruct_frame(d, prev, r.key, t, 10);
    const Eigen::Matrix3Xd fit = forward_kinematics(w.skeleton, w.shape, f.pose, f.root);
    EXPECT_LT((fit - truth[t - 1]).colwise().norm().maxCoeff(), 1e-3) << "frame " << t;
  }
}

TEST(SolveWindow, SingleFrameWindowMatchesSingleFrameFit) {
  const Scenario s = scenario(12);
  const Decoder d = default_decoder();
  const SolveConfig config;
  const Keyframe prev = s.truth.motion.keyframes[0];
  const std::vector<FrameObservations> obs{s.clean[1]};
  const KeyframeSolve w = solve_window(prev, obs, s.rig, s.skeleton, d, s.truth.motion.shape, config);
  const KeyframeSolve f = fit_single_frame(prev, s.clean[1], s.rig, s.skeleton, d, s.truth.motion.shape,
                                           config.objective, config.solver);
  EXPECT_LT((joints_of(w.key, d, s.skeleton, s.truth.motion.shape) -
             joints_of(f.key, d, s.skeleton, s.truth.motion.shape)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SolveWindow, ZeroConfidencePullsTowardPrior) {
  Scenario s = scenario(11);
  std::vector<FrameObservations> obs(s.clean.begin() + 1, s.clean.end());
  for (FrameObservations& o : obs)
    for (int c = 0; c < o.num_views(); ++c)
      for (int j = 0; j < o.num_joints(); ++j) o.at(c, j).confidence = 0.0;
  const Keyframe prev = s.truth.motion.keyframes[0];
  const KeyframeSolve r = solve_window(prev, obs, s.rig, s.skeleton, default_decoder(), s.truth.motion.shape, SolveConfig{});
  EXPECT_LT(r.key.latent.norm(), prev.latent.norm());
}

TEST(SolveWindow, RejectsEmptyWindow) {
  const Scenario s = scenario(3);
  EXPECT_THROW(solve_window(s.truth.motion.keyframes[0], std::span<const FrameObservations>{}, s.rig, s.skeleton,
                            default_decoder(), s.truth.motion.shape, SolveConfig{}),
               ParameterError);
}

TEST(SolveSequence, WindowArithmeticAndKeyframeChaining) {
  const Scenario s = scenario(21);
  const Decoder d = default_decoder();
  const SequenceSolve r = solve_sequence(s.clean, s.rig, s.skeleton, d, SolveConfig{});
  EXPECT_EQ(r.windows.size(), 2u);
  EXPECT_EQ(r.motion.keyframes.size(), 3u);
  EXPECT_EQ(r.motion.num_frames(), 21);
  EXPECT_EQ(r.motion.keyframe_frames, (std::vector<int>{0, 10, 20}));
  for (std::size_t i = 0; i < r.motion.keyframes.size(); ++i) {
    const Keyframe& k = r.motion.keyframes[i];
    const MotionFrame& f = r.motion.frames[r.motion.keyframe_frames[i]];
    EXPECT_EQ(f.pose.axis_angle, d.decode(k.latent).axis_angle);
    EXPECT_EQ(f.root.rotation.coeffs(), k.root.rotation.coeffs());
    EXPECT_EQ(f.root.translation, k.root.translation);
  }
  // Window 1 starts from exactly the state window 0 ended in.
  const FrameState end0 = reconstruct_frame(d, r.motion.keyframes[0], r.motion.keyframes[1], 10, 10);
  const FrameState start1 = reconstruct_frame(d, r.motion.keyframes[1], r.motion.keyframes[2], 0, 10);
  EXPECT_EQ(end0.pose.axis_angle, start1.pose.axis_angle);
  EXPECT_EQ(end0.root.rotation.coeffs(), start1.root.rotation.coeffs());
  EXPECT_LT(sequence_mpjpe(r.motion, s), 5.0);
}

TEST(SolveSequence, PartialFinalWindow) {
  const Scenario s = scenario(15);
  const SequenceSolve r = solve_sequence(s.clean, s.rig, s.skeleton, default_decoder(), SolveConfig{});
  EXPECT_EQ(r.motion.keyframe_frames, (std::vector<int>{0, 10, 14}));
  EXPECT_EQ(r.windows.back().last_frame - r.windows.back().first_frame, 4);
  EXPECT_EQ(r.motion.num_frames(), 15);
}

TEST(SolveSequence, DeterministicAcrossRuns) {
  const Scenario s = scenario(21, 2.0);
  const SequenceSolve a = solve_sequence(s.observed, s.rig, s.skeleton, default_decoder(), SolveConfig{});
  const SequenceSolve b = solve_sequence(s.observed, s.rig, s.skeleton, default_decoder(), SolveConfig{});
  for (int f = 0; f < a.motion.num_frames(); ++f) EXPECT_TRUE(same_frame(a.motion.frames[f], b.motion.frames[f]));
}

TEST(SolveSequence, CorruptingLaterWindowLeavesEarlierOnesUntouched) {
  const Scenario s = scenario(31, 2.0);
  const SequenceSolve a = solve_sequence(s.observed, s.rig, s.skeleton, default_decoder(), SolveConfig{});
  std::vector<FrameObservations> corrupted = s.observed;
  for (int f = 21; f <= 30; ++f)
    for (int j = 0; j < 17; ++j) corrupted[f].at(0, j).keypoint += Eigen::Vector2d(80.0, -40.0);
  const SequenceSolve b = solve_sequence(corrupted, s.rig, s.skeleton, default_decoder(), SolveConfig{});
  for (int f = 0; f <= 20; ++f) EXPECT_TRUE(same_frame(a.motion.frames[f], b.motion.frames[f])) << "frame " << f;
  EXPECT_FALSE(same_frame(a.motion.frames[30], b.motion.frames[30]));
}

TEST(SolveSequence, ErrorsNameTheWindow) {
  const Scenario s = scenario(21);
  std::vector<FrameObservations> obs = s.clean;
  obs[15].at(1, 2).keypoint.x() = std::numeric_limits<double>::quiet_NaN();
  try {
    solve_sequence(obs, s.rig, s.skeleton, default_decoder(), SolveConfig{});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("window 2, frame 15"), std::string::npos) << e.what();
  }
}

TEST(BundleObjective, ContainsOnlyDataAndPrior) {
  // Structural check: the window objective decomposes exactly into the frame
  // data terms and the prior, with no term coupling neighbouring frames.
  const Scenario s = scenario(11, 2.0);
  const Decoder d = default_decoder();
  CounterRng rng(3);
  const Keyframe k0 = s.truth.motion.keyframes[0];
  const Keyframe kT = perturb_keyframe(s.truth.motion.keyframes[1], normal_vector(rng, 18, 0.05));
  const std::span<const FrameObservations> window(s.observed.data() + 1, 10);
  const ObjectiveConfig config;
  const WindowEvaluation e = window_objective_and_gradient(k0, kT, d, window, s.rig, s.skeleton, s.truth.motion.shape, config);
  double sum = prior_term(kT.latent, config);
  for (int t = 1; t <= 10; ++t) {
    const FrameState f = reconstruct_frame(d, k0, kT, t, 10);
    const double data = frame_data_term(f.pose, f.root, window[t - 1], s.rig, s.skeleton, s.truth.motion.shape, config);
    EXPECT_NEAR(e.frame_data[t - 1], data, 1e-9 * (1.0 + data));
    sum += data;
  }
  EXPECT_NEAR(e.value, sum, 1e-9 * sum);
  EXPECT_EQ(e.prior, prior_term(kT.latent, config));
}

TEST(PerFrameBaseline, FirstFrameMatchesFirstFrameFitAndCleanAccuracy) {
  const Scenario s = scenario(21);
  const Decoder d = default_decoder();
  const SequenceSolve p = solve_per_frame_baseline(s.clean, s.rig, s.skeleton, d, SolveConfig{});
  const FirstFrameResult first = fit_first_frame(s.clean[0], s.rig, s.skeleton, d, SolveConfig{});
  EXPECT_EQ(p.motion.frames[0].pose.axis_angle, d.decode(first.key.latent).axis_angle);
  EXPECT_EQ(p.motion.num_frames(), 21);
  const SequenceSolve b = solve_sequence(s.clean, s.rig, s.skeleton, d, SolveConfig{});
  EXPECT_LT(std::abs(sequence_mpjpe(p.motion, s) - sequence_mpjpe(b.motion, s)), 2.0);
}

TEST(SmoothnessBaseline, CleanAccuracyAndWeightLimits) {
  const Scenario s = scenario(11);
  const Decoder d = default_decoder();
  const SolveConfig config;
  const SequenceSolve per_frame = solve_per_frame_baseline(s.clean, s.rig, s.skeleton, d, config);
  const SequenceSolve smooth = solve_smoothness_baseline(s.clean, s.rig, s.skeleton, d, config, config.smoothness_weight);
  EXPECT_LT(sequence_mpjpe(smooth.motion, s), 5.0);

  // Weight zero: the joint problem has the per-frame minimizers on clean data.
  const SequenceSolve zero = solve_smoothness_baseline(s.clean, s.rig, s.skeleton, d, config, 0.0);
  EXPECT_LT(std::abs(sequence_mpjpe(zero.motion, s) - sequence_mpjpe(per_frame.motion, s)), 2.0);

  // A huge weight freezes the joints.
  const SequenceSolve frozen = solve_smoothness_baseline(s.clean, s.rig, s.skeleton, d, config, 1e12);
  const std::vector<Eigen::Matrix3Xd> j = joint_trajectory(frozen.motion, s.skeleton);
  double max_step = 0.0;
  for (std::size_t f = 1; f < j.size(); ++f) max_step = std::max(max_step, (j[f] - j[f - 1]).colwise().norm().maxCoeff());
  EXPECT_LT(max_step, 1e-3);
}

TEST(SmoothnessBaseline, ObjectiveAddsVelocityPenalty) {
  const Scenario s = scenario(4);
  const Decoder d = default_decoder();
  std::vector<Keyframe> frames;
  for (int f = 0; f < 4; ++f) {
    Keyframe k;
    k.latent = s.truth.latents[f];
    k.root = s.truth.motion.frames[f].root;
    frames.push_back(k);
  }
  const ObjectiveConfig config;
  const double base = smoothness_objective(s.clean, frames, s.rig, s.skeleton, d, s.truth.motion.shape, config, 0.0);
  const double with = smoothness_objective(s.clean, frames, s.rig, s.skeleton, d, s.truth.motion.shape, config, 2.0);
  const std::vector<Eigen::Matrix3Xd> j = joint_trajectory(s.truth.motion, s.skeleton);
  double velocity = 0.0;
  for (int f = 1; f < 4; ++f) velocity += (j[f] - j[f - 1]).squaredNorm();
  EXPECT_NEAR(with - base, 2.0 * velocity, 1e-9 * (1.0 + velocity));
}
