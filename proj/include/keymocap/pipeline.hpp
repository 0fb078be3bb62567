#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "keymocap/camera.hpp"
#include "keymocap/kinematics.hpp"
#include "keymocap/lbfgs.hpp"
#include "keymocap/manifold.hpp"
#include "keymocap/objective.hpp"

namespace keymocap {

struct StageWeights {
  double lambda_data = 1.0;
  double lambda_prior = 10.76;
};

enum class InitMode { Zero, PerturbedTruth, File };

struct SolveConfig {
  int window = 10;
  LbfgsConfig solver;        // 30 iterations by default
  ObjectiveConfig objective; // 1.0 / 10.76
  /// Weights of the two first-frame stages (shape free, then frozen).
  std::array<StageWeights, 2> first_frame_stages{StageWeights{1.0, 10.76},
                                                 StageWeights{1.0, 10.76}};
  /// Run L-BFGS in coordinates whitened by the Gauss-Newton Hessian at the
  /// starting point. Changes the iterates, not the objective.
  bool precondition = true;
  InitMode init = InitMode::Zero;

  // Joint-smoothness baseline only.
  double smoothness_weight = 1e5;  // per m^2 of joint displacement between frames
  int smoothness_iterations = 100;

  /// Sets the objective weights and re-derives the first-frame stages.
  void set_weights(double lambda_data, double lambda_prior);
  void validate() const;
};

struct MotionFrame {
  PoseParams pose;
  RootTransform root;
};

struct MotionSequence {
  std::vector<MotionFrame> frames;
  std::vector<Keyframe> keyframes;
  std::vector<int> keyframe_frames;  // frame index of each keyframe
  ShapeParams shape;
  double frame_rate = 30.0;
  int window = 10;

  int num_frames() const { return static_cast<int>(frames.size()); }
};

/// Joint positions of every frame.
std::vector<Eigen::Matrix3Xd> joint_trajectory(const MotionSequence& motion,
                                               const Skeleton& skeleton);

/// Frame indices of the keyframes for a sequence of `num_frames` frames:
/// 0, T, 2T, ... plus the last frame when (num_frames - 1) is not a multiple
/// of T (a shorter final window).
std::vector<int> keyframe_schedule(int num_frames, int window);

/// Starting point supplied from outside (perturbed ground truth or a file).
struct InitialGuess {
  Keyframe key;
  std::optional<ShapeParams> shape;
};

/// Linear (DLT) triangulation in normalized camera coordinates weighted by
/// confidence. Needs two views in which the joint is detected.
std::optional<Eigen::Vector3d> triangulate_joint(const FrameObservations& obs,
                                                 const CameraRig& rig, int joint);

/// Zero latent code with root and bone scales estimated from triangulated
/// joints (rigid alignment of the decoded rest pose).
InitialGuess initialize_from_triangulation(const FrameObservations& obs, const CameraRig& rig,
                                           const Skeleton& skeleton, const Decoder& decoder);

struct FirstFrameResult {
  Keyframe key;
  ShapeParams shape;
  SolveResult stage1;  // latent, root and shape with the strong prior
  SolveResult stage2;  // latent and root with the final weights, shape frozen
};

/// Two-stage single-frame fit used to start a sequence. Throws
/// UnderConstrainedError unless two views see at least six joints each.
FirstFrameResult fit_first_frame(const FrameObservations& obs, const CameraRig& rig,
                                 const Skeleton& skeleton, const Decoder& decoder,
                                 const SolveConfig& config,
                                 const std::optional<InitialGuess>& init = std::nullopt);

struct KeyframeSolve {
  Keyframe key;
  SolveResult solve;
};

/// Single-frame fit with fixed shape, starting from `init`.
KeyframeSolve fit_single_frame(const Keyframe& init, const FrameObservations& obs,
                               const CameraRig& rig, const Skeleton& skeleton,
                               const Decoder& decoder, const ShapeParams& shape,
                               const ObjectiveConfig& objective, const LbfgsConfig& solver,
                               bool precondition = true);

/// Solves the next keyframe of one window with `prev_key` held fixed; the free
/// keyframe starts as a copy of `prev_key`. `window_obs` holds frames 1..T.
KeyframeSolve solve_window(const Keyframe& prev_key, std::span<const FrameObservations> window_obs,
                           const CameraRig& rig, const Skeleton& skeleton, const Decoder& decoder,
                           const ShapeParams& shape, const SolveConfig& config);

struct WindowReport {
  int first_frame = 0;
  int last_frame = 0;
  Termination reason = Termination::Budget;
  int iterations = 0;
  int evaluations = 0;
  double final_value = 0.0;
};

struct SequenceSolve {
  MotionSequence motion;
  FirstFrameResult first;
  std::vector<WindowReport> windows;
};

/// Sliding-window keyframe bundle solve of the whole sequence.
SequenceSolve solve_sequence(std::span<const FrameObservations> all_obs, const CameraRig& rig,
                             const Skeleton& skeleton, const Decoder& decoder,
                             const SolveConfig& config,
                             const std::optional<InitialGuess>& init = std::nullopt);

/// Baseline: every frame fit on its own, warm-started from the previous frame.
SequenceSolve solve_per_frame_baseline(std::span<const FrameObservations> all_obs,
                                       const CameraRig& rig, const Skeleton& skeleton,
                                       const Decoder& decoder, const SolveConfig& config,
                                       const std::optional<InitialGuess>& init = std::nullopt);

/// Baseline: all per-frame parameters solved jointly with a squared joint
/// velocity penalty, starting from the per-frame baseline (or `start` when
/// given).
SequenceSolve solve_smoothness_baseline(std::span<const FrameObservations> all_obs,
                                        const CameraRig& rig, const Skeleton& skeleton,
                                        const Decoder& decoder, const SolveConfig& config,
                                        double smoothness_weight,
                                        const std::optional<InitialGuess>& init = std::nullopt,
                                        const MotionSequence* start = nullptr);

/// Objective of the smoothness baseline for a given per-frame state, exposed
/// for testing: data + prior per frame plus the velocity penalty.
double smoothness_objective(std::span<const FrameObservations> all_obs,
                            const std::vector<Keyframe>& frames, const CameraRig& rig,
                            const Skeleton& skeleton, const Decoder& decoder,
                            const ShapeParams& shape, const ObjectiveConfig& objective,
                            double smoothness_weight);

}  // namespace keymocap
