#pragma once

#include <cstdint>
#include <vector>

#include "keymocap/camera.hpp"
#include "keymocap/kinematics.hpp"
#include "keymocap/manifold.hpp"
#include "keymocap/objective.hpp"
#include "keymocap/pipeline.hpp"

namespace keymocap {

/// Views evenly spaced on a horizontal circle, all looking at `target`.
struct RigSpec {
  int num_views = 4;
  double radius = 4.0;   // meters
  double height = 1.5;   // camera height, meters
  Eigen::Vector3d target{0.0, 0.0, 1.0};
  double phase = 0.25;   // angle of the first view, radians
  double focal = 1500.0; // pixels
  int width = 1500;
  int height_px = 1500;

  void validate() const;
};

CameraRig make_circle_rig(const RigSpec& spec);

/// Latent waypoints z_i = base + spread * n_i placed every `keyframe_spacing`
/// frames and joined by latent slerp; the root follows a smooth closed path
/// sampled at the same waypoints and joined by rotation slerp / lerp.
struct MotionSpec {
  double base_scale = 0.6;       // std of the shared base code
  double waypoint_spread = 0.3;  // std of the per-waypoint offsets
  int keyframe_spacing = 10;
  double path_radius = 0.6;      // meters
  double path_period = 8.0;      // seconds per loop
  double root_height = 0.95;     // meters
  double yaw_amplitude = 0.6;    // radians
  double shape_spread = 0.05;    // bone scales uniform in [1 - s, 1 + s], mirrored bones equal

  void validate() const;
};

struct NoiseModel {
  double gaussian_sigma = 0.0;  // pixels
  double dropout_rate = 0.0;
  double inversion_rate = 0.0;
  /// Views subject to dropout and inversion; empty means every view.
  std::vector<int> outlier_views;

  bool is_null() const {
    return gaussian_sigma == 0.0 && dropout_rate == 0.0 && inversion_rate == 0.0;
  }
  void validate() const;
};

struct ScenarioConfig {
  std::uint64_t seed = 7;
  int num_frames = 51;
  double frame_rate = 30.0;
  RigSpec rig;
  MotionSpec motion;
  NoiseModel noise;

  void validate() const;
};

/// The latent decoder used throughout the experiments: 12 -> 256 -> 256 -> 48,
/// seed 42. Joint positions of the 17-joint skeleton constrain only 23 of the
/// 48 rotation coordinates (leaf joints and bone twists are invisible), so a
/// latent space larger than that cannot be recovered from keypoints.
Decoder default_decoder();

struct GroundTruth {
  MotionSequence motion;
  std::vector<LatentCode> latents;  // per frame
};

GroundTruth generate_motion(const ScenarioConfig& config, const Skeleton& skeleton,
                            const Decoder& decoder);

/// Exact projections of the joints of every frame (w = 1). Joints behind a
/// camera get w = 0; joints outside the image keep w = 1 with in_image false.
std::vector<FrameObservations> render_keypoints(const MotionSequence& motion,
                                                const CameraRig& rig, const Skeleton& skeleton);

/// Applies Gaussian pixel noise, dropouts and left/right inversions. A null
/// model returns the input unchanged. Otherwise every detection gets a fresh
/// confidence: uniform [0.7, 1] normally, uniform [0.3, 0.7] where an
/// inversion hit it. Inversions swap the keypoints of a symmetric pair and
/// leave the per-slot confidence draw alone.
std::vector<FrameObservations> inject_outliers(const std::vector<FrameObservations>& clean,
                                               const NoiseModel& noise, const Skeleton& skeleton,
                                               std::uint64_t seed);

struct Scenario {
  ScenarioConfig config;
  Skeleton skeleton;
  CameraRig rig;
  GroundTruth truth;
  std::vector<FrameObservations> clean;
  std::vector<FrameObservations> observed;
};

/// Rig, motion and both observation sets for one configuration.
Scenario build_scenario(const ScenarioConfig& config, const Skeleton& skeleton,
                        const Decoder& decoder);

}  // namespace keymocap
