#include "keymocap/synth.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "keymocap/random.hpp"

namespace keymocap {

namespace {

// Stream tags for derive_key so that each random quantity has its own stream.
constexpr std::uint64_t kTagMotion = 1;
constexpr std::uint64_t kTagShape = 2;
constexpr std::uint64_t kTagNoise = 3;

void check_rate(double r, const char* what) {
  if (!(r >= 0.0 && r <= 1.0)) throw ParameterError(std::string(what) + " must lie in [0, 1]");
}

}  // namespace

void RigSpec::validate() const {
  if (num_views < 1) throw ParameterError("rig needs at least one view");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw ParameterError("rig radius must be positive");
  if (!std::isfinite(height) || !target.allFinite() || !std::isfinite(phase))
    throw ParameterError("rig placement must be finite");
  if (!(focal > 0.0) || !std::isfinite(focal)) throw ParameterError("focal length must be positive");
  if (width < 1 || height_px < 1) throw ParameterError("image size must be positive");
}

void MotionSpec::validate() const {
  for (double v : {base_scale, waypoint_spread, path_radius, yaw_amplitude, shape_spread})
    if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("motion amplitudes must be finite and non-negative");
  if (keyframe_spacing < 1) throw ParameterError("keyframe spacing must be >= 1");
  if (!(path_period > 0.0) || !std::isfinite(path_period))
    throw ParameterError("path period must be positive");
  if (!std::isfinite(root_height)) throw ParameterError("root height must be finite");
  if (shape_spread >= 0.5) throw ParameterError("shape spread must be below 0.5");
}

void NoiseModel::validate() const {
  if (!(gaussian_sigma >= 0.0) || !std::isfinite(gaussian_sigma))
    throw ParameterError("noise sigma must be finite and non-negative");
  check_rate(dropout_rate, "dropout rate");
  check_rate(inversion_rate, "inversion rate");
}

void ScenarioConfig::validate() const {
  if (num_frames < 2) throw ParameterError("scenario needs at least 2 frames");
  if (!(frame_rate > 0.0) || !std::isfinite(frame_rate))
    throw ParameterError("frame rate must be positive");
  rig.validate();
  motion.validate();
  noise.validate();
  for (int v : noise.outlier_views)
    if (v < 0 || v >= rig.num_views) throw ParameterError("outlier view index out of range");
}

CameraRig make_circle_rig(const RigSpec& spec) {
  spec.validate();
  CameraRig rig;
  for (int c = 0; c < spec.num_views; ++c) {
    const double a = spec.phase + 2.0 * std::numbers::pi * c / spec.num_views;
    const Eigen::Vector3d eye(spec.target.x() + spec.radius * std::cos(a),
                              spec.target.y() + spec.radius * std::sin(a), spec.height);
    rig.views.push_back(look_at_camera(eye, spec.target, Eigen::Vector3d::UnitZ(), spec.focal,
                                       spec.width, spec.height_px));
  }
  return rig;
}

Decoder default_decoder() { return make_random_decoder(12, {256, 256}, 17, 42); }

GroundTruth generate_motion(const ScenarioConfig& config, const Skeleton& skeleton,
                            const Decoder& decoder) {
  config.validate();
  if (decoder.output_dim() != skeleton.pose_dim())
    throw ParameterError("decoder output does not match the skeleton");
  const MotionSpec& m = config.motion;
  const int L = decoder.latent_dim();
  const int F = config.num_frames;
  const int J = skeleton.num_joints();

  CounterRng rng(derive_key(config.seed, kTagMotion));
  LatentCode base(L);
  for (int k = 0; k < L; ++k) base(k) = m.base_scale * rng.normal();
  const double path_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double yaw_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double heading = rng.uniform(-std::numbers::pi, std::numbers::pi);

  auto root_at = [&](int frame) {
    const double w = 2.0 * std::numbers::pi / m.path_period;
    const double a = w * frame / config.frame_rate + path_phase;
    RootTransform r;
    r.translation = Eigen::Vector3d(m.path_radius * std::sin(a),
                                    m.path_radius * std::sin(a) * std::cos(a),
                                    m.root_height + 0.02 * std::sin(2.0 * a));
    const double yaw = heading + m.yaw_amplitude * std::sin(a + yaw_phase);
    const double tilt = 0.05 * std::sin(2.0 * a);
    r.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
                                    Eigen::AngleAxisd(tilt, Eigen::Vector3d::UnitY()));
    return r;
  };

  const std::vector<int> schedule = keyframe_schedule(F, m.keyframe_spacing);
  std::vector<Keyframe> waypoints;
  for (int frame : schedule) {
    Keyframe k;
    k.latent = base;
    for (int j = 0; j < L; ++j) k.latent(j) += m.waypoint_spread * rng.normal();
    k.root = root_at(frame);
    waypoints.push_back(std::move(k));
  }

  GroundTruth gt;
  MotionSequence& motion = gt.motion;
  motion.frame_rate = config.frame_rate;
  motion.window = m.keyframe_spacing;
  motion.keyframes = waypoints;
  motion.keyframe_frames = schedule;
  motion.frames.resize(F);
  gt.latents.resize(F);

  gt.latents[0] = waypoints[0].latent;
  motion.frames[0] = {decoder.decode(waypoints[0].latent), waypoints[0].root};
  for (std::size_t w = 1; w < schedule.size(); ++w) {
    const int a = schedule[w - 1];
    const int length = schedule[w] - a;
    for (int t = 1; t <= length; ++t) {
      FrameState f = reconstruct_frame(decoder, waypoints[w - 1], waypoints[w], t, length);
      gt.latents[a + t] = std::move(f.latent);
      motion.frames[a + t] = {std::move(f.pose), f.root};
    }
  }

  CounterRng shape_rng(derive_key(config.seed, kTagShape));
  motion.shape = ShapeParams::ones(J);
  for (int i = 1; i < J; ++i) {
    const double s = 1.0 + shape_rng.uniform(-m.shape_spread, m.shape_spread);
    const int mirror = skeleton.joint(i).mirror.empty() ? -1 : skeleton.find(skeleton.joint(i).mirror);
    // The first joint of a mirrored pair decides both scales.
    if (mirror > 0 && mirror < i) continue;
    motion.shape.bone_scales(i) = s;
    if (mirror > 0) motion.shape.bone_scales(mirror) = s;
  }
  return gt;
}

std::vector<FrameObservations> render_keypoints(const MotionSequence& motion,
                                                const CameraRig& rig, const Skeleton& skeleton) {
  rig.validate();
  const int J = skeleton.num_joints();
  std::vector<FrameObservations> out;
  out.reserve(motion.frames.size());
  for (const MotionFrame& frame : motion.frames) {
    const Eigen::Matrix3Xd joints = forward_kinematics(skeleton, motion.shape, frame.pose, frame.root);
    FrameObservations obs(rig.size(), J);
    for (int c = 0; c < rig.size(); ++c) {
      for (int j = 0; j < J; ++j) {
        Observation& o = obs.at(c, j);
        const auto uv = try_project<double>(rig[c], joints.col(j));
        if (!uv) {
          o.confidence = 0.0;
          o.in_image = false;
          continue;
        }
        o.keypoint = *uv;
        o.confidence = 1.0;
        o.in_image = rig[c].in_image(*uv);
      }
    }
    out.push_back(std::move(obs));
  }
  return out;
}

std::vector<FrameObservations> inject_outliers(const std::vector<FrameObservations>& clean,
                                               const NoiseModel& noise, const Skeleton& skeleton,
                                               std::uint64_t seed) {
  noise.validate();
  if (noise.is_null()) return clean;
  const std::vector<std::pair<int, int>> pairs = skeleton.symmetric_pairs();
  const int J = skeleton.num_joints();

  std::vector<FrameObservations> out = clean;
  for (std::size_t f = 0; f < out.size(); ++f) {
    FrameObservations& obs = out[f];
    if (obs.num_joints() != J) throw ParameterError("observations do not match the skeleton");
    for (int v : noise.outlier_views)
      if (v < 0 || v >= obs.num_views()) throw ParameterError("outlier view index out of range");
    const std::uint64_t frame_key = derive_key(derive_key(seed, kTagNoise), f);
    for (int c = 0; c < obs.num_views(); ++c) {
      // Fixed number of draws per slot so rates do not shift other streams.
      CounterRng rng(derive_key(frame_key, c));
      bool outliers_here = noise.outlier_views.empty();
      for (int v : noise.outlier_views) outliers_here = outliers_here || v == c;

      std::vector<char> inverted(J, 0);
      for (const auto& [a, b] : pairs) {
        const bool hit = rng.bernoulli(noise.inversion_rate);
        if (!hit || !outliers_here) continue;
        Observation& oa = obs.at(c, a);
        Observation& ob = obs.at(c, b);
        if (oa.confidence <= 0.0 || ob.confidence <= 0.0) continue;
        std::swap(oa.keypoint, ob.keypoint);
        std::swap(oa.in_image, ob.in_image);
        inverted[a] = inverted[b] = 1;
      }
      for (int j = 0; j < J; ++j) {
        Observation& o = obs.at(c, j);
        const double nx = rng.normal();
        const double ny = rng.normal();
        const bool drop = rng.bernoulli(noise.dropout_rate);
        const double u = rng.uniform();
        if (o.confidence <= 0.0) continue;
        if (drop && outliers_here) {
          o.confidence = 0.0;
          continue;
        }
        o.keypoint += noise.gaussian_sigma * Eigen::Vector2d(nx, ny);
        o.confidence = inverted[j] ? 0.3 + 0.4 * u : 0.7 + 0.3 * u;
      }
    }
  }
  return out;
}

Scenario build_scenario(const ScenarioConfig& config, const Skeleton& skeleton,
                        const Decoder& decoder) {
  Scenario s;
  s.config = config;
  s.skeleton = skeleton;
  s.truth = generate_motion(config, skeleton, decoder);
  s.rig = make_circle_rig(config.rig);
  s.clean = render_keypoints(s.truth.motion, s.rig, skeleton);
  s.observed = inject_outliers(s.clean, config.noise, skeleton, config.seed);
  return s;
}

}  // namespace keymocap
