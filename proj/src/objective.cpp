#include "keymocap/objective.hpp"

#include <cmath>
#include <string>

namespace keymocap {

void FrameObservations::validate(int num_views, int num_joints) const {
  if (num_views_ != num_views || num_joints_ != num_joints)
    throw ParameterError("observation grid is " + std::to_string(num_views_) + "x" +
                         std::to_string(num_joints_) + ", expected " + std::to_string(num_views) +
                         "x" + std::to_string(num_joints));
  for (const Observation& o : data_) {
    if (!(o.confidence >= 0.0 && o.confidence <= 1.0))
      throw ParameterError("observation confidence outside [0, 1]");
    if (o.confidence > 0.0 && !o.keypoint.allFinite())
      throw ParameterError("confident observation with non-finite keypoint");
  }
}

void ObjectiveConfig::validate() const {
  if (!std::isfinite(lambda_data) || !std::isfinite(lambda_prior) || !std::isfinite(gm_sigma))
    throw ParameterError("objective weights must be finite");
  if (lambda_data < 0.0 || lambda_prior < 0.0)
    throw ParameterError("objective weights must be non-negative");
  if (!(gm_sigma > 0.0)) throw ParameterError("Geman-McClure sigma must be positive");
}

double frame_data_term(const Eigen::Matrix3Xd& joints, const FrameObservations& obs,
                       const CameraRig& rig, const ObjectiveConfig& config,
                       Eigen::Matrix3Xd* joint_gradients) {
  const int J = static_cast<int>(joints.cols());
  if (obs.num_views() != rig.size() || obs.num_joints() != J)
    throw ParameterError("observations do not match the rig and skeleton");
  if (joint_gradients) joint_gradients->setZero(3, J);

  const double sigma = config.gm_sigma;
  double total = 0.0;
  for (int c = 0; c < rig.size(); ++c) {
    const CameraView& view = rig[c];
    const Eigen::Matrix3d rot = view.rotation.toRotationMatrix();
    for (int i = 0; i < J; ++i) {
      const Observation& o = obs.at(c, i);
      if (o.confidence <= 0.0) continue;
      const Eigen::Vector3d pc = rot * joints.col(i) + view.translation;
      if (!(pc.z() > kMinDepth)) continue;
      const double iz = 1.0 / pc.z();
      const Eigen::Vector2d uv(view.fx * pc.x() * iz + view.cx, view.fy * pc.y() * iz + view.cy);
      const Eigen::Vector2d r = uv - o.keypoint;
      total += o.confidence * geman_mcclure(r, sigma);
      if (joint_gradients) {
        const Eigen::Vector2d dr = (config.lambda_data * o.confidence) * geman_mcclure_gradient(r, sigma);
        Eigen::Matrix<double, 2, 3> d_cam;
        d_cam << view.fx * iz, 0.0, -view.fx * pc.x() * iz * iz,
                 0.0, view.fy * iz, -view.fy * pc.y() * iz * iz;
        joint_gradients->col(i) += rot.transpose() * (d_cam.transpose() * dr);
      }
    }
  }
  return config.lambda_data * total;
}

double frame_data_term(const PoseParams& pose, const RootTransform& root,
                       const FrameObservations& obs, const CameraRig& rig,
                       const Skeleton& skeleton, const ShapeParams& shape,
                       const ObjectiveConfig& config) {
  return frame_data_term(forward_kinematics(skeleton, shape, pose, root), obs, rig, config);
}

double prior_term(const LatentCode& z, const ObjectiveConfig& config) {
  return config.lambda_prior * z.squaredNorm();
}

double window_data_term(const Keyframe& key0, const Keyframe& keyT, const Decoder& decoder,
                        std::span<const FrameObservations> window_obs, const CameraRig& rig,
                        const Skeleton& skeleton, const ShapeParams& shape,
                        const ObjectiveConfig& config) {
  const int T = static_cast<int>(window_obs.size());
  if (T < 1) throw ParameterError("window needs at least one observation frame");
  double total = 0.0;
  for (int t = 1; t <= T; ++t) {
    const FrameState f = reconstruct_frame(decoder, key0, keyT, t, T);
    total += frame_data_term(f.pose, f.root, window_obs[t - 1], rig, skeleton, shape, config);
  }
  return total;
}

WindowEvaluation window_objective_and_gradient(const Keyframe& fixed_key0,
                                               const Keyframe& free_keyT,
                                               const Decoder& decoder,
                                               std::span<const FrameObservations> window_obs,
                                               const CameraRig& rig, const Skeleton& skeleton,
                                               const ShapeParams& shape,
                                               const ObjectiveConfig& config) {
  const int T = static_cast<int>(window_obs.size());
  if (T < 1) throw ParameterError("window needs at least one observation frame");
  const int L = decoder.latent_dim();
  if (fixed_key0.latent.size() != L || free_keyT.latent.size() != L)
    throw ParameterError("keyframe latent dimension does not match the decoder");
  if (!free_keyT.latent.allFinite() || !free_keyT.root.translation.allFinite() ||
      !free_keyT.root.rotation.coeffs().allFinite())
    throw NumericError("non-finite free keyframe parameters");

  const KeyframeGradientLayout layout{L};
  WindowEvaluation eval;
  eval.gradient = Eigen::VectorXd::Zero(layout.size());
  eval.frame_data.reserve(T);
  Eigen::Matrix3Xd joint_grad;

  for (int t = 1; t <= T; ++t) {
    const double s = interpolation_fraction(t, T);
    const LatentCode latent = slerp_latent(fixed_key0.latent, free_keyT.latent, t, T);
    const Decoder::Trace trace = decoder.forward(latent);
    const PoseParams pose = PoseParams::from_flat(trace.output());
    RootTransform root;
    root.rotation = slerp_rotation(fixed_key0.root.rotation, free_keyT.root.rotation, t, T);
    root.translation = lerp_translation(fixed_key0.root.translation, free_keyT.root.translation, t, T);

    const FkState state = forward_kinematics_state(skeleton, shape, pose, root);
    const double data = frame_data_term(state.positions, window_obs[t - 1], rig, config, &joint_grad);
    if (!std::isfinite(data)) throw NumericError("non-finite window data term", t);
    eval.frame_data.push_back(data);
    eval.value += data;

    const FkGradient fkg = fk_vjp(skeleton, pose, state, joint_grad);
    const Eigen::VectorXd pose_grad =
        Eigen::Map<const Eigen::VectorXd>(fkg.pose.data(), fkg.pose.size());
    const Eigen::VectorXd latent_grad = decoder.vjp(trace, pose_grad);
    eval.gradient.head(L) +=
        slerp_latent_vjp(fixed_key0.latent, free_keyT.latent, t, T, latent_grad);
    eval.gradient.segment<3>(layout.rotation_offset()) +=
        slerp_rotation_jacobian(fixed_key0.root.rotation, free_keyT.root.rotation, t, T)
            .transpose() * fkg.rotation;
    eval.gradient.segment<3>(layout.translation_offset()) += s * fkg.translation;
  }

  eval.prior = prior_term(free_keyT.latent, config);
  eval.value += eval.prior;
  eval.gradient.head(L) += 2.0 * config.lambda_prior * free_keyT.latent;
  if (!std::isfinite(eval.value) || !eval.gradient.allFinite())
    throw NumericError("non-finite window objective", T);
  return eval;
}

FrameEvaluation frame_objective_and_gradient(const Keyframe& key, const Decoder& decoder,
                                             const FrameObservations& obs, const CameraRig& rig,
                                             const Skeleton& skeleton, const ShapeParams& shape,
                                             const ObjectiveConfig& config) {
  const int L = decoder.latent_dim();
  if (key.latent.size() != L) throw ParameterError("latent dimension does not match the decoder");
  const KeyframeGradientLayout layout{L};

  const Decoder::Trace trace = decoder.forward(key.latent);
  const PoseParams pose = PoseParams::from_flat(trace.output());
  const FkState state = forward_kinematics_state(skeleton, shape, pose, key.root);
  Eigen::Matrix3Xd joint_grad;
  FrameEvaluation eval;
  eval.data = frame_data_term(state.positions, obs, rig, config, &joint_grad);
  eval.prior = prior_term(key.latent, config);
  eval.value = eval.data + eval.prior;

  const FkGradient fkg = fk_vjp(skeleton, pose, state, joint_grad);
  const Eigen::VectorXd pose_grad =
      Eigen::Map<const Eigen::VectorXd>(fkg.pose.data(), fkg.pose.size());
  eval.gradient.resize(layout.size());
  eval.gradient.head(L) = decoder.vjp(trace, pose_grad) + 2.0 * config.lambda_prior * key.latent;
  eval.gradient.segment<3>(layout.rotation_offset()) = fkg.rotation;
  eval.gradient.segment<3>(layout.translation_offset()) = fkg.translation;
  eval.bone_scales = fkg.bone_scales;
  if (!std::isfinite(eval.value) || !eval.gradient.allFinite())
    throw NumericError("non-finite frame objective");
  return eval;
}

}  // namespace keymocap
