#include "keymocap/pipeline.hpp"

#include <Eigen/SVD>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace keymocap {

void SolveConfig::set_weights(double lambda_data, double lambda_prior) {
  objective.lambda_data = lambda_data;
  objective.lambda_prior = lambda_prior;
  first_frame_stages = {StageWeights{lambda_data, lambda_prior},
                        StageWeights{lambda_data, lambda_prior}};
}

void SolveConfig::validate() const {
  if (window < 1) throw ParameterError("window length must be >= 1");
  solver.validate();
  objective.validate();
  for (const StageWeights& s : first_frame_stages) {
    if (!(s.lambda_data >= 0.0) || !(s.lambda_prior >= 0.0) || !std::isfinite(s.lambda_data) ||
        !std::isfinite(s.lambda_prior))
      throw ParameterError("stage weights must be finite and non-negative");
  }
  if (!(smoothness_weight >= 0.0) || !std::isfinite(smoothness_weight))
    throw ParameterError("smoothness weight must be finite and non-negative");
  if (smoothness_iterations < 1) throw ParameterError("smoothness iterations must be >= 1");
}

std::vector<Eigen::Matrix3Xd> joint_trajectory(const MotionSequence& motion,
                                               const Skeleton& skeleton) {
  std::vector<Eigen::Matrix3Xd> joints;
  joints.reserve(motion.frames.size());
  for (const MotionFrame& f : motion.frames)
    joints.push_back(forward_kinematics(skeleton, motion.shape, f.pose, f.root));
  return joints;
}

std::vector<int> keyframe_schedule(int num_frames, int window) {
  if (num_frames < 1) throw ParameterError("sequence has no frames");
  if (window < 1) throw ParameterError("window length must be >= 1");
  std::vector<int> keys;
  for (int f = 0; f < num_frames; f += window) keys.push_back(f);
  if (keys.back() != num_frames - 1) keys.push_back(num_frames - 1);
  return keys;
}

namespace {

/// Flat optimizer coordinates of a keyframe: [z | rotation offset | translation],
/// with the rotation expressed as q = Exp(delta) q_ref around a fixed reference.
class KeyframeChart {
 public:
  KeyframeChart(int latent_dim, const Eigen::Quaterniond& reference)
      : layout_{latent_dim}, reference_(reference) {}

  int size() const { return layout_.size(); }

  Eigen::VectorXd pack(const Keyframe& key) const {
    Eigen::VectorXd x(size());
    x.head(layout_.latent_dim) = key.latent;
    x.segment<3>(layout_.rotation_offset()) =
        so3_log(Eigen::Quaterniond(key.root.rotation * reference_.conjugate()));
    x.segment<3>(layout_.translation_offset()) = key.root.translation;
    return x;
  }

  template <typename Derived>
  Keyframe unpack(const Eigen::MatrixBase<Derived>& x) const {
    Keyframe key;
    key.latent = x.head(layout_.latent_dim);
    const Eigen::Vector3d delta = x.template segment<3>(layout_.rotation_offset());
    key.root.rotation = (so3_exp(delta) * reference_).normalized();
    key.root.translation = x.template segment<3>(layout_.translation_offset());
    return key;
  }

  /// Converts a gradient in KeyframeGradientLayout (world-frame rotation
  /// perturbation) into a gradient w.r.t. the chart coordinates at x.
  template <typename DerivedX, typename DerivedG>
  Eigen::VectorXd chain(const Eigen::MatrixBase<DerivedX>& x,
                        const Eigen::MatrixBase<DerivedG>& g) const {
    Eigen::VectorXd out = g;
    const Eigen::Vector3d delta = x.template segment<3>(layout_.rotation_offset());
    out.segment<3>(layout_.rotation_offset()) =
        left_jacobian(delta).transpose() * g.template segment<3>(layout_.rotation_offset());
    return out;
  }

 private:
  KeyframeGradientLayout layout_;
  Eigen::Quaterniond reference_;
};

constexpr double kInf = std::numeric_limits<double>::infinity();

ObjectiveConfig with_weights(ObjectiveConfig config, const StageWeights& w) {
  config.lambda_data = w.lambda_data;
  config.lambda_prior = w.lambda_prior;
  return config;
}

/// With a window length, errors also name the window that owns the frame.
void check_sequence(std::span<const FrameObservations> all_obs, const CameraRig& rig,
                    const Skeleton& skeleton, int window = 0) {
  if (all_obs.empty()) throw ParameterError("sequence has no frames");
  for (std::size_t f = 0; f < all_obs.size(); ++f) {
    try {
      all_obs[f].validate(rig.size(), skeleton.num_joints());
    } catch (const ParameterError& e) {
      std::string where = "frame " + std::to_string(f);
      if (window > 0)
        where = (f == 0 ? std::string("first frame")
                        : "window " + std::to_string((f - 1) / window + 1)) + ", " + where;
      throw ParameterError(where + ": " + e.what());
    }
  }
}


/// Weighted pixel predictions sqrt(w) * (fx x/z, fy y/z) of every detection
/// of the given frames; the residual Jacobian of the data term up to the
/// robust weighting.
Eigen::VectorXd weighted_pixels(const std::vector<Eigen::Matrix3Xd>& joints,
                                std::span<const FrameObservations> obs, const CameraRig& rig) {
  std::vector<double> out;
  for (std::size_t f = 0; f < joints.size(); ++f)
    for (int c = 0; c < rig.size(); ++c)
      for (int j = 0; j < obs[f].num_joints(); ++j) {
        const double w = obs[f].at(c, j).confidence;
        if (w <= 0.0) continue;
        const Eigen::Vector3d pc = rig[c].to_camera<double>(joints[f].col(j));
        const double z = std::max(pc.z(), 1e-3);
        out.push_back(std::sqrt(w) * rig[c].fx * pc.x() / z);
        out.push_back(std::sqrt(w) * rig[c].fy * pc.y() / z);
      }
  return Eigen::Map<const Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

/// Gauss-Newton Hessian at x0 of the data term taken as plain weighted least
/// squares (the small-residual limit of the robust penalty) plus the latent
/// prior. The residual Jacobian is taken by central differences.
template <typename JointsFn>
Eigen::MatrixXd gauss_newton_hessian(JointsFn&& joints_of, const Eigen::VectorXd& x0,
                                     std::span<const FrameObservations> obs,
                                     const CameraRig& rig, int latent_dim,
                                     const ObjectiveConfig& objective) {
  constexpr double h = 1e-6;
  const Eigen::Index n = x0.size();
  const Eigen::VectorXd p0 = weighted_pixels(joints_of(x0), obs, rig);
  Eigen::MatrixXd jac(p0.size(), n);
  Eigen::VectorXd a = x0, b = x0;
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i) = x0(i) + h;
    b(i) = x0(i) - h;
    jac.col(i) = (weighted_pixels(joints_of(a), obs, rig) - weighted_pixels(joints_of(b), obs, rig)) / (2.0 * h);
    a(i) = b(i) = x0(i);
  }
  Eigen::MatrixXd hess = 2.0 * objective.lambda_data * jac.transpose() * jac;
  hess.diagonal().head(latent_dim).array() += 2.0 * objective.lambda_prior;
  return hess;
}

/// Block-diagonal change of variables x = x0 + P y with each block of P equal
/// to H^{-1/2} of the matching Hessian block, so that L-BFGS starts on a
/// roughly isotropic problem. Eigenvalues are floored relative to the largest
/// one to keep P finite on flat directions.
class Whitening {
 public:
  explicit Whitening(const std::vector<Eigen::MatrixXd>& hessian_blocks) {
    for (const Eigen::MatrixXd& hb : hessian_blocks) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (hb + hb.transpose()));
      Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
      const double floor = std::max(1e-10 * ev.maxCoeff(), 1e-300);
      ev = ev.cwiseMax(floor).cwiseSqrt();
      const Eigen::MatrixXd& v = es.eigenvectors();
      p_.push_back(v * ev.cwiseInverse().asDiagonal() * v.transpose());
      p_inv_.push_back(v * ev.asDiagonal() * v.transpose());
      size_ += hb.rows();
    }
  }

  Eigen::Index size() const { return size_; }
  Eigen::VectorXd apply(const Eigen::VectorXd& y) const { return blockwise(p_, y); }
  Eigen::VectorXd apply_inverse(const Eigen::VectorXd& y) const { return blockwise(p_inv_, y); }

 private:
  static Eigen::VectorXd blockwise(const std::vector<Eigen::MatrixXd>& blocks,
                                   const Eigen::VectorXd& v) {
    Eigen::VectorXd out(v.size());
    Eigen::Index off = 0;
    for (const Eigen::MatrixXd& b : blocks) {
      out.segment(off, b.rows()) = b * v.segment(off, b.rows());
      off += b.rows();
    }
    return out;
  }

  std::vector<Eigen::MatrixXd> p_;
  std::vector<Eigen::MatrixXd> p_inv_;
  Eigen::Index size_ = 0;
};

/// L-BFGS in whitened coordinates when `whitening` is given. The result is
/// reported in the original coordinates; step records stay in the whitened
/// ones.
template <typename Fn>
SolveResult minimize(Fn& fn, const Eigen::VectorXd& x0, const LbfgsConfig& config,
                     const Whitening* whitening) {
  if (!whitening) return lbfgs_minimize<double>(fn, x0, config);
  auto fy = [&](const Eigen::VectorXd& y, Eigen::VectorXd& gy) {
    Eigen::VectorXd g;
    const double v = fn(Eigen::VectorXd(x0 + whitening->apply(y)), g);
    gy = whitening->apply(g);
    return v;
  };
  SolveResult r = lbfgs_minimize<double>(fy, Eigen::VectorXd::Zero(x0.size()), config);
  r.x = x0 + whitening->apply(r.x);
  r.gradient = whitening->apply_inverse(r.gradient);
  return r;
}

Error annotate(const Error& e, const std::string& where) {
  return Error(e.kind(), where + ": " + e.what());
}

}  // namespace

std::optional<Eigen::Vector3d> triangulate_joint(const FrameObservations& obs,
                                                 const CameraRig& rig, int joint) {
  std::vector<int> views;
  for (int c = 0; c < rig.size(); ++c)
    if (obs.at(c, joint).confidence > 0.0) views.push_back(c);
  if (views.size() < 2) return std::nullopt;

  Eigen::MatrixXd a(2 * views.size(), 4);
  for (std::size_t k = 0; k < views.size(); ++k) {
    const CameraView& view = rig[views[k]];
    const Observation& o = obs.at(views[k], joint);
    const double x = (o.keypoint.x() - view.cx) / view.fx;
    const double y = (o.keypoint.y() - view.cy) / view.fy;
    Eigen::Matrix<double, 3, 4> p;
    p.leftCols<3>() = view.rotation.toRotationMatrix();
    p.col(3) = view.translation;
    a.row(2 * k) = o.confidence * (x * p.row(2) - p.row(0));
    a.row(2 * k + 1) = o.confidence * (y * p.row(2) - p.row(1));
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < 1e-12) return std::nullopt;
  const Eigen::Vector3d point = h.head<3>() / h(3);
  if (!point.allFinite()) return std::nullopt;
  return point;
}

InitialGuess initialize_from_triangulation(const FrameObservations& obs, const CameraRig& rig,
                                           const Skeleton& skeleton, const Decoder& decoder) {
  const int J = skeleton.num_joints();
  std::vector<std::optional<Eigen::Vector3d>> points(J);
  for (int j = 0; j < J; ++j) points[j] = triangulate_joint(obs, rig, j);

  ShapeParams shape = ShapeParams::ones(J);
  for (int i = 1; i < J; ++i) {
    const int p = skeleton.parent(i);
    const double rest = skeleton.offset(i).norm();
    if (!points[i] || !points[p] || rest < 1e-9) continue;
    shape.bone_scales(i) = std::clamp((*points[i] - *points[p]).norm() / rest, 0.5, 2.0);
  }

  InitialGuess guess;
  guess.key.latent = LatentCode::Zero(decoder.latent_dim());
  const Eigen::Matrix3Xd model =
      forward_kinematics(skeleton, shape, decoder.decode(guess.key.latent), RootTransform{});
  std::vector<int> used;
  for (int j = 0; j < J; ++j)
    if (points[j]) used.push_back(j);
  if (used.size() < 3) throw UnderConstrainedError("fewer than 3 joints could be triangulated");

  Eigen::Matrix3Xd src(3, used.size()), dst(3, used.size());
  for (std::size_t k = 0; k < used.size(); ++k) {
    src.col(k) = model.col(used[k]);
    dst.col(k) = *points[used[k]];
  }
  const Eigen::Matrix4d rigid = Eigen::umeyama(src, dst, false);
  guess.key.root.rotation = Eigen::Quaterniond(Eigen::Matrix3d(rigid.topLeftCorner<3, 3>())).normalized();
  guess.key.root.translation = rigid.topRightCorner<3, 1>();
  guess.shape = shape;
  return guess;
}

KeyframeSolve fit_single_frame(const Keyframe& init, const FrameObservations& obs,
                               const CameraRig& rig, const Skeleton& skeleton,
                               const Decoder& decoder, const ShapeParams& shape,
                               const ObjectiveConfig& objective, const LbfgsConfig& solver,
                               bool precondition) {
  const KeyframeChart chart(decoder.latent_dim(), init.root.rotation);
  auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) -> double {
    try {
      const FrameEvaluation e = frame_objective_and_gradient(chart.unpack(x), decoder, obs, rig,
                                                             skeleton, shape, objective);
      grad = chart.chain(x, e.gradient);
      return e.value;
    } catch (const NumericError&) {
      grad.setZero(x.size());
      return kInf;
    }
  };
  const Eigen::VectorXd x0 = chart.pack(init);
  std::optional<Whitening> whitening;
  if (precondition) {
    whitening.emplace(std::vector<Eigen::MatrixXd>{gauss_newton_hessian(
        [&](const Eigen::VectorXd& x) {
          const Keyframe k = chart.unpack(x);
          return std::vector<Eigen::Matrix3Xd>{
              forward_kinematics(skeleton, shape, decoder.decode(k.latent), k.root)};
        },
        x0, std::span<const FrameObservations>(&obs, 1), rig, decoder.latent_dim(), objective)});
  }
  KeyframeSolve out;
  out.solve = minimize(fn, x0, solver, whitening ? &*whitening : nullptr);
  out.key = chart.unpack(out.solve.x);
  return out;
}

FirstFrameResult fit_first_frame(const FrameObservations& obs, const CameraRig& rig,
                                 const Skeleton& skeleton, const Decoder& decoder,
                                 const SolveConfig& config,
                                 const std::optional<InitialGuess>& init) {
  config.validate();
  rig.validate();
  obs.validate(rig.size(), skeleton.num_joints());
  if (decoder.output_dim() != skeleton.pose_dim())
    throw ParameterError("decoder output does not match the skeleton");

  int usable_views = 0;
  for (int c = 0; c < rig.size(); ++c) {
    int seen = 0;
    for (int j = 0; j < skeleton.num_joints(); ++j)
      if (obs.at(c, j).confidence > 0.0) ++seen;
    if (seen >= 6) ++usable_views;
  }
  if (usable_views < 2)
    throw UnderConstrainedError("first frame needs two views with at least six detected joints");

  const InitialGuess guess = init ? *init : initialize_from_triangulation(obs, rig, skeleton, decoder);
  const int L = decoder.latent_dim();
  const int J = skeleton.num_joints();
  const ShapeParams shape0 = guess.shape.value_or(ShapeParams::ones(J));
  if (guess.key.latent.size() != L) throw ParameterError("initial latent has wrong dimension");
  if (shape0.bone_scales.size() != J) throw ParameterError("initial shape has wrong dimension");

  FirstFrameResult result;

  // Stage 1: latent, root and log bone scales with the strong prior.
  {
    const KeyframeChart chart(L, guess.key.root.rotation);
    const ObjectiveConfig objective = with_weights(config.objective, config.first_frame_stages[0]);
    const int n_key = chart.size();
    auto unpack_shape = [&](const Eigen::VectorXd& x) {
      ShapeParams s = ShapeParams::ones(J);
      s.bone_scales.tail(J - 1) = x.tail(J - 1).array().exp();
      return s;
    };
    auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) -> double {
      try {
        const ShapeParams s = unpack_shape(x);
        const FrameEvaluation e = frame_objective_and_gradient(
            chart.unpack(x.head(n_key)), decoder, obs, rig, skeleton, s, objective);
        grad.resize(x.size());
        grad.head(n_key) = chart.chain(x.head(n_key), e.gradient);
        grad.tail(J - 1) = e.bone_scales.tail(J - 1).cwiseProduct(s.bone_scales.tail(J - 1));
        return e.value;
      } catch (const NumericError&) {
        grad.setZero(x.size());
        return kInf;
      } catch (const ParameterError&) {
        grad.setZero(x.size());
        return kInf;
      }
    };
    Eigen::VectorXd x0(n_key + J - 1);
    x0.head(n_key) = chart.pack(guess.key);
    x0.tail(J - 1) = shape0.bone_scales.tail(J - 1).array().log();
    std::optional<Whitening> whitening;
    if (config.precondition) {
      whitening.emplace(std::vector<Eigen::MatrixXd>{gauss_newton_hessian(
          [&](const Eigen::VectorXd& x) {
            const Keyframe k = chart.unpack(x.head(n_key));
            return std::vector<Eigen::Matrix3Xd>{
                forward_kinematics(skeleton, unpack_shape(x), decoder.decode(k.latent), k.root)};
          },
          x0, std::span<const FrameObservations>(&obs, 1), rig, L, objective)});
    }
    result.stage1 = minimize(fn, x0, config.solver, whitening ? &*whitening : nullptr);
    result.key = chart.unpack(result.stage1.x.head(n_key));
    result.shape = unpack_shape(result.stage1.x);
  }

  // Stage 2: shape frozen, final weights.
  {
    const ObjectiveConfig objective = with_weights(config.objective, config.first_frame_stages[1]);
    KeyframeSolve s2 = fit_single_frame(result.key, obs, rig, skeleton, decoder, result.shape,
                                        objective, config.solver, config.precondition);
    result.key = std::move(s2.key);
    result.stage2 = std::move(s2.solve);
  }
  return result;
}

KeyframeSolve solve_window(const Keyframe& prev_key, std::span<const FrameObservations> window_obs,
                           const CameraRig& rig, const Skeleton& skeleton, const Decoder& decoder,
                           const ShapeParams& shape, const SolveConfig& config) {
  if (window_obs.empty()) throw ParameterError("window needs at least one observation frame");
  if (!prev_key.latent.allFinite() || !prev_key.root.translation.allFinite() ||
      !prev_key.root.rotation.coeffs().allFinite())
    throw NumericError("previous keyframe is not finite");

  const KeyframeChart chart(decoder.latent_dim(), prev_key.root.rotation);
  auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) -> double {
    try {
      const WindowEvaluation e = window_objective_and_gradient(
          prev_key, chart.unpack(x), decoder, window_obs, rig, skeleton, shape, config.objective);
      grad = chart.chain(x, e.gradient);
      return e.value;
    } catch (const NumericError&) {
      grad.setZero(x.size());
      return kInf;
    } catch (const DegenerateCodeError&) {
      grad.setZero(x.size());
      return kInf;
    }
  };
  const Eigen::VectorXd x0 = chart.pack(prev_key);
  const int T = static_cast<int>(window_obs.size());
  std::optional<Whitening> whitening;
  if (config.precondition) {
    whitening.emplace(std::vector<Eigen::MatrixXd>{gauss_newton_hessian(
        [&](const Eigen::VectorXd& x) {
          const Keyframe k = chart.unpack(x);
          std::vector<Eigen::Matrix3Xd> joints;
          for (int t = 1; t <= T; ++t) {
            const FrameState f = reconstruct_frame(decoder, prev_key, k, t, T);
            joints.push_back(forward_kinematics(skeleton, shape, f.pose, f.root));
          }
          return joints;
        },
        x0, window_obs, rig, decoder.latent_dim(), config.objective)});
  }
  KeyframeSolve out;
  out.solve = minimize(fn, x0, config.solver, whitening ? &*whitening : nullptr);
  out.key = chart.unpack(out.solve.x);
  return out;
}

namespace {

MotionFrame decode_keyframe(const Decoder& decoder, const Keyframe& key) {
  return {decoder.decode(key.latent), key.root};
}

}  // namespace

SequenceSolve solve_sequence(std::span<const FrameObservations> all_obs, const CameraRig& rig,
                             const Skeleton& skeleton, const Decoder& decoder,
                             const SolveConfig& config, const std::optional<InitialGuess>& init) {
  config.validate();
  check_sequence(all_obs, rig, skeleton, config.window);
  const int F = static_cast<int>(all_obs.size());

  SequenceSolve out;
  try {
    out.first = fit_first_frame(all_obs[0], rig, skeleton, decoder, config, init);
  } catch (const Error& e) {
    throw annotate(e, "first frame");
  }
  MotionSequence& motion = out.motion;
  motion.shape = out.first.shape;
  motion.window = config.window;
  motion.frames.resize(F);
  motion.keyframes.push_back(out.first.key);
  motion.keyframe_frames.push_back(0);
  motion.frames[0] = decode_keyframe(decoder, out.first.key);

  const std::vector<int> keys = keyframe_schedule(F, config.window);
  for (std::size_t w = 1; w < keys.size(); ++w) {
    const int a = keys[w - 1];
    const int b = keys[w];
    const int length = b - a;
    const Keyframe& prev = motion.keyframes.back();
    KeyframeSolve solved;
    try {
      solved = solve_window(prev, all_obs.subspan(a + 1, length), rig, skeleton, decoder,
                            motion.shape, config);
    } catch (const Error& e) {
      throw annotate(e, "window " + std::to_string(w));
    }
    out.windows.push_back({a, b, solved.solve.reason, solved.solve.iterations,
                           solved.solve.evaluations, solved.solve.value});
    for (int t = 1; t <= length; ++t) {
      FrameState f = reconstruct_frame(decoder, prev, solved.key, t, length);
      motion.frames[a + t] = {std::move(f.pose), f.root};
    }
    motion.keyframes.push_back(std::move(solved.key));
    motion.keyframe_frames.push_back(b);
  }
  return out;
}

SequenceSolve solve_per_frame_baseline(std::span<const FrameObservations> all_obs,
                                       const CameraRig& rig, const Skeleton& skeleton,
                                       const Decoder& decoder, const SolveConfig& config,
                                       const std::optional<InitialGuess>& init) {
  config.validate();
  check_sequence(all_obs, rig, skeleton);
  const int F = static_cast<int>(all_obs.size());

  SequenceSolve out;
  try {
    out.first = fit_first_frame(all_obs[0], rig, skeleton, decoder, config, init);
  } catch (const Error& e) {
    throw annotate(e, "first frame");
  }
  MotionSequence& motion = out.motion;
  motion.shape = out.first.shape;
  motion.window = 1;
  motion.frames.reserve(F);
  motion.keyframes.push_back(out.first.key);
  motion.keyframe_frames.push_back(0);
  motion.frames.push_back(decode_keyframe(decoder, out.first.key));

  for (int f = 1; f < F; ++f) {
    KeyframeSolve solved;
    try {
      solved = fit_single_frame(motion.keyframes.back(), all_obs[f], rig, skeleton, decoder,
                                motion.shape, config.objective, config.solver,
                                config.precondition);
    } catch (const Error& e) {
      throw annotate(e, "frame " + std::to_string(f));
    }
    out.windows.push_back({f, f, solved.solve.reason, solved.solve.iterations,
                           solved.solve.evaluations, solved.solve.value});
    motion.frames.push_back(decode_keyframe(decoder, solved.key));
    motion.keyframes.push_back(std::move(solved.key));
    motion.keyframe_frames.push_back(f);
  }
  return out;
}

namespace {

/// Value and per-frame gradients (KeyframeGradientLayout) of the smoothness
/// baseline objective.
double evaluate_smoothness(std::span<const FrameObservations> all_obs,
                           const std::vector<Keyframe>& frames, const CameraRig& rig,
                           const Skeleton& skeleton, const Decoder& decoder,
                           const ShapeParams& shape, const ObjectiveConfig& objective,
                           double weight, std::vector<Eigen::VectorXd>* grads) {
  const int F = static_cast<int>(frames.size());
  const int L = decoder.latent_dim();
  const KeyframeGradientLayout layout{L};
  std::vector<Decoder::Trace> traces(F);
  std::vector<PoseParams> poses(F);
  std::vector<FkState> states(F);
  std::vector<Eigen::Matrix3Xd> joint_grads(F);
  double total = 0.0;
  for (int f = 0; f < F; ++f) {
    traces[f] = decoder.forward(frames[f].latent);
    poses[f] = PoseParams::from_flat(traces[f].output());
    states[f] = forward_kinematics_state(skeleton, shape, poses[f], frames[f].root);
    total += frame_data_term(states[f].positions, all_obs[f], rig, objective,
                             grads ? &joint_grads[f] : nullptr);
    total += prior_term(frames[f].latent, objective);
  }
  for (int f = 0; f + 1 < F; ++f) {
    const Eigen::Matrix3Xd diff = states[f + 1].positions - states[f].positions;
    total += weight * diff.squaredNorm();
    if (grads) {
      joint_grads[f + 1] += 2.0 * weight * diff;
      joint_grads[f] -= 2.0 * weight * diff;
    }
  }
  if (!std::isfinite(total)) throw NumericError("non-finite smoothness objective");
  if (grads) {
    grads->resize(F);
    for (int f = 0; f < F; ++f) {
      const FkGradient fkg = fk_vjp(skeleton, poses[f], states[f], joint_grads[f]);
      const Eigen::VectorXd pose_grad =
          Eigen::Map<const Eigen::VectorXd>(fkg.pose.data(), fkg.pose.size());
      Eigen::VectorXd& g = (*grads)[f];
      g.resize(layout.size());
      g.head(L) = decoder.vjp(traces[f], pose_grad) + 2.0 * objective.lambda_prior * frames[f].latent;
      g.segment<3>(layout.rotation_offset()) = fkg.rotation;
      g.segment<3>(layout.translation_offset()) = fkg.translation;
    }
  }
  return total;
}

}  // namespace

double smoothness_objective(std::span<const FrameObservations> all_obs,
                            const std::vector<Keyframe>& frames, const CameraRig& rig,
                            const Skeleton& skeleton, const Decoder& decoder,
                            const ShapeParams& shape, const ObjectiveConfig& objective,
                            double smoothness_weight) {
  if (frames.size() != all_obs.size()) throw ParameterError("frame count mismatch");
  return evaluate_smoothness(all_obs, frames, rig, skeleton, decoder, shape, objective,
                             smoothness_weight, nullptr);
}

SequenceSolve solve_smoothness_baseline(std::span<const FrameObservations> all_obs,
                                        const CameraRig& rig, const Skeleton& skeleton,
                                        const Decoder& decoder, const SolveConfig& config,
                                        double smoothness_weight,
                                        const std::optional<InitialGuess>& init,
                                        const MotionSequence* start) {
  config.validate();
  if (!(smoothness_weight >= 0.0) || !std::isfinite(smoothness_weight))
    throw ParameterError("smoothness weight must be finite and non-negative");
  SequenceSolve out;
  if (start) {
    check_sequence(all_obs, rig, skeleton);
    out.motion = *start;
  } else {
    out = solve_per_frame_baseline(all_obs, rig, skeleton, decoder, config, init);
  }
  MotionSequence& motion = out.motion;
  const int F = static_cast<int>(all_obs.size());
  if (static_cast<int>(motion.keyframes.size()) != F)
    throw ParameterError("smoothness baseline needs one keyframe per frame to start from");

  const int L = decoder.latent_dim();
  std::vector<KeyframeChart> charts;
  charts.reserve(F);
  for (const Keyframe& k : motion.keyframes) charts.emplace_back(L, k.root.rotation);
  const int n = charts.front().size();

  auto unpack_all = [&](const Eigen::VectorXd& x) {
    std::vector<Keyframe> frames(F);
    for (int f = 0; f < F; ++f) frames[f] = charts[f].unpack(x.segment(f * n, n));
    return frames;
  };
  auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) -> double {
    grad.resize(x.size());
    try {
      std::vector<Eigen::VectorXd> grads;
      const double value = evaluate_smoothness(all_obs, unpack_all(x), rig, skeleton, decoder,
                                               motion.shape, config.objective, smoothness_weight,
                                               &grads);
      for (int f = 0; f < F; ++f)
        grad.segment(f * n, n) = charts[f].chain(x.segment(f * n, n), grads[f]);
      return value;
    } catch (const NumericError&) {
      grad.setZero();
      return kInf;
    }
  };

  Eigen::VectorXd x0(static_cast<Eigen::Index>(F) * n);
  for (int f = 0; f < F; ++f) x0.segment(f * n, n) = charts[f].pack(motion.keyframes[f]);
  LbfgsConfig solver = config.solver;
  solver.max_iterations = config.smoothness_iterations;

  // Per-frame blocks: data and prior Gauss-Newton term plus the diagonal part
  // of the velocity penalty (each frame has one or two neighbours).
  std::optional<Whitening> whitening;
  if (config.precondition) {
    std::vector<Eigen::MatrixXd> blocks;
    blocks.reserve(F);
    for (int f = 0; f < F; ++f) {
      auto joints_of = [&](const Eigen::VectorXd& xf) {
        const Keyframe k = charts[f].unpack(xf);
        return std::vector<Eigen::Matrix3Xd>{
            forward_kinematics(skeleton, motion.shape, decoder.decode(k.latent), k.root)};
      };
      const Eigen::VectorXd xf = x0.segment(f * n, n);
      Eigen::MatrixXd block = gauss_newton_hessian(joints_of, xf, all_obs.subspan(f, 1), rig, L,
                                                   config.objective);
      const int neighbours = (f > 0) + (f + 1 < F);
      if (smoothness_weight > 0.0 && neighbours > 0) {
        constexpr double h = 1e-6;
        Eigen::MatrixXd jac(3 * skeleton.num_joints(), n);
        for (int i = 0; i < n; ++i) {
          Eigen::VectorXd a = xf, b = xf;
          a(i) += h;
          b(i) -= h;
          const Eigen::Matrix3Xd d = (joints_of(a)[0] - joints_of(b)[0]) / (2.0 * h);
          jac.col(i) = Eigen::Map<const Eigen::VectorXd>(d.data(), d.size());
        }
        block += 2.0 * smoothness_weight * neighbours * jac.transpose() * jac;
      }
      blocks.push_back(std::move(block));
    }
    whitening.emplace(blocks);
  }
  const SolveResult res = minimize(fn, x0, solver, whitening ? &*whitening : nullptr);

  std::vector<Keyframe> frames = unpack_all(res.x);
  for (int f = 0; f < F; ++f) motion.frames[f] = decode_keyframe(decoder, frames[f]);
  motion.keyframes = std::move(frames);
  out.windows.push_back({0, F - 1, res.reason, res.iterations, res.evaluations, res.value});
  return out;
}

}  // namespace keymocap
