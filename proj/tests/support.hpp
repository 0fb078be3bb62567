#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "keymocap/camera.hpp"
#include "keymocap/kinematics.hpp"
#include "keymocap/manifold.hpp"
#include "keymocap/objective.hpp"
#include "keymocap/random.hpp"
#include "keymocap/so3.hpp"
#include "keymocap/synth.hpp"

namespace keymocap::testing {

inline Eigen::VectorXd normal_vector(CounterRng& rng, Eigen::Index n, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * rng.normal();
  return v;
}

inline Eigen::Vector3d normal3(CounterRng& rng, double scale = 1.0) {
  return normal_vector(rng, 3, scale);
}

inline Eigen::Quaterniond random_rotation(CounterRng& rng, double scale = 1.0) {
  return so3_exp(normal3(rng, scale));
}

/// |a - b| / max(|b|, floor), norm-wise.
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                             double floor = 1e-6) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

/// Central differences of a value-only function.
inline Eigen::VectorXd central_differences(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd p = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    p(i) = x(i) + h;
    const double fp = f(p);
    p(i) = x(i) - h;
    const double fm = f(p);
    p(i) = x(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Applies the keyframe chart [latent | world-left rotation | translation].
inline Keyframe perturb_keyframe(const Keyframe& k, const Eigen::VectorXd& d) {
  const Eigen::Index L = k.latent.size();
  Keyframe out = k;
  out.latent += d.head(L);
  out.root.rotation = (so3_exp(Eigen::Vector3d(d.segment<3>(L))) * k.root.rotation).normalized();
  out.root.translation += d.segment<3>(L + 3);
  return out;
}

/// A standing subject at the rig target, seen by four views.
struct World {
  Skeleton skeleton = default_skeleton();
  CameraRig rig = make_circle_rig(RigSpec{});
  ShapeParams shape = ShapeParams::ones(17);
};

inline Keyframe random_keyframe(CounterRng& rng, int latent_dim, double latent_scale = 0.6) {
  Keyframe k;
  k.latent = normal_vector(rng, latent_dim, latent_scale);
  k.root.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(rng.uniform(-3.0, 3.0), Eigen::Vector3d::UnitZ())) *
                    random_rotation(rng, 0.05);
  k.root.translation = Eigen::Vector3d(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 0.95);
  return k;
}

/// Observations of `joints` in every view with pixel noise and random confidences.
inline FrameObservations noisy_observations(const Eigen::Matrix3Xd& joints, const CameraRig& rig,
                                            CounterRng& rng, double sigma) {
  FrameObservations obs(rig.size(), static_cast<int>(joints.cols()));
  for (int c = 0; c < rig.size(); ++c)
    for (int j = 0; j < joints.cols(); ++j) {
      Observation& o = obs.at(c, j);
      o.keypoint = project<double>(rig[c], joints.col(j)) + sigma * Eigen::Vector2d(rng.normal(), rng.normal());
      o.confidence = rng.uniform(0.2, 1.0);
    }
  return obs;
}

}  // namespace keymocap::testing
