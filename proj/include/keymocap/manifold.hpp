#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "keymocap/error.hpp"
#include "keymocap/kinematics.hpp"
#include "keymocap/so3.hpp"

namespace keymocap {

using LatentCode = Eigen::VectorXd;

/// Below this angle between two codes, latent slerp falls back to lerp; within
/// this distance of pi the codes are treated as antipodal.
inline constexpr double kSlerpAngleEps = 1e-6;

/// Fixed generator from latent codes to pose parameters: affine layers with
/// tanh between them (none after the last), or a pass-through identity map.
class Decoder {
 public:
  struct Layer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out
  };

  Decoder() = default;

  static Decoder identity(int dim);
  static Decoder mlp(std::vector<Layer> layers);

  bool is_identity() const { return layers_.empty(); }
  int latent_dim() const { return latent_dim_; }
  int output_dim() const { return output_dim_; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Flat output, 3 values per non-root joint.
  template <typename Scalar>
  VectorX<Scalar> decode_flat(const VectorX<Scalar>& z) const {
    check_input(z.size());
    if (is_identity()) return z;
    VectorX<Scalar> h = z;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      VectorX<Scalar> a = layers_[l].weights.cast<Scalar>() * h + layers_[l].bias.cast<Scalar>();
      if (l + 1 < layers_.size()) a = a.array().tanh().matrix();
      h = std::move(a);
    }
    return h;
  }

  PoseParams decode(const LatentCode& z) const { return PoseParams::from_flat(decode_flat(z)); }

  /// Layer inputs recorded during a forward pass, reused by vjp.
  struct Trace {
    std::vector<Eigen::VectorXd> activations;  // input of each layer, then the output
    const Eigen::VectorXd& output() const { return activations.back(); }
  };
  Trace forward(const LatentCode& z) const;

  /// d(flat pose)/dz, output_dim x latent_dim.
  Eigen::MatrixXd jacobian(const LatentCode& z) const;

  /// (d pose/dz)^T v for a flat pose-space vector v.
  Eigen::VectorXd vjp(const LatentCode& z, const Eigen::VectorXd& v) const;
  Eigen::VectorXd vjp(const Trace& trace, const Eigen::VectorXd& v) const;

 private:
  void check_input(Eigen::Index size) const;

  std::vector<Layer> layers_;
  int latent_dim_ = 0;
  int output_dim_ = 0;
};

/// MLP decoder latent_dim -> hidden... -> 3 (J - 1) with deterministic
/// pseudo-random weights drawn from `seed`.
Decoder make_random_decoder(int latent_dim, const std::vector<int>& hidden, int num_joints,
                            std::uint64_t seed);

PoseParams decode(const Decoder& decoder, const LatentCode& z);
Eigen::MatrixXd decode_jacobian(const Decoder& decoder, const LatentCode& z);

/// t / T after checking 0 <= t <= T and T >= 1.
double interpolation_fraction(int t, int T);

namespace detail {

struct SlerpGeometry {
  double theta = 0.0;
  double norm0 = 0.0;
  double norm1 = 0.0;
  Eigen::VectorXd u;  // z0 / |z0|
  Eigen::VectorXd w;  // unit component of zT orthogonal to z0 (valid when theta >= eps)
};

SlerpGeometry slerp_geometry(const LatentCode& z0, const LatentCode& zT);

}  // namespace detail

/// Spherical interpolation of raw (non-normalized) codes with the angle
/// between them: S = sin((1-s) a)/sin(a) z0 + sin(s a)/sin(a) zT, s = t / T.
/// Endpoints are returned exactly; nearly parallel codes fall back to lerp.
/// Throws DegenerateCodeError for zero or antipodal codes.
LatentCode slerp_latent(const LatentCode& z0, const LatentCode& zT, int t, int T);

/// d(slerp_latent)/d(zT), L x L.
Eigen::MatrixXd slerp_latent_jacobian(const LatentCode& z0, const LatentCode& zT, int t, int T);

/// (d slerp_latent / d zT)^T v.
Eigen::VectorXd slerp_latent_vjp(const LatentCode& z0, const LatentCode& zT, int t, int T,
                                 const Eigen::VectorXd& v);

/// Shortest-arc quaternion slerp with constant angular velocity.
Eigen::Quaterniond slerp_rotation(const Eigen::Quaterniond& q0, const Eigen::Quaterniond& qT,
                                  int t, int T);

/// Maps a world-frame perturbation of qT (qT <- Exp(e) qT) to the induced
/// world-frame perturbation of the interpolated rotation.
Eigen::Matrix3d slerp_rotation_jacobian(const Eigen::Quaterniond& q0,
                                        const Eigen::Quaterniond& qT, int t, int T);

Eigen::Vector3d lerp_translation(const Eigen::Vector3d& t0, const Eigen::Vector3d& tT, int t,
                                 int T);

struct Keyframe {
  LatentCode latent;
  RootTransform root;
};

struct FrameState {
  LatentCode latent;  // interpolated code
  PoseParams pose;
  RootTransform root;
};

/// Intermediate frame t of the window [key0, keyT] of length T.
FrameState reconstruct_frame(const Decoder& decoder, const Keyframe& key0, const Keyframe& keyT,
                             int t, int T);

}  // namespace keymocap
