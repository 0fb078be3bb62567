#include "keymocap/manifold.hpp"

#include <string>

#include "keymocap/random.hpp"

namespace keymocap {

Decoder Decoder::identity(int dim) {
  if (dim <= 0 || dim % 3 != 0)
    throw ParameterError("identity decoder dimension must be a positive multiple of 3");
  Decoder d;
  d.latent_dim_ = dim;
  d.output_dim_ = dim;
  return d;
}

Decoder Decoder::mlp(std::vector<Layer> layers) {
  if (layers.empty()) throw ParameterError("MLP decoder needs at least one layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    if (layer.weights.rows() != layer.bias.size())
      throw ParameterError("layer " + std::to_string(l) + ": bias size does not match weights");
    if (l > 0 && layer.weights.cols() != layers[l - 1].weights.rows())
      throw ParameterError("layer " + std::to_string(l) + ": input size does not chain");
    if (!layer.weights.allFinite() || !layer.bias.allFinite())
      throw ParameterError("layer " + std::to_string(l) + ": non-finite weights");
  }
  Decoder d;
  d.latent_dim_ = static_cast<int>(layers.front().weights.cols());
  d.output_dim_ = static_cast<int>(layers.back().weights.rows());
  if (d.output_dim_ % 3 != 0) throw ParameterError("decoder output must be 3 per joint");
  d.layers_ = std::move(layers);
  return d;
}

void Decoder::check_input(Eigen::Index size) const {
  if (latent_dim_ == 0) throw ParameterError("decoder is empty");
  if (size != latent_dim_)
    throw ParameterError("latent code has dimension " + std::to_string(size) + ", decoder expects " +
                         std::to_string(latent_dim_));
}

Decoder::Trace Decoder::forward(const LatentCode& z) const {
  check_input(z.size());
  Trace trace;
  auto& acts = trace.activations;
  acts.reserve(layers_.size() + 1);
  acts.push_back(z);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::VectorXd a = layers_[l].weights * acts.back() + layers_[l].bias;
    if (l + 1 < layers_.size()) a = a.array().tanh().matrix();
    acts.push_back(std::move(a));
  }
  return trace;
}

Eigen::MatrixXd Decoder::jacobian(const LatentCode& z) const {
  check_input(z.size());
  if (is_identity()) return Eigen::MatrixXd::Identity(output_dim_, latent_dim_);
  const auto acts = forward(z).activations;
  // Forward-mode accumulation from the input side.
  Eigen::MatrixXd jac = layers_[0].weights;
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    const Eigen::ArrayXd dtanh = 1.0 - acts[l].array().square();
    jac = layers_[l].weights * (dtanh.matrix().asDiagonal() * jac);
  }
  return jac;
}

Eigen::VectorXd Decoder::vjp(const LatentCode& z, const Eigen::VectorXd& v) const {
  return vjp(forward(z), v);
}

Eigen::VectorXd Decoder::vjp(const Trace& trace, const Eigen::VectorXd& v) const {
  if (v.size() != output_dim_) throw ParameterError("vjp vector has wrong dimension");
  if (is_identity()) return v;
  const auto& acts = trace.activations;
  Eigen::VectorXd g = v;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    g = layers_[l].weights.transpose() * g;
    if (l > 0) g.array() *= 1.0 - acts[l].array().square();
  }
  return g;
}

Decoder make_random_decoder(int latent_dim, const std::vector<int>& hidden, int num_joints,
                            std::uint64_t seed) {
  if (latent_dim <= 0 || num_joints < 2) throw ParameterError("invalid decoder dimensions");
  std::vector<int> sizes{latent_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(3 * (num_joints - 1));

  CounterRng rng(seed);
  std::vector<Decoder::Layer> layers;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    const bool last = l + 2 == sizes.size();
    // Hidden layers keep unit pre-activation scale; the output layer maps to
    // rotations of a few tenths of a radian.
    const double w_scale = (last ? 0.5 : 1.0) / std::sqrt(static_cast<double>(in));
    const double b_scale = last ? 0.05 : 0.1;
    Decoder::Layer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weights(r, c) = w_scale * rng.normal();
    for (int r = 0; r < out; ++r) layer.bias(r) = b_scale * rng.normal();
    layers.push_back(std::move(layer));
  }
  return Decoder::mlp(std::move(layers));
}

PoseParams decode(const Decoder& decoder, const LatentCode& z) { return decoder.decode(z); }

Eigen::MatrixXd decode_jacobian(const Decoder& decoder, const LatentCode& z) {
  return decoder.jacobian(z);
}

double interpolation_fraction(int t, int T) {
  if (T < 1) throw ParameterError("window length must be >= 1");
  if (t < 0 || t > T)
    throw ParameterError("frame " + std::to_string(t) + " outside window [0, " +
                         std::to_string(T) + "]");
  return static_cast<double>(t) / static_cast<double>(T);
}

namespace detail {

SlerpGeometry slerp_geometry(const LatentCode& z0, const LatentCode& zT) {
  if (z0.size() != zT.size()) throw ParameterError("latent codes differ in dimension");
  if (!z0.allFinite() || !zT.allFinite()) throw NumericError("non-finite latent code");
  SlerpGeometry g;
  g.norm0 = z0.norm();
  g.norm1 = zT.norm();
  if (g.norm0 < 1e-12 || g.norm1 < 1e-12)
    throw DegenerateCodeError("cannot slerp a zero latent code");
  g.u = z0 / g.norm0;
  const double along = g.u.dot(zT);
  Eigen::VectorXd perp = zT - along * g.u;
  const double across = perp.norm();
  g.theta = std::atan2(across, along);
  if (g.theta > std::numbers::pi - kSlerpAngleEps)
    throw DegenerateCodeError("latent codes are antipodal");
  g.w = across > 0.0 ? Eigen::VectorXd(perp / across) : Eigen::VectorXd::Zero(z0.size());
  return g;
}

}  // namespace detail

namespace {

struct SlerpWeights {
  double a = 0.0, b = 0.0;    // coefficients of z0 and zT
  double da = 0.0, db = 0.0;  // their derivatives w.r.t. the angle
  bool linear = false;
};

SlerpWeights slerp_weights(double theta, double s) {
  SlerpWeights w;
  if (theta < kSlerpAngleEps) {
    w.a = 1.0 - s;
    w.b = s;
    w.linear = true;
    return w;
  }
  const double st = std::sin(theta);
  const double ct = std::cos(theta);
  const double r = 1.0 - s;
  w.a = std::sin(r * theta) / st;
  w.b = std::sin(s * theta) / st;
  w.da = (r * std::cos(r * theta) * st - std::sin(r * theta) * ct) / (st * st);
  w.db = (s * std::cos(s * theta) * st - std::sin(s * theta) * ct) / (st * st);
  return w;
}

}  // namespace

LatentCode slerp_latent(const LatentCode& z0, const LatentCode& zT, int t, int T) {
  const double s = interpolation_fraction(t, T);
  if (z0.size() != zT.size()) throw ParameterError("latent codes differ in dimension");
  if (t == 0) return z0;
  if (t == T) return zT;
  const auto geom = detail::slerp_geometry(z0, zT);
  const SlerpWeights w = slerp_weights(geom.theta, s);
  return w.a * z0 + w.b * zT;
}

Eigen::VectorXd slerp_latent_vjp(const LatentCode& z0, const LatentCode& zT, int t, int T,
                                 const Eigen::VectorXd& v) {
  const double s = interpolation_fraction(t, T);
  if (z0.size() != zT.size()) throw ParameterError("latent codes differ in dimension");
  if (v.size() != z0.size()) throw ParameterError("vjp vector has wrong dimension");
  if (t == 0) return Eigen::VectorXd::Zero(v.size());
  if (t == T) return v;
  const auto geom = detail::slerp_geometry(z0, zT);
  const SlerpWeights w = slerp_weights(geom.theta, s);
  if (w.linear) return s * v;
  // d theta / d zT = e / |zT|, e the unit tangent at zT pointing away from z0.
  const Eigen::VectorXd e = std::cos(geom.theta) * geom.w - std::sin(geom.theta) * geom.u;
  const double dot = w.da * z0.dot(v) + w.db * zT.dot(v);
  return w.b * v + (dot / geom.norm1) * e;
}

Eigen::MatrixXd slerp_latent_jacobian(const LatentCode& z0, const LatentCode& zT, int t, int T) {
  const double s = interpolation_fraction(t, T);
  if (z0.size() != zT.size()) throw ParameterError("latent codes differ in dimension");
  const auto L = z0.size();
  if (t == 0) return Eigen::MatrixXd::Zero(L, L);
  if (t == T) return Eigen::MatrixXd::Identity(L, L);
  const auto geom = detail::slerp_geometry(z0, zT);
  const SlerpWeights w = slerp_weights(geom.theta, s);
  if (w.linear) return s * Eigen::MatrixXd::Identity(L, L);
  const Eigen::VectorXd e = std::cos(geom.theta) * geom.w - std::sin(geom.theta) * geom.u;
  return w.b * Eigen::MatrixXd::Identity(L, L) + (w.da * z0 + w.db * zT) * e.transpose() / geom.norm1;
}

namespace {

void check_unit(const Eigen::Quaterniond& q) {
  if (!q.coeffs().allFinite()) throw NumericError("non-finite quaternion");
  if (std::abs(q.norm() - 1.0) > 1e-9) throw ParameterError("quaternion is not unit-norm");
}

}  // namespace

Eigen::Quaterniond slerp_rotation(const Eigen::Quaterniond& q0, const Eigen::Quaterniond& qT,
                                  int t, int T) {
  const double s = interpolation_fraction(t, T);
  check_unit(q0);
  check_unit(qT);
  if (t == 0) return q0;
  if (t == T) return qT;
  const Eigen::Vector3d arc = so3_log(Eigen::Quaterniond(q0.conjugate() * qT));
  return (q0 * so3_exp((s * arc).eval())).normalized();
}

Eigen::Matrix3d slerp_rotation_jacobian(const Eigen::Quaterniond& q0,
                                        const Eigen::Quaterniond& qT, int t, int T) {
  const double s = interpolation_fraction(t, T);
  check_unit(q0);
  check_unit(qT);
  if (t == 0) return Eigen::Matrix3d::Zero();
  if (t == T) return Eigen::Matrix3d::Identity();
  const Eigen::Vector3d arc = so3_log(Eigen::Quaterniond(q0.conjugate() * qT));
  const Eigen::Vector3d partial = s * arc;
  const Eigen::Matrix3d r0 = q0.toRotationMatrix();
  const Eigen::Matrix3d rs = r0 * so3_exp(partial).toRotationMatrix();
  return s * rs * right_jacobian(partial) * inverse_left_jacobian(arc) * r0.transpose();
}

Eigen::Vector3d lerp_translation(const Eigen::Vector3d& t0, const Eigen::Vector3d& tT, int t,
                                 int T) {
  const double s = interpolation_fraction(t, T);
  if (t == 0) return t0;
  if (t == T) return tT;
  return (1.0 - s) * t0 + s * tT;
}

FrameState reconstruct_frame(const Decoder& decoder, const Keyframe& key0, const Keyframe& keyT,
                             int t, int T) {
  FrameState f;
  f.latent = slerp_latent(key0.latent, keyT.latent, t, T);
  f.pose = decoder.decode(f.latent);
  f.root.rotation = slerp_rotation(key0.root.rotation, keyT.root.rotation, t, T);
  f.root.translation = lerp_translation(key0.root.translation, keyT.root.translation, t, T);
  return f;
}

}  // namespace keymocap
