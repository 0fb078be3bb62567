#include "keymocap/io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace keymocap {

namespace {

constexpr int kVersion = 1;

Json header(const char* format) {
  Json j;
  j["format"] = format;
  j["version"] = kVersion;
  return j;
}

void check_header(const Json& j, const char* format) {
  if (!j.is_object()) throw InputError(std::string(format) + " document must be a JSON object");
  if (j.contains("format") && j.at("format").get<std::string>() != format)
    throw InputError("expected a '" + std::string(format) + "' document, got '" +
                     j.at("format").get<std::string>() + "'");
  if (j.contains("version") && j.at("version").get<int>() != kVersion)
    throw InputError("unsupported " + std::string(format) + " version");
}

/// Runs `fn`, turning JSON access errors into InputError.
template <typename Fn>
auto guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed ") + what + ": " + e.what());
  }
}

Json vec(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd to_vec(const Json& a, Eigen::Index expected = -1) {
  if (!a.is_array()) throw InputError("expected a numeric array");
  if (expected >= 0 && static_cast<Eigen::Index>(a.size()) != expected)
    throw InputError("array has " + std::to_string(a.size()) + " entries, expected " +
                     std::to_string(expected));
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(i) = a[i].get<double>();
  return v;
}

Json quat(const Eigen::Quaterniond& q) { return Json::array({q.w(), q.x(), q.y(), q.z()}); }

Eigen::Quaterniond to_quat(const Json& a) {
  const Eigen::VectorXd v = to_vec(a, 4);
  return Eigen::Quaterniond(v(0), v(1), v(2), v(3));
}

template <typename T>
void maybe(const Json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

}  // namespace

Json skeleton_to_json(const Skeleton& skeleton) {
  Json j = header("skeleton");
  Json joints = Json::array();
  for (const Joint& jt : skeleton.joints()) {
    Json e;
    e["name"] = jt.name;
    e["parent"] = jt.parent;
    e["offset"] = vec(jt.offset);
    e["side"] = jt.side;
    e["mirror"] = jt.mirror;
    joints.push_back(std::move(e));
  }
  j["joints"] = std::move(joints);
  return j;
}

Skeleton skeleton_from_json(const Json& j) {
  check_header(j, "skeleton");
  return guarded("skeleton", [&] {
    std::vector<Joint> joints;
    for (const Json& e : j.at("joints")) {
      Joint jt;
      jt.name = e.at("name").get<std::string>();
      jt.parent = e.at("parent").get<int>();
      jt.offset = to_vec(e.at("offset"), 3);
      maybe(e, "side", jt.side);
      maybe(e, "mirror", jt.mirror);
      joints.push_back(std::move(jt));
    }
    try {
      return Skeleton(std::move(joints));
    } catch (const ParameterError& e) {
      throw InputError(std::string("invalid skeleton: ") + e.what());
    }
  });
}

Json rig_to_json(const CameraRig& rig) {
  Json j = header("rig");
  Json views = Json::array();
  for (const CameraView& v : rig.views) {
    Json e;
    e["fx"] = v.fx;
    e["fy"] = v.fy;
    e["cx"] = v.cx;
    e["cy"] = v.cy;
    e["width"] = v.width;
    e["height"] = v.height;
    e["rotation"] = quat(v.rotation);
    e["translation"] = vec(v.translation);
    views.push_back(std::move(e));
  }
  j["views"] = std::move(views);
  return j;
}

CameraRig rig_from_json(const Json& j) {
  check_header(j, "rig");
  return guarded("rig", [&] {
    CameraRig rig;
    for (const Json& e : j.at("views")) {
      CameraView v;
      v.fx = e.at("fx").get<double>();
      v.fy = e.at("fy").get<double>();
      v.cx = e.at("cx").get<double>();
      v.cy = e.at("cy").get<double>();
      v.width = e.at("width").get<int>();
      v.height = e.at("height").get<int>();
      v.rotation = to_quat(e.at("rotation"));
      v.translation = to_vec(e.at("translation"), 3);
      rig.views.push_back(v);
    }
    try {
      rig.validate();
    } catch (const ParameterError& e) {
      throw InputError(std::string("invalid rig: ") + e.what());
    }
    return rig;
  });
}

Json observations_to_json(const std::vector<FrameObservations>& obs, const Skeleton& skeleton) {
  Json j = header("observations");
  const int C = obs.empty() ? 0 : obs.front().num_views();
  j["num_views"] = C;
  j["num_joints"] = skeleton.num_joints();
  Json names = Json::array();
  for (const Joint& jt : skeleton.joints()) names.push_back(jt.name);
  j["joints"] = std::move(names);
  Json frames = Json::array();
  for (const FrameObservations& f : obs) {
    Json views = Json::array();
    for (int c = 0; c < f.num_views(); ++c) {
      Json row = Json::array();
      for (int k = 0; k < f.num_joints(); ++k) {
        const Observation& o = f.at(c, k);
        Json e;
        e["u"] = o.keypoint.x();
        e["v"] = o.keypoint.y();
        e["w"] = o.confidence;
        e["in_image"] = o.in_image;
        row.push_back(std::move(e));
      }
      views.push_back(std::move(row));
    }
    frames.push_back(std::move(views));
  }
  j["frames"] = std::move(frames);
  return j;
}

std::vector<FrameObservations> observations_from_json(const Json& j, const Skeleton& skeleton) {
  check_header(j, "observations");
  return guarded("observations", [&] {
    const int C = j.at("num_views").get<int>();
    const int J = j.at("num_joints").get<int>();
    if (J != skeleton.num_joints())
      throw InputError("observation file has " + std::to_string(J) + " joints, skeleton has " +
                       std::to_string(skeleton.num_joints()));
    if (j.contains("joints")) {
      const Json& names = j.at("joints");
      if (static_cast<int>(names.size()) != J) throw InputError("joint name list has wrong length");
      for (int k = 0; k < J; ++k)
        if (names[k].get<std::string>() != skeleton.joint(k).name)
          throw InputError("joint order differs from the skeleton at index " + std::to_string(k));
    }
    std::vector<FrameObservations> out;
    for (const Json& frame : j.at("frames")) {
      if (static_cast<int>(frame.size()) != C) throw InputError("frame has wrong number of views");
      FrameObservations f(C, J);
      for (int c = 0; c < C; ++c) {
        const Json& row = frame[c];
        if (static_cast<int>(row.size()) != J) throw InputError("view has wrong number of joints");
        for (int k = 0; k < J; ++k) {
          const Json& e = row[k];
          Observation& o = f.at(c, k);
          if (e.is_object()) {
            o.keypoint = {e.at("u").get<double>(), e.at("v").get<double>()};
            o.confidence = e.at("w").get<double>();
            maybe(e, "in_image", o.in_image);
          } else {
            if (e.size() < 3) throw InputError("observation needs u, v and w");
            o.keypoint = {e[0].get<double>(), e[1].get<double>()};
            o.confidence = e[2].get<double>();
            if (e.size() > 3) o.in_image = e[3].get<bool>();
          }
        }
      }
      try {
        f.validate(C, J);
      } catch (const ParameterError& e) {
        throw InputError(std::string("invalid observation: ") + e.what());
      }
      out.push_back(std::move(f));
    }
    return out;
  });
}

Json motion_to_json(const MotionSequence& motion) {
  Json j = header("motion");
  j["frame_rate"] = motion.frame_rate;
  j["window"] = motion.window;
  j["shape"] = vec(motion.shape.bone_scales);
  Json keys = Json::array();
  for (std::size_t k = 0; k < motion.keyframes.size(); ++k) {
    Json e;
    e["frame"] = k < motion.keyframe_frames.size() ? motion.keyframe_frames[k] : -1;
    e["latent"] = vec(motion.keyframes[k].latent);
    e["rotation"] = quat(motion.keyframes[k].root.rotation);
    e["translation"] = vec(motion.keyframes[k].root.translation);
    keys.push_back(std::move(e));
  }
  j["keyframes"] = std::move(keys);
  Json frames = Json::array();
  for (const MotionFrame& f : motion.frames) {
    Json e;
    e["pose"] = vec(f.pose.flat());
    e["rotation"] = quat(f.root.rotation);
    e["translation"] = vec(f.root.translation);
    frames.push_back(std::move(e));
  }
  j["frames"] = std::move(frames);
  return j;
}

MotionSequence motion_from_json(const Json& j, const Skeleton& skeleton) {
  check_header(j, "motion");
  return guarded("motion", [&] {
    MotionSequence m;
    maybe(j, "frame_rate", m.frame_rate);
    maybe(j, "window", m.window);
    m.shape.bone_scales = to_vec(j.at("shape"), skeleton.num_joints());
    if (j.contains("keyframes")) {
      for (const Json& e : j.at("keyframes")) {
        Keyframe k;
        k.latent = to_vec(e.at("latent"));
        k.root.rotation = to_quat(e.at("rotation"));
        k.root.translation = to_vec(e.at("translation"), 3);
        m.keyframes.push_back(std::move(k));
        m.keyframe_frames.push_back(e.at("frame").get<int>());
      }
    }
    for (const Json& e : j.at("frames")) {
      MotionFrame f;
      f.pose = PoseParams::from_flat(to_vec(e.at("pose"), skeleton.pose_dim()));
      f.root.rotation = to_quat(e.at("rotation"));
      f.root.translation = to_vec(e.at("translation"), 3);
      m.frames.push_back(std::move(f));
    }
    return m;
  });
}

Json decoder_to_json(const Decoder& decoder) {
  Json j = header("decoder");
  j["latent_dim"] = decoder.latent_dim();
  j["output_dim"] = decoder.output_dim();
  Json layers = Json::array();
  for (const Decoder::Layer& l : decoder.layers()) {
    Json e;
    e["rows"] = l.weights.rows();
    e["cols"] = l.weights.cols();
    Json w = Json::array();
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    e["weights"] = std::move(w);
    e["bias"] = vec(l.bias);
    layers.push_back(std::move(e));
  }
  j["layers"] = std::move(layers);
  return j;
}

Decoder decoder_from_json(const Json& j) {
  check_header(j, "decoder");
  return guarded("decoder", [&] {
    const Json& layers = j.at("layers");
    if (layers.empty()) {
      const int dim = j.at("latent_dim").get<int>();
      if (j.at("output_dim").get<int>() != dim) throw InputError("identity decoder must be square");
      return Decoder::identity(dim);
    }
    std::vector<Decoder::Layer> out;
    for (const Json& e : layers) {
      const int rows = e.at("rows").get<int>();
      const int cols = e.at("cols").get<int>();
      if (rows < 1 || cols < 1) throw InputError("decoder layer has a zero dimension");
      const Eigen::VectorXd w = to_vec(e.at("weights"), static_cast<Eigen::Index>(rows) * cols);
      Decoder::Layer l;
      l.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          w.data(), rows, cols);
      l.bias = to_vec(e.at("bias"), rows);
      out.push_back(std::move(l));
    }
    try {
      return Decoder::mlp(std::move(out));
    } catch (const ParameterError& e) {
      throw InputError(std::string("invalid decoder: ") + e.what());
    }
  });
}

namespace {

static_assert(std::endian::native == std::endian::little, "binary decoder I/O assumes little-endian");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), 8); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw InputError("truncated decoder file");
  return v;
}

double get_f64(std::istream& in) {
  double v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 8)) throw InputError("truncated decoder file");
  return v;
}

constexpr std::array<char, 4> kMagic{'K', 'M', 'D', 'C'};
constexpr std::uint32_t kMaxDim = 1u << 16;
constexpr std::uint32_t kKindMlp = 0;
constexpr std::uint32_t kKindIdentity = 1;

}  // namespace

void write_decoder_binary(std::ostream& out, const Decoder& decoder) {
  if (decoder.output_dim() % 3 != 0) throw ParameterError("decoder output is not 3 (J - 1) wide");
  out.write(kMagic.data(), 4);
  put_u32(out, kVersion);
  put_u32(out, decoder.is_identity() ? kKindIdentity : kKindMlp);
  put_u32(out, static_cast<std::uint32_t>(decoder.latent_dim()));
  const std::size_t hidden = decoder.is_identity() ? 0 : decoder.layers().size() - 1;
  put_u32(out, static_cast<std::uint32_t>(hidden));
  for (std::size_t k = 0; k < hidden; ++k)
    put_u32(out, static_cast<std::uint32_t>(decoder.layers()[k].weights.rows()));
  put_u32(out, static_cast<std::uint32_t>(decoder.output_dim() / 3 + 1));
  for (const Decoder::Layer& l : decoder.layers()) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) put_f64(out, l.weights(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put_f64(out, l.bias(r));
  }
}

Decoder read_decoder_binary(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kMagic) throw InputError("not a decoder file (bad magic)");
  if (get_u32(in) != kVersion) throw InputError("unsupported decoder file version");
  const std::uint32_t kind = get_u32(in);
  if (kind != kKindMlp && kind != kKindIdentity) throw InputError("unknown decoder kind");
  const std::uint32_t latent = get_u32(in);
  const std::uint32_t num_hidden = get_u32(in);
  if (num_hidden > 64) throw InputError("decoder file declares too many layers");
  std::vector<std::uint32_t> dims{latent};
  for (std::uint32_t k = 0; k < num_hidden; ++k) dims.push_back(get_u32(in));
  const std::uint32_t joints = get_u32(in);
  if (joints < 2 || joints > kMaxDim) throw InputError("invalid joint count in decoder file");
  dims.push_back(3 * (joints - 1));
  for (std::uint32_t d : dims)
    if (d == 0 || d > kMaxDim) throw InputError("invalid decoder layer dimensions");

  if (kind == kKindIdentity) {
    if (num_hidden != 0 || latent != dims.back()) throw InputError("identity decoder must be square");
    return Decoder::identity(static_cast<int>(latent));
  }
  std::vector<Decoder::Layer> layers;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    Decoder::Layer l;
    l.weights.resize(dims[k + 1], dims[k]);
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = get_f64(in);
    l.bias.resize(dims[k + 1]);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = get_f64(in);
    layers.push_back(std::move(l));
  }
  try {
    return Decoder::mlp(std::move(layers));
  } catch (const ParameterError& e) {
    throw InputError(std::string("invalid decoder: ") + e.what());
  }
}

void apply_scenario_json(const Json& j, ScenarioConfig& config) {
  guarded("scenario config", [&] {
    if (!j.is_object()) throw InputError("scenario config must be a JSON object");
    maybe(j, "seed", config.seed);
    maybe(j, "frames", config.num_frames);
    maybe(j, "frame_rate", config.frame_rate);
    if (j.contains("rig")) {
      const Json& r = j.at("rig");
      maybe(r, "views", config.rig.num_views);
      maybe(r, "radius", config.rig.radius);
      maybe(r, "height", config.rig.height);
      if (r.contains("target")) config.rig.target = to_vec(r.at("target"), 3);
      maybe(r, "phase", config.rig.phase);
      maybe(r, "focal", config.rig.focal);
      maybe(r, "width", config.rig.width);
      maybe(r, "height_px", config.rig.height_px);
    }
    if (j.contains("motion")) {
      const Json& m = j.at("motion");
      maybe(m, "base_scale", config.motion.base_scale);
      maybe(m, "waypoint_spread", config.motion.waypoint_spread);
      maybe(m, "keyframe_spacing", config.motion.keyframe_spacing);
      maybe(m, "path_radius", config.motion.path_radius);
      maybe(m, "path_period", config.motion.path_period);
      maybe(m, "root_height", config.motion.root_height);
      maybe(m, "yaw_amplitude", config.motion.yaw_amplitude);
      maybe(m, "shape_spread", config.motion.shape_spread);
    }
    if (j.contains("noise")) {
      const Json& n = j.at("noise");
      maybe(n, "gaussian_sigma", config.noise.gaussian_sigma);
      maybe(n, "dropout_rate", config.noise.dropout_rate);
      maybe(n, "inversion_rate", config.noise.inversion_rate);
      maybe(n, "outlier_views", config.noise.outlier_views);
    }
    return 0;
  });
}

Json scenario_to_json(const ScenarioConfig& c) {
  Json j = header("scenario");
  j["seed"] = c.seed;
  j["frames"] = c.num_frames;
  j["frame_rate"] = c.frame_rate;
  j["rig"] = {{"views", c.rig.num_views},   {"radius", c.rig.radius},
              {"height", c.rig.height},     {"target", vec(c.rig.target)},
              {"phase", c.rig.phase},       {"focal", c.rig.focal},
              {"width", c.rig.width},       {"height_px", c.rig.height_px}};
  j["motion"] = {{"base_scale", c.motion.base_scale},
                 {"waypoint_spread", c.motion.waypoint_spread},
                 {"keyframe_spacing", c.motion.keyframe_spacing},
                 {"path_radius", c.motion.path_radius},
                 {"path_period", c.motion.path_period},
                 {"root_height", c.motion.root_height},
                 {"yaw_amplitude", c.motion.yaw_amplitude},
                 {"shape_spread", c.motion.shape_spread}};
  j["noise"] = {{"gaussian_sigma", c.noise.gaussian_sigma},
                {"dropout_rate", c.noise.dropout_rate},
                {"inversion_rate", c.noise.inversion_rate},
                {"outlier_views", c.noise.outlier_views}};
  return j;
}

void apply_solve_json(const Json& j, SolveConfig& config) {
  guarded("solve config", [&] {
    if (!j.is_object()) throw InputError("solve config must be a JSON object");
    maybe(j, "window", config.window);
    maybe(j, "iters", config.solver.max_iterations);
    maybe(j, "history", config.solver.history);
    maybe(j, "gradient_tolerance", config.solver.gradient_tolerance);
    maybe(j, "gm_sigma", config.objective.gm_sigma);
    if (j.contains("lambda_data") || j.contains("lambda_prior")) {
      double ld = config.objective.lambda_data;
      double lp = config.objective.lambda_prior;
      maybe(j, "lambda_data", ld);
      maybe(j, "lambda_prior", lp);
      config.set_weights(ld, lp);
    }
    if (j.contains("first_frame_stages")) {
      const Json& s = j.at("first_frame_stages");
      if (!s.is_array() || s.size() != 2) throw InputError("first_frame_stages needs two entries");
      for (std::size_t k = 0; k < 2; ++k) {
        config.first_frame_stages[k].lambda_data = s[k].at("lambda_data").get<double>();
        config.first_frame_stages[k].lambda_prior = s[k].at("lambda_prior").get<double>();
      }
    }
    maybe(j, "smoothness_weight", config.smoothness_weight);
    maybe(j, "smoothness_iterations", config.smoothness_iterations);
    return 0;
  });
}

Json solve_config_to_json(const SolveConfig& c) {
  Json j = header("solve");
  j["window"] = c.window;
  j["iters"] = c.solver.max_iterations;
  j["history"] = c.solver.history;
  j["gradient_tolerance"] = c.solver.gradient_tolerance;
  j["lambda_data"] = c.objective.lambda_data;
  j["lambda_prior"] = c.objective.lambda_prior;
  j["gm_sigma"] = c.objective.gm_sigma;
  Json stages = Json::array();
  for (const StageWeights& s : c.first_frame_stages)
    stages.push_back({{"lambda_data", s.lambda_data}, {"lambda_prior", s.lambda_prior}});
  j["first_frame_stages"] = std::move(stages);
  j["smoothness_weight"] = c.smoothness_weight;
  j["smoothness_iterations"] = c.smoothness_iterations;
  return j;
}

Json metrics_to_json(const std::vector<MetricReport>& reports) {
  Json j = header("metrics");
  Json rows = Json::array();
  for (const MetricReport& r : reports) {
    Json e;
    e["sequence"] = r.sequence;
    e["method"] = r.method;
    e["mpjpe_mm"] = r.mpjpe;
    e["rmse_mm"] = r.rmse;
    e["mae_deg"] = r.mae;
    e["pck3"] = r.pck3;
    e["pck7"] = r.pck7;
    e["jitter_mm"] = r.jitter;
    e["flexion_energy"] = r.flexion_energy;
    e["frame_mpjpe_mm"] = r.frame_mpjpe;
    e["left_knee_flexion_deg"] = r.left_knee_flexion;
    e["right_knee_flexion_deg"] = r.right_knee_flexion;
    rows.push_back(std::move(e));
  }
  j["reports"] = std::move(rows);
  return j;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size())))
    throw InputError("cannot write " + path.string());
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  write_text_file(path, j.dump(1) + "\n");
}

Decoder read_decoder_file(const std::filesystem::path& path) {
  if (path.extension() == ".json") return decoder_from_json(read_json_file(path));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return read_decoder_binary(in);
}

void write_decoder_file(const std::filesystem::path& path, const Decoder& decoder) {
  if (path.extension() == ".json") return write_json_file(path, decoder_to_json(decoder));
  std::ostringstream out(std::ios::binary);
  write_decoder_binary(out, decoder);
  write_text_file(path, out.str());
}

}  // namespace keymocap
