#include "keymocap/cli.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "keymocap/io.hpp"
#include "keymocap/random.hpp"
#include "keymocap/so3.hpp"

namespace keymocap {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kTagInit = 4;
const std::vector<std::string> kMethods{"bundle", "per-frame", "smoothness"};

// Values given on the command line; unset ones fall back to the files.
struct Flags {
  std::string experiment;
  std::string scenario;
  std::string solve;
  std::string out;
  std::string input;
  std::string decoder;
  std::string skeleton;
  std::string observations;
  std::string init_file;
  std::string sequence;
  std::vector<std::string> methods;
  std::vector<CLI::Option*> method_options;
  std::optional<std::uint64_t> seed;
  std::optional<int> frames;
  std::optional<double> sigma, dropout, inversion;
  std::optional<std::vector<int>> outlier_views;
  std::optional<int> window, iters;
  std::optional<double> lambda_data, lambda_prior, gm_sigma, smoothness_weight;
  std::optional<std::string> init;
  double init_noise = 0.05;
};

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.empty() || p.is_absolute() ? p : base / p;
}

ExperimentSpec load_spec(const Flags& f) {
  ExperimentSpec spec;
  if (!f.experiment.empty()) {
    const fs::path file(f.experiment);
    const fs::path base = file.parent_path();
    const Json j = read_json_file(file);
    try {
      if (j.contains("scenario")) spec.scenario_config = resolve(base, j.at("scenario").get<std::string>());
      if (j.contains("solve")) spec.solve_config = resolve(base, j.at("solve").get<std::string>());
      if (j.contains("methods")) spec.methods = j.at("methods").get<std::vector<std::string>>();
      if (j.contains("out")) spec.out_dir = resolve(base, j.at("out").get<std::string>());
      if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(file.string() + ": " + e.what());
    }
  }
  if (!f.scenario.empty()) spec.scenario_config = f.scenario;
  if (!f.solve.empty()) spec.solve_config = f.solve;
  const bool methods_given = std::any_of(f.method_options.begin(), f.method_options.end(),
                                         [](const CLI::Option* o) { return o->count() > 0; });
  if (methods_given) {
    spec.methods.clear();
    for (const std::string& m : f.methods)
      if (!m.empty()) spec.methods.push_back(m);
  }
  if (!f.out.empty()) spec.out_dir = f.out;
  if (f.seed) spec.seed = f.seed;

  if (spec.methods.empty()) throw UsageError("at least one method is required");
  for (const std::string& m : spec.methods)
    if (std::find(kMethods.begin(), kMethods.end(), m) == kMethods.end())
      throw UsageError("unknown method '" + m + "' (expected bundle, per-frame or smoothness)");
  return spec;
}

ScenarioConfig load_scenario(const ExperimentSpec& spec, const Flags& f) {
  ScenarioConfig c;
  if (!spec.scenario_config.empty()) apply_scenario_json(read_json_file(spec.scenario_config), c);
  if (spec.seed) c.seed = *spec.seed;
  if (f.frames) c.num_frames = *f.frames;
  if (f.sigma) c.noise.gaussian_sigma = *f.sigma;
  if (f.dropout) c.noise.dropout_rate = *f.dropout;
  if (f.inversion) c.noise.inversion_rate = *f.inversion;
  if (f.outlier_views) c.noise.outlier_views = *f.outlier_views;
  c.validate();
  return c;
}

SolveConfig load_solve(const ExperimentSpec& spec, const Flags& f) {
  SolveConfig c;
  if (!spec.solve_config.empty()) {
    const Json j = read_json_file(spec.solve_config);
    apply_solve_json(j, c);
    if (j.contains("init")) {
      const std::string mode = j.at("init").get<std::string>();
      c.init = mode == "zero" ? InitMode::Zero
             : mode == "perturbed-truth" ? InitMode::PerturbedTruth
             : mode == "file" ? InitMode::File
             : throw InputError("unknown init mode '" + mode + "'");
    }
  }
  if (f.window) c.window = *f.window;
  if (f.iters) c.solver.max_iterations = *f.iters;
  if (f.lambda_data || f.lambda_prior)
    c.set_weights(f.lambda_data.value_or(c.objective.lambda_data),
                  f.lambda_prior.value_or(c.objective.lambda_prior));
  if (f.gm_sigma) c.objective.gm_sigma = *f.gm_sigma;
  if (f.smoothness_weight) c.smoothness_weight = *f.smoothness_weight;
  if (f.init) {
    c.init = *f.init == "zero" ? InitMode::Zero
           : *f.init == "perturbed-truth" ? InitMode::PerturbedTruth
                                          : InitMode::File;
  }
  c.validate();
  return c;
}

Decoder load_decoder(const Flags& f) {
  return f.decoder.empty() ? default_decoder() : read_decoder_file(f.decoder);
}

Skeleton load_skeleton(const fs::path& path) { return skeleton_from_json(read_json_file(path)); }

fs::path input_dir(const ExperimentSpec& spec, const Flags& f) {
  return f.input.empty() ? spec.out_dir : fs::path(f.input);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create directory " + dir.string());
}

int cmd_generate(const ExperimentSpec& spec, const Flags& f, std::ostream& out) {
  const ScenarioConfig config = load_scenario(spec, f);
  const Skeleton skeleton = f.skeleton.empty() ? default_skeleton() : load_skeleton(f.skeleton);
  const Decoder decoder = load_decoder(f);
  const Scenario s = build_scenario(config, skeleton, decoder);

  ensure_dir(spec.out_dir);
  write_json_file(spec.out_dir / "scenario.json", scenario_to_json(config));
  write_json_file(spec.out_dir / "skeleton.json", skeleton_to_json(skeleton));
  write_json_file(spec.out_dir / "rig.json", rig_to_json(s.rig));
  write_json_file(spec.out_dir / "truth.json", motion_to_json(s.truth.motion));
  write_json_file(spec.out_dir / "observations_clean.json", observations_to_json(s.clean, skeleton));
  write_json_file(spec.out_dir / "observations.json", observations_to_json(s.observed, skeleton));
  out << "generated " << config.num_frames << " frames, " << s.rig.size() << " views in "
      << spec.out_dir.string() << '\n';
  return kExitOk;
}

std::optional<InitialGuess> make_init(const SolveConfig& config, const Flags& f, const fs::path& in,
                                      const Skeleton& skeleton, std::uint64_t seed) {
  switch (config.init) {
    case InitMode::Zero:
      return std::nullopt;
    case InitMode::File: {
      if (f.init_file.empty()) throw UsageError("init mode 'file' needs --init-file");
      const MotionSequence m = motion_from_json(read_json_file(f.init_file), skeleton);
      if (m.keyframes.empty()) throw InputError(f.init_file + ": no keyframes");
      return InitialGuess{m.keyframes.front(), m.shape};
    }
    case InitMode::PerturbedTruth: {
      const MotionSequence truth = motion_from_json(read_json_file(in / "truth.json"), skeleton);
      if (truth.keyframes.empty()) throw InputError("truth motion has no keyframes");
      InitialGuess g{truth.keyframes.front(), truth.shape};
      if (f.init_noise < 0.0) throw UsageError("--init-noise must be non-negative");
      if (f.init_noise > 0.0) {
        CounterRng rng(derive_key(seed, kTagInit));
        for (Eigen::Index k = 0; k < g.key.latent.size(); ++k) g.key.latent(k) += f.init_noise * rng.normal();
        // Root perturbation in meters and radians, an order of magnitude smaller.
        const double s = 0.1 * f.init_noise;
        const Eigen::Vector3d dt(rng.normal(), rng.normal(), rng.normal());
        const Eigen::Vector3d dr(rng.normal(), rng.normal(), rng.normal());
        g.key.root.translation += s * dt;
        g.key.root.rotation = (so3_exp(Eigen::Vector3d(s * dr)) * g.key.root.rotation).normalized();
      }
      return g;
    }
  }
  return std::nullopt;
}

SequenceSolve run_method(const std::string& method, std::span<const FrameObservations> obs,
                         const CameraRig& rig, const Skeleton& skeleton, const Decoder& decoder,
                         const SolveConfig& config, const std::optional<InitialGuess>& init) {
  if (method == "bundle") return solve_sequence(obs, rig, skeleton, decoder, config, init);
  if (method == "per-frame") return solve_per_frame_baseline(obs, rig, skeleton, decoder, config, init);
  return solve_smoothness_baseline(obs, rig, skeleton, decoder, config, config.smoothness_weight, init);
}

Json solve_log_json(const std::string& method, const SolveConfig& config, const SequenceSolve& s) {
  Json j;
  j["format"] = "keymocap.solve_log";
  j["version"] = 1;
  j["method"] = method;
  j["config"] = solve_config_to_json(config);
  j["first_frame"] = {{"stage1", {{"reason", to_string(s.first.stage1.reason)},
                                  {"iterations", s.first.stage1.iterations},
                                  {"value", s.first.stage1.value}}},
                      {"stage2", {{"reason", to_string(s.first.stage2.reason)},
                                  {"iterations", s.first.stage2.iterations},
                                  {"value", s.first.stage2.value}}}};
  Json windows = Json::array();
  for (const WindowReport& w : s.windows)
    windows.push_back({{"first_frame", w.first_frame},
                       {"last_frame", w.last_frame},
                       {"reason", to_string(w.reason)},
                       {"iterations", w.iterations},
                       {"evaluations", w.evaluations},
                       {"value", w.final_value}});
  j["windows"] = std::move(windows);
  return j;
}

int cmd_solve(const ExperimentSpec& spec, const Flags& f, std::ostream& out) {
  const SolveConfig config = load_solve(spec, f);
  const fs::path in = input_dir(spec, f);
  const Skeleton skeleton = load_skeleton(in / "skeleton.json");
  const CameraRig rig = rig_from_json(read_json_file(in / "rig.json"));
  const fs::path obs_path = f.observations.empty() ? in / "observations.json" : fs::path(f.observations);
  const std::vector<FrameObservations> obs = observations_from_json(read_json_file(obs_path), skeleton);
  const Decoder decoder = load_decoder(f);
  if (decoder.output_dim() != skeleton.pose_dim())
    throw InputError("decoder output does not match the skeleton");
  for (const FrameObservations& o : obs)
    if (o.num_views() != rig.size()) throw InputError("observations do not match the rig");
  const std::optional<InitialGuess> init = make_init(config, f, in, skeleton, spec.seed.value_or(0));

  ensure_dir(spec.out_dir);
  for (const std::string& method : spec.methods) {
    const auto t0 = std::chrono::steady_clock::now();
    const SequenceSolve s = run_method(method, obs, rig, skeleton, decoder, config, init);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json_file(spec.out_dir / ("motion_" + method + ".json"), motion_to_json(s.motion));
    write_json_file(spec.out_dir / ("solve_" + method + ".json"), solve_log_json(method, config, s));
    // Timings go to the console only so that output files stay reproducible.
    out << method << ": " << s.motion.num_frames() << " frames in " << std::fixed
        << std::setprecision(3) << seconds << " s\n"
        << std::defaultfloat;
  }
  return kExitOk;
}

std::vector<PoseParams> poses_of(const MotionSequence& m) {
  std::vector<PoseParams> out;
  out.reserve(m.frames.size());
  for (const MotionFrame& f : m.frames) out.push_back(f.pose);
  return out;
}

int cmd_report(const ExperimentSpec& spec, const Flags& f, std::ostream& out) {
  const fs::path in = input_dir(spec, f);
  const Skeleton skeleton = load_skeleton(in / "skeleton.json");
  const MotionSequence truth = motion_from_json(read_json_file(in / "truth.json"), skeleton);
  const JointSequence gt = joint_trajectory(truth, skeleton);
  const std::vector<PoseParams> gt_poses = poses_of(truth);
  const std::string sequence = f.sequence.empty() ? "synthetic" : f.sequence;

  std::vector<MetricReport> reports;
  for (const std::string& method : spec.methods) {
    const MotionSequence m =
        motion_from_json(read_json_file(in / ("motion_" + method + ".json")), skeleton);
    if (m.num_frames() != truth.num_frames())
      throw InputError("motion_" + method + ".json does not match the ground-truth frame count");
    MetricReport r = evaluate_motion(poses_of(m), joint_trajectory(m, skeleton), gt_poses, gt, skeleton);
    r.sequence = sequence;
    r.method = method;
    reports.push_back(std::move(r));
  }

  ensure_dir(spec.out_dir);
  std::ostringstream csv;
  write_metrics_csv(csv, reports);
  write_text_file(spec.out_dir / "metrics.csv", csv.str());
  write_json_file(spec.out_dir / "metrics.json", metrics_to_json(reports));
  for (const MetricReport& r : reports) {
    std::ostringstream trace;
    write_flexion_csv(trace, r);
    write_text_file(spec.out_dir / ("flexion_" + r.method + ".csv"), trace.str());
  }
  out << csv.str();
  return kExitOk;
}

int cmd_export_decoder(const Flags& f, const fs::path& path, std::ostream& out) {
  const Decoder decoder = load_decoder(f);
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  write_decoder_file(path, decoder);
  out << "wrote decoder (L = " << decoder.latent_dim() << ") to " << path.string() << '\n';
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Usage:
    case ErrorKind::Parameter:
      return kExitUsage;
    case ErrorKind::Input:
    case ErrorKind::UnderConstrained:
      return kExitInput;
    case ErrorKind::Numeric:
    case ErrorKind::BehindCamera:
    case ErrorKind::DegenerateCode:
    case ErrorKind::Direction:
      return kExitNumeric;
  }
  return kExitNumeric;
}

void add_common(CLI::App& cmd, Flags& f) {
  cmd.add_option("--experiment", f.experiment, "Experiment JSON (scenario, solve, methods, out, seed)");
  cmd.add_option("--out", f.out, "Output directory");
  cmd.add_option("--seed", f.seed, "Random seed");
  cmd.add_option("--decoder", f.decoder, "Decoder file (.json or binary); default is the built-in decoder");
}

void add_scenario(CLI::App& cmd, Flags& f) {
  cmd.add_option("--scenario", f.scenario, "Scenario config JSON");
  cmd.add_option("--skeleton", f.skeleton, "Skeleton JSON; default is the built-in 17-joint skeleton");
  cmd.add_option("--frames", f.frames, "Number of frames");
  cmd.add_option("--noise-sigma", f.sigma, "Gaussian keypoint noise (pixels)");
  cmd.add_option("--dropout", f.dropout, "Dropout rate");
  cmd.add_option("--inversion", f.inversion, "Left/right inversion rate");
  cmd.add_option("--outlier-views", f.outlier_views, "Views subject to dropout and inversion");
}

void add_solve(CLI::App& cmd, Flags& f) {
  cmd.add_option("--solve-config", f.solve, "Solve config JSON");
  f.method_options.push_back(
      cmd.add_option("--methods", f.methods, "Methods: bundle, per-frame, smoothness")
          ->delimiter(',')
          ->expected(0, -1));
  cmd.add_option("--window", f.window, "Keyframe window length T (default 10)");
  cmd.add_option("--iters", f.iters, "L-BFGS iterations per solve (default 30)");
  cmd.add_option("--lambda-data", f.lambda_data, "Data term weight (default 1.0)");
  cmd.add_option("--lambda-prior", f.lambda_prior, "Prior term weight (default 10.76)");
  cmd.add_option("--gm-sigma", f.gm_sigma, "Geman-McClure scale in pixels (default 100)");
  cmd.add_option("--smoothness-weight", f.smoothness_weight, "Velocity penalty of the smoothness baseline");
  cmd.add_option("--init", f.init, "Initialization: zero, perturbed-truth or file")
      ->check(CLI::IsMember({"zero", "perturbed-truth", "file"}));
  cmd.add_option("--init-file", f.init_file, "Motion JSON whose first keyframe starts the solve");
  cmd.add_option("--init-noise", f.init_noise, "Latent noise std for perturbed-truth init")
      ->capture_default_str();
  cmd.add_option("--input", f.input, "Directory with skeleton, rig and observations (default: --out)");
  cmd.add_option("--observations", f.observations, "Observation file (default: <input>/observations.json)");
}

void add_report(CLI::App& cmd, Flags& f) {
  cmd.add_option("--sequence", f.sequence, "Sequence name in the metric rows");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-view motion capture by latent keyframe bundle solving"};
  app.require_subcommand(1);
  Flags f;
  std::string decoder_out;

  CLI::App* generate = app.add_subcommand("generate", "Write a synthetic scenario");
  add_common(*generate, f);
  add_scenario(*generate, f);

  CLI::App* solve = app.add_subcommand("solve", "Fit motion to observations");
  add_common(*solve, f);
  add_solve(*solve, f);

  CLI::App* report = app.add_subcommand("report", "Score solved motions against ground truth");
  add_common(*report, f);
  report->add_option("--input", f.input, "Directory with truth and motion files (default: --out)");
  f.method_options.push_back(
      report->add_option("--methods", f.methods, "Methods to score")->delimiter(',')->expected(0, -1));
  add_report(*report, f);

  CLI::App* run = app.add_subcommand("run", "generate, solve and report in one directory");
  add_common(*run, f);
  add_scenario(*run, f);
  add_solve(*run, f);
  add_report(*run, f);

  CLI::App* export_decoder = app.add_subcommand("export-decoder", "Write the decoder to a file");
  export_decoder->add_option("--decoder", f.decoder, "Decoder to convert; default is the built-in decoder");
  export_decoder->add_option("path", decoder_out, "Destination (.json or binary)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (export_decoder->parsed()) return cmd_export_decoder(f, decoder_out, out);
    const ExperimentSpec spec = load_spec(f);
    if (generate->parsed()) return cmd_generate(spec, f, out);
    if (solve->parsed()) return cmd_solve(spec, f, out);
    if (report->parsed()) return cmd_report(spec, f, out);
    cmd_generate(spec, f, out);
    cmd_solve(spec, f, out);
    return cmd_report(spec, f, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

}  // namespace keymocap
