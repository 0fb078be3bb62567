#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "keymocap/camera.hpp"
#include "keymocap/kinematics.hpp"
#include "keymocap/manifold.hpp"
#include "keymocap/metrics.hpp"
#include "keymocap/objective.hpp"
#include "keymocap/pipeline.hpp"
#include "keymocap/synth.hpp"

namespace keymocap {

using Json = nlohmann::ordered_json;

// File formats. Every document carries "format" and "version" keys; field
// order is fixed so that output files are byte-stable.
//
//   skeleton:     {joints: [{name, parent, offset[3], side, mirror}]}
//   rig:          {views: [{fx, fy, cx, cy, width, height, rotation[w,x,y,z], translation[3]}]}
//   observations: {num_views, num_joints, joints[names], frames: [[[{u, v, w, in_image}] x J] x C]}
//                 (entries may also be given as arrays [u, v, w(, in_image)])
//   motion:       {frame_rate, window, shape[J], keyframes: [{frame, latent[L], rotation[w,x,y,z],
//                  translation[3]}], frames: [{pose[3(J-1)], rotation[w,x,y,z], translation[3]}]}
//   decoder:      {latent_dim, output_dim, layers: [{rows, cols, weights (row-major), bias}]}
//
// The binary decoder format is little-endian. Header: magic "KMDC", then u32
// version (1), kind (0 MLP, 1 identity), L, hidden layer count H, H hidden
// sizes and the joint count J. For an MLP the header is followed by each layer
// in order (L -> hidden... -> 3 (J - 1)): row-major f64 weights (out x in),
// then f64 biases. An identity decoder has H = 0, L = 3 (J - 1) and no payload.

Json skeleton_to_json(const Skeleton& skeleton);
Skeleton skeleton_from_json(const Json& j);

Json rig_to_json(const CameraRig& rig);
CameraRig rig_from_json(const Json& j);

Json observations_to_json(const std::vector<FrameObservations>& obs, const Skeleton& skeleton);
std::vector<FrameObservations> observations_from_json(const Json& j, const Skeleton& skeleton);

Json motion_to_json(const MotionSequence& motion);
MotionSequence motion_from_json(const Json& j, const Skeleton& skeleton);

Json decoder_to_json(const Decoder& decoder);
Decoder decoder_from_json(const Json& j);
void write_decoder_binary(std::ostream& out, const Decoder& decoder);
Decoder read_decoder_binary(std::istream& in);

/// Keys missing from `j` keep the values already in `config`.
void apply_scenario_json(const Json& j, ScenarioConfig& config);
Json scenario_to_json(const ScenarioConfig& config);
void apply_solve_json(const Json& j, SolveConfig& config);
Json solve_config_to_json(const SolveConfig& config);

Json metrics_to_json(const std::vector<MetricReport>& reports);

/// File helpers; failures raise InputError naming the path.
Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);
Decoder read_decoder_file(const std::filesystem::path& path);
void write_decoder_file(const std::filesystem::path& path, const Decoder& decoder);

}  // namespace keymocap
