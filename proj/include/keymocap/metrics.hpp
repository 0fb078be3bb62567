#pragma once

#include <Eigen/Core>
#include <ostream>
#include <string>
#include <vector>

#include "keymocap/kinematics.hpp"

namespace keymocap {

using JointSequence = std::vector<Eigen::Matrix3Xd>;

/// Mean Euclidean joint error in millimeters, no alignment.
double mpjpe(const JointSequence& pred, const JointSequence& gt);
/// Root of the mean squared joint error, millimeters.
double rmse(const JointSequence& pred, const JointSequence& gt);
/// Mean geodesic angle between corresponding joint rotations, degrees.
double mae_angular(const std::vector<PoseParams>& pred, const std::vector<PoseParams>& gt);
/// Fraction of joints with error <= threshold (inclusive).
double pck(const JointSequence& pred, const JointSequence& gt, double threshold_cm);

/// Angle at `middle` between the bones to `a` and `b`, degrees. Throws
/// ParameterError when a bone has zero length.
double flexion_angle(const Eigen::Matrix3Xd& joints, int a, int middle, int b);
std::vector<double> flexion_trace(const JointSequence& joints, int a, int middle, int b);

/// Mean norm of the second difference of joint positions, mm per frame^2.
/// Zero for sequences shorter than 3 frames.
double jitter(const JointSequence& joints);
/// Sum of squared second differences of a scalar trace.
double second_difference_energy(const std::vector<double>& trace);

std::vector<double> per_frame_mpjpe(const JointSequence& pred, const JointSequence& gt);

struct MetricReport {
  std::string sequence;
  std::string method;
  double mpjpe = 0.0;  // mm
  double rmse = 0.0;   // mm
  double mae = 0.0;    // degrees
  double pck3 = 0.0;
  double pck7 = 0.0;
  double jitter = 0.0;            // mm / frame^2
  double flexion_energy = 0.0;    // deg^2, both knees
  std::vector<double> frame_mpjpe;
  std::vector<double> left_knee_flexion;
  std::vector<double> right_knee_flexion;
};

/// All metrics of a predicted motion against ground truth.
MetricReport evaluate_motion(const std::vector<PoseParams>& pred_poses, const JointSequence& pred,
                             const std::vector<PoseParams>& gt_poses, const JointSequence& gt,
                             const Skeleton& skeleton);

void write_metrics_csv(std::ostream& out, const std::vector<MetricReport>& reports);
void write_flexion_csv(std::ostream& out, const MetricReport& report);

}  // namespace keymocap
