#include "keymocap/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>

#include "keymocap/so3.hpp"

namespace keymocap {

namespace {

constexpr double kMm = 1000.0;

void check_pair(const JointSequence& pred, const JointSequence& gt) {
  if (pred.size() != gt.size()) throw ParameterError("sequences differ in frame count");
  if (pred.empty()) throw ParameterError("empty joint sequence");
  for (std::size_t f = 0; f < pred.size(); ++f)
    if (pred[f].cols() != gt[f].cols() || pred[f].cols() == 0)
      throw ParameterError("frames differ in joint count");
}

template <typename Fn>
void for_each_error(const JointSequence& pred, const JointSequence& gt, Fn&& fn) {
  check_pair(pred, gt);
  for (std::size_t f = 0; f < pred.size(); ++f)
    for (Eigen::Index j = 0; j < pred[f].cols(); ++j) fn((pred[f].col(j) - gt[f].col(j)).norm());
}

}  // namespace

double mpjpe(const JointSequence& pred, const JointSequence& gt) {
  double sum = 0.0;
  long n = 0;
  for_each_error(pred, gt, [&](double e) { sum += e; ++n; });
  return kMm * sum / n;
}

double rmse(const JointSequence& pred, const JointSequence& gt) {
  double sum = 0.0;
  long n = 0;
  for_each_error(pred, gt, [&](double e) { sum += e * e; ++n; });
  return kMm * std::sqrt(sum / n);
}

double pck(const JointSequence& pred, const JointSequence& gt, double threshold_cm) {
  const double threshold = threshold_cm / 100.0;
  long hits = 0;
  long n = 0;
  for_each_error(pred, gt, [&](double e) { hits += e <= threshold; ++n; });
  return static_cast<double>(hits) / n;
}

std::vector<double> per_frame_mpjpe(const JointSequence& pred, const JointSequence& gt) {
  check_pair(pred, gt);
  std::vector<double> out;
  out.reserve(pred.size());
  for (std::size_t f = 0; f < pred.size(); ++f)
    out.push_back(kMm * (pred[f] - gt[f]).colwise().norm().mean());
  return out;
}

double mae_angular(const std::vector<PoseParams>& pred, const std::vector<PoseParams>& gt) {
  if (pred.size() != gt.size() || pred.empty()) throw ParameterError("pose sequences differ in length");
  double sum = 0.0;
  long n = 0;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    const Eigen::Matrix3Xd& a = pred[f].axis_angle;
    const Eigen::Matrix3Xd& b = gt[f].axis_angle;
    if (a.cols() != b.cols()) throw ParameterError("poses differ in joint count");
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const Eigen::Quaterniond qa = so3_exp(Eigen::Vector3d(a.col(j)));
      const Eigen::Quaterniond qb = so3_exp(Eigen::Vector3d(b.col(j)));
      sum += rotation_angle_between(qa, qb);
      ++n;
    }
  }
  return n ? sum / n * 180.0 / std::numbers::pi : 0.0;
}

double flexion_angle(const Eigen::Matrix3Xd& joints, int a, int middle, int b) {
  const Eigen::Index J = joints.cols();
  if (a < 0 || middle < 0 || b < 0 || a >= J || middle >= J || b >= J)
    throw ParameterError("flexion joint index out of range");
  const Eigen::Vector3d u = joints.col(a) - joints.col(middle);
  const Eigen::Vector3d v = joints.col(b) - joints.col(middle);
  if (u.norm() < 1e-12 || v.norm() < 1e-12)
    throw ParameterError("flexion angle undefined for coincident joints");
  return std::atan2(u.cross(v).norm(), u.dot(v)) * 180.0 / std::numbers::pi;
}

std::vector<double> flexion_trace(const JointSequence& joints, int a, int middle, int b) {
  std::vector<double> out;
  out.reserve(joints.size());
  for (const Eigen::Matrix3Xd& j : joints) out.push_back(flexion_angle(j, a, middle, b));
  return out;
}

double jitter(const JointSequence& joints) {
  if (joints.size() < 3) return 0.0;
  double sum = 0.0;
  long n = 0;
  for (std::size_t f = 1; f + 1 < joints.size(); ++f) {
    const Eigen::Matrix3Xd d2 = joints[f + 1] - 2.0 * joints[f] + joints[f - 1];
    sum += d2.colwise().norm().sum();
    n += d2.cols();
  }
  return kMm * sum / n;
}

double second_difference_energy(const std::vector<double>& trace) {
  double e = 0.0;
  for (std::size_t f = 1; f + 1 < trace.size(); ++f) {
    const double d2 = trace[f + 1] - 2.0 * trace[f] + trace[f - 1];
    e += d2 * d2;
  }
  return e;
}

MetricReport evaluate_motion(const std::vector<PoseParams>& pred_poses, const JointSequence& pred,
                             const std::vector<PoseParams>& gt_poses, const JointSequence& gt,
                             const Skeleton& skeleton) {
  MetricReport r;
  r.mpjpe = mpjpe(pred, gt);
  r.rmse = rmse(pred, gt);
  r.mae = mae_angular(pred_poses, gt_poses);
  r.pck3 = pck(pred, gt, 3.0);
  r.pck7 = pck(pred, gt, 7.0);
  r.jitter = jitter(pred);
  r.frame_mpjpe = per_frame_mpjpe(pred, gt);
  const int lh = skeleton.find("left_hip"), lk = skeleton.find("left_knee"), la = skeleton.find("left_ankle");
  const int rh = skeleton.find("right_hip"), rk = skeleton.find("right_knee"), ra = skeleton.find("right_ankle");
  if (lh >= 0 && lk >= 0 && la >= 0) r.left_knee_flexion = flexion_trace(pred, lh, lk, la);
  if (rh >= 0 && rk >= 0 && ra >= 0) r.right_knee_flexion = flexion_trace(pred, rh, rk, ra);
  r.flexion_energy =
      second_difference_energy(r.left_knee_flexion) + second_difference_energy(r.right_knee_flexion);
  return r;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << "sequence,method,mpjpe_mm,rmse_mm,mae_deg,pck3,pck7,jitter_mm,flexion_energy\n";
  out << std::setprecision(10);
  for (const MetricReport& r : reports)
    out << r.sequence << ',' << r.method << ',' << r.mpjpe << ',' << r.rmse << ',' << r.mae << ','
        << r.pck3 << ',' << r.pck7 << ',' << r.jitter << ',' << r.flexion_energy << '\n';
}

void write_flexion_csv(std::ostream& out, const MetricReport& report) {
  out << "frame,left_knee_deg,right_knee_deg\n" << std::setprecision(10);
  const std::size_t n = std::max(report.left_knee_flexion.size(), report.right_knee_flexion.size());
  for (std::size_t f = 0; f < n; ++f) {
    out << f << ',';
    if (f < report.left_knee_flexion.size()) out << report.left_knee_flexion[f];
    out << ',';
    if (f < report.right_knee_flexion.size()) out << report.right_knee_flexion[f];
    out << '\n';
  }
}

}  // namespace keymocap
