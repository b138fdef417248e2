#include "mirrorcap/eval.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <sstream>

namespace mirrorcap {

namespace {

using Points = Eigen::Matrix<double, 3, Eigen::Dynamic>;

Points gather(const Pose3D& pose, const std::vector<int>& subset) {
  Points m(3, static_cast<Eigen::Index>(subset.size()));
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const int j = subset[i];
    if (j < 0 || j >= static_cast<int>(pose.joints.size())) {
      throw Error(ErrorCode::DimensionMismatch, "joint subset index outside the pose");
    }
    m.col(static_cast<Eigen::Index>(i)) = pose.joints[j];
  }
  return m;
}

bool collinear(const Points& centered) {
  const Eigen::JacobiSVD<Points> svd(centered);
  const auto s = svd.singularValues();
  return !(s[0] > 0.0) || s[1] <= 1e-9 * s[0];
}

double mean_error(const Points& a, const Points& b) {
  return (a - b).colwise().norm().mean();
}

}  // namespace

std::vector<int> default_joint_subset(const SkeletonDef& skel) {
  std::vector<int> out;
  for (int j = 0; j < skel.size(); ++j) {
    const std::string& name = skel.joint_names[j];
    if (name == "spine" || name == "nose" || name == "l_heel" || name == "r_heel") continue;
    out.push_back(j);
  }
  return out;
}

Similarity procrustes(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  if (pred.size() != gt.size() || pred.size() < 3) {
    throw Error(ErrorCode::DegenerateConfiguration, "alignment needs at least 3 matched points");
  }
  Points p(3, static_cast<Eigen::Index>(pred.size())), g(3, static_cast<Eigen::Index>(gt.size()));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    p.col(static_cast<Eigen::Index>(i)) = pred[i];
    g.col(static_cast<Eigen::Index>(i)) = gt[i];
  }
  const Vec3 mp = p.rowwise().mean();
  const Vec3 mg = g.rowwise().mean();
  const Points pc = p.colwise() - mp;
  const Points gc = g.colwise() - mg;
  if (collinear(pc) || collinear(gc)) {
    throw Error(ErrorCode::DegenerateConfiguration, "joints are collinear");
  }
  const Mat3 cov = gc * pc.transpose();
  const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 d = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) d[2] = -1.0;
  Similarity s;
  s.rotation = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  s.scale = svd.singularValues().dot(d) / pc.squaredNorm();
  s.translation = mg - s.scale * (s.rotation * mp);
  return s;
}

double pa_mpjpe(const Pose3D& pred, const Pose3D& gt, const std::vector<int>& subset) {
  const Points p = gather(pred, subset);
  const Points g = gather(gt, subset);
  std::vector<Vec3> pv(subset.size()), gv(subset.size());
  for (std::size_t i = 0; i < subset.size(); ++i) {
    pv[i] = p.col(static_cast<Eigen::Index>(i));
    gv[i] = g.col(static_cast<Eigen::Index>(i));
  }
  const Similarity s = procrustes(pv, gv);
  const Points aligned = (s.scale * (s.rotation * p)).colwise() + s.translation;
  return mean_error(aligned, g);
}

double n_mpjpe(const Pose3D& pred, const Pose3D& gt, const std::vector<int>& subset, int root) {
  if (root < 0 || root >= static_cast<int>(pred.joints.size()) ||
      root >= static_cast<int>(gt.joints.size())) {
    throw Error(ErrorCode::DimensionMismatch, "root joint outside the pose");
  }
  const Points p = gather(pred, subset).colwise() - pred.joints[root];
  const Points g = gather(gt, subset).colwise() - gt.joints[root];
  const double pp = p.squaredNorm();
  if (!(pp > 1e-24)) throw Error(ErrorCode::ZeroPose, "root-centered prediction is zero");
  const double scale = (p.array() * g.array()).sum() / pp;
  return mean_error(scale * p, g);
}

MetricReport evaluate_sequence(const std::vector<Pose3D>& pred, const std::vector<Pose3D>& gt,
                               const std::vector<int>& subset, int root) {
  if (pred.size() != gt.size()) {
    throw Error(ErrorCode::DimensionMismatch, "prediction and ground truth frame counts differ");
  }
  MetricReport r;
  r.joint_subset = subset;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    FrameMetric m;
    m.frame_idx = pred[t].frame_idx;
    m.pa_mpjpe = pa_mpjpe(pred[t], gt[t], subset);
    m.n_mpjpe = n_mpjpe(pred[t], gt[t], subset, root);
    r.pa_mpjpe += m.pa_mpjpe;
    r.n_mpjpe += m.n_mpjpe;
    r.per_frame.push_back(m);
  }
  if (!r.per_frame.empty()) {
    r.pa_mpjpe /= static_cast<double>(r.per_frame.size());
    r.n_mpjpe /= static_cast<double>(r.per_frame.size());
  }
  return r;
}

std::string to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["pa_mpjpe"] = report.pa_mpjpe;
  j["n_mpjpe"] = report.n_mpjpe;
  j["joint_subset"] = report.joint_subset;
  nlohmann::ordered_json frames = nlohmann::ordered_json::array();
  for (const FrameMetric& m : report.per_frame) {
    frames.push_back({{"frame", m.frame_idx}, {"pa_mpjpe", m.pa_mpjpe}, {"n_mpjpe", m.n_mpjpe}});
  }
  j["per_frame"] = std::move(frames);
  return j.dump(2) + "\n";
}

std::string to_table(const MetricReport& report) {
  std::ostringstream os;
  char line[96];
  os << "frame   PA-MPJPE[mm]   N-MPJPE[mm]\n";
  for (const FrameMetric& m : report.per_frame) {
    std::snprintf(line, sizeof line, "%5d   %12.3f   %11.3f\n", m.frame_idx, 1000.0 * m.pa_mpjpe,
                  1000.0 * m.n_mpjpe);
    os << line;
  }
  std::snprintf(line, sizeof line, " mean   %12.3f   %11.3f\n", 1000.0 * report.pa_mpjpe,
                1000.0 * report.n_mpjpe);
  os << line;
  return os.str();
}

}  // namespace mirrorcap
