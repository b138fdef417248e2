#pragma once

// Pose accuracy metrics: Procrustes-aligned and scale-normalized mean
// per-joint position error.

#include <string>
#include <vector>

#include "mirrorcap/skeleton.hpp"

namespace mirrorcap {

// The 15 evaluation joints of the 17-joint layout: everything except the
// spine and nose, which lack a consistent counterpart across datasets.
std::vector<int> default_joint_subset(const SkeletonDef& skel);

struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

// Least-squares similarity taking pred onto gt with det(rotation) = +1.
// Throws DegenerateConfiguration when either point set is (nearly) collinear.
Similarity procrustes(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);

// Mean joint error after optimal similarity alignment of pred onto gt.
double pa_mpjpe(const Pose3D& pred, const Pose3D& gt, const std::vector<int>& subset);

// Both poses centered on their root joint, pred scaled by <pred,gt>/<pred,pred>,
// then mean joint error. Throws ZeroPose when the centered pred vanishes.
double n_mpjpe(const Pose3D& pred, const Pose3D& gt, const std::vector<int>& subset,
               int root = 0);

struct FrameMetric {
  int frame_idx = 0;
  double pa_mpjpe = 0.0;
  double n_mpjpe = 0.0;
};

struct MetricReport {
  double pa_mpjpe = 0.0;  // mean over frames, scene units
  double n_mpjpe = 0.0;
  std::vector<FrameMetric> per_frame;
  std::vector<int> joint_subset;
};

MetricReport evaluate_sequence(const std::vector<Pose3D>& pred, const std::vector<Pose3D>& gt,
                               const std::vector<int>& subset, int root = 0);

std::string to_json(const MetricReport& report);
// Plain-text table in millimetres (scene units assumed to be metres).
std::string to_table(const MetricReport& report);

}  // namespace mirrorcap
