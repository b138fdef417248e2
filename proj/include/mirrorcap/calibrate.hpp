#pragma once

// Step 1: focal length, ground plane, real/mirror association and the
// initial mirror plane, all from 2D keypoints.

#include <span>
#include <string>
#include <vector>

#include "mirrorcap/geometry.hpp"
#include "mirrorcap/skeleton.hpp"

namespace mirrorcap {

struct Detection2D {
  std::vector<Vec2> joints;  // pixels, internal joint schema order
  std::vector<double> conf;  // [0, 1]
  int person_idx = 0;
  int frame_idx = 0;
};

struct FrameAssociation {
  int real_idx = 0;
  int mirror_idx = 1;
  std::vector<int> flip;
};

// One frame after association; `mirror` is already re-indexed through the
// flip permutation so mirror.joints[j] observes the reflection of real joint j.
struct AssociatedFrame {
  int frame_idx = 0;
  bool valid = false;
  std::string invalid_reason;
  Detection2D real;
  Detection2D mirror;
};

struct CalibrationConfig {
  double person_height = 1.7;
  double ambiguity_threshold = 0.02;  // relative neck-pelvis length difference
  double min_joint_conf = 0.3;        // neck, pelvis and ankle cutoff
  double min_mean_conf = 0.3;         // per-person frame validity
  int min_observations = 30;          // upright head/ankle pairs
  double max_residual_rms = 8.0;      // px, focal/ground fit
  double min_view_angle_deg = 5.0;    // camera axis vs mirror plane
  double max_view_angle_deg = 85.0;
  // The view-angle check is repeated at f * exp(+-k sigma), capped at this factor.
  double focal_sigma_multiple = 2.0;
  double max_focal_factor = 4.0;
};

struct HeadAnklePair {
  Vec2 head;
  Vec2 ankle;
  // With both ankles visible the foot point is the midpoint of their ground
  // backprojections rather than of their pixels.
  std::optional<Vec2> other_ankle;
};

struct FocalGroundResult {
  CameraIntrinsics k;
  Plane ground;  // normal points up, toward the camera side
  double camera_height = 0.0;
  double residual_rms = 0.0;  // px
  // Standard error of log f at the optimum; infinite when f is unidentifiable
  // (e.g. a level camera).
  double log_focal_sigma = 0.0;
};

struct MirrorInit {
  Plane mirror;  // normal points from the mirror image toward the real person
  Vec3 anchor = Vec3::Zero();  // averaged ankle midpoint, on the ground
};

struct CalibrationResult {
  CameraIntrinsics k;
  Plane ground;
  Plane mirror;
  Vec3 mirror_anchor = Vec3::Zero();
  double camera_height = 0.0;
  double focal_residual_rms = 0.0;
  double view_angle_deg = 0.0;
  std::vector<bool> per_frame_valid;
};

// Picks the detection with the larger neck-pelvis pixel distance as the real
// person. Throws WrongPersonCount unless exactly two detections are given and
// AmbiguousAssociation when the distances differ by less than the threshold
// or the neck/pelvis keypoints are unreliable.
FrameAssociation associate_real_mirror(std::span<const Detection2D> frame, const SkeletonDef& skel,
                                       const CalibrationConfig& config = {});

// Association plus frame validity; never throws for per-frame problems.
AssociatedFrame associate_frame(std::span<const Detection2D> frame, int frame_idx,
                                const SkeletonDef& skel, const CalibrationConfig& config = {});

// Confidence-weighted midpoint of the two ankle pixels, falling back to the
// one ankle above the confidence cutoff. Empty when neither is usable.
std::optional<Vec2> ankle_pixel(const Detection2D& det, const JointRoles& roles,
                                double min_conf = 0.3);

// Pedestrian calibration: every upright person has height person_height,
// stands on the ground plane, and their head pixel is the projection of the
// point person_height above the ankle along the ground normal.
FocalGroundResult estimate_focal_ground(std::span<const HeadAnklePair> observations,
                                        double person_height, int width, int height,
                                        const CalibrationConfig& config = {});

// Mirror normal from the ground-plane ankle positions of the real and
// mirrored person, averaged over frames and constrained to be orthogonal to
// the ground normal. Only frames with valid == true are used. Each ankle is
// backprojected on its own; the real and mirrored midpoints share weights
// min(c, c_mirror) per side so they stay reflections of each other.
MirrorInit init_mirror(const CameraIntrinsics& k, const Plane& ground,
                       std::span<const AssociatedFrame> frames, const SkeletonDef& skel,
                       double min_conf = 0.3);

// Associates every frame. Throws the dominant per-frame failure
// (WrongPersonCount or AmbiguousAssociation) when no frame is valid.
std::vector<AssociatedFrame> associate_sequence(const std::vector<std::vector<Detection2D>>& frames,
                                               const SkeletonDef& skel,
                                               const CalibrationConfig& config = {});

// Focal length, ground plane and mirror plane from associated frames.
CalibrationResult calibrate(const std::vector<AssociatedFrame>& frames, const SkeletonDef& skel,
                            int width, int height, const CalibrationConfig& config = {});

// Full step 1 over a sequence of per-frame detection lists.
CalibrationResult calibrate(const std::vector<std::vector<Detection2D>>& frames,
                            const SkeletonDef& skel, int width, int height,
                            const CalibrationConfig& config = {});

}  // namespace mirrorcap
