#pragma once

// Ground-truth scene generator and brute-force references used to check
// calibration, lifting and rendering.

#include <cstdint>
#include <vector>

#include "mirrorcap/calibrate.hpp"
#include "mirrorcap/render.hpp"
#include "mirrorcap/skeleton.hpp"

namespace mirrorcap {

enum class MotionKind {
  Pedestrian,  // upright walking with straight legs and swinging arms
  Sinusoid,    // every joint follows its own sinusoidal rotation
};

struct SynthConfig {
  int frames = 100;
  int width = 1280;
  int height = 960;
  double focal = 1200.0;
  double camera_height = 1.6;      // above the ground, m
  double camera_tilt_deg = 10.0;   // pitch down from horizontal
  double mirror_yaw_deg = 35.0;    // mirror normal vs. the horizontal view direction
  double person_distance = 4.0;    // horizontal, camera foot to walking-path center
  double person_lateral = -0.4;    // along the camera's x axis
  double mirror_gap = 1.2;         // walking-path center to mirror plane
  double path_radius = 0.6;        // extent of the walking arc
  double person_height = 1.7;
  MotionKind motion = MotionKind::Pedestrian;
  double joint_amplitude_deg = 25.0;
  double arm_swing_deg = 25.0;
  double noise_sigma = 0.0;        // px
  double conf_min = 0.5;
  double conf_max = 1.0;
  bool correlated_confidence = false;  // noise scaled up as confidence drops
  double dropout = 0.0;            // chance a keypoint gets confidence 0
  bool heels = false;              // 19-joint skeleton with heel joints

  void validate() const;
};

struct SyntheticScene {
  CameraIntrinsics k_gt;
  Plane ground_gt;
  Plane mirror_gt;
  SkeletonDef skel;
  PoseParams motion_gt;
  double person_height = 1.7;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  // Per frame, both detections in random order.
  std::vector<std::vector<Detection2D>> detections;

  Pose3D gt_pose(int frame) const { return forward_kinematics(skel, motion_gt, frame); }
};

// Deterministic in (config, seed). Throws PersonBehindMirror when any joint
// ends up on the far side of the mirror.
SyntheticScene generate_scene(const SynthConfig& config, std::uint64_t seed);

// Noise-free detections of the scene's motion: the real joints and the
// projections of their reflections, re-labelled through the flip map.
std::vector<std::vector<Detection2D>> project_detections(const SyntheticScene& scene);

enum class PerturbTarget { Focal, Normal, Pose };

// Focal: f scaled by (1 + magnitude). Normal: mirror normal turned by
// magnitude degrees about the ground normal, keeping its ground anchor.
// Pose: every pelvis shifted by magnitude along the ground's lateral axis.
SyntheticScene perturb(const SyntheticScene& scene, PerturbTarget what, double magnitude);

// Dense fixed-step march along the full physical light path: camera to the
// mirror, then the reflected continuation, in one transmittance pass over
// the background color. Both legs are clipped to the field's support box.
Vec3 oracle_raymarch(const RadianceField& field, const PosedSkeleton& posed, const Plane& mirror,
                     const Ray& ray, double step, const Vec3& background = Vec3::Zero());

// Oracle image for every pixel center.
Image oracle_render(const RadianceField& field, const CameraIntrinsics& k, const Plane& mirror,
                    const PosedSkeleton& posed, double step, const Image* background = nullptr,
                    int threads = 1);

}  // namespace mirrorcap
