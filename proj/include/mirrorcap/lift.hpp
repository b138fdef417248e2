#pragma once

// Step 2: sequence-level 2D-to-3D lifting. Minimizes the confidence-weighted
// reprojection error in the real and the virtual (mirror) camera plus
// smoothness, feet-on-ground and normal-consistency terms, over per-frame
// joint rotations and pelvis positions, shared bone lengths, and the mirror
// and ground normals.

#include <Eigen/Core>
#include <vector>

#include "mirrorcap/calibrate.hpp"
#include "mirrorcap/skeleton.hpp"

namespace mirrorcap {

struct LiftWeights {
  double location = 1.0;     // second difference of joint positions
  double orientation = 0.1;  // second difference of 6D rotation parameters
  double feet = 1.0;         // lower foot height above the ground
};

struct FrameObservation {
  int frame_idx = 0;
  bool valid = false;
  std::vector<Vec2> q;      // real person, pixels
  std::vector<double> w;    // confidences clamped to [0, 1]
  std::vector<Vec2> q_bar;  // mirror person, re-indexed to real joints
  std::vector<double> w_bar;
};

struct LiftProblem {
  CameraIntrinsics k;
  Plane mirror;
  Vec3 mirror_anchor = Vec3::Zero();  // fixed point on the mirror plane
  Plane ground;
  Vec3 ground_anchor = Vec3::Zero();  // fixed point on the ground plane
  std::vector<FrameObservation> frames;
  SkeletonDef skel;
  LiftWeights weights;
  // Points closer than this depth are projected as if at the floor and pay
  // barrier_weight * (floor - z)^2 instead of failing.
  double depth_floor = 1e-3;
  double barrier_weight = 1e6;

  int num_frames() const { return static_cast<int>(frames.size()); }
};

// Optimization variables. The normals are free 3-vectors; unit length is
// encouraged by the loss and they are normalized wherever a plane is built.
struct LiftState {
  PoseParams poses;
  Vec3 mirror_normal = Vec3::UnitZ();
  Vec3 ground_normal = -Vec3::UnitY();

  static LiftState from_problem(const LiftProblem& problem, PoseParams poses);
};

struct LiftGradient {
  std::vector<Rot6> theta;
  std::vector<double> lengths;
  std::vector<Vec3> pelvis;
  Vec3 mirror_normal = Vec3::Zero();
  Vec3 ground_normal = Vec3::Zero();
};

struct LossBreakdown {
  double reprojection = 0.0;
  double location_smooth = 0.0;
  double orientation_smooth = 0.0;
  double feet = 0.0;
  double orthogonality = 0.0;
  double mirror_norm = 0.0;
  double ground_norm = 0.0;

  double regularizer() const {
    return location_smooth + orientation_smooth + feet + orthogonality + mirror_norm + ground_norm;
  }
  double total() const { return reprojection + regularizer(); }
};

struct LiftOptions {
  int iterations = 2000;        // total, including the warm-up block
  int warmup_iterations = 200;  // pelvis and root orientation only
  double lr_rotation = 0.02;
  double lr_pelvis = 0.02;
  double lr_length = 0.005;
  double lr_normal = 0.002;
  double final_lr_fraction = 0.01;  // exponential decay target
  int no_decrease_window = 50;
  // An initial loss at or below this is already converged; NoDecrease is
  // not raised for it.
  double converged_loss = 1e-9;
};

struct LiftResult {
  PoseParams poses;
  Plane mirror;
  Plane ground;
  Vec3 mirror_anchor = Vec3::Zero();
  std::vector<double> residuals;  // per frame RMS px over both views; 0 for invalid frames
  std::vector<bool> valid;
  std::vector<double> best_loss_history;
  LossBreakdown final_loss;
};

LiftProblem make_lift_problem(const CalibrationResult& calib,
                              const std::vector<AssociatedFrame>& frames, const SkeletonDef& skel,
                              const LiftWeights& weights = {});

// Per-frame data term using the problem's mirror plane.
double reprojection_loss(const LiftProblem& problem, const PoseParams& poses, int frame);
// Data term using the state's (possibly refined) mirror normal.
double reprojection_loss(const LiftProblem& problem, const LiftState& state, int frame);
double regularizer_loss(const LiftProblem& problem, const LiftState& state);

// Full objective; fills grad when non-null.
LossBreakdown evaluate_loss(const LiftProblem& problem, const LiftState& state,
                            LiftGradient* grad = nullptr);
LiftGradient gradient(const LiftProblem& problem, const LiftState& state);

// Flat views of the variables, in the order theta, lengths, pelvis, mirror
// normal, ground normal.
Eigen::VectorXd pack(const LiftState& state);
void unpack(const Eigen::VectorXd& x, LiftState& state);
Eigen::VectorXd pack(const LiftGradient& grad);

// Bone lengths from median 2D limb lengths scaled by the ground-plane depth
// of each person, then symmetrized over left/right pairs.
std::vector<double> initial_bone_lengths(const LiftProblem& problem);

// Best of the eight rotated standing poses per valid frame (lowest
// reprojection loss); invalid frames copy their nearest valid neighbour.
PoseParams initialize_poses(const LiftProblem& problem);

LiftResult optimize_sequence(const LiftProblem& problem, const PoseParams& init,
                             const LiftOptions& options = {});

std::vector<double> frame_residuals(const LiftProblem& problem, const LiftState& state);

}  // namespace mirrorcap
