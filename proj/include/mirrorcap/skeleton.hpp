#pragma once

// Kinematic body model: 6D rotation parameterization, forward kinematics and
// the rotated standing-pose initializer.

#include <string>
#include <utility>
#include <vector>

#include "mirrorcap/geometry.hpp"

namespace mirrorcap {

using Rot6 = Eigen::Matrix<double, 6, 1>;

// Joint indices the pipeline needs by role.
struct JointRoles {
  int pelvis = -1;
  int neck = -1;
  int head = -1;
  int l_ankle = -1;
  int r_ankle = -1;
  std::vector<int> feet;  // heels when the schema has them, else ankles
};

// Joints are stored in topological order (parents[j] < j); joint 0 is the
// pelvis root with parent -1. v_ref[j] is the unit rest direction of the bone
// parent(j) -> j expressed in the body frame (Y up, Z forward, X toward the
// person's left); rest_lengths[j] is its rest length. Entries for the root
// are zero.
struct SkeletonDef {
  std::vector<std::string> joint_names;
  std::vector<int> parents;
  std::vector<Vec3> v_ref;
  std::vector<double> rest_lengths;
  std::vector<std::pair<int, int>> flip_pairs;

  int size() const { return static_cast<int>(parents.size()); }
  int index_of(const std::string& name) const;  // throws InvalidArgument
  int find(const std::string& name) const;      // -1 when absent
  JointRoles roles() const;

  // Permutation swapping left and right joints; an involution.
  std::vector<int> flip_permutation() const;

  // Rest-pose joint positions with the root at the origin.
  std::vector<Vec3> rest_positions() const;

  void validate() const;

  static SkeletonDef from_rest_positions(std::vector<std::string> names, std::vector<int> parents,
                                         const std::vector<Vec3>& positions,
                                         std::vector<std::pair<int, int>> flip_pairs);

  // Neutral A-pose, H36M-style 17 joints, ankles at y = 0 and the head joint
  // at y = person_height.
  static SkeletonDef h36m17(double person_height = 1.7);
  // h36m17 plus heel joints below and behind the ankles.
  static SkeletonDef h36m19(double person_height = 1.7);
};

struct PoseParams {
  int num_frames = 0;
  int num_joints = 0;
  std::vector<Rot6> theta;      // [frame * num_joints + joint]
  std::vector<double> lengths;  // per joint, bone ending at the joint (root unused)
  std::vector<Vec3> pelvis;     // per frame

  static PoseParams identity(const SkeletonDef& skel, int num_frames);

  Rot6& rot(int frame, int joint) { return theta[static_cast<std::size_t>(frame) * num_joints + joint]; }
  const Rot6& rot(int frame, int joint) const {
    return theta[static_cast<std::size_t>(frame) * num_joints + joint];
  }
  void validate(const SkeletonDef& skel) const;
};

struct Pose3D {
  std::vector<Vec3> joints;
  int frame_idx = 0;
};

// World transform of every joint for one frame: joint j's frame has rotation
// world_rot[j] and origin pos[j].
struct PosedSkeleton {
  std::vector<Mat3> world_rot;
  std::vector<Vec3> pos;
};

inline Rot6 identity_rot6() {
  Rot6 r;
  r << 1, 0, 0, 0, 1, 0;
  return r;
}

// Gram-Schmidt on the two stacked 3-vectors. Throws DegenerateRotation when
// they are (nearly) parallel or zero.
Mat3 rot6d_to_matrix(const Rot6& theta);
// First two columns of m.
Rot6 matrix_to_rot6d(const Mat3& m);
// Chain rule through rot6d_to_matrix: returns dL/dtheta given dL/dM.
Rot6 rot6d_backward(const Rot6& theta, const Mat3& grad_m);

PosedSkeleton pose_skeleton(const SkeletonDef& skel, const PoseParams& pose, int frame);
Pose3D forward_kinematics(const SkeletonDef& skel, const PoseParams& pose, int frame);

// Eight single-frame candidates: the rest pose standing on the ground with
// its ankle midpoint at ankle_pos, facing the camera for k = 0 and rotated by
// k * 45 degrees about the ground normal for k = 1..7. Uses the skeleton's
// rest lengths unless lengths is non-empty.
std::vector<PoseParams> standing_pose_candidates(const SkeletonDef& skel, const Vec3& ankle_pos,
                                                 const Plane& ground,
                                                 const std::vector<double>& lengths = {});

// Body-to-camera rotation standing upright on the ground (body Y along the
// ground normal), facing the camera, then turned by yaw about the normal.
Mat3 upright_orientation(const Plane& ground, double yaw_rad);

}  // namespace mirrorcap
