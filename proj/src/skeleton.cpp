#include "mirrorcap/skeleton.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace mirrorcap {

namespace {
constexpr double kDegenerate = 1e-9;

SkeletonDef build_h36m(double person_height, bool with_heels) {
  // Designed for a 1.70 tall person, then scaled.
  const double s = person_height / 1.70;
  const double upper_arm = 0.28, forearm = 0.26;
  const double ca = std::cos(std::numbers::pi / 6.0), sa = std::sin(std::numbers::pi / 6.0);
  const Vec3 l_sh(0.18, 1.40, 0.0);
  const Vec3 l_el = l_sh + upper_arm * Vec3(sa, -ca, 0.0);
  const Vec3 l_wr = l_el + forearm * Vec3(sa, -ca, 0.0);
  const auto mirror_x = [](const Vec3& p) { return Vec3(-p.x(), p.y(), p.z()); };

  std::vector<std::string> names = {"pelvis", "r_hip",  "r_knee",     "r_ankle",   "l_hip",
                                    "l_knee", "l_ankle", "spine",     "neck",      "nose",
                                    "head",   "l_shoulder", "l_elbow", "l_wrist",  "r_shoulder",
                                    "r_elbow", "r_wrist"};
  std::vector<int> parents = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15};
  std::vector<Vec3> pos = {
      {0.0, 0.92, 0.0},   {-0.11, 0.90, 0.0}, {-0.11, 0.47, 0.0}, {-0.11, 0.0, 0.0},
      {0.11, 0.90, 0.0},  {0.11, 0.47, 0.0},  {0.11, 0.0, 0.0},   {0.0, 1.15, 0.0},
      {0.0, 1.42, 0.0},   {0.0, 1.55, 0.08},  {0.0, 1.70, 0.0},   l_sh,
      l_el,               l_wr,               mirror_x(l_sh),     mirror_x(l_el),
      mirror_x(l_wr)};
  std::vector<std::pair<int, int>> flips = {{1, 4}, {2, 5}, {3, 6}, {11, 14}, {12, 15}, {13, 16}};
  if (with_heels) {
    names.push_back("r_heel");
    parents.push_back(3);
    pos.emplace_back(-0.11, 0.0, -0.06);
    names.push_back("l_heel");
    parents.push_back(6);
    pos.emplace_back(0.11, 0.0, -0.06);
    flips.emplace_back(17, 18);
  }
  for (Vec3& p : pos) p *= s;
  return SkeletonDef::from_rest_positions(std::move(names), std::move(parents), pos,
                                          std::move(flips));
}

Vec3 safe_normalize(const Vec3& v) {
  const double len = v.norm();
  if (!(len > kDegenerate)) throw Error(ErrorCode::DegenerateRotation, "zero 6D column");
  return v / len;
}

}  // namespace

int SkeletonDef::find(const std::string& name) const {
  for (int j = 0; j < size(); ++j) {
    if (joint_names[j] == name) return j;
  }
  return -1;
}

int SkeletonDef::index_of(const std::string& name) const {
  const int j = find(name);
  if (j < 0) throw Error(ErrorCode::InvalidArgument, "skeleton has no joint named '" + name + "'");
  return j;
}

JointRoles SkeletonDef::roles() const {
  JointRoles r;
  r.pelvis = index_of("pelvis");
  r.neck = index_of("neck");
  r.head = index_of("head");
  r.l_ankle = index_of("l_ankle");
  r.r_ankle = index_of("r_ankle");
  const int lh = find("l_heel"), rh = find("r_heel");
  if (lh >= 0 && rh >= 0) {
    r.feet = {lh, rh};
  } else {
    r.feet = {r.l_ankle, r.r_ankle};
  }
  return r;
}

std::vector<int> SkeletonDef::flip_permutation() const {
  std::vector<int> perm(static_cast<std::size_t>(size()));
  for (int j = 0; j < size(); ++j) perm[j] = j;
  for (const auto& [a, b] : flip_pairs) {
    perm[a] = b;
    perm[b] = a;
  }
  return perm;
}

std::vector<Vec3> SkeletonDef::rest_positions() const {
  std::vector<Vec3> pos(static_cast<std::size_t>(size()), Vec3::Zero());
  for (int j = 1; j < size(); ++j) pos[j] = pos[parents[j]] + rest_lengths[j] * v_ref[j];
  return pos;
}

void SkeletonDef::validate() const {
  const auto n = parents.size();
  if (n == 0 || joint_names.size() != n || v_ref.size() != n || rest_lengths.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "skeleton arrays have inconsistent sizes");
  }
  if (parents[0] != -1) throw Error(ErrorCode::InvalidArgument, "joint 0 must be the root");
  for (std::size_t j = 1; j < n; ++j) {
    if (parents[j] < 0 || parents[j] >= static_cast<int>(j)) {
      std::ostringstream os;
      os << "joint " << j << " has parent " << parents[j] << "; joints must follow their parents";
      throw Error(ErrorCode::InvalidArgument, os.str());
    }
    if (std::abs(v_ref[j].norm() - 1.0) > 1e-9) {
      throw Error(ErrorCode::InvalidArgument, "v_ref of joint '" + joint_names[j] + "' is not unit");
    }
  }
  std::vector<int> seen(n, 0);
  for (const auto& [a, b] : flip_pairs) {
    if (a < 0 || b < 0 || a >= static_cast<int>(n) || b >= static_cast<int>(n) || a == b ||
        seen[a]++ || seen[b]++) {
      throw Error(ErrorCode::InvalidArgument, "flip pairs must be disjoint joint pairs");
    }
  }
}

SkeletonDef SkeletonDef::from_rest_positions(std::vector<std::string> names,
                                             std::vector<int> parents,
                                             const std::vector<Vec3>& positions,
                                             std::vector<std::pair<int, int>> flip_pairs) {
  SkeletonDef skel;
  skel.joint_names = std::move(names);
  skel.parents = std::move(parents);
  skel.flip_pairs = std::move(flip_pairs);
  const auto n = skel.parents.size();
  if (positions.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "rest positions do not match the joint count");
  }
  skel.v_ref.assign(n, Vec3::Zero());
  skel.rest_lengths.assign(n, 0.0);
  for (std::size_t j = 1; j < n; ++j) {
    if (skel.parents[j] < 0 || skel.parents[j] >= static_cast<int>(j)) break;  // caught below
    const Vec3 bone = positions[j] - positions[skel.parents[j]];
    const double len = bone.norm();
    if (!(len > 0.0)) throw Error(ErrorCode::InvalidArgument, "zero-length rest bone");
    skel.v_ref[j] = bone / len;
    skel.rest_lengths[j] = len;
  }
  skel.validate();
  return skel;
}

SkeletonDef SkeletonDef::h36m17(double person_height) { return build_h36m(person_height, false); }
SkeletonDef SkeletonDef::h36m19(double person_height) { return build_h36m(person_height, true); }

PoseParams PoseParams::identity(const SkeletonDef& skel, int num_frames) {
  PoseParams p;
  p.num_frames = num_frames;
  p.num_joints = skel.size();
  p.theta.assign(static_cast<std::size_t>(num_frames) * skel.size(), identity_rot6());
  p.lengths = skel.rest_lengths;
  p.pelvis.assign(static_cast<std::size_t>(num_frames), Vec3::Zero());
  return p;
}

void PoseParams::validate(const SkeletonDef& skel) const {
  if (num_joints != skel.size() || theta.size() != static_cast<std::size_t>(num_frames) * num_joints ||
      lengths.size() != static_cast<std::size_t>(num_joints) ||
      pelvis.size() != static_cast<std::size_t>(num_frames)) {
    throw Error(ErrorCode::DimensionMismatch, "pose parameters do not match the skeleton");
  }
  for (int j = 1; j < num_joints; ++j) {
    if (!(lengths[j] > 0.0)) throw Error(ErrorCode::InvalidArgument, "bone lengths must be positive");
  }
  for (const Rot6& t : theta) {
    if (!t.allFinite()) throw Error(ErrorCode::NaNDetected, "non-finite rotation parameter");
  }
}

Mat3 rot6d_to_matrix(const Rot6& theta) {
  const Vec3 a1 = theta.head<3>();
  const Vec3 a2 = theta.tail<3>();
  const Vec3 b1 = safe_normalize(a1);
  const Vec3 b2 = safe_normalize(a2 - b1.dot(a2) * b1);
  Mat3 m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b1.cross(b2);
  return m;
}

Rot6 matrix_to_rot6d(const Mat3& m) {
  Rot6 r;
  r << m.col(0), m.col(1);
  return r;
}

Rot6 rot6d_backward(const Rot6& theta, const Mat3& grad_m) {
  const Vec3 a1 = theta.head<3>();
  const Vec3 a2 = theta.tail<3>();
  const double n1 = a1.norm();
  const Vec3 b1 = a1 / n1;
  const Vec3 u = a2 - b1.dot(a2) * b1;
  const double nu = u.norm();
  const Vec3 b2 = u / nu;

  Vec3 gb1 = grad_m.col(0);
  Vec3 gb2 = grad_m.col(1);
  const Vec3 gb3 = grad_m.col(2);
  // b3 = b1 x b2
  gb1 += b2.cross(gb3);
  gb2 += gb3.cross(b1);
  // b2 = u / |u|
  const Vec3 gu = (gb2 - b2 * b2.dot(gb2)) / nu;
  // u = a2 - (b1.a2) b1
  const Vec3 ga2 = gu - b1 * b1.dot(gu);
  gb1 -= b1.dot(gu) * a2 + b1.dot(a2) * gu;
  // b1 = a1 / |a1|
  const Vec3 ga1 = (gb1 - b1 * b1.dot(gb1)) / n1;

  Rot6 g;
  g << ga1, ga2;
  return g;
}

PosedSkeleton pose_skeleton(const SkeletonDef& skel, const PoseParams& pose, int frame) {
  const int n = skel.size();
  PosedSkeleton out;
  out.world_rot.resize(static_cast<std::size_t>(n));
  out.pos.resize(static_cast<std::size_t>(n));
  out.world_rot[0] = rot6d_to_matrix(pose.rot(frame, 0));
  out.pos[0] = pose.pelvis[frame];
  for (int j = 1; j < n; ++j) {
    const int p = skel.parents[j];
    out.pos[j] = out.pos[p] + out.world_rot[p] * (pose.lengths[j] * skel.v_ref[j]);
    out.world_rot[j] = out.world_rot[p] * rot6d_to_matrix(pose.rot(frame, j));
  }
  return out;
}

Pose3D forward_kinematics(const SkeletonDef& skel, const PoseParams& pose, int frame) {
  Pose3D out;
  out.joints = pose_skeleton(skel, pose, frame).pos;
  out.frame_idx = frame;
  return out;
}

Mat3 upright_orientation(const Plane& ground, double yaw_rad) {
  const Vec3 up = ground.n.normalized();
  Vec3 facing = -Vec3::UnitZ() + up.z() * up;
  if (facing.norm() < 1e-6) facing = Vec3::UnitX() - up.x() * up;
  facing.normalize();
  const Vec3 left = up.cross(facing);
  Mat3 align;
  align.col(0) = left;
  align.col(1) = up;
  align.col(2) = facing;
  return Eigen::AngleAxisd(yaw_rad, up).toRotationMatrix() * align;
}

std::vector<PoseParams> standing_pose_candidates(const SkeletonDef& skel, const Vec3& ankle_pos,
                                                 const Plane& ground,
                                                 const std::vector<double>& lengths) {
  const JointRoles roles = skel.roles();
  std::vector<PoseParams> out;
  out.reserve(8);
  for (int k = 0; k < 8; ++k) {
    PoseParams p = PoseParams::identity(skel, 1);
    if (!lengths.empty()) p.lengths = lengths;
    p.rot(0, 0) = matrix_to_rot6d(upright_orientation(ground, k * std::numbers::pi / 4.0));
    const PosedSkeleton posed = pose_skeleton(skel, p, 0);
    const Vec3 mid = 0.5 * (posed.pos[roles.l_ankle] + posed.pos[roles.r_ankle]);
    p.pelvis[0] = ankle_pos - mid;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace mirrorcap
