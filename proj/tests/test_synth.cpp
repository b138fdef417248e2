#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mirrorcap/synth.hpp"

using namespace mirrorcap;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.frames = 30;
  return c;
}

// Detection of the given person index inside one generated frame.
const Detection2D& person(const std::vector<Detection2D>& frame, bool want_real,
                          const std::vector<Detection2D>& clean) {
  const double d0 = (frame[0].joints[0] - clean[0].joints[0]).norm();
  const double d1 = (frame[1].joints[0] - clean[0].joints[0]).norm();
  const bool first_is_real = d0 <= d1;
  return (first_is_real == want_real) ? frame[0] : frame[1];
}

double angle_deg(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

}  // namespace

TEST(Synth, DeterministicInSeed) {
  SynthConfig c = small_config();
  c.noise_sigma = 2.0;
  const SyntheticScene a = generate_scene(c, 11);
  const SyntheticScene b = generate_scene(c, 11);
  const SyntheticScene other = generate_scene(c, 12);
  ASSERT_EQ(a.detections.size(), b.detections.size());
  bool differs = false;
  for (std::size_t t = 0; t < a.detections.size(); ++t) {
    for (int i = 0; i < 2; ++i) {
      const Detection2D &x = a.detections[t][i], &y = b.detections[t][i], &z = other.detections[t][i];
      for (std::size_t j = 0; j < x.joints.size(); ++j) {
        EXPECT_EQ(x.joints[j], y.joints[j]);
        EXPECT_EQ(x.conf[j], y.conf[j]);
        differs = differs || x.joints[j] != z.joints[j];
      }
    }
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(a.motion_gt.pelvis, b.motion_gt.pelvis);
}

TEST(Synth, NoiseFreeDetectionsFollowTheLightPath) {
  // Independent check: the camera ray through a mirror keypoint, bounced
  // off the plane, passes through the flipped real joint.
  const SyntheticScene s = generate_scene(small_config(), 4);
  const std::vector<int> flip = s.skel.flip_permutation();
  const auto clean = project_detections(s);
  const Plane& m = s.mirror_gt;
  for (int t = 0; t < s.motion_gt.num_frames; ++t) {
    const auto joints = s.gt_pose(t).joints;
    const Detection2D& real = person(s.detections[t], true, clean[t]);
    const Detection2D& mir = person(s.detections[t], false, clean[t]);
    for (int j = 0; j < s.skel.size(); ++j) {
      const Vec3& p = joints[j];
      const Vec2 q(s.k_gt.f * p.x() / p.z() + s.k_gt.o1, s.k_gt.f * p.y() / p.z() + s.k_gt.o2);
      EXPECT_LT((real.joints[j] - q).norm(), 1e-9);

      const Vec3 dir((mir.joints[j].x() - s.k_gt.o1) / s.k_gt.f,
                     (mir.joints[j].y() - s.k_gt.o2) / s.k_gt.f, 1.0);
      const double ts = -m.d / m.n.dot(dir);
      ASSERT_GT(ts, 0.0);
      const Vec3 hit = ts * dir;
      const Vec3 bounce = (dir - 2.0 * m.n.dot(dir) * m.n).normalized();
      const Vec3 target = joints[flip[j]] - hit;
      const double miss = (target - target.dot(bounce) * bounce).norm();
      EXPECT_LT(miss, 1e-9 * target.norm()) << "frame " << t << " joint " << j;
      EXPECT_GT(target.dot(bounce), 0.0);
    }
  }
}

TEST(Synth, ConfidencesAndOrderAreRandomized) {
  const SyntheticScene s = generate_scene(small_config(), 5);
  const auto clean = project_detections(s);
  int real_first = 0;
  for (std::size_t t = 0; t < s.detections.size(); ++t) {
    real_first += s.detections[t][0].joints[0] == clean[t][0].joints[0];
    for (int i = 0; i < 2; ++i) {
      EXPECT_EQ(s.detections[t][i].person_idx, i);
      for (double c : s.detections[t][i].conf) {
        EXPECT_GE(c, 0.5);
        EXPECT_LE(c, 1.0);
      }
    }
  }
  EXPECT_GT(real_first, 0);
  EXPECT_LT(real_first, 30);
}

TEST(Synth, MirrorPersonLooksSmaller) {
  const SyntheticScene s = generate_scene(small_config(), 6);
  const JointRoles roles = s.skel.roles();
  for (const auto& frame : project_detections(s)) {
    const double real = (frame[0].joints[roles.neck] - frame[0].joints[roles.pelvis]).norm();
    const double mir = (frame[1].joints[roles.neck] - frame[1].joints[roles.pelvis]).norm();
    EXPECT_LT(mir, real);
  }
}

TEST(Synth, PedestrianStandsOnTheGround) {
  const SyntheticScene s = generate_scene(small_config(), 7);
  const JointRoles roles = s.skel.roles();
  for (int t = 0; t < s.motion_gt.num_frames; ++t) {
    const auto j = s.gt_pose(t).joints;
    EXPECT_NEAR(s.ground_gt.signed_distance(0.5 * (j[roles.l_ankle] + j[roles.r_ankle])), 0.0, 1e-9);
    // Upright: the head is a body height above the ground.
    EXPECT_NEAR(s.ground_gt.signed_distance(j[roles.head]), s.person_height, 1e-9);
  }
  // Mirror is vertical and the ground sits camera_height below the camera.
  EXPECT_NEAR(s.mirror_gt.n.dot(s.ground_gt.n), 0.0, 1e-12);
  EXPECT_NEAR(s.ground_gt.d, 1.6, 1e-12);
  EXPECT_NEAR(s.mirror_gt.n.norm(), 1.0, 1e-12);
  EXPECT_GT(s.mirror_gt.d, 0.0);
}

TEST(Synth, SinusoidKeepsLowestFootOnGround) {
  SynthConfig c = small_config();
  c.motion = MotionKind::Sinusoid;
  c.heels = true;
  const SyntheticScene s = generate_scene(c, 8);
  EXPECT_EQ(s.skel.size(), 19);
  const JointRoles roles = s.skel.roles();
  for (int t = 0; t < s.motion_gt.num_frames; ++t) {
    const auto j = s.gt_pose(t).joints;
    double low = 1e9;
    for (int f : roles.feet) low = std::min(low, s.ground_gt.signed_distance(j[f]));
    EXPECT_NEAR(low, 0.0, 1e-9);
  }
}

TEST(Synth, PersonBehindMirrorIsRejected) {
  SynthConfig c = small_config();
  c.mirror_gap = 0.1;
  try {
    generate_scene(c, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PersonBehindMirror);
  }
}

TEST(Synth, InvalidConfigsThrow) {
  SynthConfig c = small_config();
  c.frames = 2;
  EXPECT_THROW(generate_scene(c, 1), Error);
  c = small_config();
  c.conf_min = 0.9;
  c.conf_max = 0.5;
  EXPECT_THROW(generate_scene(c, 1), Error);
  c = small_config();
  c.noise_sigma = -1.0;
  EXPECT_THROW(generate_scene(c, 1), Error);
}

TEST(Perturb, IdentityAndMagnitudes) {
  const SyntheticScene s = generate_scene(small_config(), 9);
  for (PerturbTarget what : {PerturbTarget::Focal, PerturbTarget::Normal, PerturbTarget::Pose}) {
    const SyntheticScene same = perturb(s, what, 0.0);
    EXPECT_EQ(same.k_gt.f, s.k_gt.f);
    EXPECT_LT((same.mirror_gt.n - s.mirror_gt.n).norm(), 1e-15);
    EXPECT_NEAR(same.mirror_gt.d, s.mirror_gt.d, 1e-12);
    EXPECT_EQ(same.motion_gt.pelvis, s.motion_gt.pelvis);
  }
  const SyntheticScene f = perturb(s, PerturbTarget::Focal, 0.05);
  EXPECT_NEAR(f.k_gt.f, 1.05 * s.k_gt.f, 1e-9);

  const SyntheticScene n = perturb(s, PerturbTarget::Normal, 1.0);
  EXPECT_NEAR(angle_deg(n.mirror_gt.n, s.mirror_gt.n), 1.0, 1e-9);
  EXPECT_NEAR(n.mirror_gt.n.dot(s.ground_gt.n), 0.0, 1e-12);  // still vertical

  const SyntheticScene p = perturb(s, PerturbTarget::Pose, 0.2);
  for (std::size_t t = 0; t < p.motion_gt.pelvis.size(); ++t) {
    EXPECT_NEAR((p.motion_gt.pelvis[t] - s.motion_gt.pelvis[t]).norm(), 0.2, 1e-12);
  }
  EXPECT_THROW(perturb(s, PerturbTarget::Focal, -0.1), Error);
}

TEST(Oracle, EmptyFieldIsBackground) {
  const SkeletonDef skel = SkeletonDef::h36m17();
  PoseParams p = PoseParams::identity(skel, 1);
  p.pelvis[0] = Vec3(0, 0, 4);
  const PosedSkeleton posed = pose_skeleton(skel, p, 0);
  const ConstantField empty(0.0, Vec3(1, 1, 1), 0.5);
  const Plane mirror = Plane::through_point(Vec3(-0.4, 0, -1).normalized(), Vec3(0, 0, 6));
  const Vec3 bg(0.3, 0.6, 0.9);
  for (double x : {-0.3, 0.0, 0.2}) {
    const Vec3 c = oracle_raymarch(empty, posed, mirror, Ray{Vec3::Zero(), Vec3(x, 0.1, 1)}, 1e-3, bg);
    EXPECT_EQ(c, bg);
  }
}

TEST(Oracle, OpaqueWallShowsItsColor) {
  const SkeletonDef skel = SkeletonDef::h36m17();
  PoseParams p = PoseParams::identity(skel, 1);
  p.pelvis[0] = Vec3(0, 0, 3);
  const PosedSkeleton posed = pose_skeleton(skel, p, 0);
  const ConstantField wall(1e5, Vec3(0.9, 0.1, 0.2), 1.0);
  const Plane mirror = Plane::through_point(Vec3(0, 0, -1), Vec3(0, 0, 8));
  const Vec3 c = oracle_raymarch(wall, posed, mirror, Ray{Vec3::Zero(), Vec3(0.05, 0, 1)}, 1e-3,
                                 Vec3(0.5, 0.5, 0.5));
  EXPECT_NEAR(c.x(), 0.9, 1e-12);
  EXPECT_NEAR(c.y(), 0.1, 1e-12);
  EXPECT_NEAR(c.z(), 0.2, 1e-12);
  EXPECT_THROW(oracle_raymarch(wall, posed, mirror, Ray{}, 0.0), Error);
}

TEST(Oracle, SeesTheReflection) {
  // Camera faces a mirror; the ball is off axis so only the bounced leg
  // of the chosen ray passes through it.
  const SkeletonDef skel = SkeletonDef::from_rest_positions({"root"}, {-1}, {Vec3::Zero()}, {});
  PoseParams p = PoseParams::identity(skel, 1);
  p.pelvis[0] = Vec3(0.5, 0, 1.0);
  const PosedSkeleton posed = pose_skeleton(skel, p, 0);
  const SphereField ball(0, Vec3::Zero(), 0.3, 1e5, Vec3(0.2, 0.8, 0.4));
  const Plane mirror = Plane::through_point(Vec3(0, 0, -1), Vec3(0, 0, 3));
  const Vec3 c = oracle_raymarch(ball, posed, mirror, Ray{Vec3::Zero(), Vec3(0.125, 0, 1)}, 1e-3);
  EXPECT_NEAR(c.y(), 0.8, 1e-9);
  const Vec3 miss = oracle_raymarch(ball, posed, mirror, Ray{Vec3::Zero(), Vec3(-0.3, 0, 1)}, 1e-3);
  EXPECT_EQ(miss, Vec3::Zero());
}

TEST(Oracle, HalvingTheStepBarelyMoves) {
  SynthConfig c = small_config();
  c.width = c.height = 96;
  c.focal = 90.0;
  const SyntheticScene s = generate_scene(c, 10);
  const AnalyticBodyField field = AnalyticBodyField::body(s.skel, s.motion_gt.lengths);
  const PosedSkeleton posed = pose_skeleton(s.skel, s.motion_gt, 12);
  const Image a = oracle_render(field, s.k_gt, s.mirror_gt, posed, 2e-3, nullptr, 4);
  const Image b = oracle_render(field, s.k_gt, s.mirror_gt, posed, 1e-3, nullptr, 4);
  double worst = 0.0, total = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    worst = std::max(worst, std::abs(a.rgb[i] - b.rgb[i]));
    total += b.rgb[i];
  }
  EXPECT_LT(worst, 0.5 / 255.0);
  EXPECT_GT(total, 1.0);
}
