#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mirrorcap/eval.hpp"
#include "mirrorcap/lift.hpp"
#include "mirrorcap/synth.hpp"

using namespace mirrorcap;

namespace {

// Smallest tree with every joint role the loss needs.
SkeletonDef tiny_skeleton() {
  return SkeletonDef::from_rest_positions(
      {"pelvis", "l_ankle", "r_ankle", "neck", "head"}, {-1, 0, 0, 0, 3},
      {Vec3(0, 0.9, 0), Vec3(0.1, 0, 0.02), Vec3(-0.1, 0, -0.01), Vec3(0.01, 1.4, 0), Vec3(0, 1.7, 0.05)},
      {{1, 2}});
}

Rot6 near_identity(std::mt19937_64& rng, double spread) {
  std::normal_distribution<double> g(0.0, spread);
  Rot6 r = identity_rot6();
  for (int i = 0; i < 6; ++i) r[i] += g(rng);
  return r;
}

// Random problem around a person 4 units in front of the camera with the
// mirror off to the side; observations are noisy projections.
LiftProblem random_problem(const SkeletonDef& skel, int frames, std::mt19937_64& rng,
                           PoseParams* truth = nullptr) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), c(0.2, 1.0);
  LiftProblem pr;
  pr.k = CameraIntrinsics::centered(900, 800, 600);
  pr.ground = Plane{Vec3(0.05, -1, 0.1).normalized(), 1.5};
  pr.ground_anchor = pr.ground.anchor();
  const Vec3 nm = Vec3(-0.8, 0.0, -0.6).normalized();
  pr.mirror_anchor = Vec3(1.5, 1.0, 4.5);
  pr.mirror = Plane::through_point(nm, pr.mirror_anchor);
  pr.skel = skel;
  pr.weights = LiftWeights{0.7, 0.3, 1.3};

  PoseParams p = PoseParams::identity(skel, frames);
  for (Rot6& t : p.theta) t = near_identity(rng, 0.3);
  for (int j = 1; j < skel.size(); ++j) p.lengths[j] *= 1.0 + 0.2 * u(rng);
  for (int t = 0; t < frames; ++t) {
    p.rot(t, 0) = matrix_to_rot6d(Eigen::AngleAxisd(3.14159, Vec3::UnitX()).toRotationMatrix()) +
                  near_identity(rng, 0.1) - identity_rot6();
    p.pelvis[t] = Vec3(0.2 * u(rng), 0.5 + 0.1 * u(rng), 4.0 + 0.2 * u(rng));
  }
  const ReflectionTransform a = reflection_matrix(pr.mirror);
  for (int t = 0; t < frames; ++t) {
    const Pose3D pose = forward_kinematics(skel, p, t);
    FrameObservation ob;
    ob.frame_idx = t;
    ob.valid = true;
    for (const Vec3& x : pose.joints) {
      ob.q.push_back(project(pr.k, x) + Vec2(5 * u(rng), 5 * u(rng)));
      ob.q_bar.push_back(project(pr.k, a.apply(x)) + Vec2(5 * u(rng), 5 * u(rng)));
      ob.w.push_back(c(rng));
      ob.w_bar.push_back(c(rng));
    }
    pr.frames.push_back(ob);
  }
  if (truth) *truth = p;
  return pr;
}

LiftState perturbed_state(const LiftProblem& pr, const PoseParams& p, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.05);
  LiftState s = LiftState::from_problem(pr, p);
  for (Rot6& t : s.poses.theta) {
    for (int i = 0; i < 6; ++i) t[i] += g(rng);
  }
  for (Vec3& v : s.poses.pelvis) v += Vec3(g(rng), g(rng), g(rng));
  for (int j = 1; j < pr.skel.size(); ++j) s.poses.lengths[j] *= 1.0 + g(rng);
  s.mirror_normal = 1.05 * pr.mirror.n + Vec3(g(rng), g(rng), g(rng));
  s.ground_normal = 0.97 * pr.ground.n + Vec3(g(rng), g(rng), g(rng));
  return s;
}

double relative_gradient_error(const LiftProblem& pr, const LiftState& s) {
  const Eigen::VectorXd analytic = pack(gradient(pr, s));
  Eigen::VectorXd x = pack(s);
  Eigen::VectorXd numeric(x.size());
  LiftState probe = s;
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    unpack(x, probe);
    const double fp = evaluate_loss(pr, probe).total();
    x[i] = keep - h;
    unpack(x, probe);
    const double fm = evaluate_loss(pr, probe).total();
    x[i] = keep;
    numeric[i] = (fp - fm) / (2.0 * h);
  }
  return (analytic - numeric).norm() / std::max(numeric.norm(), 1e-12);
}

struct SynthLift {
  SyntheticScene scene;
  LiftProblem problem;
};

SynthLift synthetic_problem(int frames, double sigma, std::uint64_t seed, double height = 1.7) {
  SynthConfig c;
  c.frames = frames;
  c.noise_sigma = sigma;
  c.person_height = height;
  SynthLift out;
  out.scene = generate_scene(c, seed);
  CalibrationResult calib;
  calib.k = out.scene.k_gt;
  calib.ground = out.scene.ground_gt;
  calib.mirror = out.scene.mirror_gt;
  calib.mirror_anchor = out.scene.mirror_gt.anchor();
  calib.camera_height = c.camera_height;
  const auto assoc = associate_sequence(out.scene.detections, out.scene.skel);
  out.problem = make_lift_problem(calib, assoc, out.scene.skel);
  return out;
}

}  // namespace

TEST(Reprojection, ExactDetectionsGiveZero) {
  std::mt19937_64 rng(1);
  const SkeletonDef skel = SkeletonDef::h36m17();
  PoseParams truth;
  LiftProblem pr = random_problem(skel, 2, rng, &truth);
  const ReflectionTransform a = reflection_matrix(pr.mirror);
  for (int t = 0; t < 2; ++t) {
    const Pose3D pose = forward_kinematics(skel, truth, t);
    for (int j = 0; j < skel.size(); ++j) {
      pr.frames[t].q[j] = project(pr.k, pose.joints[j]);
      pr.frames[t].q_bar[j] = project(pr.k, a.apply(pose.joints[j]));
    }
  }
  EXPECT_LT(reprojection_loss(pr, truth, 0), 1e-18);
  EXPECT_LT(reprojection_loss(pr, truth, 1), 1e-18);
  // Minimum of the data term: its gradient vanishes too.
  LiftProblem data_only = pr;
  data_only.weights = LiftWeights{0.0, 0.0, 0.0};
  LiftState s = LiftState::from_problem(data_only, truth);
  const LiftGradient g = gradient(data_only, s);
  for (const Vec3& v : g.pelvis) EXPECT_LT(v.norm(), 1e-6);
}

TEST(Reprojection, ZeroConfidenceIgnoresPose) {
  std::mt19937_64 rng(2);
  const SkeletonDef skel = SkeletonDef::h36m17();
  PoseParams truth;
  LiftProblem pr = random_problem(skel, 1, rng, &truth);
  for (double& w : pr.frames[0].w) w = 0.0;
  for (double& w : pr.frames[0].w_bar) w = 0.0;
  EXPECT_EQ(reprojection_loss(pr, truth, 0), 0.0);
  truth.pelvis[0] += Vec3(0.5, -0.3, 1.0);
  EXPECT_EQ(reprojection_loss(pr, truth, 0), 0.0);
}

TEST(Reprojection, ThreeFourFive) {
  const SkeletonDef skel = SkeletonDef::from_rest_positions({"pelvis"}, {-1}, {Vec3::Zero()}, {});
  LiftProblem pr;
  pr.k = CameraIntrinsics::centered(1000, 640, 480);
  pr.mirror = Plane{Vec3(-1, 0, 0), 2.0};
  pr.skel = skel;
  PoseParams p = PoseParams::identity(skel, 1);
  p.pelvis[0] = Vec3(0.1, 0.2, 3.0);
  FrameObservation ob;
  ob.valid = true;
  ob.q = {project(pr.k, p.pelvis[0]) + Vec2(3, 4)};
  ob.w = {1.0};
  ob.q_bar = {Vec2(0, 0)};
  ob.w_bar = {0.0};
  pr.frames = {ob};
  EXPECT_NEAR(reprojection_loss(pr, p, 0), 25.0, 1e-9);
}

TEST(Reprojection, PointsBehindCameraPayFinitePenalty) {
  std::mt19937_64 rng(3);
  const SkeletonDef skel = SkeletonDef::h36m17();
  PoseParams truth;
  const LiftProblem pr = random_problem(skel, 1, rng, &truth);
  truth.pelvis[0].z() = -2.0;
  const double loss = reprojection_loss(pr, truth, 0);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_GT(loss, 1e6);
}

TEST(Regularizer, LinearMotionIsSmooth) {
  std::mt19937_64 rng(4);
  const SkeletonDef skel = SkeletonDef::h36m17();
  PoseParams p;
  LiftProblem pr = random_problem(skel, 3, rng, &p);
  for (int j = 0; j < skel.size(); ++j) p.rot(1, j) = p.rot(2, j) = p.rot(0, j);
  p.pelvis[1] = p.pelvis[0] + Vec3(0.1, 0.0, 0.05);
  p.pelvis[2] = p.pelvis[0] + Vec3(0.2, 0.0, 0.1);
  // Orthogonal unit normals.
  pr.ground.n = Vec3(0, -1, 0);
  pr.mirror.n = Vec3(-0.6, 0, -0.8);
  const LiftState s = LiftState::from_problem(pr, p);
  const LossBreakdown l = evaluate_loss(pr, s);
  EXPECT_LT(l.location_smooth, 1e-24);
  EXPECT_EQ(l.orientation_smooth, 0.0);
  EXPECT_LT(l.orthogonality + l.mirror_norm + l.ground_norm, 1e-24);
}

TEST(Regularizer, MirrorNormLength) {
  std::mt19937_64 rng(5);
  const SkeletonDef skel = SkeletonDef::h36m17();
  PoseParams p;
  const LiftProblem pr = random_problem(skel, 3, rng, &p);
  LiftState s = LiftState::from_problem(pr, p);
  s.mirror_normal = Vec3(-0.6, 0, -0.8) * 1.1;
  s.ground_normal = Vec3(0, -1, 0);
  const LossBreakdown l = evaluate_loss(pr, s);
  EXPECT_NEAR(l.mirror_norm, 0.01, 1e-12);
  EXPECT_NEAR(l.orthogonality, 0.0, 1e-24);
  EXPECT_NEAR(regularizer_loss(pr, s), l.regularizer(), 0.0);
}

TEST(Regularizer, InvalidFrameBreaksStencil) {
  std::mt19937_64 rng(6);
  const SkeletonDef skel = SkeletonDef::h36m17();
  PoseParams p;
  LiftProblem pr = random_problem(skel, 5, rng, &p);
  const double full = evaluate_loss(pr, LiftState::from_problem(pr, p)).location_smooth;
  pr.frames[2].valid = false;
  // Every 3-frame window touches frame 2.
  const LossBreakdown l = evaluate_loss(pr, LiftState::from_problem(pr, p));
  EXPECT_GT(full, 0.0);
  EXPECT_EQ(l.location_smooth, 0.0);
  EXPECT_EQ(l.orientation_smooth, 0.0);
}

TEST(Regularizer, FeetUseLowerFoot) {
  std::mt19937_64 rng(7);
  const SkeletonDef skel = tiny_skeleton();
  PoseParams p;
  LiftProblem pr = random_problem(skel, 1, rng, &p);
  pr.weights.feet = 2.0;
  const Pose3D pose = forward_kinematics(skel, p, 0);
  const Vec3 g = pr.ground.n;
  const double hl = g.dot(pose.joints[1] - pr.ground_anchor);
  const double hr = g.dot(pose.joints[2] - pr.ground_anchor);
  const double low = std::min(hl, hr);
  const LossBreakdown l = evaluate_loss(pr, LiftState::from_problem(pr, p));
  EXPECT_NEAR(l.feet, 2.0 * low * low, 1e-12);
}

TEST(Gradient, MatchesFiniteDifferencesOnTinyProblems) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    PoseParams p;
    const LiftProblem pr = random_problem(tiny_skeleton(), 2 + trial % 3, rng, &p);
    const LiftState s = perturbed_state(pr, p, rng);
    EXPECT_LT(relative_gradient_error(pr, s), 1e-4) << "trial " << trial;
  }
}

TEST(Gradient, MatchesFiniteDifferencesOnFullSkeleton) {
  std::mt19937_64 rng(9);
  PoseParams p;
  const LiftProblem pr = random_problem(SkeletonDef::h36m19(), 4, rng, &p);
  const LiftState s = perturbed_state(pr, p, rng);
  EXPECT_LT(relative_gradient_error(pr, s), 1e-4);
}

TEST(Gradient, DoublingConfidenceDoublesDataGradient) {
  std::mt19937_64 rng(10);
  PoseParams p;
  LiftProblem pr = random_problem(tiny_skeleton(), 2, rng, &p);
  pr.weights = LiftWeights{0.0, 0.0, 0.0};
  LiftState s = perturbed_state(pr, p, rng);
  s.mirror_normal = pr.mirror.n;
  s.ground_normal = pr.ground.n;
  const LiftGradient g1 = gradient(pr, s);
  for (auto& ob : pr.frames) {
    for (double& w : ob.w) w *= 2.0;
    for (double& w : ob.w_bar) w *= 2.0;
  }
  const LiftGradient g2 = gradient(pr, s);
  for (std::size_t i = 0; i < g1.pelvis.size(); ++i) {
    EXPECT_LT((g2.pelvis[i] - 2.0 * g1.pelvis[i]).norm(), 1e-9 * std::max(1.0, g1.pelvis[i].norm()));
  }
  for (std::size_t i = 0; i < g1.theta.size(); ++i) {
    EXPECT_LT((g2.theta[i] - 2.0 * g1.theta[i]).norm(), 1e-9 * std::max(1.0, g1.theta[i].norm()));
  }
}

TEST(Gradient, NaNIsReported) {
  std::mt19937_64 rng(11);
  PoseParams p;
  const LiftProblem pr = random_problem(tiny_skeleton(), 2, rng, &p);
  LiftState s = LiftState::from_problem(pr, p);
  s.poses.pelvis[1].x() = std::numeric_limits<double>::quiet_NaN();
  try {
    gradient(pr, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NaNDetected);
  }
}

TEST(PackUnpack, RoundTrip) {
  std::mt19937_64 rng(12);
  PoseParams p;
  const LiftProblem pr = random_problem(tiny_skeleton(), 3, rng, &p);
  const LiftState s = perturbed_state(pr, p, rng);
  LiftState t = LiftState::from_problem(pr, PoseParams::identity(pr.skel, 3));
  unpack(pack(s), t);
  EXPECT_EQ(pack(s), pack(t));
  EXPECT_EQ(pack(s).size(), 3 * 5 * 6 + 5 + 3 * 3 + 6);
}

TEST(Optimize, NaNInitialPoseNamesTheFrame) {
  std::mt19937_64 rng(13);
  PoseParams p;
  const LiftProblem pr = random_problem(tiny_skeleton(), 3, rng, &p);
  p.pelvis[2].z() = std::numeric_limits<double>::quiet_NaN();
  try {
    optimize_sequence(pr, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NaNDetected);
    EXPECT_NE(std::string(e.what()).find("frame 2"), std::string::npos) << e.what();
  }
}

TEST(Optimize, OptimalInitDoesNotGetWorse) {
  // Without regularizers the noise-free ground truth is a global minimum.
  SynthLift s = synthetic_problem(10, 0.0, 3);
  s.problem.weights = LiftWeights{0.0, 0.0, 0.0};
  LiftOptions o;
  o.iterations = 300;
  const LiftResult r = optimize_sequence(s.problem, s.scene.motion_gt, o);
  const double initial = evaluate_loss(s.problem, LiftState::from_problem(s.problem, s.scene.motion_gt)).total();
  EXPECT_LE(r.final_loss.total(), initial);
  for (std::size_t i = 1; i < r.best_loss_history.size(); ++i) {
    EXPECT_LE(r.best_loss_history[i], r.best_loss_history[i - 1]);
  }
}

TEST(Optimize, BadStartThatCannotImproveRaisesNoDecrease) {
  std::mt19937_64 rng(14);
  PoseParams p;
  const LiftProblem pr = random_problem(tiny_skeleton(), 3, rng, &p);
  LiftOptions o;
  o.lr_rotation = o.lr_pelvis = o.lr_length = o.lr_normal = 0.0;  // frozen optimizer
  o.iterations = 100;
  try {
    optimize_sequence(pr, p, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoDecrease);
  }
}

TEST(Optimize, ZeroNoiseSequenceRecoversPose) {
  SynthLift s = synthetic_problem(30, 0.0, 1);
  const LiftResult r = optimize_sequence(s.problem, initialize_poses(s.problem));
  std::vector<Pose3D> pred, gt;
  for (int t = 0; t < 30; ++t) {
    pred.push_back(forward_kinematics(s.scene.skel, r.poses, t));
    gt.push_back(s.scene.gt_pose(t));
  }
  const MetricReport m = evaluate_sequence(pred, gt, default_joint_subset(s.scene.skel));
  EXPECT_LT(m.pa_mpjpe, 0.01 * 1.7);
  for (std::size_t i = 1; i < r.best_loss_history.size(); ++i) {
    ASSERT_LE(r.best_loss_history[i], r.best_loss_history[i - 1]);
  }
  for (double res : r.residuals) EXPECT_LT(res, 0.5);
  EXPECT_LT(std::abs(r.mirror.n.dot(r.ground.n)), 1e-3);
  EXPECT_NEAR(r.mirror.n.norm(), 1.0, 1e-6);
  EXPECT_NEAR(r.ground.n.norm(), 1.0, 1e-6);
}

TEST(Optimize, ConstantVelocityInputStaysSmooth) {
  SynthConfig c;
  c.frames = 20;
  SyntheticScene scene = generate_scene(c, 6);
  // Freeze the pose and glide the pelvis along a line.
  for (int t = 0; t < c.frames; ++t) {
    for (int j = 0; j < scene.skel.size(); ++j) scene.motion_gt.rot(t, j) = scene.motion_gt.rot(0, j);
    scene.motion_gt.pelvis[t] = scene.motion_gt.pelvis[0] + 0.01 * t * Vec3(1, 0, 0.3);
  }
  scene.detections = project_detections(scene);
  CalibrationResult calib;
  calib.k = scene.k_gt;
  calib.ground = scene.ground_gt;
  calib.mirror = scene.mirror_gt;
  calib.mirror_anchor = scene.mirror_gt.anchor();
  const LiftProblem pr = make_lift_problem(calib, associate_sequence(scene.detections, scene.skel), scene.skel);
  const LiftResult r = optimize_sequence(pr, initialize_poses(pr));
  double worst = 0.0;
  for (int t = 1; t + 1 < c.frames; ++t) {
    const Pose3D a = forward_kinematics(scene.skel, r.poses, t - 1);
    const Pose3D b = forward_kinematics(scene.skel, r.poses, t);
    const Pose3D d = forward_kinematics(scene.skel, r.poses, t + 1);
    for (int j = 0; j < scene.skel.size(); ++j) {
      worst = std::max(worst, (d.joints[j] - 2.0 * b.joints[j] + a.joints[j]).norm());
    }
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Optimize, ScaleAmbiguity) {
  SynthLift a = synthetic_problem(12, 0.0, 2, 1.7);
  SynthLift b = synthetic_problem(12, 0.0, 2, 1.7);
  // Same images, camera height and person both scaled by s.
  const double s = 1.3;
  b.problem.ground.d *= s;
  b.problem.ground_anchor *= s;
  b.problem.mirror.d *= s;
  b.problem.mirror_anchor *= s;
  b.problem.skel = SkeletonDef::h36m17(1.7 * s);
  const LiftResult ra = optimize_sequence(a.problem, initialize_poses(a.problem));
  const LiftResult rb = optimize_sequence(b.problem, initialize_poses(b.problem));
  for (int j = 1; j < a.problem.skel.size(); ++j) {
    EXPECT_NEAR(rb.poses.lengths[j] / ra.poses.lengths[j], s, 0.02 * s);
  }
  EXPECT_NEAR(rb.poses.pelvis[0].z() / ra.poses.pelvis[0].z(), s, 0.02 * s);
  std::vector<Pose3D> pa, pb, gt;
  for (int t = 0; t < 12; ++t) {
    pa.push_back(forward_kinematics(a.scene.skel, ra.poses, t));
    pb.push_back(forward_kinematics(b.problem.skel, rb.poses, t));
    gt.push_back(a.scene.gt_pose(t));
  }
  const auto subset = default_joint_subset(a.scene.skel);
  EXPECT_NEAR(evaluate_sequence(pa, gt, subset).pa_mpjpe, evaluate_sequence(pb, gt, subset).pa_mpjpe,
              2e-3);
}

TEST(Initialize, LengthsAndStandingPoses) {
  SynthLift s = synthetic_problem(10, 0.0, 4);
  const auto lengths = initial_bone_lengths(s.problem);
  const SkeletonDef& skel = s.scene.skel;
  for (int j = 1; j < skel.size(); ++j) {
    EXPECT_GT(lengths[j], 0.0);
    EXPECT_LT(lengths[j], 1.0);
  }
  for (const auto& [l, r] : skel.flip_pairs) EXPECT_EQ(lengths[l], lengths[r]);
  PoseParams init = initialize_poses(s.problem);
  EXPECT_NO_THROW(init.validate(skel));

  s.problem.frames[4].valid = false;
  init = initialize_poses(s.problem);
  for (int j = 0; j < skel.size(); ++j) {
    EXPECT_TRUE(init.rot(4, j) == init.rot(3, j) || init.rot(4, j) == init.rot(5, j));
  }
}
