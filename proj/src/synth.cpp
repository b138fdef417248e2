#include "mirrorcap/synth.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace mirrorcap {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct SceneFrame {
  Vec3 up;
  Vec3 forward;  // horizontal view direction
  Vec3 right;
  Vec3 camera_foot;
};

SceneFrame scene_frame(const SynthConfig& c) {
  const double t = c.camera_tilt_deg * kDeg;
  SceneFrame s;
  s.up = Vec3(0.0, -std::cos(t), -std::sin(t));
  s.forward = (Vec3::UnitZ() - s.up.z() * s.up).normalized();
  s.right = Vec3::UnitX();
  s.camera_foot = -c.camera_height * s.up;
  return s;
}

// Lowest foot of the posed frame placed on the ground (feet = true) or the
// ankle midpoint placed at `ground_point` (feet = false).
void place_on_ground(const SkeletonDef& skel, PoseParams& pose, int frame, const Plane& ground,
                     const Vec3& ground_point, bool lowest_foot) {
  const JointRoles roles = skel.roles();
  pose.pelvis[frame] = Vec3::Zero();
  const PosedSkeleton posed = pose_skeleton(skel, pose, frame);
  const Vec3 mid = 0.5 * (posed.pos[roles.l_ankle] + posed.pos[roles.r_ankle]);
  Vec3 shift = ground_point - mid;
  if (lowest_foot) {
    double low = std::numeric_limits<double>::infinity();
    for (int f : roles.feet) low = std::min(low, ground.signed_distance(posed.pos[f] + shift));
    shift -= low * ground.n;
  }
  pose.pelvis[frame] = shift;
}

}  // namespace

void SynthConfig::validate() const {
  if (frames < 3) throw Error(ErrorCode::InvalidArgument, "synthetic scenes need at least 3 frames");
  if (!(focal > 0.0)) throw Error(ErrorCode::InvalidArgument, "focal length must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "image size must be positive");
  if (!(camera_height > 0.0) || !(person_height > 0.0) || !(mirror_gap > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "camera height, person height and mirror gap must be positive");
  }
  if (noise_sigma < 0.0 || dropout < 0.0 || dropout > 1.0 || conf_min < 0.0 || conf_max > 1.0 ||
      conf_min > conf_max) {
    throw Error(ErrorCode::InvalidArgument, "noise and confidence settings out of range");
  }
}

std::vector<std::vector<Detection2D>> project_detections(const SyntheticScene& scene) {
  const SkeletonDef& skel = scene.skel;
  const ReflectionTransform refl = reflection_matrix(scene.mirror_gt);
  const std::vector<int> flip = skel.flip_permutation();
  std::vector<std::vector<Detection2D>> out(static_cast<std::size_t>(scene.motion_gt.num_frames));
  for (int t = 0; t < scene.motion_gt.num_frames; ++t) {
    const std::vector<Vec3> joints = forward_kinematics(skel, scene.motion_gt, t).joints;
    Detection2D real, mirror;
    real.frame_idx = mirror.frame_idx = t;
    real.person_idx = 0;
    mirror.person_idx = 1;
    for (int j = 0; j < skel.size(); ++j) {
      if (scene.mirror_gt.signed_distance(joints[j]) <= 0.0) {
        std::ostringstream os;
        os << "joint '" << skel.joint_names[j] << "' crosses the mirror in frame " << t;
        throw Error(ErrorCode::PersonBehindMirror, os.str());
      }
      real.joints.push_back(project(scene.k_gt, joints[j]));
      mirror.joints.push_back(project(scene.k_gt, refl.apply(joints[flip[j]])));
    }
    real.conf.assign(joints.size(), 1.0);
    mirror.conf.assign(joints.size(), 1.0);
    out[t] = {real, mirror};
  }
  return out;
}

SyntheticScene generate_scene(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticScene scene;
  scene.seed = seed;
  scene.person_height = config.person_height;
  scene.noise_sigma = config.noise_sigma;
  scene.k_gt = CameraIntrinsics::centered(config.focal, config.width, config.height);
  scene.skel = config.heels ? SkeletonDef::h36m19(config.person_height)
                            : SkeletonDef::h36m17(config.person_height);

  const SceneFrame sf = scene_frame(config);
  scene.ground_gt = Plane::through_point(sf.up, sf.camera_foot);
  const double yaw = config.mirror_yaw_deg * kDeg;
  const Vec3 n_m = -(std::cos(yaw) * sf.forward + std::sin(yaw) * sf.right);
  const Vec3 center =
      sf.camera_foot + config.person_distance * sf.forward + config.person_lateral * sf.right;
  scene.mirror_gt.n = n_m;
  scene.mirror_gt.d = config.mirror_gap - n_m.dot(center);
  const Vec3 along = sf.up.cross(n_m).normalized();

  const SkeletonDef& skel = scene.skel;
  const int frames = config.frames;
  const int n = skel.size();
  PoseParams& pose = scene.motion_gt;
  pose = PoseParams::identity(skel, frames);

  // Per-joint sinusoid parameters, drawn once per scene.
  struct Wave {
    Vec3 axis;
    double freq, phase, amp;
  };
  std::vector<Wave> waves(static_cast<std::size_t>(n));
  for (Wave& w : waves) {
    Vec3 a(gauss(rng), gauss(rng), gauss(rng));
    w.axis = a.norm() > 1e-6 ? a.normalized() : Vec3::UnitX();
    w.freq = 2.0 * std::numbers::pi / (40.0 + 40.0 * unit(rng));
    w.phase = 2.0 * std::numbers::pi * unit(rng);
    w.amp = config.joint_amplitude_deg * kDeg * (0.5 + 0.5 * unit(rng));
  }
  const double loop = 2.0 * std::numbers::pi / std::max(frames, 60);
  const double yaw_phase = 2.0 * std::numbers::pi * unit(rng);
  const int l_sh = skel.find("l_shoulder"), r_sh = skel.find("r_shoulder");

  for (int t = 0; t < frames; ++t) {
    const Vec3 ground_point = center +
                              config.path_radius * std::sin(loop * t) * along +
                              0.5 * config.path_radius * std::sin(2.0 * loop * t) * n_m;
    const double body_yaw = 0.6 * std::sin(loop * t + yaw_phase);
    pose.rot(t, 0) = matrix_to_rot6d(upright_orientation(scene.ground_gt, body_yaw));
    if (config.motion == MotionKind::Pedestrian) {
      const double swing = config.arm_swing_deg * kDeg * std::sin(3.0 * loop * t);
      if (l_sh >= 0) {
        pose.rot(t, l_sh) = matrix_to_rot6d(Eigen::AngleAxisd(swing, Vec3::UnitX()).toRotationMatrix());
      }
      if (r_sh >= 0) {
        pose.rot(t, r_sh) = matrix_to_rot6d(Eigen::AngleAxisd(-swing, Vec3::UnitX()).toRotationMatrix());
      }
      place_on_ground(skel, pose, t, scene.ground_gt, ground_point, false);
    } else {
      for (int j = 1; j < n; ++j) {
        const Wave& w = waves[j];
        const double angle = w.amp * std::sin(w.freq * t + w.phase);
        pose.rot(t, j) = matrix_to_rot6d(Eigen::AngleAxisd(angle, w.axis).toRotationMatrix());
      }
      place_on_ground(skel, pose, t, scene.ground_gt, ground_point, true);
    }
  }

  scene.detections = project_detections(scene);
  const double margin_x = 0.1 * config.width, margin_y = 0.1 * config.height;
  for (auto& frame : scene.detections) {
    for (Detection2D& det : frame) {
      for (std::size_t j = 0; j < det.joints.size(); ++j) {
        Vec2& q = det.joints[j];
        if (q.x() < -margin_x || q.x() > config.width + margin_x || q.y() < -margin_y ||
            q.y() > config.height + margin_y) {
          std::ostringstream os;
          os << "keypoint leaves the image in frame " << det.frame_idx << " at (" << q.x() << ", "
             << q.y() << ")";
          throw Error(ErrorCode::InvalidArgument, os.str());
        }
        double c = config.conf_min + (config.conf_max - config.conf_min) * unit(rng);
        double sigma = config.noise_sigma;
        if (config.correlated_confidence) sigma *= 1.5 - c;
        q += sigma * Vec2(gauss(rng), gauss(rng));
        if (unit(rng) < config.dropout) c = 0.0;
        det.conf[j] = c;
      }
    }
    if (unit(rng) < 0.5) std::swap(frame[0], frame[1]);
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i].person_idx = static_cast<int>(i);
  }
  return scene;
}

SyntheticScene perturb(const SyntheticScene& scene, PerturbTarget what, double magnitude) {
  if (magnitude < 0.0) throw Error(ErrorCode::InvalidArgument, "perturbation magnitude must be >= 0");
  SyntheticScene out = scene;
  switch (what) {
    case PerturbTarget::Focal:
      out.k_gt.f = scene.k_gt.f * (1.0 + magnitude);
      break;
    case PerturbTarget::Normal: {
      const Vec3 foot = scene.ground_gt.anchor();
      const Vec3 anchor = foot - scene.mirror_gt.signed_distance(foot) * scene.mirror_gt.n;
      const Vec3 n = Eigen::AngleAxisd(magnitude * kDeg, scene.ground_gt.n) * scene.mirror_gt.n;
      out.mirror_gt = Plane::through_point(n, anchor);
      break;
    }
    case PerturbTarget::Pose: {
      const Vec3 along = scene.ground_gt.n.cross(scene.mirror_gt.n).normalized();
      for (Vec3& p : out.motion_gt.pelvis) p += magnitude * along;
      break;
    }
  }
  return out;
}

namespace {

void march(const Ray& ray, double t0, double t1, double step, std::vector<Vec3>& pos,
           std::vector<double>& deltas) {
  const double speed = ray.dir.norm();
  const double length = (t1 - t0) * speed;
  if (!(length > 0.0)) return;
  const auto count = static_cast<std::size_t>(std::ceil(length / step));
  const double dt = (t1 - t0) / static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) {
    pos.push_back(ray.at(t0 + (static_cast<double>(i) + 0.5) * dt));
    deltas.push_back(dt * speed);
  }
}

}  // namespace

Vec3 oracle_raymarch(const RadianceField& field, const PosedSkeleton& posed, const Plane& mirror,
                     const Ray& ray, double step, const Vec3& background) {
  if (!(step > 0.0)) throw Error(ErrorCode::InvalidArgument, "march step must be positive");
  const Aabb box = field.support(posed);
  std::vector<Vec3> pos;
  std::vector<double> deltas;

  Ray direct = ray;
  const auto t_s = intersect(ray, mirror);
  if (t_s) direct.t_far = *t_s;
  if (const auto span = box.clip(direct)) march(direct, span->first, span->second, step, pos, deltas);
  if (t_s) {
    Ray bounce;
    bounce.origin = ray.at(*t_s);
    bounce.dir = ray.dir - 2.0 * mirror.n.dot(ray.dir) * mirror.n;
    bounce.t_near = 0.0;
    if (const auto span = box.clip(bounce)) march(bounce, span->first, span->second, step, pos, deltas);
  }
  if (pos.empty()) return background;

  const BoneEncoding enc = bone_relative_encode(pos, posed);
  std::vector<double> sigma(pos.size()), rgb(3 * pos.size());
  field.evaluate(enc, sigma.data(), rgb.data());
  const RayColor rc = integrate(sigma.data(), rgb.data(), deltas.data(), pos.size());
  return rc.color + (1.0 - rc.alpha) * background;
}

Image oracle_render(const RadianceField& field, const CameraIntrinsics& k, const Plane& mirror,
                    const PosedSkeleton& posed, double step, const Image* background, int threads) {
  Image out(k.width, k.height);
  if (background && (background->width != k.width || background->height != k.height)) {
    throw Error(ErrorCode::DimensionMismatch, "background does not match the camera image size");
  }
  parallel_rows(k.height, threads, [&](int y) {
    for (int x = 0; x < k.width; ++x) {
      Ray r;
      r.dir = Vec3((x + 0.5 - k.o1) / k.f, (y + 0.5 - k.o2) / k.f, 1.0);
      const Vec3 bg = background ? Vec3(background->at(x, y)[0], background->at(x, y)[1],
                                        background->at(x, y)[2])
                                 : Vec3::Zero();
      const Vec3 c = oracle_raymarch(field, posed, mirror, r, step, bg);
      double* px = out.at(x, y);
      for (int ch = 0; ch < 3; ++ch) px[ch] = c[ch];
    }
  });
  return out;
}

}  // namespace mirrorcap
