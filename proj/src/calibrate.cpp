#include "mirrorcap/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "mirrorcap/optim.hpp"

namespace mirrorcap {

namespace {

constexpr double kPenaltyPx = 1e3;

double mean_conf(const Detection2D& det) {
  if (det.conf.empty()) return 0.0;
  return std::accumulate(det.conf.begin(), det.conf.end(), 0.0) / det.conf.size();
}

Detection2D apply_flip(const Detection2D& det, const std::vector<int>& flip) {
  Detection2D out = det;
  for (std::size_t j = 0; j < flip.size(); ++j) {
    out.joints[j] = det.joints[flip[j]];
    out.conf[j] = det.conf[flip[j]];
  }
  return out;
}

Vec3 ground_normal_from(double a, double b) { return Vec3(a, -1.0, b).normalized(); }

// Head-pixel residuals for a candidate (f, ground normal, camera height).
Eigen::VectorXd head_residuals(std::span<const HeadAnklePair> obs, double f, double o1, double o2,
                               const Vec3& n, double h, double person_height) {
  Eigen::VectorXd r(2 * static_cast<Eigen::Index>(obs.size()));
  const auto on_ground = [&](const Vec2& q, Vec3& out) {
    const Vec3 dir((q.x() - o1) / f, (q.y() - o2) / f, 1.0);
    const double denom = n.dot(dir);
    if (!(denom < -1e-9)) return false;
    out = (-h / denom) * dir;
    return true;
  };
  for (std::size_t i = 0; i < obs.size(); ++i) {
    Vec3 foot, other;
    bool ok = on_ground(obs[i].ankle, foot);
    if (ok && obs[i].other_ankle) {
      ok = on_ground(*obs[i].other_ankle, other);
      foot = 0.5 * (foot + other);
    }
    Vec2 top_px(0, 0);
    if (ok) {
      const Vec3 top = foot + person_height * n;
      ok = top.z() > 1e-6;
      if (ok) top_px = Vec2(f * top.x() / top.z() + o1, f * top.y() / top.z() + o2);
    }
    if (ok) {
      r.segment<2>(2 * static_cast<Eigen::Index>(i)) = top_px - obs[i].head;
    } else {
      r.segment<2>(2 * static_cast<Eigen::Index>(i)) = Vec2(kPenaltyPx, kPenaltyPx);
    }
  }
  return r;
}


// Ground orientation and height with the focal length held fixed.
optim::LmResult fit_ground_fixed_focal(std::span<const HeadAnklePair> obs, double f, double o1,
                                       double o2, double person_height) {
  const auto fixed_f = [&](const Eigen::VectorXd& x) {
    return head_residuals(obs, f, o1, o2, ground_normal_from(x[0], x[1]), std::exp(x[2]),
                          person_height);
  };
  Eigen::VectorXd x0(3);
  x0 << 0.0, 0.0, std::log(person_height);
  return optim::levenberg_marquardt(fixed_f, x0);
}

// Marginal standard error of x[0] from the Gauss-Newton covariance.
template <class ResidualFn>
double marginal_sigma(const ResidualFn& fn, const Eigen::VectorXd& x, double cost) {
  const Eigen::VectorXd r = fn(x);
  const Eigen::Index dof = r.size() - x.size();
  if (dof <= 0) return std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd jac = optim::numeric_jacobian(fn, x, r.size());
  const Eigen::MatrixXd rest = jac.rightCols(x.size() - 1);
  const Eigen::VectorXd col = jac.col(0);
  // Part of the focal column the other parameters cannot absorb.
  const Eigen::VectorXd proj = rest * rest.colPivHouseholderQr().solve(col);
  const double info = (col - proj).squaredNorm();
  if (!(info > 1e-12 * std::max(col.squaredNorm(), 1e-300))) {
    return std::numeric_limits<double>::infinity();
  }
  const double noise_var = std::max(2.0 * cost / static_cast<double>(dof), 1e-12);
  return std::sqrt(noise_var / info);
}

}  // namespace

FrameAssociation associate_real_mirror(std::span<const Detection2D> frame, const SkeletonDef& skel,
                                       const CalibrationConfig& config) {
  if (frame.size() != 2) {
    std::ostringstream os;
    os << "expected 2 detections, got " << frame.size();
    throw Error(ErrorCode::WrongPersonCount, os.str());
  }
  const JointRoles roles = skel.roles();
  double dist[2];
  for (int i = 0; i < 2; ++i) {
    const Detection2D& det = frame[i];
    if (det.joints.size() != static_cast<std::size_t>(skel.size()) ||
        det.conf.size() != det.joints.size()) {
      throw Error(ErrorCode::DimensionMismatch, "detection does not match the joint schema");
    }
    if (det.conf[roles.neck] < config.min_joint_conf ||
        det.conf[roles.pelvis] < config.min_joint_conf) {
      throw Error(ErrorCode::AmbiguousAssociation, "neck or pelvis keypoint below confidence cutoff");
    }
    dist[i] = (det.joints[roles.neck] - det.joints[roles.pelvis]).norm();
  }
  const double larger = std::max(dist[0], dist[1]);
  if (!(larger > 0.0) || std::abs(dist[0] - dist[1]) < config.ambiguity_threshold * larger) {
    std::ostringstream os;
    os << "neck-pelvis distances " << dist[0] << " and " << dist[1] << " px are too close";
    throw Error(ErrorCode::AmbiguousAssociation, os.str());
  }
  FrameAssociation a;
  a.real_idx = dist[0] > dist[1] ? 0 : 1;
  a.mirror_idx = 1 - a.real_idx;
  a.flip = skel.flip_permutation();
  return a;
}

AssociatedFrame associate_frame(std::span<const Detection2D> frame, int frame_idx,
                                const SkeletonDef& skel, const CalibrationConfig& config) {
  AssociatedFrame out;
  out.frame_idx = frame_idx;
  try {
    const FrameAssociation a = associate_real_mirror(frame, skel, config);
    out.real = frame[a.real_idx];
    out.mirror = apply_flip(frame[a.mirror_idx], a.flip);
    if (mean_conf(out.real) < config.min_mean_conf || mean_conf(out.mirror) < config.min_mean_conf) {
      out.invalid_reason = "mean joint confidence below cutoff";
      return out;
    }
    out.valid = true;
  } catch (const Error& e) {
    out.invalid_reason = e.what();
  }
  return out;
}

std::optional<Vec2> ankle_pixel(const Detection2D& det, const JointRoles& roles, double min_conf) {
  const double cl = det.conf[roles.l_ankle];
  const double cr = det.conf[roles.r_ankle];
  const bool use_l = cl >= min_conf;
  const bool use_r = cr >= min_conf;
  if (use_l && use_r) {
    return Vec2((cl * det.joints[roles.l_ankle] + cr * det.joints[roles.r_ankle]) / (cl + cr));
  }
  if (use_l) return det.joints[roles.l_ankle];
  if (use_r) return det.joints[roles.r_ankle];
  return std::nullopt;
}

FocalGroundResult estimate_focal_ground(std::span<const HeadAnklePair> observations,
                                        double person_height, int width, int height,
                                        const CalibrationConfig& config) {
  if (!(person_height > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "person height must be positive");
  }
  std::vector<HeadAnklePair> upright;
  for (const HeadAnklePair& p : observations) {
    if (p.head.y() < p.ankle.y()) upright.push_back(p);
  }
  if (static_cast<int>(upright.size()) < config.min_observations) {
    std::ostringstream os;
    os << "only " << upright.size() << " upright observations, need " << config.min_observations;
    throw Error(ErrorCode::DegenerateMotion, os.str());
  }
  Vec2 lo = upright.front().ankle, hi = lo;
  for (const HeadAnklePair& p : upright) {
    lo = lo.cwiseMin(p.ankle);
    hi = hi.cwiseMax(p.ankle);
  }
  if ((hi - lo).maxCoeff() <= 5.0) {
    throw Error(ErrorCode::DegenerateMotion, "ankle pixels lie within a 5 px cluster");
  }

  const CameraIntrinsics base = CameraIntrinsics::centered(1.0, width, height);
  const double o1 = base.o1, o2 = base.o2;
  const std::span<const HeadAnklePair> obs(upright);

  optim::LmResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (int g = 0; g <= 10; ++g) {
    const double f0 = (0.5 + 0.25 * g) * width;
    const optim::LmResult stage1 = fit_ground_fixed_focal(obs, f0, o1, o2, person_height);

    const auto joint = [&](const Eigen::VectorXd& x) {
      return head_residuals(obs, std::exp(x[0]), o1, o2, ground_normal_from(x[1], x[2]),
                            std::exp(x[3]), person_height);
    };
    Eigen::VectorXd x1(4);
    x1 << std::log(f0), stage1.x[0], stage1.x[1], stage1.x[2];
    const optim::LmResult stage2 = optim::levenberg_marquardt(joint, x1);
    if (stage2.cost < best.cost) best = stage2;
  }

  const auto joint = [&](const Eigen::VectorXd& x) {
    return head_residuals(obs, std::exp(x[0]), o1, o2, ground_normal_from(x[1], x[2]),
                          std::exp(x[3]), person_height);
  };
  FocalGroundResult out;
  out.log_focal_sigma = marginal_sigma(joint, best.x, best.cost);
  out.k = CameraIntrinsics::centered(std::exp(best.x[0]), width, height);
  out.camera_height = std::exp(best.x[3]);
  out.ground.n = ground_normal_from(best.x[1], best.x[2]);
  out.ground.d = out.camera_height;
  out.residual_rms = std::sqrt(2.0 * best.cost / static_cast<double>(obs.size()));
  if (!std::isfinite(out.residual_rms) || out.residual_rms > config.max_residual_rms) {
    std::ostringstream os;
    os << "focal/ground fit residual " << out.residual_rms << " px exceeds "
       << config.max_residual_rms << " px";
    throw Error(ErrorCode::NoConvergence, os.str());
  }
  return out;
}

MirrorInit init_mirror(const CameraIntrinsics& k, const Plane& ground,
                       std::span<const AssociatedFrame> frames, const SkeletonDef& skel,
                       double min_conf) {
  const JointRoles roles = skel.roles();
  const Vec3 up = ground.n.normalized();
  Vec3 normal_sum = Vec3::Zero();
  Vec3 anchor_sum = Vec3::Zero();
  int used = 0;
  for (const AssociatedFrame& fr : frames) {
    if (!fr.valid) continue;
    Vec3 p = Vec3::Zero(), pbar = Vec3::Zero();
    double wsum = 0.0;
    for (const int j : {roles.l_ankle, roles.r_ankle}) {
      const double w = std::min(fr.real.conf[j], fr.mirror.conf[j]);
      if (w < min_conf) continue;
      p += w * backproject_to_plane(k, fr.real.joints[j], ground);
      pbar += w * backproject_to_plane(k, fr.mirror.joints[j], ground);
      wsum += w;
    }
    if (wsum <= 0.0) continue;
    p /= wsum;
    pbar /= wsum;
    const Vec3 diff = p - pbar;
    if (diff.norm() < 1e-6) {
      std::ostringstream os;
      os << "real and mirrored ankles coincide in frame " << fr.frame_idx;
      throw Error(ErrorCode::AnklesCoincide, os.str());
    }
    const Vec3 horizontal = diff - diff.dot(up) * up;
    if (horizontal.norm() < 1e-12) continue;
    normal_sum += horizontal.normalized();
    anchor_sum += 0.5 * (p + pbar);
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::NoValidFrames, "no valid frame with usable ankles");

  Vec3 n = normal_sum - normal_sum.dot(up) * up;
  if (n.norm() < 1e-12) throw Error(ErrorCode::DegenerateGeometry, "mirror normals cancel out");
  n.normalize();
  MirrorInit out;
  out.anchor = anchor_sum / used;
  out.mirror = Plane::through_point(n, out.anchor);
  return out;
}

std::vector<AssociatedFrame> associate_sequence(const std::vector<std::vector<Detection2D>>& frames,
                                               const SkeletonDef& skel,
                                               const CalibrationConfig& config) {
  std::vector<AssociatedFrame> assoc;
  assoc.reserve(frames.size());
  int wrong_count = 0, ambiguous = 0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    AssociatedFrame fr = associate_frame(frames[t], static_cast<int>(t), skel, config);
    if (!fr.valid) ++(frames[t].size() != 2 ? wrong_count : ambiguous);
    assoc.push_back(std::move(fr));
  }
  const bool any_valid =
      std::any_of(assoc.begin(), assoc.end(), [](const AssociatedFrame& f) { return f.valid; });
  if (!any_valid) {
    std::ostringstream os;
    os << "no valid frame out of " << frames.size();
    if (!assoc.empty()) os << " (e.g. frame 0: " << assoc.front().invalid_reason << ")";
    if (frames.empty()) throw Error(ErrorCode::NoValidFrames, os.str());
    throw Error(wrong_count >= ambiguous ? ErrorCode::WrongPersonCount
                                         : ErrorCode::AmbiguousAssociation,
                os.str());
  }
  return assoc;
}

CalibrationResult calibrate(const std::vector<std::vector<Detection2D>>& frames,
                            const SkeletonDef& skel, int width, int height,
                            const CalibrationConfig& config) {
  return calibrate(associate_sequence(frames, skel, config), skel, width, height, config);
}

CalibrationResult calibrate(const std::vector<AssociatedFrame>& assoc, const SkeletonDef& skel,
                            int width, int height, const CalibrationConfig& config) {
  const JointRoles roles = skel.roles();
  CalibrationResult out;
  out.per_frame_valid.reserve(assoc.size());
  std::vector<HeadAnklePair> pairs;
  for (const AssociatedFrame& fr : assoc) {
    out.per_frame_valid.push_back(fr.valid);
    if (!fr.valid) continue;
    for (const Detection2D* det : {&fr.real, &fr.mirror}) {
      if (det->conf[roles.head] < config.min_joint_conf) continue;
      const bool l = det->conf[roles.l_ankle] >= config.min_joint_conf;
      const bool r = det->conf[roles.r_ankle] >= config.min_joint_conf;
      if (l && r) {
        pairs.push_back({det->joints[roles.head], det->joints[roles.l_ankle],
                         det->joints[roles.r_ankle]});
      } else if (l || r) {
        pairs.push_back({det->joints[roles.head], det->joints[l ? roles.l_ankle : roles.r_ankle],
                         std::nullopt});
      }
    }
  }
  if (std::none_of(assoc.begin(), assoc.end(), [](const AssociatedFrame& f) { return f.valid; })) {
    throw Error(ErrorCode::NoValidFrames, "no associated frame to calibrate from");
  }

  const FocalGroundResult fg =
      estimate_focal_ground(pairs, config.person_height, width, height, config);
  out.k = fg.k;
  out.ground = fg.ground;
  out.camera_height = fg.camera_height;
  out.focal_residual_rms = fg.residual_rms;

  const MirrorInit mi = init_mirror(out.k, out.ground, assoc, skel, config.min_joint_conf);
  out.mirror = mi.mirror;
  out.mirror_anchor = mi.anchor;
  if (out.mirror.d < 0.0) {
    throw Error(ErrorCode::DegenerateGeometry, "camera lies behind the estimated mirror plane");
  }
  out.view_angle_deg = view_angle_to_plane_deg(out.mirror);

  // A poorly determined focal length moves the backprojected ankles, and with
  // them the mirror normal. Every focal length the data cannot rule out has to
  // pass the view-angle check.
  const double spread = std::min(config.focal_sigma_multiple * fg.log_focal_sigma,
                                 std::log(config.max_focal_factor));
  std::vector<HeadAnklePair> upright;
  for (const HeadAnklePair& p : pairs) {
    if (p.head.y() < p.ankle.y()) upright.push_back(p);
  }
  const auto out_of_range = [&](double angle) {
    return angle < config.min_view_angle_deg || angle > config.max_view_angle_deg;
  };
  double worst_angle = out.view_angle_deg;
  double worst_f = out.k.f;
  for (const double sign : {-1.0, 1.0}) {
    if (out_of_range(worst_angle) || !(spread > 0.0)) break;
    const CameraIntrinsics k = CameraIntrinsics::centered(out.k.f * std::exp(sign * spread),
                                                          width, height);
    const optim::LmResult g =
        fit_ground_fixed_focal(upright, k.f, k.o1, k.o2, config.person_height);
    Plane ground;
    ground.n = ground_normal_from(g.x[0], g.x[1]);
    ground.d = std::exp(g.x[2]);
    double angle = 0.0;
    try {
      const MirrorInit alt = init_mirror(k, ground, assoc, skel, config.min_joint_conf);
      angle = alt.mirror.d < 0.0 ? 0.0 : view_angle_to_plane_deg(alt.mirror);
    } catch (const Error&) {
      angle = 0.0;
    }
    if (out_of_range(angle)) {
      worst_angle = angle;
      worst_f = k.f;
    }
  }
  if (out_of_range(worst_angle)) {
    std::ostringstream os;
    os << "camera axis makes " << worst_angle << " deg with the mirror";
    if (worst_f != out.k.f) {
      os << " at the still plausible f=" << worst_f << " px (fit f=" << out.k.f << " px)";
    }
    os << "; triangulation is unreliable outside [" << config.min_view_angle_deg << ", "
       << config.max_view_angle_deg << "] deg";
    throw Error(ErrorCode::DegenerateGeometry, os.str());
  }
  return out;
}

}  // namespace mirrorcap
