#include "mirrorcap/lift.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mirrorcap/kernels.hpp"

namespace mirrorcap {

namespace {

struct FrameKinematics {
  std::vector<Mat3> local;  // M(theta_j)
  std::vector<Mat3> world;  // accumulated rotation of joint j's frame
  std::vector<Vec3> pos;
};

FrameKinematics run_fk(const SkeletonDef& skel, const PoseParams& pose, int frame) {
  const int n = skel.size();
  FrameKinematics fk;
  fk.local.resize(n);
  fk.world.resize(n);
  fk.pos.resize(n);
  for (int j = 0; j < n; ++j) fk.local[j] = rot6d_to_matrix(pose.rot(frame, j));
  fk.world[0] = fk.local[0];
  fk.pos[0] = pose.pelvis[frame];
  for (int j = 1; j < n; ++j) {
    const int p = skel.parents[j];
    fk.pos[j] = fk.pos[p] + fk.world[p] * (pose.lengths[j] * skel.v_ref[j]);
    fk.world[j] = fk.world[p] * fk.local[j];
  }
  return fk;
}

// Accumulates dL/dtheta, dL/dlength and dL/dpelvis for one frame given
// dL/dpos for every joint. grad_pos is consumed as scratch.
void fk_backward(const SkeletonDef& skel, const PoseParams& pose, int frame,
                 const FrameKinematics& fk, std::vector<Vec3>& grad_pos, LiftGradient& grad) {
  const int n = skel.size();
  std::vector<Mat3> grad_world(n, Mat3::Zero());
  for (int j = n - 1; j >= 1; --j) {
    const int p = skel.parents[j];
    const Vec3& g = grad_pos[j];  // complete: children were folded in already
    grad.lengths[j] += g.dot(fk.world[p] * skel.v_ref[j]);
    grad_world[p] += g * (pose.lengths[j] * skel.v_ref[j]).transpose();
    grad_world[p] += grad_world[j] * fk.local[j].transpose();
    const Mat3 grad_local = fk.world[p].transpose() * grad_world[j];
    grad.theta[static_cast<std::size_t>(frame) * n + j] +=
        rot6d_backward(pose.rot(frame, j), grad_local);
    grad_pos[p] += g;
  }
  grad.pelvis[frame] += grad_pos[0];
  grad.theta[static_cast<std::size_t>(frame) * n] += rot6d_backward(pose.rot(frame, 0), grad_world[0]);
}

struct MirrorGeom {
  Vec3 n_hat;
  double norm;
  Vec3 anchor;
  Vec3 reflect(const Vec3& p) const { return p - 2.0 * n_hat.dot(p - anchor) * n_hat; }
};

MirrorGeom mirror_geom(const Vec3& raw_normal, const Vec3& anchor) {
  const double len = raw_normal.norm();
  return {raw_normal / len, len, anchor};
}

// Weighted squared reprojection error of `pts` against `obs`; when grad is
// non-null adds dL/dpts. Points nearer than the depth floor pay a barrier.
double project_term(const LiftProblem& pr, const std::vector<Vec3>& pts,
                    const std::vector<Vec2>& obs, const std::vector<double>& w,
                    std::vector<Vec3>* grad) {
  const std::size_t n = pts.size();
  thread_local std::vector<double> buf;
  buf.resize(5 * n);
  double* xs = buf.data();
  double* ys = xs + n;
  double* zs = ys + n;
  double* us = zs + n;
  double* vs = us + n;
  double loss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    xs[j] = pts[j].x();
    ys[j] = pts[j].y();
    const double z = pts[j].z();
    if (z < pr.depth_floor) {
      const double gap = pr.depth_floor - z;
      loss += pr.barrier_weight * gap * gap;
      if (grad) (*grad)[j].z() -= 2.0 * pr.barrier_weight * gap;
      zs[j] = pr.depth_floor;
    } else {
      zs[j] = z;
    }
  }
  kernels::active().project(n, xs, ys, zs, pr.k.f, pr.k.o1, pr.k.o2, us, vs);
  for (std::size_t j = 0; j < n; ++j) {
    if (w[j] <= 0.0) continue;
    const double ru = us[j] - obs[j].x();
    const double rv = vs[j] - obs[j].y();
    loss += w[j] * (ru * ru + rv * rv);
    if (grad) {
      const double gu = 2.0 * w[j] * ru;
      const double gv = 2.0 * w[j] * rv;
      const double inv_z = 1.0 / zs[j];
      Vec3& g = (*grad)[j];
      g.x() += gu * pr.k.f * inv_z;
      g.y() += gv * pr.k.f * inv_z;
      if (pts[j].z() >= pr.depth_floor) {
        g.z() -= (gu * pr.k.f * xs[j] + gv * pr.k.f * ys[j]) * inv_z * inv_z;
      }
    }
  }
  return loss;
}

// Data term for one frame; adds gradients w.r.t. joint positions and the
// unit mirror normal when requested.
double frame_data_term(const LiftProblem& pr, const FrameObservation& ob,
                       const std::vector<Vec3>& pos, const MirrorGeom& mg,
                       std::vector<Vec3>* grad_pos, Vec3* grad_n_hat) {
  const std::size_t n = pos.size();
  double loss = project_term(pr, pos, ob.q, ob.w, grad_pos);

  std::vector<Vec3> mirrored(n);
  for (std::size_t j = 0; j < n; ++j) mirrored[j] = mg.reflect(pos[j]);
  std::vector<Vec3> grad_m;
  if (grad_pos) grad_m.assign(n, Vec3::Zero());
  loss += project_term(pr, mirrored, ob.q_bar, ob.w_bar, grad_pos ? &grad_m : nullptr);
  if (grad_pos) {
    for (std::size_t j = 0; j < n; ++j) {
      const Vec3& g = grad_m[j];
      const double gn = g.dot(mg.n_hat);
      (*grad_pos)[j] += g - 2.0 * gn * mg.n_hat;
      const Vec3 rel = pos[j] - mg.anchor;
      *grad_n_hat += -2.0 * gn * rel - 2.0 * mg.n_hat.dot(rel) * g;
    }
  }
  return loss;
}

Vec3 unit_backward(const Vec3& raw, const Vec3& grad_hat) {
  const double len = raw.norm();
  const Vec3 hat = raw / len;
  return (grad_hat - hat * hat.dot(grad_hat)) / len;
}

bool stencil_ok(const LiftProblem& pr, int t) {
  return t >= 1 && t + 1 < pr.num_frames() && pr.frames[t - 1].valid && pr.frames[t].valid &&
         pr.frames[t + 1].valid;
}

}  // namespace

LiftState LiftState::from_problem(const LiftProblem& problem, PoseParams poses) {
  LiftState s;
  s.poses = std::move(poses);
  s.mirror_normal = problem.mirror.n;
  s.ground_normal = problem.ground.n;
  return s;
}

LiftProblem make_lift_problem(const CalibrationResult& calib,
                              const std::vector<AssociatedFrame>& frames, const SkeletonDef& skel,
                              const LiftWeights& weights) {
  LiftProblem pr;
  pr.k = calib.k;
  pr.mirror = calib.mirror;
  pr.mirror_anchor = calib.mirror_anchor;
  pr.ground = calib.ground;
  pr.ground_anchor = calib.ground.anchor();
  pr.skel = skel;
  pr.weights = weights;
  pr.frames.reserve(frames.size());
  for (const AssociatedFrame& fr : frames) {
    FrameObservation ob;
    ob.frame_idx = fr.frame_idx;
    ob.valid = fr.valid;
    if (fr.valid) {
      ob.q = fr.real.joints;
      ob.q_bar = fr.mirror.joints;
      ob.w.resize(fr.real.conf.size());
      ob.w_bar.resize(fr.mirror.conf.size());
      for (std::size_t j = 0; j < ob.w.size(); ++j) ob.w[j] = std::clamp(fr.real.conf[j], 0.0, 1.0);
      for (std::size_t j = 0; j < ob.w_bar.size(); ++j) {
        ob.w_bar[j] = std::clamp(fr.mirror.conf[j], 0.0, 1.0);
      }
    }
    pr.frames.push_back(std::move(ob));
  }
  return pr;
}

double reprojection_loss(const LiftProblem& problem, const LiftState& state, int frame) {
  const FrameObservation& ob = problem.frames.at(frame);
  if (!ob.valid) return 0.0;
  const FrameKinematics fk = run_fk(problem.skel, state.poses, frame);
  const MirrorGeom mg = mirror_geom(state.mirror_normal, problem.mirror_anchor);
  return frame_data_term(problem, ob, fk.pos, mg, nullptr, nullptr);
}

double reprojection_loss(const LiftProblem& problem, const PoseParams& poses, int frame) {
  return reprojection_loss(problem, LiftState::from_problem(problem, poses), frame);
}

double regularizer_loss(const LiftProblem& problem, const LiftState& state) {
  return evaluate_loss(problem, state).regularizer();
}

LossBreakdown evaluate_loss(const LiftProblem& pr, const LiftState& st, LiftGradient* grad) {
  const SkeletonDef& skel = pr.skel;
  const PoseParams& pose = st.poses;
  const int n = skel.size();
  const int frames = pr.num_frames();
  if (pose.num_frames != frames || pose.num_joints != n) {
    throw Error(ErrorCode::DimensionMismatch, "pose parameters do not match the lift problem");
  }
  if (grad) {
    grad->theta.assign(pose.theta.size(), Rot6::Zero());
    grad->lengths.assign(pose.lengths.size(), 0.0);
    grad->pelvis.assign(pose.pelvis.size(), Vec3::Zero());
    grad->mirror_normal.setZero();
    grad->ground_normal.setZero();
  }

  const MirrorGeom mg = mirror_geom(st.mirror_normal, pr.mirror_anchor);
  const double g_len = st.ground_normal.norm();
  const Vec3 g_hat = st.ground_normal / g_len;
  const JointRoles roles = skel.roles();

  LossBreakdown out;
  std::vector<FrameKinematics> fks(static_cast<std::size_t>(frames));
  std::vector<std::vector<Vec3>> grad_pos(static_cast<std::size_t>(frames));
  Vec3 grad_n_hat = Vec3::Zero();
  Vec3 grad_g_hat = Vec3::Zero();

  for (int t = 0; t < frames; ++t) {
    const FrameObservation& ob = pr.frames[t];
    if (!ob.valid) continue;
    fks[t] = run_fk(skel, pose, t);
    if (grad) grad_pos[t].assign(n, Vec3::Zero());
    out.reprojection += frame_data_term(pr, ob, fks[t].pos, mg, grad ? &grad_pos[t] : nullptr,
                                        grad ? &grad_n_hat : nullptr);

    // Lower foot stays on the ground.
    int low = roles.feet.front();
    double low_h = std::numeric_limits<double>::infinity();
    for (int f : roles.feet) {
      const double h = g_hat.dot(fks[t].pos[f] - pr.ground_anchor);
      if (h < low_h) {
        low_h = h;
        low = f;
      }
    }
    out.feet += pr.weights.feet * low_h * low_h;
    if (grad) {
      grad_pos[t][low] += 2.0 * pr.weights.feet * low_h * g_hat;
      grad_g_hat += 2.0 * pr.weights.feet * low_h * (fks[t].pos[low] - pr.ground_anchor);
    }
  }

  for (int t = 0; t < frames; ++t) {
    if (!stencil_ok(pr, t)) continue;
    for (int j = 0; j < n; ++j) {
      const Vec3 acc = fks[t + 1].pos[j] - 2.0 * fks[t].pos[j] + fks[t - 1].pos[j];
      out.location_smooth += pr.weights.location * acc.squaredNorm();
      const Rot6 dd = pose.rot(t + 1, j) - 2.0 * pose.rot(t, j) + pose.rot(t - 1, j);
      out.orientation_smooth += pr.weights.orientation * dd.squaredNorm();
      if (grad) {
        const Vec3 ga = 2.0 * pr.weights.location * acc;
        grad_pos[t + 1][j] += ga;
        grad_pos[t][j] -= 2.0 * ga;
        grad_pos[t - 1][j] += ga;
        const Rot6 gd = 2.0 * pr.weights.orientation * dd;
        grad->theta[static_cast<std::size_t>(t + 1) * n + j] += gd;
        grad->theta[static_cast<std::size_t>(t) * n + j] -= 2.0 * gd;
        grad->theta[static_cast<std::size_t>(t - 1) * n + j] += gd;
      }
    }
  }

  const Vec3& nm = st.mirror_normal;
  const Vec3& ng = st.ground_normal;
  const double dot = ng.dot(nm);
  out.orthogonality = dot * dot;
  out.mirror_norm = (mg.norm - 1.0) * (mg.norm - 1.0);
  out.ground_norm = (g_len - 1.0) * (g_len - 1.0);

  if (grad) {
    for (int t = 0; t < frames; ++t) {
      if (!pr.frames[t].valid) continue;
      fk_backward(skel, pose, t, fks[t], grad_pos[t], *grad);
    }
    grad->mirror_normal = unit_backward(nm, grad_n_hat) + 2.0 * dot * ng +
                          2.0 * (mg.norm - 1.0) * mg.n_hat;
    grad->ground_normal = unit_backward(ng, grad_g_hat) + 2.0 * dot * nm +
                          2.0 * (g_len - 1.0) * g_hat;
  }
  return out;
}

LiftGradient gradient(const LiftProblem& problem, const LiftState& state) {
  LiftGradient g;
  const LossBreakdown loss = evaluate_loss(problem, state, &g);
  if (!std::isfinite(loss.total()) || !pack(g).allFinite()) {
    throw Error(ErrorCode::NaNDetected, "non-finite gradient");
  }
  return g;
}

Eigen::VectorXd pack(const LiftState& s) {
  const PoseParams& p = s.poses;
  Eigen::VectorXd x(static_cast<Eigen::Index>(p.theta.size() * 6 + p.lengths.size() +
                                               p.pelvis.size() * 3 + 6));
  Eigen::Index k = 0;
  for (const Rot6& r : p.theta) {
    x.segment<6>(k) = r;
    k += 6;
  }
  for (double l : p.lengths) x[k++] = l;
  for (const Vec3& v : p.pelvis) {
    x.segment<3>(k) = v;
    k += 3;
  }
  x.segment<3>(k) = s.mirror_normal;
  x.segment<3>(k + 3) = s.ground_normal;
  return x;
}

void unpack(const Eigen::VectorXd& x, LiftState& s) {
  PoseParams& p = s.poses;
  Eigen::Index k = 0;
  for (Rot6& r : p.theta) {
    r = x.segment<6>(k);
    k += 6;
  }
  for (double& l : p.lengths) l = x[k++];
  for (Vec3& v : p.pelvis) {
    v = x.segment<3>(k);
    k += 3;
  }
  s.mirror_normal = x.segment<3>(k);
  s.ground_normal = x.segment<3>(k + 3);
}

Eigen::VectorXd pack(const LiftGradient& g) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(g.theta.size() * 6 + g.lengths.size() +
                                               g.pelvis.size() * 3 + 6));
  Eigen::Index k = 0;
  for (const Rot6& r : g.theta) {
    x.segment<6>(k) = r;
    k += 6;
  }
  for (double l : g.lengths) x[k++] = l;
  for (const Vec3& v : g.pelvis) {
    x.segment<3>(k) = v;
    k += 3;
  }
  x.segment<3>(k) = g.mirror_normal;
  x.segment<3>(k + 3) = g.ground_normal;
  return x;
}

std::vector<double> initial_bone_lengths(const LiftProblem& pr) {
  const SkeletonDef& skel = pr.skel;
  const JointRoles roles = skel.roles();
  const int n = skel.size();
  std::vector<std::vector<double>> samples(n);
  for (const FrameObservation& ob : pr.frames) {
    if (!ob.valid) continue;
    Detection2D real{ob.q, ob.w, 0, ob.frame_idx};
    Detection2D mirror{ob.q_bar, ob.w_bar, 1, ob.frame_idx};
    const auto qa = ankle_pixel(real, roles);
    const auto qb = ankle_pixel(mirror, roles);
    double depth_real = 0.0, depth_mirror = 0.0;
    try {
      if (qa) depth_real = backproject_to_plane(pr.k, *qa, pr.ground).z();
      if (qb) depth_mirror = backproject_to_plane(pr.k, *qb, pr.ground).z();
    } catch (const Error&) {
      continue;
    }
    for (int j = 1; j < n; ++j) {
      const int p = skel.parents[j];
      double est = 0.0;
      if (depth_real > 0.0 && ob.w[j] >= 0.3 && ob.w[p] >= 0.3) {
        est = std::max(est, (ob.q[j] - ob.q[p]).norm() * depth_real / pr.k.f);
      }
      if (depth_mirror > 0.0 && ob.w_bar[j] >= 0.3 && ob.w_bar[p] >= 0.3) {
        est = std::max(est, (ob.q_bar[j] - ob.q_bar[p]).norm() * depth_mirror / pr.k.f);
      }
      if (est > 0.0) samples[j].push_back(est);
    }
  }
  std::vector<double> lengths = skel.rest_lengths;
  for (int j = 1; j < n; ++j) {
    auto& s = samples[j];
    if (s.empty()) continue;
    std::nth_element(s.begin(), s.begin() + s.size() / 2, s.end());
    lengths[j] = s[s.size() / 2];
  }
  for (const auto& [a, b] : skel.flip_pairs) {
    const double mean = 0.5 * (lengths[a] + lengths[b]);
    lengths[a] = lengths[b] = mean;
  }
  for (int j = 1; j < n; ++j) {
    if (!(lengths[j] > 1e-3)) lengths[j] = skel.rest_lengths[j];
  }
  return lengths;
}

PoseParams initialize_poses(const LiftProblem& pr) {
  const SkeletonDef& skel = pr.skel;
  const JointRoles roles = skel.roles();
  const int frames = pr.num_frames();
  PoseParams out = PoseParams::identity(skel, frames);
  out.lengths = initial_bone_lengths(pr);
  const MirrorGeom mg = mirror_geom(pr.mirror.n, pr.mirror_anchor);

  std::vector<int> source(frames, -1);
  for (int t = 0; t < frames; ++t) {
    const FrameObservation& ob = pr.frames[t];
    if (!ob.valid) continue;
    const auto qa = ankle_pixel(Detection2D{ob.q, ob.w, 0, t}, roles);
    if (!qa) continue;
    Vec3 ankle_pos;
    try {
      ankle_pos = backproject_to_plane(pr.k, *qa, pr.ground);
    } catch (const Error&) {
      continue;
    }
    const auto candidates = standing_pose_candidates(skel, ankle_pos, pr.ground, out.lengths);
    double best = std::numeric_limits<double>::infinity();
    for (const PoseParams& c : candidates) {
      const FrameKinematics fk = run_fk(skel, c, 0);
      const double loss = frame_data_term(pr, ob, fk.pos, mg, nullptr, nullptr);
      if (loss < best) {
        best = loss;
        for (int j = 0; j < skel.size(); ++j) out.rot(t, j) = c.rot(0, j);
        out.pelvis[t] = c.pelvis[0];
      }
    }
    source[t] = t;
  }
  int last = -1;
  for (int t = 0; t < frames; ++t) {
    if (source[t] >= 0) last = t;
    else source[t] = last;
  }
  int next = -1;
  for (int t = frames - 1; t >= 0; --t) {
    if (source[t] == t) next = t;
    else if (source[t] < 0) source[t] = next;
  }
  for (int t = 0; t < frames; ++t) {
    const int s = source[t];
    if (s < 0) throw Error(ErrorCode::NoValidFrames, "no frame could be initialized");
    if (s == t) continue;
    for (int j = 0; j < skel.size(); ++j) out.rot(t, j) = out.rot(s, j);
    out.pelvis[t] = out.pelvis[s];
  }
  return out;
}

std::vector<double> frame_residuals(const LiftProblem& pr, const LiftState& st) {
  const MirrorGeom mg = mirror_geom(st.mirror_normal, pr.mirror_anchor);
  std::vector<double> out(static_cast<std::size_t>(pr.num_frames()), 0.0);
  for (int t = 0; t < pr.num_frames(); ++t) {
    const FrameObservation& ob = pr.frames[t];
    if (!ob.valid) continue;
    const FrameKinematics fk = run_fk(pr.skel, st.poses, t);
    double sum = 0.0;
    int count = 0;
    for (int j = 0; j < pr.skel.size(); ++j) {
      const Vec3 pm = mg.reflect(fk.pos[j]);
      if (ob.w[j] > 0.0) {
        const Vec3& p = fk.pos[j];
        const double z = std::max(p.z(), pr.depth_floor);
        sum += (Vec2(pr.k.f * p.x() / z + pr.k.o1, pr.k.f * p.y() / z + pr.k.o2) - ob.q[j])
                   .squaredNorm();
        ++count;
      }
      if (ob.w_bar[j] > 0.0) {
        const double z = std::max(pm.z(), pr.depth_floor);
        sum += (Vec2(pr.k.f * pm.x() / z + pr.k.o1, pr.k.f * pm.y() / z + pr.k.o2) - ob.q_bar[j])
                   .squaredNorm();
        ++count;
      }
    }
    out[t] = count > 0 ? std::sqrt(sum / count) : 0.0;
  }
  return out;
}

LiftResult optimize_sequence(const LiftProblem& pr, const PoseParams& init,
                             const LiftOptions& options) {
  init.validate(pr.skel);
  LiftState state = LiftState::from_problem(pr, init);
  Eigen::VectorXd x = pack(state);
  const Eigen::Index dim = x.size();
  const int n = pr.skel.size();
  const int frames = pr.num_frames();

  // Per-coordinate base learning rate and warm-up mask.
  Eigen::VectorXd lr(dim);
  Eigen::VectorXd warm(dim);
  Eigen::Index k = 0;
  for (int t = 0; t < frames; ++t) {
    for (int j = 0; j < n; ++j) {
      lr.segment<6>(k).setConstant(options.lr_rotation);
      warm.segment<6>(k).setConstant(j == 0 ? 1.0 : 0.0);
      k += 6;
    }
  }
  for (int j = 0; j < n; ++j) {
    lr[k] = j == 0 ? 0.0 : options.lr_length;
    warm[k] = 0.0;
    ++k;
  }
  for (int t = 0; t < frames; ++t) {
    lr.segment<3>(k).setConstant(options.lr_pelvis);
    warm.segment<3>(k).setConstant(1.0);
    k += 3;
  }
  lr.segment<6>(k).setConstant(options.lr_normal);
  warm.segment<6>(k).setZero();

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-12;
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(dim);
  int step = 0;

  LiftResult result;
  result.best_loss_history.reserve(static_cast<std::size_t>(options.iterations));
  double best = std::numeric_limits<double>::infinity();
  double initial = 0.0;
  Eigen::VectorXd best_x = x;
  const int warmup = std::min(options.warmup_iterations, options.iterations);

  for (int it = 0; it < options.iterations; ++it) {
    if (it == warmup) {
      m1.setZero();
      m2.setZero();
      step = 0;
    }
    unpack(x, state);
    LiftGradient grad;
    LossBreakdown loss;
    try {
      loss = evaluate_loss(pr, state, &grad);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateRotation) throw;
      throw Error(ErrorCode::NaNDetected, std::string("rotation collapsed: ") + e.what());
    }
    const double total = loss.total();
    if (!std::isfinite(total)) {
      int bad = -1;
      for (int t = 0; t < frames && bad < 0; ++t) {
        if (!std::isfinite(reprojection_loss(pr, state, t))) bad = t;
      }
      std::ostringstream os;
      os << "loss became non-finite at iteration " << it;
      if (bad >= 0) os << " (frame " << bad << ")";
      throw Error(ErrorCode::NaNDetected, os.str());
    }
    if (it == 0) initial = total;
    if (total < best) {
      best = total;
      best_x = x;
      result.final_loss = loss;
    }
    result.best_loss_history.push_back(best);
    if (it + 1 == options.no_decrease_window && !(best < initial) &&
        initial > options.converged_loss) {
      std::ostringstream os;
      os << "loss did not decrease in the first " << options.no_decrease_window
         << " iterations (" << initial << ")";
      throw Error(ErrorCode::NoDecrease, os.str());
    }

    const Eigen::VectorXd g = pack(grad);
    const bool in_warmup = it < warmup;
    const double progress =
        in_warmup ? 0.0 : static_cast<double>(it - warmup) / std::max(1, options.iterations - warmup);
    const double scale = std::pow(options.final_lr_fraction, progress);
    ++step;
    const double c1 = 1.0 - std::pow(beta1, step);
    const double c2 = 1.0 - std::pow(beta2, step);
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (in_warmup && warm[i] == 0.0) continue;
      m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
      m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
      x[i] -= scale * lr[i] * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
    }
  }

  unpack(best_x, state);
  result.poses = state.poses;
  result.mirror = Plane::through_point(state.mirror_normal, pr.mirror_anchor);
  result.mirror_anchor = pr.mirror_anchor;
  result.ground = Plane::through_point(state.ground_normal, pr.ground_anchor);
  result.residuals = frame_residuals(pr, state);
  result.valid.reserve(pr.frames.size());
  for (const FrameObservation& ob : pr.frames) result.valid.push_back(ob.valid);
  return result;
}

}  // namespace mirrorcap
