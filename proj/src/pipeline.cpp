#include "mirrorcap/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "mirrorcap/io.hpp"
#include "mirrorcap/kernels.hpp"

namespace mirrorcap {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (!j.is_object() || !j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::ParseError, std::string("config: field '") + key + "' has the wrong type");
  }
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  return j.contains(key) ? j.at(key) : empty;
}

std::string motion_name(MotionKind m) {
  return m == MotionKind::Pedestrian ? "pedestrian" : "sinusoid";
}

template <typename Fn>
auto staged(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (Error& e) {
    if (e.stage().empty()) e.set_stage(stage);
    throw;
  }
}

fs::path out_path(const PipelineConfig& c, const std::string& name) { return fs::path(c.out_dir) / name; }

fs::path resume_path(const std::string& explicit_path, const PipelineConfig& c, const char* name) {
  return explicit_path.empty() ? out_path(c, name) : fs::path(explicit_path);
}

KeypointFile load_input(const PipelineConfig& c, const SkeletonDef& skel) {
  if (c.input.empty()) throw Error(ErrorCode::InvalidArgument, "no --input keypoint file given");
  return staged("ingest", [&] {
    const std::string text = read_text(c.input);
    KeypointFile kf = parse_keypoints(text, skel);
    if (!c.schema.empty() && parse_schema(c.schema) != kf.schema) {
      throw Error(ErrorCode::UnknownSchema, "file schema '" + to_string(kf.schema) +
                                                "' differs from the requested '" + c.schema + "'");
    }
    return kf;
  });
}

CalibrationConfig calib_config(const PipelineConfig& c) {
  CalibrationConfig cc = c.calib;
  cc.person_height = c.person_height;
  return cc;
}

struct Calibrated {
  KeypointFile input;
  std::vector<AssociatedFrame> assoc;
  CalibrationResult calib;
};

Calibrated calibrate_stage(const PipelineConfig& c, const SkeletonDef& skel, bool from_file) {
  Calibrated out;
  out.input = load_input(c, skel);
  const CalibrationConfig cc = calib_config(c);
  out.assoc = staged("associate", [&] { return associate_sequence(out.input.frames, skel, cc); });
  if (from_file) {
    out.calib = staged("calibrate", [&] {
      return calibration_from_json(read_text(resume_path(c.calibration, c, "calibration.json")));
    });
  } else {
    out.calib = staged("calibrate", [&] {
      return calibrate(out.assoc, skel, out.input.width, out.input.height, cc);
    });
  }
  return out;
}

Image background_for(const PipelineConfig& c, const CameraIntrinsics& k) {
  if (!c.background.empty()) {
    Image bg = read_ppm(c.background);
    if (bg.width != k.width || bg.height != k.height) {
      throw Error(ErrorCode::DimensionMismatch, "background image does not match the camera size");
    }
    return bg;
  }
  return Image(k.width, k.height, c.background_color);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

SkeletonDef PipelineConfig::make_skeleton() const {
  if (skeleton == "h36m17") return SkeletonDef::h36m17(person_height);
  if (skeleton == "h36m19") return SkeletonDef::h36m19(person_height);
  throw Error(ErrorCode::UnknownSchema, "unknown skeleton '" + skeleton + "'");
}

void PipelineConfig::validate() const {
  if (!(person_height > 0.0)) throw Error(ErrorCode::InvalidArgument, "person height must be positive");
  if (weights.location < 0.0 || weights.orientation < 0.0 || weights.feet < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "loss weights must be non-negative");
  }
  if (lift_options.iterations <= 0 || lift_options.warmup_iterations < 0) {
    throw Error(ErrorCode::InvalidArgument, "iteration counts must be positive");
  }
  if (samples <= 0 || threads <= 0 || occlusion_rays < 0) {
    throw Error(ErrorCode::InvalidArgument, "samples and threads must be positive");
  }
  if (!schema.empty()) parse_schema(schema);
  const SkeletonDef skel = make_skeleton();
  for (int j : joint_subset) {
    if (j < 0 || j >= skel.size()) throw Error(ErrorCode::InvalidArgument, "joint subset index out of range");
  }
}

void apply_config_json(const std::string& text, PipelineConfig& c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::ostringstream os;
    os << "config is not valid JSON at byte offset " << e.byte;
    throw Error(ErrorCode::ParseError, os.str());
  }
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "config must be a JSON object");
  read_if(j, "input", c.input);
  read_if(j, "out_dir", c.out_dir);
  read_if(j, "gt", c.gt);
  read_if(j, "calibration", c.calibration);
  read_if(j, "lift", c.lift);
  read_if(j, "background", c.background);
  read_if(j, "schema", c.schema);
  read_if(j, "skeleton", c.skeleton);
  read_if(j, "person_height", c.person_height);
  read_if(j, "seed", c.seed);
  read_if(j, "threads", c.threads);

  const json& cal = section(j, "calibration_options");
  read_if(cal, "ambiguity_threshold", c.calib.ambiguity_threshold);
  read_if(cal, "min_joint_conf", c.calib.min_joint_conf);
  read_if(cal, "min_mean_conf", c.calib.min_mean_conf);
  read_if(cal, "min_observations", c.calib.min_observations);
  read_if(cal, "max_residual_rms", c.calib.max_residual_rms);
  read_if(cal, "min_view_angle_deg", c.calib.min_view_angle_deg);
  read_if(cal, "max_view_angle_deg", c.calib.max_view_angle_deg);
  read_if(cal, "focal_sigma_multiple", c.calib.focal_sigma_multiple);
  read_if(cal, "max_focal_factor", c.calib.max_focal_factor);

  const json& w = section(j, "weights");
  read_if(w, "location", c.weights.location);
  read_if(w, "orientation", c.weights.orientation);
  read_if(w, "feet", c.weights.feet);

  const json& o = section(j, "optimizer");
  read_if(o, "iterations", c.lift_options.iterations);
  read_if(o, "warmup_iterations", c.lift_options.warmup_iterations);
  read_if(o, "lr_rotation", c.lift_options.lr_rotation);
  read_if(o, "lr_pelvis", c.lift_options.lr_pelvis);
  read_if(o, "lr_length", c.lift_options.lr_length);
  read_if(o, "lr_normal", c.lift_options.lr_normal);
  read_if(o, "final_lr_fraction", c.lift_options.final_lr_fraction);
  read_if(o, "no_decrease_window", c.lift_options.no_decrease_window);
  read_if(o, "converged_loss", c.lift_options.converged_loss);

  const json& r = section(j, "render");
  read_if(r, "enabled", c.render);
  if (r.contains("mode")) {
    std::string mode;
    read_if(r, "mode", mode);
    c.mode = parse_render_mode(mode);
  }
  read_if(r, "frames", c.render_frames);
  read_if(r, "samples", c.samples);
  read_if(r, "jitter", c.jitter);
  read_if(r, "pad_fraction", c.pad_fraction);
  read_if(r, "iou_threshold", c.iou_threshold);
  read_if(r, "occlusion_fraction", c.occlusion_fraction);
  read_if(r, "occlusion_rays", c.occlusion_rays);
  read_if(r, "sigma_max", c.sigma_max);
  if (r.contains("background_color")) {
    std::vector<double> rgb;
    read_if(r, "background_color", rgb);
    if (rgb.size() != 3) throw Error(ErrorCode::ParseError, "config: background_color needs 3 values");
    c.background_color = Vec3(rgb[0], rgb[1], rgb[2]);
  }

  read_if(section(j, "eval"), "joint_subset", c.joint_subset);

  const json& s = section(j, "synth");
  SynthConfig& sc = c.synth;
  read_if(s, "frames", sc.frames);
  read_if(s, "width", sc.width);
  read_if(s, "height", sc.height);
  read_if(s, "focal", sc.focal);
  read_if(s, "camera_height", sc.camera_height);
  read_if(s, "camera_tilt_deg", sc.camera_tilt_deg);
  read_if(s, "mirror_yaw_deg", sc.mirror_yaw_deg);
  read_if(s, "person_distance", sc.person_distance);
  read_if(s, "person_lateral", sc.person_lateral);
  read_if(s, "mirror_gap", sc.mirror_gap);
  read_if(s, "path_radius", sc.path_radius);
  if (s.contains("motion")) {
    std::string m;
    read_if(s, "motion", m);
    if (m == "pedestrian") sc.motion = MotionKind::Pedestrian;
    else if (m == "sinusoid") sc.motion = MotionKind::Sinusoid;
    else throw Error(ErrorCode::ParseError, "config: unknown synth motion '" + m + "'");
  }
  read_if(s, "joint_amplitude_deg", sc.joint_amplitude_deg);
  read_if(s, "arm_swing_deg", sc.arm_swing_deg);
  read_if(s, "noise_sigma", sc.noise_sigma);
  read_if(s, "conf_min", sc.conf_min);
  read_if(s, "conf_max", sc.conf_max);
  read_if(s, "correlated_confidence", sc.correlated_confidence);
  read_if(s, "dropout", sc.dropout);
}

PipelineConfig load_config(const fs::path& path, PipelineConfig base) {
  apply_config_json(read_text(path), base);
  return base;
}

std::string config_to_json(const PipelineConfig& c) {
  json j;
  j["input"] = c.input;
  j["gt"] = c.gt;
  j["calibration"] = c.calibration;
  j["lift"] = c.lift;
  j["background"] = c.background;
  j["schema"] = c.schema;
  j["skeleton"] = c.skeleton;
  j["person_height"] = c.person_height;
  j["seed"] = c.seed;
  j["calibration_options"] = {{"ambiguity_threshold", c.calib.ambiguity_threshold},
                              {"min_joint_conf", c.calib.min_joint_conf},
                              {"min_mean_conf", c.calib.min_mean_conf},
                              {"min_observations", c.calib.min_observations},
                              {"max_residual_rms", c.calib.max_residual_rms},
                              {"min_view_angle_deg", c.calib.min_view_angle_deg},
                              {"max_view_angle_deg", c.calib.max_view_angle_deg},
                              {"focal_sigma_multiple", c.calib.focal_sigma_multiple},
                              {"max_focal_factor", c.calib.max_focal_factor}};
  j["weights"] = {{"location", c.weights.location},
                  {"orientation", c.weights.orientation},
                  {"feet", c.weights.feet}};
  const LiftOptions& o = c.lift_options;
  j["optimizer"] = {{"iterations", o.iterations},         {"warmup_iterations", o.warmup_iterations},
                    {"lr_rotation", o.lr_rotation},       {"lr_pelvis", o.lr_pelvis},
                    {"lr_length", o.lr_length},           {"lr_normal", o.lr_normal},
                    {"final_lr_fraction", o.final_lr_fraction},
                    {"no_decrease_window", o.no_decrease_window},
                    {"converged_loss", o.converged_loss}};
  j["render"] = {{"enabled", c.render},
                 {"mode", to_string(c.mode)},
                 {"frames", c.render_frames},
                 {"samples", c.samples},
                 {"jitter", c.jitter},
                 {"pad_fraction", c.pad_fraction},
                 {"iou_threshold", c.iou_threshold},
                 {"occlusion_fraction", c.occlusion_fraction},
                 {"occlusion_rays", c.occlusion_rays},
                 {"sigma_max", c.sigma_max},
                 {"background_color",
                  {c.background_color.x(), c.background_color.y(), c.background_color.z()}}};
  j["eval"] = {{"joint_subset", c.joint_subset}};
  const SynthConfig& s = c.synth;
  j["synth"] = {{"frames", s.frames},
                {"width", s.width},
                {"height", s.height},
                {"focal", s.focal},
                {"camera_height", s.camera_height},
                {"camera_tilt_deg", s.camera_tilt_deg},
                {"mirror_yaw_deg", s.mirror_yaw_deg},
                {"person_distance", s.person_distance},
                {"person_lateral", s.person_lateral},
                {"mirror_gap", s.mirror_gap},
                {"path_radius", s.path_radius},
                {"motion", motion_name(s.motion)},
                {"joint_amplitude_deg", s.joint_amplitude_deg},
                {"arm_swing_deg", s.arm_swing_deg},
                {"noise_sigma", s.noise_sigma},
                {"conf_min", s.conf_min},
                {"conf_max", s.conf_max},
                {"correlated_confidence", s.correlated_confidence},
                {"dropout", s.dropout}};
  return j.dump(2) + "\n";
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

StageOutputs run_synth(const PipelineConfig& config) {
  return staged("synth", [&] {
    config.validate();
    SynthConfig sc = config.synth;
    sc.person_height = config.person_height;
    sc.heels = config.skeleton == "h36m19";
    const SyntheticScene scene = generate_scene(sc, config.seed);
    StageOutputs out;
    const fs::path kp = out_path(config, "keypoints.json");
    write_text(kp, keypoints_to_json(scene.detections, scene.skel, sc.width, sc.height));
    out.files.push_back(kp);

    std::vector<Pose3D> gt;
    for (int t = 0; t < scene.motion_gt.num_frames; ++t) gt.push_back(scene.gt_pose(t));
    const fs::path gp = out_path(config, "gt_pose3d.json");
    write_text(gp, poses_to_json(gt, scene.skel));
    out.files.push_back(gp);

    CalibrationResult truth;
    truth.k = scene.k_gt;
    truth.ground = scene.ground_gt;
    truth.mirror = scene.mirror_gt;
    truth.mirror_anchor = scene.mirror_gt.anchor();
    truth.camera_height = scene.ground_gt.d;
    truth.view_angle_deg = view_angle_to_plane_deg(scene.mirror_gt);
    const fs::path sp = out_path(config, "scene_gt.json");
    write_text(sp, calibration_to_json(truth));
    out.files.push_back(sp);
    return out;
  });
}

StageOutputs run_calibrate(const PipelineConfig& config) {
  config.validate();
  const SkeletonDef skel = config.make_skeleton();
  const Calibrated c = calibrate_stage(config, skel, false);
  StageOutputs out;
  const fs::path p = out_path(config, "calibration.json");
  write_text(p, calibration_to_json(c.calib));
  out.files.push_back(p);
  return out;
}

StageOutputs run_lift(const PipelineConfig& config) {
  config.validate();
  const SkeletonDef skel = config.make_skeleton();
  const bool resume = !config.calibration.empty();
  const Calibrated c = calibrate_stage(config, skel, resume);
  StageOutputs out;
  if (!resume) {
    const fs::path p = out_path(config, "calibration.json");
    write_text(p, calibration_to_json(c.calib));
    out.files.push_back(p);
  }
  const LiftResult result = staged("lift", [&] {
    const LiftProblem problem = make_lift_problem(c.calib, c.assoc, skel, config.weights);
    return optimize_sequence(problem, initialize_poses(problem), config.lift_options);
  });
  const fs::path lp = out_path(config, "lift.json");
  write_text(lp, lift_to_json(result, skel));
  out.files.push_back(lp);
  const fs::path bp = out_path(config, "lift.bvh");
  write_text(bp, to_bvh(skel, result.poses));
  out.files.push_back(bp);
  return out;
}

StageOutputs run_render(const PipelineConfig& config) {
  config.validate();
  const SkeletonDef skel = config.make_skeleton();
  return staged("render", [&] {
    const CalibrationResult calib =
        calibration_from_json(read_text(resume_path(config.calibration, config, "calibration.json")));
    const LiftResult lift = lift_from_json(read_text(resume_path(config.lift, config, "lift.json")), skel);
    const Plane mirror = lift.mirror;
    const ReflectionTransform refl = reflection_matrix(mirror);

    // Sequence-level occlusion decision from the lifted skeletons.
    std::vector<double> ious(static_cast<std::size_t>(lift.poses.num_frames), 0.0);
    for (int t = 0; t < lift.poses.num_frames; ++t) {
      if (t < static_cast<int>(lift.valid.size()) && !lift.valid[t]) continue;
      const std::vector<Vec3> joints = forward_kinematics(skel, lift.poses, t).joints;
      std::vector<Vec3> mirrored;
      for (const Vec3& p : joints) mirrored.push_back(refl.apply(p));
      ious[t] = occlusion_boxes(calib.k, joints, mirrored, config.pad_fraction, config.iou_threshold).iou;
    }
    const bool occlusion = occlusion_enabled(ious, config.iou_threshold, config.occlusion_fraction);
    RenderMode mode = config.mode;
    if (mode == RenderMode::Layered && !occlusion) mode = RenderMode::NoOcclusion;

    std::vector<int> frames = config.render_frames;
    if (frames.empty()) {
      frames.push_back(static_cast<int>(std::max_element(ious.begin(), ious.end()) - ious.begin()));
    }
    const AnalyticBodyField field = AnalyticBodyField::body(skel, lift.poses.lengths, config.sigma_max);
    const Image bg = background_for(config, calib.k);
    RenderOptions ro;
    ro.mode = mode;
    ro.samples = config.samples;
    ro.pad_fraction = config.pad_fraction;
    ro.iou_threshold = config.iou_threshold;
    ro.jitter = config.jitter;
    ro.seed = config.seed;
    ro.threads = config.threads;
    RenderInputs in;
    in.background = &bg;

    StageOutputs out;
    json report;
    report["requested_mode"] = to_string(config.mode);
    report["effective_mode"] = to_string(mode);
    report["occlusion_enabled"] = occlusion;
    report["ious"] = ious;
    json rendered = json::array();
    std::mt19937_64 rng(config.seed);
    for (int t : frames) {
      if (t < 0 || t >= lift.poses.num_frames) {
        throw Error(ErrorCode::OutOfBounds, "render frame " + std::to_string(t) + " does not exist");
      }
      ro.seed = config.seed + static_cast<std::uint64_t>(t);
      const RenderOutput r = render_scene(field, calib.k, mirror, skel, lift.poses, t, in, ro);
      char name[32];
      std::snprintf(name, sizeof name, "render_%04d.ppm", t);
      const fs::path p = out_path(config, name);
      write_ppm(p, r.image);
      out.files.push_back(p);
      json fr = {{"frame", t},
                 {"file", name},
                 {"iou", r.boxes.iou},
                 {"real_box", {r.boxes.real.x0, r.boxes.real.y0, r.boxes.real.x1, r.boxes.real.y1}},
                 {"mirror_box",
                  {r.boxes.mirror.x0, r.boxes.mirror.y0, r.boxes.mirror.x1, r.boxes.mirror.y1}}};
      if (occlusion && r.boxes.occluded) {
        json rays = json::array();
        for (const Vec2& q : sample_occlusion_pixels(r.boxes, config.occlusion_rays, rng)) {
          rays.push_back({q.x(), q.y()});
        }
        fr["occlusion_rays"] = std::move(rays);
      }
      rendered.push_back(std::move(fr));
    }
    report["frames"] = std::move(rendered);
    const fs::path rp = out_path(config, "render.json");
    write_text(rp, report.dump(1) + "\n");
    out.files.push_back(rp);
    return out;
  });
}

StageOutputs run_eval(const PipelineConfig& config) {
  config.validate();
  const SkeletonDef skel = config.make_skeleton();
  return staged("eval", [&] {
    if (config.gt.empty()) throw Error(ErrorCode::InvalidArgument, "evaluation needs --gt");
    const LiftResult lift = lift_from_json(read_text(resume_path(config.lift, config, "lift.json")), skel);
    const std::vector<Pose3D> gt = poses_from_json(read_text(config.gt), skel);
    if (static_cast<int>(gt.size()) != lift.poses.num_frames) {
      throw Error(ErrorCode::DimensionMismatch, "ground truth and lift frame counts differ");
    }
    std::vector<Pose3D> pred_used, gt_used;
    for (int t = 0; t < lift.poses.num_frames; ++t) {
      if (t < static_cast<int>(lift.valid.size()) && !lift.valid[t]) continue;
      pred_used.push_back(forward_kinematics(skel, lift.poses, t));
      gt_used.push_back(gt[t]);
    }
    const std::vector<int> subset =
        config.joint_subset.empty() ? default_joint_subset(skel) : config.joint_subset;
    const MetricReport report = evaluate_sequence(pred_used, gt_used, subset);
    StageOutputs out;
    const fs::path jp = out_path(config, "metrics.json");
    write_text(jp, to_json(report));
    const fs::path tp = out_path(config, "metrics.txt");
    write_text(tp, to_table(report));
    out.files = {jp, tp};
    return out;
  });
}

StageOutputs run_pipeline(const PipelineConfig& config) {
  StageOutputs all;
  auto take = [&](const StageOutputs& s) {
    all.files.insert(all.files.end(), s.files.begin(), s.files.end());
  };
  PipelineConfig c = config;
  take(run_calibrate(c));
  c.calibration = out_path(c, "calibration.json").string();
  take(run_lift(c));
  c.lift = out_path(c, "lift.json").string();
  if (c.render) take(run_render(c));
  if (!c.gt.empty()) take(run_eval(c));
  all.files.push_back(write_manifest(config, "run", all.files));
  return all;
}

fs::path write_manifest(const PipelineConfig& config, const std::string& command,
                        const std::vector<fs::path>& outputs) {
  const std::string cfg = config_to_json(config);
  json m;
  m["tool"] = "mirrorcap";
  m["version"] = kVersion;
  m["command"] = command;
  m["seed"] = config.seed;
  m["threads"] = config.threads;
  m["simd"] = std::string(kernels::to_string(kernels::active().level));
  m["config_hash"] = "fnv1a64:" + hex64(fnv1a64(cfg));
  m["config"] = json::parse(cfg);
  json files = json::array();
  for (const fs::path& p : outputs) {
    files.push_back({{"path", p.filename().string()}, {"fnv1a64", hex64(fnv1a64(read_text(p)))}});
  }
  m["outputs"] = std::move(files);
  const fs::path path = out_path(config, "manifest.json");
  write_text(path, m.dump(2) + "\n");
  return path;
}

}  // namespace mirrorcap
