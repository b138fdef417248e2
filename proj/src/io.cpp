#include "mirrorcap/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <sstream>

namespace mirrorcap {

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kKeypointFormat = "mirrorcap-keypoints";

// How one internal joint is read from a detector layout: a single source
// index, or the midpoint of two sources, or the head extrapolated from the
// ears past the neck.
struct SourceJoint {
  enum Kind { Missing, Direct, Midpoint, HeadFromEars } kind = Missing;
  int a = -1;
  int b = -1;
  int c = -1;
};

struct Layout {
  int num_joints = 0;
  std::function<SourceJoint(const std::string&)> lookup;
};

SourceJoint direct(int i) { return {SourceJoint::Direct, i, -1, -1}; }
SourceJoint mid(int i, int j) { return {SourceJoint::Midpoint, i, j, -1}; }

Layout layout_for(KeypointSchema schema, const SkeletonDef& skel) {
  switch (schema) {
    case KeypointSchema::H36M:
      return {17, [&skel](const std::string& name) {
                const int j = skel.find(name);
                return j >= 0 ? direct(j) : SourceJoint{};
              }};
    case KeypointSchema::Body25:
      return {25, [](const std::string& name) -> SourceJoint {
                if (name == "pelvis") return direct(8);
                if (name == "r_hip") return direct(9);
                if (name == "r_knee") return direct(10);
                if (name == "r_ankle") return direct(11);
                if (name == "l_hip") return direct(12);
                if (name == "l_knee") return direct(13);
                if (name == "l_ankle") return direct(14);
                if (name == "spine") return mid(1, 8);
                if (name == "neck") return direct(1);
                if (name == "nose") return direct(0);
                if (name == "head") return {SourceJoint::HeadFromEars, 17, 18, 1};
                if (name == "l_shoulder") return direct(5);
                if (name == "l_elbow") return direct(6);
                if (name == "l_wrist") return direct(7);
                if (name == "r_shoulder") return direct(2);
                if (name == "r_elbow") return direct(3);
                if (name == "r_wrist") return direct(4);
                if (name == "r_heel") return direct(24);
                if (name == "l_heel") return direct(21);
                return {};
              }};
    case KeypointSchema::Coco17:
      return {17, [](const std::string& name) -> SourceJoint {
                if (name == "pelvis") return mid(11, 12);
                if (name == "r_hip") return direct(12);
                if (name == "r_knee") return direct(14);
                if (name == "r_ankle") return direct(16);
                if (name == "l_hip") return direct(11);
                if (name == "l_knee") return direct(13);
                if (name == "l_ankle") return direct(15);
                if (name == "nose") return direct(0);
                if (name == "l_shoulder") return direct(5);
                if (name == "l_elbow") return direct(7);
                if (name == "l_wrist") return direct(9);
                if (name == "r_shoulder") return direct(6);
                if (name == "r_elbow") return direct(8);
                if (name == "r_wrist") return direct(10);
                return {};
              }};
  }
  return {};
}

struct RawPoint {
  Vec2 q = Vec2::Zero();
  double c = 0.0;
};

RawPoint midpoint(const RawPoint& a, const RawPoint& b) {
  return {0.5 * (a.q + b.q), std::min(a.c, b.c)};
}

// Coco has neither neck nor spine; both come from shoulder and hip midpoints.
RawPoint resolve(KeypointSchema schema, const std::string& name, const SourceJoint& src,
                 const std::vector<RawPoint>& raw) {
  if (schema == KeypointSchema::Coco17) {
    const RawPoint neck = midpoint(raw[5], raw[6]);
    if (name == "neck") return neck;
    if (name == "spine") return midpoint(neck, midpoint(raw[11], raw[12]));
    if (name == "head") {
      const RawPoint ears = midpoint(raw[3], raw[4]);
      return {ears.q + 0.5 * (ears.q - neck.q), std::min(ears.c, neck.c)};
    }
  }
  switch (src.kind) {
    case SourceJoint::Direct:
      return src.a < static_cast<int>(raw.size()) ? raw[src.a] : RawPoint{};
    case SourceJoint::Midpoint: return midpoint(raw[src.a], raw[src.b]);
    case SourceJoint::HeadFromEars: {
      const RawPoint ears = midpoint(raw[src.a], raw[src.b]);
      return {ears.q + 0.5 * (ears.q - raw[src.c].q), std::min(ears.c, raw[src.c].c)};
    }
    case SourceJoint::Missing: break;
  }
  return {};
}

[[noreturn]] void parse_fail(const std::string& what) { throw Error(ErrorCode::ParseError, what); }

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::ostringstream os;
    os << what << " is not valid JSON at byte offset " << e.byte << ": " << e.what();
    parse_fail(os.str());
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& context) {
  if (!j.is_object() || !j.contains(key)) parse_fail(context + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    parse_fail(context + ": field '" + key + "' has the wrong type");
  }
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 3) parse_fail(context + ": expected a 3-vector");
  try {
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  } catch (const json::exception&) {
    parse_fail(context + ": expected numbers");
  }
}

json plane_json(const Plane& p) { return {{"normal", vec_json(p.n)}, {"d", p.d}}; }

Plane plane_from(const json& j, const std::string& context) {
  if (!j.is_object() || !j.contains("normal")) parse_fail(context + ": missing plane normal");
  Plane p;
  p.n = vec_from(j["normal"], context + ".normal");
  p.d = get<double>(j, "d", context);
  return p;
}

json intrinsics_json(const CameraIntrinsics& k) {
  return {{"f", k.f}, {"o1", k.o1}, {"o2", k.o2}, {"width", k.width}, {"height", k.height}};
}

CameraIntrinsics intrinsics_from(const json& j) {
  CameraIntrinsics k;
  k.f = get<double>(j, "f", "intrinsics");
  k.o1 = get<double>(j, "o1", "intrinsics");
  k.o2 = get<double>(j, "o2", "intrinsics");
  k.width = get<int>(j, "width", "intrinsics");
  k.height = get<int>(j, "height", "intrinsics");
  return k;
}

json loss_json(const LossBreakdown& l) {
  return {{"reprojection", l.reprojection},   {"location_smooth", l.location_smooth},
          {"orientation_smooth", l.orientation_smooth}, {"feet", l.feet},
          {"orthogonality", l.orthogonality}, {"mirror_norm", l.mirror_norm},
          {"ground_norm", l.ground_norm},     {"total", l.total()}};
}

}  // namespace

KeypointSchema parse_schema(const std::string& name) {
  if (name == "h36m17" || name == "h36m" || name == "h36m19") return KeypointSchema::H36M;
  if (name == "body25") return KeypointSchema::Body25;
  if (name == "coco17") return KeypointSchema::Coco17;
  throw Error(ErrorCode::UnknownSchema, "unknown keypoint schema '" + name + "'");
}

std::string to_string(KeypointSchema schema) {
  switch (schema) {
    case KeypointSchema::H36M: return "h36m17";
    case KeypointSchema::Body25: return "body25";
    case KeypointSchema::Coco17: return "coco17";
  }
  return "h36m17";
}

KeypointFile parse_keypoints(const std::string& text, const SkeletonDef& skel) {
  const json root = parse_json(text, "keypoint file");
  if (!root.is_object()) parse_fail("keypoint file: top level must be an object");
  if (root.contains("format") && root["format"] != kKeypointFormat) {
    parse_fail("keypoint file: unexpected format tag");
  }
  KeypointFile out;
  out.schema = parse_schema(get<std::string>(root, "schema", "keypoint file"));
  const json& image = root.contains("image") ? root["image"] : json();
  out.width = get<int>(image, "width", "keypoint file image");
  out.height = get<int>(image, "height", "keypoint file image");
  if (out.width <= 0 || out.height <= 0) parse_fail("keypoint file: image size must be positive");

  const Layout layout = layout_for(out.schema, skel);
  std::vector<SourceJoint> sources;
  for (const std::string& name : skel.joint_names) sources.push_back(layout.lookup(name));

  if (!root.contains("frames") || !root["frames"].is_array()) {
    parse_fail("keypoint file: missing 'frames' array");
  }
  const json& frames = root["frames"];
  const double mx = 0.1 * out.width, my = 0.1 * out.height;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const std::string ctx = "frame " + std::to_string(f);
    const json& fr = frames[f];
    const int index = fr.contains("frame") ? get<int>(fr, "frame", ctx) : static_cast<int>(f);
    if (index != static_cast<int>(f)) {
      parse_fail(ctx + ": frame index " + std::to_string(index) + " breaks the contiguous order");
    }
    if (!fr.contains("persons") || !fr["persons"].is_array()) parse_fail(ctx + ": missing 'persons'");
    std::vector<Detection2D> dets;
    for (std::size_t p = 0; p < fr["persons"].size(); ++p) {
      const std::string pctx = ctx + " person " + std::to_string(p);
      const json& person = fr["persons"][p];
      if (!person.contains("keypoints") || !person["keypoints"].is_array()) {
        parse_fail(pctx + ": missing 'keypoints'");
      }
      const json& kps = person["keypoints"];
      if (static_cast<int>(kps.size()) < layout.num_joints) {
        parse_fail(pctx + ": expected " + std::to_string(layout.num_joints) + " keypoints, got " +
                   std::to_string(kps.size()));
      }
      std::vector<RawPoint> raw(kps.size());
      for (std::size_t j = 0; j < kps.size(); ++j) {
        const json& kp = kps[j];
        if (!kp.is_array() || kp.size() != 3 || !kp[0].is_number() || !kp[1].is_number() ||
            !kp[2].is_number()) {
          parse_fail(pctx + " keypoint " + std::to_string(j) + ": expected [x, y, confidence]");
        }
        raw[j].q = Vec2(kp[0].get<double>(), kp[1].get<double>());
        raw[j].c = std::clamp(kp[2].get<double>(), 0.0, 1.0);
        if (raw[j].c > 0.0 && (raw[j].q.x() < -mx || raw[j].q.x() > out.width + mx ||
                               raw[j].q.y() < -my || raw[j].q.y() > out.height + my)) {
          parse_fail(pctx + " keypoint " + std::to_string(j) + ": outside the image bounds");
        }
      }
      Detection2D det;
      det.frame_idx = static_cast<int>(f);
      det.person_idx = static_cast<int>(p);
      for (std::size_t j = 0; j < sources.size(); ++j) {
        const RawPoint r = resolve(out.schema, skel.joint_names[j], sources[j], raw);
        det.joints.push_back(r.q);
        det.conf.push_back(r.c);
      }
      dets.push_back(std::move(det));
    }
    out.frames.push_back(std::move(dets));
  }
  return out;
}

KeypointFile read_keypoints(const std::filesystem::path& path, const SkeletonDef& skel) {
  return parse_keypoints(read_text(path), skel);
}

std::string keypoints_to_json(const std::vector<std::vector<Detection2D>>& frames,
                              const SkeletonDef& skel, int width, int height) {
  json root;
  root["format"] = kKeypointFormat;
  root["version"] = 1;
  root["schema"] = "h36m17";
  root["joints"] = skel.joint_names;
  root["image"] = {{"width", width}, {"height", height}};
  json jf = json::array();
  for (std::size_t f = 0; f < frames.size(); ++f) {
    json persons = json::array();
    for (const Detection2D& d : frames[f]) {
      json kps = json::array();
      for (std::size_t j = 0; j < d.joints.size(); ++j) {
        kps.push_back(json::array({d.joints[j].x(), d.joints[j].y(), d.conf[j]}));
      }
      persons.push_back({{"keypoints", std::move(kps)}});
    }
    jf.push_back({{"frame", static_cast<int>(f)}, {"persons", std::move(persons)}});
  }
  root["frames"] = std::move(jf);
  return root.dump(1) + "\n";
}

std::string calibration_to_json(const CalibrationResult& c) {
  json j;
  j["format"] = "mirrorcap-calibration";
  j["version"] = 1;
  j["intrinsics"] = intrinsics_json(c.k);
  j["ground"] = plane_json(c.ground);
  j["mirror"] = plane_json(c.mirror);
  j["mirror_anchor"] = vec_json(c.mirror_anchor);
  j["camera_height"] = c.camera_height;
  j["focal_residual_rms_px"] = c.focal_residual_rms;
  j["view_angle_deg"] = c.view_angle_deg;
  std::vector<int> valid(c.per_frame_valid.begin(), c.per_frame_valid.end());
  j["frames_valid"] = valid;
  return j.dump(2) + "\n";
}

CalibrationResult calibration_from_json(const std::string& text) {
  const json j = parse_json(text, "calibration file");
  CalibrationResult c;
  if (!j.is_object() || !j.contains("intrinsics")) parse_fail("calibration file: missing 'intrinsics'");
  c.k = intrinsics_from(j["intrinsics"]);
  if (!j.contains("ground") || !j.contains("mirror")) parse_fail("calibration file: missing planes");
  c.ground = plane_from(j["ground"], "ground");
  c.mirror = plane_from(j["mirror"], "mirror");
  c.mirror_anchor = j.contains("mirror_anchor") ? vec_from(j["mirror_anchor"], "mirror_anchor")
                                                : c.mirror.anchor();
  c.camera_height = get<double>(j, "camera_height", "calibration file");
  c.focal_residual_rms = j.value("focal_residual_rms_px", 0.0);
  c.view_angle_deg = j.value("view_angle_deg", view_angle_to_plane_deg(c.mirror));
  if (j.contains("frames_valid")) {
    for (const json& v : j["frames_valid"]) c.per_frame_valid.push_back(v.get<int>() != 0);
  }
  return c;
}

std::string lift_to_json(const LiftResult& r, const SkeletonDef& skel) {
  json j;
  j["format"] = "mirrorcap-lift";
  j["version"] = 1;
  j["joints"] = skel.joint_names;
  j["mirror"] = plane_json(r.mirror);
  j["mirror_anchor"] = vec_json(r.mirror_anchor);
  j["ground"] = plane_json(r.ground);
  j["lengths"] = r.poses.lengths;
  j["loss"] = loss_json(r.final_loss);
  json frames = json::array();
  for (int t = 0; t < r.poses.num_frames; ++t) {
    json fr;
    fr["frame"] = t;
    fr["valid"] = t < static_cast<int>(r.valid.size()) ? static_cast<bool>(r.valid[t]) : true;
    fr["residual_px"] = t < static_cast<int>(r.residuals.size()) ? r.residuals[t] : 0.0;
    fr["pelvis"] = vec_json(r.poses.pelvis[t]);
    json theta = json::array();
    for (int jn = 0; jn < r.poses.num_joints; ++jn) {
      const Rot6& q = r.poses.rot(t, jn);
      theta.push_back(json::array({q[0], q[1], q[2], q[3], q[4], q[5]}));
    }
    fr["theta"] = std::move(theta);
    json joints = json::array();
    for (const Vec3& p : forward_kinematics(skel, r.poses, t).joints) joints.push_back(vec_json(p));
    fr["joints"] = std::move(joints);
    frames.push_back(std::move(fr));
  }
  j["frames"] = std::move(frames);
  return j.dump(1) + "\n";
}

LiftResult lift_from_json(const std::string& text, const SkeletonDef& skel) {
  const json j = parse_json(text, "lift file");
  LiftResult r;
  if (!j.is_object() || !j.contains("frames") || !j["frames"].is_array()) {
    parse_fail("lift file: missing 'frames'");
  }
  r.mirror = plane_from(j.value("mirror", json()), "mirror");
  r.ground = plane_from(j.value("ground", json()), "ground");
  r.mirror_anchor = j.contains("mirror_anchor") ? vec_from(j["mirror_anchor"], "mirror_anchor")
                                                : r.mirror.anchor();
  const auto& frames = j["frames"];
  r.poses = PoseParams::identity(skel, static_cast<int>(frames.size()));
  r.poses.lengths = get<std::vector<double>>(j, "lengths", "lift file");
  if (r.poses.lengths.size() != static_cast<std::size_t>(skel.size())) {
    parse_fail("lift file: bone length count does not match the skeleton");
  }
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const std::string ctx = "lift frame " + std::to_string(t);
    const json& fr = frames[t];
    r.poses.pelvis[t] = vec_from(fr.value("pelvis", json()), ctx + ".pelvis");
    const json& theta = fr.value("theta", json());
    if (!theta.is_array() || theta.size() != static_cast<std::size_t>(skel.size())) {
      parse_fail(ctx + ": theta does not match the skeleton");
    }
    for (int jn = 0; jn < skel.size(); ++jn) {
      const json& q = theta[static_cast<std::size_t>(jn)];
      if (!q.is_array() || q.size() != 6) parse_fail(ctx + ": theta entries need 6 numbers");
      for (int i = 0; i < 6; ++i) r.poses.rot(static_cast<int>(t), jn)[i] = q[i].get<double>();
    }
    r.valid.push_back(fr.value("valid", true));
    r.residuals.push_back(fr.value("residual_px", 0.0));
  }
  return r;
}

std::string poses_to_json(const std::vector<Pose3D>& poses, const SkeletonDef& skel) {
  json j;
  j["format"] = "mirrorcap-pose3d";
  j["version"] = 1;
  j["joints"] = skel.joint_names;
  json frames = json::array();
  for (const Pose3D& p : poses) {
    json pts = json::array();
    for (const Vec3& v : p.joints) pts.push_back(vec_json(v));
    frames.push_back({{"frame", p.frame_idx}, {"joints", std::move(pts)}});
  }
  j["frames"] = std::move(frames);
  return j.dump(1) + "\n";
}

std::vector<Pose3D> poses_from_json(const std::string& text, const SkeletonDef& skel) {
  const json j = parse_json(text, "pose file");
  if (!j.is_object() || !j.contains("frames") || !j["frames"].is_array()) {
    parse_fail("pose file: missing 'frames'");
  }
  std::vector<int> source(static_cast<std::size_t>(skel.size()));
  for (int k = 0; k < skel.size(); ++k) source[k] = k;
  if (j.contains("joints")) {
    const auto names = get<std::vector<std::string>>(j, "joints", "pose file");
    for (int k = 0; k < skel.size(); ++k) {
      const auto it = std::find(names.begin(), names.end(), skel.joint_names[k]);
      if (it == names.end()) parse_fail("pose file: no joint named '" + skel.joint_names[k] + "'");
      source[k] = static_cast<int>(it - names.begin());
    }
  }
  std::vector<Pose3D> out;
  const json& frames = j["frames"];
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const std::string ctx = "pose frame " + std::to_string(t);
    const json& pts = frames[t].value("joints", json());
    Pose3D p;
    p.frame_idx = frames[t].value("frame", static_cast<int>(t));
    for (int k = 0; k < skel.size(); ++k) {
      if (!pts.is_array() || source[k] >= static_cast<int>(pts.size())) {
        parse_fail(ctx + ": too few joints");
      }
      p.joints.push_back(vec_from(pts[static_cast<std::size_t>(source[k])], ctx));
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string to_bvh(const SkeletonDef& skel, const PoseParams& pose, double frame_time) {
  pose.validate(skel);
  const int n = skel.size();
  std::vector<std::vector<int>> children(static_cast<std::size_t>(n));
  for (int j = 1; j < n; ++j) children[skel.parents[j]].push_back(j);
  std::ostringstream os;
  os.precision(9);
  std::vector<int> order;
  std::function<void(int, int)> emit = [&](int j, int depth) {
    const std::string pad(static_cast<std::size_t>(2 * depth), ' ');
    const Vec3 off = j == 0 ? Vec3::Zero() : Vec3(pose.lengths[j] * skel.v_ref[j]);
    os << pad << (j == 0 ? "ROOT " : "JOINT ") << skel.joint_names[j] << "\n" << pad << "{\n";
    os << pad << "  OFFSET " << off.x() << " " << off.y() << " " << off.z() << "\n";
    if (j == 0) {
      os << pad << "  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation\n";
    } else {
      os << pad << "  CHANNELS 3 Zrotation Xrotation Yrotation\n";
    }
    order.push_back(j);
    for (int c : children[j]) emit(c, depth + 1);
    if (children[j].empty()) {
      os << pad << "  End Site\n" << pad << "  {\n" << pad << "    OFFSET 0 0 0\n" << pad << "  }\n";
    }
    os << pad << "}\n";
  };
  os << "HIERARCHY\n";
  emit(0, 0);
  os << "MOTION\nFrames: " << pose.num_frames << "\nFrame Time: " << frame_time << "\n";
  constexpr double kRad2Deg = 180.0 / 3.14159265358979323846;
  for (int t = 0; t < pose.num_frames; ++t) {
    bool first = true;
    auto put = [&](double v) {
      os << (first ? "" : " ") << v;
      first = false;
    };
    for (int j : order) {
      if (j == 0) {
        for (int a = 0; a < 3; ++a) put(pose.pelvis[t][a]);
      }
      // R = Rz Rx Ry
      const Mat3 m = rot6d_to_matrix(pose.rot(t, j));
      const double x = std::asin(std::clamp(m(2, 1), -1.0, 1.0));
      double z, y;
      if (std::abs(m(2, 1)) < 1.0 - 1e-12) {
        z = std::atan2(-m(0, 1), m(1, 1));
        y = std::atan2(-m(2, 0), m(2, 2));
      } else {
        z = std::atan2(m(1, 0), m(0, 0));
        y = 0.0;
      }
      put(z * kRad2Deg);
      put(x * kRad2Deg);
      put(y * kRad2Deg);
    }
    os << "\n";
  }
  return os.str();
}

std::string encode_ppm(const Image& image) {
  std::ostringstream os;
  os << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::string out = os.str();
  out.reserve(out.size() + image.rgb.size());
  for (double v : image.rgb) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

Image decode_ppm(const std::string& bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (token() != "P6") parse_fail("image is not a binary PPM (P6)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    parse_fail("PPM header is malformed");
  }
  if (w <= 0 || h <= 0 || maxval != 255) parse_fail("only 8-bit PPM images are supported");
  ++pos;  // single whitespace after maxval
  const std::size_t need = 3 * static_cast<std::size_t>(w) * h;
  if (bytes.size() < pos + need) {
    std::ostringstream os;
    os << "PPM pixel data truncated at byte offset " << bytes.size();
    parse_fail(os.str());
  }
  Image img(w, h);
  for (std::size_t i = 0; i < need; ++i) {
    img.rgb[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  write_text(path, encode_ppm(image));
}

Image read_ppm(const std::filesystem::path& path) { return decode_ppm(read_text(path)); }

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write to '" + path.string() + "' failed");
}

}  // namespace mirrorcap
