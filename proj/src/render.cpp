#include "mirrorcap/render.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

namespace mirrorcap {

Image::Image(int w, int h, const Vec3& fill) : width(w), height(h) {
  rgb.resize(3 * static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < rgb.size(); i += 3) {
    rgb[i] = fill.x();
    rgb[i + 1] = fill.y();
    rgb[i + 2] = fill.z();
  }
}

LayerImage::LayerImage(int w, int h)
    : width(w),
      height(h),
      color(3 * static_cast<std::size_t>(w) * h, 0.0),
      alpha(static_cast<std::size_t>(w) * h, 0.0) {}

PixelBox intersect(const PixelBox& a, const PixelBox& b) {
  PixelBox r{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1),
             std::min(a.y1, b.y1)};
  if (r.empty()) return PixelBox{};
  return r;
}

PixelBox padded_box(const std::vector<Vec2>& pts, double pad_fraction) {
  if (pts.empty()) throw Error(ErrorCode::InvalidArgument, "cannot box an empty point set");
  PixelBox b{pts[0].x(), pts[0].y(), pts[0].x(), pts[0].y()};
  for (const Vec2& p : pts) {
    b.x0 = std::min(b.x0, p.x());
    b.y0 = std::min(b.y0, p.y());
    b.x1 = std::max(b.x1, p.x());
    b.y1 = std::max(b.y1, p.y());
  }
  const double pad = pad_fraction * std::hypot(b.x1 - b.x0, b.y1 - b.y0);
  return {b.x0 - pad, b.y0 - pad, b.x1 + pad, b.y1 + pad};
}

OcclusionBoxes occlusion_boxes(const PixelBox& real, const PixelBox& mirror, double iou_threshold) {
  OcclusionBoxes out;
  out.real = real;
  out.mirror = mirror;
  out.inter = intersect(real, mirror);
  const double inter = out.inter.area();
  const double uni = real.area() + mirror.area() - inter;
  out.iou = uni > 0.0 ? inter / uni : 0.0;
  out.occluded = out.iou > iou_threshold;
  return out;
}

OcclusionBoxes occlusion_boxes(const CameraIntrinsics& k, const std::vector<Vec3>& real_joints,
                               const std::vector<Vec3>& mirror_joints, double pad_fraction,
                               double iou_threshold) {
  std::vector<Vec2> a, b;
  a.reserve(real_joints.size());
  b.reserve(mirror_joints.size());
  for (const Vec3& p : real_joints) a.push_back(project(k, p));
  for (const Vec3& p : mirror_joints) b.push_back(project(k, p));
  return occlusion_boxes(padded_box(a, pad_fraction), padded_box(b, pad_fraction), iou_threshold);
}

bool occlusion_enabled(const std::vector<double>& ious, double iou_threshold, double min_fraction) {
  if (ious.empty()) return false;
  const auto hits = std::count_if(ious.begin(), ious.end(),
                                  [&](double v) { return v > iou_threshold; });
  return static_cast<double>(hits) > min_fraction * static_cast<double>(ious.size());
}

std::vector<Vec2> sample_occlusion_pixels(const OcclusionBoxes& boxes, int count,
                                          std::mt19937_64& rng) {
  std::vector<Vec2> out;
  if (boxes.inter.empty() || count <= 0) return out;
  std::uniform_real_distribution<double> ux(boxes.inter.x0, boxes.inter.x1);
  std::uniform_real_distribution<double> uy(boxes.inter.y0, boxes.inter.y1);
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double x = ux(rng);
    out.emplace_back(x, uy(rng));
  }
  return out;
}

Mask mask_from_box(int width, int height, const PixelBox& box) {
  Mask m;
  m.width = width;
  m.height = height;
  m.source = MaskSource::ProjectedBox;
  m.on.assign(static_cast<std::size_t>(width) * height, 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (box.contains(x + 0.5, y + 0.5)) m.on[static_cast<std::size_t>(y) * width + x] = 1;
    }
  }
  return m;
}

std::vector<Ray> generate_rays(const CameraIntrinsics& k, const std::vector<Vec2>& pixels,
                               const std::optional<Aabb>& scene_box) {
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const Vec2& q : pixels) {
    if (!(q.x() >= 0.0 && q.x() <= k.width && q.y() >= 0.0 && q.y() <= k.height)) {
      std::ostringstream os;
      os << "pixel (" << q.x() << ", " << q.y() << ") outside " << k.width << "x" << k.height;
      throw Error(ErrorCode::OutOfBounds, os.str());
    }
    Ray r;
    r.dir = Vec3((q.x() - k.o1) / k.f, (q.y() - k.o2) / k.f, 1.0);
    if (scene_box) {
      if (const auto span = scene_box->clip(r); span && span->first < span->second) {
        r.t_near = span->first;
        r.t_far = span->second;
      }
    }
    rays.push_back(r);
  }
  return rays;
}

SampleBatch sample_segment(const Ray& ray, const Aabb& box, int count, std::mt19937_64* rng,
                           int ray_id) {
  const auto span = box.clip(ray);
  if (!span) throw Error(ErrorCode::NoBoxIntersection, "ray misses the sampling box");
  if (count <= 0) throw Error(ErrorCode::InvalidArgument, "sample count must be positive");
  const double t0 = span->first;
  const double width = (span->second - t0) / count;
  const double speed = ray.dir.norm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SampleBatch b;
  b.ray_id = ray_id;
  b.positions.resize(static_cast<std::size_t>(count));
  b.t.resize(static_cast<std::size_t>(count));
  b.deltas.assign(static_cast<std::size_t>(count), width * speed);
  for (int i = 0; i < count; ++i) {
    const double u = rng ? unit(*rng) : 0.5;
    b.t[i] = t0 + (i + u) * width;
    b.positions[i] = ray.at(b.t[i]);
  }
  return b;
}

BoneEncoding bone_relative_encode(const std::vector<Vec3>& samples, const PosedSkeleton& posed) {
  BoneEncoding e;
  e.num_samples = static_cast<int>(samples.size());
  e.num_joints = static_cast<int>(posed.pos.size());
  const std::size_t total = static_cast<std::size_t>(e.num_samples) * e.num_joints;
  e.x.resize(total);
  e.y.resize(total);
  e.z.resize(total);
  for (int j = 0; j < e.num_joints; ++j) {
    const Mat3 rt = posed.world_rot[j].transpose();
    const Vec3& o = posed.pos[j];
    const std::size_t base = static_cast<std::size_t>(j) * e.num_samples;
    for (int k = 0; k < e.num_samples; ++k) {
      const Vec3 local = rt * (samples[k] - o);
      e.x[base + k] = local.x();
      e.y[base + k] = local.y();
      e.z[base + k] = local.z();
    }
  }
  return e;
}

BoneEncoding bone_relative_encode(const std::vector<Vec3>& samples, const SkeletonDef& skel,
                                  const PoseParams& pose, int frame) {
  return bone_relative_encode(samples, pose_skeleton(skel, pose, frame));
}

AnalyticBodyField::AnalyticBodyField(const SkeletonDef& skel, const std::vector<double>& lengths,
                                     std::vector<Bone> bones)
    : bones_(std::move(bones)) {
  if (lengths.size() != static_cast<std::size_t>(skel.size())) {
    throw Error(ErrorCode::DimensionMismatch, "bone length count does not match skeleton");
  }
  for (const Bone& b : bones_) {
    if (b.joint <= 0 || b.joint >= skel.size()) {
      throw Error(ErrorCode::InvalidArgument, "capsule must attach to a non-root joint");
    }
    if (!(b.radius > 0.0) || !(b.sigma_max >= 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "capsule radius must be positive, density non-negative");
    }
    const Vec3 end = lengths[b.joint] * skel.v_ref[b.joint];
    kernels::CapsuleLobe lobe{};
    for (int a = 0; a < 3; ++a) {
      lobe.end[a] = end[a];
      lobe.color[a] = std::clamp(b.color[a], 0.0, 1.0);
    }
    const double len2 = end.squaredNorm();
    lobe.inv_len2 = len2 > 0.0 ? 1.0 / len2 : 0.0;
    lobe.inv_radius2 = 1.0 / (b.radius * b.radius);
    lobe.sigma_max = b.sigma_max;
    lobes_.push_back(lobe);
    parent_of_.push_back(skel.parents[b.joint]);
  }
}

AnalyticBodyField AnalyticBodyField::body(const SkeletonDef& skel, const std::vector<double>& lengths,
                                          double sigma_max) {
  const std::vector<Vec3> rest = skel.rest_positions();
  double height = 0.0;
  for (const Vec3& p : rest) height = std::max(height, p.y() - rest[0].y());
  const double scale = std::max(height, 1e-3) / 0.78;  // pelvis-to-head span of the 1.70 design
  std::vector<Bone> bones;
  for (int j = 1; j < skel.size(); ++j) {
    Bone b;
    b.joint = j;
    b.radius = std::clamp(0.3 * lengths[j], 0.045 * scale, 0.09 * scale);
    b.sigma_max = sigma_max;
    const double hue = std::fmod(0.61803398875 * j, 1.0) * 6.0;
    const double f = hue - std::floor(hue);
    const double lo = 0.2, hi = 0.9;
    const double up = lo + (hi - lo) * f, down = hi - (hi - lo) * f;
    switch (static_cast<int>(hue)) {
      case 0: b.color = Vec3(hi, up, lo); break;
      case 1: b.color = Vec3(down, hi, lo); break;
      case 2: b.color = Vec3(lo, hi, up); break;
      case 3: b.color = Vec3(lo, down, hi); break;
      case 4: b.color = Vec3(up, lo, hi); break;
      default: b.color = Vec3(hi, lo, down); break;
    }
    bones.push_back(b);
  }
  return AnalyticBodyField(skel, lengths, std::move(bones));
}

void AnalyticBodyField::evaluate(const BoneEncoding& enc, double* sigma, double* rgb) const {
  const std::size_t n = static_cast<std::size_t>(enc.num_samples);
  thread_local std::vector<double> acc;
  acc.assign(3 * n, 0.0);
  std::fill(sigma, sigma + n, 0.0);
  const kernels::KernelTable& kt = kernels::active();
  for (std::size_t b = 0; b < lobes_.size(); ++b) {
    const int p = parent_of_[b];
    kt.capsule_accumulate(n, enc.xs(p), enc.ys(p), enc.zs(p), lobes_[b], sigma, acc.data(),
                          acc.data() + n, acc.data() + 2 * n);
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (sigma[k] > 0.0) {
      const double inv = 1.0 / sigma[k];
      for (int c = 0; c < 3; ++c) rgb[3 * k + c] = std::min(acc[c * n + k] * inv, 1.0);
    } else {
      rgb[3 * k] = rgb[3 * k + 1] = rgb[3 * k + 2] = 0.0;
    }
  }
}

Aabb AnalyticBodyField::support(const PosedSkeleton& posed) const {
  Aabb box = Aabb::empty();
  for (std::size_t b = 0; b < lobes_.size(); ++b) {
    const int p = parent_of_[b];
    const Vec3 end(lobes_[b].end[0], lobes_[b].end[1], lobes_[b].end[2]);
    const double r = 1.0 / std::sqrt(lobes_[b].inv_radius2);
    const Vec3 a = posed.pos[p];
    const Vec3 c = a + posed.world_rot[p] * end;
    box.extend(a - Vec3::Constant(r));
    box.extend(a + Vec3::Constant(r));
    box.extend(c - Vec3::Constant(r));
    box.extend(c + Vec3::Constant(r));
  }
  return box;
}

ConstantField::ConstantField(double sigma, const Vec3& color, double half_extent)
    : sigma_(std::max(sigma, 0.0)), color_(color.cwiseMax(0.0).cwiseMin(1.0)), half_(half_extent) {}

void ConstantField::evaluate(const BoneEncoding& enc, double* sigma, double* rgb) const {
  const double* x = enc.xs(0);
  const double* y = enc.ys(0);
  const double* z = enc.zs(0);
  for (int k = 0; k < enc.num_samples; ++k) {
    const bool inside = std::abs(x[k]) <= half_ && std::abs(y[k]) <= half_ && std::abs(z[k]) <= half_;
    sigma[k] = inside ? sigma_ : 0.0;
    for (int c = 0; c < 3; ++c) rgb[3 * k + c] = inside ? color_[c] : 0.0;
  }
}

Aabb ConstantField::support(const PosedSkeleton& posed) const {
  Aabb box = Aabb::empty();
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 local((corner & 1) ? half_ : -half_, (corner & 2) ? half_ : -half_,
                     (corner & 4) ? half_ : -half_);
    box.extend(posed.pos[0] + posed.world_rot[0] * local);
  }
  return box;
}

SphereField::SphereField(int joint, const Vec3& center, double radius, double sigma,
                         const Vec3& color)
    : joint_(joint),
      center_(center),
      radius_(radius),
      sigma_(std::max(sigma, 0.0)),
      color_(color.cwiseMax(0.0).cwiseMin(1.0)) {}

void SphereField::evaluate(const BoneEncoding& enc, double* sigma, double* rgb) const {
  const double* x = enc.xs(joint_);
  const double* y = enc.ys(joint_);
  const double* z = enc.zs(joint_);
  const double r2 = radius_ * radius_;
  for (int k = 0; k < enc.num_samples; ++k) {
    const double d2 = (Vec3(x[k], y[k], z[k]) - center_).squaredNorm();
    const bool inside = d2 <= r2;
    sigma[k] = inside ? sigma_ : 0.0;
    for (int c = 0; c < 3; ++c) rgb[3 * k + c] = inside ? color_[c] : 0.0;
  }
}

Aabb SphereField::support(const PosedSkeleton& posed) const {
  const Vec3 c = posed.pos[joint_] + posed.world_rot[joint_] * center_;
  return Aabb{c - Vec3::Constant(radius_), c + Vec3::Constant(radius_)};
}

RayColor integrate(const double* sigma, const double* rgb, const double* deltas, std::size_t n) {
  thread_local std::vector<double> buf;
  buf.resize(4 * n);
  double* od = buf.data();
  double* before = od + n;
  double* trans = before + n;
  double* pass = trans + n;
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    od[k] = std::max(sigma[k], 0.0) * deltas[k];
    before[k] = acc;
    acc += od[k];
  }
  const kernels::KernelTable& kt = kernels::active();
  kt.exp_neg(n, before, trans);
  kt.exp_neg(n, od, pass);
  RayColor out;
  for (std::size_t k = 0; k < n; ++k) {
    const double w = trans[k] * (1.0 - pass[k]);
    out.color += w * Vec3(rgb[3 * k], rgb[3 * k + 1], rgb[3 * k + 2]);
    out.alpha += w;
  }
  out.alpha = std::clamp(out.alpha, 0.0, 1.0);
  return out;
}

RayColor render_layer(const RadianceField& field, const SampleBatch& batch,
                      const BoneEncoding& enc) {
  const std::size_t n = batch.size();
  if (static_cast<std::size_t>(enc.num_samples) != n) {
    throw Error(ErrorCode::DimensionMismatch, "encoding does not match the sample batch");
  }
  thread_local std::vector<double> sigma, rgb;
  sigma.resize(n);
  rgb.resize(3 * n);
  field.evaluate(enc, sigma.data(), rgb.data());
  return integrate(sigma.data(), rgb.data(), batch.deltas.data(), n);
}

Image composite(const LayerImage& real, const LayerImage& mirror, const Image& background) {
  if (real.width != mirror.width || real.height != mirror.height ||
      real.width != background.width || real.height != background.height) {
    throw Error(ErrorCode::DimensionMismatch, "layer and background sizes differ");
  }
  const std::size_t px = static_cast<std::size_t>(real.width) * real.height;
  std::vector<double> a(3 * px), ab(3 * px);
  for (std::size_t i = 0; i < px; ++i) {
    for (int c = 0; c < 3; ++c) {
      a[3 * i + c] = real.alpha[i];
      ab[3 * i + c] = mirror.alpha[i];
    }
  }
  Image out(real.width, real.height);
  kernels::active().composite(3 * px, real.color.data(), a.data(), mirror.color.data(), ab.data(),
                              background.rgb.data(), out.rgb.data());
  return out;
}

std::string to_string(RenderMode mode) {
  switch (mode) {
    case RenderMode::Layered: return "layered";
    case RenderMode::NoOcclusion: return "no-occlusion";
    case RenderMode::NoLayering: return "no-layering";
  }
  return "layered";
}

RenderMode parse_render_mode(const std::string& name) {
  if (name == "layered") return RenderMode::Layered;
  if (name == "no-occlusion") return RenderMode::NoOcclusion;
  if (name == "no-layering") return RenderMode::NoLayering;
  throw Error(ErrorCode::InvalidArgument, "unknown render mode '" + name + "'");
}

void parallel_rows(int rows, int threads, const std::function<void(int)>& fn) {
  const int workers = std::clamp(threads, 1, std::max(rows, 1));
  if (workers == 1) {
    for (int r = 0; r < rows; ++r) fn(r);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int r = next++; r < rows; r = next++) {
        if (failed) return;
        try {
          fn(r);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

struct Segment {
  Ray ray;
  double t0 = 0.0, t1 = 0.0;
};

std::optional<Segment> clip_segment(const Ray& ray, const Aabb& box) {
  const auto span = box.clip(ray);
  if (!span) return std::nullopt;
  return Segment{ray, span->first, span->second};
}

void place_samples(const Segment& seg, int count, std::mt19937_64* rng, SampleBatch& out) {
  const double width = (seg.t1 - seg.t0) / count;
  const double speed = seg.ray.dir.norm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < count; ++i) {
    const double u = rng ? unit(*rng) : 0.5;
    const double t = seg.t0 + (i + u) * width;
    out.t.push_back(t);
    out.positions.push_back(seg.ray.at(t));
    out.deltas.push_back(width * speed);
  }
}

std::uint64_t pixel_seed(std::uint64_t seed, std::size_t pixel, int stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (2 * static_cast<std::uint64_t>(pixel) + stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void store(LayerImage& layer, std::size_t idx, const RayColor& rc) {
  layer.alpha[idx] = rc.alpha;
  if (rc.alpha > 0.0) {
    for (int c = 0; c < 3; ++c) layer.color[3 * idx + c] = std::clamp(rc.color[c] / rc.alpha, 0.0, 1.0);
  }
}

}  // namespace

RenderOutput render_scene(const RadianceField& field, const CameraIntrinsics& k, const Plane& mirror,
                          const SkeletonDef& skel, const PoseParams& pose, int frame,
                          const RenderInputs& inputs, const RenderOptions& options) {
  k.validate();
  if (options.samples <= 0) throw Error(ErrorCode::InvalidArgument, "sample count must be positive");
  const int w = k.width, h = k.height;
  const Image black(w, h);
  const Image& bg = inputs.background ? *inputs.background : black;
  if (bg.width != w || bg.height != h) {
    throw Error(ErrorCode::DimensionMismatch, "background does not match the camera image size");
  }
  for (const Mask* m : {inputs.real_mask, inputs.mirror_mask}) {
    if (m && (m->width != w || m->height != h)) {
      throw Error(ErrorCode::DimensionMismatch, "mask does not match the camera image size");
    }
  }

  const PosedSkeleton posed = pose_skeleton(skel, pose, frame);
  const ReflectionTransform refl = reflection_matrix(mirror);
  std::vector<Vec3> mirrored;
  mirrored.reserve(posed.pos.size());
  for (const Vec3& p : posed.pos) mirrored.push_back(refl.apply(p));

  RenderOutput out;
  out.boxes = occlusion_boxes(k, posed.pos, mirrored, options.pad_fraction, options.iou_threshold);
  out.real = LayerImage(w, h);
  out.mirror = LayerImage(w, h);
  out.field_queries.assign(static_cast<std::size_t>(w) * h, 0);
  const Aabb box = field.support(posed);
  const bool layered = options.mode == RenderMode::Layered;
  const bool single_path = options.mode == RenderMode::NoLayering;

  parallel_rows(h, options.threads, [&](int y) {
    SampleBatch batch;
    std::vector<double> sigma, rgb;
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      const double u = x + 0.5, v = y + 0.5;
      const bool in_real = inputs.real_mask ? inputs.real_mask->test(x, y) : out.boxes.real.contains(u, v);
      const bool in_mirror =
          inputs.mirror_mask ? inputs.mirror_mask->test(x, y) : out.boxes.mirror.contains(u, v);
      const bool in_inter = !out.boxes.inter.empty() && out.boxes.inter.contains(u, v);
      bool want_real = in_real;
      bool want_mirror = in_mirror;
      if (layered || single_path) {
        want_real = want_real || in_inter;
        want_mirror = want_mirror || in_inter;
      } else if (in_real) {
        want_mirror = false;  // pasted: the real render owns its mask
      }
      if (!want_real && !want_mirror) continue;

      Ray direct;
      direct.dir = Vec3((u - k.o1) / k.f, (v - k.o2) / k.f, 1.0);
      std::optional<Segment> seg_real, seg_mirror;
      const auto t_s = intersect(direct, mirror);
      if (want_real) {
        Ray r = direct;
        if (t_s) r.t_far = *t_s;
        seg_real = clip_segment(r, box);
      }
      if (want_mirror && t_s) seg_mirror = clip_segment(reflect_ray(refl, direct), box);

      std::mt19937_64 rng_real(pixel_seed(options.seed, idx, 0));
      std::mt19937_64 rng_mirror(pixel_seed(options.seed, idx, 1));
      auto run = [&](int count_real, int count_mirror) {
        batch.positions.clear();
        batch.t.clear();
        batch.deltas.clear();
        if (count_real > 0) place_samples(*seg_real, count_real, options.jitter ? &rng_real : nullptr, batch);
        if (count_mirror > 0) {
          place_samples(*seg_mirror, count_mirror, options.jitter ? &rng_mirror : nullptr, batch);
        }
        const BoneEncoding enc = bone_relative_encode(batch.positions, posed);
        out.field_queries[idx] += static_cast<std::uint16_t>(batch.size());
        return render_layer(field, batch, enc);
      };

      if (single_path) {
        const int total = 2 * options.samples;
        const double len_r = seg_real ? (seg_real->t1 - seg_real->t0) : 0.0;
        const double len_m = seg_mirror ? (seg_mirror->t1 - seg_mirror->t0) : 0.0;
        if (!seg_real && !seg_mirror) continue;
        int n_real = 0;
        if (!seg_mirror) {
          n_real = total;
        } else if (seg_real) {
          const double share = len_r + len_m > 0.0 ? len_r / (len_r + len_m) : 0.5;
          n_real = std::clamp(static_cast<int>(std::lround(share * total)), 1, total - 1);
        }
        store(out.real, idx, run(n_real, total - n_real));
        continue;
      }
      if (seg_real) store(out.real, idx, run(options.samples, 0));
      if (seg_mirror) store(out.mirror, idx, run(0, options.samples));
    }
  });

  out.image = composite(out.real, out.mirror, bg);
  return out;
}

}  // namespace mirrorcap
