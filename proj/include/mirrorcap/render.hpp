#pragma once

// Step 3 rendering geometry: camera rays, bounded stratified sampling,
// bone-relative encoding, per-layer volume rendering and the back-to-front
// layered composite of the real person over the mirror person over the
// background.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mirrorcap/geometry.hpp"
#include "mirrorcap/kernels.hpp"
#include "mirrorcap/skeleton.hpp"

namespace mirrorcap {

constexpr int kSamplesPerRay = 64;

// RGB image in [0, 1], row-major, channels interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;

  Image() = default;
  Image(int w, int h, const Vec3& fill = Vec3::Zero());

  double* at(int x, int y) { return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const double* at(int x, int y) const {
    return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
};

// Color layer and alpha map. Colors are stored un-premultiplied so the
// composite applies L * alpha itself.
struct LayerImage {
  int width = 0;
  int height = 0;
  std::vector<double> color;  // 3 per pixel
  std::vector<double> alpha;  // 1 per pixel

  LayerImage() = default;
  LayerImage(int w, int h);
};

enum class MaskSource { ExternalFile, ProjectedBox };

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> on;
  MaskSource source = MaskSource::ProjectedBox;

  bool test(int x, int y) const { return on[static_cast<std::size_t>(y) * width + x] != 0; }
};

// Closed pixel-coordinate rectangle. Empty when x1 <= x0 or y1 <= y0.
struct PixelBox {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  bool empty() const { return !(x1 > x0 && y1 > y0); }
  double area() const { return empty() ? 0.0 : (x1 - x0) * (y1 - y0); }
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

PixelBox intersect(const PixelBox& a, const PixelBox& b);
// Bounding box of the points grown on every side by pad_fraction times its diagonal.
PixelBox padded_box(const std::vector<Vec2>& pts, double pad_fraction);

struct OcclusionBoxes {
  PixelBox real;
  PixelBox mirror;
  PixelBox inter;
  double iou = 0.0;
  bool occluded = false;  // iou above the threshold
};

OcclusionBoxes occlusion_boxes(const PixelBox& real, const PixelBox& mirror,
                               double iou_threshold = 0.1);
// Projects both joint sets (mirror joints already reflected into 3D) and boxes them.
OcclusionBoxes occlusion_boxes(const CameraIntrinsics& k, const std::vector<Vec3>& real_joints,
                               const std::vector<Vec3>& mirror_joints, double pad_fraction = 0.1,
                               double iou_threshold = 0.1);

// Occlusion handling is switched on for a sequence when more than
// min_fraction of its frames have iou above the threshold.
bool occlusion_enabled(const std::vector<double>& ious, double iou_threshold = 0.1,
                       double min_fraction = 0.05);

// Uniform random pixel positions inside the intersection box.
std::vector<Vec2> sample_occlusion_pixels(const OcclusionBoxes& boxes, int count,
                                          std::mt19937_64& rng);

Mask mask_from_box(int width, int height, const PixelBox& box);

// Camera rays through the given pixel positions; t_far comes from the scene
// box when one is given. Throws OutOfBounds for pixels outside the image.
std::vector<Ray> generate_rays(const CameraIntrinsics& k, const std::vector<Vec2>& pixels,
                               const std::optional<Aabb>& scene_box = std::nullopt);

struct SampleBatch {
  std::vector<Vec3> positions;  // increasing ray parameter
  std::vector<double> t;
  std::vector<double> deltas;   // bin length times |dir|
  int ray_id = 0;

  std::size_t size() const { return positions.size(); }
};

// Stratified samples over the ray's overlap with the box, one per equal bin.
// Without an rng each sample sits at its bin midpoint. Throws
// NoBoxIntersection when the ray misses the box.
SampleBatch sample_segment(const Ray& ray, const Aabb& box, int count = kSamplesPerRay,
                           std::mt19937_64* rng = nullptr, int ray_id = 0);

// Sample positions in every joint's local frame, structure of arrays:
// x[joint * num_samples + k].
struct BoneEncoding {
  int num_samples = 0;
  int num_joints = 0;
  std::vector<double> x, y, z;

  const double* xs(int joint) const { return x.data() + static_cast<std::size_t>(joint) * num_samples; }
  const double* ys(int joint) const { return y.data() + static_cast<std::size_t>(joint) * num_samples; }
  const double* zs(int joint) const { return z.data() + static_cast<std::size_t>(joint) * num_samples; }
};

BoneEncoding bone_relative_encode(const std::vector<Vec3>& samples, const PosedSkeleton& posed);
BoneEncoding bone_relative_encode(const std::vector<Vec3>& samples, const SkeletonDef& skel,
                                  const PoseParams& pose, int frame);

// Color and density as a function of bone-relative sample coordinates.
// Implementations are immutable after construction and safe to share
// across threads.
class RadianceField {
 public:
  virtual ~RadianceField() = default;

  // sigma[k] >= 0 and rgb[3k..3k+2] in [0, 1] for every encoded sample.
  virtual void evaluate(const BoneEncoding& enc, double* sigma, double* rgb) const = 0;

  // World-space box outside which the density vanishes for this pose.
  virtual Aabb support(const PosedSkeleton& posed) const = 0;
};

// One smooth capsule lobe per bone, attached to the bone's parent frame.
class AnalyticBodyField : public RadianceField {
 public:
  struct Bone {
    int joint = 0;  // child joint; the lobe lives in the parent's frame
    double radius = 0.06;
    double sigma_max = 40.0;
    Vec3 color = Vec3::Constant(0.5);
  };

  AnalyticBodyField(const SkeletonDef& skel, const std::vector<double>& lengths,
                    std::vector<Bone> bones);
  // Every bone with a default radius scaled to the skeleton and a distinct color.
  static AnalyticBodyField body(const SkeletonDef& skel, const std::vector<double>& lengths,
                                double sigma_max = 40.0);

  void evaluate(const BoneEncoding& enc, double* sigma, double* rgb) const override;
  Aabb support(const PosedSkeleton& posed) const override;

  const std::vector<Bone>& bones() const { return bones_; }

 private:
  std::vector<Bone> bones_;
  std::vector<int> parent_of_;
  std::vector<kernels::CapsuleLobe> lobes_;
};

// Uniform density inside a cube of the given half extent around the root
// joint, aligned with the root frame.
class ConstantField : public RadianceField {
 public:
  ConstantField(double sigma, const Vec3& color, double half_extent);
  void evaluate(const BoneEncoding& enc, double* sigma, double* rgb) const override;
  Aabb support(const PosedSkeleton& posed) const override;

 private:
  double sigma_;
  Vec3 color_;
  double half_;
};

// Hard-edged ball of uniform density around a point in one joint's frame.
class SphereField : public RadianceField {
 public:
  SphereField(int joint, const Vec3& center, double radius, double sigma, const Vec3& color);
  void evaluate(const BoneEncoding& enc, double* sigma, double* rgb) const override;
  Aabb support(const PosedSkeleton& posed) const override;

 private:
  int joint_;
  Vec3 center_;
  double radius_;
  double sigma_;
  Vec3 color_;
};

struct RayColor {
  Vec3 color = Vec3::Zero();
  double alpha = 0.0;
};

// Piecewise-constant quadrature: T_k = exp(-sum_{j<k} sigma_j delta_j),
// w_k = T_k (1 - exp(-sigma_k delta_k)). Color is premultiplied sum w_k gamma_k.
RayColor integrate(const double* sigma, const double* rgb, const double* deltas, std::size_t n);

// Evaluates the field on the batch and integrates it.
RayColor render_layer(const RadianceField& field, const SampleBatch& batch,
                      const BoneEncoding& enc);

// Background compositing of the two layers, per pixel and channel. Throws
// DimensionMismatch when sizes differ.
Image composite(const LayerImage& real, const LayerImage& mirror, const Image& background);

enum class RenderMode { Layered, NoOcclusion, NoLayering };

std::string to_string(RenderMode mode);
RenderMode parse_render_mode(const std::string& name);

struct RenderOptions {
  RenderMode mode = RenderMode::Layered;
  int samples = kSamplesPerRay;
  double pad_fraction = 0.1;
  double iou_threshold = 0.1;
  bool jitter = false;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct RenderInputs {
  const Image* background = nullptr;    // black when null
  const Mask* real_mask = nullptr;      // projected boxes when null
  const Mask* mirror_mask = nullptr;
};

struct RenderOutput {
  Image image;
  LayerImage real;
  LayerImage mirror;
  OcclusionBoxes boxes;
  std::vector<std::uint16_t> field_queries;  // per pixel
};

RenderOutput render_scene(const RadianceField& field, const CameraIntrinsics& k, const Plane& mirror,
                          const SkeletonDef& skel, const PoseParams& pose, int frame,
                          const RenderInputs& inputs = {}, const RenderOptions& options = {});

// Runs fn(row) for every row in [0, rows) on up to `threads` workers.
void parallel_rows(int rows, int threads, const std::function<void(int)>& fn);

}  // namespace mirrorcap
