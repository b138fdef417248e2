#include "mirrorcap/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace mirrorcap {

namespace {
constexpr double kMinDepth = 1e-9;
constexpr double kParallelEps = 1e-9;
}  // namespace

CameraIntrinsics CameraIntrinsics::centered(double f, int width, int height) {
  CameraIntrinsics k{f, 0.5 * width, 0.5 * height, width, height};
  k.validate();
  return k;
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 m;
  m << f, 0, o1, 0, f, o2, 0, 0, 1;
  return m;
}

Mat3 CameraIntrinsics::inverse_matrix() const {
  Mat3 m;
  m << 1.0 / f, 0, -o1 / f, 0, 1.0 / f, -o2 / f, 0, 0, 1;
  return m;
}

void CameraIntrinsics::validate() const {
  if (!(f > 0.0) || width <= 0 || height <= 0) {
    std::ostringstream os;
    os << "invalid intrinsics f=" << f << " size=" << width << "x" << height;
    throw Error(ErrorCode::InvalidArgument, os.str());
  }
}

Plane Plane::through_point(const Vec3& normal, const Vec3& point) {
  const double len = normal.norm();
  if (!(len > 0.0)) throw Error(ErrorCode::NonUnitNormal, "zero plane normal");
  Plane p;
  p.n = normal / len;
  p.d = -p.n.dot(point);
  return p;
}

Aabb Aabb::empty() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return Aabb{Vec3::Constant(inf), Vec3::Constant(-inf)};
}

void Aabb::extend(const Vec3& p) {
  lo = lo.cwiseMin(p);
  hi = hi.cwiseMax(p);
}

Aabb Aabb::padded(double pad) const {
  return Aabb{lo - Vec3::Constant(pad), hi + Vec3::Constant(pad)};
}

bool Aabb::contains(const Vec3& p) const {
  return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
}

std::optional<std::pair<double, double>> Aabb::clip(const Ray& ray) const {
  if (is_empty()) return std::nullopt;
  double t0 = ray.t_near;
  double t1 = ray.t_far;
  for (int axis = 0; axis < 3; ++axis) {
    const double o = ray.origin[axis];
    const double dv = ray.dir[axis];
    if (dv == 0.0) {
      if (o < lo[axis] || o > hi[axis]) return std::nullopt;
      continue;
    }
    double ta = (lo[axis] - o) / dv;
    double tb = (hi[axis] - o) / dv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

Vec2 project(const CameraIntrinsics& k, const Vec3& p) {
  if (p.z() <= kMinDepth) {
    std::ostringstream os;
    os << "point depth " << p.z() << " is not in front of the camera";
    throw Error(ErrorCode::NonPositiveDepth, os.str());
  }
  return Vec2(k.f * p.x() / p.z() + k.o1, k.f * p.y() / p.z() + k.o2);
}

Vec3 backproject_to_plane(const CameraIntrinsics& k, const Vec2& q, const Plane& plane) {
  const Vec3 dir((q.x() - k.o1) / k.f, (q.y() - k.o2) / k.f, 1.0);
  const double denom = plane.n.dot(dir);
  if (std::abs(denom) <= kParallelEps) {
    throw Error(ErrorCode::NoIntersection, "viewing ray is parallel to the plane");
  }
  const double t = -plane.d / denom;
  if (!(t > kMinDepth)) {
    throw Error(ErrorCode::NoIntersection, "plane intersection lies behind the camera");
  }
  return t * dir;
}

std::optional<double> intersect(const Ray& ray, const Plane& plane) {
  const double denom = plane.n.dot(ray.dir);
  if (std::abs(denom) <= kParallelEps) return std::nullopt;
  const double t = -plane.signed_distance(ray.origin) / denom;
  if (!(t > ray.t_near) || !(t < ray.t_far)) return std::nullopt;
  return t;
}

ReflectionTransform reflection_matrix(const Plane& plane) {
  const double len = plane.n.norm();
  if (!(std::abs(len - 1.0) <= 1e-6)) {
    std::ostringstream os;
    os << "plane normal has length " << len;
    throw Error(ErrorCode::NonUnitNormal, os.str());
  }
  const Vec3& n = plane.n;
  ReflectionTransform out;
  out.a_.topLeftCorner<3, 3>() = Mat3::Identity() - 2.0 * n * n.transpose();
  out.a_.topRightCorner<3, 1>() = -2.0 * plane.d * n;
  out.a_.bottomRows<1>() << 0, 0, 0, 1;
  out.plane_ = plane;
  return out;
}

VirtualCamera virtual_camera(const ReflectionTransform& a) {
  VirtualCamera cam;
  cam.r_bar = a.linear().transpose();
  cam.c_bar = a.apply(Vec3::Zero());
  return cam;
}

Ray reflect_ray(const ReflectionTransform& a, const Ray& ray) {
  const auto t_mirror = intersect(ray, a.plane());
  if (!t_mirror) {
    throw Error(ErrorCode::NoMirrorIntersection, "ray does not reach the mirror plane");
  }
  Ray out;
  out.origin = a.apply(ray.origin);
  out.dir = a.linear() * ray.dir;
  out.t_near = *t_mirror;
  out.t_far = ray.t_far;
  return out;
}

double view_angle_to_plane_deg(const Plane& plane) {
  const double s = std::clamp(std::abs(plane.n.normalized().z()), 0.0, 1.0);
  return std::asin(s) * 180.0 / std::numbers::pi;
}

}  // namespace mirrorcap
