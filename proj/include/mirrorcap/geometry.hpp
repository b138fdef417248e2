#pragma once

// Pinhole camera, plane and mirror-reflection math.
//
// Conventions: the real camera sits at the origin looking along +z, with x to
// the right and y pointing down (pixel orientation). A plane is the set
// { p : n.p + d = 0 } with unit n.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <limits>
#include <optional>
#include <utility>

#include "mirrorcap/error.hpp"

namespace mirrorcap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

struct CameraIntrinsics {
  double f = 1.0;   // focal length, pixels
  double o1 = 0.0;  // principal point x, pixels
  double o2 = 0.0;  // principal point y, pixels
  int width = 1;
  int height = 1;

  // Principal point at the image center.
  static CameraIntrinsics centered(double f, int width, int height);

  Mat3 matrix() const;
  Mat3 inverse_matrix() const;
  void validate() const;
};

struct Plane {
  Vec3 n = Vec3::UnitZ();
  double d = 0.0;

  static Plane through_point(const Vec3& normal, const Vec3& point);

  double signed_distance(const Vec3& p) const { return n.dot(p) + d; }
  // Point on the plane closest to the origin.
  Vec3 anchor() const { return -d * n; }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = std::numeric_limits<double>::infinity();

  Vec3 at(double t) const { return origin + t * dir; }
};

struct Aabb {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  static Aabb empty();
  void extend(const Vec3& p);
  Aabb padded(double pad) const;
  bool is_empty() const { return (hi.array() < lo.array()).any(); }
  bool contains(const Vec3& p) const;
  // Parametric overlap of the ray's [t_near, t_far] range with the box.
  std::optional<std::pair<double, double>> clip(const Ray& ray) const;
};

class ReflectionTransform {
 public:
  const Mat4& matrix() const { return a_; }
  Mat3 linear() const { return a_.topLeftCorner<3, 3>(); }
  const Plane& plane() const { return plane_; }

  Vec3 apply(const Vec3& p) const { return linear() * p + a_.topRightCorner<3, 1>(); }

 private:
  friend ReflectionTransform reflection_matrix(const Plane& plane);
  Mat4 a_ = Mat4::Identity();
  Plane plane_;
};

struct VirtualCamera {
  Mat3 r_bar = Mat3::Identity();
  Vec3 c_bar = Vec3::Zero();
};

// q = K p. Throws NonPositiveDepth when p.z <= 1e-9.
Vec2 project(const CameraIntrinsics& k, const Vec3& p);

// Intersects the viewing ray through pixel q with the plane. Throws
// NoIntersection for parallel rays or intersections behind the camera.
Vec3 backproject_to_plane(const CameraIntrinsics& k, const Vec2& q, const Plane& plane);

// Ray parameter where the ray crosses the plane, if it does so inside
// (t_near, t_far).
std::optional<double> intersect(const Ray& ray, const Plane& plane);

// Householder reflection across the plane in homogeneous form:
// A (p,1) = p - 2 (n.p + d) n. Throws NonUnitNormal if | |n| - 1 | > 1e-6.
ReflectionTransform reflection_matrix(const Plane& plane);

// R_bar = A_3x3^T, c_bar = A applied to the real camera center.
VirtualCamera virtual_camera(const ReflectionTransform& a);

// Ray seen from the virtual camera: origin c_bar, direction A_3x3 dir, and
// t_near at the mirror crossing so the segment covers only the reflected
// part of the physical path. Throws NoMirrorIntersection when the input ray
// does not reach the mirror inside (t_near, t_far).
Ray reflect_ray(const ReflectionTransform& a, const Ray& ray);

// Angle in degrees between the camera optical axis and the plane: 0 when the
// camera looks along the plane, 90 when it faces the plane head on.
double view_angle_to_plane_deg(const Plane& plane);

}  // namespace mirrorcap
