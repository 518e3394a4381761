#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>

#include "layerbench/errors.hpp"

namespace layerbench {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Point3 = Vec3;

struct Pixel {
  double x = 0.0;
  double y = 0.0;
};

struct FlowVec {
  double dx = 0.0;
  double dy = 0.0;
};

inline double flow_norm(const FlowVec& f) { return std::hypot(f.dx, f.dy); }

// Pinhole intrinsics with Brown-Conrady distortion [k1, k2, p1, p2, k3].
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::array<double, 5> dist{0.0, 0.0, 0.0, 0.0, 0.0};

  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  bool has_distortion() const {
    for (double d : dist)
      if (d != 0.0) return true;
    return false;
  }
};

// Rigid transform x' = R x + t. Used both as a camera extrinsic
// (world -> camera) and as a generic rigid motion between frames.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }

  Pose inverse() const {
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(rotation.transpose() * translation);
    return inv;
  }

  // this ∘ other: first apply `other`, then this.
  Pose compose(const Pose& other) const {
    Pose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }

  // Camera center (for an extrinsic pose): the point mapping to the origin.
  Vec3 center() const { return -(rotation.transpose() * translation); }
};

enum class CameraSide { Left, Right };
enum class Frame { T0, T1 };

// Calibrated stereo pair. `relative` maps left-camera coordinates to
// right-camera coordinates: x_right = R x_left + t.
struct StereoRig {
  CameraIntrinsics left;
  CameraIntrinsics right;
  Pose relative;
  int width = 0;
  int height = 0;

  double baseline() const { return relative.translation.norm(); }
};

// Projection of the closest rotation matrix (Frobenius sense) via SVD,
// with det +1 enforced.
Mat3 nearest_rotation(const Mat3& m);

// Axis-angle (Rodrigues) conversions; rodrigues(m) returns axis * angle.
Vec3 rodrigues(const Mat3& rotation);
Mat3 rodrigues_to_matrix(const Vec3& axis_angle);

// Full projection: rigid transform, perspective divide, distortion,
// pixel mapping. Throws NonPositiveDepth if the camera-frame depth is <= 0.
Pixel project(const CameraIntrinsics& intr, const Pose& pose, const Point3& point);

// Distortion applied to an ideal (distortion-free) pixel position.
Pixel distort_pixel(const CameraIntrinsics& intr, const Pixel& ideal);

// Inverse of the distortion model by fixed-point iteration; returns the
// ideal pixel whose distorted image is `px`. Throws NoConvergence if the
// iteration diverges or fails to settle.
Pixel undistort(const CameraIntrinsics& intr, const Pixel& px);

// Unit ray direction in the camera frame for an undistorted pixel.
Vec3 pixel_ray(const CameraIntrinsics& intr, const Pixel& undistorted);

// Two-view triangulation from undistorted pixel observations: linear DLT
// initialization refined by a few Gauss-Newton steps on reprojection error.
// Returns the point in the left-camera frame. Throws DegenerateRays when the
// viewing rays are parallel, BehindCamera when the point lands at
// non-positive depth in either view.
Point3 triangulate(const StereoRig& rig, const Pixel& left_px, const Pixel& right_px);

}  // namespace layerbench
