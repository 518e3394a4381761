#include "layerbench/geometry.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace layerbench {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DegenerateRays: return "DegenerateRays";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::InsufficientViews: return "InsufficientViews";
    case ErrorCode::SingularInitialization: return "SingularInitialization";
    case ErrorCode::MismatchedPairs: return "MismatchedPairs";
    case ErrorCode::DegenerateBaseline: return "DegenerateBaseline";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DuplicateTagInImage: return "DuplicateTagInImage";
    case ErrorCode::MissingLabel: return "MissingLabel";
    case ErrorCode::CalibrationMismatch: return "CalibrationMismatch";
    case ErrorCode::EmptyCandidateSet: return "EmptyCandidateSet";
    case ErrorCode::MissingLayer: return "MissingLayer";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

Vec3 rodrigues(const Mat3& rotation) {
  const double trace = rotation.trace();
  const double cos_theta = std::clamp((trace - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  Vec3 axis(rotation(2, 1) - rotation(1, 2),
            rotation(0, 2) - rotation(2, 0),
            rotation(1, 0) - rotation(0, 1));
  if (theta < 1e-10) {
    // Small-angle: axis*theta ≈ off-diagonal differences / 2.
    return 0.5 * axis;
  }
  if (theta > M_PI - 1e-6) {
    // Near pi the off-diagonal differences vanish; recover the axis from the
    // symmetric part instead.
    Mat3 s = 0.5 * (rotation + Mat3::Identity());
    Vec3 a(std::sqrt(std::max(0.0, s(0, 0))),
           std::sqrt(std::max(0.0, s(1, 1))),
           std::sqrt(std::max(0.0, s(2, 2))));
    // Fix signs using the largest component.
    int k = 0;
    if (a.y() > a.x()) k = 1;
    if (a.z() > a[k]) k = 2;
    if (a[k] < 1e-12) return Vec3::Zero();
    if (k == 0) {
      a.y() = std::copysign(a.y(), s(0, 1));
      a.z() = std::copysign(a.z(), s(0, 2));
    } else if (k == 1) {
      a.x() = std::copysign(a.x(), s(0, 1));
      a.z() = std::copysign(a.z(), s(1, 2));
    } else {
      a.x() = std::copysign(a.x(), s(0, 2));
      a.y() = std::copysign(a.y(), s(1, 2));
    }
    return a.normalized() * theta;
  }
  return axis * (theta / (2.0 * std::sin(theta)));
}

Mat3 rodrigues_to_matrix(const Vec3& axis_angle) {
  const double theta = axis_angle.norm();
  Mat3 skew;
  skew << 0.0, -axis_angle.z(), axis_angle.y(),
      axis_angle.z(), 0.0, -axis_angle.x(),
      -axis_angle.y(), axis_angle.x(), 0.0;
  if (theta < 1e-10) {
    // First-order expansion keeps the map smooth through zero.
    return Mat3::Identity() + skew;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * skew + b * (skew * skew);
}

Pixel distort_pixel(const CameraIntrinsics& intr, const Pixel& ideal) {
  const double x = (ideal.x - intr.cx) / intr.fx;
  const double y = (ideal.y - intr.cy) / intr.fy;
  const double k1 = intr.dist[0], k2 = intr.dist[1], p1 = intr.dist[2],
               p2 = intr.dist[3], k3 = intr.dist[4];
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
  const double xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
  const double yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
  return {intr.fx * xd + intr.cx, intr.fy * yd + intr.cy};
}

Pixel project(const CameraIntrinsics& intr, const Pose& pose, const Point3& point) {
  const Vec3 cam = pose.apply(point);
  if (!(cam.z() > 0.0)) {
    throw Error(ErrorCode::NonPositiveDepth,
                "point has non-positive depth in camera frame");
  }
  const Pixel ideal{intr.fx * (cam.x() / cam.z()) + intr.cx,
                    intr.fy * (cam.y() / cam.z()) + intr.cy};
  return distort_pixel(intr, ideal);
}

Pixel undistort(const CameraIntrinsics& intr, const Pixel& px) {
  const double xd = (px.x - intr.cx) / intr.fx;
  const double yd = (px.y - intr.cy) / intr.fy;
  const double k1 = intr.dist[0], k2 = intr.dist[1], p1 = intr.dist[2],
               p2 = intr.dist[3], k3 = intr.dist[4];
  double x = xd;
  double y = yd;
  constexpr int kMaxIter = 50;
  constexpr double kTol = 1e-14;
  for (int it = 0; it < kMaxIter; ++it) {
    const double r2 = x * x + y * y;
    if (!std::isfinite(r2) || r2 > 1e4) {
      throw Error(ErrorCode::NoConvergence, "undistortion iteration diverged");
    }
    const double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
    const double dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
    const double dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
    if (radial == 0.0) {
      throw Error(ErrorCode::NoConvergence, "undistortion hit zero radial factor");
    }
    const double x_new = (xd - dx) / radial;
    const double y_new = (yd - dy) / radial;
    const double step = std::max(std::abs(x_new - x), std::abs(y_new - y));
    x = x_new;
    y = y_new;
    if (step < kTol) {
      return {intr.fx * x + intr.cx, intr.fy * y + intr.cy};
    }
  }
  throw Error(ErrorCode::NoConvergence, "undistortion did not converge");
}

Vec3 pixel_ray(const CameraIntrinsics& intr, const Pixel& undistorted) {
  Vec3 ray((undistorted.x - intr.cx) / intr.fx,
           (undistorted.y - intr.cy) / intr.fy, 1.0);
  return ray.normalized();
}

namespace {

// Pinhole projection without distortion, used on undistorted observations
// during triangulation. Returns false when depth is non-positive.
bool pinhole_project(const CameraIntrinsics& intr, const Mat3& r, const Vec3& t,
                     const Vec3& point, Pixel* out) {
  const Vec3 cam = r * point + t;
  if (!(cam.z() > 0.0)) return false;
  out->x = intr.fx * (cam.x() / cam.z()) + intr.cx;
  out->y = intr.fy * (cam.y() / cam.z()) + intr.cy;
  return true;
}

}  // namespace

Point3 triangulate(const StereoRig& rig, const Pixel& left_px, const Pixel& right_px) {
  const Mat3 rl = Mat3::Identity();
  const Vec3 tl = Vec3::Zero();
  const Mat3& rr = rig.relative.rotation;
  const Vec3& tr = rig.relative.translation;

  // Parallel-ray check in a common frame.
  const Vec3 dl = pixel_ray(rig.left, left_px);
  const Vec3 dr = rr.transpose() * pixel_ray(rig.right, right_px);
  const double angle = std::atan2(dl.cross(dr).norm(), dl.dot(dr));
  if (angle < 1e-10) {
    throw Error(ErrorCode::DegenerateRays, "viewing rays are parallel");
  }

  // Linear DLT on the two projection matrices.
  Eigen::Matrix<double, 3, 4> pl, pr;
  pl.leftCols<3>() = rig.left.matrix() * rl;
  pl.col(3) = rig.left.matrix() * tl;
  pr.leftCols<3>() = rig.right.matrix() * rr;
  pr.col(3) = rig.right.matrix() * tr;

  Eigen::Matrix4d a;
  a.row(0) = left_px.x * pl.row(2) - pl.row(0);
  a.row(1) = left_px.y * pl.row(2) - pl.row(1);
  a.row(2) = right_px.x * pr.row(2) - pr.row(0);
  a.row(3) = right_px.y * pr.row(2) - pr.row(1);

  Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
  Eigen::Vector4d xh = svd.matrixV().col(3);
  if (std::abs(xh(3)) < 1e-15 * xh.norm()) {
    throw Error(ErrorCode::DegenerateRays, "triangulated point at infinity");
  }
  Vec3 x = xh.head<3>() / xh(3);

  // Gauss-Newton refinement of the reprojection error. Analytic Jacobian of
  // the pinhole model; a step that pushes the point behind a camera is
  // treated as a failed refinement and falls back to the current estimate.
  for (int it = 0; it < 10; ++it) {
    Eigen::Matrix<double, 4, 1> res;
    Eigen::Matrix<double, 4, 3> jac;
    bool feasible = true;
    const struct {
      const Mat3& r;
      const Vec3& t;
      const CameraIntrinsics& intr;
      const Pixel& obs;
    } views[2] = {{rl, tl, rig.left, left_px}, {rr, tr, rig.right, right_px}};
    for (int v = 0; v < 2 && feasible; ++v) {
      const Vec3 cam = views[v].r * x + views[v].t;
      if (!(cam.z() > 0.0)) {
        feasible = false;
        break;
      }
      const double inv_z = 1.0 / cam.z();
      res(2 * v + 0) = views[v].intr.fx * cam.x() * inv_z + views[v].intr.cx - views[v].obs.x;
      res(2 * v + 1) = views[v].intr.fy * cam.y() * inv_z + views[v].intr.cy - views[v].obs.y;
      jac.row(2 * v + 0) = views[v].intr.fx * inv_z *
          (views[v].r.row(0) - cam.x() * inv_z * views[v].r.row(2));
      jac.row(2 * v + 1) = views[v].intr.fy * inv_z *
          (views[v].r.row(1) - cam.y() * inv_z * views[v].r.row(2));
    }
    if (!feasible) break;
    const Vec3 step = (jac.transpose() * jac).ldlt().solve(-(jac.transpose() * res));
    if (!step.allFinite()) break;
    x += step;
    if (step.norm() < 1e-10) break;
  }

  if (!(x.z() > 0.0)) {
    throw Error(ErrorCode::BehindCamera, "point behind left camera");
  }
  if (!((rr * x + tr).z() > 0.0)) {
    throw Error(ErrorCode::BehindCamera, "point behind right camera");
  }
  return x;
}

}  // namespace layerbench
