#include "layerbench/calibration.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace layerbench {

std::vector<Point3> BoardSpec::corner_points() const {
  std::vector<Point3> pts;
  pts.reserve(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      pts.emplace_back(c * square_size, r * square_size, 0.0);
  return pts;
}

Mat3 homography_dlt(const std::vector<Pixel>& plane_pts,
                    const std::vector<Pixel>& image_pts) {
  if (plane_pts.size() != image_pts.size()) {
    throw Error(ErrorCode::SizeMismatch, "point lists differ in length");
  }
  const size_t n = plane_pts.size();
  if (n < 4) {
    throw Error(ErrorCode::SizeMismatch, "homography needs at least 4 points");
  }

  // Hartley normalization: centroid to origin, mean distance to sqrt(2).
  auto normalizer = [](const std::vector<Pixel>& pts) {
    double cx = 0.0, cy = 0.0;
    for (const Pixel& p : pts) {
      cx += p.x;
      cy += p.y;
    }
    cx /= pts.size();
    cy /= pts.size();
    double mean_dist = 0.0;
    for (const Pixel& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
    mean_dist /= pts.size();
    const double s = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
    Mat3 t;
    t << s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0;
    return t;
  };
  const Mat3 t_plane = normalizer(plane_pts);
  const Mat3 t_image = normalizer(image_pts);

  Eigen::MatrixXd a(2 * n, 9);
  for (size_t i = 0; i < n; ++i) {
    const Vec3 pw = t_plane * Vec3(plane_pts[i].x, plane_pts[i].y, 1.0);
    const Vec3 pi = t_image * Vec3(image_pts[i].x, image_pts[i].y, 1.0);
    const double xw = pw.x(), yw = pw.y(), xi = pi.x(), yi = pi.y();
    a.row(2 * i) << -xw, -yw, -1.0, 0.0, 0.0, 0.0, xi * xw, xi * yw, xi;
    a.row(2 * i + 1) << 0.0, 0.0, 0.0, -xw, -yw, -1.0, yi * xw, yi * yw, yi;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Mat3 out = t_image.inverse() * hn * t_plane;
  if (std::abs(out(2, 2)) < 1e-15) {
    throw Error(ErrorCode::SingularInitialization, "degenerate homography");
  }
  return out / out(2, 2);
}

namespace {

// ---------------------------------------------------------------------------
// Levenberg-Marquardt driver shared by both calibration entry points.
// The residual functor returns false for infeasible parameters (e.g. a board
// pose placing corners at non-positive depth); such trial steps are rejected.

using ResidualFn = std::function<bool(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct LmOutcome {
  Eigen::VectorXd params;
  double cost = 0.0;
  std::vector<double> history;
};

LmOutcome levenberg_marquardt(const ResidualFn& f, Eigen::VectorXd params,
                              int residual_count, const CalibrationOptions& opts) {
  Eigen::VectorXd res(residual_count);
  if (!f(params, res)) {
    throw Error(ErrorCode::NoConvergence, "initial parameters are infeasible");
  }
  double cost = res.squaredNorm();

  LmOutcome out;
  out.history.push_back(cost);

  const int n = static_cast<int>(params.size());
  Eigen::MatrixXd jac(residual_count, n);
  Eigen::MatrixXd normal(n, n);
  Eigen::VectorXd grad(n);

  double lambda = opts.lambda_init;
  bool reduced = false;
  bool converged = false;
  bool need_jacobian = true;
  int iter = 0;

  for (; iter < opts.max_iterations && !converged; ++iter) {
    if (need_jacobian) {
      // Central differences; columns are independent, so compute in parallel.
#pragma omp parallel for schedule(static)
      for (int j = 0; j < n; ++j) {
        const double h = 6e-6 * std::max(1.0, std::abs(params(j)));
        Eigen::VectorXd probe = params;
        Eigen::VectorXd r_plus(residual_count), r_minus(residual_count);
        probe(j) = params(j) + h;
        const bool ok_plus = f(probe, r_plus);
        probe(j) = params(j) - h;
        const bool ok_minus = f(probe, r_minus);
        if (ok_plus && ok_minus) {
          jac.col(j) = (r_plus - r_minus) / (2.0 * h);
        } else if (ok_plus) {
          jac.col(j) = (r_plus - res) / h;
        } else if (ok_minus) {
          jac.col(j) = (res - r_minus) / h;
        } else {
          jac.col(j).setZero();
        }
      }
      normal = jac.transpose() * jac;
      grad = jac.transpose() * res;
      need_jacobian = false;
    }

    Eigen::MatrixXd damped = normal;
    for (int d = 0; d < n; ++d) {
      damped(d, d) += lambda * std::max(normal(d, d), 1e-12);
    }
    const Eigen::VectorXd step = damped.ldlt().solve(-grad);

    bool accepted = false;
    if (step.allFinite()) {
      const Eigen::VectorXd trial = params + step;
      Eigen::VectorXd trial_res(residual_count);
      if (f(trial, trial_res)) {
        const double trial_cost = trial_res.squaredNorm();
        if (trial_cost <= cost) {
          const double rel = (cost - trial_cost) / std::max(cost, 1e-300);
          if (trial_cost < cost) reduced = true;
          params = trial;
          res = trial_res;
          cost = trial_cost;
          out.history.push_back(cost);
          lambda = std::max(lambda * 0.1, 1e-14);
          need_jacobian = true;
          accepted = true;
          if (rel < opts.relative_tolerance) converged = true;
        }
      }
    }
    if (!accepted) {
      lambda *= 10.0;
      if (lambda > 1e14) break;  // plateau: no further progress possible
    }
  }

  if (!converged && !reduced && iter >= opts.max_iterations) {
    throw Error(ErrorCode::NoConvergence,
                "refinement exhausted its iterations without reducing cost");
  }

  out.params = std::move(params);
  out.cost = cost;
  return out;
}

// Projection written out exception-free for the optimizer hot path.
inline bool project_residual(const CameraIntrinsics& intr, const Mat3& r,
                             const Vec3& t, const Point3& pt, const Pixel& obs,
                             double* rx, double* ry) {
  const Vec3 cam = r * pt + t;
  if (!(cam.z() > 1e-9)) return false;
  const double x = cam.x() / cam.z();
  const double y = cam.y() / cam.z();
  const double k1 = intr.dist[0], k2 = intr.dist[1], p1 = intr.dist[2],
               p2 = intr.dist[3], k3 = intr.dist[4];
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
  const double xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
  const double yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
  *rx = intr.fx * xd + intr.cx - obs.x;
  *ry = intr.fy * yd + intr.cy - obs.y;
  return true;
}

CameraIntrinsics intrinsics_from_params(const Eigen::VectorXd& p, int offset) {
  CameraIntrinsics intr;
  intr.fx = p(offset);
  intr.fy = p(offset + 1);
  intr.cx = p(offset + 2);
  intr.cy = p(offset + 3);
  for (int i = 0; i < 5; ++i) intr.dist[i] = p(offset + 4 + i);
  return intr;
}

// Closed-form intrinsics from the image of the absolute conic, zero skew.
CameraIntrinsics intrinsics_from_homographies(const std::vector<Mat3>& hs) {
  auto conic_row = [](const Mat3& h, int i, int j) {
    const Vec3 a = h.col(i);
    const Vec3 b = h.col(j);
    Eigen::Matrix<double, 6, 1> v;
    v << a(0) * b(0), a(0) * b(1) + a(1) * b(0), a(1) * b(1),
        a(2) * b(0) + a(0) * b(2), a(2) * b(1) + a(1) * b(2), a(2) * b(2);
    return v;
  };

  const int n = static_cast<int>(hs.size());
  Eigen::MatrixXd v(2 * n + 1, 6);
  for (int k = 0; k < n; ++k) {
    v.row(2 * k) = conic_row(hs[k], 0, 1).transpose();
    v.row(2 * k + 1) =
        (conic_row(hs[k], 0, 0) - conic_row(hs[k], 1, 1)).transpose();
  }
  // Zero-skew constraint B12 = 0, scaled to the magnitude of the data rows.
  const double scale = v.topRows(2 * n).rowwise().norm().mean();
  v.row(2 * n) << 0.0, scale, 0.0, 0.0, 0.0, 0.0;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeFullV);
  Eigen::Matrix<double, 6, 1> b = svd.matrixV().col(5);
  if (b(0) < 0.0) b = -b;

  const double b11 = b(0), b12 = b(1), b22 = b(2), b13 = b(3), b23 = b(4),
               b33 = b(5);
  const double denom = b11 * b22 - b12 * b12;
  if (!(b11 > 0.0) || !(denom > 0.0)) {
    throw Error(ErrorCode::SingularInitialization,
                "absolute-conic system is rank-deficient");
  }
  const double v0 = (b12 * b13 - b11 * b23) / denom;
  const double lam = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11;
  if (!(lam > 0.0)) {
    throw Error(ErrorCode::SingularInitialization,
                "absolute-conic solution is not a valid camera");
  }
  CameraIntrinsics intr;
  intr.fx = std::sqrt(lam / b11);
  intr.fy = std::sqrt(lam * b11 / denom);
  intr.cx = -b13 * intr.fx * intr.fx / lam;
  intr.cy = v0;
  if (!std::isfinite(intr.fx) || !std::isfinite(intr.fy) ||
      !std::isfinite(intr.cx) || !std::isfinite(intr.cy) || intr.fx > 1e7 ||
      intr.fy > 1e7) {
    throw Error(ErrorCode::SingularInitialization,
                "absolute-conic solution is not a valid camera");
  }
  return intr;
}

Pose extrinsics_from_homography(const Mat3& k, const Mat3& h) {
  const Mat3 k_inv = k.inverse();
  Vec3 r0 = k_inv * h.col(0);
  Vec3 r1 = k_inv * h.col(1);
  Vec3 t = k_inv * h.col(2);
  const double lam = 2.0 / (r0.norm() + r1.norm());
  r0 *= lam;
  r1 *= lam;
  t *= lam;
  if (t.z() < 0.0) {  // homography sign ambiguity: board must face the camera
    r0 = -r0;
    r1 = -r1;
    t = -t;
  }
  Mat3 approx;
  approx.col(0) = r0;
  approx.col(1) = r1;
  approx.col(2) = r0.cross(r1);
  return Pose{nearest_rotation(approx), t};
}

void check_observation(const ChessboardObservation& obs) {
  if (obs.board.rows < 2 || obs.board.cols < 2 || !(obs.board.square_size > 0.0)) {
    throw Error(ErrorCode::SizeMismatch, "board must be at least 2x2 corners");
  }
  if (obs.corners.size() != static_cast<size_t>(obs.board.rows) * obs.board.cols) {
    throw Error(ErrorCode::SizeMismatch,
                "corner count does not match board layout");
  }
}

std::vector<Pixel> board_plane_points(const BoardSpec& board) {
  std::vector<Pixel> pts;
  pts.reserve(static_cast<size_t>(board.rows) * board.cols);
  for (const Point3& p : board.corner_points()) pts.push_back({p.x(), p.y()});
  return pts;
}

// Board pose for a pre-calibrated camera: undistort corners, homography in
// normalized coordinates, extrinsics with K = I.
Pose board_pose_calibrated(const CameraIntrinsics& intr,
                           const ChessboardObservation& obs) {
  std::vector<Pixel> normalized;
  normalized.reserve(obs.corners.size());
  for (const Pixel& c : obs.corners) {
    const Pixel u = undistort(intr, c);
    normalized.push_back({(u.x - intr.cx) / intr.fx, (u.y - intr.cy) / intr.fy});
  }
  const Mat3 h = homography_dlt(board_plane_points(obs.board), normalized);
  return extrinsics_from_homography(Mat3::Identity(), h);
}

}  // namespace

SingleCalibration calibrate_single(const std::vector<ChessboardObservation>& views,
                                   const CalibrationOptions& opts) {
  if (views.size() < 3) {
    throw Error(ErrorCode::InsufficientViews,
                "plane-based calibration needs at least 3 views");
  }
  for (const ChessboardObservation& v : views) check_observation(v);

  std::vector<Mat3> homographies;
  homographies.reserve(views.size());
  for (const ChessboardObservation& v : views) {
    homographies.push_back(
        homography_dlt(board_plane_points(v.board), v.corners));
  }

  const CameraIntrinsics init = intrinsics_from_homographies(homographies);

  const int n_views = static_cast<int>(views.size());
  Eigen::VectorXd params(9 + 6 * n_views);
  params << init.fx, init.fy, init.cx, init.cy, 0.0, 0.0, 0.0, 0.0, 0.0,
      Eigen::VectorXd::Zero(6 * n_views);
  int residual_count = 0;
  std::vector<std::vector<Point3>> world(views.size());
  for (int v = 0; v < n_views; ++v) {
    const Pose pose = extrinsics_from_homography(init.matrix(), homographies[v]);
    params.segment<3>(9 + 6 * v) = rodrigues(pose.rotation);
    params.segment<3>(9 + 6 * v + 3) = pose.translation;
    world[v] = views[v].board.corner_points();
    residual_count += 2 * static_cast<int>(world[v].size());
  }

  auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& out) {
    if (!(p(0) > 0.0) || !(p(1) > 0.0)) return false;
    const CameraIntrinsics intr = intrinsics_from_params(p, 0);
    int idx = 0;
    for (int v = 0; v < n_views; ++v) {
      const Mat3 r = rodrigues_to_matrix(p.segment<3>(9 + 6 * v));
      const Vec3 t = p.segment<3>(9 + 6 * v + 3);
      for (size_t i = 0; i < world[v].size(); ++i) {
        if (!project_residual(intr, r, t, world[v][i], views[v].corners[i],
                              &out(idx), &out(idx + 1))) {
          return false;
        }
        idx += 2;
      }
    }
    return true;
  };

  const LmOutcome lm = levenberg_marquardt(residuals, params, residual_count, opts);

  SingleCalibration result;
  result.intrinsics = intrinsics_from_params(lm.params, 0);
  result.view_poses.reserve(views.size());
  for (int v = 0; v < n_views; ++v) {
    result.view_poses.push_back(
        Pose{rodrigues_to_matrix(lm.params.segment<3>(9 + 6 * v)),
             lm.params.segment<3>(9 + 6 * v + 3)});
  }
  result.rms_error = std::sqrt(lm.cost / residual_count);
  result.cost_history = lm.history;
  return result;
}

StereoCalibration calibrate_stereo(const std::vector<ChessboardObservation>& left_views,
                                   const std::vector<ChessboardObservation>& right_views,
                                   const CameraIntrinsics& left_intr,
                                   const CameraIntrinsics& right_intr,
                                   int image_width, int image_height,
                                   const CalibrationOptions& opts) {
  if (left_views.size() != right_views.size()) {
    throw Error(ErrorCode::MismatchedPairs,
                "left and right view counts differ");
  }
  if (image_width <= 0 || image_height <= 0) {
    throw Error(ErrorCode::SizeMismatch, "image size must be positive");
  }

  std::vector<size_t> left_order(left_views.size()), right_order(right_views.size());
  std::iota(left_order.begin(), left_order.end(), 0);
  std::iota(right_order.begin(), right_order.end(), 0);
  auto by_id = [](const std::vector<ChessboardObservation>& vs) {
    return [&vs](size_t a, size_t b) { return vs[a].view_id < vs[b].view_id; };
  };
  std::sort(left_order.begin(), left_order.end(), by_id(left_views));
  std::sort(right_order.begin(), right_order.end(), by_id(right_views));

  const int n_views = static_cast<int>(left_views.size());
  for (int v = 0; v < n_views; ++v) {
    const ChessboardObservation& l = left_views[left_order[v]];
    const ChessboardObservation& r = right_views[right_order[v]];
    if (l.view_id != r.view_id) {
      throw Error(ErrorCode::MismatchedPairs,
                  "view ids do not pair up (left " + std::to_string(l.view_id) +
                      " vs right " + std::to_string(r.view_id) + ")");
    }
    if (v > 0 && left_views[left_order[v - 1]].view_id == l.view_id) {
      throw Error(ErrorCode::MismatchedPairs,
                  "duplicate view id " + std::to_string(l.view_id));
    }
    if (l.board.rows != r.board.rows || l.board.cols != r.board.cols ||
        l.board.square_size != r.board.square_size) {
      throw Error(ErrorCode::MismatchedPairs,
                  "board layouts differ for view " + std::to_string(l.view_id));
    }
    check_observation(l);
    check_observation(r);
  }
  if (n_views < 3) {
    throw Error(ErrorCode::InsufficientViews,
                "stereo calibration needs at least 3 view pairs");
  }

  // Initialize: per-view poses against each camera, chordal-averaged
  // relative pose.
  std::vector<Pose> left_poses(n_views);
  Mat3 rot_sum = Mat3::Zero();
  Vec3 t_sum = Vec3::Zero();
  for (int v = 0; v < n_views; ++v) {
    const Pose pl = board_pose_calibrated(left_intr, left_views[left_order[v]]);
    const Pose pr = board_pose_calibrated(right_intr, right_views[right_order[v]]);
    left_poses[v] = pl;
    const Pose rel = pr.compose(pl.inverse());
    rot_sum += rel.rotation;
    t_sum += rel.translation;
  }
  const Pose rel_init{nearest_rotation(rot_sum), t_sum / n_views};

  Eigen::VectorXd params(6 + 6 * n_views);
  params.segment<3>(0) = rodrigues(rel_init.rotation);
  params.segment<3>(3) = rel_init.translation;
  int residual_count = 0;
  std::vector<std::vector<Point3>> world(n_views);
  for (int v = 0; v < n_views; ++v) {
    params.segment<3>(6 + 6 * v) = rodrigues(left_poses[v].rotation);
    params.segment<3>(6 + 6 * v + 3) = left_poses[v].translation;
    world[v] = left_views[left_order[v]].board.corner_points();
    residual_count += 4 * static_cast<int>(world[v].size());
  }

  auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& out) {
    const Mat3 r_rel = rodrigues_to_matrix(p.segment<3>(0));
    const Vec3 t_rel = p.segment<3>(3);
    int idx = 0;
    for (int v = 0; v < n_views; ++v) {
      const Mat3 r_board = rodrigues_to_matrix(p.segment<3>(6 + 6 * v));
      const Vec3 t_board = p.segment<3>(6 + 6 * v + 3);
      const Mat3 r_right = r_rel * r_board;
      const Vec3 t_right = r_rel * t_board + t_rel;
      const ChessboardObservation& lv = left_views[left_order[v]];
      const ChessboardObservation& rv = right_views[right_order[v]];
      for (size_t i = 0; i < world[v].size(); ++i) {
        if (!project_residual(left_intr, r_board, t_board, world[v][i],
                              lv.corners[i], &out(idx), &out(idx + 1)) ||
            !project_residual(right_intr, r_right, t_right, world[v][i],
                              rv.corners[i], &out(idx + 2), &out(idx + 3))) {
          return false;
        }
        idx += 4;
      }
    }
    return true;
  };

  const LmOutcome lm = levenberg_marquardt(residuals, params, residual_count, opts);

  StereoCalibration result;
  result.rig.left = left_intr;
  result.rig.right = right_intr;
  result.rig.relative = Pose{rodrigues_to_matrix(lm.params.segment<3>(0)),
                             lm.params.segment<3>(3)};
  result.rig.width = image_width;
  result.rig.height = image_height;
  result.board_poses.reserve(n_views);
  for (int v = 0; v < n_views; ++v) {
    result.board_poses.push_back(
        Pose{rodrigues_to_matrix(lm.params.segment<3>(6 + 6 * v)),
             lm.params.segment<3>(6 + 6 * v + 3)});
  }
  result.rms_error = std::sqrt(lm.cost / residual_count);
  result.cost_history = lm.history;
  return result;
}

RectifyMap rectify(const StereoRig& rig) {
  const Vec3& t = rig.relative.translation;
  if (t.norm() < 1e-9) {
    throw Error(ErrorCode::DegenerateBaseline, "baseline is numerically zero");
  }

  // Split the relative rotation evenly between the two cameras, then rotate
  // both so the right-camera centre lands on the rectified x-axis.
  const Vec3 om = rodrigues(rig.relative.rotation);
  const Mat3 r_half = rodrigues_to_matrix(0.5 * om);
  const Vec3 centre = rig.relative.center();  // right camera in left frame
  const Vec3 ch = r_half * centre;

  Vec3 e1 = ch.normalized();
  if (ch.x() < 0.0) e1 = -e1;  // keep +x disparity orientation
  Vec3 e2;
  const double xy = std::hypot(e1.x(), e1.y());
  if (xy < 1e-12) {
    e2 = Vec3(0.0, 1.0, 0.0);  // baseline along the optical axis
  } else {
    e2 = Vec3(-e1.y() / xy, e1.x() / xy, 0.0);
  }
  const Vec3 e3 = e1.cross(e2);
  Mat3 align;
  align.row(0) = e1;
  align.row(1) = e2;
  align.row(2) = e3;

  RectifyMap map;
  map.left_rotation = nearest_rotation(align * r_half);
  map.right_rotation =
      nearest_rotation(align * r_half * rig.relative.rotation.transpose());
  map.rectified.fx = map.rectified.fy =
      0.25 * (rig.left.fx + rig.left.fy + rig.right.fx + rig.right.fy);
  map.rectified.cx = rig.width / 2.0;
  map.rectified.cy = rig.height / 2.0;
  map.rectified.dist = {0.0, 0.0, 0.0, 0.0, 0.0};

  // Shared valid region: intersect the inner axis-aligned bounds of both
  // warped image outlines, sampled along each edge.
  double x0 = 0.0, y0 = 0.0;
  double x1 = static_cast<double>(rig.width), y1 = static_cast<double>(rig.height);
  constexpr int kEdgeSamples = 17;
  for (CameraSide side : {CameraSide::Left, CameraSide::Right}) {
    double left_max = -1e300, right_min = 1e300, top_max = -1e300,
           bottom_min = 1e300;
    for (int i = 0; i < kEdgeSamples; ++i) {
      const double fx = rig.width * static_cast<double>(i) / (kEdgeSamples - 1);
      const double fy = rig.height * static_cast<double>(i) / (kEdgeSamples - 1);
      try {
        left_max = std::max(left_max, rectify_pixel(rig, map, side, {0.0, fy}).x);
        right_min = std::min(
            right_min,
            rectify_pixel(rig, map, side, {static_cast<double>(rig.width), fy}).x);
        top_max = std::max(top_max, rectify_pixel(rig, map, side, {fx, 0.0}).y);
        bottom_min = std::min(
            bottom_min,
            rectify_pixel(rig, map, side, {fx, static_cast<double>(rig.height)}).y);
      } catch (const Error&) {
        // Edge sample rotated out of view; skip it.
      }
    }
    x0 = std::max(x0, left_max);
    x1 = std::min(x1, right_min);
    y0 = std::max(y0, top_max);
    y1 = std::min(y1, bottom_min);
  }
  map.valid_region = {x0, y0, x1, y1};
  return map;
}

Pixel rectify_pixel(const StereoRig& rig, const RectifyMap& map, CameraSide side,
                    const Pixel& px) {
  const CameraIntrinsics& intr = side == CameraSide::Left ? rig.left : rig.right;
  const Mat3& rot =
      side == CameraSide::Left ? map.left_rotation : map.right_rotation;
  const Pixel ideal = intr.has_distortion() ? undistort(intr, px) : px;
  const Vec3 ray = rot * pixel_ray(intr, ideal);
  if (!(ray.z() > 0.0)) {
    throw Error(ErrorCode::NonPositiveDepth,
                "pixel rotates behind the rectified camera");
  }
  return {map.rectified.fx * (ray.x() / ray.z()) + map.rectified.cx,
          map.rectified.fy * (ray.y() / ray.z()) + map.rectified.cy};
}

double rectified_baseline(const StereoRig& rig) {
  if (rig.relative.translation.norm() < 1e-9) {
    throw Error(ErrorCode::DegenerateBaseline, "baseline is numerically zero");
  }
  return rig.relative.translation.norm();
}

double residual_y_disparity(const std::vector<std::pair<Pixel, Pixel>>& pairs) {
  if (pairs.empty()) {
    throw Error(ErrorCode::EmptyInput, "no correspondence pairs");
  }
  double sum = 0.0;
  for (const auto& [l, r] : pairs) sum += std::abs(l.y - r.y);
  return sum / pairs.size();
}

}  // namespace layerbench
