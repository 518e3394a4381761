#pragma once

#include <utility>
#include <vector>

#include "layerbench/geometry.hpp"

namespace layerbench {

// Planar calibration target: rows x cols inner corners, square_size metres
// apart. Corner i = row * cols + col maps to (col * s, row * s, 0) on the
// board plane, matching row-major detector output ordered TL..BR.
struct BoardSpec {
  int rows = 0;
  int cols = 0;
  double square_size = 0.0;

  std::vector<Point3> corner_points() const;
};

struct ChessboardObservation {
  int view_id = 0;
  CameraSide camera = CameraSide::Left;
  BoardSpec board;
  std::vector<Pixel> corners;  // rows*cols entries, row-major board order
};

struct CalibrationOptions {
  int max_iterations = 200;
  double lambda_init = 1e-3;
  double relative_tolerance = 1e-12;
};

struct SingleCalibration {
  CameraIntrinsics intrinsics;
  std::vector<Pose> view_poses;  // board -> camera, in input order
  double rms_error = 0.0;        // RMS over residual components, px
  std::vector<double> cost_history;  // accepted costs, starting at the initial
};

// Plane-based intrinsic calibration: per-view homographies, closed-form
// intrinsics from the absolute-conic constraints (zero skew enforced),
// zero-initialized distortion, then joint Levenberg-Marquardt refinement of
// intrinsics, distortion, and all board poses.
// Throws InsufficientViews (< 3 views), SingularInitialization when the conic
// system does not yield a valid camera, NoConvergence when refinement runs
// out of iterations without ever improving.
SingleCalibration calibrate_single(const std::vector<ChessboardObservation>& views,
                                   const CalibrationOptions& opts = {});

struct StereoCalibration {
  StereoRig rig;
  std::vector<Pose> board_poses;  // board -> left camera, per matched view
  double rms_error = 0.0;
  std::vector<double> cost_history;
};

// Relative-pose calibration for a fixed pair of pre-calibrated cameras.
// Views are matched by view_id; per-view relative poses are chordal-averaged
// and jointly refined (relative pose + board poses) against both cameras'
// corners. Intrinsics are held fixed. Throws MismatchedPairs when the two
// sides do not pair up one-to-one (ids or boards), InsufficientViews (< 3
// matched views), NoConvergence as above.
StereoCalibration calibrate_stereo(const std::vector<ChessboardObservation>& left_views,
                                   const std::vector<ChessboardObservation>& right_views,
                                   const CameraIntrinsics& left_intr,
                                   const CameraIntrinsics& right_intr,
                                   int image_width, int image_height,
                                   const CalibrationOptions& opts = {});

// Row-aligning rectification. Both cameras are rotated by half the relative
// rotation, then jointly so the baseline lands on the rectified x-axis; the
// shared rectified camera uses the mean focal length, the image-centre
// principal point, and no distortion. An already-rectified rig maps to
// identity rotations. Throws DegenerateBaseline when the baseline is
// numerically zero.
struct RectifyMap {
  Mat3 left_rotation = Mat3::Identity();   // original left frame -> rectified
  Mat3 right_rotation = Mat3::Identity();  // original right frame -> rectified
  CameraIntrinsics rectified;              // shared; dist = 0
  std::array<double, 4> valid_region{0.0, 0.0, 0.0, 0.0};  // x0, y0, x1, y1
};

RectifyMap rectify(const StereoRig& rig);

// Maps a raw pixel of one camera into the shared rectified image:
// undistort, rotate the viewing ray, reproject with the rectified camera.
Pixel rectify_pixel(const StereoRig& rig, const RectifyMap& map, CameraSide side,
                    const Pixel& px);

// Baseline length of the rectified pair (rotations preserve it).
double rectified_baseline(const StereoRig& rig);

// Mean |y_left - y_right| over rectified correspondence pairs; the per-scene
// quality figure. Throws EmptyInput on an empty list.
double residual_y_disparity(const std::vector<std::pair<Pixel, Pixel>>& pairs);

// Normalized DLT homography mapping plane points (x, y) to image points.
// Exposed for tests; calibration uses it per view.
Mat3 homography_dlt(const std::vector<Pixel>& plane_pts,
                    const std::vector<Pixel>& image_pts);

}  // namespace layerbench
