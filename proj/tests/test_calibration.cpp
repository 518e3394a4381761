#include <doctest.h>

#include <cmath>
#include <utility>
#include <vector>

#include "layerbench/calibration.hpp"
#include "layerbench/scene.hpp"
#include "oracles.hpp"

using namespace layerbench;

namespace {

const oracles::RefCamera kLeftCamera = {800.0, 790.0, 322.0, 238.0,
                                        {-0.08, 0.02, 0.0, 0.0, 0.0}};
const oracles::RefCamera kRightCamera = {805.0, 795.0, 318.0, 242.0,
                                         {-0.06, 0.015, 0.0, 0.0, 0.0}};

oracles::RefPose right_offset() {
  oracles::RefPose offset;
  offset.rot = oracles::ref_axis_angle({0, 1, 0}, 1.5 * M_PI / 180.0);
  offset.trans = {-0.12, 0.002, 0.004};
  return offset;
}

BoardSpec to_board(const oracles::RefBoard& board) {
  BoardSpec spec;
  spec.rows = board.rows;
  spec.cols = board.cols;
  spec.square_size = board.square;
  return spec;
}

std::vector<ChessboardObservation> make_observations(
    const oracles::RefCamera& cam, const oracles::RefBoard& board,
    const oracles::RefPose& camera_offset, CameraSide side,
    double noise_sigma = 0.0, uint64_t seed = 0) {
  Rng rng(seed);
  std::vector<ChessboardObservation> views;
  int id = 0;
  for (const oracles::RefView& view :
       oracles::ref_calibration_views(cam, board, camera_offset)) {
    ChessboardObservation obs;
    obs.view_id = id++;
    obs.camera = side;
    obs.board = to_board(board);
    for (const auto& corner : view.corners) {
      Pixel px{corner[0], corner[1]};
      if (noise_sigma > 0.0) {
        px.x += rng.normal(0.0, noise_sigma);
        px.y += rng.normal(0.0, noise_sigma);
      }
      obs.corners.push_back(px);
    }
    views.push_back(obs);
  }
  return views;
}

}  // namespace

TEST_CASE("board corner points follow the row-major grid layout") {
  BoardSpec spec;
  spec.rows = 2;
  spec.cols = 3;
  spec.square_size = 0.5;
  const std::vector<Point3> pts = spec.corner_points();
  REQUIRE(pts.size() == 6);
  CHECK((pts[0] - Point3{0.0, 0.0, 0.0}).norm() == 0.0);
  CHECK((pts[2] - Point3{1.0, 0.0, 0.0}).norm() == 0.0);
  CHECK((pts[3] - Point3{0.0, 0.5, 0.0}).norm() == 0.0);
  CHECK((pts[5] - Point3{1.0, 0.5, 0.0}).norm() == 0.0);
}

TEST_CASE("synthetic views keep every corner on the sensor") {
  for (const auto& view : oracles::ref_calibration_views(
           kLeftCamera, oracles::RefBoard{}, oracles::RefPose{})) {
    for (const auto& corner : view.corners) {
      CHECK(corner[0] > 0.0);
      CHECK(corner[0] < 640.0);
      CHECK(corner[1] > 0.0);
      CHECK(corner[1] < 480.0);
    }
  }
}

TEST_CASE("homography_dlt reproduces a synthetic plane-to-image map") {
  // Distortion-free reference projection of a plane is exactly a homography.
  oracles::RefCamera cam = kLeftCamera;
  cam.dist = {0.0, 0.0, 0.0, 0.0, 0.0};
  oracles::RefPose pose;
  pose.rot = oracles::ref_axis_angle({0.2, 1.0, 0.1}, 0.4);
  pose.trans = {-0.1, -0.05, 0.6};

  std::vector<Pixel> plane_pts, image_pts;
  Rng rng(13);
  for (int i = 0; i < 40; ++i) {
    const double u = rng.uniform(-0.15, 0.15);
    const double v = rng.uniform(-0.1, 0.1);
    plane_pts.push_back({u, v});
    const auto px = oracles::ref_project(cam, pose, {u, v, 0.0});
    image_pts.push_back({px[0], px[1]});
  }

  const Mat3 h = homography_dlt(plane_pts, image_pts);
  for (size_t i = 0; i < plane_pts.size(); ++i) {
    const Vec3 mapped = h * Vec3{plane_pts[i].x, plane_pts[i].y, 1.0};
    CHECK(mapped.x() / mapped.z() == doctest::Approx(image_pts[i].x).epsilon(1e-9));
    CHECK(mapped.y() / mapped.z() == doctest::Approx(image_pts[i].y).epsilon(1e-9));
  }
}

TEST_CASE("noise-free calibration recovers the generating camera") {
  const auto views = make_observations(kLeftCamera, oracles::RefBoard{},
                                       oracles::RefPose{}, CameraSide::Left);
  const SingleCalibration calib = calibrate_single(views);

  CHECK(std::abs(calib.intrinsics.fx - kLeftCamera.fx) / kLeftCamera.fx < 1e-3);
  CHECK(std::abs(calib.intrinsics.fy - kLeftCamera.fy) / kLeftCamera.fy < 1e-3);
  CHECK(std::abs(calib.intrinsics.dist[0] - kLeftCamera.dist[0]) < 5e-3);
  CHECK(std::abs(calib.intrinsics.cx - kLeftCamera.cx) < 0.5);
  CHECK(std::abs(calib.intrinsics.cy - kLeftCamera.cy) < 0.5);
  CHECK(calib.rms_error < 1e-6);
  CHECK(calib.view_poses.size() == views.size());
  REQUIRE(!calib.cost_history.empty());
  CHECK(calib.cost_history.back() <= calib.cost_history.front());

  // Recovered board poses should reproject exactly too.
  const std::vector<Point3> board_pts = views[0].board.corner_points();
  for (size_t v = 0; v < views.size(); ++v) {
    for (size_t i = 0; i < board_pts.size(); ++i) {
      const Pixel px = project(calib.intrinsics, calib.view_poses[v], board_pts[i]);
      CHECK(std::abs(px.x - views[v].corners[i].x) < 1e-5);
      CHECK(std::abs(px.y - views[v].corners[i].y) < 1e-5);
    }
  }
}

TEST_CASE("calibration requires at least three views") {
  auto views = make_observations(kLeftCamera, oracles::RefBoard{},
                                 oracles::RefPose{}, CameraSide::Left);
  views.resize(2);
  try {
    calibrate_single(views);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientViews);
  }
}

TEST_CASE("noisy corners land near the injected noise level") {
  const auto views =
      make_observations(kLeftCamera, oracles::RefBoard{}, oracles::RefPose{},
                        CameraSide::Left, 0.2, 42);
  const SingleCalibration calib = calibrate_single(views);
  CHECK(calib.rms_error > 0.1);
  CHECK(calib.rms_error < 0.3);
  CHECK(std::abs(calib.intrinsics.fx - kLeftCamera.fx) / kLeftCamera.fx < 0.02);
  CHECK(std::abs(calib.intrinsics.fy - kLeftCamera.fy) / kLeftCamera.fy < 0.02);
}

TEST_CASE("stereo calibration recovers the relative pose") {
  const oracles::RefBoard board;
  const auto left_views = make_observations(kLeftCamera, board, oracles::RefPose{},
                                            CameraSide::Left);
  const auto right_views = make_observations(kRightCamera, board, right_offset(),
                                             CameraSide::Right);
  const SingleCalibration left = calibrate_single(left_views);
  const SingleCalibration right = calibrate_single(right_views);
  const StereoCalibration stereo =
      calibrate_stereo(left_views, right_views, left.intrinsics, right.intrinsics,
                       640, 480);

  const oracles::RefPose offset = right_offset();
  const double true_baseline = oracles::norm(offset.trans);
  CHECK(std::abs(stereo.rig.baseline() - true_baseline) < 1e-6);
  CHECK((stereo.rig.relative.rotation - oracles::to_mat3(offset.rot)).norm() < 1e-6);
  CHECK((stereo.rig.relative.translation - oracles::to_vec3(offset.trans)).norm() <
        1e-6);
  CHECK(stereo.rms_error < 1e-5);
  CHECK(stereo.rig.width == 640);
  CHECK(stereo.rig.height == 480);

  SUBCASE("mismatched view ids are rejected") {
    auto broken = right_views;
    broken[3].view_id = 99;
    try {
      calibrate_stereo(left_views, broken, left.intrinsics, right.intrinsics, 640,
                       480);
      FAIL("expected a throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MismatchedPairs);
    }
  }
}

TEST_CASE("rectification aligns rows for a synthetic rig") {
  StereoRig rig;
  rig.left.fx = rig.left.fy = 760.0;
  rig.left.cx = 315.0;
  rig.left.cy = 247.0;
  rig.left.dist = {-0.05, 0.01, 0.0, 0.0, 0.0};
  rig.right = rig.left;
  rig.right.fx = 770.0;
  rig.right.dist = {-0.04, 0.008, 0.0, 0.0, 0.0};
  rig.relative.rotation = rodrigues_to_matrix(Vec3{0.01, 0.03, -0.02});
  rig.relative.translation = {-0.11, 0.004, 0.006};
  rig.width = 640;
  rig.height = 480;

  const RectifyMap map = rectify(rig);
  CHECK(map.rectified.has_distortion() == false);

  // Raw correspondences come from the reference projector; their rectified
  // rows must coincide.
  oracles::RefCamera ref_left{rig.left.fx, rig.left.fy, rig.left.cx, rig.left.cy,
                              rig.left.dist};
  oracles::RefCamera ref_right{rig.right.fx, rig.right.fy, rig.right.cx,
                               rig.right.cy, rig.right.dist};
  oracles::RefPose rel;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rel.rot[3 * r + c] = rig.relative.rotation(r, c);
  rel.trans = oracles::from_vec3(rig.relative.translation);

  Rng rng(31);
  std::vector<std::pair<Pixel, Pixel>> pairs;
  for (int i = 0; i < 200; ++i) {
    const oracles::V3 p{rng.uniform(-0.4, 0.4), rng.uniform(-0.3, 0.3),
                        rng.uniform(0.9, 4.0)};
    const auto lp = oracles::ref_project(ref_left, oracles::RefPose{}, p);
    const auto rp = oracles::ref_project(ref_right, rel, p);
    const Pixel lrect = rectify_pixel(rig, map, CameraSide::Left, {lp[0], lp[1]});
    const Pixel rrect = rectify_pixel(rig, map, CameraSide::Right, {rp[0], rp[1]});
    pairs.emplace_back(lrect, rrect);
    // Rectified disparity must be positive and purely horizontal.
    CHECK(lrect.x - rrect.x > 0.0);
  }
  CHECK(residual_y_disparity(pairs) < 1e-6);
  CHECK(rectified_baseline(rig) == doctest::Approx(rig.baseline()).epsilon(1e-12));
}

TEST_CASE("an already-rectified rig maps to identity rotations") {
  StereoRig rig;
  rig.left.fx = rig.left.fy = 700.0;
  rig.left.cx = 320.0;
  rig.left.cy = 240.0;
  rig.right = rig.left;
  rig.relative.translation = {-0.1, 0.0, 0.0};
  rig.width = 640;
  rig.height = 480;

  const RectifyMap map = rectify(rig);
  CHECK((map.left_rotation - Mat3::Identity()).norm() < 1e-12);
  CHECK((map.right_rotation - Mat3::Identity()).norm() < 1e-12);
}

TEST_CASE("rectify rejects a zero baseline") {
  StereoRig rig;
  rig.left.fx = rig.left.fy = 700.0;
  rig.right = rig.left;
  try {
    rectify(rig);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateBaseline);
  }
}

TEST_CASE("residual_y_disparity averages absolute row gaps") {
  std::vector<std::pair<Pixel, Pixel>> pairs;
  pairs.push_back({Pixel{10.0, 5.0}, Pixel{8.0, 5.1}});
  pairs.push_back({Pixel{20.0, 9.0}, Pixel{17.0, 8.7}});
  CHECK(residual_y_disparity(pairs) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK_THROWS_AS(residual_y_disparity({}), Error);
}
