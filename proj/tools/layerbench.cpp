#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "layerbench/annotation.hpp"
#include "layerbench/calibration.hpp"
#include "layerbench/errors.hpp"
#include "layerbench/io.hpp"
#include "layerbench/metrics.hpp"
#include "layerbench/prediction.hpp"
#include "layerbench/renderer.hpp"
#include "layerbench/scene.hpp"

namespace {

using namespace layerbench;

int g_log_level = 1;  // 0 quiet, 1 info, 2 debug

void log_info(const std::string& msg) {
  if (g_log_level >= 1) std::cerr << "[info] " << msg << '\n';
}

void log_debug(const std::string& msg) {
  if (g_log_level >= 2) std::cerr << "[debug] " << msg << '\n';
}

std::pair<int, int> parse_size(const std::string& text) {
  const size_t sep = text.find('x');
  if (sep != std::string::npos) {
    try {
      const int w = std::stoi(text.substr(0, sep));
      const int h = std::stoi(text.substr(sep + 1));
      if (w > 0 && h > 0) return {w, h};
    } catch (const std::exception&) {
    }
  }
  throw Error(ErrorCode::FormatError,
              "expected WIDTHxHEIGHT, e.g. 1280x720, got '" + text + "'");
}

// Chessboard observations: JSON Lines, one object per view:
// {"view_id", "camera": "left"|"right", "board": [rows, cols, square_m],
//  "corners": [[x, y], ...]}.
std::vector<ChessboardObservation> read_observations(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<ChessboardObservation> views;
  size_t start = 0;
  int line_no = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json v;
    try {
      v = Json::parse(line);
      ChessboardObservation obs;
      obs.view_id = v.at("view_id").get<int>();
      const std::string camera = v.at("camera").get<std::string>();
      if (camera == "left") {
        obs.camera = CameraSide::Left;
      } else if (camera == "right") {
        obs.camera = CameraSide::Right;
      } else {
        throw Error(ErrorCode::FormatError,
                    path + ": camera must be left or right, got '" + camera + "'");
      }
      obs.board.rows = v.at("board").at(0).get<int>();
      obs.board.cols = v.at("board").at(1).get<int>();
      obs.board.square_size = v.at("board").at(2).get<double>();
      for (const Json& c : v.at("corners")) {
        obs.corners.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
      }
      views.push_back(std::move(obs));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::FormatError, path + " line " +
                                              std::to_string(line_no) + ": " +
                                              e.what());
    }
  }
  return views;
}

Json mat3_to_json(const Mat3& m) {
  Json arr = Json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) arr.push_back(m(r, c));
  return arr;
}

Mat3 mat3_from_json(const Json& arr) {
  if (!arr.is_array() || arr.size() != 9) {
    throw Error(ErrorCode::FormatError, "rotation must be 9 row-major numbers");
  }
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = arr.at(3 * r + c).get<double>();
  return m;
}

Json map_to_json(const RectifyMap& map) {
  Json j;
  j["left_rotation"] = mat3_to_json(map.left_rotation);
  j["right_rotation"] = mat3_to_json(map.right_rotation);
  j["rectified"] = to_json(map.rectified);
  j["valid_region"] = {map.valid_region[0], map.valid_region[1],
                       map.valid_region[2], map.valid_region[3]};
  return j;
}

RectifyMap map_from_json(const Json& j) {
  RectifyMap map;
  try {
    map.left_rotation = mat3_from_json(j.at("left_rotation"));
    map.right_rotation = mat3_from_json(j.at("right_rotation"));
    map.rectified = intrinsics_from_json(j.at("rectified"));
    for (int i = 0; i < 4; ++i) {
      map.valid_region[i] = j.at("valid_region").at(i).get<double>();
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::FormatError,
                std::string("bad rectification map: ") + e.what());
  }
  return map;
}

void apply_threads(int threads) {
  if (threads < 0) {
    if (const char* env = std::getenv("LAYERBENCH_THREADS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end == env || *end != '\0' || v < 0) {
        throw Error(ErrorCode::FormatError,
                    "LAYERBENCH_THREADS must be a non-negative integer, got '" +
                        std::string(env) + "'");
      }
      threads = static_cast<int>(v);
    }
  }
  if (threads > 0) {
#ifdef _OPENMP
    omp_set_num_threads(threads);
    log_debug("using " + std::to_string(threads) + " threads");
#else
    log_info("built without OpenMP; --threads has no effect");
#endif
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-layer optical flow ground truth toolkit"};
  app.set_version_flag("--version", "layerbench 1.0.0");
  app.require_subcommand(1);

  uint64_t seed = 0;
  int threads = -1;
  std::string log_level = "info";
  app.add_option("--seed", seed, "seed for all randomized steps");
  app.add_option("--threads", threads,
                 "worker thread count (default: all cores, or LAYERBENCH_THREADS)");
  app.add_option("--log-level", log_level, "quiet, info, or debug")
      ->check(CLI::IsMember({"quiet", "info", "debug"}));

  // calibrate
  auto* cmd_calibrate = app.add_subcommand(
      "calibrate", "calibrate one camera or a stereo pair from chessboard views");
  cmd_calibrate->fallthrough();
  std::string cal_input, cal_output, cal_size;
  bool cal_stereo = false;
  cmd_calibrate->add_option("--obs,--input", cal_input, "observation jsonl")
      ->required();
  cmd_calibrate->add_option("--out,--output", cal_output, "calibration json")
      ->required();
  cmd_calibrate
      ->add_option("--image-size", cal_size, "capture resolution WIDTHxHEIGHT")
      ->required();
  cmd_calibrate->add_flag("--stereo", cal_stereo,
                          "require both cameras (implied when both are present)");

  // rectify
  auto* cmd_rectify =
      app.add_subcommand("rectify", "compute the row-aligning rectification map");
  cmd_rectify->fallthrough();
  std::string rect_rig, rect_output;
  cmd_rectify->add_option("--calib,--rig", rect_rig, "stereo calibration json")
      ->required();
  cmd_rectify->add_option("--out,--output", rect_output, "map json")->required();

  // annotate
  auto* cmd_annotate = app.add_subcommand(
      "annotate", "build layered annotations from tag detections");
  cmd_annotate->fallthrough();
  std::string ann_detections, ann_labels, ann_rig, ann_map, ann_output;
  std::string ann_scene_id = "scene";
  double ann_gate = 0.75;
  double ann_rescale = 0.0;
  cmd_annotate->add_option("--detections", ann_detections, "detection jsonl")
      ->required();
  cmd_annotate->add_option("--labels", ann_labels, "tag label json")->required();
  cmd_annotate->add_option("--calib,--rig", ann_rig, "stereo calibration json")
      ->required();
  cmd_annotate->add_option("--map", ann_map,
                           "rectification map json (default: computed from rig)");
  cmd_annotate->add_option("--out,--output", ann_output, "annotation jsonl")
      ->required();
  cmd_annotate->add_option("--scene-id", ann_scene_id, "scene identifier");
  cmd_annotate->add_option("--y-gate", ann_gate,
                           "max rectified |y_l - y_r| for stereo pairs, px");
  cmd_annotate->add_option("--rescale", ann_rescale,
                           "scale annotations to another resolution");

  // randomize
  auto* cmd_randomize = app.add_subcommand(
      "randomize", "derive a randomized scene variant from a base scene");
  cmd_randomize->fallthrough();
  std::string rnd_base, rnd_config, rnd_output;
  cmd_randomize->add_option("--base", rnd_base, "base scene json")->required();
  cmd_randomize->add_option("--config", rnd_config, "randomization config json")
      ->required();
  cmd_randomize->add_option("--out,--output", rnd_output, "scene json")
      ->required();

  // render
  auto* cmd_render = app.add_subcommand(
      "render", "render ground truth, previews, and oracle predictions");
  cmd_render->fallthrough();
  std::string ren_scene, ren_gt, ren_rgb_t0, ren_rgb_t1, ren_ann, ren_oracle;
  std::string ren_size;
  int ren_stride = 8;
  double ren_sigma = 0.0;
  cmd_render->add_option("--scene", ren_scene, "scene json")->required();
  cmd_render->add_option("--size", ren_size,
                         "override the render resolution WIDTHxHEIGHT "
                         "(scales the cameras proportionally)");
  cmd_render->add_option("--out,--gt", ren_gt,
                         "layered ground-truth output (.mlgt)");
  cmd_render->add_option("--rgb,--rgb-t0", ren_rgb_t0,
                         "first-frame preview (.ppm)");
  cmd_render->add_option("--rgb-t1", ren_rgb_t1, "second-frame preview (.ppm)");
  cmd_render->add_option("--ann", ren_ann, "sampled annotation jsonl");
  cmd_render->add_option("--stride", ren_stride, "annotation sampling stride")
      ->check(CLI::PositiveNumber);
  cmd_render->add_option("--oracle-out", ren_oracle,
                         "oracle prediction output (.mlfl)");
  cmd_render->add_option("--oracle-sigma", ren_sigma,
                         "gaussian noise added to the oracle, px");

  // predict-blockmatch
  auto* cmd_predict = app.add_subcommand(
      "predict-blockmatch", "single-layer block-matching flow baseline");
  cmd_predict->fallthrough();
  std::string bm_t0, bm_t1, bm_output;
  BlockMatchConfig bm_config;
  cmd_predict->add_option("--img0,--t0", bm_t0, "first frame (.ppm)")->required();
  cmd_predict->add_option("--img1,--t1", bm_t1, "second frame (.ppm)")->required();
  cmd_predict->add_option("--out,--output", bm_output, "prediction (.mlfl)")
      ->required();
  cmd_predict->add_option("--window-radius", bm_config.window_radius);
  cmd_predict->add_option("--search-radius", bm_config.search_radius);
  cmd_predict->add_option("--pyramid-levels", bm_config.pyramid_levels);

  // prune
  auto* cmd_prune = app.add_subcommand(
      "prune", "drop layers closer than delta to the previous layer");
  cmd_prune->fallthrough();
  std::string pr_input, pr_output, pr_mode = "raw";
  double pr_delta = 0.5;
  cmd_prune->add_option("--in,--input", pr_input, "prediction (.mlfl)")
      ->required();
  cmd_prune->add_option("--out,--output", pr_output, "pruned prediction (.mlfl)")
      ->required();
  cmd_prune->add_option("--delta", pr_delta, "minimum flow gap, px");
  cmd_prune->add_option("--mode", pr_mode, "raw or survivor comparisons")
      ->check(CLI::IsMember({"raw", "survivor"}));

  // evaluate
  auto* cmd_evaluate = app.add_subcommand(
      "evaluate", "score predictions against annotation sets");
  cmd_evaluate->fallthrough();
  std::vector<std::string> ev_annotations, ev_predictions;
  std::string ev_taus = "1,3,5,inf";
  std::string ev_out, ev_sampling = "bilinear", ev_subset = "all";
  std::string ev_workaround = "none";
  cmd_evaluate
      ->add_option("--ann,--annotations", ev_annotations,
                   "annotation jsonl per scene, or one directory of .jsonl")
      ->required();
  cmd_evaluate
      ->add_option("--pred,--predictions", ev_predictions,
                   "prediction .mlfl per scene, or one directory")
      ->required();
  cmd_evaluate->add_option("--taus", ev_taus, "error thresholds, e.g. 1,3,5,inf");
  cmd_evaluate->add_option("--out,--output", ev_out,
                           "directory for report.txt, report.csv, report.json");
  cmd_evaluate->add_option("--sampling", ev_sampling, "bilinear or nearest")
      ->check(CLI::IsMember({"bilinear", "nearest"}));
  cmd_evaluate
      ->add_option("--subset", ev_subset,
                   "all, first (layer 1 only), or last (non-transparent only)")
      ->check(CLI::IsMember({"all", "first", "last"}));
  cmd_evaluate
      ->add_option("--workaround", ev_workaround,
                   "'single' replicates single-layer predictions across layers")
      ->check(CLI::IsMember({"none", "single"}));

  // report
  auto* cmd_report =
      app.add_subcommand("report", "print a stored evaluation report");
  cmd_report->fallthrough();
  std::string rep_input;
  bool rep_csv = false;
  cmd_report->add_option("--in,--input", rep_input, "report json")->required();
  cmd_report->add_flag("--csv", rep_csv, "emit csv instead of a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  g_log_level = log_level == "quiet" ? 0 : log_level == "debug" ? 2 : 1;

  try {
    apply_threads(threads);

    if (*cmd_calibrate) {
      const auto views = read_observations(cal_input);
      const auto [width, height] = parse_size(cal_size);
      std::vector<ChessboardObservation> left, right;
      for (const auto& v : views) {
        (v.camera == CameraSide::Left ? left : right).push_back(v);
      }
      if (cal_stereo && (left.empty() || right.empty())) {
        throw Error(ErrorCode::InsufficientViews,
                    "--stereo needs views from both cameras");
      }
      if (right.empty() || left.empty()) {
        const auto& views_one = left.empty() ? right : left;
        const SingleCalibration cal = calibrate_single(views_one);
        log_info("single camera: rms " + std::to_string(cal.rms_error) +
                 " px over " + std::to_string(views_one.size()) + " views");
        Json out = to_json(cal.intrinsics);
        out["image_size"] = {width, height};
        out["rms_error"] = cal.rms_error;
        write_json_file(cal_output, out);
      } else {
        const SingleCalibration cal_left = calibrate_single(left);
        const SingleCalibration cal_right = calibrate_single(right);
        log_debug("left rms " + std::to_string(cal_left.rms_error) +
                  " px, right rms " + std::to_string(cal_right.rms_error) + " px");
        const StereoCalibration stereo = calibrate_stereo(
            left, right, cal_left.intrinsics, cal_right.intrinsics, width, height);
        log_info("stereo pair: rms " + std::to_string(stereo.rms_error) +
                 " px, baseline " + std::to_string(stereo.rig.baseline()) + " m");
        Json out = to_json(stereo.rig);
        out["rms_error"] = stereo.rms_error;
        write_json_file(cal_output, out);
      }
    } else if (*cmd_rectify) {
      const StereoRig rig = rig_from_json(read_json_file(rect_rig));
      const RectifyMap map = rectify(rig);
      write_json_file(rect_output, map_to_json(map));
      log_info("rectified baseline " + std::to_string(rectified_baseline(rig)) +
               " m");
    } else if (*cmd_annotate) {
      const StereoRig rig = rig_from_json(read_json_file(ann_rig));
      const RectifyMap map =
          ann_map.empty() ? rectify(rig) : map_from_json(read_json_file(ann_map));
      const DetectionFile det = read_detections(ann_detections);
      const auto labels = read_labels(ann_labels);
      BuildOptions opts;
      opts.y_disparity_gate = ann_gate;
      opts.scene_id = ann_scene_id;
      opts.detection_image_size = det.image_size;
      SceneAnnotationSet set =
          build_annotations(match_tags(det.detections), rig, map, labels, opts);
      if (ann_rescale > 0.0) set = rescale_annotations(set, ann_rescale);
      write_annotations(ann_output, set);
      log_info(std::to_string(set.annotations.size()) + " annotations (" +
               std::to_string(set.stats.stereo_pairs) + " stereo pairs, " +
               std::to_string(set.stats.stereo_dropped) +
               " gated, mean |dy| " +
               std::to_string(set.stats.mean_y_disparity) + " px)");
      if (set.stats.triangulation_warning) {
        log_info("warning: closed-form and two-view depths disagree; "
                 "check the calibration");
      }
    } else if (*cmd_randomize) {
      const SceneSpec base = read_scene(rnd_base);
      const RandomizeConfig config = read_randomize_config(rnd_config);
      const SceneSpec scene = randomize(base, config, seed);
      write_scene(rnd_output, scene);
      log_info("randomized scene with " + std::to_string(scene.primitives.size()) +
               " primitives (seed " + std::to_string(seed) + ")");
    } else if (*cmd_render) {
      if (ren_gt.empty() && ren_rgb_t0.empty() && ren_rgb_t1.empty() &&
          ren_ann.empty() && ren_oracle.empty()) {
        throw Error(ErrorCode::FormatError,
                    "no outputs requested; pass --gt, --rgb-t0/--rgb-t1, "
                    "--ann, or --oracle-out");
      }
      SceneSpec scene = read_scene(ren_scene);
      if (!ren_size.empty()) {
        const auto [width, height] = parse_size(ren_size);
        const double sx = static_cast<double>(width) / scene.width;
        const double sy = static_cast<double>(height) / scene.height;
        const auto scale_camera = [sx, sy](CameraSpec& cam) {
          cam.intrinsics.fx *= sx;
          cam.intrinsics.cx *= sx;
          cam.intrinsics.fy *= sy;
          cam.intrinsics.cy *= sy;
        };
        scale_camera(scene.camera_t0);
        scale_camera(scene.camera_t1);
        for (CameraSpec& cam : scene.camera_candidates) scale_camera(cam);
        scene.width = width;
        scene.height = height;
      }
      if (!ren_gt.empty() || !ren_ann.empty() || !ren_oracle.empty()) {
        const GroundTruthMaps maps = render_gt(scene);
        log_info("ground truth: " + std::to_string(maps.width) + "x" +
                 std::to_string(maps.height) + ", deepest layer " +
                 std::to_string(maps.max_layers));
        if (!ren_gt.empty()) write_mlgt(ren_gt, maps);
        if (!ren_ann.empty()) {
          const SceneAnnotationSet set =
              annotations_from_gt(scene, maps, ren_stride);
          write_annotations(ren_ann, set);
          log_info(std::to_string(set.annotations.size()) +
                   " annotations sampled at stride " + std::to_string(ren_stride));
        }
        if (!ren_oracle.empty()) {
          write_mlfl(ren_oracle, oracle_predictor(maps, ren_sigma, seed));
          log_info("oracle prediction with sigma " + std::to_string(ren_sigma));
        }
      }
      if (!ren_rgb_t0.empty()) {
        write_ppm(ren_rgb_t0, quantize_rgb(render_rgb(scene, Frame::T0)));
      }
      if (!ren_rgb_t1.empty()) {
        write_ppm(ren_rgb_t1, quantize_rgb(render_rgb(scene, Frame::T1)));
      }
    } else if (*cmd_predict) {
      const GrayImage t0 = to_gray(read_ppm(bm_t0));
      const GrayImage t1 = to_gray(read_ppm(bm_t1));
      const BlockMatchResult result = block_match_flow(t0, t1, bm_config);
      long long confident = 0;
      for (const uint8_t c : result.confident) confident += c;
      log_info("block match: " + std::to_string(confident) + "/" +
               std::to_string(result.confident.size()) + " confident pixels");
      write_mlfl(bm_output, to_single_layer_prediction(result));
    } else if (*cmd_prune) {
      const MultiLayerPrediction pred = read_mlfl(pr_input);
      const PruneMode mode = pr_mode == "survivor" ? PruneMode::SurvivorPrevious
                                                   : PruneMode::RawPrevious;
      write_mlfl(pr_output, prune(pred, pr_delta, mode));
    } else if (*cmd_evaluate) {
      namespace fs = std::filesystem;
      const std::vector<Tau> taus = parse_taus(ev_taus);
      if (ev_annotations.size() == 1 && fs::is_directory(ev_annotations[0])) {
        if (ev_predictions.size() != 1 || !fs::is_directory(ev_predictions[0])) {
          throw Error(ErrorCode::FormatError,
                      "--ann is a directory, so --pred must be one too");
        }
        const fs::path pred_dir = ev_predictions[0];
        std::vector<std::string> ann_files;
        for (const auto& entry : fs::directory_iterator(ev_annotations[0])) {
          if (entry.path().extension() == ".jsonl") {
            ann_files.push_back(entry.path().string());
          }
        }
        std::sort(ann_files.begin(), ann_files.end());
        ev_annotations = std::move(ann_files);
        ev_predictions.clear();
        for (const std::string& ann : ev_annotations) {
          ev_predictions.push_back(
              (pred_dir / fs::path(ann).stem()).string() + ".mlfl");
        }
      }
      if (ev_annotations.size() != ev_predictions.size()) {
        throw Error(ErrorCode::SizeMismatch,
                    "need one prediction per annotation set");
      }
      std::vector<SceneAnnotationSet> scenes;
      std::vector<MultiLayerPrediction> preds;
      for (size_t i = 0; i < ev_annotations.size(); ++i) {
        SceneAnnotationSet set = read_annotations(ev_annotations[i]);
        if (ev_subset == "first") set = first_layer_subset(set);
        if (ev_subset == "last") set = last_layer_subset(set);
        scenes.push_back(std::move(set));
        preds.push_back(read_mlfl(ev_predictions[i]));
      }
      EvalOptions opts;
      opts.sampling = ev_sampling == "nearest" ? SamplingMode::Nearest
                                               : SamplingMode::Bilinear;
      opts.workaround = ev_workaround == "single";
      const MetricReport report = evaluate_dataset(scenes, preds, taus, opts);
      std::cout << render_table(report);
      if (!ev_out.empty()) {
        fs::create_directories(ev_out);
        const fs::path dir = ev_out;
        write_file_atomic((dir / "report.txt").string(), render_table(report));
        write_file_atomic((dir / "report.csv").string(), render_csv(report));
        write_json_file((dir / "report.json").string(), report_to_json(report));
      }
    } else if (*cmd_report) {
      const MetricReport report = report_from_json(read_json_file(rep_input));
      std::cout << (rep_csv ? render_csv(report) : render_table(report));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
