// Times the OpenMP kernels against their serial reference implementations on
// identical inputs and verifies that the outputs agree exactly. Usage:
//
//   bench_parallel [reps] [size]
//
// where `reps` is the number of timed repetitions per kernel (best time is
// reported, default 3) and `size` the render resolution (default 192).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "layerbench/metrics.hpp"
#include "layerbench/prediction.hpp"
#include "layerbench/renderer.hpp"
#include "layerbench/scene.hpp"

using namespace layerbench;

namespace {

// Glass slab over a diffuse wall plus a metal sphere: every kernel gets
// refraction, occlusion, and multi-layer flow to chew on.
SceneSpec bench_scene(int size) {
  SceneSpec scene;
  scene.width = size;
  scene.height = size;

  CameraSpec cam;
  cam.intrinsics.fx = size;
  cam.intrinsics.fy = size;
  cam.intrinsics.cx = size / 2.0;
  cam.intrinsics.cy = size / 2.0;
  scene.camera_t0 = cam;
  scene.camera_t1 = cam;
  scene.camera_t1.pose.translation = Vec3{-0.02, -0.01, 0.0};

  Primitive wall;
  wall.shape = Quad{Vec3{-2.0, -2.0, 3.0}, Vec3{4.0, 0.0, 0.0}, Vec3{0.0, 4.0, 0.0}};
  wall.material.kind = MaterialKind::Diffuse;
  wall.material.albedo = {0.6, 0.55, 0.5};
  wall.object_id = 1;
  scene.primitives.push_back(wall);

  Primitive slab;
  slab.shape = Box{Vec3{-0.4, -0.4, 1.0}, Vec3{0.4, 0.4, 1.1}};
  slab.material.kind = MaterialKind::Glass;
  slab.material.roughness = 0.0;
  slab.material.ior = 1.5;
  slab.object_id = 2;
  scene.primitives.push_back(slab);

  Primitive ball;
  ball.shape = Sphere{Vec3{-0.8, 0.0, 2.0}, 0.35};
  ball.material.kind = MaterialKind::Metal;
  ball.material.albedo = {0.9, 0.85, 0.8};
  ball.object_id = 3;
  scene.primitives.push_back(ball);

  scene.lights.push_back(PointLight{Vec3{0.5, -0.5, 0.2}, {1.5, 1.5, 1.5}});
  return scene;
}

GrayImage noise_image(int width, int height, uint64_t seed) {
  GrayImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<size_t>(width) * height);
  Rng rng(seed);
  // Sum of shifted copies of white noise: enough texture for block matching.
  for (double& p : img.pixels) p = rng.uniform();
  GrayImage smooth = img;
  for (int y = 1; y < height; ++y) {
    for (int x = 1; x < width; ++x) {
      smooth.pixels[static_cast<size_t>(y) * width + x] =
          0.5 * img.at(x, y) + 0.25 * img.at(x - 1, y) + 0.25 * img.at(x, y - 1);
    }
  }
  return smooth;
}

GrayImage shift_image(const GrayImage& src, int dx, int dy) {
  GrayImage out = src;
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      const int sx = std::min(std::max(x - dx, 0), src.width - 1);
      const int sy = std::min(std::max(y - dy, 0), src.height - 1);
      out.pixels[static_cast<size_t>(y) * src.width + x] = src.at(sx, sy);
    }
  }
  return out;
}

double best_seconds(int reps, const std::function<void()>& fn) {
  double best = 1e9;
  for (int i = 0; i < reps; ++i) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    best = std::min(best, s);
  }
  return best;
}

void report(const char* kernel, const std::string& input, double serial_s,
            double parallel_s, bool agree) {
  std::printf("%-18s %-16s %10.4f %12.4f %8.2fx %7s\n", kernel, input.c_str(),
              serial_s, parallel_s, serial_s / parallel_s,
              agree ? "exact" : "DIFFER");
}

bool same_flow(const std::vector<FlowVec>& a, const std::vector<FlowVec>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].dx != b[i].dx || a[i].dy != b[i].dy) return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 3;
  const int size = argc > 2 ? std::atoi(argv[2]) : 192;
  if (reps < 1 || size < 32) {
    std::fprintf(stderr, "usage: %s [reps >= 1] [size >= 32]\n", argv[0]);
    return 2;
  }

#ifdef _OPENMP
  std::printf("threads: %d, reps: %d (best time shown)\n",
              omp_get_max_threads(), reps);
#else
  std::printf("built without OpenMP; both columns run serially (reps: %d)\n",
              reps);
#endif
  std::printf("%-18s %-16s %10s %12s %9s %7s\n", "kernel", "input", "serial_s",
              "parallel_s", "speedup", "agree");

  const SceneSpec scene = bench_scene(size);
  const std::string dims = std::to_string(size) + "x" + std::to_string(size);

  // Multi-layer ground truth: per-pixel ray tracing plus the flow solve.
  GroundTruthMaps gt_serial, gt_parallel;
  const double t_gts = best_seconds(reps, [&] { gt_serial = render_gt_serial(scene); });
  const double t_gtp = best_seconds(reps, [&] { gt_parallel = render_gt(scene); });
  report("render_gt", dims, t_gts, t_gtp,
         same_flow(gt_serial.flow, gt_parallel.flow) &&
             gt_serial.flow_valid == gt_parallel.flow_valid);

  // Shaded preview frames.
  RgbImage rgb_serial, rgb_parallel;
  const double t_rs =
      best_seconds(reps, [&] { rgb_serial = render_rgb_serial(scene, Frame::T0); });
  const double t_rp =
      best_seconds(reps, [&] { rgb_parallel = render_rgb(scene, Frame::T0); });
  report("render_rgb", dims, t_rs, t_rp, rgb_serial.rgb == rgb_parallel.rgb);

  // Dataset evaluation over dense annotations sampled from the ground truth.
  const SceneAnnotationSet annotations = annotations_from_gt(scene, gt_parallel, 2);
  const MultiLayerPrediction pred = oracle_predictor(gt_parallel, 1.0, 9);
  const std::vector<SceneAnnotationSet> scenes(4, annotations);
  const std::vector<MultiLayerPrediction> preds(4, pred);
  const std::vector<Tau> taus = parse_taus("1,3,5,inf");
  MetricReport rep_serial, rep_parallel;
  const double t_es = best_seconds(
      reps, [&] { rep_serial = evaluate_dataset_serial(scenes, preds, taus); });
  const double t_ep =
      best_seconds(reps, [&] { rep_parallel = evaluate_dataset(scenes, preds, taus); });
  report("evaluate_dataset",
         std::to_string(scenes.size() * annotations.annotations.size()) + " ann",
         t_es, t_ep,
         report_to_json(rep_serial).dump() == report_to_json(rep_parallel).dump());

  // Block matching on a textured pair with a known shift.
  const GrayImage t0 = noise_image(2 * size, size, 31);
  const GrayImage t1 = shift_image(t0, 3, 1);
  BlockMatchResult bm_serial, bm_parallel;
  const double t_bs =
      best_seconds(reps, [&] { bm_serial = block_match_flow_serial(t0, t1); });
  const double t_bp =
      best_seconds(reps, [&] { bm_parallel = block_match_flow(t0, t1); });
  report("block_match_flow",
         std::to_string(2 * size) + "x" + std::to_string(size), t_bs, t_bp,
         same_flow(bm_serial.flow, bm_parallel.flow) &&
             bm_serial.confident == bm_parallel.confident);

  return 0;
}
