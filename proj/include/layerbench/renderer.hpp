#pragma once

#include <optional>
#include <string>
#include <vector>

#include "layerbench/annotation.hpp"
#include "layerbench/scene.hpp"

namespace layerbench {

// Hard cap on recorded layers per pixel.
inline constexpr int kMaxLayers = 8;

// One transparent-surface crossing (or the final opaque hit) along a ray.
struct LayerHit {
  int layer = 1;      // 1-based position in the pixel's layer list
  int object_id = 0;
  Point3 local_point = Point3::Zero();  // object (T0-placement) coordinates
  Point3 world_point = Point3::Zero();  // in the frame that was traced
  bool transparent = true;              // false only for the terminal hit
};

// Traces the layered structure behind a pixel: every air-to-surface crossing
// of a transparent primitive adds a layer (thin panes pass straight through,
// solids refract the ray), the first opaque surface terminates the list, and
// total internal reflection on exit ends the path without a reflected
// continuation. At most kMaxLayers entries.
std::vector<LayerHit> trace_layers(const SceneSpec& scene, Frame frame,
                                   const Pixel& pixel);

// Snell refraction of a unit direction at a surface with unit normal facing
// the incident side (dot(dir, normal) <= 0); eta = n_incident / n_transmitted.
// Empty result = total internal reflection.
std::optional<Vec3> refract(const Vec3& dir, const Vec3& normal, double eta);

// Flow of one T0 layer hit: moves the hit point through its object's rigid
// motion, then searches for the T1 pixel whose same-index layer passes
// through the moved point (damped Gauss-Newton on the world-space gap,
// finite-difference Jacobian). Empty result = occluded: no T1 pixel sees the
// moved point at that layer (layer missing, different object, or no
// convergence).
std::optional<FlowVec> solve_flow(const SceneSpec& scene, const Pixel& pixel,
                                  const LayerHit& t0_hit);

// Dense per-layer ground truth at T0. Planes are row-major, layer-major:
// index = layer * width*height + y * width + x.
struct GroundTruthMaps {
  int width = 0;
  int height = 0;
  int max_layers = 0;
  std::vector<FlowVec> flow;
  std::vector<uint8_t> flow_valid;     // 0 = occluded or layer absent
  std::vector<Point3> position;        // T0 world point; zero where absent
  std::vector<int> layer_count;        // per pixel; in-memory only

  size_t plane_size() const { return static_cast<size_t>(width) * height; }
  size_t index(int layer, int x, int y) const {
    return static_cast<size_t>(layer) * plane_size() +
           static_cast<size_t>(y) * width + x;
  }
};

// OpenMP-parallel ground-truth render and its plain serial reference; they
// produce identical maps for any thread count.
GroundTruthMaps render_gt(const SceneSpec& scene);
GroundTruthMaps render_gt_serial(const SceneSpec& scene);

// Binary ground-truth container (little-endian): magic "MLGT", u32 version=1,
// u32 width, u32 height, u32 max_layers, then per layer the planes
// f32 dx, f32 dy, u8 valid, f32 X, f32 Y, f32 Z (each row-major).
void write_mlgt(const std::string& path, const GroundTruthMaps& maps);
GroundTruthMaps read_mlgt(const std::string& path);  // FormatError

// Shaded preview (linear RGB, no tone mapping): mirror reflection for metal,
// refraction for transparent glass, lambertian shading with hard shadows for
// everything else.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;  // 3 per pixel, row-major
};

RgbImage render_rgb(const SceneSpec& scene, Frame frame);
RgbImage render_rgb_serial(const SceneSpec& scene, Frame frame);
ImageU8 quantize_rgb(const RgbImage& img);  // clamp to [0,1], scale to 8 bit

// Samples a benchmark-style annotation set out of dense GT: every stride-th
// pixel with at least one layer and a valid flow contributes one annotation
// at layer ((x + y) mod layer_count) + 1. point3d is in the T0 camera frame.
SceneAnnotationSet annotations_from_gt(const SceneSpec& scene,
                                       const GroundTruthMaps& maps,
                                       int stride = 1);

}  // namespace layerbench
