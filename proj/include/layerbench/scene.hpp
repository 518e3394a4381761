#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "layerbench/geometry.hpp"
#include "layerbench/io.hpp"

namespace layerbench {

enum class MaterialKind { Diffuse, Metal, Glass };

struct Material {
  MaterialKind kind = MaterialKind::Diffuse;
  std::array<double, 3> albedo{0.7, 0.7, 0.7};
  double roughness = 0.5;
  double ior = 1.5;  // meaningful for glass only
};

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

// Finite parallelogram: corner + a*edge_u + b*edge_v, a, b in [0, 1].
// Zero thickness; glass quads act as thin panes.
struct Quad {
  Vec3 corner = Vec3::Zero();
  Vec3 edge_u = Vec3::UnitX();
  Vec3 edge_v = Vec3::UnitY();
};

// Axis-aligned in object coordinates (the T0 placement).
struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();
};

using Shape = std::variant<Sphere, Quad, Box>;

struct Primitive {
  Shape shape;
  Material material;
  int object_id = 0;
  Pose motion;  // rigid world-frame motion T0 -> T1; identity = static
};

struct CameraSpec {
  Pose pose;  // world -> camera
  CameraIntrinsics intrinsics;
};

struct PointLight {
  Vec3 position = Vec3::Zero();
  std::array<double, 3> intensity{1.0, 1.0, 1.0};
};

struct SceneSpec {
  int width = 256;
  int height = 256;
  // Glass below this roughness is optically transparent and contributes a
  // layer; rougher glass is terminal like a diffuse surface.
  double transparency_threshold = 0.1;
  CameraSpec camera_t0;
  CameraSpec camera_t1;
  std::vector<CameraSpec> camera_candidates;  // viewpoints randomize picks from
  std::vector<Primitive> primitives;
  std::vector<PointLight> lights;
  std::array<double, 3> env_color{0.5, 0.5, 0.5};
};

inline bool is_transparent(const SceneSpec& scene, const Material& m) {
  return m.kind == MaterialKind::Glass && m.roughness < scene.transparency_threshold;
}

// Deterministic random stream: a fixed engine plus hand-rolled value
// mappings, so identical seeds give identical scenes on every platform
// (the standard distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t raw() { return engine_(); }

  double uniform() {  // [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive, rejection-sampled unbiased
    const uint64_t span = static_cast<uint64_t>(hi) - lo + 1;
    const uint64_t rem = (UINT64_MAX % span + 1) % span;  // 2^64 mod span
    const uint64_t limit = UINT64_MAX - rem;
    uint64_t r = engine_();
    while (r > limit) r = engine_();
    return lo + static_cast<int>(r % span);
  }

  double normal(double mean = 0.0, double sigma = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + sigma * spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return mean + sigma * u * m;
  }

  Vec3 unit_vector() {
    const double z = uniform(-1.0, 1.0);
    const double phi = uniform(0.0, 2.0 * M_PI);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

struct FlyerConfig {
  int min_count = 2;
  int max_count = 5;
  std::array<double, 2> depth_range{0.5, 5.0};  // metres in front of camera
  std::array<double, 2> size_range{0.05, 0.3};  // metres
  double max_translation = 0.2;                 // metres, T0 -> T1
  double max_rotation_deg = 10.0;
};

struct CameraMotionConfig {
  double max_translation = 0.05;  // metres
  double max_rotation_deg = 2.0;
};

struct RandomizeConfig {
  double material_swap_probability = 0.4;
  double glass_probability = 0.5;  // given a swap: glass vs opaque
  std::array<double, 2> roughness_range{0.0, 0.4};  // opaque swaps
  std::array<double, 2> ior_range{1.3, 1.7};
  std::array<double, 2> light_scale_range{0.5, 2.0};
  std::array<double, 2> env_scale_range{0.2, 1.0};
  FlyerConfig flyers;
  CameraMotionConfig camera_motion;
};

// Deterministic scene perturbation for dataset diversity. In stream order:
// picks camera_t0 from the candidate set, jitters it into camera_t1, scales
// light and environment intensities, swaps primitive materials, then drops
// "flyer" primitives into the T0 view frustum with small rigid motions.
// Same (base, config, seed) gives an identical scene. Throws
// EmptyCandidateSet when the base scene has no camera candidates.
SceneSpec randomize(const SceneSpec& base, const RandomizeConfig& config,
                    uint64_t seed);

// True iff the point projects inside [0, width) x [0, height) with positive
// depth for this camera.
bool frustum_contains(const CameraSpec& camera, int width, int height,
                      const Point3& point);

Json to_json(const SceneSpec& scene);
SceneSpec scene_from_json(const Json& j);
SceneSpec read_scene(const std::string& path);
void write_scene(const std::string& path, const SceneSpec& scene);

RandomizeConfig randomize_config_from_json(const Json& j);
RandomizeConfig read_randomize_config(const std::string& path);

}  // namespace layerbench
