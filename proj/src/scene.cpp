#include "layerbench/scene.hpp"

#include <algorithm>
#include <cmath>

namespace layerbench {

bool frustum_contains(const CameraSpec& camera, int width, int height,
                      const Point3& point) {
  try {
    const Pixel px = project(camera.intrinsics, camera.pose, point);
    return px.x >= 0.0 && px.x < width && px.y >= 0.0 && px.y < height;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NonPositiveDepth) return false;
    throw;
  }
}

namespace {

Pose random_rigid_jitter(Rng& rng, double max_translation, double max_rotation_deg) {
  const Vec3 axis = rng.unit_vector();
  const double angle = rng.uniform(0.0, max_rotation_deg * M_PI / 180.0);
  Pose jitter;
  jitter.rotation = rodrigues_to_matrix(axis * angle);
  jitter.translation = Vec3(rng.uniform(-max_translation, max_translation),
                            rng.uniform(-max_translation, max_translation),
                            rng.uniform(-max_translation, max_translation));
  return jitter;
}

// Rigid motion rotating about `pivot` then translating: p' = R (p - c) + c + t.
Pose motion_about_point(const Mat3& rotation, const Vec3& pivot, const Vec3& t) {
  Pose m;
  m.rotation = rotation;
  m.translation = pivot - rotation * pivot + t;
  return m;
}

}  // namespace

SceneSpec randomize(const SceneSpec& base, const RandomizeConfig& config,
                    uint64_t seed) {
  if (base.camera_candidates.empty()) {
    throw Error(ErrorCode::EmptyCandidateSet,
                "base scene has no camera candidates");
  }
  Rng rng(seed);
  SceneSpec out = base;

  // 1. Viewpoint: pick the T0 camera, jitter it into T1.
  const int cam_idx =
      rng.uniform_int(0, static_cast<int>(base.camera_candidates.size()) - 1);
  out.camera_t0 = base.camera_candidates[cam_idx];
  {
    const Pose jitter = random_rigid_jitter(rng, config.camera_motion.max_translation,
                                            config.camera_motion.max_rotation_deg);
    // Move the camera rigidly in the world: newpose = oldpose ∘ jitter⁻¹.
    out.camera_t1 = out.camera_t0;
    out.camera_t1.pose = out.camera_t0.pose.compose(jitter.inverse());
  }

  // 2. Illumination scales.
  for (PointLight& light : out.lights) {
    const double s =
        rng.uniform(config.light_scale_range[0], config.light_scale_range[1]);
    for (double& c : light.intensity) c *= s;
  }
  {
    const double s =
        rng.uniform(config.env_scale_range[0], config.env_scale_range[1]);
    for (double& c : out.env_color) c *= s;
  }

  // 3. Material swaps, in primitive order.
  for (Primitive& prim : out.primitives) {
    if (rng.uniform() >= config.material_swap_probability) continue;
    if (rng.uniform() < config.glass_probability) {
      prim.material.kind = MaterialKind::Glass;
      // Stay safely below the transparency threshold so the swap actually
      // produces a see-through surface.
      prim.material.roughness =
          rng.uniform(0.0, 0.99 * base.transparency_threshold);
      prim.material.ior = rng.uniform(config.ior_range[0], config.ior_range[1]);
    } else {
      prim.material.kind =
          rng.uniform() < 0.5 ? MaterialKind::Metal : MaterialKind::Diffuse;
      prim.material.roughness =
          rng.uniform(config.roughness_range[0], config.roughness_range[1]);
    }
  }

  // 4. Flyers: small primitives dropped inside the T0 frustum.
  int next_id = 0;
  for (const Primitive& prim : base.primitives) {
    next_id = std::max(next_id, prim.object_id);
  }
  const int n_flyers =
      rng.uniform_int(config.flyers.min_count, config.flyers.max_count);
  const CameraSpec& cam = out.camera_t0;
  const Pose cam_to_world = cam.pose.inverse();
  for (int i = 0; i < n_flyers; ++i) {
    Primitive flyer;
    flyer.object_id = ++next_id;

    Vec3 centre_world = Vec3::Zero();
    double size = 0.0;
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const double u = rng.uniform(0.1 * out.width, 0.9 * out.width);
      const double v = rng.uniform(0.1 * out.height, 0.9 * out.height);
      const double depth =
          rng.uniform(config.flyers.depth_range[0], config.flyers.depth_range[1]);
      size = rng.uniform(config.flyers.size_range[0], config.flyers.size_range[1]);
      const Vec3 centre_cam((u - cam.intrinsics.cx) / cam.intrinsics.fx * depth,
                            (v - cam.intrinsics.cy) / cam.intrinsics.fy * depth,
                            depth);
      centre_world = cam_to_world.apply(centre_cam);
      placed = frustum_contains(cam, out.width, out.height, centre_world);
    }
    if (!placed) {
      throw Error(ErrorCode::NoConvergence,
                  "could not place a flyer inside the camera frustum");
    }

    const int kind = rng.uniform_int(0, 2);
    if (kind == 0) {
      flyer.shape = Sphere{centre_world, size / 2.0};
    } else if (kind == 1) {
      flyer.shape = Box{centre_world - Vec3::Constant(size / 2.0),
                        centre_world + Vec3::Constant(size / 2.0)};
    } else {
      // Camera-facing square pane.
      const Vec3 right = cam.pose.rotation.row(0);
      const Vec3 up = cam.pose.rotation.row(1);
      flyer.shape = Quad{centre_world - 0.5 * size * (right + up), size * right,
                         size * up};
    }

    if (rng.uniform() < config.glass_probability) {
      flyer.material.kind = MaterialKind::Glass;
      flyer.material.roughness =
          rng.uniform(0.0, 0.99 * base.transparency_threshold);
      flyer.material.ior = rng.uniform(config.ior_range[0], config.ior_range[1]);
    } else {
      flyer.material.kind = MaterialKind::Metal;
      flyer.material.roughness =
          rng.uniform(config.roughness_range[0], config.roughness_range[1]);
    }
    flyer.material.albedo = {rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0),
                             rng.uniform(0.2, 1.0)};

    const Vec3 axis = rng.unit_vector();
    const double angle =
        rng.uniform(0.0, config.flyers.max_rotation_deg * M_PI / 180.0);
    const Vec3 shift(rng.uniform(-config.flyers.max_translation,
                                 config.flyers.max_translation),
                     rng.uniform(-config.flyers.max_translation,
                                 config.flyers.max_translation),
                     rng.uniform(-config.flyers.max_translation,
                                 config.flyers.max_translation));
    flyer.motion =
        motion_about_point(rodrigues_to_matrix(axis * angle), centre_world, shift);
    out.primitives.push_back(std::move(flyer));
  }

  return out;
}

// --- serialization ---------------------------------------------------------

namespace {

Json vec3_to_json(const Vec3& v) { return Json{v.x(), v.y(), v.z()}; }

Vec3 vec3_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::FormatError,
                std::string(what) + " must be an array of 3 numbers");
  }
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

const char* material_kind_name(MaterialKind kind) {
  switch (kind) {
    case MaterialKind::Diffuse: return "diffuse";
    case MaterialKind::Metal: return "metal";
    case MaterialKind::Glass: return "glass";
  }
  return "diffuse";
}

MaterialKind material_kind_from_name(const std::string& name) {
  if (name == "diffuse") return MaterialKind::Diffuse;
  if (name == "metal") return MaterialKind::Metal;
  if (name == "glass") return MaterialKind::Glass;
  throw Error(ErrorCode::FormatError, "unknown material kind '" + name + "'");
}

Json camera_to_json(const CameraSpec& cam) {
  return Json{{"pose", to_json(cam.pose)}, {"intrinsics", to_json(cam.intrinsics)}};
}

CameraSpec camera_from_json(const Json& j) {
  CameraSpec cam;
  cam.pose = pose_from_json(j.at("pose"));
  cam.intrinsics = intrinsics_from_json(j.at("intrinsics"));
  return cam;
}

Json shape_to_json(const Shape& shape) {
  if (const Sphere* s = std::get_if<Sphere>(&shape)) {
    return Json{{"type", "sphere"},
                {"center", vec3_to_json(s->center)},
                {"radius", s->radius}};
  }
  if (const Quad* q = std::get_if<Quad>(&shape)) {
    return Json{{"type", "quad"},
                {"corner", vec3_to_json(q->corner)},
                {"edge_u", vec3_to_json(q->edge_u)},
                {"edge_v", vec3_to_json(q->edge_v)}};
  }
  const Box& b = std::get<Box>(shape);
  return Json{{"type", "box"},
              {"min", vec3_to_json(b.min)},
              {"max", vec3_to_json(b.max)}};
}

Shape shape_from_json(const Json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "sphere") {
    return Sphere{vec3_from_json(j.at("center"), "center"),
                  j.at("radius").get<double>()};
  }
  if (type == "quad") {
    return Quad{vec3_from_json(j.at("corner"), "corner"),
                vec3_from_json(j.at("edge_u"), "edge_u"),
                vec3_from_json(j.at("edge_v"), "edge_v")};
  }
  if (type == "box") {
    return Box{vec3_from_json(j.at("min"), "min"),
               vec3_from_json(j.at("max"), "max")};
  }
  throw Error(ErrorCode::FormatError, "unknown shape type '" + type + "'");
}

}  // namespace

Json to_json(const SceneSpec& scene) {
  Json primitives = Json::array();
  for (const Primitive& prim : scene.primitives) {
    primitives.push_back(Json{{"object_id", prim.object_id},
                              {"shape", shape_to_json(prim.shape)},
                              {"material",
                               Json{{"kind", material_kind_name(prim.material.kind)},
                                    {"albedo", prim.material.albedo},
                                    {"roughness", prim.material.roughness},
                                    {"ior", prim.material.ior}}},
                              {"motion", to_json(prim.motion)}});
  }
  Json lights = Json::array();
  for (const PointLight& light : scene.lights) {
    lights.push_back(Json{{"position", vec3_to_json(light.position)},
                          {"intensity", light.intensity}});
  }
  Json candidates = Json::array();
  for (const CameraSpec& cam : scene.camera_candidates) {
    candidates.push_back(camera_to_json(cam));
  }
  return Json{{"width", scene.width},
              {"height", scene.height},
              {"transparency_threshold", scene.transparency_threshold},
              {"camera_t0", camera_to_json(scene.camera_t0)},
              {"camera_t1", camera_to_json(scene.camera_t1)},
              {"camera_candidates", candidates},
              {"primitives", primitives},
              {"lights", lights},
              {"env_color", scene.env_color}};
}

SceneSpec scene_from_json(const Json& j) {
  SceneSpec scene;
  try {
    scene.width = j.at("width").get<int>();
    scene.height = j.at("height").get<int>();
    scene.transparency_threshold =
        j.value("transparency_threshold", scene.transparency_threshold);
    scene.camera_t0 = camera_from_json(j.at("camera_t0"));
    scene.camera_t1 = camera_from_json(j.at("camera_t1"));
    for (const Json& cam : j.value("camera_candidates", Json::array())) {
      scene.camera_candidates.push_back(camera_from_json(cam));
    }
    for (const Json& p : j.at("primitives")) {
      Primitive prim;
      prim.object_id = p.at("object_id").get<int>();
      prim.shape = shape_from_json(p.at("shape"));
      const Json& m = p.at("material");
      prim.material.kind = material_kind_from_name(m.at("kind").get<std::string>());
      prim.material.albedo = m.at("albedo").get<std::array<double, 3>>();
      prim.material.roughness = m.at("roughness").get<double>();
      prim.material.ior = m.value("ior", 1.5);
      if (p.contains("motion")) prim.motion = pose_from_json(p.at("motion"));
      scene.primitives.push_back(std::move(prim));
    }
    for (const Json& l : j.value("lights", Json::array())) {
      PointLight light;
      light.position = vec3_from_json(l.at("position"), "light position");
      light.intensity = l.at("intensity").get<std::array<double, 3>>();
      scene.lights.push_back(light);
    }
    if (j.contains("env_color")) {
      scene.env_color = j.at("env_color").get<std::array<double, 3>>();
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("bad scene: ") + e.what());
  }
  if (scene.width <= 0 || scene.height <= 0) {
    throw Error(ErrorCode::FormatError, "scene resolution must be positive");
  }
  return scene;
}

SceneSpec read_scene(const std::string& path) {
  return scene_from_json(read_json_file(path));
}

void write_scene(const std::string& path, const SceneSpec& scene) {
  write_json_file(path, to_json(scene));
}

RandomizeConfig randomize_config_from_json(const Json& j) {
  RandomizeConfig cfg;
  try {
    cfg.material_swap_probability =
        j.value("material_swap_probability", cfg.material_swap_probability);
    cfg.glass_probability = j.value("glass_probability", cfg.glass_probability);
    cfg.roughness_range = j.value("roughness_range", cfg.roughness_range);
    cfg.ior_range = j.value("ior_range", cfg.ior_range);
    cfg.light_scale_range = j.value("light_scale_range", cfg.light_scale_range);
    cfg.env_scale_range = j.value("env_scale_range", cfg.env_scale_range);
    if (j.contains("flyers")) {
      const Json& f = j.at("flyers");
      cfg.flyers.min_count = f.value("min_count", cfg.flyers.min_count);
      cfg.flyers.max_count = f.value("max_count", cfg.flyers.max_count);
      cfg.flyers.depth_range = f.value("depth_range", cfg.flyers.depth_range);
      cfg.flyers.size_range = f.value("size_range", cfg.flyers.size_range);
      cfg.flyers.max_translation =
          f.value("max_translation", cfg.flyers.max_translation);
      cfg.flyers.max_rotation_deg =
          f.value("max_rotation_deg", cfg.flyers.max_rotation_deg);
    }
    if (j.contains("camera_motion")) {
      const Json& c = j.at("camera_motion");
      cfg.camera_motion.max_translation =
          c.value("max_translation", cfg.camera_motion.max_translation);
      cfg.camera_motion.max_rotation_deg =
          c.value("max_rotation_deg", cfg.camera_motion.max_rotation_deg);
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::FormatError,
                std::string("bad randomize config: ") + e.what());
  }
  auto probability = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!probability(cfg.material_swap_probability) ||
      !probability(cfg.glass_probability)) {
    throw Error(ErrorCode::FormatError, "probabilities must be in [0, 1]");
  }
  if (cfg.flyers.min_count < 0 || cfg.flyers.max_count < cfg.flyers.min_count) {
    throw Error(ErrorCode::FormatError, "bad flyer count range");
  }
  return cfg;
}

RandomizeConfig read_randomize_config(const std::string& path) {
  return randomize_config_from_json(read_json_file(path));
}

}  // namespace layerbench
