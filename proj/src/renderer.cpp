#include "layerbench/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "layerbench/io.hpp"

namespace layerbench {

std::optional<Vec3> refract(const Vec3& dir, const Vec3& normal, double eta) {
  const double cos_i = -dir.dot(normal);
  const double k = 1.0 - eta * eta * (1.0 - cos_i * cos_i);
  if (k < 0.0) return std::nullopt;
  return ((eta * dir + (eta * cos_i - std::sqrt(k)) * normal).normalized());
}

namespace {

constexpr double kRayEps = 1e-9;  // continuation offset along the ray

struct SurfaceHit {
  double t = std::numeric_limits<double>::infinity();
  int prim_index = -1;
  Vec3 local = Vec3::Zero();   // object-frame point
  Vec3 world = Vec3::Zero();
  Vec3 normal = Vec3::Zero();  // outward geometric normal, world frame
};

// Shape intersections run in object coordinates (the T0 placement); the ray
// is pre-transformed, so t is shared between frames.
bool intersect(const Sphere& s, const Vec3& o, const Vec3& d, double t_min,
               double* t_out, Vec3* n_out) {
  const Vec3 oc = o - s.center;
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t <= t_min) t = -b + sq;
  if (t <= t_min) return false;
  *t_out = t;
  *n_out = (o + t * d - s.center).normalized();
  return true;
}

bool intersect(const Quad& q, const Vec3& o, const Vec3& d, double t_min,
               double* t_out, Vec3* n_out) {
  const Vec3 n = q.edge_u.cross(q.edge_v);
  const double denom = d.dot(n);
  if (std::abs(denom) < 1e-14) return false;
  const double t = (q.corner - o).dot(n) / denom;
  if (t <= t_min) return false;
  const Vec3 rel = o + t * d - q.corner;
  const double uu = q.edge_u.squaredNorm();
  const double vv = q.edge_v.squaredNorm();
  const double uv = q.edge_u.dot(q.edge_v);
  const double det = uu * vv - uv * uv;
  if (std::abs(det) < 1e-20) return false;
  const double ru = rel.dot(q.edge_u);
  const double rv = rel.dot(q.edge_v);
  const double a = (ru * vv - rv * uv) / det;
  const double b = (rv * uu - ru * uv) / det;
  if (a < 0.0 || a > 1.0 || b < 0.0 || b > 1.0) return false;
  *t_out = t;
  *n_out = n.normalized();
  return true;
}

bool intersect(const Box& box, const Vec3& o, const Vec3& d, double t_min,
               double* t_out, Vec3* n_out) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int near_axis = -1, far_axis = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-14) {
      if (o[a] < box.min[a] || o[a] > box.max[a]) return false;
      continue;
    }
    double t0 = (box.min[a] - o[a]) / d[a];
    double t1 = (box.max[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) {
      t_near = t0;
      near_axis = a;
    }
    if (t1 < t_far) {
      t_far = t1;
      far_axis = a;
    }
  }
  if (t_near > t_far || t_far <= t_min) return false;
  double t;
  int axis;
  if (t_near > t_min) {
    t = t_near;
    axis = near_axis;
  } else {
    t = t_far;  // ray starts inside: the exit face
    axis = far_axis;
  }
  if (axis < 0) return false;
  Vec3 n = Vec3::Zero();
  const double mid = 0.5 * (box.min[axis] + box.max[axis]);
  n[axis] = (o[axis] + t * d[axis]) > mid ? 1.0 : -1.0;
  *t_out = t;
  *n_out = n;
  return true;
}

// Nearest surface along o + t*d with t > t_min, honouring per-primitive
// motion when tracing the T1 frame.
bool nearest_hit(const SceneSpec& scene, Frame frame, const Vec3& o, const Vec3& d,
                 double t_min, SurfaceHit* out) {
  SurfaceHit best;
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& prim = scene.primitives[i];
    Vec3 o_loc = o, d_loc = d;
    const bool moved = frame == Frame::T1;
    if (moved) {
      o_loc = prim.motion.rotation.transpose() * (o - prim.motion.translation);
      d_loc = prim.motion.rotation.transpose() * d;
    }
    double t = 0.0;
    Vec3 n_loc = Vec3::Zero();
    const bool hit = std::visit(
        [&](const auto& shape) {
          return intersect(shape, o_loc, d_loc, t_min, &t, &n_loc);
        },
        prim.shape);
    if (hit && t < best.t) {
      best.t = t;
      best.prim_index = static_cast<int>(i);
      best.local = o_loc + t * d_loc;
      best.world = o + t * d;
      best.normal = moved ? Vec3(prim.motion.rotation * n_loc) : n_loc;
    }
  }
  if (best.prim_index < 0) return false;
  *out = best;
  return true;
}

struct CameraRay {
  Vec3 origin;
  Vec3 dir;
};

CameraRay pixel_to_ray(const CameraSpec& cam, const Pixel& pixel) {
  const Pixel ideal =
      cam.intrinsics.has_distortion() ? undistort(cam.intrinsics, pixel) : pixel;
  const Vec3 dir_cam = pixel_ray(cam.intrinsics, ideal);
  return {cam.pose.center(), cam.pose.rotation.transpose() * dir_cam};
}

}  // namespace

std::vector<LayerHit> trace_layers(const SceneSpec& scene, Frame frame,
                                   const Pixel& pixel) {
  const CameraSpec& cam = frame == Frame::T0 ? scene.camera_t0 : scene.camera_t1;
  CameraRay ray = pixel_to_ray(cam, pixel);

  std::vector<LayerHit> hits;
  int inside = -1;  // primitive index the ray is currently travelling in

  // Bounce cap guards against degenerate geometry; layered scenes terminate
  // via the opaque hit, escape, TIR, or the layer cap long before it.
  for (int bounce = 0; bounce < 64; ++bounce) {
    SurfaceHit surf;
    if (!nearest_hit(scene, frame, ray.origin, ray.dir, kRayEps, &surf)) break;
    const Primitive& prim = scene.primitives[surf.prim_index];

    if (inside < 0) {
      if (is_transparent(scene, prim.material)) {
        hits.push_back(LayerHit{static_cast<int>(hits.size()) + 1,
                                prim.object_id, surf.local, surf.world, true});
        if (static_cast<int>(hits.size()) >= kMaxLayers) break;
        if (std::holds_alternative<Quad>(prim.shape)) {
          // Thin pane: one layer, no deviation.
          ray.origin = surf.world;
          continue;
        }
        Vec3 n = surf.normal;
        if (ray.dir.dot(n) > 0.0) n = -n;
        const auto bent = refract(ray.dir, n, 1.0 / prim.material.ior);
        if (!bent) break;  // grazing numerical TIR; end the path
        ray.origin = surf.world;
        ray.dir = *bent;
        inside = surf.prim_index;
      } else {
        hits.push_back(LayerHit{static_cast<int>(hits.size()) + 1,
                                prim.object_id, surf.local, surf.world, false});
        break;
      }
    } else if (surf.prim_index == inside) {
      // Leaving the solid: refract back to air, no layer recorded.
      Vec3 n = surf.normal;
      if (ray.dir.dot(n) > 0.0) n = -n;
      const auto bent = refract(ray.dir, n, prim.material.ior);
      if (!bent) break;  // total internal reflection terminates the path
      ray.origin = surf.world;
      ray.dir = *bent;
      inside = -1;
    } else {
      break;  // overlapping solids are not modelled; stop the path
    }
  }
  return hits;
}

namespace {

// Residual of a T1 pixel candidate against a target world point: the
// world-space gap of its layer-index hit, plus the data needed to judge
// convergence in image-equivalent pixels.
struct FlowResidual {
  Vec3 gap;
  double err_px;
  int object_id;
};

std::optional<FlowResidual> flow_residual(const SceneSpec& scene, const Pixel& q,
                                          int layer, const Vec3& target,
                                          double focal, double depth) {
  const std::vector<LayerHit> hits = trace_layers(scene, Frame::T1, q);
  if (static_cast<int>(hits.size()) < layer) return std::nullopt;
  const LayerHit& h = hits[layer - 1];
  FlowResidual res;
  res.gap = h.world_point - target;
  res.err_px = res.gap.norm() * focal / depth;
  res.object_id = h.object_id;
  return res;
}

}  // namespace

std::optional<FlowVec> solve_flow(const SceneSpec& scene, const Pixel& pixel,
                                  const LayerHit& t0_hit) {
  const Primitive* prim = nullptr;
  for (const Primitive& p : scene.primitives) {
    if (p.object_id == t0_hit.object_id) {
      prim = &p;
      break;
    }
  }
  if (prim == nullptr) {
    throw Error(ErrorCode::FormatError,
                "hit references unknown object id " +
                    std::to_string(t0_hit.object_id));
  }

  const Vec3 target = prim->motion.apply(t0_hit.local_point);
  const CameraSpec& cam1 = scene.camera_t1;
  const double depth = cam1.pose.apply(target).z();
  if (!(depth > 1e-6)) return std::nullopt;  // moved behind the T1 camera
  const double focal = 0.5 * (cam1.intrinsics.fx + cam1.intrinsics.fy);

  // Initial guess in delta form: exact for straight-line (refraction-free)
  // sight and bitwise zero for a static scene.
  Pixel q = pixel;
  try {
    const Pixel p1 = project(cam1.intrinsics, cam1.pose, target);
    const Pixel p0 =
        project(scene.camera_t0.intrinsics, scene.camera_t0.pose, t0_hit.world_point);
    q.x = pixel.x + (p1.x - p0.x);
    q.y = pixel.y + (p1.y - p0.y);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NonPositiveDepth) return std::nullopt;
    throw;
  }

  auto eval = [&](const Pixel& p) {
    return flow_residual(scene, p, t0_hit.layer, target, focal, depth);
  };

  constexpr double kTolPx = 1e-3;
  constexpr double kFdStep = 0.25;  // px
  double lambda = 1e-2;

  std::optional<FlowResidual> cur = eval(q);
  if (!cur) return std::nullopt;

  for (int iter = 0; iter < 25; ++iter) {
    if (cur->err_px < kTolPx) break;

    // 3x2 Jacobian of the world gap w.r.t. the pixel, central differences
    // with one-sided fallback at layer boundaries.
    Eigen::Matrix<double, 3, 2> jac;
    for (int dim = 0; dim < 2; ++dim) {
      Pixel plus = q, minus = q;
      (dim == 0 ? plus.x : plus.y) += kFdStep;
      (dim == 0 ? minus.x : minus.y) -= kFdStep;
      const auto r_plus = eval(plus);
      const auto r_minus = eval(minus);
      if (r_plus && r_minus) {
        jac.col(dim) = (r_plus->gap - r_minus->gap) / (2.0 * kFdStep);
      } else if (r_plus) {
        jac.col(dim) = (r_plus->gap - cur->gap) / kFdStep;
      } else if (r_minus) {
        jac.col(dim) = (cur->gap - r_minus->gap) / kFdStep;
      } else {
        return std::nullopt;  // layer vanishes on both sides: off the surface
      }
    }

    Eigen::Matrix2d a = jac.transpose() * jac;
    a(0, 0) += lambda;
    a(1, 1) += lambda;
    const Eigen::Vector2d step = a.ldlt().solve(-(jac.transpose() * cur->gap));
    if (!step.allFinite()) return std::nullopt;

    const Pixel trial{q.x + step.x(), q.y + step.y()};
    const auto r_trial = eval(trial);
    if (r_trial && r_trial->gap.norm() < cur->gap.norm()) {
      q = trial;
      cur = r_trial;
      lambda = std::max(lambda * 0.1, 1e-12);
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) return std::nullopt;
    }
  }

  if (!(cur->err_px < kTolPx)) return std::nullopt;
  if (cur->object_id != t0_hit.object_id) return std::nullopt;
  return FlowVec{q.x - pixel.x, q.y - pixel.y};
}

namespace {

void fill_gt_pixel(const SceneSpec& scene, int x, int y,
                   const std::vector<LayerHit>& hits, GroundTruthMaps* maps) {
  maps->layer_count[static_cast<size_t>(y) * maps->width + x] =
      static_cast<int>(hits.size());
  for (const LayerHit& hit : hits) {
    const size_t idx = maps->index(hit.layer - 1, x, y);
    maps->position[idx] = hit.world_point;
    const auto flow = solve_flow(scene, Pixel{static_cast<double>(x),
                                              static_cast<double>(y)}, hit);
    if (flow) {
      maps->flow[idx] = *flow;
      maps->flow_valid[idx] = 1;
    }
  }
}

GroundTruthMaps allocate_gt(const SceneSpec& scene,
                            const std::vector<std::vector<LayerHit>>& hits) {
  GroundTruthMaps maps;
  maps.width = scene.width;
  maps.height = scene.height;
  maps.max_layers = 0;
  for (const auto& h : hits) {
    maps.max_layers = std::max(maps.max_layers, static_cast<int>(h.size()));
  }
  const size_t total = maps.plane_size() * std::max(maps.max_layers, 1);
  maps.flow.assign(total, FlowVec{});
  maps.flow_valid.assign(total, 0);
  maps.position.assign(total, Point3::Zero());
  maps.layer_count.assign(maps.plane_size(), 0);
  return maps;
}

}  // namespace

GroundTruthMaps render_gt(const SceneSpec& scene) {
  const int w = scene.width, h = scene.height;
  std::vector<std::vector<LayerHit>> hits(static_cast<size_t>(w) * h);
#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      hits[static_cast<size_t>(y) * w + x] = trace_layers(
          scene, Frame::T0, Pixel{static_cast<double>(x), static_cast<double>(y)});
    }
  }
  GroundTruthMaps maps = allocate_gt(scene, hits);
#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      fill_gt_pixel(scene, x, y, hits[static_cast<size_t>(y) * w + x], &maps);
    }
  }
  return maps;
}

GroundTruthMaps render_gt_serial(const SceneSpec& scene) {
  const int w = scene.width, h = scene.height;
  std::vector<std::vector<LayerHit>> hits(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      hits[static_cast<size_t>(y) * w + x] = trace_layers(
          scene, Frame::T0, Pixel{static_cast<double>(x), static_cast<double>(y)});
    }
  }
  GroundTruthMaps maps = allocate_gt(scene, hits);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      fill_gt_pixel(scene, x, y, hits[static_cast<size_t>(y) * w + x], &maps);
    }
  }
  return maps;
}

// --- MLGT container --------------------------------------------------------

namespace {

void append_u32(std::string* out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f32(std::string* out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  append_u32(out, bits);
}

uint32_t take_u32(const std::string& in, size_t* pos) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<uint32_t>(static_cast<unsigned char>(in[*pos + i])) << (8 * i);
  }
  *pos += 4;
  return v;
}

float take_f32(const std::string& in, size_t* pos) {
  const uint32_t bits = take_u32(in, pos);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void write_mlgt(const std::string& path, const GroundTruthMaps& maps) {
  std::string out;
  const size_t plane = maps.plane_size();
  out.reserve(20 + static_cast<size_t>(maps.max_layers) * plane * 21);
  out += "MLGT";
  append_u32(&out, 1);
  append_u32(&out, static_cast<uint32_t>(maps.width));
  append_u32(&out, static_cast<uint32_t>(maps.height));
  append_u32(&out, static_cast<uint32_t>(maps.max_layers));
  for (int layer = 0; layer < maps.max_layers; ++layer) {
    const size_t base = static_cast<size_t>(layer) * plane;
    for (size_t i = 0; i < plane; ++i)
      append_f32(&out, static_cast<float>(maps.flow[base + i].dx));
    for (size_t i = 0; i < plane; ++i)
      append_f32(&out, static_cast<float>(maps.flow[base + i].dy));
    for (size_t i = 0; i < plane; ++i)
      out.push_back(static_cast<char>(maps.flow_valid[base + i]));
    for (int c = 0; c < 3; ++c) {
      for (size_t i = 0; i < plane; ++i)
        append_f32(&out, static_cast<float>(maps.position[base + i][c]));
    }
  }
  write_file_atomic(path, out);
}

GroundTruthMaps read_mlgt(const std::string& path) {
  const std::string in = read_text_file(path);
  if (in.size() < 20 || in.compare(0, 4, "MLGT") != 0) {
    throw Error(ErrorCode::FormatError, path + ": not a ground-truth container");
  }
  size_t pos = 4;
  const uint32_t version = take_u32(in, &pos);
  if (version != 1) {
    throw Error(ErrorCode::FormatError,
                path + ": unsupported version " + std::to_string(version));
  }
  GroundTruthMaps maps;
  maps.width = static_cast<int>(take_u32(in, &pos));
  maps.height = static_cast<int>(take_u32(in, &pos));
  maps.max_layers = static_cast<int>(take_u32(in, &pos));
  if (maps.width <= 0 || maps.height <= 0 || maps.max_layers < 0 ||
      maps.max_layers > 1024) {
    throw Error(ErrorCode::FormatError, path + ": implausible header");
  }
  const size_t plane = maps.plane_size();
  const size_t need = 20 + static_cast<size_t>(maps.max_layers) * plane * 21;
  if (in.size() != need) {
    throw Error(ErrorCode::FormatError, path + ": truncated or oversized payload");
  }
  const size_t total = plane * std::max(maps.max_layers, 1);
  maps.flow.assign(total, FlowVec{});
  maps.flow_valid.assign(total, 0);
  maps.position.assign(total, Point3::Zero());
  for (int layer = 0; layer < maps.max_layers; ++layer) {
    const size_t base = static_cast<size_t>(layer) * plane;
    for (size_t i = 0; i < plane; ++i) maps.flow[base + i].dx = take_f32(in, &pos);
    for (size_t i = 0; i < plane; ++i) maps.flow[base + i].dy = take_f32(in, &pos);
    for (size_t i = 0; i < plane; ++i) {
      maps.flow_valid[base + i] = static_cast<uint8_t>(in[pos++]);
    }
    for (int c = 0; c < 3; ++c) {
      for (size_t i = 0; i < plane; ++i) {
        maps.position[base + i][c] = take_f32(in, &pos);
      }
    }
  }
  // layer_count is an in-memory aid; file consumers rely on flow_valid.
  return maps;
}

// --- RGB preview -----------------------------------------------------------

namespace {

using Color = Eigen::Array3d;

Color to_color(const std::array<double, 3>& a) { return Color(a[0], a[1], a[2]); }

Color shade(const SceneSpec& scene, Frame frame, Vec3 origin, Vec3 dir, int depth);

// Carries a refracted ray through a solid transparent primitive that was
// entered at `entry`: refract in, cross the interior, refract back to air.
// Empty on total internal reflection.
std::optional<std::pair<Vec3, Vec3>> transmit_solid(const SceneSpec& scene,
                                                    Frame frame, int prim_index,
                                                    const SurfaceHit& entry,
                                                    const Vec3& dir_world) {
  const Primitive& prim = scene.primitives[prim_index];
  Vec3 n = entry.normal;
  if (dir_world.dot(n) > 0.0) n = -n;
  const auto inside_dir = refract(dir_world, n, 1.0 / prim.material.ior);
  if (!inside_dir) return std::nullopt;

  SurfaceHit exit_surf;
  if (!nearest_hit(scene, frame, entry.world, *inside_dir, kRayEps, &exit_surf) ||
      exit_surf.prim_index != prim_index) {
    return std::nullopt;
  }
  Vec3 n_exit = exit_surf.normal;
  if (inside_dir->dot(n_exit) > 0.0) n_exit = -n_exit;
  const auto out_dir = refract(*inside_dir, n_exit, prim.material.ior);
  if (!out_dir) return std::nullopt;
  return std::make_pair(exit_surf.world, *out_dir);
}

Color shade_lambert(const SceneSpec& scene, Frame frame, const Primitive& prim,
                    const SurfaceHit& surf, const Vec3& dir) {
  Vec3 n = surf.normal;
  if (dir.dot(n) > 0.0) n = -n;
  Color light = to_color(scene.env_color);
  for (const PointLight& pl : scene.lights) {
    const Vec3 to_light = pl.position - surf.world;
    const double dist = to_light.norm();
    if (dist < 1e-9) continue;
    const Vec3 l = to_light / dist;
    const double lambert = n.dot(l);
    if (lambert <= 0.0) continue;
    SurfaceHit blocker;
    if (nearest_hit(scene, frame, surf.world, l, kRayEps, &blocker) &&
        blocker.t < dist - 1e-9) {
      continue;  // hard shadow
    }
    light += to_color(pl.intensity) * (lambert / (dist * dist));
  }
  return to_color(prim.material.albedo) * light;
}

Color shade(const SceneSpec& scene, Frame frame, Vec3 origin, Vec3 dir, int depth) {
  if (depth > 4) return to_color(scene.env_color);
  SurfaceHit surf;
  if (!nearest_hit(scene, frame, origin, dir, kRayEps, &surf)) {
    return to_color(scene.env_color);
  }
  const Primitive& prim = scene.primitives[surf.prim_index];

  if (prim.material.kind == MaterialKind::Metal) {
    Vec3 n = surf.normal;
    if (dir.dot(n) > 0.0) n = -n;
    const Vec3 reflected = (dir - 2.0 * dir.dot(n) * n).normalized();
    return to_color(prim.material.albedo) *
           shade(scene, frame, surf.world, reflected, depth + 1);
  }

  if (is_transparent(scene, prim.material)) {
    const Color tint = to_color(prim.material.albedo);
    if (std::holds_alternative<Quad>(prim.shape)) {
      return tint * shade(scene, frame, surf.world, dir, depth + 1);
    }
    const auto through = transmit_solid(scene, frame, surf.prim_index, surf, dir);
    if (!through) return tint * to_color(scene.env_color);
    return tint * shade(scene, frame, through->first, through->second, depth + 1);
  }

  return shade_lambert(scene, frame, prim, surf, dir);
}

RgbImage render_rgb_impl(const SceneSpec& scene, Frame frame, bool parallel) {
  const CameraSpec& cam = frame == Frame::T0 ? scene.camera_t0 : scene.camera_t1;
  RgbImage img;
  img.width = scene.width;
  img.height = scene.height;
  img.rgb.assign(static_cast<size_t>(scene.width) * scene.height * 3, 0.0);
#pragma omp parallel for schedule(dynamic, 4) if (parallel)
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      const CameraRay ray =
          pixel_to_ray(cam, Pixel{static_cast<double>(x), static_cast<double>(y)});
      const Color c = shade(scene, frame, ray.origin, ray.dir, 0);
      const size_t idx = (static_cast<size_t>(y) * scene.width + x) * 3;
      img.rgb[idx] = c[0];
      img.rgb[idx + 1] = c[1];
      img.rgb[idx + 2] = c[2];
    }
  }
  return img;
}

}  // namespace

RgbImage render_rgb(const SceneSpec& scene, Frame frame) {
  return render_rgb_impl(scene, frame, true);
}

RgbImage render_rgb_serial(const SceneSpec& scene, Frame frame) {
  return render_rgb_impl(scene, frame, false);
}

ImageU8 quantize_rgb(const RgbImage& img) {
  ImageU8 out;
  out.width = img.width;
  out.height = img.height;
  out.channels = 3;
  out.data.resize(img.rgb.size());
  for (size_t i = 0; i < img.rgb.size(); ++i) {
    const double v = std::clamp(img.rgb[i], 0.0, 1.0);
    out.data[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

SceneAnnotationSet annotations_from_gt(const SceneSpec& scene,
                                       const GroundTruthMaps& maps, int stride) {
  if (stride < 1) {
    throw Error(ErrorCode::SizeMismatch, "stride must be >= 1");
  }
  std::map<int, const Primitive*> by_id;
  for (const Primitive& prim : scene.primitives) by_id[prim.object_id] = &prim;

  SceneAnnotationSet set;
  set.scene_id = "synthetic";
  set.width = maps.width;
  set.height = maps.height;

  for (int y = 0; y < maps.height; y += stride) {
    for (int x = 0; x < maps.width; x += stride) {
      // Layer materials are not stored in the maps, so re-trace the pixel;
      // it is the same cost as the original trace pass over a sparse grid.
      const std::vector<LayerHit> hits = trace_layers(
          scene, Frame::T0, Pixel{static_cast<double>(x), static_cast<double>(y)});
      const int count = static_cast<int>(hits.size());
      if (count < 1) continue;
      const int layer = (x + y) % count + 1;
      const size_t idx = maps.index(layer - 1, x, y);
      if (!maps.flow_valid[idx]) continue;

      const LayerHit& hit = hits[layer - 1];
      LayerAnnotation ann;
      ann.pixel = {static_cast<double>(x), static_cast<double>(y)};
      ann.flow = maps.flow[idx];
      ann.point3d = scene.camera_t0.pose.apply(maps.position[idx]);
      ann.layer = layer;
      if (hit.transparent) {
        ann.material = MaterialClass::Transparent;
      } else {
        // Terminal hit: metal maps to the reflective class; diffuse and
        // rough glass (terminal by the threshold rule) to the diffuse class.
        const auto prim = by_id.find(hit.object_id);
        ann.material = (prim != by_id.end() &&
                        prim->second->material.kind == MaterialKind::Metal)
                           ? MaterialClass::Reflective
                           : MaterialClass::Diffuse;
      }
      ann.transparent_flag = ann.material == MaterialClass::Transparent ? 1 : 0;
      ann.tag_id = -1;
      ann.corner_index = 0;
      set.annotations.push_back(ann);
    }
  }
  return set;
}

}  // namespace layerbench
