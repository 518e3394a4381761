#include "layerbench/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "layerbench/io.hpp"

namespace layerbench {

const char* material_class_name(MaterialClass m) {
  switch (m) {
    case MaterialClass::Transparent: return "transparent";
    case MaterialClass::Reflective: return "reflective";
    case MaterialClass::Diffuse: return "diffuse";
  }
  return "diffuse";
}

MaterialClass material_class_from_name(const std::string& name) {
  if (name == "transparent") return MaterialClass::Transparent;
  if (name == "reflective") return MaterialClass::Reflective;
  if (name == "diffuse") return MaterialClass::Diffuse;
  throw Error(ErrorCode::FormatError, "unknown material class '" + name + "'");
}

std::vector<CornerTrack> match_tags(const std::vector<TagDetection>& detections) {
  // Index detections per capture image; a tag may appear once per image.
  std::map<std::pair<int, int>, std::map<int, const TagDetection*>> images;
  for (const TagDetection& det : detections) {
    const std::pair<int, int> image_key{static_cast<int>(det.camera),
                                        static_cast<int>(det.frame)};
    auto [it, inserted] = images[image_key].emplace(det.tag_id, &det);
    if (!inserted) {
      std::ostringstream msg;
      msg << "tag " << det.tag_id << " detected twice in "
          << (det.camera == CameraSide::Left ? "left" : "right") << "-"
          << (det.frame == Frame::T0 ? "t0" : "t1") << " image";
      throw Error(ErrorCode::DuplicateTagInImage, msg.str());
    }
  }

  std::vector<int> tag_ids;
  for (const auto& [key, tags] : images)
    for (const auto& [id, det] : tags) tag_ids.push_back(id);
  std::sort(tag_ids.begin(), tag_ids.end());
  tag_ids.erase(std::unique(tag_ids.begin(), tag_ids.end()), tag_ids.end());

  auto find = [&images](CameraSide cam, Frame frame, int tag_id) {
    const auto img = images.find({static_cast<int>(cam), static_cast<int>(frame)});
    if (img == images.end()) return static_cast<const TagDetection*>(nullptr);
    const auto det = img->second.find(tag_id);
    return det == img->second.end() ? nullptr : det->second;
  };

  std::vector<CornerTrack> tracks;
  tracks.reserve(tag_ids.size() * 4);
  for (int id : tag_ids) {
    const TagDetection* l0 = find(CameraSide::Left, Frame::T0, id);
    const TagDetection* r0 = find(CameraSide::Right, Frame::T0, id);
    const TagDetection* l1 = find(CameraSide::Left, Frame::T1, id);
    const TagDetection* r1 = find(CameraSide::Right, Frame::T1, id);
    for (int c = 0; c < 4; ++c) {
      CornerTrack track;
      track.tag_id = id;
      track.corner_index = c;
      if (l0) track.left_t0 = l0->corners[c];
      if (r0) track.right_t0 = r0->corners[c];
      if (l1) track.left_t1 = l1->corners[c];
      if (r1) track.right_t1 = r1->corners[c];
      tracks.push_back(track);
    }
  }
  return tracks;
}

SceneAnnotationSet build_annotations(const std::vector<CornerTrack>& tracks,
                                     const StereoRig& rig, const RectifyMap& map,
                                     const std::map<int, TagLabel>& labels,
                                     const BuildOptions& opts) {
  if (opts.detection_image_size &&
      (opts.detection_image_size->first != rig.width ||
       opts.detection_image_size->second != rig.height)) {
    std::ostringstream msg;
    msg << "detections are " << opts.detection_image_size->first << "x"
        << opts.detection_image_size->second << " but the rig was calibrated at "
        << rig.width << "x" << rig.height;
    throw Error(ErrorCode::CalibrationMismatch, msg.str());
  }

  SceneAnnotationSet set;
  set.scene_id = opts.scene_id;
  set.width = rig.width;
  set.height = rig.height;
  set.rig = rig;

  const double baseline = rectified_baseline(rig);
  double y_sum_all = 0.0, y_sum_kept = 0.0;
  int kept = 0;

  for (const CornerTrack& track : tracks) {
    const auto label = labels.find(track.tag_id);
    if (label == labels.end()) {
      throw Error(ErrorCode::MissingLabel,
                  "tag " + std::to_string(track.tag_id) + " has no label");
    }
    if (label->second.layer < 1) {
      throw Error(ErrorCode::FormatError,
                  "tag " + std::to_string(track.tag_id) + " has layer < 1");
    }

    if (track.has_stereo_t1()) ++set.stats.stereo_t1_pairs;
    if (!track.left_t0) continue;  // annotations are anchored at left-T0

    const Pixel l0 = rectify_pixel(rig, map, CameraSide::Left, *track.left_t0);

    LayerAnnotation ann;
    ann.pixel = l0;
    ann.layer = label->second.layer;
    ann.material = label->second.material;
    ann.transparent_flag = ann.material == MaterialClass::Transparent ? 1 : 0;
    ann.tag_id = track.tag_id;
    ann.corner_index = track.corner_index;

    if (track.left_t1) {
      const Pixel l1 = rectify_pixel(rig, map, CameraSide::Left, *track.left_t1);
      ann.flow = FlowVec{l1.x - l0.x, l1.y - l0.y};
      ++set.stats.flow_pairs;
    }

    if (track.right_t0) {
      ++set.stats.stereo_pairs;
      const Pixel r0 = rectify_pixel(rig, map, CameraSide::Right, *track.right_t0);
      const double dy = std::abs(l0.y - r0.y);
      y_sum_all += dy;
      if (dy > opts.y_disparity_gate) {
        ++set.stats.stereo_dropped;
      } else {
        y_sum_kept += dy;
        ++kept;
        const double d = l0.x - r0.x;
        if (!(d > 0.0)) {
          ++set.stats.stereo_invalid;
        } else {
          ann.disparity = d;
          // Closed-form depth in the rectified frame, rotated back into the
          // original left camera.
          const double z = map.rectified.fx * baseline / d;
          const Vec3 rect_pt((l0.x - map.rectified.cx) / map.rectified.fx * z,
                             (l0.y - map.rectified.cy) / map.rectified.fy * z, z);
          const Vec3 closed = map.left_rotation.transpose() * rect_pt;
          ann.point3d = closed;
          // Cross-check against the general triangulation of the raw pair; a
          // visible gap means the calibration does not fit these detections.
          try {
            const Point3 general =
                triangulate(rig, undistort(rig.left, *track.left_t0),
                            undistort(rig.right, *track.right_t0));
            const double gap = (closed - general).norm();
            set.stats.max_triangulation_gap =
                std::max(set.stats.max_triangulation_gap, gap);
            if (gap > 1e-6) set.stats.triangulation_warning = true;
          } catch (const Error&) {
            set.stats.triangulation_warning = true;
          }
        }
      }
    }

    if (ann.flow || ann.disparity) {
      set.annotations.push_back(std::move(ann));
    }
  }

  set.stats.mean_y_disparity_all =
      set.stats.stereo_pairs > 0 ? y_sum_all / set.stats.stereo_pairs : 0.0;
  set.stats.mean_y_disparity = kept > 0 ? y_sum_kept / kept : 0.0;
  return set;
}

SceneAnnotationSet rescale_annotations(const SceneAnnotationSet& set, double scale) {
  if (!(scale > 0.0)) {
    throw Error(ErrorCode::SizeMismatch, "scale must be positive");
  }
  SceneAnnotationSet out = set;
  out.width = static_cast<int>(std::lround(set.width * scale));
  out.height = static_cast<int>(std::lround(set.height * scale));
  for (LayerAnnotation& ann : out.annotations) {
    ann.pixel.x *= scale;
    ann.pixel.y *= scale;
    if (ann.flow) {
      ann.flow->dx *= scale;
      ann.flow->dy *= scale;
    }
    if (ann.disparity) *ann.disparity *= scale;
    // point3d is metric; untouched by design.
  }
  return out;
}

namespace {

Json annotation_to_json(const LayerAnnotation& ann) {
  Json j{{"pixel", {ann.pixel.x, ann.pixel.y}},
         {"layer", ann.layer},
         {"material", material_class_name(ann.material)},
         {"transparent", ann.transparent_flag},
         {"tag_id", ann.tag_id},
         {"corner_index", ann.corner_index}};
  j["flow"] = ann.flow ? Json{ann.flow->dx, ann.flow->dy} : Json(nullptr);
  j["disparity"] = ann.disparity ? Json(*ann.disparity) : Json(nullptr);
  j["point3d"] = ann.point3d
                     ? Json{ann.point3d->x(), ann.point3d->y(), ann.point3d->z()}
                     : Json(nullptr);
  return j;
}

LayerAnnotation annotation_from_json(const Json& j) {
  LayerAnnotation ann;
  try {
    ann.pixel = {j.at("pixel").at(0).get<double>(), j.at("pixel").at(1).get<double>()};
    ann.layer = j.at("layer").get<int>();
    ann.material = material_class_from_name(j.at("material").get<std::string>());
    ann.transparent_flag = j.at("transparent").get<int>();
    ann.tag_id = j.at("tag_id").get<int>();
    ann.corner_index = j.at("corner_index").get<int>();
    if (!j.at("flow").is_null()) {
      ann.flow = FlowVec{j.at("flow").at(0).get<double>(),
                         j.at("flow").at(1).get<double>()};
    }
    if (!j.at("disparity").is_null()) {
      ann.disparity = j.at("disparity").get<double>();
    }
    if (!j.at("point3d").is_null()) {
      ann.point3d = Point3(j.at("point3d").at(0).get<double>(),
                           j.at("point3d").at(1).get<double>(),
                           j.at("point3d").at(2).get<double>());
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("bad annotation: ") + e.what());
  }
  if (ann.layer < 1) {
    throw Error(ErrorCode::FormatError, "annotation layer must be >= 1");
  }
  if (ann.transparent_flag !=
      (ann.material == MaterialClass::Transparent ? 1 : 0)) {
    throw Error(ErrorCode::FormatError,
                "transparent flag contradicts material class");
  }
  return ann;
}

Json stats_to_json(const AnnotationStats& s) {
  return Json{{"stereo_pairs", s.stereo_pairs},
              {"stereo_dropped", s.stereo_dropped},
              {"stereo_invalid", s.stereo_invalid},
              {"stereo_t1_pairs", s.stereo_t1_pairs},
              {"flow_pairs", s.flow_pairs},
              {"mean_y_disparity", s.mean_y_disparity},
              {"mean_y_disparity_all", s.mean_y_disparity_all},
              {"max_triangulation_gap", s.max_triangulation_gap},
              {"triangulation_warning", s.triangulation_warning}};
}

AnnotationStats stats_from_json(const Json& j) {
  AnnotationStats s;
  s.stereo_pairs = j.value("stereo_pairs", 0);
  s.stereo_dropped = j.value("stereo_dropped", 0);
  s.stereo_invalid = j.value("stereo_invalid", 0);
  s.stereo_t1_pairs = j.value("stereo_t1_pairs", 0);
  s.flow_pairs = j.value("flow_pairs", 0);
  s.mean_y_disparity = j.value("mean_y_disparity", 0.0);
  s.mean_y_disparity_all = j.value("mean_y_disparity_all", 0.0);
  s.max_triangulation_gap = j.value("max_triangulation_gap", 0.0);
  s.triangulation_warning = j.value("triangulation_warning", false);
  return s;
}

}  // namespace

void write_annotations(const std::string& path, const SceneAnnotationSet& set) {
  std::ostringstream out;
  Json header{{"type", "scene_header"},
              {"scene_id", set.scene_id},
              {"width", set.width},
              {"height", set.height},
              {"stats", stats_to_json(set.stats)}};
  header["rig"] = set.rig ? to_json(*set.rig) : Json(nullptr);
  out << header.dump() << "\n";
  for (const LayerAnnotation& ann : set.annotations) {
    out << annotation_to_json(ann).dump() << "\n";
  }
  write_file_atomic(path, out.str());
}

SceneAnnotationSet read_annotations(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  SceneAnnotationSet set;
  bool have_header = false;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw Error(ErrorCode::FormatError,
                  path + ":" + std::to_string(line_no) + ": invalid JSON");
    }
    if (!have_header) {
      if (j.value("type", "") != "scene_header") {
        throw Error(ErrorCode::FormatError,
                    path + ": first line must be a scene_header");
      }
      set.scene_id = j.value("scene_id", "");
      set.width = j.value("width", 0);
      set.height = j.value("height", 0);
      if (j.contains("rig") && !j.at("rig").is_null()) {
        set.rig = rig_from_json(j.at("rig"));
      }
      if (j.contains("stats")) set.stats = stats_from_json(j.at("stats"));
      have_header = true;
    } else {
      set.annotations.push_back(annotation_from_json(j));
    }
  }
  if (!have_header) {
    throw Error(ErrorCode::FormatError, path + ": empty annotation file");
  }
  return set;
}

namespace {

const char* camera_side_name(CameraSide side) {
  return side == CameraSide::Left ? "left" : "right";
}

const char* frame_name(Frame frame) { return frame == Frame::T0 ? "t0" : "t1"; }

}  // namespace

DetectionFile read_detections(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  DetectionFile file;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw Error(ErrorCode::FormatError,
                  path + ":" + std::to_string(line_no) + ": invalid JSON");
    }
    try {
      const std::string cam = j.at("camera").get<std::string>();
      const std::string frm = j.at("frame").get<std::string>();
      if ((cam != "left" && cam != "right") || (frm != "t0" && frm != "t1")) {
        throw Error(ErrorCode::FormatError,
                    path + ":" + std::to_string(line_no) + ": bad camera/frame");
      }
      if (j.contains("image_size")) {
        const std::pair<int, int> size{j.at("image_size").at(0).get<int>(),
                                       j.at("image_size").at(1).get<int>()};
        if (file.image_size && *file.image_size != size) {
          throw Error(ErrorCode::FormatError,
                      path + ": inconsistent image_size across lines");
        }
        file.image_size = size;
      }
      for (const Json& tag : j.at("tags")) {
        TagDetection det;
        det.tag_id = tag.at("id").get<int>();
        det.image_id = j.value("image_id", "");
        det.camera = cam == "left" ? CameraSide::Left : CameraSide::Right;
        det.frame = frm == "t0" ? Frame::T0 : Frame::T1;
        det.center = {tag.at("center").at(0).get<double>(),
                      tag.at("center").at(1).get<double>()};
        const Json& corners = tag.at("corners");
        if (!corners.is_array() || corners.size() != 4) {
          throw Error(ErrorCode::FormatError,
                      path + ":" + std::to_string(line_no) +
                          ": tags need exactly 4 corners");
        }
        for (int c = 0; c < 4; ++c) {
          det.corners[c] = {corners.at(c).at(0).get<double>(),
                            corners.at(c).at(1).get<double>()};
        }
        file.detections.push_back(std::move(det));
      }
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::FormatError, path + ":" + std::to_string(line_no) +
                                              ": " + e.what());
    }
  }
  return file;
}

void write_detections(const std::string& path,
                      const std::vector<TagDetection>& detections,
                      std::optional<std::pair<int, int>> image_size) {
  // Group by capture image, preserving first-seen order.
  std::vector<std::pair<std::pair<CameraSide, Frame>, std::vector<const TagDetection*>>>
      groups;
  for (const TagDetection& det : detections) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
      return g.first.first == det.camera && g.first.second == det.frame;
    });
    if (it == groups.end()) {
      groups.push_back({{det.camera, det.frame}, {&det}});
    } else {
      it->second.push_back(&det);
    }
  }
  std::ostringstream out;
  for (const auto& [key, dets] : groups) {
    Json j{{"image_id", dets.front()->image_id},
           {"camera", camera_side_name(key.first)},
           {"frame", frame_name(key.second)}};
    if (image_size) j["image_size"] = {image_size->first, image_size->second};
    Json tags = Json::array();
    for (const TagDetection* det : dets) {
      Json corners = Json::array();
      for (const Pixel& c : det->corners) corners.push_back({c.x, c.y});
      tags.push_back(Json{{"id", det->tag_id},
                          {"center", {det->center.x, det->center.y}},
                          {"corners", corners}});
    }
    j["tags"] = tags;
    out << j.dump() << "\n";
  }
  write_file_atomic(path, out.str());
}

std::map<int, TagLabel> read_labels(const std::string& path) {
  const Json j = read_json_file(path);
  if (!j.is_object()) {
    throw Error(ErrorCode::FormatError, path + ": labels must be a JSON object");
  }
  std::map<int, TagLabel> labels;
  for (const auto& [key, value] : j.items()) {
    int id = 0;
    try {
      id = std::stoi(key);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::FormatError, path + ": bad tag id '" + key + "'");
    }
    TagLabel label;
    try {
      label.material =
          material_class_from_name(value.at("material").get<std::string>());
      label.layer = value.at("layer").get<int>();
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::FormatError,
                  path + ": bad label for tag " + key + ": " + e.what());
    }
    if (label.layer < 1) {
      throw Error(ErrorCode::FormatError,
                  path + ": tag " + key + " has layer < 1");
    }
    labels[id] = label;
  }
  return labels;
}

void write_labels(const std::string& path, const std::map<int, TagLabel>& labels) {
  Json j = Json::object();
  for (const auto& [id, label] : labels) {
    j[std::to_string(id)] = Json{{"material", material_class_name(label.material)},
                                 {"layer", label.layer}};
  }
  write_json_file(path, j);
}

}  // namespace layerbench
