#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "layerbench/calibration.hpp"
#include "layerbench/geometry.hpp"

namespace layerbench {

enum class MaterialClass { Transparent, Reflective, Diffuse };

const char* material_class_name(MaterialClass m);
MaterialClass material_class_from_name(const std::string& name);  // FormatError

// One fiducial tag seen in one image. Corners are ordered TL, TR, BR, BL in
// the tag's own frame.
struct TagDetection {
  int tag_id = 0;
  std::string image_id;
  CameraSide camera = CameraSide::Left;
  Frame frame = Frame::T0;
  Pixel center;
  std::array<Pixel, 4> corners;
};

// A tag corner matched across the four capture images (left/right x T0/T1).
// Pixels are raw (unrectified); absent entries mean the tag was not detected
// in that image.
struct CornerTrack {
  int tag_id = 0;
  int corner_index = 0;
  std::optional<Pixel> left_t0;
  std::optional<Pixel> right_t0;
  std::optional<Pixel> left_t1;
  std::optional<Pixel> right_t1;

  bool has_stereo_t0() const { return left_t0 && right_t0; }
  bool has_stereo_t1() const { return left_t1 && right_t1; }
  bool has_flow() const { return left_t0 && left_t1; }
};

// Groups detections by tag and corner across the four images. A tag id
// appearing twice in the same image is a detector fault:
// DuplicateTagInImage. Output is ordered by (tag_id, corner_index).
std::vector<CornerTrack> match_tags(const std::vector<TagDetection>& detections);

struct TagLabel {
  MaterialClass material = MaterialClass::Diffuse;
  int layer = 1;
};

// One annotated point, anchored in the rectified left-T0 image. Measurements
// a corner did not survive with (gated stereo, missing flow) are absent.
struct LayerAnnotation {
  Pixel pixel;                      // rectified left-T0
  std::optional<FlowVec> flow;      // rectified left-T0 -> left-T1
  std::optional<double> disparity;  // rectified x_left - x_right at T0
  std::optional<Point3> point3d;    // left-camera frame at T0, metres
  int layer = 1;
  MaterialClass material = MaterialClass::Diffuse;
  int transparent_flag = 0;  // 1 iff material == Transparent
  int tag_id = 0;
  int corner_index = 0;
};

struct AnnotationStats {
  int stereo_pairs = 0;    // stereo-T0 candidates
  int stereo_dropped = 0;  // failed the y-disparity gate
  int stereo_invalid = 0;  // non-positive disparity
  int stereo_t1_pairs = 0; // matched at T1; counted, not materialized
  int flow_pairs = 0;
  double mean_y_disparity = 0.0;       // over kept stereo-T0 pairs
  double mean_y_disparity_all = 0.0;   // before the gate
  double max_triangulation_gap = 0.0;  // closed-form vs general, metres
  bool triangulation_warning = false;  // gap exceeded 1e-6 m somewhere
};

struct SceneAnnotationSet {
  std::string scene_id;
  int width = 0;
  int height = 0;
  std::optional<StereoRig> rig;  // capture rig; absent for synthetic sets
  std::vector<LayerAnnotation> annotations;
  AnnotationStats stats;
};

struct BuildOptions {
  // Stereo pairs whose rectified |y_left - y_right| exceeds this are dropped
  // from stereo (their flow measurement, if any, is kept).
  double y_disparity_gate = 0.75;
  std::string scene_id;
  // Capture resolution of the detection files, when known; must match the
  // rig or the calibration does not belong to these images.
  std::optional<std::pair<int, int>> detection_image_size;
};

// Rectifies matched corners, applies the stereo quality gate, computes
// disparity / flow / triangulated 3D per corner, and attaches material and
// layer labels. Depth uses the closed-form rectified relation
// Z = f * B / disparity, cross-checked against the general two-view
// triangulation; a gap above 1e-6 m flags a calibration problem in stats.
// Throws MissingLabel for an unlabeled tag_id, CalibrationMismatch when the
// detection resolution disagrees with the rig.
SceneAnnotationSet build_annotations(const std::vector<CornerTrack>& tracks,
                                     const StereoRig& rig, const RectifyMap& map,
                                     const std::map<int, TagLabel>& labels,
                                     const BuildOptions& opts = {});

// Uniform rescale of image-space quantities (pixel, flow, disparity) by
// scale > 0; 3D points are metric and unchanged; resolution is rounded.
SceneAnnotationSet rescale_annotations(const SceneAnnotationSet& set, double scale);

// JSON Lines serialization: a header line followed by one line per
// annotation. All fields round-trip exactly.
void write_annotations(const std::string& path, const SceneAnnotationSet& set);
SceneAnnotationSet read_annotations(const std::string& path);

struct DetectionFile {
  std::vector<TagDetection> detections;
  std::optional<std::pair<int, int>> image_size;
};

// JSON Lines, one line per image: {"image_id", "camera", "frame",
// "image_size"?, "tags": [{"id", "center", "corners"}]}.
DetectionFile read_detections(const std::string& path);
void write_detections(const std::string& path,
                      const std::vector<TagDetection>& detections,
                      std::optional<std::pair<int, int>> image_size = {});

// Sidecar label map {"<tag_id>": {"material", "layer"}}.
std::map<int, TagLabel> read_labels(const std::string& path);
void write_labels(const std::string& path, const std::map<int, TagLabel>& labels);

}  // namespace layerbench
