#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "layerbench/geometry.hpp"

namespace layerbench {

using Json = nlohmann::json;

// JSON representations round-trip doubles exactly (shortest-round-trip
// serialization, i.e. full value fidelity).
// Camera: {"fx","fy","cx","cy","dist":[5]}; calibration files add
// "image_size":[w,h]. Stereo rig: {"left":camera, "right":camera,
// "R":[9 row-major], "t":[3]} with x_right = R * x_left + t.
Json to_json(const CameraIntrinsics& intr);
CameraIntrinsics intrinsics_from_json(const Json& j);
Json to_json(const Pose& pose);
Pose pose_from_json(const Json& j);
Json to_json(const StereoRig& rig);
StereoRig rig_from_json(const Json& j);

// File helpers. Writes go to a temp file in the target directory and are
// renamed into place, so readers never observe partial output.
std::string read_text_file(const std::string& path);  // IoError
void write_file_atomic(const std::string& path, const std::string& bytes);
Json read_json_file(const std::string& path);  // IoError / FormatError
void write_json_file(const std::string& path, const Json& j);

// Interleaved 8-bit image; channels is 1 (grey) or 3 (rgb).
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<uint8_t> data;

  uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

// Binary PPM/PGM (P6/P5, 8-bit).
void write_ppm(const std::string& path, const ImageU8& img);
ImageU8 read_ppm(const std::string& path);  // FormatError / IoError

}  // namespace layerbench
