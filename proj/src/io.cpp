#include "layerbench/io.hpp"

#include <unistd.h>

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace layerbench {

namespace {

std::vector<double> to_vector(const Json& j, size_t expected, const char* what) {
  if (!j.is_array() || j.size() != expected) {
    throw Error(ErrorCode::FormatError,
                std::string(what) + " must be an array of " +
                    std::to_string(expected) + " numbers");
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const Json& v : j) {
    if (!v.is_number()) {
      throw Error(ErrorCode::FormatError, std::string(what) + " must be numeric");
    }
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

Json to_json(const CameraIntrinsics& intr) {
  return Json{{"fx", intr.fx},
              {"fy", intr.fy},
              {"cx", intr.cx},
              {"cy", intr.cy},
              {"dist", intr.dist}};
}

CameraIntrinsics intrinsics_from_json(const Json& j) {
  CameraIntrinsics intr;
  try {
    intr.fx = j.at("fx").get<double>();
    intr.fy = j.at("fy").get<double>();
    intr.cx = j.at("cx").get<double>();
    intr.cy = j.at("cy").get<double>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::FormatError,
                std::string("bad intrinsics: ") + e.what());
  }
  if (j.contains("dist")) {
    const std::vector<double> d = to_vector(j.at("dist"), 5, "dist");
    std::copy(d.begin(), d.end(), intr.dist.begin());
  }
  return intr;
}

Json to_json(const Pose& pose) {
  std::vector<double> r(9);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r[3 * i + k] = pose.rotation(i, k);
  return Json{{"rotation", r},
              {"translation",
               {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

Pose pose_from_json(const Json& j) {
  Pose pose;
  const std::vector<double> r = to_vector(j.at("rotation"), 9, "rotation");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) pose.rotation(i, k) = r[3 * i + k];
  const std::vector<double> t = to_vector(j.at("translation"), 3, "translation");
  pose.translation = Vec3(t[0], t[1], t[2]);
  return pose;
}

Json to_json(const StereoRig& rig) {
  Json left = to_json(rig.left);
  Json right = to_json(rig.right);
  left["image_size"] = {rig.width, rig.height};
  right["image_size"] = {rig.width, rig.height};
  std::vector<double> r(9);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r[3 * i + k] = rig.relative.rotation(i, k);
  return Json{{"left", std::move(left)},
              {"right", std::move(right)},
              {"R", r},
              {"t",
               {rig.relative.translation.x(), rig.relative.translation.y(),
                rig.relative.translation.z()}}};
}

StereoRig rig_from_json(const Json& j) {
  StereoRig rig;
  try {
    rig.left = intrinsics_from_json(j.at("left"));
    rig.right = intrinsics_from_json(j.at("right"));
    const std::vector<double> r = to_vector(j.at("R"), 9, "R");
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) rig.relative.rotation(i, k) = r[3 * i + k];
    const std::vector<double> t = to_vector(j.at("t"), 3, "t");
    rig.relative.translation = Vec3(t[0], t[1], t[2]);
    rig.width = j.at("left").at("image_size").at(0).get<int>();
    rig.height = j.at("left").at("image_size").at(1).get<int>();
    const int rw = j.at("right").at("image_size").at(0).get<int>();
    const int rh = j.at("right").at("image_size").at(1).get<int>();
    if (rw != rig.width || rh != rig.height) {
      throw Error(ErrorCode::FormatError,
                  "left and right cameras disagree on image_size");
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("bad rig: ") + e.what());
  }
  return rig;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) {
    throw Error(ErrorCode::IoError, "read failed for " + path);
  }
  return buf.str();
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path dir = target.parent_path();
  if (dir.empty()) dir = ".";
  const fs::path tmp =
      dir / (target.filename().string() + ".tmp." +
             std::to_string(static_cast<unsigned long>(::getpid())));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(ErrorCode::IoError, "cannot create " + tmp.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::IoError, "cannot move output into place at " + path);
  }
}

Json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::FormatError, "invalid JSON in " + path);
  }
  return j;
}

void write_json_file(const std::string& path, const Json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

void write_ppm(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw Error(ErrorCode::FormatError, "image must have 1 or 3 channels");
  }
  if (img.data.size() !=
      static_cast<size_t>(img.width) * img.height * img.channels) {
    throw Error(ErrorCode::SizeMismatch, "image buffer does not match size");
  }
  std::string bytes = (img.channels == 3 ? "P6\n" : "P5\n");
  bytes += std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  bytes.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  write_file_atomic(path, bytes);
}

namespace {

// Reads the next whitespace/comment-delimited token of a PPM header.
std::string next_token(const std::string& text, size_t* pos) {
  size_t i = *pos;
  while (i < text.size()) {
    if (text[i] == '#') {
      while (i < text.size() && text[i] != '\n') ++i;
    } else if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    } else {
      break;
    }
  }
  size_t start = i;
  while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) &&
         text[i] != '#') {
    ++i;
  }
  *pos = i;
  return text.substr(start, i - start);
}

}  // namespace

ImageU8 read_ppm(const std::string& path) {
  const std::string text = read_text_file(path);
  size_t pos = 0;
  const std::string magic = next_token(text, &pos);
  ImageU8 img;
  if (magic == "P6") {
    img.channels = 3;
  } else if (magic == "P5") {
    img.channels = 1;
  } else {
    throw Error(ErrorCode::FormatError, "unsupported image magic in " + path);
  }
  try {
    img.width = std::stoi(next_token(text, &pos));
    img.height = std::stoi(next_token(text, &pos));
    const int maxval = std::stoi(next_token(text, &pos));
    if (maxval != 255) {
      throw Error(ErrorCode::FormatError, "only 8-bit images supported");
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::FormatError, "bad image header in " + path);
  }
  if (img.width <= 0 || img.height <= 0) {
    throw Error(ErrorCode::FormatError, "bad image dimensions in " + path);
  }
  ++pos;  // single whitespace after maxval
  const size_t need = static_cast<size_t>(img.width) * img.height * img.channels;
  if (text.size() - pos < need) {
    throw Error(ErrorCode::FormatError, "truncated image data in " + path);
  }
  img.data.assign(text.begin() + pos, text.begin() + pos + need);
  return img;
}

}  // namespace layerbench
