#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "layerbench/geometry.hpp"
#include "layerbench/io.hpp"
#include "layerbench/renderer.hpp"

namespace layerbench {

// A predictor's multi-layer flow field. Planes are stored layer-major like
// GroundTruthMaps. Validity is per layer and pixel; consumers interpret the
// predicted layer count at a pixel as the length of its valid prefix.
struct MultiLayerPrediction {
  int width = 0;
  int height = 0;
  int n_layers = 0;
  std::vector<FlowVec> flow;
  std::vector<uint8_t> valid;

  size_t plane_size() const { return static_cast<size_t>(width) * height; }
  size_t index(int layer, int x, int y) const {
    return static_cast<size_t>(layer) * plane_size() +
           static_cast<size_t>(y) * width + x;
  }
  int valid_prefix(int x, int y) const {
    int n = 0;
    while (n < n_layers && valid[index(n, x, y)]) ++n;
    return n;
  }
};

enum class PruneMode {
  RawPrevious,       // compare each layer with its raw predecessor
  SurvivorPrevious,  // compare with the last surviving layer
};

// Multi-layer methods conventionally emit this many layers before pruning.
inline constexpr int kDefaultPredictionLayers = 4;

// Near-duplicate layer removal: within each pixel's valid prefix, layer i is
// discarded iff its flow is strictly closer than delta to the comparison
// layer; survivors are compacted into a fresh valid prefix. Layer 1 always
// survives. delta = 0 keeps everything.
MultiLayerPrediction prune(const MultiLayerPrediction& pred, double delta = 0.5,
                           PruneMode mode = PruneMode::RawPrevious);

// Binary container (little-endian): magic "MLFL", u32 version=1, u32 width,
// u32 height, u32 n_layers, then per layer the row-major planes f32 dx,
// f32 dy, u8 valid.
void write_mlfl(const std::string& path, const MultiLayerPrediction& pred);
MultiLayerPrediction read_mlfl(const std::string& path);  // FormatError

// Reference predictor: ground-truth flows plus iid gaussian pixel noise of
// the given sigma on valid layers. Validity is copied from the maps exactly;
// sigma = 0 reproduces the ground truth bit for bit. Deterministic in seed.
MultiLayerPrediction oracle_predictor(const GroundTruthMaps& maps, double sigma,
                                      uint64_t seed);

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  double at(int x, int y) const {
    return pixels[static_cast<size_t>(y) * width + x];
  }
};

GrayImage to_gray(const ImageU8& img);  // Rec.601 luma for rgb input

struct BlockMatchConfig {
  int window_radius = 3;   // SAD window is (2r+1)^2
  int search_radius = 4;   // integer search range per pyramid level
  int pyramid_levels = 4;  // clamped to what the image size supports
  double texture_threshold = 1e-9;  // window variance at/below = textureless
};

struct BlockMatchResult {
  int width = 0;
  int height = 0;
  std::vector<FlowVec> flow;
  std::vector<uint8_t> confident;  // 0 where the window was textureless
};

// Classical coarse-to-fine SAD block matcher (the single-layer baseline):
// box-filter pyramid, propagated integer search with smallest-displacement
// tie-breaking, parabolic sub-pixel refinement at the finest level.
// Textureless windows get zero flow and a low-confidence mark. Throws
// SizeMismatch when the two frames differ in size.
BlockMatchResult block_match_flow(const GrayImage& t0, const GrayImage& t1,
                                  const BlockMatchConfig& config = {});
BlockMatchResult block_match_flow_serial(const GrayImage& t0, const GrayImage& t1,
                                         const BlockMatchConfig& config = {});

// Wraps a dense single-layer field as a 1-layer prediction (all valid).
MultiLayerPrediction to_single_layer_prediction(const BlockMatchResult& result);

}  // namespace layerbench
