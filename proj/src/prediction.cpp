#include "layerbench/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "layerbench/scene.hpp"  // Rng

namespace layerbench {

MultiLayerPrediction prune(const MultiLayerPrediction& pred, double delta,
                           PruneMode mode) {
  if (delta < 0.0) {
    throw Error(ErrorCode::SizeMismatch, "delta must be non-negative");
  }
  MultiLayerPrediction out;
  out.width = pred.width;
  out.height = pred.height;
  out.n_layers = pred.n_layers;
  out.flow.assign(pred.flow.size(), FlowVec{});
  out.valid.assign(pred.valid.size(), 0);

  for (int y = 0; y < pred.height; ++y) {
    for (int x = 0; x < pred.width; ++x) {
      const int n = pred.valid_prefix(x, y);
      int kept = 0;
      FlowVec survivor{};
      for (int layer = 0; layer < n; ++layer) {
        const FlowVec f = pred.flow[pred.index(layer, x, y)];
        if (layer > 0) {
          const FlowVec ref = mode == PruneMode::RawPrevious
                                  ? pred.flow[pred.index(layer - 1, x, y)]
                                  : survivor;
          const double gap = std::hypot(f.dx - ref.dx, f.dy - ref.dy);
          if (gap < delta) continue;  // strict: delta = 0 discards nothing
        }
        out.flow[out.index(kept, x, y)] = f;
        out.valid[out.index(kept, x, y)] = 1;
        survivor = f;
        ++kept;
      }
    }
  }
  return out;
}

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

void write_mlfl(const std::string& path, const MultiLayerPrediction& pred) {
  std::string out;
  const size_t plane = pred.plane_size();
  out.reserve(20 + static_cast<size_t>(pred.n_layers) * plane * 9);
  out += "MLFL";
  append_u32(&out, 1);
  append_u32(&out, static_cast<uint32_t>(pred.width));
  append_u32(&out, static_cast<uint32_t>(pred.height));
  append_u32(&out, static_cast<uint32_t>(pred.n_layers));
  for (int layer = 0; layer < pred.n_layers; ++layer) {
    const size_t base = static_cast<size_t>(layer) * plane;
    for (size_t i = 0; i < plane; ++i)
      append_f32(&out, static_cast<float>(pred.flow[base + i].dx));
    for (size_t i = 0; i < plane; ++i)
      append_f32(&out, static_cast<float>(pred.flow[base + i].dy));
    for (size_t i = 0; i < plane; ++i)
      out.push_back(static_cast<char>(pred.valid[base + i]));
  }
  write_file_atomic(path, out);
}

MultiLayerPrediction read_mlfl(const std::string& path) {
  const std::string in = read_text_file(path);
  if (in.size() < 20 || in.compare(0, 4, "MLFL") != 0) {
    throw Error(ErrorCode::FormatError, path + ": not a flow prediction container");
  }
  size_t pos = 4;
  const uint32_t version = take_u32(in, &pos);
  if (version != 1) {
    throw Error(ErrorCode::FormatError,
                path + ": unsupported version " + std::to_string(version));
  }
  MultiLayerPrediction pred;
  pred.width = static_cast<int>(take_u32(in, &pos));
  pred.height = static_cast<int>(take_u32(in, &pos));
  pred.n_layers = static_cast<int>(take_u32(in, &pos));
  if (pred.width <= 0 || pred.height <= 0 || pred.n_layers < 0 ||
      pred.n_layers > 1024) {
    throw Error(ErrorCode::FormatError, path + ": implausible header");
  }
  const size_t plane = pred.plane_size();
  const size_t need = 20 + static_cast<size_t>(pred.n_layers) * plane * 9;
  if (in.size() != need) {
    throw Error(ErrorCode::FormatError, path + ": truncated or oversized payload");
  }
  const size_t total = plane * std::max(pred.n_layers, 1);
  pred.flow.assign(total, FlowVec{});
  pred.valid.assign(total, 0);
  for (int layer = 0; layer < pred.n_layers; ++layer) {
    const size_t base = static_cast<size_t>(layer) * plane;
    for (size_t i = 0; i < plane; ++i) pred.flow[base + i].dx = take_f32(in, &pos);
    for (size_t i = 0; i < plane; ++i) pred.flow[base + i].dy = take_f32(in, &pos);
    for (size_t i = 0; i < plane; ++i) {
      pred.valid[base + i] = static_cast<uint8_t>(in[pos++]);
    }
  }
  return pred;
}

MultiLayerPrediction oracle_predictor(const GroundTruthMaps& maps, double sigma,
                                      uint64_t seed) {
  MultiLayerPrediction pred;
  pred.width = maps.width;
  pred.height = maps.height;
  pred.n_layers = maps.max_layers;
  const size_t total = maps.plane_size() * std::max(maps.max_layers, 1);
  pred.flow.assign(total, FlowVec{});
  pred.valid.assign(total, 0);

  Rng rng(seed);
  for (int layer = 0; layer < maps.max_layers; ++layer) {
    const size_t base = static_cast<size_t>(layer) * maps.plane_size();
    for (size_t i = 0; i < maps.plane_size(); ++i) {
      pred.valid[base + i] = maps.flow_valid[base + i];
      if (!maps.flow_valid[base + i]) continue;
      FlowVec f = maps.flow[base + i];
      if (sigma > 0.0) {
        f.dx += rng.normal(0.0, sigma);
        f.dy += rng.normal(0.0, sigma);
      }
      pred.flow[base + i] = f;
    }
  }
  return pred;
}

GrayImage to_gray(const ImageU8& img) {
  GrayImage gray;
  gray.width = img.width;
  gray.height = img.height;
  gray.pixels.resize(static_cast<size_t>(img.width) * img.height);
  for (size_t i = 0; i < gray.pixels.size(); ++i) {
    if (img.channels == 3) {
      gray.pixels[i] = (0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] +
                        0.114 * img.data[3 * i + 2]) /
                       255.0;
    } else {
      gray.pixels[i] = img.data[i] / 255.0;
    }
  }
  return gray;
}

namespace {

double sample_clamped(const GrayImage& img, int x, int y) {
  x = std::clamp(x, 0, img.width - 1);
  y = std::clamp(y, 0, img.height - 1);
  return img.pixels[static_cast<size_t>(y) * img.width + x];
}

GrayImage downsample(const GrayImage& img) {
  GrayImage out;
  out.width = std::max(1, img.width / 2);
  out.height = std::max(1, img.height / 2);
  out.pixels.resize(static_cast<size_t>(out.width) * out.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const double sum =
          sample_clamped(img, 2 * x, 2 * y) + sample_clamped(img, 2 * x + 1, 2 * y) +
          sample_clamped(img, 2 * x, 2 * y + 1) +
          sample_clamped(img, 2 * x + 1, 2 * y + 1);
      out.pixels[static_cast<size_t>(y) * out.width + x] = 0.25 * sum;
    }
  }
  return out;
}

double sad_cost(const GrayImage& a, const GrayImage& b, int ax, int ay, int bx,
                int by, int radius) {
  double cost = 0.0;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      cost += std::abs(sample_clamped(a, ax + dx, ay + dy) -
                       sample_clamped(b, bx + dx, by + dy));
    }
  }
  return cost;
}

double window_variance(const GrayImage& img, int cx, int cy, int radius) {
  double sum = 0.0, sum2 = 0.0;
  const int n = (2 * radius + 1) * (2 * radius + 1);
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const double v = sample_clamped(img, cx + dx, cy + dy);
      sum += v;
      sum2 += v * v;
    }
  }
  const double mean = sum / n;
  return std::max(0.0, sum2 / n - mean * mean);
}

// Integer search around a propagated offset. Exact cost ties resolve to the
// smallest total displacement (then lexicographic) so results do not depend
// on iteration order.
void search_pixel(const GrayImage& t0, const GrayImage& t1, int x, int y,
                  int prop_dx, int prop_dy, int radius, int window,
                  int* best_dx, int* best_dy) {
  double best_cost = std::numeric_limits<double>::infinity();
  double best_norm = std::numeric_limits<double>::infinity();
  int bx = prop_dx, by = prop_dy;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const int tx = prop_dx + dx;
      const int ty = prop_dy + dy;
      const double cost = sad_cost(t0, t1, x, y, x + tx, y + ty, window);
      const double norm = static_cast<double>(tx) * tx + static_cast<double>(ty) * ty;
      const bool better =
          cost < best_cost ||
          (cost == best_cost &&
           (norm < best_norm ||
            (norm == best_norm && (ty < by || (ty == by && tx < bx)))));
      if (better) {
        best_cost = cost;
        best_norm = norm;
        bx = tx;
        by = ty;
      }
    }
  }
  *best_dx = bx;
  *best_dy = by;
}

// Parabolic 1-d sub-pixel offset from costs at -1/0/+1; zero when the
// centre is already a perfect match or the vertex is undefined (flat or
// non-convex), clamped to half a pixel.
double parabolic_offset(double c_minus, double c_zero, double c_plus) {
  if (c_zero == 0.0) return 0.0;  // SAD is non-negative: exact match
  const double denom = c_minus - 2.0 * c_zero + c_plus;
  if (denom <= 0.0) return 0.0;
  const double offset = 0.5 * (c_minus - c_plus) / denom;
  return std::clamp(offset, -0.5, 0.5);
}

BlockMatchResult block_match_impl(const GrayImage& t0, const GrayImage& t1,
                                  const BlockMatchConfig& config, bool parallel) {
  if (t0.width != t1.width || t0.height != t1.height) {
    throw Error(ErrorCode::SizeMismatch, "frames differ in size");
  }
  if (t0.width < 1 || t0.height < 1) {
    throw Error(ErrorCode::EmptyInput, "empty frames");
  }

  // Pyramid, capped so the coarsest level still fits a window.
  std::vector<GrayImage> pyr0{t0}, pyr1{t1};
  const int min_side = 2 * config.window_radius + 2;
  for (int level = 1; level < config.pyramid_levels; ++level) {
    const GrayImage& prev = pyr0.back();
    if (prev.width / 2 < min_side || prev.height / 2 < min_side) break;
    pyr0.push_back(downsample(pyr0.back()));
    pyr1.push_back(downsample(pyr1.back()));
  }

  std::vector<int> flow_x, flow_y;
  for (int level = static_cast<int>(pyr0.size()) - 1; level >= 0; --level) {
    const GrayImage& i0 = pyr0[level];
    const GrayImage& i1 = pyr1[level];
    const size_t n = static_cast<size_t>(i0.width) * i0.height;
    std::vector<int> next_x(n, 0), next_y(n, 0);
    const bool coarsest = level == static_cast<int>(pyr0.size()) - 1;
    const GrayImage* prev_level = coarsest ? nullptr : &pyr0[level + 1];

#pragma omp parallel for schedule(static) if (parallel)
    for (int y = 0; y < i0.height; ++y) {
      for (int x = 0; x < i0.width; ++x) {
        int prop_dx = 0, prop_dy = 0;
        if (!coarsest) {
          const int px = std::min(x / 2, prev_level->width - 1);
          const int py = std::min(y / 2, prev_level->height - 1);
          const size_t pidx = static_cast<size_t>(py) * prev_level->width + px;
          prop_dx = 2 * flow_x[pidx];
          prop_dy = 2 * flow_y[pidx];
        }
        int bx = 0, by = 0;
        search_pixel(i0, i1, x, y, prop_dx, prop_dy, config.search_radius,
                     config.window_radius, &bx, &by);
        next_x[static_cast<size_t>(y) * i0.width + x] = bx;
        next_y[static_cast<size_t>(y) * i0.width + x] = by;
      }
    }
    flow_x = std::move(next_x);
    flow_y = std::move(next_y);
  }

  BlockMatchResult result;
  result.width = t0.width;
  result.height = t0.height;
  const size_t n = static_cast<size_t>(t0.width) * t0.height;
  result.flow.assign(n, FlowVec{});
  result.confident.assign(n, 1);

#pragma omp parallel for schedule(static) if (parallel)
  for (int y = 0; y < t0.height; ++y) {
    for (int x = 0; x < t0.width; ++x) {
      const size_t idx = static_cast<size_t>(y) * t0.width + x;
      if (window_variance(t0, x, y, config.window_radius) <=
          config.texture_threshold) {
        result.flow[idx] = FlowVec{0.0, 0.0};
        result.confident[idx] = 0;
        continue;
      }
      const int bx = flow_x[idx];
      const int by = flow_y[idx];
      const double c0 = sad_cost(t0, t1, x, y, x + bx, y + by, config.window_radius);
      const double cxm =
          sad_cost(t0, t1, x, y, x + bx - 1, y + by, config.window_radius);
      const double cxp =
          sad_cost(t0, t1, x, y, x + bx + 1, y + by, config.window_radius);
      const double cym =
          sad_cost(t0, t1, x, y, x + bx, y + by - 1, config.window_radius);
      const double cyp =
          sad_cost(t0, t1, x, y, x + bx, y + by + 1, config.window_radius);
      result.flow[idx] = FlowVec{bx + parabolic_offset(cxm, c0, cxp),
                                 by + parabolic_offset(cym, c0, cyp)};
    }
  }
  return result;
}

}  // namespace

BlockMatchResult block_match_flow(const GrayImage& t0, const GrayImage& t1,
                                  const BlockMatchConfig& config) {
  return block_match_impl(t0, t1, config, true);
}

BlockMatchResult block_match_flow_serial(const GrayImage& t0, const GrayImage& t1,
                                         const BlockMatchConfig& config) {
  return block_match_impl(t0, t1, config, false);
}

MultiLayerPrediction to_single_layer_prediction(const BlockMatchResult& result) {
  MultiLayerPrediction pred;
  pred.width = result.width;
  pred.height = result.height;
  pred.n_layers = 1;
  pred.flow = result.flow;
  pred.valid.assign(pred.plane_size(), 1);
  return pred;
}

}  // namespace layerbench
