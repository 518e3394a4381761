#pragma once

// Small builders for hand-made and randomized evaluation inputs.

#include <cmath>
#include <cstdint>
#include <vector>

#include "layerbench/metrics.hpp"
#include "layerbench/scene.hpp"

namespace fixtures {

inline layerbench::MultiLayerPrediction make_prediction(int width, int height,
                                                        int n_layers) {
  layerbench::MultiLayerPrediction pred;
  pred.width = width;
  pred.height = height;
  pred.n_layers = n_layers;
  pred.flow.assign(pred.plane_size() * n_layers, layerbench::FlowVec{});
  pred.valid.assign(pred.plane_size() * n_layers, 1);
  return pred;
}

inline layerbench::LayerAnnotation make_annotation(double x, double y, int layer,
                                                   layerbench::FlowVec flow,
                                                   layerbench::MaterialClass mat) {
  layerbench::LayerAnnotation ann;
  ann.pixel = {x, y};
  ann.flow = flow;
  ann.layer = layer;
  ann.material = mat;
  ann.transparent_flag = mat == layerbench::MaterialClass::Transparent ? 1 : 0;
  return ann;
}

inline layerbench::SceneAnnotationSet make_scene(int width, int height,
                                                 const char* id = "scene") {
  layerbench::SceneAnnotationSet set;
  set.scene_id = id;
  set.width = width;
  set.height = height;
  return set;
}

struct EvalCase {
  std::vector<layerbench::SceneAnnotationSet> scenes;
  std::vector<layerbench::MultiLayerPrediction> preds;
};

// A stress case for the group-level metrics: every pixel carries one to
// three annotations at assorted layers and materials, predictions have a
// random valid prefix (plus garbage validity beyond the first hole, which
// prefix semantics must ignore), and errors straddle the usual thresholds.
// Annotations sit on integer pixels so sampling is a direct plane read.
inline EvalCase random_eval_case(int n_pixels, uint64_t seed) {
  using namespace layerbench;
  Rng rng(seed);

  EvalCase out;
  const int width = 64;
  const int height = (n_pixels + width - 1) / width;
  const int n_layers = 4;

  MultiLayerPrediction pred = make_prediction(width, height, n_layers);
  SceneAnnotationSet scene = make_scene(width, height, "random");

  for (int i = 0; i < n_pixels; ++i) {
    const int x = i % width;
    const int y = i / width;
    const int prefix = rng.uniform_int(0, n_layers);
    for (int layer = 0; layer < n_layers; ++layer) {
      const size_t idx = pred.index(layer, x, y);
      pred.flow[idx] = {rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0)};
      if (layer < prefix) {
        pred.valid[idx] = 1;
      } else if (layer == prefix) {
        pred.valid[idx] = 0;
      } else {
        pred.valid[idx] = rng.uniform() < 0.5 ? 1 : 0;
      }
    }

    const int n_annotations = rng.uniform_int(1, 3);
    for (int a = 0; a < n_annotations; ++a) {
      const int layer = rng.uniform_int(1, n_layers);
      const MaterialClass mat = static_cast<MaterialClass>(rng.uniform_int(0, 2));
      FlowVec gt;
      const size_t idx = pred.index(layer - 1, x, y);
      // Half the annotations agree with the prediction up to a random error
      // magnitude; the rest are unrelated values.
      if (rng.uniform() < 0.5) {
        const double mag = rng.uniform(0.0, 8.0);
        const double angle = rng.uniform(0.0, 2.0 * M_PI);
        gt = {pred.flow[idx].dx + mag * std::cos(angle),
              pred.flow[idx].dy + mag * std::sin(angle)};
      } else {
        gt = {rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0)};
      }
      scene.annotations.push_back(
          make_annotation(x, y, layer, gt, mat));
    }
  }

  out.scenes.push_back(std::move(scene));
  out.preds.push_back(std::move(pred));
  return out;
}

}  // namespace fixtures
