#pragma once

#include <optional>
#include <string>
#include <vector>

#include "layerbench/annotation.hpp"
#include "layerbench/io.hpp"
#include "layerbench/prediction.hpp"

namespace layerbench {

// Error threshold in pixels; the infinite threshold is only failed by
// annotations whose layer has no prediction at all.
struct Tau {
  double value = 0.0;
  bool infinite = false;

  static Tau of(double v) { return Tau{v, false}; }
  static Tau inf() { return Tau{0.0, true}; }
  std::string label() const;
};

// Parses a comma-separated threshold list such as "1,3,5,inf". Thresholds
// must be positive, strictly increasing, and "inf" may only appear last.
std::vector<Tau> parse_taus(const std::string& csv);
void validate_taus(const std::vector<Tau>& taus);

double endpoint_error(const FlowVec& pred, const FlowVec& gt);
double epe(const std::vector<double>& errors);  // mean; EmptyInput when empty
double mean_endpoint_error(const std::vector<FlowVec>& preds,
                           const std::vector<FlowVec>& gts);

// A predicted layer count n is correct against the deepest annotated layer
// m when the deepest annotated surface is transparent (further layers may
// exist unseen, so n >= m suffices) or, otherwise, when n == m exactly.
bool layer_count_correct(int n_pred, int deepest_layer, bool deepest_transparent);

// True when every annotated layer has a prediction within tau. `gts` pairs a
// 1-based layer with its ground-truth flow; `preds` holds predictions for
// layers 1..preds.size(). An annotated layer beyond preds.size() throws
// MissingLayer. Empty `gts` is vacuously accurate.
bool tau_accurate(const std::vector<FlowVec>& preds,
                  const std::vector<std::pair<int, FlowVec>>& gts, Tau tau);

enum class SamplingMode { Bilinear, Nearest };

// Samples the flow of one 1-based layer at a fractional pixel position.
// Bilinear sampling requires only the neighbours with non-zero weight to be
// in bounds and valid, so integer coordinates never depend on the pixel one
// past them. Returns nullopt when the layer is absent or any contributing
// neighbour is invalid.
std::optional<FlowVec> sample_flow(const MultiLayerPrediction& pred, int layer,
                                   const Pixel& pixel, SamplingMode mode);

// Number of consecutive layers starting at 1 that sample successfully at
// this position; annotations above it count as missing predictions.
int sampled_prefix(const MultiLayerPrediction& pred, const Pixel& pixel,
                   SamplingMode mode);

// Replicates the first layer (flow and validity) across n_layers layers so
// single-layer predictors can be scored against multi-layer ground truth.
MultiLayerPrediction single_layer_workaround(const MultiLayerPrediction& pred,
                                             int n_layers);

// Category labels for one annotation: its material, its layer ("layer_N"),
// and "behind_transparent" for non-transparent points at layer 2 or deeper
// (they sit behind at least one transparent surface).
std::vector<std::string> categorize(const LayerAnnotation& annotation);

// Evaluation subsets: annotations on the nearest layer (layer == 1), and
// the deepest-surface subset (material != transparent — a non-transparent
// surface is always the last annotated layer of its ray).
SceneAnnotationSet first_layer_subset(const SceneAnnotationSet& scene);
SceneAnnotationSet last_layer_subset(const SceneAnnotationSet& scene);

struct EvalOptions {
  SamplingMode sampling = SamplingMode::Bilinear;
  // Replicate each prediction's first layer across all annotated layers and
  // drop the count-aware columns (layer counts are meaningless then).
  bool workaround = false;
  // Which breakdown rows to include beside "all".
  bool material_breakdown = true;
  bool layer_breakdown = true;
  bool behind_transparent_breakdown = true;
};

// All ratio values are percentages in [0, 100]. A cell with no annotations
// stays in the report with every value absent (rendered as an em dash), so
// empty categories are distinguishable from perfect ones.
struct MetricCell {
  std::string category;
  int annotation_count = 0;
  std::optional<double> mean_epe;              // px, over sampleable annotations
  std::vector<std::optional<double>> bad_tau;  // %, one per tau
  std::vector<std::optional<double>> count_aware;  // %; absent under workaround
};

struct MetricReport {
  std::vector<Tau> taus;
  std::vector<MetricCell> cells;  // all, materials, layers, behind_transparent
  int pixel_groups = 0;
  bool workaround = false;
};

// Scores per-annotation predictions and aggregates them into category cells.
// Scenes and predictions pair up by index and must agree in resolution.
MetricReport evaluate_dataset(const std::vector<SceneAnnotationSet>& scenes,
                              const std::vector<MultiLayerPrediction>& preds,
                              const std::vector<Tau>& taus,
                              const EvalOptions& opts = {});
MetricReport evaluate_dataset_serial(const std::vector<SceneAnnotationSet>& scenes,
                                     const std::vector<MultiLayerPrediction>& preds,
                                     const std::vector<Tau>& taus,
                                     const EvalOptions& opts = {});

// Headline percentages over pixel groups (annotations sharing an exact pixel
// position within a scene). A group fails a threshold when any of its
// annotated layers lacks a prediction or errs beyond it; the count-aware
// variant additionally fails groups whose predicted layer count is wrong.
// Returns 100 * failed / total per threshold.
std::vector<double> multilayer_bad_tau(const std::vector<SceneAnnotationSet>& scenes,
                                       const std::vector<MultiLayerPrediction>& preds,
                                       const std::vector<Tau>& taus,
                                       const EvalOptions& opts = {});
std::vector<double> count_aware_bad_tau(
    const std::vector<SceneAnnotationSet>& scenes,
    const std::vector<MultiLayerPrediction>& preds, const std::vector<Tau>& taus,
    const EvalOptions& opts = {});

// Fixed-width text table / CSV with two decimals; absent values print as an
// em dash. JSON keeps full precision.
std::string render_table(const MetricReport& report);
std::string render_csv(const MetricReport& report);
Json report_to_json(const MetricReport& report);
MetricReport report_from_json(const Json& j);

}  // namespace layerbench
