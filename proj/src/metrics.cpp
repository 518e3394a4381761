#include "layerbench/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <map>
#include <tuple>

namespace layerbench {

std::string Tau::label() const {
  if (infinite) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", value);
  return buf;
}

void validate_taus(const std::vector<Tau>& taus) {
  if (taus.empty()) {
    throw Error(ErrorCode::FormatError, "threshold list is empty");
  }
  for (size_t i = 0; i < taus.size(); ++i) {
    if (!taus[i].infinite &&
        (!std::isfinite(taus[i].value) || taus[i].value <= 0.0)) {
      throw Error(ErrorCode::FormatError, "thresholds must be positive");
    }
    if (taus[i].infinite && i + 1 != taus.size()) {
      throw Error(ErrorCode::FormatError, "inf must be the last threshold");
    }
    if (i > 0 && !taus[i].infinite && taus[i].value <= taus[i - 1].value) {
      throw Error(ErrorCode::FormatError, "thresholds must be strictly increasing");
    }
  }
}

std::vector<Tau> parse_taus(const std::string& csv) {
  std::vector<Tau> taus;
  size_t start = 0;
  while (start <= csv.size()) {
    size_t end = csv.find(',', start);
    if (end == std::string::npos) end = csv.size();
    std::string token = csv.substr(start, end - start);
    const auto first = token.find_first_not_of(" \t");
    const auto last = token.find_last_not_of(" \t");
    token = first == std::string::npos ? "" : token.substr(first, last - first + 1);
    if (token.empty()) {
      throw Error(ErrorCode::FormatError, "empty threshold in list: '" + csv + "'");
    }
    std::string lower = token;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (lower == "inf") {
      taus.push_back(Tau::inf());
    } else {
      char* parse_end = nullptr;
      const double v = std::strtod(token.c_str(), &parse_end);
      if (parse_end != token.c_str() + token.size()) {
        throw Error(ErrorCode::FormatError, "bad threshold '" + token + "'");
      }
      taus.push_back(Tau::of(v));
    }
    start = end + 1;
  }
  validate_taus(taus);
  return taus;
}

double endpoint_error(const FlowVec& pred, const FlowVec& gt) {
  return std::hypot(pred.dx - gt.dx, pred.dy - gt.dy);
}

double epe(const std::vector<double>& errors) {
  if (errors.empty()) {
    throw Error(ErrorCode::EmptyInput, "no errors to average");
  }
  double sum = 0.0;
  for (const double e : errors) sum += e;
  return sum / static_cast<double>(errors.size());
}

double mean_endpoint_error(const std::vector<FlowVec>& preds,
                           const std::vector<FlowVec>& gts) {
  if (preds.size() != gts.size()) {
    throw Error(ErrorCode::SizeMismatch, "prediction/ground-truth count mismatch");
  }
  if (preds.empty()) {
    throw Error(ErrorCode::EmptyInput, "no flow pairs to average");
  }
  double sum = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) sum += endpoint_error(preds[i], gts[i]);
  return sum / static_cast<double>(preds.size());
}

bool layer_count_correct(int n_pred, int deepest_layer, bool deepest_transparent) {
  return deepest_transparent ? n_pred >= deepest_layer : n_pred == deepest_layer;
}

bool tau_accurate(const std::vector<FlowVec>& preds,
                  const std::vector<std::pair<int, FlowVec>>& gts, Tau tau) {
  for (const auto& [layer, flow] : gts) {
    (void)flow;
    if (layer < 1) {
      throw Error(ErrorCode::FormatError, "annotated layers are 1-based");
    }
    if (static_cast<size_t>(layer) > preds.size()) {
      throw Error(ErrorCode::MissingLayer,
                  "no prediction for layer " + std::to_string(layer));
    }
  }
  if (tau.infinite) return true;
  for (const auto& [layer, flow] : gts) {
    if (endpoint_error(preds[layer - 1], flow) > tau.value) return false;
  }
  return true;
}

std::optional<FlowVec> sample_flow(const MultiLayerPrediction& pred, int layer,
                                   const Pixel& pixel, SamplingMode mode) {
  if (layer < 1) {
    throw Error(ErrorCode::FormatError, "layer indices are 1-based");
  }
  if (layer > pred.n_layers) return std::nullopt;
  if (!std::isfinite(pixel.x) || !std::isfinite(pixel.y)) return std::nullopt;

  const auto fetch = [&](int x, int y) -> const FlowVec* {
    if (x < 0 || x >= pred.width || y < 0 || y >= pred.height) return nullptr;
    const size_t idx = pred.index(layer - 1, x, y);
    return pred.valid[idx] ? &pred.flow[idx] : nullptr;
  };

  if (mode == SamplingMode::Nearest) {
    const FlowVec* f =
        fetch(static_cast<int>(std::lround(pixel.x)),
              static_cast<int>(std::lround(pixel.y)));
    if (!f) return std::nullopt;
    return *f;
  }

  const double xf = std::floor(pixel.x);
  const double yf = std::floor(pixel.y);
  const int x0 = static_cast<int>(xf);
  const int y0 = static_cast<int>(yf);
  const double ax = pixel.x - xf;
  const double ay = pixel.y - yf;
  const double weights[4] = {(1.0 - ax) * (1.0 - ay), ax * (1.0 - ay),
                             (1.0 - ax) * ay, ax * ay};
  const int offsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};

  FlowVec out{0.0, 0.0};
  for (int i = 0; i < 4; ++i) {
    if (weights[i] <= 0.0) continue;  // exact-coordinate samples skip that side
    const FlowVec* f = fetch(x0 + offsets[i][0], y0 + offsets[i][1]);
    if (!f) return std::nullopt;
    out.dx += weights[i] * f->dx;
    out.dy += weights[i] * f->dy;
  }
  return out;
}

int sampled_prefix(const MultiLayerPrediction& pred, const Pixel& pixel,
                   SamplingMode mode) {
  int n = 0;
  while (n < pred.n_layers && sample_flow(pred, n + 1, pixel, mode)) ++n;
  return n;
}

MultiLayerPrediction single_layer_workaround(const MultiLayerPrediction& pred,
                                             int n_layers) {
  if (pred.n_layers < 1) {
    throw Error(ErrorCode::EmptyInput, "prediction has no layers to replicate");
  }
  if (n_layers < 1) {
    throw Error(ErrorCode::FormatError, "target layer count must be positive");
  }
  MultiLayerPrediction out;
  out.width = pred.width;
  out.height = pred.height;
  out.n_layers = n_layers;
  const size_t plane = pred.plane_size();
  out.flow.resize(plane * static_cast<size_t>(n_layers));
  out.valid.resize(plane * static_cast<size_t>(n_layers));
  for (int layer = 0; layer < n_layers; ++layer) {
    std::copy_n(pred.flow.begin(), plane, out.flow.begin() + layer * plane);
    std::copy_n(pred.valid.begin(), plane, out.valid.begin() + layer * plane);
  }
  return out;
}

std::vector<std::string> categorize(const LayerAnnotation& annotation) {
  std::vector<std::string> cats{material_class_name(annotation.material),
                                "layer_" + std::to_string(annotation.layer)};
  if (annotation.layer >= 2 && annotation.material != MaterialClass::Transparent) {
    cats.push_back("behind_transparent");
  }
  return cats;
}

SceneAnnotationSet first_layer_subset(const SceneAnnotationSet& scene) {
  SceneAnnotationSet out = scene;
  out.annotations.clear();
  for (const auto& a : scene.annotations) {
    if (a.layer == 1) out.annotations.push_back(a);
  }
  return out;
}

SceneAnnotationSet last_layer_subset(const SceneAnnotationSet& scene) {
  SceneAnnotationSet out = scene;
  out.annotations.clear();
  for (const auto& a : scene.annotations) {
    if (a.material != MaterialClass::Transparent) out.annotations.push_back(a);
  }
  return out;
}

namespace {

struct Verdict {
  int scene = 0;
  Pixel pixel{};
  FlowVec gt{};
  int layer = 0;
  MaterialClass material = MaterialClass::Diffuse;
  bool transparent_flag = false;
  int n_pred = 0;
  bool available = false;
  double err = 0.0;
  int group = -1;
};

struct PixelGroup {
  int n_pred = 0;
  int max_layer = 0;
  bool deepest_flag = false;
  bool count_ok = false;
};

struct Evaluation {
  std::vector<Verdict> verdicts;
  std::vector<PixelGroup> groups;
  int max_layer = 0;
};

bool verdict_bad(const Verdict& v, const Tau& tau) {
  if (!v.available) return true;
  return !tau.infinite && v.err > tau.value;
}

Evaluation run_evaluation(const std::vector<SceneAnnotationSet>& scenes,
                          const std::vector<MultiLayerPrediction>& preds,
                          const EvalOptions& opts, bool parallel) {
  if (scenes.empty()) {
    throw Error(ErrorCode::EmptyDataset, "no scenes to evaluate");
  }
  if (scenes.size() != preds.size()) {
    throw Error(ErrorCode::SizeMismatch, "scene/prediction count mismatch");
  }
  for (size_t i = 0; i < scenes.size(); ++i) {
    if (preds[i].width != scenes[i].width || preds[i].height != scenes[i].height) {
      throw Error(ErrorCode::SizeMismatch,
                  "prediction resolution differs from scene " +
                      scenes[i].scene_id);
    }
  }

  std::vector<MultiLayerPrediction> replicated;
  if (opts.workaround) {
    replicated.reserve(scenes.size());
    for (size_t i = 0; i < scenes.size(); ++i) {
      int deepest = 1;
      for (const auto& a : scenes[i].annotations) {
        if (a.flow) deepest = std::max(deepest, a.layer);
      }
      replicated.push_back(single_layer_workaround(preds[i], deepest));
    }
  }
  const std::vector<MultiLayerPrediction>& active =
      opts.workaround ? replicated : preds;

  Evaluation ev;
  for (size_t i = 0; i < scenes.size(); ++i) {
    for (const auto& a : scenes[i].annotations) {
      if (!a.flow) continue;
      Verdict v;
      v.scene = static_cast<int>(i);
      v.pixel = a.pixel;
      v.gt = *a.flow;
      v.layer = a.layer;
      v.material = a.material;
      v.transparent_flag = a.transparent_flag;
      ev.verdicts.push_back(v);
    }
  }

  const long long total = static_cast<long long>(ev.verdicts.size());
#pragma omp parallel for schedule(static) if (parallel)
  for (long long k = 0; k < total; ++k) {
    Verdict& v = ev.verdicts[static_cast<size_t>(k)];
    const MultiLayerPrediction& pred = active[static_cast<size_t>(v.scene)];
    v.n_pred = sampled_prefix(pred, v.pixel, opts.sampling);
    v.available = v.layer <= v.n_pred;
    if (v.available) {
      v.err = endpoint_error(*sample_flow(pred, v.layer, v.pixel, opts.sampling),
                             v.gt);
    }
  }

  std::map<std::tuple<int, double, double>, int> group_index;
  for (Verdict& v : ev.verdicts) {
    const auto key = std::make_tuple(v.scene, v.pixel.x, v.pixel.y);
    auto [it, inserted] =
        group_index.try_emplace(key, static_cast<int>(ev.groups.size()));
    if (inserted) {
      ev.groups.push_back({v.n_pred, v.layer, v.transparent_flag, false});
    }
    v.group = it->second;
    PixelGroup& g = ev.groups[static_cast<size_t>(v.group)];
    if (v.layer > g.max_layer) {
      g.max_layer = v.layer;
      g.deepest_flag = v.transparent_flag;
    }
    ev.max_layer = std::max(ev.max_layer, v.layer);
  }
  for (PixelGroup& g : ev.groups) {
    g.count_ok = layer_count_correct(g.n_pred, g.max_layer, g.deepest_flag);
  }
  return ev;
}

MetricReport build_report(const Evaluation& ev, const std::vector<Tau>& taus,
                          const EvalOptions& opts) {
  if (ev.verdicts.empty()) {
    throw Error(ErrorCode::EmptyDataset, "no flow annotations to evaluate");
  }

  // Membership mirrors categorize(); verdicts carry the same two fields.
  std::vector<std::pair<std::string, std::function<bool(const Verdict&)>>> cats;
  cats.emplace_back("all", [](const Verdict&) { return true; });
  if (opts.material_breakdown) {
    for (const MaterialClass m : {MaterialClass::Transparent,
                                  MaterialClass::Reflective,
                                  MaterialClass::Diffuse}) {
      cats.emplace_back(material_class_name(m),
                        [m](const Verdict& v) { return v.material == m; });
    }
  }
  if (opts.layer_breakdown) {
    for (int layer = 1; layer <= ev.max_layer; ++layer) {
      cats.emplace_back("layer_" + std::to_string(layer),
                        [layer](const Verdict& v) { return v.layer == layer; });
    }
  }
  if (opts.behind_transparent_breakdown) {
    cats.emplace_back("behind_transparent", [](const Verdict& v) {
      return v.layer >= 2 && v.material != MaterialClass::Transparent;
    });
  }

  MetricReport report;
  report.taus = taus;
  report.pixel_groups = static_cast<int>(ev.groups.size());
  report.workaround = opts.workaround;

  for (const auto& [name, member] : cats) {
    MetricCell cell;
    cell.category = name;
    double err_sum = 0.0;
    int err_count = 0;
    std::vector<int> bad(taus.size(), 0);
    std::vector<int> count_bad(taus.size(), 0);
    for (const Verdict& v : ev.verdicts) {
      if (!member(v)) continue;
      ++cell.annotation_count;
      if (v.available) {
        err_sum += v.err;
        ++err_count;
      }
      for (size_t t = 0; t < taus.size(); ++t) {
        const bool is_bad = verdict_bad(v, taus[t]);
        bad[t] += is_bad;
        count_bad[t] +=
            is_bad || !ev.groups[static_cast<size_t>(v.group)].count_ok;
      }
    }
    if (err_count > 0) cell.mean_epe = err_sum / err_count;
    for (size_t t = 0; t < taus.size(); ++t) {
      if (cell.annotation_count == 0) {
        cell.bad_tau.push_back(std::nullopt);
        cell.count_aware.push_back(std::nullopt);
        continue;
      }
      cell.bad_tau.push_back(100.0 * bad[t] / cell.annotation_count);
      if (opts.workaround) {
        cell.count_aware.push_back(std::nullopt);
      } else {
        cell.count_aware.push_back(100.0 * count_bad[t] / cell.annotation_count);
      }
    }
    report.cells.push_back(std::move(cell));
  }
  return report;
}

std::vector<double> group_fractions(const Evaluation& ev,
                                    const std::vector<Tau>& taus,
                                    bool count_aware) {
  if (ev.groups.empty()) {
    throw Error(ErrorCode::EmptyDataset, "no pixel groups to evaluate");
  }
  std::vector<double> out;
  std::vector<char> fail(ev.groups.size());
  for (const Tau& tau : taus) {
    for (size_t g = 0; g < ev.groups.size(); ++g) {
      fail[g] = count_aware && !ev.groups[g].count_ok;
    }
    for (const Verdict& v : ev.verdicts) {
      if (verdict_bad(v, tau)) fail[static_cast<size_t>(v.group)] = 1;
    }
    long long failed = 0;
    for (char f : fail) failed += f;
    out.push_back(100.0 * static_cast<double>(failed) /
                  static_cast<double>(ev.groups.size()));
  }
  return out;
}

std::string format_value(const std::optional<double>& v) {
  if (!v) return "—";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v);
  return buf;
}

// Column padding counts code points, not bytes, so the em dash aligns.
size_t display_width(const std::string& s) {
  size_t n = 0;
  for (const char c : s) {
    if ((static_cast<unsigned char>(c) & 0xc0) != 0x80) ++n;
  }
  return n;
}

}  // namespace

MetricReport evaluate_dataset(const std::vector<SceneAnnotationSet>& scenes,
                              const std::vector<MultiLayerPrediction>& preds,
                              const std::vector<Tau>& taus,
                              const EvalOptions& opts) {
  validate_taus(taus);
  return build_report(run_evaluation(scenes, preds, opts, true), taus, opts);
}

MetricReport evaluate_dataset_serial(const std::vector<SceneAnnotationSet>& scenes,
                                     const std::vector<MultiLayerPrediction>& preds,
                                     const std::vector<Tau>& taus,
                                     const EvalOptions& opts) {
  validate_taus(taus);
  return build_report(run_evaluation(scenes, preds, opts, false), taus, opts);
}

std::vector<double> multilayer_bad_tau(const std::vector<SceneAnnotationSet>& scenes,
                                       const std::vector<MultiLayerPrediction>& preds,
                                       const std::vector<Tau>& taus,
                                       const EvalOptions& opts) {
  validate_taus(taus);
  return group_fractions(run_evaluation(scenes, preds, opts, true), taus, false);
}

std::vector<double> count_aware_bad_tau(
    const std::vector<SceneAnnotationSet>& scenes,
    const std::vector<MultiLayerPrediction>& preds, const std::vector<Tau>& taus,
    const EvalOptions& opts) {
  validate_taus(taus);
  return group_fractions(run_evaluation(scenes, preds, opts, true), taus, true);
}

std::string render_table(const MetricReport& report) {
  std::vector<std::string> header{"category", "count", "epe"};
  for (const Tau& tau : report.taus) header.push_back("bad@" + tau.label());
  if (!report.workaround) {
    for (const Tau& tau : report.taus) header.push_back("cnt@" + tau.label());
  }

  std::vector<std::vector<std::string>> rows;
  for (const MetricCell& cell : report.cells) {
    std::vector<std::string> row{cell.category,
                                 std::to_string(cell.annotation_count),
                                 format_value(cell.mean_epe)};
    for (const auto& v : cell.bad_tau) row.push_back(format_value(v));
    if (!report.workaround) {
      for (const auto& v : cell.count_aware) row.push_back(format_value(v));
    }
    rows.push_back(std::move(row));
  }

  std::vector<size_t> widths(header.size());
  for (size_t c = 0; c < header.size(); ++c) {
    widths[c] = display_width(header[c]);
    for (const auto& row : rows) {
      widths[c] = std::max(widths[c], display_width(row[c]));
    }
  }

  std::string out;
  const auto emit = [&](const std::vector<std::string>& row) {
    for (size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out += "  ";
      if (c == 0) {
        out += row[c];
        out.append(widths[c] - display_width(row[c]), ' ');
      } else {
        out.append(widths[c] - display_width(row[c]), ' ');
        out += row[c];
      }
    }
    out += '\n';
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  out += "pixel groups: " + std::to_string(report.pixel_groups) + "\n";
  return out;
}

std::string render_csv(const MetricReport& report) {
  std::string out = "category,count,epe";
  for (const Tau& tau : report.taus) out += ",bad@" + tau.label();
  if (!report.workaround) {
    for (const Tau& tau : report.taus) out += ",cnt@" + tau.label();
  }
  out += '\n';
  for (const MetricCell& cell : report.cells) {
    out += cell.category + ',' + std::to_string(cell.annotation_count) + ',' +
           format_value(cell.mean_epe);
    for (const auto& v : cell.bad_tau) out += ',' + format_value(v);
    if (!report.workaround) {
      for (const auto& v : cell.count_aware) out += ',' + format_value(v);
    }
    out += '\n';
  }
  return out;
}

namespace {

Json tau_to_json(const Tau& tau) {
  if (tau.infinite) return Json("inf");
  return Json(tau.value);
}

Tau tau_from_json(const Json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return Tau::inf();
    throw Error(ErrorCode::FormatError, "bad threshold string in report");
  }
  if (!j.is_number()) {
    throw Error(ErrorCode::FormatError, "thresholds must be numbers or \"inf\"");
  }
  return Tau::of(j.get<double>());
}

Json optional_to_json(const std::optional<double>& v) {
  if (!v) return Json(nullptr);
  return Json(*v);
}

std::optional<double> optional_from_json(const Json& j) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_number()) {
    throw Error(ErrorCode::FormatError, "metric values must be numbers or null");
  }
  return j.get<double>();
}

}  // namespace

Json report_to_json(const MetricReport& report) {
  Json j;
  j["taus"] = Json::array();
  for (const Tau& tau : report.taus) j["taus"].push_back(tau_to_json(tau));
  j["pixel_groups"] = report.pixel_groups;
  j["workaround"] = report.workaround;
  j["cells"] = Json::array();
  for (const MetricCell& cell : report.cells) {
    Json c;
    c["category"] = cell.category;
    c["count"] = cell.annotation_count;
    c["epe"] = optional_to_json(cell.mean_epe);
    c["bad_tau"] = Json::array();
    for (const auto& v : cell.bad_tau) c["bad_tau"].push_back(optional_to_json(v));
    c["count_aware"] = Json::array();
    for (const auto& v : cell.count_aware) {
      c["count_aware"].push_back(optional_to_json(v));
    }
    j["cells"].push_back(std::move(c));
  }
  return j;
}

MetricReport report_from_json(const Json& j) {
  MetricReport report;
  try {
    for (const Json& t : j.at("taus")) report.taus.push_back(tau_from_json(t));
    report.pixel_groups = j.at("pixel_groups").get<int>();
    report.workaround = j.at("workaround").get<bool>();
    for (const Json& c : j.at("cells")) {
      MetricCell cell;
      cell.category = c.at("category").get<std::string>();
      cell.annotation_count = c.at("count").get<int>();
      cell.mean_epe = optional_from_json(c.at("epe"));
      for (const Json& v : c.at("bad_tau")) {
        cell.bad_tau.push_back(optional_from_json(v));
      }
      for (const Json& v : c.at("count_aware")) {
        cell.count_aware.push_back(optional_from_json(v));
      }
      if (cell.bad_tau.size() != report.taus.size() ||
          cell.count_aware.size() != report.taus.size()) {
        throw Error(ErrorCode::FormatError,
                    "cell '" + cell.category + "' disagrees with threshold count");
      }
      report.cells.push_back(std::move(cell));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("bad report: ") + e.what());
  }
  validate_taus(report.taus);
  return report;
}

}  // namespace layerbench
