#pragma once

// Pipeline configuration and its JSON form. Unknown keys are rejected so a
// misspelt option never silently falls back to a default.

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "mhistart/errors.hpp"
#include "mhistart/mchog.hpp"
#include "mhistart/nn/resnet.hpp"
#include "mhistart/nn/train.hpp"
#include "mhistart/silhouette.hpp"
#include "mhistart/svm.hpp"
#include "mhistart/synth.hpp"

namespace mhistart {

using json = nlohmann::json;

struct SynthConfig {
  std::size_t n_scenes = 100;
  std::uint64_t seed = 1;
  std::string mode = "binary";  // or "classmap"
  synth::ScriptOptions script;
  std::array<double, 3> split{0.6, 0.2, 0.2};
};

struct SweepGrid {
  std::vector<int> cell_x{8, 16, 32};
  std::vector<int> cell_y{8, 16, 32};
  std::vector<int> bins{6, 12, 16};
  std::vector<double> c{};  // empty: 2^-8 .. 2^4
};

struct PipelineConfig {
  RoiSpec roi;
  std::uint32_t history = 20;
  MchogParams mchog;
  SvmOptions svm;
  std::size_t svm_stride = 1;  // use every k-th frame of a scene for SVM training
  SweepGrid sweep;
  nn::ResNetConfig resnet;
  nn::TrainRegime regime;
  double threshold_step = 0.02;
  SynthConfig synth;
  int jobs = 1;

  void validate() const {
    roi.validate();
    if (history < 1) throw InvalidArgument("history must be >= 1");
    mchog.validate();
    if (!(svm.c > 0.0) || !(svm.tol > 0.0)) throw InvalidArgument("SVM C and tol must be positive");
    if (svm_stride < 1) throw InvalidArgument("svm_stride must be >= 1");
    resnet.validate();
    regime.validate();
    threshold_grid(threshold_step);
    if (jobs < 1) throw InvalidArgument("jobs must be >= 1");
  }

  /// The C grid of the sweep; defaults to powers of two 2^-8 .. 2^4.
  std::vector<double> c_grid() const {
    if (!sweep.c.empty()) return sweep.c;
    std::vector<double> g;
    for (int e = -8; e <= 4; ++e) g.push_back(std::ldexp(1.0, e));
    return g;
  }
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw FormatError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw FormatError(where + ": unknown key '" + it.key() + "'");
}

template <typename V>
void read(const json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

}  // namespace detail

inline json to_json(const RoiSpec& r) {
  return {{"width", r.roi_width}, {"height", r.roi_height},
          {"head_anchor_x", r.head_anchor_x}, {"head_anchor_y", r.head_anchor_y}};
}
inline void from_json_into(const json& j, RoiSpec& r) {
  detail::check_keys(j, {"width", "height", "head_anchor_x", "head_anchor_y"}, "roi");
  detail::read(j, "width", r.roi_width);
  detail::read(j, "height", r.roi_height);
  detail::read(j, "head_anchor_x", r.head_anchor_x);
  detail::read(j, "head_anchor_y", r.head_anchor_y);
}

inline json to_json(const MchogParams& p) {
  return {{"cell_size_x", p.cell_size_x}, {"cell_size_y", p.cell_size_y},
          {"n_bins", p.n_bins}, {"input_w", p.input_w}, {"input_h", p.input_h},
          {"signed_orientation", p.signed_orientation}};
}
inline void from_json_into(const json& j, MchogParams& p) {
  detail::check_keys(j, {"cell_size_x", "cell_size_y", "n_bins", "input_w", "input_h",
                         "signed_orientation"}, "mchog");
  detail::read(j, "cell_size_x", p.cell_size_x);
  detail::read(j, "cell_size_y", p.cell_size_y);
  detail::read(j, "n_bins", p.n_bins);
  detail::read(j, "input_w", p.input_w);
  detail::read(j, "input_h", p.input_h);
  detail::read(j, "signed_orientation", p.signed_orientation);
}

inline json to_json(const SvmOptions& o) {
  return {{"c", o.c}, {"tol", o.tol}, {"balanced", o.balanced}, {"seed", o.seed},
          {"max_outer", o.max_outer}, {"max_inner_epochs", o.max_inner_epochs}};
}
inline void from_json_into(const json& j, SvmOptions& o) {
  detail::check_keys(j, {"c", "tol", "balanced", "seed", "max_outer", "max_inner_epochs"}, "svm");
  detail::read(j, "c", o.c);
  detail::read(j, "tol", o.tol);
  detail::read(j, "balanced", o.balanced);
  detail::read(j, "seed", o.seed);
  detail::read(j, "max_outer", o.max_outer);
  detail::read(j, "max_inner_epochs", o.max_inner_epochs);
}

inline json to_json(const nn::ResNetConfig& c) {
  return {{"input_w", c.input_w},
          {"input_h", c.input_h},
          {"reduction_filters", c.reduction_filters},
          {"reduction_kernel", c.reduction_kernel},
          {"reduction_stride", c.reduction_stride},
          {"pool_window", c.pool_window},
          {"pool_stride", c.pool_stride},
          {"stem_maps", c.stem_maps},
          {"n_blocks", c.n_blocks},
          {"layers_per_block", c.layers_per_block},
          {"block_out_maps", c.block_out_maps},
          {"bottleneck_divisor", c.bottleneck_divisor},
          {"n_classes", c.n_classes},
          {"seed", c.seed}};
}
inline void from_json_into(const json& j, nn::ResNetConfig& c) {
  detail::check_keys(j, {"input_w", "input_h", "reduction_filters", "reduction_kernel",
                         "reduction_stride", "pool_window", "pool_stride", "stem_maps",
                         "n_blocks", "layers_per_block", "block_out_maps",
                         "bottleneck_divisor", "n_classes", "seed"}, "resnet");
  detail::read(j, "input_w", c.input_w);
  detail::read(j, "input_h", c.input_h);
  detail::read(j, "reduction_filters", c.reduction_filters);
  detail::read(j, "reduction_kernel", c.reduction_kernel);
  detail::read(j, "reduction_stride", c.reduction_stride);
  detail::read(j, "pool_window", c.pool_window);
  detail::read(j, "pool_stride", c.pool_stride);
  detail::read(j, "stem_maps", c.stem_maps);
  detail::read(j, "n_blocks", c.n_blocks);
  detail::read(j, "layers_per_block", c.layers_per_block);
  detail::read(j, "block_out_maps", c.block_out_maps);
  detail::read(j, "bottleneck_divisor", c.bottleneck_divisor);
  detail::read(j, "n_classes", c.n_classes);
  detail::read(j, "seed", c.seed);
}

inline json to_json(const nn::TrainRegime& r) {
  return {{"learning_rate", r.optimizer.learning_rate}, {"decay", r.optimizer.decay},
          {"epsilon", r.optimizer.epsilon}, {"batch_size", r.batch_size},
          {"iterations", r.iterations}, {"validation_every", r.validation_every},
          {"seed", r.seed}};
}
inline void from_json_into(const json& j, nn::TrainRegime& r) {
  detail::check_keys(j, {"learning_rate", "decay", "epsilon", "batch_size", "iterations",
                         "validation_every", "seed"}, "train");
  detail::read(j, "learning_rate", r.optimizer.learning_rate);
  detail::read(j, "decay", r.optimizer.decay);
  detail::read(j, "epsilon", r.optimizer.epsilon);
  detail::read(j, "batch_size", r.batch_size);
  detail::read(j, "iterations", r.iterations);
  detail::read(j, "validation_every", r.validation_every);
  detail::read(j, "seed", r.seed);
}

inline std::string depth_name(const std::optional<synth::Depth>& d) {
  if (!d) return "any";
  return *d == synth::Depth::Behind ? "behind" : "in_front";
}

inline std::optional<synth::Depth> parse_depth(const std::string& s) {
  if (s == "any") return std::nullopt;
  if (s == "behind") return synth::Depth::Behind;
  if (s == "in_front") return synth::Depth::InFront;
  throw FormatError("synth.distractor_depth must be 'any', 'behind' or 'in_front'");
}

inline json to_json(const SynthConfig& s) {
  return {{"n_scenes", s.n_scenes},
          {"seed", s.seed},
          {"mode", s.mode},
          {"distractor_probability", s.script.distractor_probability},
          {"distractor_depth", depth_name(s.script.distractor_depth)},
          {"jitter_amplitude", s.script.jitter_amplitude},
          {"sway_probability", s.script.sway_probability},
          {"flip_probability", s.script.flip_probability},
          {"min_waiting", s.script.min_waiting},
          {"split", s.split}};
}
inline void from_json_into(const json& j, SynthConfig& s) {
  detail::check_keys(j, {"n_scenes", "seed", "mode", "distractor_probability",
                         "distractor_depth", "jitter_amplitude", "sway_probability", "flip_probability",
                         "min_waiting", "split"},
                     "synth");
  detail::read(j, "n_scenes", s.n_scenes);
  detail::read(j, "seed", s.seed);
  detail::read(j, "mode", s.mode);
  detail::read(j, "distractor_probability", s.script.distractor_probability);
  if (j.contains("distractor_depth")) s.script.distractor_depth = parse_depth(j["distractor_depth"].get<std::string>());
  detail::read(j, "jitter_amplitude", s.script.jitter_amplitude);
  detail::read(j, "sway_probability", s.script.sway_probability);
  detail::read(j, "flip_probability", s.script.flip_probability);
  detail::read(j, "min_waiting", s.script.min_waiting);
  detail::read(j, "split", s.split);
  if (s.mode != "binary" && s.mode != "classmap")
    throw FormatError("synth.mode must be 'binary' or 'classmap'");
}

inline json to_json(const SweepGrid& g) {
  return {{"cell_x", g.cell_x}, {"cell_y", g.cell_y}, {"bins", g.bins}, {"c", g.c}};
}
inline void from_json_into(const json& j, SweepGrid& g) {
  detail::check_keys(j, {"cell_x", "cell_y", "bins", "c"}, "sweep");
  detail::read(j, "cell_x", g.cell_x);
  detail::read(j, "cell_y", g.cell_y);
  detail::read(j, "bins", g.bins);
  detail::read(j, "c", g.c);
}

inline json to_json(const PipelineConfig& c) {
  return {{"roi", to_json(c.roi)},
          {"history", c.history},
          {"mchog", to_json(c.mchog)},
          {"svm", to_json(c.svm)},
          {"svm_stride", c.svm_stride},
          {"sweep", to_json(c.sweep)},
          {"resnet", to_json(c.resnet)},
          {"train", to_json(c.regime)},
          {"threshold_step", c.threshold_step},
          {"synth", to_json(c.synth)},
          {"jobs", c.jobs}};
}

inline PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  try {
    detail::check_keys(j, {"roi", "history", "mchog", "svm", "svm_stride", "sweep", "resnet",
                           "train", "threshold_step", "synth", "jobs"}, "config");
    if (j.contains("roi")) from_json_into(j["roi"], c.roi);
    detail::read(j, "history", c.history);
    if (j.contains("mchog")) from_json_into(j["mchog"], c.mchog);
    if (j.contains("svm")) from_json_into(j["svm"], c.svm);
    detail::read(j, "svm_stride", c.svm_stride);
    if (j.contains("sweep")) from_json_into(j["sweep"], c.sweep);
    if (j.contains("resnet")) from_json_into(j["resnet"], c.resnet);
    if (j.contains("train")) from_json_into(j["train"], c.regime);
    detail::read(j, "threshold_step", c.threshold_step);
    if (j.contains("synth")) from_json_into(j["synth"], c.synth);
    detail::read(j, "jobs", c.jobs);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace mhistart
