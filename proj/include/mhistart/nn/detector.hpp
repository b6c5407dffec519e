#pragma once

// ResNet detector glue: training samples from scene MHIs, per-scene traces,
// and the validation callback used to pick checkpoints.

#include <span>
#include <vector>

#include "mhistart/eval.hpp"
#include "mhistart/nn/train.hpp"
#include "mhistart/pipeline.hpp"

namespace mhistart::nn {

/// Every stride-th MHI of the given scenes, labelled 0 = waiting, 1 = starting or moving.
inline LabeledImages labeled_images(std::span<const SceneSamples> scenes, std::size_t stride = 1) {
  if (stride == 0) throw InvalidArgument("stride must be >= 1");
  LabeledImages out;
  for (const auto& s : scenes) {
    for (std::size_t i = 0; i < s.images.size(); i += stride) {
      const auto& img = s.images[i];
      if (out.images.empty()) {
        out.width = static_cast<int>(img.width());
        out.height = static_cast<int>(img.height());
      } else if (img.width() != static_cast<std::size_t>(out.width) ||
                 img.height() != static_cast<std::size_t>(out.height)) {
        throw ShapeMismatch(s.name + ": MHI size differs from earlier samples");
      }
      out.images.push_back(img.data());
      out.labels.push_back(binary_label(s.annotation.labels()[i]) > 0 ? 1 : 0);
    }
  }
  if (out.images.empty()) throw DegenerateData("no samples for the ResNet training set");
  return out;
}

inline std::vector<double> p_moving(ResNet<float>& net, const SceneSamples& s, int batch = 32) {
  std::vector<std::vector<float>> images;
  images.reserve(s.images.size());
  for (const auto& img : s.images) images.push_back(img.data());
  return predict_moving(net, images, batch);
}

inline std::vector<ScoredScene> score_scenes(ResNet<float>& net, std::span<const SceneSamples> scenes) {
  std::vector<ScoredScene> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(scored(s, p_moving(net, s)));
  return out;
}

/// Validation callback: sweeps thresholds on the given scenes and returns the operating point.
inline Validator sweep_validator(std::span<const SceneSamples> val, double threshold_step = 0.02) {
  const auto grid = threshold_grid(threshold_step);
  return [val, grid](ResNet<float>& net) {
    const auto traces = score_scenes(net, val);
    return select_operating_point(sweep(traces, grid));
  };
}

}  // namespace mhistart::nn
