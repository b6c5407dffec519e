#pragma once

// Mini-batch RMSProp training with periodic validation checkpoints.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "mhistart/errors.hpp"
#include "mhistart/eval.hpp"
#include "mhistart/nn/resnet.hpp"

namespace mhistart::nn {

struct TrainRegime {
  RmsPropHyper optimizer;
  int batch_size = 10;
  int iterations = 5000;
  int validation_every = 250;
  std::uint64_t seed = 1;

  void validate() const {
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (iterations < 0) throw InvalidArgument("iterations must be >= 0");
    if (validation_every < 1) throw InvalidArgument("validation_every must be >= 1");
    if (!(optimizer.learning_rate >= 0.0) || !std::isfinite(optimizer.learning_rate))
      throw InvalidArgument("learning rate must be finite and non-negative");
    if (!(optimizer.decay >= 0.0 && optimizer.decay < 1.0))
      throw InvalidArgument("RMSProp decay must lie in [0,1)");
    if (!(optimizer.epsilon > 0.0)) throw InvalidArgument("RMSProp epsilon must be positive");
  }
};

/// Training samples: single-channel images of the network's input size,
/// labels 0 = waiting, 1 = moving.
struct LabeledImages {
  int width = 0, height = 0;
  std::vector<std::vector<float>> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
};

template <typename T>
Tensor<T> make_batch(const LabeledImages& data, std::span<const std::size_t> idx) {
  Tensor<T> x(static_cast<int>(idx.size()), 1, data.height, data.width);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& img = data.images[idx[b]];
    std::copy(img.begin(), img.end(), x.sample(static_cast<int>(b)));
  }
  return x;
}

struct TrainCheckpoint {
  int iteration = 0;
  double train_loss = 0.0;  // mean batch loss since the previous checkpoint
  SweepPoint validation;    // operating point on the validation scenes
  std::vector<std::vector<float>> state;
};

struct TrainResult {
  std::vector<double> losses;  // per iteration, before the update
  std::vector<TrainCheckpoint> checkpoints;
  std::size_t best = 0;
};

/// True when a beats b: higher F1, then lower mean delay (missing = +inf).
inline bool better_checkpoint(const SweepPoint& a, const SweepPoint& b) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (a.f1 > b.f1 + 1e-12) return true;
  if (a.f1 < b.f1 - 1e-12) return false;
  return a.mean_delay.value_or(kInf) < b.mean_delay.value_or(kInf);
}

using Validator = std::function<SweepPoint(ResNet<float>&)>;

/// Trains in place. A checkpoint is taken every validation_every iterations
/// and after the last one; the model is left holding the best checkpoint.
inline TrainResult train(ResNet<float>& net, const LabeledImages& data,
                         const TrainRegime& regime, const Validator& validate,
                         std::ostream* log = nullptr) {
  regime.validate();
  if (data.size() == 0) throw DegenerateData("no training samples");
  if (data.labels.size() != data.size()) throw DimensionMismatch("image/label count mismatch");
  TrainResult result;
  RmsProp<float> opt(net, regime.optimizer);
  std::mt19937_64 rng(regime.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(regime.batch_size), data.size());
  std::vector<std::size_t> idx(bs);
  std::vector<int> labels(bs);
  double loss_sum = 0.0;
  int loss_count = 0;
  if (log) *log << "iteration,loss,val_f1,val_delay\n";

  auto checkpoint = [&](int iteration) {
    TrainCheckpoint c;
    c.iteration = iteration;
    c.train_loss = loss_count ? loss_sum / loss_count : std::numeric_limits<double>::quiet_NaN();
    c.validation = validate(net);
    c.state = net.state();
    if (log) {
      *log << iteration << ',' << c.train_loss << ',' << c.validation.f1 << ',';
      if (c.validation.mean_delay) *log << *c.validation.mean_delay;
      *log << '\n';
    }
    if (result.checkpoints.empty() ||
        better_checkpoint(c.validation, result.checkpoints[result.best].validation))
      result.best = result.checkpoints.size();
    result.checkpoints.push_back(std::move(c));
    loss_sum = 0.0;
    loss_count = 0;
  };

  for (int it = 0; it < regime.iterations; ++it) {
    for (std::size_t b = 0; b < bs; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        cursor = 0;
      }
      idx[b] = order[cursor++];
      labels[b] = data.labels[idx[b]];
    }
    const auto x = make_batch<float>(data, idx);
    net.zero_grad();
    const double loss = net.loss_and_backward(x, labels);
    if (!std::isfinite(loss))
      throw DivergenceDetected("non-finite loss at iteration " + std::to_string(it));
    result.losses.push_back(loss);
    loss_sum += loss;
    ++loss_count;
    opt.step();
    if ((it + 1) % regime.validation_every == 0) checkpoint(it + 1);
  }
  if (result.checkpoints.empty() || result.checkpoints.back().iteration != regime.iterations)
    checkpoint(regime.iterations);
  net.load_state(result.checkpoints[result.best].state);
  return result;
}

/// p_moving for every image, inferred in batches.
inline std::vector<double> predict_moving(ResNet<float>& net,
                                          std::span<const std::vector<float>> images,
                                          int batch = 32) {
  std::vector<double> out;
  out.reserve(images.size());
  const auto& cfg = net.config();
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t n = std::min(images.size() - start, static_cast<std::size_t>(batch));
    Tensor<float> x(static_cast<int>(n), 1, cfg.input_h, cfg.input_w);
    for (std::size_t b = 0; b < n; ++b) {
      const auto& img = images[start + b];
      if (img.size() != x.sample_size()) throw ShapeMismatch("image size differs from network input");
      std::copy(img.begin(), img.end(), x.sample(static_cast<int>(b)));
    }
    const auto p = net.forward(x, Mode::Infer);
    for (std::size_t b = 0; b < n; ++b) out.push_back(p.at(static_cast<int>(b), 1, 0, 0));
  }
  return out;
}

}  // namespace mhistart::nn
