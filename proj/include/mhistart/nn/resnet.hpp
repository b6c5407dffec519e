#pragma once

// Configurable residual network for two-class MHI classification.
//
//   input BN -> reduction (KxK conv, max-pool) -> 1x1 conv to stem maps
//   -> per block: L bottleneck residual layers, 1x1 conv to the block's
//      output maps, BN
//   -> global average pool -> fully connected -> softmax
//
// A bottleneck residual layer computes x + F(x) with pre-activation
//   F = conv1x1(expand) . relu . BN . conv3x3 . relu . BN . conv1x1(reduce) . relu . BN

#include <algorithm>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mhistart/errors.hpp"
#include "mhistart/nn/layers.hpp"
#include "mhistart/nn/tensor.hpp"

namespace mhistart::nn {

struct ResNetConfig {
  int input_w = 128;
  int input_h = 128;
  int reduction_filters = 8;
  int reduction_kernel = 5;
  int reduction_stride = 2;
  int pool_window = 2;
  int pool_stride = 2;
  int stem_maps = 4;
  int n_blocks = 2;
  int layers_per_block = 2;
  std::vector<int> block_out_maps{32, 64};
  int bottleneck_divisor = 4;
  int n_classes = 2;
  std::uint64_t seed = 7;

  void validate() const {
    auto pos = [](int v, const char* what) {
      if (v < 1) throw InvalidArgument(std::string(what) + " must be >= 1");
    };
    pos(input_w, "input_w");
    pos(input_h, "input_h");
    pos(reduction_filters, "reduction_filters");
    pos(reduction_kernel, "reduction_kernel");
    pos(reduction_stride, "reduction_stride");
    pos(pool_window, "pool_window");
    pos(pool_stride, "pool_stride");
    pos(stem_maps, "stem_maps");
    pos(n_blocks, "n_blocks");
    pos(layers_per_block, "layers_per_block");
    pos(bottleneck_divisor, "bottleneck_divisor");
    if (n_classes != 2) throw InvalidArgument("n_classes must be 2");
    if (static_cast<int>(block_out_maps.size()) != n_blocks)
      throw InvalidArgument("block_out_maps needs one entry per block");
    for (int m : block_out_maps) pos(m, "block_out_maps entry");
  }

  int feature_length() const { return block_out_maps.back(); }

  /// Seven blocks of eight bottleneck layers ending at 1024 maps.
  static ResNetConfig full_scale() {
    ResNetConfig c;
    c.n_blocks = 7;
    c.layers_per_block = 8;
    c.block_out_maps = {16, 32, 64, 128, 256, 512, 1024};
    return c;
  }

  friend bool operator==(const ResNetConfig&, const ResNetConfig&) = default;
};

template <typename T>
class BottleneckResidual final : public Layer<T> {
 public:
  BottleneckResidual(int channels, int divisor, NormalSampler& init) {
    const int mid = std::max(1, channels / divisor);
    branch_.template add<BatchNorm2d<T>>("bn1", channels);
    branch_.template add<Relu<T>>("relu1");
    reduce_ = &branch_.template add<Conv2d<T>>("conv1", channels, mid, 1, 1, 0, init);
    branch_.template add<BatchNorm2d<T>>("bn2", mid);
    branch_.template add<Relu<T>>("relu2");
    spatial_ = &branch_.template add<Conv2d<T>>("conv2", mid, mid, 3, 1, 1, init);
    branch_.template add<BatchNorm2d<T>>("bn3", mid);
    branch_.template add<Relu<T>>("relu3");
    expand_ = &branch_.template add<Conv2d<T>>("conv3", mid, channels, 1, 1, 0, init);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> y = branch_.forward(x, mode);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += x.data[i];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> d = branch_.backward(g);
    for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += g.data[i];
    return d;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
               std::vector<BufferRef<T>>& buffers) override {
    branch_.collect(prefix, params, buffers);
  }

  /// Zeroes every convolution in the residual branch, making F identically 0.
  void zero_branch() {
    for (Conv2d<T>* c : {reduce_, spatial_, expand_}) {
      c->weight().zero();
      c->bias().zero();
    }
  }

  Tensor<T> branch_output(const Tensor<T>& x, Mode mode) { return branch_.forward(x, mode); }

 private:
  Sequential<T> branch_;
  Conv2d<T>* reduce_ = nullptr;
  Conv2d<T>* spatial_ = nullptr;
  Conv2d<T>* expand_ = nullptr;
};

template <typename T>
class ResidualBlock final : public Layer<T> {
 public:
  ResidualBlock(int in_maps, int out_maps, int n_layers, int divisor, NormalSampler& init) {
    for (int l = 0; l < n_layers; ++l)
      residuals_.push_back(&body_.template add<BottleneckResidual<T>>(
          "layer" + std::to_string(l), in_maps, divisor, init));
    projection_ = &body_.template add<Conv2d<T>>("proj", in_maps, out_maps, 1, 1, 0, init);
    norm_ = &body_.template add<BatchNorm2d<T>>("bn", out_maps);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override { return body_.forward(x, mode); }
  Tensor<T> backward(const Tensor<T>& g) override { return body_.backward(g); }
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
               std::vector<BufferRef<T>>& buffers) override {
    body_.collect(prefix, params, buffers);
  }

  std::vector<BottleneckResidual<T>*>& residuals() { return residuals_; }

  /// BN(projection(x)): the block output when every residual branch is zero.
  Tensor<T> projected(const Tensor<T>& x, Mode mode) {
    return norm_->forward(projection_->forward(x, mode), mode);
  }

 private:
  Sequential<T> body_;
  std::vector<BottleneckResidual<T>*> residuals_;
  Conv2d<T>* projection_ = nullptr;
  BatchNorm2d<T>* norm_ = nullptr;
};

template <typename T>
class ResNet {
 public:
  explicit ResNet(ResNetConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    NormalSampler init(cfg_.seed);
    net_.template add<BatchNorm2d<T>>("input_bn", 1);
    const int pad = cfg_.reduction_kernel / 2;
    net_.template add<Conv2d<T>>("reduce", 1, cfg_.reduction_filters, cfg_.reduction_kernel,
                                 cfg_.reduction_stride, pad, init);
    net_.template add<MaxPool2d<T>>("pool", cfg_.pool_window, cfg_.pool_stride);
    net_.template add<Conv2d<T>>("stem", cfg_.reduction_filters, cfg_.stem_maps, 1, 1, 0, init);
    int maps = cfg_.stem_maps;
    for (int b = 0; b < cfg_.n_blocks; ++b) {
      blocks_.push_back(&net_.template add<ResidualBlock<T>>(
          "block" + std::to_string(b), maps, cfg_.block_out_maps[b], cfg_.layers_per_block,
          cfg_.bottleneck_divisor, init));
      maps = cfg_.block_out_maps[b];
    }
    net_.template add<GlobalAvgPool<T>>("gap");
    net_.template add<Linear<T>>("fc", maps, cfg_.n_classes, init);
    net_.collect("", params_, buffers_);
    const auto [h, w] = feature_map_size();
    if (h < 1 || w < 1) throw ShapeMismatch("input too small for the reduction layer");
  }

  ResNet(const ResNet&) = delete;
  ResNet& operator=(const ResNet&) = delete;

  const ResNetConfig& config() const { return cfg_; }

  /// Spatial size entering the residual blocks.
  std::pair<int, int> feature_map_size() const {
    const int pad = cfg_.reduction_kernel / 2;
    auto conv = [&](int n) {
      return n + 2 * pad < cfg_.reduction_kernel ? 0 : (n + 2 * pad - cfg_.reduction_kernel) / cfg_.reduction_stride + 1;
    };
    auto pool = [&](int n) { return n < cfg_.pool_window ? 0 : (n - cfg_.pool_window) / cfg_.pool_stride + 1; };
    return {pool(conv(cfg_.input_h)), pool(conv(cfg_.input_w))};
  }

  Tensor<T> logits(const Tensor<T>& batch, Mode mode) {
    check_input(batch);
    return net_.forward(batch, mode);
  }

  /// Rows of (p_waiting, p_moving).
  Tensor<T> forward(const Tensor<T>& batch, Mode mode = Mode::Infer) {
    return softmax(logits(batch, mode));
  }

  /// Mean cross-entropy; accumulates parameter gradients (call zero_grad
  /// first for a fresh gradient).
  double loss_and_backward(const Tensor<T>& batch, const std::vector<int>& labels,
                           Mode mode = Mode::Train) {
    Tensor<T> z = logits(batch, mode);
    Tensor<T> probs, grad;
    const double loss = softmax_cross_entropy(z, labels, probs, grad);
    net_.backward(grad);
    return loss;
  }

  double loss(const Tensor<T>& batch, const std::vector<int>& labels, Mode mode = Mode::Train) {
    Tensor<T> z = logits(batch, mode);
    Tensor<T> probs, grad;
    return softmax_cross_entropy(z, labels, probs, grad);
  }

  void zero_grad() {
    for (auto& p : params_) p.grad->zero();
  }

  std::vector<ParamRef<T>>& params() { return params_; }
  std::vector<BufferRef<T>>& buffers() { return buffers_; }
  std::vector<ResidualBlock<T>*>& blocks() { return blocks_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value->size();
    return n;
  }

  /// Copies every parameter and buffer value.
  std::vector<std::vector<T>> state() const {
    std::vector<std::vector<T>> s;
    for (const auto& p : params_) s.push_back(p.value->data);
    for (const auto& b : buffers_) s.push_back(b.value->data);
    return s;
  }

  void load_state(const std::vector<std::vector<T>>& s) {
    if (s.size() != params_.size() + buffers_.size())
      throw ShapeMismatch("state tensor count mismatch");
    std::size_t k = 0;
    auto load = [&](Tensor<T>* t) {
      if (s[k].size() != t->size()) throw ShapeMismatch("state tensor size mismatch");
      t->data = s[k++];
    };
    for (auto& p : params_) load(p.value);
    for (auto& b : buffers_) load(b.value);
  }

 private:
  void check_input(const Tensor<T>& batch) const {
    if (batch.c != 1 || batch.h != cfg_.input_h || batch.w != cfg_.input_w)
      throw ShapeMismatch("network expects (N, 1, " + std::to_string(cfg_.input_h) + ", " +
                          std::to_string(cfg_.input_w) + "), got " + batch.shape_string());
    if (batch.n < 1) throw ShapeMismatch("empty batch");
  }

  ResNetConfig cfg_;
  Sequential<T> net_;
  std::vector<ResidualBlock<T>*> blocks_;
  std::vector<ParamRef<T>> params_;
  std::vector<BufferRef<T>> buffers_;
};

/// RMSProp hyper-parameters; the accumulator lives in RmsPropState.
struct RmsPropHyper {
  double learning_rate = 1e-3;
  double decay = 0.9;
  double epsilon = 1e-8;
};

/// acc <- decay * acc + (1 - decay) * g^2;  p <- p - lr * g / sqrt(acc + eps)
template <typename T>
void rmsprop_step(std::span<T> params, std::span<const T> grads, std::span<T> accumulator,
                  const RmsPropHyper& h) {
  if (params.size() != grads.size() || params.size() != accumulator.size())
    throw ShapeMismatch("rmsprop: parameter, gradient and accumulator sizes differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double acc = h.decay * accumulator[i] + (1.0 - h.decay) * g * g;
    accumulator[i] = static_cast<T>(acc);
    params[i] = static_cast<T>(params[i] - h.learning_rate * g / std::sqrt(acc + h.epsilon));
  }
}

template <typename T>
class RmsProp {
 public:
  RmsProp(ResNet<T>& model, RmsPropHyper hyper) : model_(model), hyper_(hyper) {
    for (const auto& p : model_.params()) acc_.emplace_back(p.value->size(), T(0));
  }

  void step() {
    auto& ps = model_.params();
    for (std::size_t i = 0; i < ps.size(); ++i)
      rmsprop_step<T>(ps[i].value->data, ps[i].grad->data, acc_[i], hyper_);
  }

 private:
  ResNet<T>& model_;
  RmsPropHyper hyper_;
  std::vector<std::vector<T>> acc_;
};

}  // namespace mhistart::nn
