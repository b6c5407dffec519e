#pragma once

// Layers with hand-written forward and backward passes. Each layer caches
// what its backward pass needs from the most recent forward call.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "mhistart/errors.hpp"
#include "mhistart/nn/tensor.hpp"

namespace mhistart::nn {

enum class Mode { Train, Infer };

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

template <typename T>
struct BufferRef {
  std::string name;
  Tensor<T>* value;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
                       std::vector<BufferRef<T>>& buffers) {
    (void)prefix, (void)params, (void)buffers;
  }
};

template <typename T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatrixRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatrixRM<T>>;

// ---------------------------------------------------------------------------

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, NormalSampler& init)
      : in_(in_ch), out_(out_ch), k_(kernel), stride_(stride), pad_(pad),
        weight_(out_ch, in_ch, kernel, kernel), bias_(1, out_ch, 1, 1),
        dweight_(out_ch, in_ch, kernel, kernel), dbias_(1, out_ch, 1, 1) {
    const double std_dev = std::sqrt(2.0 / (in_ch * kernel * kernel));
    for (auto& v : weight_.data) v = static_cast<T>(init() * std_dev);
  }

  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }
  bool pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    if (x.c != in_) throw ShapeMismatch("conv expects " + std::to_string(in_) +
                                        " channels, got " + x.shape_string());
    input_ = x;
    const int ho = out_size(x.h), wo = out_size(x.w);
    if (ho <= 0 || wo <= 0) throw ShapeMismatch("conv input too small: " + x.shape_string());
    Tensor<T> y(x.n, out_, ho, wo);
    const int kk = in_ * k_ * k_;
    const int p = ho * wo;
    ConstMapRM<T> wm(weight_.data.data(), out_, kk);
    for (int i = 0; i < x.n; ++i) {
      MapRM<T> ym(y.sample(i), out_, p);
      if (pointwise()) {
        ym.noalias() = wm * ConstMapRM<T>(x.sample(i), in_, p);
      } else {
        im2col(x, i, ho, wo);
        ym.noalias() = wm * ConstMapRM<T>(col_.data(), kk, p);
      }
      for (int o = 0; o < out_; ++o) ym.row(o).array() += bias_.data[o];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    const Tensor<T>& x = input_;
    const int ho = g.h, wo = g.w;
    const int kk = in_ * k_ * k_;
    const int p = ho * wo;
    Tensor<T> dx(x.n, x.c, x.h, x.w);
    ConstMapRM<T> wm(weight_.data.data(), out_, kk);
    MapRM<T> dwm(dweight_.data.data(), out_, kk);
    for (int i = 0; i < x.n; ++i) {
      ConstMapRM<T> gm(g.sample(i), out_, p);
      // A plain loop: Eigen's vectorised sum depends on pointer alignment.
      for (int o = 0; o < out_; ++o) {
        const T* row = g.sample(i) + static_cast<std::ptrdiff_t>(o) * p;
        T s = 0;
        for (int j = 0; j < p; ++j) s += row[j];
        dbias_.data[o] += s;
      }
      if (pointwise()) {
        dwm.noalias() += gm * ConstMapRM<T>(x.sample(i), in_, p).transpose();
        MapRM<T>(dx.sample(i), in_, p).noalias() = wm.transpose() * gm;
      } else {
        im2col(x, i, ho, wo);
        dwm.noalias() += gm * ConstMapRM<T>(col_.data(), kk, p).transpose();
        dcol_.resize(static_cast<std::size_t>(kk) * p);
        MapRM<T>(dcol_.data(), kk, p).noalias() = wm.transpose() * gm;
        col2im(dx, i, ho, wo);
      }
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
               std::vector<BufferRef<T>>&) override {
    params.push_back({prefix + ".weight", &weight_, &dweight_});
    params.push_back({prefix + ".bias", &bias_, &dbias_});
  }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  void im2col(const Tensor<T>& x, int i, int ho, int wo) {
    const int p = ho * wo;
    col_.assign(static_cast<std::size_t>(in_) * k_ * k_ * p, T(0));
    const T* src = x.sample(i);
    for (int c = 0; c < in_; ++c)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          T* row = col_.data() + (static_cast<std::size_t>((c * k_ + ky) * k_ + kx)) * p;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= x.h) continue;
            const T* srow = src + (static_cast<std::size_t>(c) * x.h + iy) * x.w;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < x.w) row[oy * wo + ox] = srow[ix];
            }
          }
        }
  }

  void col2im(Tensor<T>& dx, int i, int ho, int wo) const {
    const int p = ho * wo;
    T* dst = dx.sample(i);
    for (int c = 0; c < in_; ++c)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const T* row = dcol_.data() + (static_cast<std::size_t>((c * k_ + ky) * k_ + kx)) * p;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= dx.h) continue;
            T* drow = dst + (static_cast<std::size_t>(c) * dx.h + iy) * dx.w;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < dx.w) drow[ix] += row[oy * wo + ox];
            }
          }
        }
  }

  int in_, out_, k_, stride_, pad_;
  Tensor<T> weight_, bias_, dweight_, dbias_;
  Tensor<T> input_;
  std::vector<T> col_, dcol_;
};

// ---------------------------------------------------------------------------

/// Per-channel batch normalisation. Training mode normalises with batch
/// statistics over (N, H, W) and updates running estimates; inference mode
/// uses the running estimates.
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5)
      : c_(channels), momentum_(momentum), eps_(eps),
        gamma_(1, channels, 1, 1, T(1)), beta_(1, channels, 1, 1),
        dgamma_(1, channels, 1, 1), dbeta_(1, channels, 1, 1),
        running_mean_(1, channels, 1, 1), running_var_(1, channels, 1, 1, T(1)) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (x.c != c_) throw ShapeMismatch("batch norm expects " + std::to_string(c_) +
                                       " channels, got " + x.shape_string());
    Tensor<T> y(x.n, x.c, x.h, x.w);
    const std::size_t plane = x.plane();
    const double m = static_cast<double>(x.n) * static_cast<double>(plane);
    mode_ = mode;
    xhat_ = Tensor<T>(x.n, x.c, x.h, x.w);
    inv_std_.assign(static_cast<std::size_t>(c_), T(0));
    for (int ch = 0; ch < c_; ++ch) {
      double mean, var;
      if (mode == Mode::Train) {
        double s = 0.0;
        for (int i = 0; i < x.n; ++i) {
          const T* p = x.sample(i) + ch * plane;
          for (std::size_t k = 0; k < plane; ++k) s += p[k];
        }
        mean = s / m;
        double ss = 0.0;
        for (int i = 0; i < x.n; ++i) {
          const T* p = x.sample(i) + ch * plane;
          for (std::size_t k = 0; k < plane; ++k) {
            const double d = p[k] - mean;
            ss += d * d;
          }
        }
        var = ss / m;
        const double unbiased = m > 1.0 ? ss / (m - 1.0) : var;
        running_mean_.data[ch] = static_cast<T>((1.0 - momentum_) * running_mean_.data[ch] + momentum_ * mean);
        running_var_.data[ch] = static_cast<T>((1.0 - momentum_) * running_var_.data[ch] + momentum_ * unbiased);
      } else {
        mean = running_mean_.data[ch];
        var = running_var_.data[ch];
      }
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_[ch] = static_cast<T>(inv);
      const T g = gamma_.data[ch], b = beta_.data[ch];
      for (int i = 0; i < x.n; ++i) {
        const T* p = x.sample(i) + ch * plane;
        T* xh = xhat_.sample(i) + ch * plane;
        T* q = y.sample(i) + ch * plane;
        for (std::size_t k = 0; k < plane; ++k) {
          xh[k] = static_cast<T>((p[k] - mean) * inv);
          q[k] = g * xh[k] + b;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx(g.n, g.c, g.h, g.w);
    const std::size_t plane = g.plane();
    const double m = static_cast<double>(g.n) * static_cast<double>(plane);
    for (int ch = 0; ch < c_; ++ch) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (int i = 0; i < g.n; ++i) {
        const T* gp = g.sample(i) + ch * plane;
        const T* xh = xhat_.sample(i) + ch * plane;
        for (std::size_t k = 0; k < plane; ++k) {
          sum_g += gp[k];
          sum_gx += gp[k] * xh[k];
        }
      }
      dgamma_.data[ch] += static_cast<T>(sum_gx);
      dbeta_.data[ch] += static_cast<T>(sum_g);
      const double gamma = gamma_.data[ch];
      const double inv = inv_std_[ch];
      for (int i = 0; i < g.n; ++i) {
        const T* gp = g.sample(i) + ch * plane;
        const T* xh = xhat_.sample(i) + ch * plane;
        T* d = dx.sample(i) + ch * plane;
        if (mode_ == Mode::Train) {
          for (std::size_t k = 0; k < plane; ++k)
            d[k] = static_cast<T>(gamma * inv * (gp[k] - sum_g / m - xh[k] * sum_gx / m));
        } else {
          for (std::size_t k = 0; k < plane; ++k) d[k] = static_cast<T>(gamma * inv * gp[k]);
        }
      }
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
               std::vector<BufferRef<T>>& buffers) override {
    params.push_back({prefix + ".gamma", &gamma_, &dgamma_});
    params.push_back({prefix + ".beta", &beta_, &dbeta_});
    buffers.push_back({prefix + ".running_mean", &running_mean_});
    buffers.push_back({prefix + ".running_var", &running_var_});
  }

 private:
  int c_;
  double momentum_, eps_;
  Tensor<T> gamma_, beta_, dgamma_, dbeta_, running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
  Mode mode_ = Mode::Train;
};

// ---------------------------------------------------------------------------

template <typename T>
class Relu final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    Tensor<T> y = x;
    mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y.data[i] > T(0)) mask_[i] = 1;
      else y.data[i] = T(0);
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> d = g;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (!mask_[i]) d.data[i] = T(0);
    return d;
  }

 private:
  std::vector<unsigned char> mask_;
};

template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  MaxPool2d(int window, int stride) : k_(window), s_(stride) {}

  int out_size(int in) const { return (in - k_) / s_ + 1; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    const int ho = out_size(x.h), wo = out_size(x.w);
    if (ho <= 0 || wo <= 0) throw ShapeMismatch("max-pool input too small: " + x.shape_string());
    n_ = x.n, c_ = x.c, h_ = x.h, w_ = x.w;
    Tensor<T> y(x.n, x.c, ho, wo);
    argmax_.assign(y.size(), 0);
    std::size_t out = 0;
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c) {
        const std::size_t base = (static_cast<std::size_t>(i) * x.c + c) * x.plane();
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox, ++out) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t arg = 0;
            for (int ky = 0; ky < k_; ++ky)
              for (int kx = 0; kx < k_; ++kx) {
                const std::size_t idx = base + static_cast<std::size_t>(oy * s_ + ky) * x.w + (ox * s_ + kx);
                if (x.data[idx] > best) {
                  best = x.data[idx];
                  arg = idx;
                }
              }
            y.data[out] = best;
            argmax_[out] = arg;
          }
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx(n_, c_, h_, w_);
    for (std::size_t i = 0; i < g.size(); ++i) dx.data[argmax_[i]] += g.data[i];
    return dx;
  }

 private:
  int k_, s_;
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<std::size_t> argmax_;
};

template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    n_ = x.n, c_ = x.c, h_ = x.h, w_ = x.w;
    Tensor<T> y(x.n, x.c, 1, 1);
    const std::size_t plane = x.plane();
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c) {
        const T* p = x.sample(i) + c * plane;
        double s = 0.0;
        for (std::size_t k = 0; k < plane; ++k) s += p[k];
        y.at(i, c, 0, 0) = static_cast<T>(s / static_cast<double>(plane));
      }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx(n_, c_, h_, w_);
    const std::size_t plane = dx.plane();
    const T scale = T(1) / static_cast<T>(plane);
    for (int i = 0; i < n_; ++i)
      for (int c = 0; c < c_; ++c) {
        T* p = dx.sample(i) + c * plane;
        const T v = g.at(i, c, 0, 0) * scale;
        for (std::size_t k = 0; k < plane; ++k) p[k] = v;
      }
    return dx;
  }

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
};

/// Fully connected layer over the flattened (C*H*W) sample.
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(int in, int out, NormalSampler& init)
      : in_(in), out_(out), weight_(1, 1, out, in), bias_(1, out, 1, 1),
        dweight_(1, 1, out, in), dbias_(1, out, 1, 1) {
    const double std_dev = std::sqrt(1.0 / in);
    for (auto& v : weight_.data) v = static_cast<T>(init() * std_dev);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    if (static_cast<int>(x.sample_size()) != in_)
      throw ShapeMismatch("linear layer expects " + std::to_string(in_) +
                          " features, got " + x.shape_string());
    input_ = x;
    Tensor<T> y(x.n, out_, 1, 1);
    ConstMapRM<T> xm(x.data.data(), x.n, in_);
    ConstMapRM<T> wm(weight_.data.data(), out_, in_);
    MapRM<T> ym(y.data.data(), x.n, out_);
    ym.noalias() = xm * wm.transpose();
    for (int i = 0; i < x.n; ++i)
      for (int o = 0; o < out_; ++o) ym(i, o) += bias_.data[o];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    const Tensor<T>& x = input_;
    ConstMapRM<T> xm(x.data.data(), x.n, in_);
    ConstMapRM<T> gm(g.data.data(), g.n, out_);
    ConstMapRM<T> wm(weight_.data.data(), out_, in_);
    MapRM<T>(dweight_.data.data(), out_, in_).noalias() += gm.transpose() * xm;
    for (int i = 0; i < g.n; ++i)
      for (int o = 0; o < out_; ++o) dbias_.data[o] += gm(i, o);
    Tensor<T> dx(x.n, x.c, x.h, x.w);
    MapRM<T>(dx.data.data(), x.n, in_).noalias() = gm * wm;
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
               std::vector<BufferRef<T>>&) override {
    params.push_back({prefix + ".weight", &weight_, &dweight_});
    params.push_back({prefix + ".bias", &bias_, &dbias_});
  }

 private:
  int in_, out_;
  Tensor<T> weight_, bias_, dweight_, dbias_;
  Tensor<T> input_;
};

/// Ordered chain of layers.
template <typename T>
class Sequential : public Layer<T> {
 public:
  template <typename L, typename... Args>
  L& add(std::string name, Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back({std::move(name), std::move(layer)});
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> h = x;
    for (auto& l : layers_) h = l.layer->forward(h, mode);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> d = g;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = it->layer->backward(d);
    return d;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
               std::vector<BufferRef<T>>& buffers) override {
    for (auto& l : layers_)
      l.layer->collect(prefix.empty() ? l.name : prefix + "." + l.name, params, buffers);
  }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& operator[](std::size_t i) { return *layers_[i].layer; }

 private:
  struct Named {
    std::string name;
    std::unique_ptr<Layer<T>> layer;
  };
  std::vector<Named> layers_;
};

/// Mean cross-entropy of softmax(logits) against integer labels. Returns the
/// loss; fills probabilities and d(loss)/d(logits).
template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                             Tensor<T>& probs, Tensor<T>& grad) {
  const int n = logits.n;
  const int k = static_cast<int>(logits.sample_size());
  if (static_cast<int>(labels.size()) != n)
    throw ShapeMismatch("label count does not match batch size");
  probs = Tensor<T>(n, k, 1, 1);
  grad = Tensor<T>(n, k, 1, 1);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const T* z = logits.sample(i);
    double mx = z[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(z[j]));
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += std::exp(z[j] - mx);
    const double log_s = std::log(s);
    if (labels[i] < 0 || labels[i] >= k) throw ShapeMismatch("label out of range");
    loss -= z[labels[i]] - mx - log_s;
    for (int j = 0; j < k; ++j) {
      const double p = std::exp(z[j] - mx - log_s);
      probs.sample(i)[j] = static_cast<T>(p);
      grad.sample(i)[j] = static_cast<T>((p - (j == labels[i] ? 1.0 : 0.0)) / n);
    }
  }
  return loss / n;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  Tensor<T> probs(logits.n, static_cast<int>(logits.sample_size()), 1, 1);
  const int k = static_cast<int>(logits.sample_size());
  for (int i = 0; i < logits.n; ++i) {
    const T* z = logits.sample(i);
    double mx = z[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(z[j]));
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += std::exp(z[j] - mx);
    for (int j = 0; j < k; ++j) probs.sample(i)[j] = static_cast<T>(std::exp(z[j] - mx) / s);
  }
  return probs;
}

}  // namespace mhistart::nn
