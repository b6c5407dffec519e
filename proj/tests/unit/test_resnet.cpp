#include <gtest/gtest.h>

#include <cmath>

#include "mhistart/nn/resnet.hpp"

using namespace mhistart::nn;

namespace {

ResNetConfig tiny_config() {
  ResNetConfig c;
  c.input_w = 16;
  c.input_h = 16;
  c.reduction_filters = 4;
  c.stem_maps = 4;
  c.n_blocks = 1;
  c.layers_per_block = 2;
  c.block_out_maps = {8};
  return c;
}

template <typename T>
Tensor<T> random_batch(int n, int h, int w, std::uint64_t seed) {
  NormalSampler s(seed);
  Tensor<T> x(n, 1, h, w);
  for (auto& v : x.data) v = static_cast<T>(s());
  return x;
}

}  // namespace

TEST(ResNetConfig, Validation) {
  auto c = tiny_config();
  c.block_out_maps = {8, 16};
  EXPECT_THROW(c.validate(), mhistart::InvalidArgument);
  c = tiny_config();
  c.stem_maps = 0;
  EXPECT_THROW(c.validate(), mhistart::InvalidArgument);
  c = tiny_config();
  c.input_w = 2;
  c.input_h = 2;
  EXPECT_THROW(ResNet<float>{c}, mhistart::ShapeMismatch);
}

TEST(ResNet, RowsAreProbabilities) {
  ResNet<float> net(ResNetConfig{});
  const auto p = net.forward(random_batch<float>(3, 128, 128, 1));
  ASSERT_EQ(p.n, 3);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(p.at(i, 0, 0, 0) + p.at(i, 1, 0, 0), 1.0f, 1e-6f);
    EXPECT_GE(p.at(i, 1, 0, 0), 0.0f);
  }
}

TEST(ResNet, RejectsWrongInput) {
  ResNet<float> net(tiny_config());
  EXPECT_THROW(net.forward(random_batch<float>(1, 15, 16, 1)), mhistart::ShapeMismatch);
  Tensor<float> two_channels(1, 2, 16, 16);
  EXPECT_THROW(net.forward(two_channels), mhistart::ShapeMismatch);
}

TEST(ResNet, DeterministicGivenSeed) {
  ResNet<float> a(tiny_config()), b(tiny_config());
  const auto x = random_batch<float>(4, 16, 16, 2);
  EXPECT_EQ(a.forward(x).data, b.forward(x).data);
  EXPECT_EQ(a.forward(x).data, a.forward(x).data);
}

TEST(ResNet, ZeroBranchIsIdentity) {
  ResNet<double> net(tiny_config());
  Tensor<double> in(2, 4, 4, 4);
  NormalSampler s(9);
  for (auto& v : in.data) v = s();
  for (auto* layer : net.blocks()[0]->residuals()) {
    layer->zero_branch();
    for (Mode mode : {Mode::Train, Mode::Infer}) {
      const auto y = layer->forward(in, mode);
      EXPECT_EQ(y.data, in.data);
      for (double v : layer->branch_output(in, mode).data) EXPECT_EQ(v, 0.0);
    }
  }
  auto* block = net.blocks()[0];
  EXPECT_EQ(block->forward(in, Mode::Infer).data, block->projected(in, Mode::Infer).data);
}

TEST(ResNet, GradientMatchesFiniteDifferences) {
  ResNet<double> net(tiny_config());
  const auto x = random_batch<double>(3, 16, 16, 4);
  const std::vector<int> y{0, 1, 1};
  net.zero_grad();
  net.loss_and_backward(x, y);
  const auto state = net.state();
  double worst = 0.0;
  for (auto& p : net.params()) {
    // A strided subset keeps the unit test quick; the acceptance run checks all.
    const std::size_t stride = std::max<std::size_t>(1, p.value->size() / 16);
    for (std::size_t i = 0; i < p.value->size(); i += stride) {
      const double orig = p.value->data[i];
      const double eps = 1e-3;
      net.load_state(state);
      p.value->data[i] = orig + eps;
      const double lp = net.loss(x, y);
      net.load_state(state);
      p.value->data[i] = orig - eps;
      const double lm = net.loss(x, y);
      net.load_state(state);
      const double fd = (lp - lm) / (2 * eps);
      const double an = p.grad->data[i];
      worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(ResNet, DuplicatedBatchGivesSameGradient) {
  ResNet<double> net(tiny_config());
  const auto x = random_batch<double>(3, 16, 16, 5);
  const std::vector<int> y{1, 0, 1};
  net.zero_grad();
  net.loss_and_backward(x, y);
  std::vector<std::vector<double>> g1;
  for (auto& p : net.params()) g1.push_back(p.grad->data);

  Tensor<double> x2(6, 1, 16, 16);
  std::vector<int> y2;
  for (int i = 0; i < 3; ++i)
    for (int r = 0; r < 2; ++r) {
      std::copy(x.sample(i), x.sample(i) + x.sample_size(), x2.sample(2 * i + r));
      y2.push_back(y[static_cast<std::size_t>(i)]);
    }
  net.zero_grad();
  net.loss_and_backward(x2, y2);
  for (std::size_t k = 0; k < g1.size(); ++k)
    for (std::size_t i = 0; i < g1[k].size(); ++i)
      EXPECT_NEAR(net.params()[k].grad->data[i], g1[k][i], 1e-10) << net.params()[k].name;
}

TEST(ResNet, InferenceIsPerSample) {
  ResNet<float> net(tiny_config());
  RmsProp<float> opt(net, {});
  for (int it = 0; it < 5; ++it) {
    net.zero_grad();
    net.loss_and_backward(random_batch<float>(4, 16, 16, 10 + it), {0, 1, 0, 1});
    opt.step();
  }
  const auto x = random_batch<float>(5, 16, 16, 6);
  const auto batch = net.forward(x, Mode::Infer);
  for (int i = 0; i < 5; ++i) {
    Tensor<float> one(1, 1, 16, 16);
    std::copy(x.sample(i), x.sample(i) + x.sample_size(), one.sample(0));
    const auto p = net.forward(one, Mode::Infer);
    EXPECT_NEAR(p.at(0, 1, 0, 0), batch.at(i, 1, 0, 0), 1e-6);
  }
}

TEST(ResNet, FullScaleIsConstructible) {
  auto c = ResNetConfig::full_scale();
  c.input_w = 32;
  c.input_h = 32;
  ResNet<float> net(c);
  EXPECT_EQ(c.feature_length(), 1024);
  EXPECT_EQ(net.blocks().size(), 7u);
  EXPECT_EQ(net.blocks()[0]->residuals().size(), 8u);
  const auto p = net.forward(random_batch<float>(1, 32, 32, 7));
  EXPECT_NEAR(p.at(0, 0, 0, 0) + p.at(0, 1, 0, 0), 1.0f, 1e-6f);
}

TEST(GlobalAvgPool, MatchesNaiveMean) {
  GlobalAvgPool<double> gap;
  Tensor<double> x(2, 3, 5, 4);
  NormalSampler s(8);
  for (auto& v : x.data) v = s();
  const auto y = gap.forward(x, Mode::Infer);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0;
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j) sum += x.at(n, c, i, j);
      EXPECT_NEAR(y.at(n, c, 0, 0), sum / 20.0, 1e-15);
    }
}

TEST(SoftmaxCrossEntropy, SaturatedCorrectPredictionHasNoGradient) {
  Tensor<double> z(1, 2, 1, 1);
  z.data = {40.0, -40.0};
  Tensor<double> probs, grad;
  const double loss = softmax_cross_entropy(z, {0}, probs, grad);
  EXPECT_LT(loss, 1e-30);
  for (double g : grad.data) EXPECT_LT(std::abs(g), 1e-30);
}

TEST(RmsProp, ZeroGradientKeepsParameters) {
  std::vector<double> p{1.5, -2.0}, g{0.0, 0.0}, acc{4.0, 1.0};
  rmsprop_step<double>(p, g, acc, {1e-2, 0.9, 1e-8});
  EXPECT_EQ(p, (std::vector<double>{1.5, -2.0}));
  EXPECT_DOUBLE_EQ(acc[0], 3.6);
  EXPECT_DOUBLE_EQ(acc[1], 0.9);
}

TEST(RmsProp, ConstantGradientStepsApproachLearningRate) {
  std::vector<double> p{0.0}, acc{0.0};
  const std::vector<double> g{3.0};
  const RmsPropHyper h{1e-3, 0.9, 1e-12};
  double last = 0.0;
  for (int i = 0; i < 500; ++i) {
    const double before = p[0];
    rmsprop_step<double>(p, g, acc, h);
    last = before - p[0];
  }
  EXPECT_NEAR(last, 1e-3, 1e-9);
}

TEST(RmsProp, TwoHandComputedSteps) {
  std::vector<double> p{1.0}, acc{0.0};
  const RmsPropHyper h{0.1, 0.9, 1e-8};
  rmsprop_step<double>(p, std::vector<double>{2.0}, acc, h);
  // acc = 0.1 * 4 = 0.4; p = 1 - 0.1 * 2 / sqrt(0.4 + 1e-8)
  const double p1 = 1.0 - 0.2 / std::sqrt(0.4 + 1e-8);
  EXPECT_NEAR(p[0], p1, 1e-12);
  rmsprop_step<double>(p, std::vector<double>{-1.0}, acc, h);
  // acc = 0.36 + 0.1 = 0.46; p = p1 + 0.1 / sqrt(0.46 + 1e-8)
  EXPECT_NEAR(acc[0], 0.46, 1e-12);
  EXPECT_NEAR(p[0], p1 + 0.1 / std::sqrt(0.46 + 1e-8), 1e-12);
  std::vector<double> short_acc;
  EXPECT_THROW(rmsprop_step<double>(p, std::vector<double>{1.0}, short_acc, h), mhistart::ShapeMismatch);
}
