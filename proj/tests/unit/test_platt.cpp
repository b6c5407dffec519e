#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mhistart/platt.hpp"

using namespace mhistart;

namespace {

struct Sample {
  std::vector<double> f;
  std::vector<int> y;
};

Sample overlapping(std::size_t n, std::mt19937& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Sample s;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = i % 3 == 0 ? 1 : -1;
    s.f.push_back(g(rng) + 0.8 * y);
    s.y.push_back(y);
  }
  return s;
}

}  // namespace

TEST(Platt, SeparatedDecisionsKeepOrder) {
  const std::vector<double> f{-1.0, -1.0, 1.0, 1.0};
  const std::vector<int> y{-1, -1, 1, 1};
  const auto cal = fit_platt(f, y);
  EXPECT_LT(cal.a, 0.0);
  EXPECT_GT(cal.p_moving(0.5), 0.5);
  EXPECT_LT(cal.p_moving(-0.5), 0.5);
}

TEST(Platt, RandomLabelsGivePrior) {
  std::mt19937 rng(1);
  std::normal_distribution<double> g;
  std::bernoulli_distribution coin(0.3);
  std::vector<double> f;
  std::vector<int> y;
  double pos = 0;
  for (int i = 0; i < 10000; ++i) {
    f.push_back(g(rng));
    y.push_back(coin(rng) ? 1 : -1);
    pos += y.back() == 1;
  }
  const auto cal = fit_platt(f, y);
  const double neg = 10000 - pos;
  const double prior = (pos * (pos + 1) / (pos + 2) + neg / (neg + 2)) / 10000.0;
  EXPECT_LT(std::abs(cal.a), 0.1);
  EXPECT_NEAR(cal.p_moving(0.0), prior, 0.02);
}

TEST(Platt, ScaleReparameterisation) {
  std::mt19937 rng(2);
  const auto s = overlapping(500, rng);
  const auto cal = fit_platt(s.f, s.y);
  std::vector<double> scaled;
  for (double v : s.f) scaled.push_back(10.0 * v);
  const auto cal10 = fit_platt(scaled, s.y);
  EXPECT_NEAR(cal10.a, cal.a / 10.0, 1e-6 * std::abs(cal.a));
  for (double v : s.f) EXPECT_NEAR(cal10.p_moving(10.0 * v), cal.p_moving(v), 1e-6);
}

TEST(Platt, AffineInvariance) {
  std::mt19937 rng(3);
  const auto s = overlapping(400, rng);
  const auto cal = fit_platt(s.f, s.y);
  for (auto [scale, shift] : {std::pair{3.0, 2.0}, std::pair{0.25, -7.0}, std::pair{40.0, 0.5}}) {
    std::vector<double> t;
    for (double v : s.f) t.push_back(scale * v + shift);
    const auto ct = fit_platt(t, s.y);
    for (double v : s.f) EXPECT_NEAR(ct.p_moving(scale * v + shift), cal.p_moving(v), 1e-6);
  }
}

TEST(Platt, MonotoneInDecision) {
  std::mt19937 rng(4);
  const auto s = overlapping(300, rng);
  const auto cal = fit_platt(s.f, s.y);
  double prev = 0.0;
  for (double v = -50.0; v <= 50.0; v += 0.01) {
    const double p = cal.p_moving(v);
    EXPECT_GE(p, prev);
    prev = p;
  }
}

TEST(Platt, Errors) {
  const std::vector<double> f{0.1, 0.2};
  EXPECT_THROW(fit_platt(f, std::vector<int>{1, 1}), DegenerateData);
  EXPECT_THROW(fit_platt(f, std::vector<int>{1}), DimensionMismatch);
  EXPECT_THROW(fit_platt(f, std::vector<int>{1, 2}), InvalidArgument);
  std::mt19937 rng(5);
  const auto s = overlapping(200, rng);
  PlattOptions opt;
  opt.max_iterations = 1;
  EXPECT_THROW(fit_platt(s.f, s.y, opt), NonConvergence);
}

TEST(PredictProba, Midpoint) {
  PlattCalibration cal;
  cal.a = -2.0;
  cal.b = 1.0;
  const auto p = cal.probabilities(0.5);
  EXPECT_EQ(p.p_moving, 0.5);
  EXPECT_EQ(p.p_waiting, 0.5);
}

TEST(PredictProba, Saturation) {
  PlattCalibration cal;
  cal.a = -1.0;
  EXPECT_EQ(cal.p_moving(1e4), 1.0);
  EXPECT_EQ(cal.p_moving(-1e4), 0.0);
}

TEST(PredictProba, ComplementSumsToOne) {
  std::mt19937 rng(6);
  std::normal_distribution<double> g(0.0, 5.0);
  PlattCalibration cal;
  cal.a = -1.3;
  cal.b = 0.2;
  for (int i = 0; i < 10000; ++i) {
    const auto p = cal.probabilities(g(rng));
    EXPECT_EQ(p.p_waiting + p.p_moving, 1.0);
  }
}

TEST(PredictProba, UsesModelDecision) {
  LinearSvmModel m;
  m.weights = {1.0, -1.0};
  m.bias = 0.5;
  PlattCalibration cal;
  cal.a = -1.0;
  const std::vector<double> x{2.0, 1.0};
  EXPECT_DOUBLE_EQ(predict_proba(m, cal, x).p_moving, cal.p_moving(1.5));
  EXPECT_THROW(predict_proba(m, cal, std::vector<double>{1.0}), DimensionMismatch);
}
