#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "mhistart/mchog.hpp"

using namespace mhistart;

namespace {

Image<double> random_image(std::size_t w, std::size_t h, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image<double> img(w, h);
  for (auto& v : img.data()) v = u(rng);
  return img;
}

GradientField single_vote(double orientation, double magnitude) {
  GradientField g{Image<double>(8, 8), Image<double>(8, 8)};
  g.magnitude(3, 2) = magnitude;
  g.orientation(3, 2) = orientation;
  return g;
}

double circular_distance(double a, double b, double range) {
  const double d = std::fmod(std::abs(a - b), range);
  return std::min(d, range - d);
}

}  // namespace

TEST(DescriptorLength, TableRows) {
  EXPECT_EQ(descriptor_length({32, 8, 18, 128, 96}), 864u);
  EXPECT_EQ(descriptor_length({8, 8, 12, 128, 96}), 2304u);
  EXPECT_EQ(descriptor_length({128, 128, 2, 128, 128}), 2u);
}

TEST(MchogParams, RejectsBadConfig) {
  EXPECT_THROW((MchogParams{24, 8, 18, 128, 96}).validate(), DimensionMismatch);
  EXPECT_THROW((MchogParams{32, 8, 1, 128, 96}).validate(), InvalidArgument);
  EXPECT_THROW((MchogParams{0, 8, 18, 128, 96}).validate(), InvalidArgument);
}

TEST(Gradients, ConstantImageIsFlat) {
  Image<double> img(9, 7, 0.37);
  const auto g = gradients(img);
  for (double m : g.magnitude.data()) EXPECT_EQ(m, 0.0);
}

TEST(Gradients, VerticalStepEdge) {
  // 4x4, columns 0-1 are 0 and columns 2-3 are 1.
  Image<double> img(4, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 2; x < 4; ++x) img(x, y) = 1.0;
  const auto g = gradients(img);
  for (std::size_t y = 0; y < 4; ++y) {
    EXPECT_EQ(g.magnitude(0, y), 0.0);
    EXPECT_EQ(g.magnitude(1, y), 1.0);
    EXPECT_EQ(g.magnitude(2, y), 1.0);
    EXPECT_EQ(g.magnitude(3, y), 0.0);
    EXPECT_EQ(g.orientation(1, y), 0.0);
    EXPECT_EQ(g.orientation(2, y), 0.0);
  }
}

TEST(Gradients, TransposeSwapsOrientation) {
  std::mt19937 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto img = random_image(11, 7, rng);
    Image<double> t(7, 11);
    for (std::size_t y = 0; y < 7; ++y)
      for (std::size_t x = 0; x < 11; ++x) t(y, x) = img(x, y);
    const auto g = gradients(img);
    const auto gt = gradients(t);
    for (std::size_t y = 0; y < 7; ++y)
      for (std::size_t x = 0; x < 11; ++x) {
        EXPECT_DOUBLE_EQ(gt.magnitude(y, x), g.magnitude(x, y));
        if (g.magnitude(x, y) > 1e-12) {
          EXPECT_LT(circular_distance(gt.orientation(y, x), 90.0 - g.orientation(x, y), 180.0), 1e-9);
        }
      }
  }
}

TEST(Gradients, OrientationRange) {
  std::mt19937 rng(5);
  const auto img = random_image(16, 16, rng);
  const auto unsigned_field = gradients(img);
  for (double o : unsigned_field.orientation.data()) {
    EXPECT_GE(o, 0.0);
    EXPECT_LT(o, 180.0);
  }
  const auto signed_field = gradients(img, true);
  for (double o : signed_field.orientation.data()) {
    EXPECT_GE(o, 0.0);
    EXPECT_LT(o, 360.0);
  }
}

TEST(CellHistograms, ZeroMagnitude) {
  GradientField g{Image<double>(16, 16), Image<double>(16, 16, 45.0)};
  for (double v : cell_histograms(g, 8, 8, 9, 180.0)) EXPECT_EQ(v, 0.0);
}

TEST(CellHistograms, VoteAtBinCentre) {
  // 9 bins over 180 degrees: bin k is centred at 10 + 20k.
  const auto d = cell_histograms(single_vote(70.0, 1.0), 4, 4, 9, 180.0);
  ASSERT_EQ(d.size(), 4u * 9u);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d[i], i == 3 ? 1.0 : 0.0) << i;
}

TEST(CellHistograms, VoteMidwaySplitsEvenly) {
  const auto d = cell_histograms(single_vote(80.0, 1.0), 4, 4, 9, 180.0);
  EXPECT_DOUBLE_EQ(d[3], 0.5);
  EXPECT_DOUBLE_EQ(d[4], 0.5);
  EXPECT_DOUBLE_EQ(std::accumulate(d.begin(), d.end(), 0.0), 1.0);
}

TEST(CellHistograms, VoteWrapsAround) {
  // 175 degrees lies between the last centre (170) and the first (10 + 180).
  const auto d = cell_histograms(single_vote(175.0, 2.0), 4, 4, 9, 180.0);
  EXPECT_DOUBLE_EQ(d[8], 1.5);
  EXPECT_DOUBLE_EQ(d[0], 0.5);
}

TEST(CellHistograms, RejectsIndivisible) {
  GradientField g{Image<double>(10, 8), Image<double>(10, 8)};
  EXPECT_THROW(cell_histograms(g, 4, 4, 9, 180.0), DimensionMismatch);
}

TEST(Mchog, VoteConservation) {
  std::mt19937 rng(11);
  const MchogParams p;
  for (int rep = 0; rep < 20; ++rep) {
    const auto img = random_image(128, 96, rng);
    const auto g = gradients(img);
    const double total = std::accumulate(g.magnitude.data().begin(), g.magnitude.data().end(), 0.0);
    const auto d = mchog_descriptor(img, p);
    const double sum = std::accumulate(d.begin(), d.end(), 0.0);
    EXPECT_NEAR(sum, total, 1e-9 * total);
  }
}

TEST(Mchog, TranslationByOneCellPermutesCells) {
  std::mt19937 rng(13);
  const MchogParams p;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image<double> a(128, 96), b(128, 96);
  for (std::size_t y = 10; y < 80; ++y)
    for (std::size_t x = 34; x < 62; ++x) {
      a(x, y) = u(rng);
      b(x + 32, y) = a(x, y);
    }
  const auto da = mchog_descriptor(a, p);
  const auto db = mchog_descriptor(b, p);
  const int bins = p.n_bins, cx = p.cells_x();
  for (int row = 0; row < p.cells_y(); ++row)
    for (int col = 0; col < cx; ++col)
      for (int k = 0; k < bins; ++k) {
        const double expected = col == 0 ? 0.0 : da[((row * cx) + col - 1) * bins + k];
        EXPECT_EQ(db[((row * cx) + col) * bins + k], expected);
      }
}

TEST(Mchog, LinearInIntensity) {
  std::mt19937 rng(17);
  const MchogParams p;
  const auto img = random_image(128, 96, rng);
  const auto d = mchog_descriptor(img, p);
  for (double alpha : {0.5, 2.0, 4.0}) {
    Image<double> s = img;
    for (auto& v : s.data()) v *= alpha;
    const auto ds = mchog_descriptor(s, p);
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(ds[i], alpha * d[i]);
  }
  Image<double> s = img;
  for (auto& v : s.data()) v *= 3.0;
  const auto ds = mchog_descriptor(s, p);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(ds[i], 3.0 * d[i], 1e-12 * (1.0 + d[i]));
}

TEST(Mchog, NoNormalisationAcrossCells) {
  std::mt19937 rng(19);
  const auto img = random_image(16, 8, rng);
  const auto g = gradients(img);
  const auto whole = cell_histograms(g, 8, 8, 9, 180.0);
  std::vector<double> joined;
  for (std::size_t x0 : {0u, 8u}) {
    GradientField half{sub_image(g.magnitude, x0, 0, 8, 8), sub_image(g.orientation, x0, 0, 8, 8)};
    const auto d = cell_histograms(half, 8, 8, 9, 180.0);
    joined.insert(joined.end(), d.begin(), d.end());
  }
  EXPECT_EQ(whole, joined);

  // Amplifying the votes of one cell leaves the other cell untouched.
  GradientField loud = g;
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 8; x < 16; ++x) loud.magnitude(x, y) *= 1000.0;
  const auto dl = cell_histograms(loud, 8, 8, 9, 180.0);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(dl[i], whole[i]);
}

TEST(Mchog, SizeMismatch) {
  EXPECT_THROW(mchog_descriptor(Image<double>(64, 96), MchogParams{}), DimensionMismatch);
}

TEST(Mchog, FromMhiResizes) {
  MotionHistoryImage mhi;
  mhi.history = 20;
  mhi.values = Image<float>(160, 192, 0.0f);
  for (std::size_t y = 50; y < 120; ++y)
    for (std::size_t x = 40; x < 100; ++x) mhi.values(x, y) = 1.0f;
  const auto d = mchog_from_mhi(mhi, MchogParams{});
  EXPECT_EQ(d.size(), 864u);
  EXPECT_GT(std::accumulate(d.begin(), d.end(), 0.0), 0.0);
}
