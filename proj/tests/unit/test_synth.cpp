#include <gtest/gtest.h>

#include <set>

#include "mhistart/synth.hpp"

using namespace mhistart;
using namespace mhistart::synth;

namespace {

SceneScript still_script() {
  SceneScript s;
  s.duration = 60;
  s.t_starting = 30;
  s.t_moving = 40;
  s.jitter_amplitude = 0;
  s.limb_amplitude = 0;
  s.velocity_x = 0;
  s.velocity_y = 0;
  return s;
}

std::array<double, 2> rigid_centroid(const RenderedFrame& f) { return *centroid(f.rigid); }

}  // namespace

TEST(SceneScript, Validation) {
  auto s = still_script();
  s.t_starting = 0;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = still_script();
  s.t_moving = s.duration;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = still_script();
  s.flip_probability = 1.5;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = still_script();
  s.jitter_amplitude = -1;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = still_script();
  s.lift_frames = 0;
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(RenderScene, StaticSceneHasIdenticalFrames) {
  const auto scene = render_scene(still_script());
  ASSERT_EQ(scene.frames.size(), 60u);
  for (const auto& f : scene.frames) EXPECT_EQ(f, scene.frames.front());
  for (const auto& h : scene.head_track) EXPECT_EQ(h, scene.head_track.front());
}

TEST(RenderScene, Deterministic) {
  auto s = still_script();
  s.jitter_amplitude = 2;
  s.sway_probability = 0.3;
  s.limb_amplitude = 12;
  s.velocity_x = 2;
  s.flip_probability = 0.01;
  const auto a = render_scene(s);
  const auto b = render_scene(s);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.class_maps, b.class_maps);
  EXPECT_EQ(a.head_track, b.head_track);
  s.seed = 2;
  EXPECT_NE(render_scene(s).frames, a.frames);
}

TEST(RenderScene, PhaseLabels) {
  const auto scene = render_scene(still_script());
  EXPECT_EQ(scene.annotation.t_starting(), 30u);
  EXPECT_EQ(scene.annotation.t_moving(), 40u);
  EXPECT_EQ(scene.annotation.frame_rate(), 50.0);
}

TEST(RenderScene, MovingPhaseTranslatesTwoPixelsPerFrame) {
  auto s = still_script();
  s.velocity_x = 2;
  s.limb_amplitude = 10;
  const auto scene = render_scene(s);
  for (int t = s.t_moving; t < s.duration; ++t) {
    const auto a = rigid_centroid(scene.detail[static_cast<std::size_t>(t - 1)]);
    const auto b = rigid_centroid(scene.detail[static_cast<std::size_t>(t)]);
    EXPECT_DOUBLE_EQ(b[0] - a[0], 2.0) << t;
    EXPECT_DOUBLE_EQ(b[1], a[1]);
    EXPECT_DOUBLE_EQ(scene.head_track[static_cast<std::size_t>(t)][0] -
                         scene.head_track[static_cast<std::size_t>(t - 1)][0], 2.0);
  }
}

TEST(RenderScene, NoDisplacementBeforeMoving) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto rest = random_script(seed);
    rest.jitter_amplitude = 0;
    const auto c_rest = rigid_centroid(render_scene(rest).detail[0]);
    for (double sway : {0.0, 0.5}) {
      auto script = rest;
      script.jitter_amplitude = 2;
      script.sway_probability = sway;
      const auto scene = render_scene(script);
      const double limit = sway > 0 ? script.jitter_amplitude : 0.0;
      for (int t = 0; t < script.t_moving; ++t) {
        const auto c = rigid_centroid(scene.detail[static_cast<std::size_t>(t)]);
        EXPECT_LE(std::abs(c[0] - c_rest[0]), limit + 1e-9);
        EXPECT_LE(std::abs(c[1] - c_rest[1]), limit + 1e-9);
      }
    }
  }
}

TEST(RenderScene, HeadNoiseIsBounded) {
  auto s = still_script();
  s.jitter_amplitude = 1;
  const auto scene = render_scene(s);
  std::set<double> xs;
  for (const auto& h : scene.head_track) {
    EXPECT_LE(std::abs(h[0] - s.head_x), 1.0);
    EXPECT_LE(std::abs(h[1] - s.head_y), 1.0);
    xs.insert(h[0]);
  }
  EXPECT_GT(xs.size(), 1u);
  // The figure itself stays put.
  for (const auto& f : scene.frames) EXPECT_EQ(f, scene.frames.front());
}

TEST(RenderScene, StartingPhaseMovesOnlyLimbs) {
  auto s = still_script();
  s.limb_amplitude = 12;
  const auto scene = render_scene(s);
  const auto waiting = scene.frames[static_cast<std::size_t>(s.t_starting - 1)];
  bool changed = false;
  for (int t = s.t_starting; t < s.t_moving; ++t) {
    const auto& d = scene.detail[static_cast<std::size_t>(t)];
    EXPECT_EQ(d.rigid, scene.detail[0].rigid);
    changed = changed || scene.frames[static_cast<std::size_t>(t)] != waiting;
  }
  EXPECT_TRUE(changed);
  for (int t = 1; t < s.t_starting; ++t)
    EXPECT_EQ(scene.frames[static_cast<std::size_t>(t)], scene.frames[0]);
}

TEST(RenderScene, ClassMapBinarisesToMask) {
  const auto scene = render_scene(random_script(3));
  const ClassSet fg{kPersonClass, kBicycleClass, kMotorbikeClass};
  for (std::size_t t = 0; t < scene.frames.size(); t += 7) {
    for (auto v : scene.class_maps[t].data())
      EXPECT_TRUE(v == kBackgroundClass || v == kPersonClass || v == kBicycleClass || v == kMotorbikeClass);
    EXPECT_EQ(binarize(scene.class_maps[t], fg), scene.frames[t]);
  }
}

TEST(RenderScene, FullFlipInvertsMask) {
  auto s = still_script();
  const auto clean = render_scene(s);
  s.flip_probability = 1.0;
  const auto flipped = render_scene(s);
  for (std::size_t i = 0; i < clean.frames[0].size(); ++i)
    EXPECT_EQ(flipped.frames[0].data()[i], 1 - clean.frames[0].data()[i]);
}

TEST(RenderScene, DistractorOcclusionFollowsDepth) {
  for (Depth depth : {Depth::Behind, Depth::InFront}) {
    auto s = still_script();
    s.duration = 90;
    s.t_starting = 70;
    s.t_moving = 80;
    DistractorScript d;
    d.depth = depth;
    d.start_frame = 0;
    d.start_x = s.head_x - 100;
    d.velocity_x = 3;
    d.scale = depth == Depth::Behind ? 0.8 : 1.05;
    d.ground_y = s.head_y + 108;
    s.distractor = d;
    const auto with = render_scene(s);
    auto alone_script = s;
    alone_script.distractor.reset();
    const auto alone = render_scene(alone_script);
    std::size_t overlap = 0;
    for (int t = 0; t < s.t_starting; ++t) {
      const auto& layers = with.detail[static_cast<std::size_t>(t)].layers;
      const auto& cyclist = alone.detail[static_cast<std::size_t>(t)].layers;
      const int dt = t - d.start_frame;
      const double px = std::round(d.start_x + d.velocity_x * dt);
      const double py = std::round(d.ground_y - 110 * d.scale);
      Image<std::uint8_t> ped(layers.width(), layers.height());
      for (const auto& e : detail::pedestrian_figure(d.scale, 0.5 * std::sin(0.25 * dt)))
        detail::paint(e, px, py, static_cast<int>(ped.width()), static_cast<int>(ped.height()),
                      [&](int x, int y) { ped(x, y) = 1; });
      for (std::size_t i = 0; i < ped.size(); ++i) {
        const bool on_cyclist = cyclist.data()[i] == kLayerCyclist;
        const bool on_ped = ped.data()[i] == 1;
        std::uint8_t expected = on_cyclist ? kLayerCyclist : 0;
        if (on_ped && (!on_cyclist || depth == Depth::InFront)) expected = kLayerDistractor;
        ASSERT_EQ(layers.data()[i], expected) << "frame " << t << " pixel " << i;
        overlap += on_cyclist && on_ped;
      }
    }
    EXPECT_GT(overlap, 0u);
  }
}

TEST(RandomScript, PlausibleAndValid) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = random_script(seed, {.distractor_probability = 0.5, .distractor_depth = std::nullopt});
    EXPECT_NO_THROW(s.validate());
    EXPECT_GE(s.t_starting, 30);
    EXPECT_GT(s.t_moving, s.t_starting);
    EXPECT_GT(s.velocity_x, 0.0);
    if (s.distractor) {
      EXPECT_GT(s.t_starting, s.distractor->start_frame);
    }
  }
}

TEST(Split, LargestRemainderCounts) {
  EXPECT_EQ(split_counts(394, {0.6, 0.2, 0.2}), (std::array<std::size_t, 3>{236, 79, 79}));
  EXPECT_EQ(split_counts(100, {0.6, 0.2, 0.2}), (std::array<std::size_t, 3>{60, 20, 20}));
  EXPECT_EQ(split_counts(10, {0.6, 0.2, 0.2}), (std::array<std::size_t, 3>{6, 2, 2}));
  EXPECT_EQ(split_counts(1, {0.6, 0.2, 0.2}), (std::array<std::size_t, 3>{1, 0, 0}));
  EXPECT_THROW(split_counts(10, {0.5, 0.2, 0.2}), InvalidArgument);
}

TEST(Split, PartitionsAllScenes) {
  const auto s = make_split(37, 5);
  std::set<std::size_t> all;
  for (const auto* v : {&s.train, &s.val, &s.test})
    for (auto i : *v) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 37u);
  EXPECT_EQ(*all.rbegin(), 36u);
  EXPECT_EQ(make_split(37, 5).train, s.train);
  EXPECT_NE(make_split(37, 6).train, s.train);
}

TEST(Centroid, EmptyAndSimple) {
  Image<std::uint8_t> m(4, 4);
  EXPECT_FALSE(centroid(m));
  m(1, 1) = 1;
  m(3, 1) = 1;
  EXPECT_EQ(*centroid(m), (std::array<double, 2>{2.0, 1.0}));
}
