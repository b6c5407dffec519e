#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "../oracles.hpp"
#include "mhistart/eval.hpp"

using namespace mhistart;

namespace {

SceneAnnotation annotate(std::size_t waiting, std::size_t starting, std::size_t moving,
                         double fps = 50.0) {
  std::vector<Phase> l(waiting, Phase::Waiting);
  l.insert(l.end(), starting, Phase::Starting);
  l.insert(l.end(), moving, Phase::Moving);
  return SceneAnnotation(fps, l);
}

struct RandomScene {
  ScoredScene scored;
  std::vector<int> codes;
};

RandomScene random_scene(std::mt19937& rng) {
  std::uniform_int_distribution<std::size_t> len(5, 500);
  const std::size_t n = len(rng);
  std::uniform_int_distribution<std::size_t> cut(0, n - 1);
  std::size_t a = cut(rng), b = cut(rng);
  if (a > b) std::swap(a, b);
  a = std::max<std::size_t>(a, 1);
  b = std::max(b, a);
  RandomScene r;
  std::vector<Phase> labels;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = i < a ? 0 : i < b ? 1 : 2;
    r.codes.push_back(c);
    labels.push_back(static_cast<Phase>(c));
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Mostly low values with occasional spikes, rounded to the threshold grid
  // half the time so that exact-equality crossings are exercised.
  for (std::size_t i = 0; i < n; ++i) {
    double p = u(rng) < 0.05 ? u(rng) : 0.3 * u(rng) + (r.codes[i] == 2 ? 0.6 * u(rng) : 0.0);
    if (u(rng) < 0.5) p = std::round(p * 50.0) / 50.0;
    r.scored.p_moving.push_back(p);
  }
  std::uniform_real_distribution<double> fps(10.0, 60.0);
  r.scored.annotation = SceneAnnotation(fps(rng), labels);
  return r;
}

}  // namespace

TEST(Annotation, PhaseIndices) {
  const auto a = annotate(5, 3, 4);
  EXPECT_EQ(a.t_starting(), 5u);
  EXPECT_EQ(a.t_moving(), 8u);
  const auto s = a.suffix(4);
  EXPECT_EQ(s.t_starting(), 1u);
  EXPECT_EQ(s.t_moving(), 4u);
  const auto no_phase_two = annotate(5, 0, 4);
  EXPECT_EQ(no_phase_two.t_starting(), no_phase_two.t_moving());
}

TEST(Annotation, RejectsBadSequences) {
  EXPECT_THROW(SceneAnnotation(50.0, {Phase::Moving, Phase::Waiting}), InvalidArgument);
  EXPECT_THROW(SceneAnnotation(50.0, {Phase::Waiting, Phase::Starting}), InvalidArgument);
  EXPECT_THROW(SceneAnnotation(0.0, {Phase::Moving}), InvalidArgument);
  EXPECT_THROW(parse_phase("running"), FormatError);
}

TEST(ClassifyScene, NeverReachedIsFalseNegative) {
  const auto a = annotate(3, 2, 3);
  const std::vector<double> p(8, 0.2);
  EXPECT_EQ(classify_scene(p, a, 0.5).kind, OutcomeKind::FalseNegative);
}

TEST(ClassifyScene, FirstCrossingInWaitingIsFalsePositive) {
  const auto a = annotate(3, 2, 3);
  const std::vector<double> p{0.1, 0.9, 0.1, 0.1, 0.1, 0.9, 0.9, 0.9};
  const auto o = classify_scene(p, a, 0.5);
  EXPECT_EQ(o.kind, OutcomeKind::FalsePositive);
  EXPECT_FALSE(o.detection_frame);
  EXPECT_FALSE(o.detection_delay);
}

TEST(ClassifyScene, CrossingAtMovingOnsetHasZeroDelay) {
  const auto a = annotate(3, 2, 3);
  const std::vector<double> p{0, 0, 0, 0, 0, 0.5, 0.5, 0.5};
  const auto o = classify_scene(p, a, 0.5);
  EXPECT_EQ(o.kind, OutcomeKind::TruePositive);
  EXPECT_EQ(*o.detection_frame, 5u);
  EXPECT_EQ(*o.detection_delay, 0.0);
}

TEST(ClassifyScene, StartingPhaseGivesNegativeDelay) {
  const auto a = annotate(3, 2, 3, 25.0);
  const std::vector<double> p{0, 0, 0, 0.7, 0, 0, 0, 0};
  const auto o = classify_scene(p, a, 0.5);
  EXPECT_EQ(o.kind, OutcomeKind::TruePositive);
  EXPECT_DOUBLE_EQ(*o.detection_delay, -2.0 / 25.0);
}

TEST(ClassifyScene, Errors) {
  const auto a = annotate(3, 2, 3);
  EXPECT_THROW(classify_scene(std::vector<double>{}, a, 0.5), EmptyScene);
  EXPECT_THROW(classify_scene(std::vector<double>(4, 0.0), a, 0.5), DimensionMismatch);
  EXPECT_THROW(classify_scene(std::vector<double>(8, 0.0), a, 1.5), InvalidArgument);
}

TEST(MeanDetectionTime, Examples) {
  auto tp = [](double d) { return SceneOutcome{OutcomeKind::TruePositive, 0, d}; };
  const std::vector<SceneOutcome> two{tp(0.2), tp(0.4), {OutcomeKind::FalsePositive, {}, {}}};
  EXPECT_DOUBLE_EQ(mean_detection_time(two), 0.3);
  EXPECT_DOUBLE_EQ(mean_detection_time(std::vector{tp(-0.038)}), -0.038);
  EXPECT_EQ(mean_detection_time(std::vector{tp(0.0), tp(0.0)}), 0.0);
  const std::vector<SceneOutcome> none{{OutcomeKind::FalseNegative, {}, {}}};
  EXPECT_THROW(mean_detection_time(none), NoTruePositives);
}

TEST(ThresholdGrid, FiftyOneSteps) {
  const auto g = threshold_grid();
  ASSERT_EQ(g.size(), 51u);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_EQ(g.back(), 1.0);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i] - g[i - 1], 0.02, 1e-12);
  EXPECT_THROW(threshold_grid(0.03), InvalidArgument);
}

TEST(Sweep, HandArithmetic) {
  std::vector<ScoredScene> scenes(2);
  scenes[0] = {{0.1, 0.1, 0.9}, annotate(1, 1, 1), 0};
  scenes[1] = {{0.9, 0.1, 0.1}, annotate(1, 1, 1), 0};
  const auto pt = evaluate_threshold(scenes, 0.5);
  EXPECT_EQ(pt.tp, 1u);
  EXPECT_EQ(pt.fp, 1u);
  EXPECT_EQ(pt.fn, 0u);
  EXPECT_DOUBLE_EQ(pt.precision, 0.5);
  EXPECT_DOUBLE_EQ(pt.recall, 1.0);
  EXPECT_DOUBLE_EQ(pt.f1, 2.0 / 3.0);
}

TEST(Sweep, ThresholdZeroMakesEverySceneFalsePositive) {
  std::mt19937 rng(1);
  std::vector<ScoredScene> scenes;
  for (int i = 0; i < 50; ++i) scenes.push_back(random_scene(rng).scored);
  const auto pt = evaluate_threshold(scenes, 0.0);
  EXPECT_EQ(pt.fp, scenes.size());
  EXPECT_EQ(pt.precision, 0.0);
  EXPECT_EQ(pt.f1, 0.0);
  EXPECT_FALSE(pt.mean_delay);
}

TEST(Sweep, AllTruePositive) {
  std::vector<ScoredScene> scenes(3, ScoredScene{{0.0, 0.0, 1.0}, annotate(1, 1, 1), 0});
  const auto pt = evaluate_threshold(scenes, 0.5);
  EXPECT_EQ(pt.precision, 1.0);
  EXPECT_EQ(pt.f1, 1.0);
}

TEST(Sweep, MatchesBruteForce) {
  std::mt19937 rng(2);
  std::vector<RandomScene> scenes;
  for (int i = 0; i < 10000; ++i) scenes.push_back(random_scene(rng));
  std::vector<ScoredScene> scored;
  for (const auto& s : scenes) scored.push_back(s.scored);
  const auto grid = threshold_grid();
  const auto curve = sweep(scored, grid);
  for (std::size_t k = 0; k < grid.size(); k += 5) {
    std::size_t tp = 0, fp = 0, fn = 0;
    std::vector<double> delays;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const auto o = oracle::scan_scene(scenes[i].scored.p_moving, scenes[i].codes,
                                        scenes[i].scored.annotation.frame_rate(), grid[k]);
      const auto c = classify_scene(scenes[i].scored.p_moving, scenes[i].scored.annotation, grid[k]);
      ASSERT_EQ(static_cast<int>(c.kind), static_cast<int>(o.kind));
      ASSERT_EQ(c.detection_frame, o.frame);
      if (o.kind == oracle::Kind::TP) {
        ++tp;
        delays.push_back(*o.delay);
        ASSERT_NEAR(*c.detection_delay, *o.delay, 1e-12);
      } else if (o.kind == oracle::Kind::FP) {
        ++fp;
      } else {
        ++fn;
      }
    }
    const auto& pt = curve.points[k];
    EXPECT_EQ(pt.tp, tp);
    EXPECT_EQ(pt.fp, fp);
    EXPECT_EQ(pt.fn, fn);
    const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    EXPECT_DOUBLE_EQ(pt.precision, precision);
    EXPECT_DOUBLE_EQ(pt.recall, recall);
    if (precision + recall > 0) {
      EXPECT_DOUBLE_EQ(pt.f1, 2 * precision * recall / (precision + recall));
    }
    if (tp) {
      double sum = 0.0;
      for (double d : delays) sum += d;
      EXPECT_NEAR(*pt.mean_delay, sum / static_cast<double>(tp), 1e-12);
    } else {
      EXPECT_FALSE(pt.mean_delay);
    }
  }
}

TEST(Sweep, RaisingThresholdNeverTurnsMissIntoHit) {
  std::mt19937 rng(3);
  const auto grid = threshold_grid();
  for (int i = 0; i < 500; ++i) {
    const auto s = random_scene(rng);
    bool missed = false;
    for (double t : grid) {
      const auto o = classify_scene(s.scored.p_moving, s.scored.annotation, t);
      if (missed) {
        EXPECT_EQ(o.kind, OutcomeKind::FalseNegative);
      }
      missed = missed || o.kind == OutcomeKind::FalseNegative;
    }
  }
}

TEST(Sweep, DelayIsTranslationEquivariant) {
  // Prepending waiting frames shifts every timestamp but no delay.
  std::mt19937 rng(4);
  for (int i = 0; i < 200; ++i) {
    const auto s = random_scene(rng);
    std::vector<Phase> labels(7, Phase::Waiting);
    labels.insert(labels.end(), s.scored.annotation.labels().begin(), s.scored.annotation.labels().end());
    std::vector<double> p(7, 0.0);
    p.insert(p.end(), s.scored.p_moving.begin(), s.scored.p_moving.end());
    const SceneAnnotation shifted(s.scored.annotation.frame_rate(), labels);
    const auto a = classify_scene(s.scored.p_moving, s.scored.annotation, 0.5);
    const auto b = classify_scene(p, shifted, 0.5);
    ASSERT_EQ(a.kind, b.kind);
    if (a.detection_delay) {
      EXPECT_NEAR(*a.detection_delay, *b.detection_delay, 1e-12);
    }
  }
}

TEST(OperatingPoint, UniqueMaximum) {
  SweepCurve c;
  c.points = {{0.1, 0, 0, 0, 0, 0, 0.5, 0.1}, {0.2, 0, 0, 0, 0, 0, 0.9, 0.3}, {0.3, 0, 0, 0, 0, 0, 0.7, 0.0}};
  EXPECT_EQ(select_operating_point(c).threshold, 0.2);
}

TEST(OperatingPoint, TieOnF1PrefersLowerDelay) {
  SweepCurve c;
  c.points = {{0.4, 0, 0, 0, 0, 0, 1.0, 0.578}, {0.6, 0, 0, 0, 0, 0, 1.0, 0.565}};
  EXPECT_EQ(select_operating_point(c).threshold, 0.6);
}

TEST(OperatingPoint, FullTiePrefersSmallerThreshold) {
  SweepCurve c;
  c.points = {{0.5, 0, 0, 0, 0, 0, 0.8, 0.2}, {0.3, 0, 0, 0, 0, 0, 0.8, 0.2}, {0.7, 0, 0, 0, 0, 0, 0.8, 0.2}};
  EXPECT_EQ(select_operating_point(c).threshold, 0.3);
}

TEST(OperatingPoint, MissingDelayLosesTie) {
  SweepCurve c;
  c.points = {{0.1, 0, 0, 0, 0, 0, 0.0, std::nullopt}, {0.9, 0, 0, 0, 0, 0, 0.0, 0.4}};
  EXPECT_EQ(select_operating_point(c).threshold, 0.9);
  EXPECT_THROW(select_operating_point(SweepCurve{}), InvalidArgument);
}

TEST(Csv, CurveLeavesMissingDelayEmpty) {
  SweepCurve c;
  c.points = {{0.0, 0, 3, 0, 0, 0, 0, std::nullopt}, {0.5, 2, 1, 0, 2.0 / 3, 1, 0.8, -0.25}};
  std::ostringstream os;
  write_curve_csv(os, c);
  EXPECT_EQ(os.str(),
            "threshold,tp,fp,fn,precision,recall,f1,mean_delay_s\n"
            "0.00,0,3,0,0.000000,0.000000,0.000000,\n"
            "0.50,2,1,0,0.666667,1.000000,0.800000,-0.250000\n");
}

TEST(Csv, TraceUsesSourceFrameNumbers) {
  ScoredScene s{{0.25, 0.5}, annotate(1, 0, 1, 10.0), 19};
  std::ostringstream os;
  write_trace_csv(os, s);
  EXPECT_EQ(os.str(),
            "frame,time_s,p_moving,phase_label\n"
            "19,1.9000,0.25,waiting\n"
            "20,2.0000,0.5,moving\n");
}
