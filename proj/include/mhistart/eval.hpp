#pragma once

// Scene-wise evaluation. A scene's probability trace first reaching the
// threshold decides its outcome: in the waiting phase it is a false positive,
// in the starting or moving phase a true positive, never a false negative.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mhistart/errors.hpp"

namespace mhistart {

enum class Phase { Waiting = 0, Starting = 1, Moving = 2 };

inline std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::Waiting: return "waiting";
    case Phase::Starting: return "starting";
    case Phase::Moving: return "moving";
  }
  return "?";
}

inline Phase parse_phase(std::string_view s) {
  if (s == "waiting") return Phase::Waiting;
  if (s == "starting") return Phase::Starting;
  if (s == "moving") return Phase::Moving;
  throw FormatError("unknown phase label '" + std::string(s) + "'");
}

/// Binary training label: waiting -1, starting and moving +1.
inline int binary_label(Phase p) { return p == Phase::Waiting ? -1 : 1; }

class SceneAnnotation {
 public:
  SceneAnnotation() = default;
  SceneAnnotation(double frame_rate, std::vector<Phase> labels)
      : frame_rate_(frame_rate), labels_(std::move(labels)) {
    if (!(frame_rate_ > 0.0)) throw InvalidArgument("frame rate must be positive");
    for (std::size_t i = 1; i < labels_.size(); ++i) {
      if (labels_[i] < labels_[i - 1])
        throw InvalidArgument("phase labels must be non-decreasing at frame " +
                              std::to_string(i));
    }
    t_starting_ = labels_.size();
    t_moving_ = labels_.size();
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] != Phase::Waiting && t_starting_ == labels_.size()) t_starting_ = i;
      if (labels_[i] == Phase::Moving) {
        t_moving_ = i;
        break;
      }
    }
    if (!labels_.empty() && t_moving_ == labels_.size())
      throw InvalidArgument("scene never reaches the moving phase");
  }

  double frame_rate() const { return frame_rate_; }
  const std::vector<Phase>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t t_starting() const { return t_starting_; }  // first phase-II frame
  std::size_t t_moving() const { return t_moving_; }      // first phase-III frame
  double time_of(std::size_t frame) const { return static_cast<double>(frame) / frame_rate_; }

  /// Frames [first, size) re-indexed from zero.
  SceneAnnotation suffix(std::size_t first) const {
    return SceneAnnotation(frame_rate_,
                           std::vector<Phase>(labels_.begin() + static_cast<std::ptrdiff_t>(first),
                                              labels_.end()));
  }

 private:
  double frame_rate_ = 50.0;
  std::vector<Phase> labels_;
  std::size_t t_starting_ = 0;
  std::size_t t_moving_ = 0;
};

enum class OutcomeKind { TruePositive, FalsePositive, FalseNegative };

struct SceneOutcome {
  OutcomeKind kind = OutcomeKind::FalseNegative;
  std::optional<std::size_t> detection_frame;  // TP only
  std::optional<double> detection_delay;        // seconds, TP only
};

inline SceneOutcome classify_scene(std::span<const double> p_moving,
                                   const SceneAnnotation& ann, double threshold) {
  if (p_moving.empty()) throw EmptyScene("probability trace is empty");
  if (p_moving.size() != ann.size())
    throw DimensionMismatch("trace length " + std::to_string(p_moving.size()) +
                            " != annotation length " + std::to_string(ann.size()));
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw InvalidArgument("threshold must lie in [0,1]");
  for (std::size_t i = 0; i < p_moving.size(); ++i) {
    if (p_moving[i] >= threshold) {
      if (ann.labels()[i] == Phase::Waiting) return {OutcomeKind::FalsePositive, {}, {}};
      const double delay = ann.time_of(i) - ann.time_of(ann.t_moving());
      return {OutcomeKind::TruePositive, i, delay};
    }
  }
  return {OutcomeKind::FalseNegative, {}, {}};
}

/// Mean detection delay over true positives.
inline double mean_detection_time(std::span<const SceneOutcome> outcomes) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& o : outcomes) {
    if (o.kind == OutcomeKind::TruePositive) {
      sum += *o.detection_delay;
      ++n;
    }
  }
  if (n == 0) throw NoTruePositives("mean detection time undefined without true positives");
  return sum / static_cast<double>(n);
}

/// One scene's trace with its annotation.
struct ScoredScene {
  std::vector<double> p_moving;
  SceneAnnotation annotation;
  std::size_t first_frame = 0;  // source frame index of p_moving[0]
};

struct SweepPoint {
  double threshold = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> mean_delay;  // empty when tp == 0

  friend bool operator==(const SweepPoint&, const SweepPoint&) = default;
};

struct SweepCurve {
  std::vector<SweepPoint> points;
};

/// 0, step, 2*step, ..., 1 (step must divide 1).
inline std::vector<double> threshold_grid(double step = 0.02) {
  if (!(step > 0.0 && step <= 1.0)) throw InvalidArgument("threshold step must be in (0,1]");
  const long n = std::lround(1.0 / step);
  if (std::abs(static_cast<double>(n) * step - 1.0) > 1e-9)
    throw InvalidArgument("threshold step must divide 1");
  std::vector<double> t;
  for (long k = 0; k <= n; ++k) t.push_back(static_cast<double>(k) / static_cast<double>(n));
  return t;
}

/// Precision, recall and F1 from outcome counts. Precision and recall are 0
/// when their denominators vanish; F1 is 0 when precision + recall is 0.
inline void fill_rates(SweepPoint& pt) {
  const double tp = static_cast<double>(pt.tp);
  pt.precision = pt.tp + pt.fp > 0 ? tp / static_cast<double>(pt.tp + pt.fp) : 0.0;
  pt.recall = pt.tp + pt.fn > 0 ? tp / static_cast<double>(pt.tp + pt.fn) : 0.0;
  const double s = pt.precision + pt.recall;
  pt.f1 = s > 0.0 ? 2.0 * pt.precision * pt.recall / s : 0.0;
}

inline SweepPoint evaluate_threshold(std::span<const ScoredScene> scenes, double threshold) {
  SweepPoint pt;
  pt.threshold = threshold;
  std::vector<SceneOutcome> outcomes;
  outcomes.reserve(scenes.size());
  for (const auto& s : scenes) {
    outcomes.push_back(classify_scene(s.p_moving, s.annotation, threshold));
    switch (outcomes.back().kind) {
      case OutcomeKind::TruePositive: ++pt.tp; break;
      case OutcomeKind::FalsePositive: ++pt.fp; break;
      case OutcomeKind::FalseNegative: ++pt.fn; break;
    }
  }
  fill_rates(pt);
  if (pt.tp > 0) pt.mean_delay = mean_detection_time(outcomes);
  return pt;
}

inline SweepCurve sweep(std::span<const ScoredScene> scenes,
                        std::span<const double> thresholds) {
  if (scenes.empty()) throw EmptyScene("sweep needs at least one scene");
  SweepCurve curve;
  for (double s : thresholds) curve.points.push_back(evaluate_threshold(scenes, s));
  return curve;
}

/// Highest F1, then lowest mean delay (missing counts as +inf), then lowest
/// threshold.
inline const SweepPoint& select_operating_point(const SweepCurve& curve) {
  if (curve.points.empty()) throw InvalidArgument("empty sweep curve");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const SweepPoint* best = &curve.points.front();
  for (const auto& p : curve.points) {
    const double d = p.mean_delay.value_or(kInf);
    const double bd = best->mean_delay.value_or(kInf);
    if (p.f1 > best->f1 + 1e-12) best = &p;
    else if (std::abs(p.f1 - best->f1) <= 1e-12) {
      if (d < bd || (d == bd && p.threshold < best->threshold)) best = &p;
    }
  }
  return *best;
}

inline void write_curve_csv(std::ostream& os, const SweepCurve& curve) {
  os << "threshold,tp,fp,fn,precision,recall,f1,mean_delay_s\n";
  char buf[160];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%.2f,%zu,%zu,%zu,%.6f,%.6f,%.6f,", p.threshold,
                  p.tp, p.fp, p.fn, p.precision, p.recall, p.f1);
    os << buf;
    if (p.mean_delay) {
      std::snprintf(buf, sizeof buf, "%.6f", *p.mean_delay);
      os << buf;
    }
    os << '\n';
  }
}

inline void write_trace_csv(std::ostream& os, const ScoredScene& scene) {
  os << "frame,time_s,p_moving,phase_label\n";
  char buf[128];
  for (std::size_t i = 0; i < scene.p_moving.size(); ++i) {
    const std::size_t frame = scene.first_frame + i;
    std::snprintf(buf, sizeof buf, "%zu,%.4f,%.9g,", frame,
                  scene.annotation.time_of(frame), scene.p_moving[i]);
    os << buf << phase_name(scene.annotation.labels()[i]) << '\n';
  }
}

}  // namespace mhistart
