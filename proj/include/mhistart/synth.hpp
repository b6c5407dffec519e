#pragma once

// Synthetic side-view cyclist scenes: a waiting phase with positional jitter,
// a starting phase where the ground foot lifts onto the pedal while the
// rigid body stays put, and a moving phase where the whole figure translates
// and pedals. An optional pedestrian can walk past in front of or behind the
// cyclist during the waiting phase.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mhistart/errors.hpp"
#include "mhistart/eval.hpp"
#include "mhistart/image.hpp"
#include "mhistart/silhouette.hpp"

namespace mhistart::synth {

/// Class ids used in class-map mode (VOC-style numbering).
inline constexpr std::uint8_t kBackgroundClass = 0;
inline constexpr std::uint8_t kBicycleClass = 2;
inline constexpr std::uint8_t kMotorbikeClass = 14;
inline constexpr std::uint8_t kPersonClass = 15;
/// Foreground value of frames stored as binary masks.
inline constexpr std::uint8_t kMaskForeground = 255;

enum class Depth { Behind, InFront };

struct DistractorScript {
  int start_frame = 0;
  double start_x = 0;       // head x at start_frame
  double ground_y = 0;      // y of the feet
  double velocity_x = -3.0;  // px/frame
  double scale = 0.8;
  Depth depth = Depth::Behind;
};

struct SceneScript {
  std::uint64_t seed = 1;
  int duration = 120;
  int frame_width = 480;
  int frame_height = 200;
  double frame_rate = 50.0;
  int head_x = 120;  // head position at frame 0, integer pixels
  int head_y = 50;
  int jitter_amplitude = 1;     // px, bound of head-track noise and figure sway
  double sway_probability = 0.0;  // chance per frame of a one-pixel sway step
  int t_starting = 50;          // first starting-phase frame
  double limb_amplitude = 12.0; // px the ground foot travels up to the pedal
  int lift_frames = 6;          // frames the lift takes, capped by the starting phase
  int t_moving = 65;            // first moving-phase frame
  double velocity_x = 2.0;      // px/frame from t_moving on
  double velocity_y = 0.0;
  bool pedal = true;            // crank rotation while moving
  std::optional<DistractorScript> distractor;
  double flip_probability = 0.0;  // per-pixel Bernoulli segmentation noise

  void validate() const {
    if (duration <= 0) throw InvalidArgument("scene duration must be positive");
    if (!(0 < t_starting && t_starting <= t_moving && t_moving < duration))
      throw InvalidArgument("need 0 < t_starting <= t_moving < duration");
    if (!std::isfinite(velocity_x) || !std::isfinite(velocity_y))
      throw InvalidArgument("velocities must be finite");
    if (jitter_amplitude < 0 || limb_amplitude < 0)
      throw InvalidArgument("amplitudes must be non-negative");
    if (lift_frames < 1) throw InvalidArgument("lift_frames must be at least 1");
    if (!(sway_probability >= 0.0 && sway_probability <= 1.0))
      throw InvalidArgument("sway probability must lie in [0,1]");
    if (frame_width <= 0 || frame_height <= 0 || !(frame_rate > 0))
      throw InvalidArgument("invalid frame geometry");
    if (!(flip_probability >= 0.0 && flip_probability <= 1.0))
      throw InvalidArgument("flip probability must lie in [0,1]");
  }
};

/// Layer ids of the label map: 0 background, 1 cyclist, 2 distractor.
inline constexpr std::uint8_t kLayerCyclist = 1;
inline constexpr std::uint8_t kLayerDistractor = 2;

struct RenderedFrame {
  Image<std::uint8_t> layers;   // 0 / kLayerCyclist / kLayerDistractor after occlusion
  Image<std::uint8_t> classes;  // class-map rendering
  Image<std::uint8_t> rigid;    // cyclist parts that do not articulate (0/1)
};

struct SyntheticScene {
  std::vector<BinaryFrame> frames;  // values {0,1}
  std::vector<Image<std::uint8_t>> class_maps;
  std::vector<RenderedFrame> detail;
  SceneAnnotation annotation;
  std::vector<std::array<double, 2>> head_track;
  SceneScript script;
};

namespace detail {

struct Ellipse {
  double cx, cy, a, b;  // semi-axes a (along the rotation) and b
  double cos_t, sin_t;
  Ellipse(double cx_, double cy_, double a_, double b_, double angle)
      : cx(cx_), cy(cy_), a(a_), b(b_), cos_t(std::cos(angle)), sin_t(std::sin(angle)) {}
  double reach() const { return std::max(a, b); }
};

struct Ring {
  double cx, cy, outer, inner;
  double reach() const { return outer; }
};

/// Calls fn(x, y) for every pixel of a w x h frame inside the shape, whose
/// coordinates are relative to (ox, oy).
template <typename Shape, typename Fn>
void paint(const Shape& shape, double ox, double oy, int w, int h, Fn&& fn) {
  const double r = shape.reach() + 1.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(ox + shape.cx - r)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(ox + shape.cx + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(oy + shape.cy - r)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(oy + shape.cy + r)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (inside(shape, x - ox, y - oy)) fn(x, y);
}

/// Ellipse spanning two points with the given half-thickness.
inline Ellipse capsule(double x0, double y0, double x1, double y1, double half_width) {
  const double dx = x1 - x0, dy = y1 - y0;
  const double len = std::hypot(dx, dy);
  return {(x0 + x1) / 2, (y0 + y1) / 2, std::max(len / 2 + half_width * 0.6, half_width),
          half_width, std::atan2(dy, dx)};
}

inline bool inside(const Ellipse& e, double x, double y) {
  const double dx = x - e.cx, dy = y - e.cy;
  const double u = (e.cos_t * dx + e.sin_t * dy) / e.a;
  const double v = (-e.sin_t * dx + e.cos_t * dy) / e.b;
  return u * u + v * v <= 1.0;
}

inline bool inside(const Ring& r, double x, double y) {
  const double d2 = (x - r.cx) * (x - r.cx) + (y - r.cy) * (y - r.cy);
  return d2 <= r.outer * r.outer && d2 >= r.inner * r.inner;
}

/// Two-link leg; the knee bends towards +x.
inline std::array<double, 2> knee(double hx, double hy, double fx, double fy,
                                  double thigh, double shin) {
  const double dx = fx - hx, dy = fy - hy;
  const double d = std::max(std::hypot(dx, dy), 1e-9);
  const double reach = std::min(d, thigh + shin - 1e-6);
  const double a = (thigh * thigh - shin * shin + reach * reach) / (2 * reach);
  const double h = std::sqrt(std::max(0.0, thigh * thigh - a * a));
  const double ux = dx / d, uy = dy / d;
  double px = -uy, py = ux;
  if (px < 0) px = -px, py = -py;
  return {hx + a * ux + h * px, hy + a * uy + h * py};
}

struct Figure {
  std::vector<Ellipse> rigid_person;   // head, torso, arm
  std::vector<Ellipse> limbs;          // legs
  std::vector<Ring> wheels;
  std::vector<Ellipse> frame_tubes;
};

// Geometry relative to the head centre, facing +x.
inline constexpr double kCrankX = 0.0, kCrankY = 96.0, kCrankRadius = 10.0;
inline constexpr double kHipX = -14.0, kHipY = 50.0;
inline constexpr double kThigh = 30.0, kShin = 32.0;
inline constexpr double kRestAngle = -0.35;  // near pedal slightly forward-up

inline Figure cyclist_figure(double crank_angle, double ground_foot_lift, bool far_on_pedal) {
  Figure f;
  f.rigid_person = {
      {0, 0, 9, 9, 0},                 // head
      {-9, 28, 22, 9, 1.25},           // torso, leaning forward
      capsule(-2, 15, 24, 36, 3.5),    // arm to handlebar
  };
  f.wheels = {{-38, 98, 20, 16}, {38, 98, 20, 16}};
  f.frame_tubes = {
      capsule(-38, 98, kCrankX, kCrankY, 2.0),
      capsule(kCrankX, kCrankY, 24, 60, 2.0),
      capsule(-38, 98, kHipX, 56, 2.0),
      capsule(24, 40, 38, 98, 2.0),
      capsule(kHipX - 6, 56, kHipX + 6, 56, 2.0),  // saddle
  };
  auto leg = [&](double fx, double fy) {
    const auto k = knee(kHipX, kHipY, fx, fy, kThigh, kShin);
    f.limbs.push_back(capsule(kHipX, kHipY, k[0], k[1], 5.0));
    f.limbs.push_back(capsule(k[0], k[1], fx, fy, 4.0));
    f.limbs.push_back(capsule(fx - 2, fy, fx + 7, fy, 2.5));  // foot
  };
  const double nx = kCrankX + kCrankRadius * std::cos(crank_angle);
  const double ny = kCrankY + kCrankRadius * std::sin(crank_angle);
  leg(nx, ny);
  const double px = kCrankX + kCrankRadius * std::cos(crank_angle + std::numbers::pi);
  const double py = kCrankY + kCrankRadius * std::sin(crank_angle + std::numbers::pi);
  if (far_on_pedal) {
    leg(px, py);
  } else {
    leg(px, py + ground_foot_lift);
  }
  return f;
}

inline std::vector<Ellipse> pedestrian_figure(double scale, double swing) {
  const double s = scale;
  std::vector<Ellipse> e = {
      {0, 0, 8 * s, 8 * s, 0},
      {0, 34 * s, 26 * s, 9 * s, std::numbers::pi / 2},
      capsule(0, 12 * s, 10 * s * std::sin(swing), 46 * s, 3.5 * s),
  };
  e.push_back(capsule(0, 58 * s, 16 * s * std::sin(swing), 110 * s, 5 * s));
  e.push_back(capsule(0, 58 * s, -16 * s * std::sin(swing), 110 * s, 5 * s));
  return e;
}

/// splitmix64 finaliser, used to derive independent sub-seeds.
inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Renders every frame of a script. Deterministic given the script.
inline SyntheticScene render_scene(const SceneScript& script) {
  script.validate();
  using namespace detail;
  SyntheticScene scene;
  scene.script = script;
  std::mt19937_64 rng(mix(script.seed));
  auto randint = [&](int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };
  auto uniform = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

  const int w = script.frame_width, h = script.frame_height;
  std::vector<Phase> labels;
  for (int t = 0; t < script.duration; ++t) {
    labels.push_back(t < script.t_starting ? Phase::Waiting
                     : t < script.t_moving ? Phase::Starting
                                           : Phase::Moving);
  }
  scene.annotation = SceneAnnotation(script.frame_rate, labels);

  const double crank_speed = script.pedal ? std::hypot(script.velocity_x, script.velocity_y) / 20.0 : 0.0;
  int sx = 0, sy = 0;
  for (int t = 0; t < script.duration; ++t) {
    // Sway: a bounded random walk of the whole figure.
    if (script.jitter_amplitude > 0 && uniform() < script.sway_probability) {
      int& axis = (rng() & 1) ? sx : sy;
      const int step = (rng() & 1) ? 1 : -1;
      axis = std::clamp(axis + step, -script.jitter_amplitude, script.jitter_amplitude);
    }
    const int moved = std::max(0, t - script.t_moving + 1);
    const int hx = script.head_x + sx + static_cast<int>(std::lround(script.velocity_x * moved));
    const int hy = script.head_y + sy + static_cast<int>(std::lround(script.velocity_y * moved));
    // Detector noise moves the reported head, not the figure.
    const int a = script.jitter_amplitude;
    const int nx = a > 0 ? randint(-a, a) : 0;
    const int ny = a > 0 ? randint(-a, a) : 0;
    scene.head_track.push_back({static_cast<double>(hx + nx), static_cast<double>(hy + ny)});

    double lift = script.limb_amplitude;  // foot starts this far below its pedal
    if (t >= script.t_starting) {
      const double span = std::clamp(script.lift_frames, 1, std::max(1, script.t_moving - script.t_starting));
      lift = script.limb_amplitude * std::max(0.0, 1.0 - (t - script.t_starting + 1) / span);
    }
    const double crank = kRestAngle + crank_speed * moved;
    const Figure fig = cyclist_figure(crank, lift, t >= script.t_moving);

    std::vector<Ellipse> ped;
    double px = 0, py = 0;
    if (script.distractor && t >= script.distractor->start_frame) {
      const auto& d = *script.distractor;
      const int dt = t - d.start_frame;
      px = std::round(d.start_x + d.velocity_x * dt);
      py = std::round(d.ground_y - 110 * d.scale);
      ped = pedestrian_figure(d.scale, 0.5 * std::sin(0.25 * dt));
    }

    RenderedFrame rf{Image<std::uint8_t>(w, h), Image<std::uint8_t>(w, h),
                     Image<std::uint8_t>(w, h)};
    BinaryFrame mask(w, h);
    // Painted in increasing class priority: legs, frame tubes, wheels, then
    // the rigid upper body.
    auto cyclist = [&](std::uint8_t cls, bool rigid) {
      return [&rf, cls, rigid](int x, int y) {
        rf.layers(x, y) = kLayerCyclist;
        rf.classes(x, y) = cls;
        rf.rigid(x, y) = rigid ? 1 : 0;
      };
    };
    const double ox = hx, oy = hy;
    for (const auto& e : fig.limbs) paint(e, ox, oy, w, h, cyclist(kPersonClass, false));
    for (const auto& e : fig.frame_tubes) paint(e, ox, oy, w, h, cyclist(kMotorbikeClass, true));
    for (const auto& r : fig.wheels) paint(r, ox, oy, w, h, cyclist(kBicycleClass, true));
    for (const auto& e : fig.rigid_person) paint(e, ox, oy, w, h, cyclist(kPersonClass, true));
    if (!ped.empty()) {
      const bool in_front = script.distractor->depth == Depth::InFront;
      for (const auto& e : ped) {
        paint(e, px, py, w, h, [&](int x, int y) {
          if (rf.layers(x, y) == kLayerCyclist && !in_front) return;
          rf.layers(x, y) = kLayerDistractor;
          rf.classes(x, y) = kPersonClass;
          rf.rigid(x, y) = 0;
        });
      }
    }
    for (std::size_t i = 0; i < mask.size(); ++i) mask.data()[i] = rf.layers.data()[i] != 0;
    if (script.flip_probability > 0.0) {
      for (std::size_t i = 0; i < mask.size(); ++i) {
        if (uniform() < script.flip_probability) {
          mask.data()[i] ^= 1;
          rf.classes.data()[i] = mask.data()[i] ? kPersonClass : kBackgroundClass;
        }
      }
    }
    scene.frames.push_back(std::move(mask));
    scene.class_maps.push_back(rf.classes);
    scene.detail.push_back(std::move(rf));
  }
  return scene;
}

/// Options for randomised scripts.
struct ScriptOptions {
  double distractor_probability = 0.0;
  std::optional<Depth> distractor_depth;  // forces the depth when set
  int jitter_amplitude = 1;
  double sway_probability = 0.0;
  double flip_probability = 0.0;
  int min_waiting = 40;  // frames before t_starting
  int history = 20;      // MHI depth the scene must cover before phase II
};

/// Draws a random but plausible script from a seed.
inline SceneScript random_script(std::uint64_t seed, const ScriptOptions& opt = {}) {
  std::mt19937_64 rng(detail::mix(seed ^ 0x5ce4e5b9ULL));
  auto uniform = [&](double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  };
  auto randint = [&](int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };
  SceneScript s;
  s.seed = detail::mix(seed);
  s.jitter_amplitude = opt.jitter_amplitude;
  s.sway_probability = opt.sway_probability;
  s.flip_probability = opt.flip_probability;
  s.head_x = randint(110, 130);
  s.head_y = randint(44, 52);
  s.limb_amplitude = uniform(12.0, 18.0);
  s.velocity_x = uniform(1.5, 3.0);
  s.velocity_y = 0.0;

  int waiting = std::max(opt.min_waiting, opt.history + 10) + randint(0, 20);
  if (uniform(0.0, 1.0) < opt.distractor_probability) {
    DistractorScript d;
    d.depth = uniform(0.0, 1.0) < 0.75 ? Depth::Behind : Depth::InFront;
    if (opt.distractor_depth) d.depth = *opt.distractor_depth;
    d.scale = d.depth == Depth::Behind ? uniform(0.7, 0.85) : uniform(1.0, 1.1);
    d.velocity_x = (rng() & 1 ? 1.0 : -1.0) * uniform(2.5, 3.5);
    d.start_frame = randint(2, 10);
    d.start_x = s.head_x + (d.velocity_x < 0 ? 110.0 : -110.0);
    d.ground_y = s.head_y + (d.depth == Depth::Behind ? uniform(105.0, 112.0) : uniform(122.0, 128.0));
    const int crossing = static_cast<int>(std::ceil(220.0 / std::abs(d.velocity_x)));
    waiting = std::max(waiting, d.start_frame + crossing + randint(5, 15));
    s.distractor = d;
  }
  s.t_starting = waiting;
  s.t_moving = s.t_starting + randint(8, 20);
  s.duration = s.t_moving + randint(30, 45);
  const double travel = s.velocity_x * (s.duration - s.t_moving);
  s.frame_width = static_cast<int>(std::ceil(s.head_x + travel + 100));
  return s;
}

struct DatasetSplit {
  std::vector<std::size_t> train, val, test;
};

/// Largest-remainder split counts for n items and ratios (summing to 1).
inline std::array<std::size_t, 3> split_counts(std::size_t n, std::array<double, 3> ratios) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("split ratios must sum to 1");
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    if (ratios[i] < 0) throw InvalidArgument("split ratios must be non-negative");
    const double exact = ratios[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  for (std::size_t r = assigned; r < n; ++r) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (frac[i] > frac[best] + 1e-12) best = i;
    ++counts[best];
    frac[best] = -1.0;
  }
  return counts;
}

/// Scene-level split of indices 0..n-1, shuffled by seed.
inline DatasetSplit make_split(std::size_t n, std::uint64_t seed,
                               std::array<double, 3> ratios = {0.6, 0.2, 0.2}) {
  const auto counts = split_counts(n, ratios);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(detail::mix(seed ^ 0x9b1ULL));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  DatasetSplit s;
  std::size_t k = 0;
  for (std::size_t i = 0; i < counts[0]; ++i) s.train.push_back(order[k++]);
  for (std::size_t i = 0; i < counts[1]; ++i) s.val.push_back(order[k++]);
  for (std::size_t i = 0; i < counts[2]; ++i) s.test.push_back(order[k++]);
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

/// Per-scene seed derived from the dataset seed.
inline std::uint64_t scene_seed(std::uint64_t dataset_seed, std::size_t index) {
  return detail::mix(dataset_seed * 0x100000001b3ULL + index);
}

/// Scripts plus split for a dataset of n scenes.
struct DatasetPlan {
  std::vector<SceneScript> scripts;
  DatasetSplit split;
};

inline DatasetPlan make_dataset(std::size_t n_scenes, std::uint64_t seed,
                                const ScriptOptions& opt = {},
                                std::array<double, 3> ratios = {0.6, 0.2, 0.2}) {
  DatasetPlan plan;
  for (std::size_t i = 0; i < n_scenes; ++i)
    plan.scripts.push_back(random_script(scene_seed(seed, i), opt));
  plan.split = make_split(n_scenes, seed, ratios);
  return plan;
}

/// Centroid of the non-zero pixels of a mask; nullopt when empty.
inline std::optional<std::array<double, 2>> centroid(const Image<std::uint8_t>& mask) {
  double sx = 0, sy = 0, n = 0;
  for (std::size_t y = 0; y < mask.height(); ++y)
    for (std::size_t x = 0; x < mask.width(); ++x)
      if (mask(x, y)) sx += static_cast<double>(x), sy += static_cast<double>(y), n += 1;
  if (n == 0) return std::nullopt;
  return std::array<double, 2>{sx / n, sy / n};
}

}  // namespace mhistart::synth
