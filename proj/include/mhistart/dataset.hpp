#pragma once

// On-disk scenes: one directory per scene holding frame_00000.pgm, ... and
// meta.json; a dataset directory adds manifest.json listing the scenes and
// their split.

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mhistart/errors.hpp"
#include "mhistart/eval.hpp"
#include "mhistart/image.hpp"
#include "mhistart/io.hpp"
#include "mhistart/silhouette.hpp"
#include "mhistart/synth.hpp"

namespace mhistart {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline std::string frame_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05zu.pgm", index);
  return buf;
}

struct SceneMeta {
  double frame_rate = 50.0;
  std::size_t width = 0, height = 0;
  std::vector<std::array<double, 2>> head;
  std::vector<Phase> phases;
  std::vector<int> foreground_classes;
  json extra = json::object();  // free-form provenance (e.g. the synth script)
};

inline json meta_to_json(const SceneMeta& m) {
  json j;
  j["frame_rate"] = m.frame_rate;
  j["width"] = m.width;
  j["height"] = m.height;
  j["n_frames"] = m.phases.size();
  j["frame_pattern"] = "frame_%05d.pgm";
  j["head"] = json::array();
  for (const auto& h : m.head) j["head"].push_back({h[0], h[1]});
  j["phases"] = json::array();
  for (Phase p : m.phases) j["phases"].push_back(std::string(phase_name(p)));
  j["foreground_classes"] = m.foreground_classes;
  if (!m.extra.empty()) j["extra"] = m.extra;
  return j;
}

inline SceneMeta meta_from_json(const json& j, const std::string& source) {
  try {
    SceneMeta m;
    m.frame_rate = j.at("frame_rate").get<double>();
    m.width = j.at("width").get<std::size_t>();
    m.height = j.at("height").get<std::size_t>();
    for (const auto& h : j.at("head")) {
      if (h.size() != 2) throw FormatError(source + ": head entries must be [x, y]");
      m.head.push_back({h[0].get<double>(), h[1].get<double>()});
    }
    for (const auto& p : j.at("phases")) m.phases.push_back(parse_phase(p.get<std::string>()));
    m.foreground_classes = j.at("foreground_classes").get<std::vector<int>>();
    if (j.contains("extra")) m.extra = j["extra"];
    if (m.head.size() != m.phases.size())
      throw FormatError(source + ": head track and phase labels differ in length");
    if (j.contains("n_frames") && j["n_frames"].get<std::size_t>() != m.phases.size())
      throw FormatError(source + ": n_frames disagrees with the phase labels");
    return m;
  } catch (const json::exception& e) {
    throw FormatError(source + ": " + e.what());
  }
}

/// A scene as consumed by the pipeline: binarized frames plus labels.
struct LoadedScene {
  std::string name;
  std::vector<BinaryFrame> frames;
  std::vector<std::array<double, 2>> head;
  SceneAnnotation annotation;
};

inline void write_scene(const fs::path& dir, const std::vector<Image<std::uint8_t>>& frames,
                        const SceneMeta& meta) {
  if (frames.size() != meta.phases.size())
    throw DimensionMismatch("frame count differs from phase label count");
  fs::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) write_pgm(dir / frame_filename(i), frames[i]);
  io::write_file_atomic(dir / "meta.json", meta_to_json(meta).dump(1) + "\n");
}

inline LoadedScene read_scene(const fs::path& dir) {
  const auto meta_path = dir / "meta.json";
  json j;
  try {
    j = json::parse(io::read_file(meta_path));
  } catch (const json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }
  const SceneMeta meta = meta_from_json(j, meta_path.string());
  const ClassSet fg = ClassSet::from(meta.foreground_classes);
  LoadedScene s;
  s.name = dir.filename().string();
  s.head = meta.head;
  s.annotation = SceneAnnotation(meta.frame_rate, meta.phases);
  for (std::size_t i = 0; i < meta.phases.size(); ++i) {
    const auto path = dir / frame_filename(i);
    auto img = read_pgm(path);
    if (img.width() != meta.width || img.height() != meta.height)
      throw FormatError(path.string() + ": frame size differs from meta.json");
    s.frames.push_back(binarize(img, fg));
  }
  return s;
}

enum class RenderMode { Binary, ClassMap };

inline json script_to_json(const synth::SceneScript& s) {
  json j = {{"seed", s.seed},
            {"duration", s.duration},
            {"frame_width", s.frame_width},
            {"frame_height", s.frame_height},
            {"frame_rate", s.frame_rate},
            {"head", {s.head_x, s.head_y}},
            {"jitter_amplitude", s.jitter_amplitude},
            {"sway_probability", s.sway_probability},
            {"t_starting", s.t_starting},
            {"limb_amplitude", s.limb_amplitude},
            {"lift_frames", s.lift_frames},
            {"t_moving", s.t_moving},
            {"velocity", {s.velocity_x, s.velocity_y}},
            {"pedal", s.pedal},
            {"flip_probability", s.flip_probability}};
  if (s.distractor) {
    const auto& d = *s.distractor;
    j["distractor"] = {{"start_frame", d.start_frame},
                       {"start_x", d.start_x},
                       {"ground_y", d.ground_y},
                       {"velocity_x", d.velocity_x},
                       {"scale", d.scale},
                       {"depth", d.depth == synth::Depth::Behind ? "behind" : "in_front"}};
  }
  return j;
}

/// Renders a script and writes it as a scene directory.
inline void write_synthetic_scene(const fs::path& dir, const synth::SyntheticScene& scene,
                                  RenderMode mode) {
  SceneMeta meta;
  meta.frame_rate = scene.script.frame_rate;
  meta.width = static_cast<std::size_t>(scene.script.frame_width);
  meta.height = static_cast<std::size_t>(scene.script.frame_height);
  meta.head = scene.head_track;
  meta.phases = scene.annotation.labels();
  meta.extra = {{"script", script_to_json(scene.script)}};
  std::vector<Image<std::uint8_t>> frames;
  if (mode == RenderMode::Binary) {
    meta.foreground_classes = {synth::kMaskForeground};
    for (const auto& f : scene.frames) {
      Image<std::uint8_t> out(f.width(), f.height());
      for (std::size_t i = 0; i < f.size(); ++i)
        out.data()[i] = f.data()[i] ? synth::kMaskForeground : 0;
      frames.push_back(std::move(out));
    }
  } else {
    meta.foreground_classes = {synth::kPersonClass, synth::kBicycleClass, synth::kMotorbikeClass};
    frames = scene.class_maps;
  }
  write_scene(dir, frames, meta);
}

struct Manifest {
  std::uint64_t seed = 0;
  std::vector<std::string> scenes;
  std::vector<std::string> train, val, test;
  json config = json::object();
};

inline void write_manifest(const fs::path& dataset_dir, const Manifest& m) {
  json j = {{"seed", m.seed}, {"scenes", m.scenes},
            {"splits", {{"train", m.train}, {"val", m.val}, {"test", m.test}}},
            {"config", m.config}};
  io::write_file_atomic(dataset_dir / "manifest.json", j.dump(1) + "\n");
}

inline Manifest read_manifest(const fs::path& dataset_dir) {
  const auto path = dataset_dir / "manifest.json";
  try {
    const json j = json::parse(io::read_file(path));
    Manifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.scenes = j.at("scenes").get<std::vector<std::string>>();
    const auto& s = j.at("splits");
    m.train = s.at("train").get<std::vector<std::string>>();
    m.val = s.at("val").get<std::vector<std::string>>();
    m.test = s.at("test").get<std::vector<std::string>>();
    if (j.contains("config")) m.config = j["config"];
    return m;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline std::string scene_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu", index);
  return buf;
}

}  // namespace mhistart
