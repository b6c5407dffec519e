#pragma once

// Glue between the modules: per-scene MHI sequences, descriptor sets, the
// calibrated MCHOG+SVM detector, ResNet inputs, and scene scoring.

#include <algorithm>
#include <array>
#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "mhistart/config.hpp"
#include "mhistart/dataset.hpp"
#include "mhistart/eval.hpp"
#include "mhistart/io.hpp"
#include "mhistart/mchog.hpp"
#include "mhistart/mhi.hpp"
#include "mhistart/platt.hpp"
#include "mhistart/silhouette.hpp"
#include "mhistart/svm.hpp"

namespace mhistart {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
/// thrown by any task is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

using HeadTrack = std::vector<std::array<double, 2>>;

/// Calls fn(frame_index, mhi) for every frame with a full history, i.e.
/// frames n-1 .. end. Every MHI crops all n contributing frames at the head
/// position of its own (most recent) frame, so it equals
/// generate_mhi(stack of those crops).
template <typename Fn>
void for_each_mhi(std::span<const BinaryFrame> frames, std::span<const std::array<double, 2>> head,
                  const RoiSpec& roi, std::uint32_t n, Fn&& fn) {
  roi.validate();
  if (n == 0) throw InvalidArgument("history must be >= 1");
  if (head.size() != frames.size()) throw DimensionMismatch("head track length differs from frame count");
  if (frames.empty()) return;
  const std::size_t w = frames.front().width(), h = frames.front().height();
  constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::min() / 2;
  std::vector<std::int64_t> last(w * h, kNever);  // most recent foreground frame per pixel
  std::vector<float> tau(n);
  for (std::uint32_t t = 0; t < n; ++t) tau[t] = static_cast<float>(decay(n, t));
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& fr = frames[f];
    if (fr.width() != w || fr.height() != h) throw DimensionMismatch("scene frames differ in size");
    for (std::size_t i = 0; i < fr.size(); ++i)
      if (fr.data()[i] == 1) last[i] = static_cast<std::int64_t>(f);
    if (f + 1 < n) continue;
    const double hx = head[f][0], hy = head[f][1];
    if (!(hx >= 0.0 && hy >= 0.0 && hx < static_cast<double>(w) && hy < static_cast<double>(h)))
      throw HeadOutsideFrame("frame " + std::to_string(f) + ": head outside the frame");
    const auto [x0, y0] = roi.origin(hx, hy);
    MotionHistoryImage mhi{Image<float>(static_cast<std::size_t>(roi.roi_width),
                                        static_cast<std::size_t>(roi.roi_height), 0.0f),
                           n};
    for (long v = 0; v < roi.roi_height; ++v) {
      const long sy = y0 + v;
      if (sy < 0 || sy >= static_cast<long>(h)) continue;
      for (long u = 0; u < roi.roi_width; ++u) {
        const long sx = x0 + u;
        if (sx < 0 || sx >= static_cast<long>(w)) continue;
        const std::int64_t age = static_cast<std::int64_t>(f) -
                                 last[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)];
        if (age < static_cast<std::int64_t>(n))
          mhi.values(static_cast<std::size_t>(u), static_cast<std::size_t>(v)) =
              tau[static_cast<std::size_t>(age)];
      }
    }
    fn(f, std::move(mhi));
  }
}

/// MHIs of frames n-1 .. end; InsufficientHistory when the scene is shorter than n.
inline std::vector<MotionHistoryImage> scene_mhis(std::span<const BinaryFrame> frames,
                                                  std::span<const std::array<double, 2>> head,
                                                  const RoiSpec& roi, std::uint32_t n) {
  if (frames.size() < n)
    throw InsufficientHistory(std::to_string(frames.size()) + " frames, history needs " + std::to_string(n));
  std::vector<MotionHistoryImage> out;
  for_each_mhi(frames, head, roi, n,
               [&](std::size_t, MotionHistoryImage&& m) { out.push_back(std::move(m)); });
  return out;
}

/// Resized MHIs of one scene with the annotation of the frames they cover.
struct SceneSamples {
  std::string name;
  SceneAnnotation annotation;  // re-indexed so index 0 is first_frame
  std::size_t first_frame = 0;
  std::vector<Image<float>> images;
};

struct ImageSize {
  std::size_t width, height;
};

/// One SceneSamples per requested size, from a single MHI pass.
inline std::vector<SceneSamples> make_scene_samples(const std::string& name,
                                                    std::span<const BinaryFrame> frames,
                                                    std::span<const std::array<double, 2>> head,
                                                    const SceneAnnotation& annotation,
                                                    const RoiSpec& roi, std::uint32_t n,
                                                    std::span<const ImageSize> sizes) {
  if (annotation.size() != frames.size())
    throw DimensionMismatch(name + ": annotation length differs from frame count");
  if (frames.size() < n)
    throw InsufficientHistory(name + ": " + std::to_string(frames.size()) +
                              " frames, history needs " + std::to_string(n));
  std::vector<SceneSamples> out(sizes.size());
  for (auto& s : out) {
    s.name = name;
    s.first_frame = n - 1;
    s.annotation = annotation.suffix(n - 1);
  }
  for_each_mhi(frames, head, roi, n, [&](std::size_t, MotionHistoryImage&& m) {
    for (std::size_t k = 0; k < sizes.size(); ++k)
      out[k].images.push_back(resize_bilinear(m.values, sizes[k].width, sizes[k].height));
  });
  return out;
}

/// Same, starting from precomputed MHIs of frames first_frame, first_frame+1, ...
inline std::vector<SceneSamples> make_scene_samples(const std::string& name,
                                                    std::span<const MotionHistoryImage> mhis,
                                                    const SceneAnnotation& annotation,
                                                    std::size_t first_frame,
                                                    std::span<const ImageSize> sizes) {
  if (first_frame + mhis.size() != annotation.size())
    throw DimensionMismatch(name + ": MHI count does not cover the annotated frames");
  std::vector<SceneSamples> out(sizes.size());
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    out[k].name = name;
    out[k].first_frame = first_frame;
    out[k].annotation = annotation.suffix(first_frame);
    for (const auto& m : mhis)
      out[k].images.push_back(resize_bilinear(m.values, sizes[k].width, sizes[k].height));
  }
  return out;
}

// ---------------------------------------------------------------------------
// MCHOG + SVM detector.

inline std::vector<std::vector<double>> scene_descriptors(const SceneSamples& s,
                                                          const MchogParams& p) {
  std::vector<std::vector<double>> out;
  out.reserve(s.images.size());
  for (const auto& img : s.images) out.push_back(mchog_descriptor(img, p));
  return out;
}

/// Descriptors and +/-1 labels of every stride-th frame of the given scenes.
inline TrainSet descriptor_set(std::span<const SceneSamples> scenes, const MchogParams& p,
                               std::size_t stride = 1) {
  if (stride == 0) throw InvalidArgument("stride must be >= 1");
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (const auto& s : scenes) {
    for (std::size_t i = 0; i < s.images.size(); i += stride) {
      rows.push_back(mchog_descriptor(s.images[i], p));
      labels.push_back(binary_label(s.annotation.labels()[i]));
    }
  }
  if (rows.empty()) throw DegenerateData("no samples for the descriptor set");
  return TrainSet::from_rows(rows, labels);
}

inline std::string fingerprint(const TrainSet& data) {
  io::Fnv1a h;
  h.update(data.descriptors.data(), static_cast<std::size_t>(data.descriptors.size()) * sizeof(double));
  h.update(data.labels.data(), data.labels.size() * sizeof(int));
  return h.hex();
}

struct SvmDetector {
  MchogParams mchog;
  RoiSpec roi;
  std::uint32_t history = 20;
  LinearSvmModel model;
  PlattCalibration platt;
  bool balanced = false;
  std::string train_fingerprint;

  double p_moving_descriptor(std::span<const double> d) const {
    return platt.p_moving(model.decision(d));
  }
  std::vector<double> p_moving(const SceneSamples& s) const {
    std::vector<double> p;
    p.reserve(s.images.size());
    for (const auto& img : s.images) p.push_back(p_moving_descriptor(mchog_descriptor(img, mchog)));
    return p;
  }
};

inline ScoredScene scored(const SceneSamples& s, std::vector<double> p) {
  if (p.size() != s.annotation.size()) throw DimensionMismatch(s.name + ": trace length mismatch");
  return {std::move(p), s.annotation, s.first_frame};
}

/// Descriptors of every frame of one scene, in order.
using SceneDescriptors = std::vector<std::vector<double>>;

inline std::vector<SceneDescriptors> describe_scenes(std::span<const SceneSamples> scenes,
                                                     const MchogParams& p) {
  std::vector<SceneDescriptors> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(scene_descriptors(s, p));
  return out;
}

/// Trains the SVM on a prepared training set and fits Platt on the decision
/// values of the calibration scenes.
inline SvmDetector fit_svm_detector(const TrainSet& data, std::span<const SceneSamples> calib,
                                    std::span<const SceneDescriptors> calib_desc,
                                    const MchogParams& p, const SvmOptions& opt,
                                    SvmTrainReport* report = nullptr) {
  if (calib.size() != calib_desc.size()) throw DimensionMismatch("calibration descriptors per scene");
  SvmDetector det;
  det.mchog = p;
  det.balanced = opt.balanced;
  det.train_fingerprint = fingerprint(data);
  det.model = train_svm(data, opt, report);
  std::vector<double> dec;
  std::vector<int> lab;
  for (std::size_t k = 0; k < calib.size(); ++k) {
    for (std::size_t i = 0; i < calib_desc[k].size(); ++i) {
      dec.push_back(det.model.decision(calib_desc[k][i]));
      lab.push_back(binary_label(calib[k].annotation.labels()[i]));
    }
  }
  det.platt = fit_platt(dec, lab);
  return det;
}

/// Trains the SVM on the training scenes and fits Platt on the validation
/// scenes' decision values (the training scenes when val is empty).
inline SvmDetector fit_svm_detector(std::span<const SceneSamples> train,
                                    std::span<const SceneSamples> val, const MchogParams& p,
                                    const SvmOptions& opt, std::size_t stride,
                                    SvmTrainReport* report = nullptr) {
  const TrainSet data = descriptor_set(train, p, stride);
  const auto calib = val.empty() ? train : val;
  const auto desc = describe_scenes(calib, p);
  return fit_svm_detector(data, calib, desc, p, opt, report);
}

/// Traces of a detector over scenes whose descriptors are already known.
inline std::vector<ScoredScene> score_descriptors(const SvmDetector& det,
                                                  std::span<const SceneSamples> scenes,
                                                  std::span<const SceneDescriptors> desc) {
  std::vector<ScoredScene> out;
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    std::vector<double> p;
    p.reserve(desc[k].size());
    for (const auto& d : desc[k]) p.push_back(det.p_moving_descriptor(d));
    out.push_back(scored(scenes[k], std::move(p)));
  }
  return out;
}

inline json to_json(const SvmDetector& d) {
  return {{"kind", "mchog-svm"},
          {"mchog", to_json(d.mchog)},
          {"roi", to_json(d.roi)},
          {"history", d.history},
          {"weights", d.model.weights},
          {"bias", d.model.bias},
          {"c", d.model.c_param},
          {"balanced", d.balanced},
          {"platt", {{"a", d.platt.a}, {"b", d.platt.b}}},
          {"train_fingerprint", d.train_fingerprint}};
}

inline SvmDetector svm_detector_from_json(const json& j, const std::string& source) {
  try {
    if (j.at("kind").get<std::string>() != "mchog-svm")
      throw FormatError(source + ": not an MCHOG+SVM model");
    SvmDetector d;
    from_json_into(j.at("mchog"), d.mchog);
    from_json_into(j.at("roi"), d.roi);
    d.history = j.at("history").get<std::uint32_t>();
    d.model.weights = j.at("weights").get<std::vector<double>>();
    d.model.bias = j.at("bias").get<double>();
    d.model.c_param = j.at("c").get<double>();
    d.balanced = j.value("balanced", false);
    d.platt.a = j.at("platt").at("a").get<double>();
    d.platt.b = j.at("platt").at("b").get<double>();
    d.train_fingerprint = j.value("train_fingerprint", "");
    if (d.model.weights.size() != descriptor_length(d.mchog))
      throw DimensionMismatch(source + ": weight length does not match the descriptor config");
    return d;
  } catch (const json::exception& e) {
    throw FormatError(source + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// MHI directories written by the `mhi` command: <dir>/<scene>/mhi_00019.mhi
// ... plus <dir>/<scene>/meta.json and <dir>/manifest.json.

inline std::string mhi_filename(std::size_t frame) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "mhi_%05zu.mhi", frame);
  return buf;
}

struct MhiScene {
  std::string name;
  SceneAnnotation annotation;  // full scene
  std::size_t first_frame = 0;
  std::vector<MotionHistoryImage> mhis;
};

inline MhiScene read_mhi_scene(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  MhiScene s;
  s.name = dir.filename().string();
  std::size_t count = 0;
  try {
    const json j = json::parse(io::read_file(meta_path));
    std::vector<Phase> phases;
    for (const auto& p : j.at("phases")) phases.push_back(parse_phase(p.get<std::string>()));
    s.annotation = SceneAnnotation(j.at("frame_rate").get<double>(), phases);
    s.first_frame = j.at("first_frame").get<std::size_t>();
    count = j.at("n_mhis").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }
  if (s.first_frame + count != s.annotation.size())
    throw FormatError(meta_path.string() + ": MHI count does not cover the scene");
  for (std::size_t k = 0; k < count; ++k) s.mhis.push_back(read_mhi(dir / mhi_filename(s.first_frame + k)));
  return s;
}

inline void write_mhi_scene(const std::filesystem::path& dir, const SceneAnnotation& annotation,
                            std::size_t first_frame, std::span<const MotionHistoryImage> mhis) {
  if (first_frame + mhis.size() != annotation.size())
    throw DimensionMismatch(dir.string() + ": MHI count does not cover the scene");
  for (std::size_t k = 0; k < mhis.size(); ++k) write_mhi(dir / mhi_filename(first_frame + k), mhis[k]);
  json meta;
  meta["frame_rate"] = annotation.frame_rate();
  meta["first_frame"] = first_frame;
  meta["n_mhis"] = mhis.size();
  meta["phases"] = json::array();
  for (Phase p : annotation.labels()) meta["phases"].push_back(std::string(phase_name(p)));
  io::write_file_atomic(dir / "meta.json", meta.dump(1) + "\n");
}

inline SceneSamples samples_of(const MhiScene& s, ImageSize size) {
  const ImageSize sizes[] = {size};
  return std::move(make_scene_samples(s.name, s.mhis, s.annotation, s.first_frame, sizes)[0]);
}

// ---------------------------------------------------------------------------
// MCHOG parameter sweep.

struct SweepRow {
  MchogParams mchog;
  double c = 0.0;
  SweepPoint val;  // operating point chosen on the validation scenes

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

/// F1 descending, then mean delay ascending (missing last), then the
/// parameters, so the order is total.
inline bool sweep_row_before(const SweepRow& a, const SweepRow& b) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (a.val.f1 != b.val.f1) return a.val.f1 > b.val.f1;
  const double da = a.val.mean_delay.value_or(kInf), db = b.val.mean_delay.value_or(kInf);
  if (da != db) return da < db;
  return std::tie(a.mchog.cell_size_x, a.mchog.cell_size_y, a.mchog.n_bins, a.c) <
         std::tie(b.mchog.cell_size_x, b.mchog.cell_size_y, b.mchog.n_bins, b.c);
}

/// Every (cell_x, cell_y, bins, C) combination: train on `train`, calibrate
/// and pick the operating point on `val`. Rows come back sorted.
inline std::vector<SweepRow> mchog_sweep(std::span<const SceneSamples> train,
                                         std::span<const SceneSamples> val, const MchogParams& base,
                                         const SweepGrid& grid, std::span<const double> c_values,
                                         const SvmOptions& svm, std::size_t stride,
                                         std::span<const double> thresholds, int jobs) {
  if (val.empty()) throw EmptyScene("the sweep needs validation scenes");
  std::vector<MchogParams> features;
  for (int cx : grid.cell_x)
    for (int cy : grid.cell_y)
      for (int b : grid.bins) {
        MchogParams p = base;
        p.cell_size_x = cx;
        p.cell_size_y = cy;
        p.n_bins = b;
        p.validate();
        features.push_back(p);
      }
  std::vector<SweepRow> rows(features.size() * c_values.size());
  parallel_for(features.size(), jobs, [&](std::size_t f) {
    const auto& p = features[f];
    const TrainSet data = descriptor_set(train, p, stride);
    const auto desc = describe_scenes(val, p);
    for (std::size_t k = 0; k < c_values.size(); ++k) {
      SvmOptions opt = svm;
      opt.c = c_values[k];
      const auto det = fit_svm_detector(data, val, desc, p, opt);
      auto& row = rows[f * c_values.size() + k];
      row.mchog = p;
      row.c = opt.c;
      row.val = select_operating_point(sweep(score_descriptors(det, val, desc), thresholds));
    }
  });
  std::sort(rows.begin(), rows.end(), sweep_row_before);
  return rows;
}

inline void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  os << "cell_size_x,cell_size_y,n_bins,c,threshold,f1,mean_delay_s,precision,recall,tp,fp,fn\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%.9g,%.2f,%.6f,", r.mchog.cell_size_x, r.mchog.cell_size_y,
                  r.mchog.n_bins, r.c, r.val.threshold, r.val.f1);
    os << buf;
    if (r.val.mean_delay) {
      std::snprintf(buf, sizeof buf, "%.6f", *r.val.mean_delay);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%zu,%zu,%zu\n", r.val.precision, r.val.recall, r.val.tp,
                  r.val.fp, r.val.fn);
    os << buf;
  }
}

}  // namespace mhistart
