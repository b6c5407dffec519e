// mhistart: batch front-end. Every command reads the merged configuration
// (defaults, --config file, --set overrides, --jobs) and writes it beside
// its outputs.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mhistart/config.hpp"
#include "mhistart/dataset.hpp"
#include "mhistart/nn/checkpoint.hpp"
#include "mhistart/nn/detector.hpp"
#include "mhistart/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mhistart;

namespace {

struct Globals {
  std::string config_file;
  std::vector<std::string> overrides;
  int jobs = 0;
};

void log(const std::string& cmd, const std::string& msg) {
  static std::mutex m;
  std::lock_guard lock(m);
  std::fprintf(stderr, "[%s] %s\n", cmd.c_str(), msg.c_str());
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;
  }
}

PipelineConfig load_config(const Globals& g) {
  json j = json::object();
  if (!g.config_file.empty()) {
    try {
      j = json::parse(io::read_file(g.config_file));
    } catch (const json::exception& e) {
      throw FormatError(g.config_file + ": " + e.what());
    }
  }
  j = to_json(config_from_json(j));
  for (const auto& o : g.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("--set expects key=value, got '" + o + "'");
    std::string pointer = "/" + o.substr(0, eq);
    for (auto& ch : pointer)
      if (ch == '.') ch = '/';
    const json::json_pointer ptr(pointer);
    if (!j.contains(ptr)) throw InvalidArgument("--set: unknown config key '" + o.substr(0, eq) + "'");
    j[ptr] = parse_value(o.substr(eq + 1));
  }
  if (g.jobs > 0) j["jobs"] = g.jobs;
  return config_from_json(j);
}

std::string config_text(const PipelineConfig& cfg) { return to_json(cfg).dump(1) + "\n"; }

// The config embedded in artifacts leaves out the worker count, which never
// changes results.
json recorded_config(const PipelineConfig& cfg) {
  json j = to_json(cfg);
  j.erase("jobs");
  return j;
}

// Config echo for a file output: <file>.config.json.
void echo_beside(const fs::path& file, const PipelineConfig& cfg) {
  fs::path p = file;
  p += ".config.json";
  io::write_file_atomic(p, config_text(cfg));
}

void write_text(const fs::path& path, const std::string& text) { io::write_file_atomic(path, text); }

std::vector<std::string> split_names(const Manifest& m, const std::string& split) {
  if (split == "train") return m.train;
  if (split == "val") return m.val;
  if (split == "test") return m.test;
  if (split == "all") return m.scenes;
  throw InvalidArgument("unknown split '" + split + "' (train, val, test, all)");
}

// Loads MHI scenes and resizes them to the given input size.
std::vector<SceneSamples> load_samples(const fs::path& mhi_dir, const std::vector<std::string>& names,
                                       ImageSize size, std::uint32_t history, int jobs) {
  std::vector<SceneSamples> out(names.size());
  parallel_for(names.size(), jobs, [&](std::size_t k) {
    const auto scene = read_mhi_scene(mhi_dir / names[k]);
    for (const auto& m : scene.mhis)
      if (m.history != history)
        throw ShapeMismatch(names[k] + ": MHIs have history " + std::to_string(m.history) +
                            ", config says " + std::to_string(history));
    out[k] = samples_of(scene, size);
  });
  return out;
}

json point_to_json(const SweepPoint& p) {
  return {{"threshold", p.threshold}, {"f1", p.f1},         {"precision", p.precision},
          {"recall", p.recall},       {"tp", p.tp},         {"fp", p.fp},
          {"fn", p.fn},               {"mean_delay_s", p.mean_delay ? json(*p.mean_delay) : json(nullptr)}};
}

std::string delay_text(const std::optional<double>& d) {
  if (!d) return "none";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *d);
  return buf;
}

std::string summary_line(const SweepPoint& p) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "best_f1=%.6f threshold=%.2f mean_delay_s=%s tp=%zu fp=%zu fn=%zu", p.f1,
                p.threshold, delay_text(p.mean_delay).c_str(), p.tp, p.fp, p.fn);
  return buf;
}

// A trained detector of either kind, or a constant baseline.
class Model {
 public:
  static Model load(const fs::path& path, const PipelineConfig& cfg) {
    Model m;
    const auto bytes = io::read_file(path);
    if (bytes.rfind("RNCK", 0) == 0) {
      auto ck = nn::decode_checkpoint(bytes, path.string());
      m.net_ = std::make_unique<nn::ResNet<float>>(ck.config);
      nn::load_into(*m.net_, ck, path.string());
      m.history_ = ck.metadata.value("history", cfg.history);
      m.size_ = {static_cast<std::size_t>(ck.config.input_w), static_cast<std::size_t>(ck.config.input_h)};
      m.meta_ = ck.metadata;
    } else {
      json j;
      try {
        j = json::parse(bytes);
      } catch (const json::exception& e) {
        throw FormatError(path.string() + ": neither a checkpoint nor JSON: " + e.what());
      }
      m.svm_ = svm_detector_from_json(j, path.string());
      m.history_ = m.svm_->history;
      m.size_ = {static_cast<std::size_t>(m.svm_->mchog.input_w),
                 static_cast<std::size_t>(m.svm_->mchog.input_h)};
      m.meta_ = j;
    }
    return m;
  }

  static Model constant(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("--constant must lie in [0,1]");
    Model m;
    m.constant_ = p;
    m.size_ = {1, 1};
    return m;
  }

  std::vector<ScoredScene> score(const fs::path& mhi_dir, const std::vector<std::string>& names,
                                 const PipelineConfig& cfg) {
    const std::uint32_t history = constant_ ? cfg.history : history_;
    if (history != cfg.history)
      throw ShapeMismatch("model was trained on MHIs of history " + std::to_string(history) +
                          ", config says " + std::to_string(cfg.history));
    if (constant_) {
      std::vector<ScoredScene> out;
      for (const auto& n : names) {
        const auto s = read_mhi_scene(mhi_dir / n);
        out.push_back({std::vector<double>(s.mhis.size(), *constant_), s.annotation.suffix(s.first_frame),
                       s.first_frame});
      }
      return out;
    }
    const auto samples = load_samples(mhi_dir, names, size_, history, cfg.jobs);
    if (net_) return nn::score_scenes(*net_, samples);
    std::vector<ScoredScene> out(samples.size());
    parallel_for(samples.size(), cfg.jobs, [&](std::size_t k) { out[k] = scored(samples[k], svm_->p_moving(samples[k])); });
    return out;
  }

  std::optional<double> validation_threshold() const {
    if (meta_.contains("operating_point")) return meta_["operating_point"].at("threshold").get<double>();
    return std::nullopt;
  }

 private:
  std::optional<SvmDetector> svm_;
  std::unique_ptr<nn::ResNet<float>> net_;
  std::optional<double> constant_;
  std::uint32_t history_ = 0;
  ImageSize size_{0, 0};
  json meta_ = json::object();
};

// ---------------------------------------------------------------------------

int cmd_synth(const PipelineConfig& cfg, const fs::path& out) {
  const auto& sc = cfg.synth;
  auto opt = sc.script;
  opt.history = static_cast<int>(cfg.history);
  const auto plan = synth::make_dataset(sc.n_scenes, sc.seed, opt, sc.split);
  const auto mode = sc.mode == "classmap" ? RenderMode::ClassMap : RenderMode::Binary;
  fs::create_directories(out);
  parallel_for(plan.scripts.size(), cfg.jobs, [&](std::size_t k) {
    write_synthetic_scene(out / scene_name(k), synth::render_scene(plan.scripts[k]), mode);
  });
  Manifest m;
  m.seed = sc.seed;
  for (std::size_t k = 0; k < plan.scripts.size(); ++k) m.scenes.push_back(scene_name(k));
  for (auto i : plan.split.train) m.train.push_back(scene_name(i));
  for (auto i : plan.split.val) m.val.push_back(scene_name(i));
  for (auto i : plan.split.test) m.test.push_back(scene_name(i));
  m.config = recorded_config(cfg);
  write_manifest(out, m);
  write_text(out / "config.json", config_text(cfg));
  log("synth", std::to_string(m.scenes.size()) + " scenes written to " + out.string());
  return 0;
}

int cmd_mhi(const PipelineConfig& cfg, const fs::path& dataset, const fs::path& out) {
  const auto manifest = read_manifest(dataset);
  std::vector<char> kept(manifest.scenes.size(), 0);
  parallel_for(manifest.scenes.size(), cfg.jobs, [&](std::size_t k) {
    const auto& name = manifest.scenes[k];
    const auto scene = read_scene(dataset / name);
    try {
      const auto mhis = scene_mhis(scene.frames, scene.head, cfg.roi, cfg.history);
      write_mhi_scene(out / name, scene.annotation, cfg.history - 1, mhis);
      kept[k] = 1;
    } catch (const InsufficientHistory& e) {
      log("mhi", name + ": skipped: " + e.what());
    }
  });
  Manifest m = manifest;
  auto keep = [&](const std::vector<std::string>& names) {
    std::vector<std::string> r;
    for (const auto& n : names) {
      const auto it = std::find(manifest.scenes.begin(), manifest.scenes.end(), n);
      if (it != manifest.scenes.end() && kept[static_cast<std::size_t>(it - manifest.scenes.begin())]) r.push_back(n);
    }
    return r;
  };
  m.scenes = keep(manifest.scenes);
  m.train = keep(manifest.train);
  m.val = keep(manifest.val);
  m.test = keep(manifest.test);
  m.config = recorded_config(cfg);
  write_manifest(out, m);
  write_text(out / "config.json", config_text(cfg));
  log("mhi", std::to_string(m.scenes.size()) + " of " + std::to_string(manifest.scenes.size()) +
                 " scenes written to " + out.string());
  return 0;
}

int cmd_features(const PipelineConfig& cfg, const fs::path& mhi_dir, const fs::path& out,
                 const std::string& split) {
  const auto manifest = read_manifest(mhi_dir);
  const auto names = split_names(manifest, split);
  const ImageSize size{static_cast<std::size_t>(cfg.mchog.input_w), static_cast<std::size_t>(cfg.mchog.input_h)};
  const auto samples = load_samples(mhi_dir, names, size, cfg.history, cfg.jobs);
  std::vector<std::string> blocks(samples.size());
  parallel_for(samples.size(), cfg.jobs, [&](std::size_t k) {
    const auto& s = samples[k];
    const auto desc = scene_descriptors(s, cfg.mchog);
    std::string text;
    char buf[64];
    for (std::size_t i = 0; i < desc.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%d", s.first_frame + i, binary_label(s.annotation.labels()[i]));
      text += s.name;
      text += ',';
      text += buf;
      for (double v : desc[i]) {
        std::snprintf(buf, sizeof buf, ",%.9g", v);
        text += buf;
      }
      text += '\n';
    }
    blocks[k] = std::move(text);
  });
  std::string csv = "scene,frame,label";
  for (std::size_t d = 0; d < descriptor_length(cfg.mchog); ++d) csv += ",d" + std::to_string(d);
  csv += '\n';
  for (const auto& b : blocks) csv += b;
  write_text(out, csv);
  echo_beside(out, cfg);
  log("features", std::to_string(samples.size()) + " scenes, descriptor length " +
                      std::to_string(descriptor_length(cfg.mchog)));
  return 0;
}

int cmd_train_svm(const PipelineConfig& cfg, const fs::path& mhi_dir, const fs::path& out) {
  const auto manifest = read_manifest(mhi_dir);
  const ImageSize size{static_cast<std::size_t>(cfg.mchog.input_w), static_cast<std::size_t>(cfg.mchog.input_h)};
  const auto train = load_samples(mhi_dir, manifest.train, size, cfg.history, cfg.jobs);
  const auto val = load_samples(mhi_dir, manifest.val, size, cfg.history, cfg.jobs);
  SvmTrainReport report;
  auto det = fit_svm_detector(train, val, cfg.mchog, cfg.svm, cfg.svm_stride, &report);
  det.roi = cfg.roi;
  det.history = cfg.history;
  json j = to_json(det);
  if (!val.empty()) {
    std::vector<ScoredScene> traces;
    for (const auto& s : val) traces.push_back(scored(s, det.p_moving(s)));
    const auto op = select_operating_point(sweep(traces, threshold_grid(cfg.threshold_step)));
    j["operating_point"] = point_to_json(op);
    log("train-svm", "validation " + summary_line(op));
  }
  write_text(out, j.dump(1) + "\n");
  echo_beside(out, cfg);
  return 0;
}

int cmd_sweep_mchog(const PipelineConfig& cfg, const fs::path& mhi_dir, const fs::path& out) {
  const auto manifest = read_manifest(mhi_dir);
  const ImageSize size{static_cast<std::size_t>(cfg.mchog.input_w), static_cast<std::size_t>(cfg.mchog.input_h)};
  const auto train = load_samples(mhi_dir, manifest.train, size, cfg.history, cfg.jobs);
  const auto val = load_samples(mhi_dir, manifest.val, size, cfg.history, cfg.jobs);
  const auto cs = cfg.c_grid();
  const auto thresholds = threshold_grid(cfg.threshold_step);
  const auto rows =
      mchog_sweep(train, val, cfg.mchog, cfg.sweep, cs, cfg.svm, cfg.svm_stride, thresholds, cfg.jobs);
  std::ostringstream os;
  write_sweep_csv(os, rows);
  write_text(out, os.str());
  echo_beside(out, cfg);
  log("sweep-mchog", std::to_string(rows.size()) + " rows written to " + out.string());
  return 0;
}

int cmd_train_resnet(const PipelineConfig& cfg, const fs::path& mhi_dir, const fs::path& out,
                     const fs::path& log_path) {
  const auto manifest = read_manifest(mhi_dir);
  const ImageSize size{static_cast<std::size_t>(cfg.resnet.input_w), static_cast<std::size_t>(cfg.resnet.input_h)};
  const auto train = load_samples(mhi_dir, manifest.train, size, cfg.history, cfg.jobs);
  const auto val = load_samples(mhi_dir, manifest.val, size, cfg.history, cfg.jobs);
  if (val.empty()) throw EmptyScene("train-resnet needs validation scenes for checkpoint selection");
  nn::ResNet<float> net(cfg.resnet);
  const auto result = nn::train(net, nn::labeled_images(train), cfg.regime,
                                nn::sweep_validator(val, cfg.threshold_step));
  const auto& best = result.checkpoints[result.best];
  json meta = {{"history", cfg.history},
               {"best_iteration", best.iteration},
               {"operating_point", point_to_json(best.validation)},
               {"config", recorded_config(cfg)}};
  nn::write_checkpoint(out, net, meta);
  echo_beside(out, cfg);

  std::string csv = "iteration,batch_loss,checkpoint_train_loss,val_threshold,val_f1,val_mean_delay_s\n";
  std::size_t next = 0;
  char buf[160];
  for (std::size_t i = 0; i < result.losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g", i + 1, result.losses[i]);
    csv += buf;
    if (next < result.checkpoints.size() && static_cast<std::size_t>(result.checkpoints[next].iteration) == i + 1) {
      const auto& c = result.checkpoints[next++];
      std::snprintf(buf, sizeof buf, ",%.9g,%.2f,%.6f,%s", c.train_loss, c.validation.threshold, c.validation.f1,
                    c.validation.mean_delay ? delay_text(c.validation.mean_delay).c_str() : "");
      csv += buf;
    } else {
      csv += ",,,,";
    }
    csv += '\n';
  }
  write_text(log_path, csv);
  log("train-resnet", "best checkpoint at iteration " + std::to_string(best.iteration) + ", validation " +
                          summary_line(best.validation));
  return 0;
}

int cmd_evaluate(const PipelineConfig& cfg, const fs::path& mhi_dir, Model& model, const std::string& split,
                 const fs::path& out) {
  const auto manifest = read_manifest(mhi_dir);
  const auto traces = model.score(mhi_dir, split_names(manifest, split), cfg);
  const auto curve = sweep(traces, threshold_grid(cfg.threshold_step));
  const auto best = select_operating_point(curve);
  std::ostringstream os;
  write_curve_csv(os, curve);
  write_text(out, os.str());
  echo_beside(out, cfg);
  std::string summary = summary_line(best) + "\n";
  if (const auto t = model.validation_threshold()) {
    const auto at = evaluate_threshold(traces, *t);
    char buf[200];
    std::snprintf(buf, sizeof buf, "at_validation_threshold=%.2f f1=%.6f mean_delay_s=%s tp=%zu fp=%zu fn=%zu\n", *t,
                  at.f1, delay_text(at.mean_delay).c_str(), at.tp, at.fp, at.fn);
    summary += buf;
  }
  fs::path summary_path = out;
  summary_path += ".summary.txt";
  write_text(summary_path, summary);
  std::cout << summary;
  return 0;
}

int cmd_trace(const PipelineConfig& cfg, const fs::path& mhi_dir, Model& model, const std::string& split,
              const std::vector<std::string>& scenes, const fs::path& out) {
  const auto manifest = read_manifest(mhi_dir);
  const auto names = scenes.empty() ? split_names(manifest, split) : scenes;
  const auto traces = model.score(mhi_dir, names, cfg);
  for (std::size_t k = 0; k < names.size(); ++k) {
    std::ostringstream os;
    write_trace_csv(os, traces[k]);
    write_text(out / (names[k] + ".csv"), os.str());
  }
  write_text(out / "config.json", config_text(cfg));
  log("trace", std::to_string(names.size()) + " traces written to " + out.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cyclist starting-motion detection from silhouette sequences"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_file, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "Override a config value, e.g. --set svm.c=0.5 (repeatable)");
  app.add_option("--jobs", g.jobs, "Maximum worker threads")->check(CLI::PositiveNumber);

  std::string dataset, mhi_dir, out, model_path, split = "test", log_path;
  std::vector<std::string> scenes;
  std::optional<double> constant;

  auto* synth = app.add_subcommand("synth", "Render a synthetic dataset");
  synth->add_option("--out", out, "Dataset directory")->required();

  auto* mhi = app.add_subcommand("mhi", "Compute MHIs for every frame with a full history");
  mhi->add_option("--dataset", dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  mhi->add_option("--out", out, "MHI directory")->required();

  auto* features = app.add_subcommand("features", "Export MCHOG descriptors as CSV");
  features->add_option("--mhi", mhi_dir, "MHI directory")->required()->check(CLI::ExistingDirectory);
  features->add_option("--split", split, "train, val, test or all")->capture_default_str();
  features->add_option("--out", out, "CSV file")->required();

  auto* train_svm = app.add_subcommand("train-svm", "Train the MCHOG + SVM detector");
  train_svm->add_option("--mhi", mhi_dir, "MHI directory")->required()->check(CLI::ExistingDirectory);
  train_svm->add_option("--out", out, "Model JSON")->required();

  auto* sweep_cmd = app.add_subcommand("sweep-mchog", "Grid search over MCHOG cell sizes, bins and C");
  sweep_cmd->add_option("--mhi", mhi_dir, "MHI directory")->required()->check(CLI::ExistingDirectory);
  sweep_cmd->add_option("--out", out, "Results CSV")->required();

  auto* train_resnet = app.add_subcommand("train-resnet", "Train the residual network");
  train_resnet->add_option("--mhi", mhi_dir, "MHI directory")->required()->check(CLI::ExistingDirectory);
  train_resnet->add_option("--out", out, "Checkpoint file")->required();
  train_resnet->add_option("--log", log_path, "Training log CSV")->required();

  auto add_model = [&](CLI::App* c) {
    auto* m = c->add_option("--model", model_path, "Model JSON or checkpoint")->check(CLI::ExistingFile);
    auto* k = c->add_option("--constant", constant, "Score every frame with this constant instead of a model");
    m->excludes(k);
    c->add_option("--mhi", mhi_dir, "MHI directory")->required()->check(CLI::ExistingDirectory);
    c->add_option("--split", split, "train, val, test or all")->capture_default_str();
  };
  auto* evaluate = app.add_subcommand("evaluate", "Threshold sweep of a detector on a split");
  add_model(evaluate);
  evaluate->add_option("--out", out, "Curve CSV")->required();

  auto* trace = app.add_subcommand("trace", "Per-frame p_moving traces");
  add_model(trace);
  trace->add_option("--scene", scenes, "Scene names (default: every scene of the split)");
  trace->add_option("--out", out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const PipelineConfig cfg = load_config(g);
    auto model = [&] {
      if (constant) return Model::constant(*constant);
      if (model_path.empty()) throw InvalidArgument("either --model or --constant is required");
      return Model::load(model_path, cfg);
    };
    auto scored_by = [&](auto&& run) {
      Model m = model();
      return run(m);
    };
    if (*synth) return cmd_synth(cfg, out);
    if (*mhi) return cmd_mhi(cfg, dataset, out);
    if (*features) return cmd_features(cfg, mhi_dir, out, split);
    if (*train_svm) return cmd_train_svm(cfg, mhi_dir, out);
    if (*sweep_cmd) return cmd_sweep_mchog(cfg, mhi_dir, out);
    if (*train_resnet) return cmd_train_resnet(cfg, mhi_dir, out, log_path);
    if (*evaluate) return scored_by([&](Model& m) { return cmd_evaluate(cfg, mhi_dir, m, split, out); });
    if (*trace) return scored_by([&](Model& m) { return cmd_trace(cfg, mhi_dir, m, split, scenes, out); });
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mhistart: %s\n", e.what());
    return 1;
  }
  return 1;
}
