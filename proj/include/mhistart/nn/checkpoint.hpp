#pragma once

// Checkpoint file: "RNCK", u32 header length, JSON header (network config
// plus caller metadata), u32 tensor count, then per tensor: u32 name length,
// name, u32 rank, rank x u32 dims, little-endian float32 values.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mhistart/config.hpp"
#include "mhistart/io.hpp"
#include "mhistart/nn/resnet.hpp"

namespace mhistart::nn {

struct CheckpointData {
  ResNetConfig config;
  json metadata = json::object();
  std::vector<std::string> names;
  std::vector<std::vector<int>> shapes;
  std::vector<std::vector<float>> tensors;
};

inline std::string encode_checkpoint(ResNet<float>& net, const json& metadata) {
  std::string out = "RNCK";
  const json header = {{"resnet", to_json(net.config())}, {"metadata", metadata}};
  const std::string h = header.dump();
  io::put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  io::put_u32(out, static_cast<std::uint32_t>(net.params().size() + net.buffers().size()));
  auto put = [&](const std::string& name, const Tensor<float>& t) {
    io::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    io::put_u32(out, 4);
    for (int d : {t.n, t.c, t.h, t.w}) io::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data) io::put_f32(out, v);
  };
  for (const auto& p : net.params()) put(p.name, *p.value);
  for (const auto& b : net.buffers()) put(b.name, *b.value);
  return out;
}

inline CheckpointData decode_checkpoint(std::string_view bytes, const std::string& source) {
  io::ByteReader in(bytes, source);
  if (in.take(4) != "RNCK") throw FormatError(source + ": bad checkpoint magic");
  CheckpointData d;
  const auto hlen = in.u32();
  try {
    const json header = json::parse(in.take(hlen));
    from_json_into(header.at("resnet"), d.config);
    d.metadata = header.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw FormatError(source + ": bad checkpoint header: " + e.what());
  }
  const auto count = in.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto nlen = in.u32();
    d.names.emplace_back(in.take(nlen));
    const auto rank = in.u32();
    if (rank > 8) throw FormatError(source + ": implausible tensor rank");
    std::vector<int> shape;
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<int>(in.u32()));
      n *= static_cast<std::size_t>(shape.back());
    }
    if (n * 4 > bytes.size()) throw FormatError(source + ": truncated file");
    std::vector<float> values(n);
    for (auto& v : values) v = in.f32();
    d.shapes.push_back(std::move(shape));
    d.tensors.push_back(std::move(values));
  }
  if (!in.at_end()) throw FormatError(source + ": trailing bytes after checkpoint");
  return d;
}

/// Copies checkpoint tensors into a network built from the same config,
/// matching by name.
inline void load_into(ResNet<float>& net, const CheckpointData& d, const std::string& source) {
  if (!(d.config == net.config())) throw ShapeMismatch(source + ": network config differs");
  std::vector<std::vector<float>> state;
  std::size_t k = 0;
  auto take = [&](const std::string& name, const Tensor<float>& t) {
    if (k >= d.names.size() || d.names[k] != name)
      throw FormatError(source + ": expected tensor '" + name + "'");
    if (d.tensors[k].size() != t.size())
      throw ShapeMismatch(source + ": tensor '" + name + "' has the wrong size");
    state.push_back(d.tensors[k++]);
  };
  for (const auto& p : net.params()) take(p.name, *p.value);
  for (const auto& b : net.buffers()) take(b.name, *b.value);
  if (k != d.names.size()) throw FormatError(source + ": unexpected extra tensors");
  net.load_state(state);
}

inline void write_checkpoint(const std::filesystem::path& path, ResNet<float>& net,
                             const json& metadata) {
  io::write_file_atomic(path, encode_checkpoint(net, metadata));
}

inline CheckpointData read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

}  // namespace mhistart::nn
