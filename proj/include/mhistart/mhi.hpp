#pragma once

// Motion History Images with linear recency decay tau(t) = (N - t) / N.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>

#include "mhistart/errors.hpp"
#include "mhistart/image.hpp"
#include "mhistart/io.hpp"
#include "mhistart/silhouette.hpp"

namespace mhistart {

/// Real-valued motion history image; every value lies in [0, 1].
struct MotionHistoryImage {
  Image<float> values;
  std::uint32_t history = 0;  // N used to build it (0 for derived images)

  std::size_t width() const { return values.width(); }
  std::size_t height() const { return values.height(); }
  friend bool operator==(const MotionHistoryImage&,
                         const MotionHistoryImage&) = default;
};

/// Decay weight of the t-th most recent frame out of n.
inline double decay(std::size_t n, std::size_t t) {
  if (n == 0 || t >= n) {
    throw IndexOutOfRange("decay(n=" + std::to_string(n) +
                          ", t=" + std::to_string(t) + ")");
  }
  return static_cast<double>(n - t) / static_cast<double>(n);
}

/// Each pixel takes the decay of the most recent frame in which it is
/// foreground, 0 if it never is.
inline MotionHistoryImage generate_mhi(const SilhouetteStack& stack) {
  const std::size_t n = stack.depth();
  MotionHistoryImage mhi{Image<float>(stack.width(), stack.height(), 0.0f),
                         static_cast<std::uint32_t>(n)};
  auto& out = mhi.values.data();
  std::vector<bool> done(out.size(), false);
  std::size_t remaining = out.size();
  for (std::size_t t = 0; t < n && remaining > 0; ++t) {
    const float tau = static_cast<float>(decay(n, t));
    const auto& px = stack[t].data();
    for (std::size_t i = 0; i < px.size(); ++i) {
      if (!done[i] && px[i] == 1) {
        out[i] = tau;
        done[i] = true;
        --remaining;
      }
    }
  }
  return mhi;
}

/// Bilinear resampling with pixel centres at half-integer coordinates and
/// clamp-to-edge.
inline Image<float> resize_bilinear(const Image<float>& src, std::size_t out_w,
                                    std::size_t out_h) {
  if (out_w == 0 || out_h == 0)
    throw InvalidArgument("resize target must be at least 1x1");
  if (src.empty()) throw InvalidArgument("cannot resize an empty image");
  if (src.width() == out_w && src.height() == out_h) return src;

  struct Tap {
    std::size_t i0, i1;
    double w1;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    const double hi = static_cast<double>(in - 1);
    for (std::size_t o = 0; o < out; ++o) {
      double s = (static_cast<double>(o) + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, hi);
      const auto i0 = static_cast<std::size_t>(std::floor(s));
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, s - static_cast<double>(i0)};
    }
    return t;
  };
  const auto tx = taps(src.width(), out_w);
  const auto ty = taps(src.height(), out_h);

  Image<float> out(out_w, out_h);
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto& ry = ty[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto& rx = tx[x];
      const double top = (1.0 - rx.w1) * src(rx.i0, ry.i0) + rx.w1 * src(rx.i1, ry.i0);
      const double bot = (1.0 - rx.w1) * src(rx.i0, ry.i1) + rx.w1 * src(rx.i1, ry.i1);
      out(x, y) = static_cast<float>((1.0 - ry.w1) * top + ry.w1 * bot);
    }
  }
  return out;
}

inline MotionHistoryImage resize_bilinear(const MotionHistoryImage& mhi,
                                          std::size_t out_w,
                                          std::size_t out_h) {
  return {resize_bilinear(mhi.values, out_w, out_h), mhi.history};
}

// ---------------------------------------------------------------------------
// File formats.
//
// Binary: "MHI1", u32 width, u32 height, u32 N, then width*height
// little-endian float32 values, row-major.

inline std::string encode_mhi(const MotionHistoryImage& mhi) {
  std::string out = "MHI1";
  out.reserve(16 + 4 * mhi.values.size());
  io::put_u32(out, static_cast<std::uint32_t>(mhi.width()));
  io::put_u32(out, static_cast<std::uint32_t>(mhi.height()));
  io::put_u32(out, mhi.history);
  for (float v : mhi.values.data()) io::put_f32(out, v);
  return out;
}

inline MotionHistoryImage decode_mhi(std::string_view bytes,
                                     const std::string& source) {
  io::ByteReader in(bytes, source);
  if (in.take(4) != "MHI1") throw FormatError(source + ": bad MHI magic");
  const std::uint32_t w = in.u32();
  const std::uint32_t h = in.u32();
  const std::uint32_t n = in.u32();
  if (static_cast<std::uint64_t>(w) * h * 4 != bytes.size() - 16)
    throw FormatError(source + ": MHI payload does not match header");
  std::vector<float> values(static_cast<std::size_t>(w) * h);
  for (auto& v : values) {
    v = in.f32();
    if (!(v >= 0.0f && v <= 1.0f))
      throw FormatError(source + ": MHI value outside [0,1]");
  }
  return {Image<float>(w, h, std::move(values)), n};
}

inline void write_mhi(const std::filesystem::path& path,
                      const MotionHistoryImage& mhi) {
  io::write_file_atomic(path, encode_mhi(mhi));
}

inline MotionHistoryImage read_mhi(const std::filesystem::path& path) {
  return decode_mhi(io::read_file(path), path.string());
}

/// 8-bit quantisation round(255 * v) for visual inspection.
inline Image<std::uint8_t> to_gray8(const Image<float>& values) {
  Image<std::uint8_t> out(values.width(), values.height());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::clamp(static_cast<double>(values.data()[i]), 0.0, 1.0);
    out.data()[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return out;
}

}  // namespace mhistart
