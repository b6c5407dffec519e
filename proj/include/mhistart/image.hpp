#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mhistart/errors.hpp"
#include "mhistart/io.hpp"

namespace mhistart {

/// Dense single-channel image, row-major, pixel (x, y) at data[y * width + x].
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(std::size_t width, std::size_t height, T fill = T{})
      : width_(width), height_(height), data_(width * height, fill) {}
  Image(std::size_t width, std::size_t height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != width_ * height_) {
      throw DimensionMismatch("pixel buffer length " +
                              std::to_string(data_.size()) + " != " +
                              std::to_string(width_) + "x" +
                              std::to_string(height_));
    }
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t x, std::size_t y) { return data_[y * width_ + x]; }
  const T& operator()(std::size_t x, std::size_t y) const {
    return data_[y * width_ + x];
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<T> data_;
};

/// Transposed copy; (x, y) -> (y, x).
template <typename T>
Image<T> transpose(const Image<T>& img) {
  Image<T> out(img.height(), img.width());
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x) out(y, x) = img(x, y);
  return out;
}

/// Copy of the window [x0, x0+w) x [y0, y0+h); the window must lie inside.
template <typename T>
Image<T> sub_image(const Image<T>& img, std::size_t x0, std::size_t y0,
                   std::size_t w, std::size_t h) {
  if (x0 + w > img.width() || y0 + h > img.height()) {
    throw DimensionMismatch("sub-image window exceeds image bounds");
  }
  Image<T> out(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out(x, y) = img(x0 + x, y0 + y);
  return out;
}

// ---------------------------------------------------------------------------
// 8-bit binary PGM (P5).

inline std::string encode_pgm(const Image<std::uint8_t>& img) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " +
                    std::to_string(img.height()) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.data().data()), img.size());
  return out;
}

inline Image<std::uint8_t> decode_pgm(std::string_view bytes,
                                      const std::string& source) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) -> FormatError {
    return FormatError(source + ": " + why);
  };
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> std::size_t {
    skip_space_and_comments();
    std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() &&
           std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > (1u << 24)) throw fail("header value out of range");
      ++pos;
    }
    if (pos == start) throw fail("malformed PGM header");
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw fail("not a binary PGM (P5) file");
  }
  pos = 2;
  const std::size_t w = read_uint();
  const std::size_t h = read_uint();
  const std::size_t maxval = read_uint();
  if (maxval != 255) throw fail("only 8-bit PGM is supported");
  if (pos >= bytes.size() ||
      !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw fail("malformed PGM header");
  }
  ++pos;
  if (bytes.size() - pos != w * h) {
    throw fail("pixel payload size " + std::to_string(bytes.size() - pos) +
               " does not match " + std::to_string(w) + "x" +
               std::to_string(h));
  }
  std::vector<std::uint8_t> px(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                               bytes.end());
  return Image<std::uint8_t>(w, h, std::move(px));
}

inline void write_pgm(const std::filesystem::path& path,
                      const Image<std::uint8_t>& img) {
  io::write_file_atomic(path, encode_pgm(img));
}

inline Image<std::uint8_t> read_pgm(const std::filesystem::path& path) {
  return decode_pgm(io::read_file(path), path.string());
}

}  // namespace mhistart
