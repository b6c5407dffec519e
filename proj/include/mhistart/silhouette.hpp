#pragma once

// Silhouette ingestion: binarization of class maps, head-anchored ROI crops,
// and stacks of the most recent N frames.

#include <bitset>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mhistart/errors.hpp"
#include "mhistart/image.hpp"

namespace mhistart {

/// Per-pixel semantic class ids as produced by an upstream segmenter.
struct ClassMapFrame {
  Image<std::uint8_t> classes;
  double timestamp = 0.0;  // seconds
};

/// Binary silhouette, every pixel 0 or 1.
using BinaryFrame = Image<std::uint8_t>;

/// Set of class ids treated as foreground. The id scheme is configuration.
class ClassSet {
 public:
  ClassSet() = default;
  ClassSet(std::initializer_list<int> ids) {
    for (int id : ids) insert(id);
  }
  template <typename Range>
  static ClassSet from(const Range& ids) {
    ClassSet s;
    for (auto id : ids) s.insert(static_cast<int>(id));
    return s;
  }

  void insert(int id) {
    if (id < 0 || id > 255) {
      throw InvalidArgument("class id " + std::to_string(id) +
                            " outside 0..255");
    }
    bits_.set(static_cast<std::size_t>(id));
  }
  bool contains(std::uint8_t id) const { return bits_.test(id); }
  std::vector<int> ids() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_.test(i)) out.push_back(static_cast<int>(i));
    return out;
  }

 private:
  std::bitset<256> bits_;
};

inline BinaryFrame binarize(const Image<std::uint8_t>& classes,
                            const ClassSet& foreground) {
  BinaryFrame out(classes.width(), classes.height());
  const auto& src = classes.data();
  auto& dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i)
    dst[i] = foreground.contains(src[i]) ? 1 : 0;
  return out;
}

inline BinaryFrame binarize(const ClassMapFrame& frame,
                            const ClassSet& foreground) {
  return binarize(frame.classes, foreground);
}

/// ROI geometry. The head sits at (anchor_x * roi_width, anchor_y *
/// roi_height) inside the crop.
struct RoiSpec {
  int roi_width = 192;
  int roi_height = 160;
  double head_anchor_x = 0.5;
  double head_anchor_y = 0.2;

  void validate() const {
    if (roi_width <= 0 || roi_height <= 0)
      throw InvalidArgument("ROI dimensions must be positive");
    if (!(head_anchor_x >= 0.0 && head_anchor_x <= 1.0 &&
          head_anchor_y >= 0.0 && head_anchor_y <= 1.0))
      throw InvalidArgument("ROI head anchors must lie in [0,1]");
  }

  /// Top-left corner of the crop window in frame coordinates.
  std::pair<long, long> origin(double head_x, double head_y) const {
    return {std::lround(head_x - head_anchor_x * roi_width),
            std::lround(head_y - head_anchor_y * roi_height)};
  }
};

/// Crops a head-anchored window; source pixels outside the frame read as 0.
inline BinaryFrame crop_roi(const BinaryFrame& frame, double head_x,
                            double head_y, const RoiSpec& spec) {
  spec.validate();
  if (!(head_x >= 0.0 && head_y >= 0.0 &&
        head_x < static_cast<double>(frame.width()) &&
        head_y < static_cast<double>(frame.height()))) {
    throw HeadOutsideFrame("head (" + std::to_string(head_x) + ", " +
                           std::to_string(head_y) + ") outside " +
                           std::to_string(frame.width()) + "x" +
                           std::to_string(frame.height()) + " frame");
  }
  const auto [x0, y0] = spec.origin(head_x, head_y);
  const long fw = static_cast<long>(frame.width());
  const long fh = static_cast<long>(frame.height());
  BinaryFrame out(static_cast<std::size_t>(spec.roi_width),
                  static_cast<std::size_t>(spec.roi_height), 0);
  for (long v = 0; v < spec.roi_height; ++v) {
    const long sy = y0 + v;
    if (sy < 0 || sy >= fh) continue;
    for (long u = 0; u < spec.roi_width; ++u) {
      const long sx = x0 + u;
      if (sx < 0 || sx >= fw) continue;
      out(static_cast<std::size_t>(u), static_cast<std::size_t>(v)) =
          frame(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy));
    }
  }
  return out;
}

/// The N most recent binary frames; index 0 is the newest.
class SilhouetteStack {
 public:
  explicit SilhouetteStack(std::vector<BinaryFrame> newest_first)
      : frames_(std::move(newest_first)) {
    if (frames_.empty())
      throw InsufficientHistory("a stack needs at least one frame");
    for (const auto& f : frames_) {
      if (!f.same_shape(frames_.front()))
        throw DimensionMismatch("stack frames differ in size");
    }
  }

  std::size_t depth() const { return frames_.size(); }
  std::size_t width() const { return frames_.front().width(); }
  std::size_t height() const { return frames_.front().height(); }
  const BinaryFrame& operator[](std::size_t t) const { return frames_[t]; }
  const std::vector<BinaryFrame>& frames() const { return frames_; }

 private:
  std::vector<BinaryFrame> frames_;
};

/// Builds a stack from chronologically ordered frames (oldest first) using
/// the last n of them.
inline SilhouetteStack make_stack(std::span<const BinaryFrame> chronological,
                                  std::size_t n) {
  if (n == 0) throw InvalidArgument("stack depth must be >= 1");
  if (chronological.size() < n) {
    throw InsufficientHistory("need " + std::to_string(n) + " frames, have " +
                              std::to_string(chronological.size()));
  }
  std::vector<BinaryFrame> newest_first;
  newest_first.reserve(n);
  for (std::size_t t = 0; t < n; ++t)
    newest_first.push_back(chronological[chronological.size() - 1 - t]);
  return SilhouetteStack(std::move(newest_first));
}

}  // namespace mhistart
