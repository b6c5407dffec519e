#pragma once

// MCHOG: orientation histograms of MHI gradients, one histogram per cell,
// concatenated without any block or global normalisation.

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "mhistart/errors.hpp"
#include "mhistart/image.hpp"
#include "mhistart/mhi.hpp"

namespace mhistart {

struct MchogParams {
  int cell_size_x = 32;
  int cell_size_y = 8;
  int n_bins = 18;
  int input_w = 128;
  int input_h = 96;
  bool signed_orientation = false;

  int cells_x() const { return input_w / cell_size_x; }
  int cells_y() const { return input_h / cell_size_y; }

  /// Orientation range in degrees: 180 unsigned, 360 signed.
  double orientation_range() const { return signed_orientation ? 360.0 : 180.0; }

  void validate() const {
    if (cell_size_x <= 0 || cell_size_y <= 0 || input_w <= 0 || input_h <= 0)
      throw InvalidArgument("MCHOG sizes must be positive");
    if (input_w % cell_size_x != 0 || input_h % cell_size_y != 0)
      throw DimensionMismatch("cell size " + std::to_string(cell_size_x) + "x" +
                              std::to_string(cell_size_y) +
                              " does not divide input " +
                              std::to_string(input_w) + "x" +
                              std::to_string(input_h));
    if (n_bins < 2) throw InvalidArgument("MCHOG needs at least 2 bins");
  }

  friend bool operator==(const MchogParams&, const MchogParams&) = default;
};

inline std::size_t descriptor_length(const MchogParams& p) {
  p.validate();
  return static_cast<std::size_t>(p.cells_x()) *
         static_cast<std::size_t>(p.cells_y()) *
         static_cast<std::size_t>(p.n_bins);
}

/// Per-pixel gradient magnitude and orientation (degrees).
struct GradientField {
  Image<double> magnitude;
  Image<double> orientation;
};

/// Central differences with the (-1, 0, 1) kernel in x and y and edge
/// replication. Orientation is atan2(gy, gx) folded into [0, 180) unless
/// signed, in which case it lies in [0, 360).
template <typename T>
GradientField gradients(const Image<T>& img, bool signed_orientation = false) {
  const std::size_t w = img.width();
  const std::size_t h = img.height();
  GradientField g{Image<double>(w, h), Image<double>(w, h)};
  const double range = signed_orientation ? 360.0 : 180.0;
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t ym = y == 0 ? 0 : y - 1;
    const std::size_t yp = y + 1 == h ? y : y + 1;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t xm = x == 0 ? 0 : x - 1;
      const std::size_t xp = x + 1 == w ? x : x + 1;
      const double gx = static_cast<double>(img(xp, y)) - static_cast<double>(img(xm, y));
      const double gy = static_cast<double>(img(x, yp)) - static_cast<double>(img(x, ym));
      g.magnitude(x, y) = std::sqrt(gx * gx + gy * gy);
      double theta = std::atan2(gy, gx) * (180.0 / std::numbers::pi);
      if (theta < 0.0) theta += range;
      if (theta >= range) theta -= range;
      if (theta < 0.0) theta = 0.0;
      g.orientation(x, y) = theta;
    }
  }
  return g;
}

/// Adds a magnitude vote split linearly between the two nearest bin centres
/// (circular). Bin k is centred at (k + 0.5) * range / n_bins.
inline void vote(double* hist, int n_bins, double range, double orientation,
                 double magnitude) {
  if (magnitude == 0.0) return;
  const double pos = orientation / (range / n_bins) - 0.5;
  const double lower = std::floor(pos);
  const double frac = pos - lower;
  int b0 = static_cast<int>(lower) % n_bins;
  if (b0 < 0) b0 += n_bins;
  const int b1 = (b0 + 1) % n_bins;
  hist[b0] += magnitude * (1.0 - frac);
  hist[b1] += magnitude * frac;
}

/// Cell histograms over a gradient field. Cells are row-major, bins
/// contiguous per cell. No spatial interpolation, no normalisation.
inline std::vector<double> cell_histograms(const GradientField& g,
                                           int cell_size_x, int cell_size_y,
                                           int n_bins, double range) {
  const std::size_t w = g.magnitude.width();
  const std::size_t h = g.magnitude.height();
  if (!g.magnitude.same_shape(g.orientation))
    throw DimensionMismatch("magnitude and orientation differ in size");
  if (cell_size_x <= 0 || cell_size_y <= 0 || n_bins < 2)
    throw InvalidArgument("invalid cell histogram parameters");
  if (w % static_cast<std::size_t>(cell_size_x) != 0 ||
      h % static_cast<std::size_t>(cell_size_y) != 0)
    throw DimensionMismatch(std::to_string(w) + "x" + std::to_string(h) +
                            " is not divisible into " +
                            std::to_string(cell_size_x) + "x" +
                            std::to_string(cell_size_y) + " cells");
  const std::size_t cx = w / static_cast<std::size_t>(cell_size_x);
  const std::size_t cy = h / static_cast<std::size_t>(cell_size_y);
  std::vector<double> desc(cx * cy * static_cast<std::size_t>(n_bins), 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t row = y / static_cast<std::size_t>(cell_size_y);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t cell = row * cx + x / static_cast<std::size_t>(cell_size_x);
      vote(desc.data() + cell * static_cast<std::size_t>(n_bins), n_bins, range,
           g.orientation(x, y), g.magnitude(x, y));
    }
  }
  return desc;
}

inline std::vector<double> cell_histograms(const GradientField& g,
                                           const MchogParams& p) {
  p.validate();
  if (g.magnitude.width() != static_cast<std::size_t>(p.input_w) ||
      g.magnitude.height() != static_cast<std::size_t>(p.input_h))
    throw DimensionMismatch("gradient field is " +
                            std::to_string(g.magnitude.width()) + "x" +
                            std::to_string(g.magnitude.height()) +
                            ", expected " + std::to_string(p.input_w) + "x" +
                            std::to_string(p.input_h));
  return cell_histograms(g, p.cell_size_x, p.cell_size_y, p.n_bins,
                         p.orientation_range());
}

/// Descriptor of an image already at the configured input size.
template <typename T>
std::vector<double> mchog_descriptor(const Image<T>& img, const MchogParams& p) {
  p.validate();
  if (img.width() != static_cast<std::size_t>(p.input_w) ||
      img.height() != static_cast<std::size_t>(p.input_h))
    throw DimensionMismatch("MCHOG input is " + std::to_string(img.width()) +
                            "x" + std::to_string(img.height()) + ", expected " +
                            std::to_string(p.input_w) + "x" +
                            std::to_string(p.input_h));
  return cell_histograms(gradients(img, p.signed_orientation), p);
}

/// Resizes an MHI to the configured input size, then describes it.
inline std::vector<double> mchog_from_mhi(const MotionHistoryImage& mhi,
                                          const MchogParams& p) {
  p.validate();
  return mchog_descriptor(
      resize_bilinear(mhi.values, static_cast<std::size_t>(p.input_w),
                      static_cast<std::size_t>(p.input_h)),
      p);
}

/// Descriptor CSV row: label, then values.
inline void write_descriptor_row(std::ostream& os, int label,
                                 const std::vector<double>& values) {
  os << label;
  char buf[32];
  for (double v : values) {
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    os << buf;
  }
  os << '\n';
}

}  // namespace mhistart
