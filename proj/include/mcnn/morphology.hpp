#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include "mcnn/error.hpp"
#include "mcnn/image.hpp"

namespace mcnn {

/// Flat structuring element: a binary mask in an odd-sized bounding box whose
/// center cell is the origin.
///
/// Even-sized shapes (a 2x2 square, a 10-pixel line) are placed in the next
/// odd box, with the extra cell on the positive side of the origin.
class StructuringElement {
 public:
  StructuringElement(int width, int height, std::vector<std::uint8_t> mask)
      : width_(width), height_(height), mask_(std::move(mask)) {
    if (width < 1 || height < 1 || width % 2 == 0 || height % 2 == 0) {
      throw Error(Errc::InvalidArgument, "structuring element box must be odd-sized");
    }
    if (mask_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw Error(Errc::ShapeMismatch, "structuring element mask size");
    }
    if (std::none_of(mask_.begin(), mask_.end(), [](std::uint8_t m) { return m != 0; })) {
      throw Error(Errc::InvalidArgument, "structuring element has no set cell");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int origin_row() const noexcept { return height_ / 2; }
  int origin_col() const noexcept { return width_ / 2; }
  bool at(int row, int col) const noexcept { return mask_[static_cast<std::size_t>(row) * width_ + col] != 0; }
  const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }

  int count() const {
    return static_cast<int>(std::count_if(mask_.begin(), mask_.end(), [](std::uint8_t m) { return m != 0; }));
  }

  /// Point reflection through the origin.
  StructuringElement reflected() const {
    std::vector<std::uint8_t> out(mask_.rbegin(), mask_.rend());
    return {width_, height_, std::move(out)};
  }

  /// Same shape centered in a larger odd box (used to compare against kernels).
  StructuringElement padded_to(int width, int height) const {
    if (width < width_ || height < height_ || (width - width_) % 2 || (height - height_) % 2) {
      throw Error(Errc::InvalidArgument, "cannot pad structuring element to " + std::to_string(width) + "x" +
                                             std::to_string(height));
    }
    std::vector<std::uint8_t> out(static_cast<std::size_t>(width) * height, 0);
    const int dr = (height - height_) / 2;
    const int dc = (width - width_) / 2;
    for (int r = 0; r < height_; ++r)
      for (int c = 0; c < width_; ++c) out[static_cast<std::size_t>(r + dr) * width + c + dc] = at(r, c) ? 1 : 0;
    return {width, height, std::move(out)};
  }

  friend bool operator==(const StructuringElement&, const StructuringElement&) = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> mask_;
};

namespace detail {

// Offsets covered by an n-cell segment centered on the origin: [lo, lo + n).
inline int segment_lo(int n) { return -((n - 1) / 2); }

inline StructuringElement se_from_offsets(int radius, const std::vector<std::pair<int, int>>& offsets) {
  const int side = 2 * radius + 1;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(side) * side, 0);
  for (auto [dr, dc] : offsets) mask[static_cast<std::size_t>(dr + radius) * side + dc + radius] = 1;
  return {side, side, std::move(mask)};
}

inline void require_positive(int n, const char* what) {
  if (n < 1) throw Error(Errc::InvalidArgument, std::string(what) + " must be >= 1, got " + std::to_string(n));
}

}  // namespace detail

/// n x n square.
inline StructuringElement se_square(int n) {
  detail::require_positive(n, "square size");
  const int lo = detail::segment_lo(n);
  std::vector<std::pair<int, int>> offsets;
  for (int r = lo; r < lo + n; ++r)
    for (int c = lo; c < lo + n; ++c) offsets.emplace_back(r, c);
  return detail::se_from_offsets(n / 2, offsets);
}

/// L1 ball of radius side/2.
inline StructuringElement se_diamond(int side) {
  detail::require_positive(side, "diamond side");
  const int radius = side / 2;
  std::vector<std::pair<int, int>> offsets;
  for (int r = -radius; r <= radius; ++r)
    for (int c = -radius; c <= radius; ++c)
      if (std::abs(r) + std::abs(c) <= radius) offsets.emplace_back(r, c);
  return detail::se_from_offsets(radius, offsets);
}

/// Euclidean ball of radius size/2 (size 5 gives radius 2, 13 cells).
inline StructuringElement se_disk(int size) {
  detail::require_positive(size, "disk size");
  const int radius = size / 2;
  std::vector<std::pair<int, int>> offsets;
  for (int r = -radius; r <= radius; ++r)
    for (int c = -radius; c <= radius; ++c)
      if (r * r + c * c <= radius * radius) offsets.emplace_back(r, c);
  return detail::se_from_offsets(radius, offsets);
}

/// Digital segment of `length` pixels through the origin. Angles are measured
/// counter-clockwise from the positive column axis with rows growing
/// downward, so 45 degrees runs from bottom-left to top-right.
inline StructuringElement se_line(int length, int angle_degrees) {
  detail::require_positive(length, "line length");
  int step_row = 0;
  int step_col = 0;
  switch (((angle_degrees % 180) + 180) % 180) {
    case 0: step_col = 1; break;
    case 45: step_row = -1; step_col = 1; break;
    case 90: step_row = -1; break;
    case 135: step_row = -1; step_col = -1; break;
    default:
      throw Error(Errc::InvalidArgument, "unsupported line angle " + std::to_string(angle_degrees) +
                                             " (use 0, 45, 90 or 135)");
  }
  // At multiples of 45 degrees the Bresenham rasterization of the segment is
  // exactly one pixel per unit step along the major axis.
  const int lo = detail::segment_lo(length);
  std::vector<std::pair<int, int>> offsets;
  for (int t = lo; t < lo + length; ++t) offsets.emplace_back(t * step_row, t * step_col);
  return detail::se_from_offsets(length / 2, offsets);
}

namespace detail {

template <class Pick>
Image window_reduce(const Image& f, const StructuringElement& se, Pick pick) {
  const Size out_size{f.width() - se.width() + 1, f.height() - se.height() + 1};
  if (out_size.width < 1 || out_size.height < 1) {
    throw Error(Errc::KernelTooLarge, "structuring element " + std::to_string(se.width()) + "x" +
                                          std::to_string(se.height()) + " larger than image " + to_string(size_of(f)));
  }
  std::vector<std::pair<int, int>> cells;
  for (int r = 0; r < se.height(); ++r)
    for (int c = 0; c < se.width(); ++c)
      if (se.at(r, c)) cells.emplace_back(r, c);

  Image out(out_size.width, out_size.height);
  for (int i = 0; i < out_size.height; ++i) {
    for (int j = 0; j < out_size.width; ++j) {
      double acc = f(i + cells[0].first, j + cells[0].second);
      for (std::size_t n = 1; n < cells.size(); ++n) acc = pick(acc, f(i + cells[n].first, j + cells[n].second));
      out(i, j) = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Valid-mode flat dilation: out(x) = max over b in B of f(x - b).
inline Image dilate(const Image& f, const StructuringElement& se) {
  return detail::window_reduce(f, se.reflected(), [](double a, double b) { return std::max(a, b); });
}

/// Valid-mode flat erosion: out(x) = min over b in B of f(x + b).
inline Image erode(const Image& f, const StructuringElement& se) {
  return detail::window_reduce(f, se, [](double a, double b) { return std::min(a, b); });
}

inline Image open(const Image& f, const StructuringElement& se) { return dilate(erode(f, se), se); }

inline Image close(const Image& f, const StructuringElement& se) { return erode(dilate(f, se), se); }

inline Image white_top_hat(const Image& f, const StructuringElement& se) {
  Image opened = open(f, se);
  Image residue = center_crop(f, size_of(opened));
  for (std::size_t i = 0; i < residue.size(); ++i) residue.pixels()[i] -= opened.pixels()[i];
  return residue;
}

inline Image black_top_hat(const Image& f, const StructuringElement& se) {
  Image residue = close(f, se);
  const Image base = center_crop(f, size_of(residue));
  for (std::size_t i = 0; i < residue.size(); ++i) residue.pixels()[i] -= base.pixels()[i];
  return residue;
}

}  // namespace mcnn
