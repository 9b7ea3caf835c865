#pragma once

#include <span>
#include <vector>

#include "mcnn/error.hpp"
#include "mcnn/image.hpp"

namespace mcnn {

/// Odd-sized dense 2D filter of doubles, row-major.
///
/// Filters are applied as valid-mode correlations: output (i, j) sees input
/// rows i..i+height-1 and columns j..j+width-1, weighted by taps (r, c).
class Taps {
 public:
  Taps() = default;
  Taps(int width, int height, double fill = 0.0) : width_(width), height_(height) {
    if (width < 1 || height < 1 || width % 2 == 0 || height % 2 == 0) {
      throw Error(Errc::InvalidArgument, "kernel dimensions must be odd and positive, got " + std::to_string(width) +
                                             "x" + std::to_string(height));
    }
    values_.assign(static_cast<std::size_t>(width) * height, fill);
  }
  Taps(int width, int height, std::vector<double> values) : Taps(width, height) {
    if (values.size() != values_.size()) throw Error(Errc::ShapeMismatch, "kernel value count");
    values_ = std::move(values);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return values_.size(); }
  double& operator()(int r, int c) noexcept { return values_[static_cast<std::size_t>(r) * width_ + c]; }
  double operator()(int r, int c) const noexcept { return values_[static_cast<std::size_t>(r) * width_ + c]; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  friend bool operator==(const Taps&, const Taps&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

inline Size valid_output(Size in, int kernel_width, int kernel_height) {
  const Size out{in.width - kernel_width + 1, in.height - kernel_height + 1};
  if (out.width < 1 || out.height < 1) {
    throw Error(Errc::KernelTooLarge, "kernel " + std::to_string(kernel_width) + "x" + std::to_string(kernel_height) +
                                          " larger than input " + to_string(in));
  }
  return out;
}

/// out(i, j) = sum_{r,c} k(r, c) * src(i + r, j + c).
inline void correlate_valid(const Image& src, const Taps& k, Image& out) {
  const Size os = valid_output(size_of(src), k.width(), k.height());
  if (size_of(out) != os) out = Image(os.width, os.height);
  std::fill(out.pixels().begin(), out.pixels().end(), 0.0);
  for (int r = 0; r < k.height(); ++r) {
    for (int c = 0; c < k.width(); ++c) {
      const double w = k(r, c);
      if (w == 0.0) continue;
      for (int i = 0; i < os.height; ++i) {
        const double* s = src.row(i + r) + c;
        double* o = out.row(i);
        for (int j = 0; j < os.width; ++j) o[j] += w * s[j];
      }
    }
  }
}

inline Image correlate_valid(const Image& src, const Taps& k) {
  Image out;
  correlate_valid(src, k, out);
  return out;
}

/// Adjoint of correlate_valid with respect to the source:
/// dst(i + r, j + c) += k(r, c) * g(i, j). dst has the source geometry.
inline void correlate_adjoint_accumulate(const Image& g, const Taps& k, Image& dst) {
  if (dst.width() != g.width() + k.width() - 1 || dst.height() != g.height() + k.height() - 1) {
    throw Error(Errc::ShapeMismatch, "adjoint destination geometry");
  }
  for (int r = 0; r < k.height(); ++r) {
    for (int c = 0; c < k.width(); ++c) {
      const double w = k(r, c);
      if (w == 0.0) continue;
      for (int i = 0; i < g.height(); ++i) {
        const double* gi = g.row(i);
        double* d = dst.row(i + r) + c;
        for (int j = 0; j < g.width(); ++j) d[j] += w * gi[j];
      }
    }
  }
}

/// Adjoint of correlate_valid with respect to the taps:
/// grad(r, c) += sum_{i,j} g(i, j) * src(i + r, j + c).
inline void correlate_taps_gradient_accumulate(const Image& src, const Image& g, Taps& grad) {
  if (src.width() != g.width() + grad.width() - 1 || src.height() != g.height() + grad.height() - 1) {
    throw Error(Errc::ShapeMismatch, "tap gradient geometry");
  }
  for (int r = 0; r < grad.height(); ++r) {
    for (int c = 0; c < grad.width(); ++c) {
      double acc = 0.0;
      for (int i = 0; i < g.height(); ++i) {
        const double* s = src.row(i + r) + c;
        const double* gi = g.row(i);
        for (int j = 0; j < g.width(); ++j) acc += gi[j] * s[j];
      }
      grad(r, c) += acc;
    }
  }
}

}  // namespace mcnn
