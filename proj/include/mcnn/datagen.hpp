#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcnn/config.hpp"
#include "mcnn/error.hpp"
#include "mcnn/image.hpp"
#include "mcnn/morphology.hpp"
#include "mcnn/rng.hpp"

namespace mcnn {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels()[i] - b.pixels()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

/// PSNR in dB for a peak of 1.0; +infinity when the error is zero.
inline double psnr_from_mse(double mse_value) {
  if (mse_value <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse_value);
}

inline double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

// ---------------------------------------------------------------------------
// Noise models. Every output stays within [1/512, 511/512].
// ---------------------------------------------------------------------------

/// Each pixel is independently switched off (set to the darkest level) with
/// probability p.
inline Image binomial_noise(const Image& f, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::InvalidArgument, "binomial probability outside [0, 1]");
  Image out = f;
  for (double& v : out.pixels())
    if (rng.bernoulli(p)) v = kMinIntensity;
  return out;
}

/// Each pixel is replaced with probability p, by the brightest or the darkest
/// level with equal odds.
inline Image salt_pepper_noise(const Image& f, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::InvalidArgument, "salt-and-pepper probability outside [0, 1]");
  Image out = f;
  for (double& v : out.pixels()) {
    if (rng.bernoulli(p)) v = rng.bernoulli(0.5) ? kMaxIntensity : kMinIntensity;
  }
  return out;
}

/// Additive N(0, sigma^2) with sigma a fraction of the unit range, clamped.
inline Image gaussian_noise(const Image& f, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw Error(Errc::InvalidArgument, "gaussian sigma must be >= 0");
  Image out = f;
  if (sigma == 0.0) return out;
  for (double& v : out.pixels()) v = std::clamp(v + sigma * rng.normal(), kMinIntensity, kMaxIntensity);
  return out;
}

struct NoiseSpec {
  enum class Kind { None, Binomial, SaltPepper, Gaussian };
  Kind kind = Kind::None;
  double amount = 0.0;

  static NoiseSpec parse(std::string_view text) {
    const std::vector<std::string> parts = split(text, ':');
    const std::string& name = parts[0];
    auto amount = [&]() {
      if (parts.size() != 2) throw Error(Errc::InvalidConfig, "noise '" + std::string(text) + "' needs one parameter");
      return parse_double(parts[1], "noise amount");
    };
    NoiseSpec n;
    if (name == "none" || name.empty()) return n;
    if (name == "binomial") {
      n = {Kind::Binomial, amount()};
    } else if (name == "salt_pepper") {
      n = {Kind::SaltPepper, amount()};
    } else if (name == "gaussian") {
      n = {Kind::Gaussian, amount()};
    } else {
      throw Error(Errc::InvalidConfig, "unknown noise '" + name + "'");
    }
    if (n.kind != Kind::Gaussian && !(n.amount >= 0.0 && n.amount <= 1.0)) {
      throw Error(Errc::InvalidConfig, "noise probability outside [0, 1]");
    }
    if (n.kind == Kind::Gaussian && !(n.amount >= 0.0)) throw Error(Errc::InvalidConfig, "gaussian sigma must be >= 0");
    return n;
  }

  std::string to_string() const {
    switch (kind) {
      case Kind::None: return "none";
      case Kind::Binomial: return "binomial:" + format_double(amount);
      case Kind::SaltPepper: return "salt_pepper:" + format_double(amount);
      case Kind::Gaussian: return "gaussian:" + format_double(amount);
    }
    return "?";
  }

  Image apply(const Image& f, Rng& rng) const {
    switch (kind) {
      case Kind::None: return f;
      case Kind::Binomial: return binomial_noise(f, amount, rng);
      case Kind::SaltPepper: return salt_pepper_noise(f, amount, rng);
      case Kind::Gaussian: return gaussian_noise(f, amount, rng);
    }
    return f;
  }
};

// ---------------------------------------------------------------------------
// Synthetic imagery
// ---------------------------------------------------------------------------

/// Snaps values onto the normalized 8-bit grid so that an image written as
/// PGM and loaded back is bit-identical.
inline Image quantize(const Image& f) {
  Image raw = denormalize(f);
  for (double& v : raw.pixels()) v = std::round(v);
  return normalize(raw);
}

namespace detail {

// Bilinearly interpolated lattice noise with values in [-1, 1].
inline Image value_noise(int width, int height, int cell, Rng& rng) {
  const int gw = width / cell + 2;
  const int gh = height / cell + 2;
  std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
  for (double& g : grid) g = rng.uniform(-1.0, 1.0);
  Image out(width, height);
  for (int r = 0; r < height; ++r) {
    const double y = static_cast<double>(r) / cell;
    const int y0 = static_cast<int>(y);
    const double ty = y - y0;
    for (int c = 0; c < width; ++c) {
      const double x = static_cast<double>(c) / cell;
      const int x0 = static_cast<int>(x);
      const double tx = x - x0;
      auto at = [&](int gy, int gx) { return grid[static_cast<std::size_t>(gy) * gw + gx]; };
      const double top = at(y0, x0) * (1 - tx) + at(y0, x0 + 1) * tx;
      const double bottom = at(y0 + 1, x0) * (1 - tx) + at(y0 + 1, x0 + 1) * tx;
      out(r, c) = top * (1 - ty) + bottom * ty;
    }
  }
  return out;
}

inline void paint_disk(Image& img, double cy, double cx, double radius, double delta) {
  for (int r = std::max(0, static_cast<int>(cy - radius - 1)); r <= std::min(img.height() - 1, static_cast<int>(cy + radius + 1)); ++r) {
    for (int c = std::max(0, static_cast<int>(cx - radius - 1)); c <= std::min(img.width() - 1, static_cast<int>(cx + radius + 1)); ++c) {
      const double dy = r - cy;
      const double dx = c - cx;
      if (dy * dy + dx * dx <= radius * radius) img(r, c) += delta;
    }
  }
}

inline void clamp_intensity(Image& img) {
  for (double& v : img.pixels()) v = std::clamp(v, kMinIntensity, kMaxIntensity);
}

}  // namespace detail

struct DefectSpec {
  int spots = 4;
  double spot_radius = 2.0;
  double spot_contrast = 0.3;
  int lines = 1;
  int line_length = 40;
  int line_width = 1;
  double line_contrast = 0.3;
  int orientation = 90;  // degrees; 90 = vertical
};

/// Mid-gray background with low-amplitude smooth texture (values within
/// [0.3, 0.7]), bright disks and dark thin segments. Deterministic per rng.
inline Image synth_defects(int width, int height, const DefectSpec& spec, Rng& rng) {
  Image img(width, height, 0.5);
  const Image coarse = detail::value_noise(width, height, 16, rng);
  const Image fine = detail::value_noise(width, height, 4, rng);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels()[i] += 0.12 * coarse.pixels()[i] + 0.05 * fine.pixels()[i];

  for (int s = 0; s < spec.spots; ++s) {
    const double cy = rng.uniform(spec.spot_radius, height - 1 - spec.spot_radius);
    const double cx = rng.uniform(spec.spot_radius, width - 1 - spec.spot_radius);
    detail::paint_disk(img, cy, cx, spec.spot_radius, spec.spot_contrast);
  }
  const double angle = spec.orientation * std::numbers::pi / 180.0;
  const double dy = -std::sin(angle);
  const double dx = std::cos(angle);
  for (int l = 0; l < spec.lines; ++l) {
    const double cy = rng.uniform(0.0, height - 1.0);
    const double cx = rng.uniform(0.0, width - 1.0);
    std::vector<std::uint8_t> hit(img.size(), 0);
    for (int t = -spec.line_length / 2; t < spec.line_length - spec.line_length / 2; ++t) {
      for (int w = 0; w < spec.line_width; ++w) {
        const int r = static_cast<int>(std::lround(cy + t * dy + w * dx));
        const int c = static_cast<int>(std::lround(cx + t * dx - w * dy));
        if (r >= 0 && r < height && c >= 0 && c < width) hit[static_cast<std::size_t>(r) * width + c] = 1;
      }
    }
    for (std::size_t i = 0; i < img.size(); ++i)
      if (hit[i]) img.pixels()[i] -= spec.line_contrast;
  }
  detail::clamp_intensity(img);
  return quantize(img);
}

/// Low-contrast texture around mid-gray: a smooth base, pixel-scale grain and
/// small blobs of either sign. The grain puts window extrema anywhere inside
/// the window rather than only on its border.
inline Image synth_texture(int width, int height, Rng& rng) {
  Image img(width, height, 0.5);
  const int cells[] = {24, 2, 1};
  const double amps[] = {0.07, 0.035, 0.02};
  for (int o = 0; o < 3; ++o) {
    const Image layer = detail::value_noise(width, height, cells[o], rng);
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels()[i] += amps[o] * layer.pixels()[i];
  }
  const int blobs = std::max(1, width * height / 60);
  for (int b = 0; b < blobs; ++b) {
    const double radius = rng.uniform(0.5, 1.5);
    const double delta = rng.uniform(0.07, 0.14) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    detail::paint_disk(img, rng.uniform(0, height - 1.0), rng.uniform(0, width - 1.0), radius, delta);
  }
  detail::clamp_intensity(img);
  return quantize(img);
}

// ---------------------------------------------------------------------------
// Tasks and sample streams
// ---------------------------------------------------------------------------

/// Textual structuring element description: square:N, diamond:N, disk:N or
/// line:LENGTH:ANGLE.
struct SeSpec {
  std::string shape = "square";
  int size = 5;
  int angle = 0;

  static SeSpec parse(std::string_view text) {
    const std::vector<std::string> parts = split(text, ':');
    SeSpec s;
    s.shape = parts[0];
    if (parts.size() < 2) throw Error(Errc::InvalidConfig, "structuring element '" + std::string(text) + "' needs a size");
    s.size = static_cast<int>(parse_int(parts[1], "structuring element size"));
    if (s.shape == "line") {
      if (parts.size() != 3) throw Error(Errc::InvalidConfig, "line needs line:LENGTH:ANGLE");
      s.angle = static_cast<int>(parse_int(parts[2], "line angle"));
    } else if (parts.size() != 2) {
      throw Error(Errc::InvalidConfig, "unexpected parameters in '" + std::string(text) + "'");
    }
    s.make();
    return s;
  }

  StructuringElement make() const {
    if (shape == "square") return se_square(size);
    if (shape == "diamond") return se_diamond(size);
    if (shape == "disk") return se_disk(size);
    if (shape == "line") return se_line(size, angle);
    throw Error(Errc::InvalidConfig, "unknown structuring element shape '" + shape + "'");
  }

  std::string to_string() const {
    return shape + ":" + std::to_string(size) + (shape == "line" ? ":" + std::to_string(angle) : "");
  }
};

enum class Operator { Identity, Dilate, Erode, Open, Close, WhiteTopHat, BlackTopHat, DualTopHat, External };

inline Operator parse_operator(std::string_view s) {
  if (s == "identity") return Operator::Identity;
  if (s == "dilate") return Operator::Dilate;
  if (s == "erode") return Operator::Erode;
  if (s == "open") return Operator::Open;
  if (s == "close") return Operator::Close;
  if (s == "white_top_hat") return Operator::WhiteTopHat;
  if (s == "black_top_hat") return Operator::BlackTopHat;
  if (s == "dual_top_hat") return Operator::DualTopHat;
  if (s == "external_target") return Operator::External;
  throw Error(Errc::InvalidConfig, "unknown operator '" + std::string(s) + "'");
}

inline std::string to_string(Operator op) {
  switch (op) {
    case Operator::Identity: return "identity";
    case Operator::Dilate: return "dilate";
    case Operator::Erode: return "erode";
    case Operator::Open: return "open";
    case Operator::Close: return "close";
    case Operator::WhiteTopHat: return "white_top_hat";
    case Operator::BlackTopHat: return "black_top_hat";
    case Operator::DualTopHat: return "dual_top_hat";
    case Operator::External: return "external_target";
  }
  return "?";
}

struct TaskSpec {
  Operator op = Operator::Dilate;
  SeSpec se;
  SeSpec se2{"line", 10, 0};  // second operand of dual_top_hat (black top-hat)
  NoiseSpec noise;
  std::uint64_t seed = 1;
  int patch = 0;  // input patch side for streaming; 0 = whole images
};

/// Applies the task's oracle operator to a clean image. The result is in
/// valid geometry (shrunk by the operator's margin).
///
/// dual_top_hat is the mean of the white top-hat by `se` and the black
/// top-hat by `se2`, on their common geometry.
inline Image apply_operator(const TaskSpec& task, const Image& f) {
  switch (task.op) {
    case Operator::Identity: return f;
    case Operator::Dilate: return dilate(f, task.se.make());
    case Operator::Erode: return erode(f, task.se.make());
    case Operator::Open: return open(f, task.se.make());
    case Operator::Close: return close(f, task.se.make());
    case Operator::WhiteTopHat: return white_top_hat(f, task.se.make());
    case Operator::BlackTopHat: return black_top_hat(f, task.se.make());
    case Operator::DualTopHat: {
      const Image white = white_top_hat(f, task.se.make());
      const Image black = black_top_hat(f, task.se2.make());
      const Size common{std::min(white.width(), black.width()), std::min(white.height(), black.height())};
      Image out = center_crop(white, common);
      const Image b = center_crop(black, common);
      for (std::size_t i = 0; i < out.size(); ++i) out.pixels()[i] = 0.5 * (out.pixels()[i] + b.pixels()[i]);
      return out;
    }
    case Operator::External: throw Error(Errc::InvalidConfig, "external targets come from files, not an operator");
  }
  return f;
}

struct Sample {
  Image input;
  Image target;
};

/// Streams (input, target) pairs for one task over a set of clean images.
///
/// Targets are computed once per clean image and cropped to the network's
/// output geometry. With noise, sample i corrupts its input with
/// Rng::substream(task.seed, i), so the stream is infinite yet reproducible.
/// With task.patch > 0 each sample is a random patch of that side.
class PairStream {
 public:
  PairStream(std::vector<Image> clean, TaskSpec task, int net_margin, std::vector<Image> external_targets = {})
      : clean_(std::move(clean)), task_(std::move(task)), net_margin_(net_margin) {
    if (clean_.empty()) throw Error(Errc::InvalidArgument, "sample stream needs at least one image");
    if (task_.op == Operator::External && external_targets.size() != clean_.size()) {
      throw Error(Errc::InvalidArgument, "external targets must pair one-to-one with inputs");
    }
    for (std::size_t i = 0; i < clean_.size(); ++i) {
      const Image& f = clean_[i];
      if (f.width() <= net_margin_ || f.height() <= net_margin_) {
        throw Error(Errc::KernelTooLarge, "image " + to_string(size_of(f)) + " smaller than network margin " +
                                              std::to_string(net_margin_));
      }
      Image target = task_.op == Operator::External ? external_targets[i] : apply_operator(task_, f);
      const int mw = f.width() - target.width();
      const int mh = f.height() - target.height();
      if (mw != mh || mw < 0) throw Error(Errc::ShapeMismatch, "target geometry does not match input");
      if (mw > net_margin_) {
        throw Error(Errc::ShapeMismatch, "operator margin " + std::to_string(mw) + " exceeds network margin " +
                                             std::to_string(net_margin_));
      }
      if ((net_margin_ - mw) % 2 != 0) throw Error(Errc::OddMargin, "operator and network margins differ by an odd amount");
      targets_.push_back(std::move(target));
      target_margins_.push_back(mw);
    }
    if (task_.patch > 0) {
      if (task_.patch <= net_margin_) throw Error(Errc::InvalidConfig, "patch must exceed the network margin");
      for (const Image& f : clean_) {
        if (f.width() < task_.patch || f.height() < task_.patch) throw Error(Errc::InvalidConfig, "patch larger than image");
      }
    }
  }

  const TaskSpec& task() const noexcept { return task_; }
  int net_margin() const noexcept { return net_margin_; }
  std::size_t image_count() const noexcept { return clean_.size(); }
  const Image& clean(std::size_t i) const { return clean_[i]; }

  /// Samples per pass over the data: one per image, or for patches the
  /// number of output-sized tiles covering every image once.
  std::uint64_t epoch_length() const {
    if (task_.patch == 0) return clean_.size();
    const double tile = static_cast<double>(task_.patch - net_margin_) * (task_.patch - net_margin_);
    double pixels = 0.0;
    for (const Image& f : clean_) pixels += static_cast<double>(f.width() - net_margin_) * (f.height() - net_margin_);
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(pixels / tile)));
  }

  Sample draw(std::uint64_t index) const {
    Rng rng = Rng::substream(task_.seed, index);
    if (task_.patch == 0) return whole(static_cast<std::size_t>(index % clean_.size()), rng);
    const std::size_t img = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(clean_.size())));
    const Image& f = clean_[img];
    const int top = rng.below(f.height() - task_.patch + 1);
    const int left = rng.below(f.width() - task_.patch + 1);
    return region(img, top, left, task_.patch, task_.patch, rng);
  }

  /// Whole image `i`, with noise drawn from substream (seed, noise_index).
  Sample whole(std::size_t i, std::uint64_t noise_index) const {
    Rng rng = Rng::substream(task_.seed ^ 0x5eed5eed5eedULL, noise_index);
    return whole(i, rng);
  }

  /// Target of image i aligned with a network of this stream's margin.
  Image aligned_target(std::size_t i) const {
    const Image& f = clean_[i];
    return center_crop(targets_[i], f.width() - net_margin_, f.height() - net_margin_);
  }

 private:
  Sample whole(std::size_t i, Rng& rng) const {
    return region(i, 0, 0, clean_[i].width(), clean_[i].height(), rng);
  }

  Sample region(std::size_t i, int top, int left, int width, int height, Rng& rng) const {
    const Image input = (width == clean_[i].width() && height == clean_[i].height()) ? clean_[i]
                                                                                     : crop(clean_[i], top, left, width, height);
    // Target pixel (r, c) of the network output sits at input (top + r + m/2, left + c + m/2).
    const int offset = (net_margin_ - target_margins_[i]) / 2;
    Image target = crop(targets_[i], top + offset, left + offset, width - net_margin_, height - net_margin_);
    return {task_.noise.apply(input, rng), std::move(target)};
  }

  std::vector<Image> clean_;
  TaskSpec task_;
  int net_margin_;
  std::vector<Image> targets_;
  std::vector<int> target_margins_;
};

/// Convenience entry point mirroring the stream constructor.
inline PairStream gen_pairs(std::vector<Image> images, const TaskSpec& task, int net_margin,
                            std::vector<Image> external_targets = {}) {
  return PairStream(std::move(images), task, net_margin, std::move(external_targets));
}

}  // namespace mcnn
