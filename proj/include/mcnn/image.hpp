#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mcnn/error.hpp"

namespace mcnn {

/// Row-major grayscale raster of doubles.
///
/// Raw images (as loaded from disk) hold integer values in [0, 255]; the
/// networks operate on normalized images whose values are strictly positive
/// (see normalize()).
class Image {
 public:
  Image() = default;

  Image(int width, int height, double fill = 0.0) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw Error(Errc::InvalidArgument, "image dimensions must be positive, got " +
                                             std::to_string(width) + "x" + std::to_string(height));
    }
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  Image(int width, int height, std::vector<double> data) : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1) {
      throw Error(Errc::InvalidArgument, "image dimensions must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw Error(Errc::ShapeMismatch, "data length " + std::to_string(data_.size()) + " does not match " +
                                           std::to_string(width) + "x" + std::to_string(height));
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(int row, int col) noexcept { return data_[index(row, col)]; }
  double operator()(int row, int col) const noexcept { return data_[index(row, col)]; }

  std::span<double> pixels() noexcept { return data_; }
  std::span<const double> pixels() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }
  double* row(int r) noexcept { return data_.data() + index(r, 0); }
  const double* row(int r) const noexcept { return data_.data() + index(r, 0); }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  double min() const { return *std::min_element(data_.begin(), data_.end()); }
  double max() const { return *std::max_element(data_.begin(), data_.end()); }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int row, int col) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

struct Size {
  int width = 0;
  int height = 0;
  friend bool operator==(const Size&, const Size&) = default;
};

inline Size size_of(const Image& img) { return {img.width(), img.height()}; }

inline std::string to_string(Size s) { return std::to_string(s.width) + "x" + std::to_string(s.height); }

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(Errc::ShapeMismatch, std::string(what) + ": " + to_string(size_of(a)) + " vs " + to_string(size_of(b)));
  }
}

// Lowest and highest values produced by normalize().
inline constexpr double kMinIntensity = 1.0 / 512.0;
inline constexpr double kMaxIntensity = 511.0 / 512.0;

namespace detail {

class PgmReader {
 public:
  explicit PgmReader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::string magic() {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || (bytes_[1] != '2' && bytes_[1] != '5')) {
      throw Error(Errc::BadMagic, "not a P2/P5 PGM file");
    }
    pos_ = 2;
    return bytes_.substr(0, 2);
  }

  // Next whitespace-delimited decimal, skipping '#' comments.
  long header_int(const char* field) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw Error(Errc::MalformedHeader, std::string("missing ") + field);
    long value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000L) throw Error(Errc::MalformedHeader, std::string(field) + " out of range");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw Error(Errc::MalformedHeader, std::string("non-numeric ") + field);
    return value;
  }

  long raster_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw Error(Errc::Truncated, "raster ends early");
    long value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 65535) break;
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw Error(Errc::MalformedHeader, "non-numeric sample in raster");
    return value;
  }

  // P5: exactly one whitespace byte separates maxval from the binary raster.
  std::span<const unsigned char> binary_raster(std::size_t count) {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw Error(Errc::MalformedHeader, "missing separator before binary raster");
    }
    ++pos_;
    if (bytes_.size() - pos_ < count) {
      throw Error(Errc::Truncated, "expected " + std::to_string(count) + " raster bytes, found " +
                                       std::to_string(bytes_.size() - pos_));
    }
    return {reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_, count};
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses an in-memory P2 or P5 PGM with maxval 255.
inline Image parse_pgm(std::string bytes) {
  detail::PgmReader reader(std::move(bytes));
  const std::string magic = reader.magic();
  const long width = reader.header_int("width");
  const long height = reader.header_int("height");
  const long maxval = reader.header_int("maxval");
  if (width < 1 || height < 1) throw Error(Errc::MalformedHeader, "zero image dimension");
  if (maxval != 255) throw Error(Errc::MaxvalUnsupported, "maxval " + std::to_string(maxval) + " (only 255 supported)");
  const auto count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<double> data(count);
  if (magic == "P5") {
    auto raster = reader.binary_raster(count);
    std::copy(raster.begin(), raster.end(), data.begin());
  } else {
    for (auto& v : data) {
      const long sample = reader.raster_int();
      if (sample > 255) throw Error(Errc::MalformedHeader, "sample exceeds maxval");
      v = static_cast<double>(sample);
    }
  }
  return Image(static_cast<int>(width), static_cast<int>(height), std::move(data));
}

inline Image load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_pgm(std::move(bytes));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

/// Writes a binary (P5) PGM. Values are rounded to the nearest integer and
/// must already lie in [0, 255].
inline void save_pgm(const Image& img, const std::filesystem::path& path) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::round(img.pixels()[i]);
    if (!(v >= 0.0 && v <= 255.0)) {
      throw Error(Errc::InvalidArgument, "pixel value " + std::to_string(img.pixels()[i]) + " outside [0, 255]");
    }
    out[header + i] = static_cast<char>(static_cast<unsigned char>(v));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(Errc::Io, "write failed for " + path.string());
}

/// Maps raw 8-bit values v to (v + 0.5) / 256, i.e. into [1/512, 511/512].
inline Image normalize(const Image& raw) {
  Image out = raw;
  for (double& v : out.pixels()) v = (v + 0.5) / 256.0;
  return out;
}

/// Inverse of normalize() on its range; values outside are clamped to [0, 255].
inline Image denormalize(const Image& img) {
  Image out = img;
  for (double& v : out.pixels()) v = std::clamp(v * 256.0 - 0.5, 0.0, 255.0);
  return out;
}

inline Image crop(const Image& img, int top, int left, int width, int height) {
  if (top < 0 || left < 0 || width < 1 || height < 1 || top + height > img.height() || left + width > img.width()) {
    throw Error(Errc::CropTooLarge, "crop window out of bounds");
  }
  Image out(width, height);
  for (int r = 0; r < height; ++r) {
    std::copy_n(img.row(top + r) + left, width, out.row(r));
  }
  return out;
}

/// Central window of the requested size. The size difference must be even on
/// both axes so the window is exactly centered.
inline Image center_crop(const Image& img, int target_width, int target_height) {
  if (target_width > img.width() || target_height > img.height() || target_width < 1 || target_height < 1) {
    throw Error(Errc::CropTooLarge, "cannot crop " + to_string(size_of(img)) + " to " +
                                        to_string({target_width, target_height}));
  }
  const int dw = img.width() - target_width;
  const int dh = img.height() - target_height;
  if (dw % 2 != 0 || dh % 2 != 0) {
    throw Error(Errc::OddMargin, "odd margin cropping " + to_string(size_of(img)) + " to " +
                                     to_string({target_width, target_height}));
  }
  if (dw == 0 && dh == 0) return img;
  return crop(img, dh / 2, dw / 2, target_width, target_height);
}

inline Image center_crop(const Image& img, Size target) { return center_crop(img, target.width, target.height); }

/// Output size of a valid-mode filter with a k x k window.
inline Size valid_size(int in_width, int in_height, int k) {
  if (k < 1 || k % 2 == 0) throw Error(Errc::InvalidArgument, "kernel size must be odd, got " + std::to_string(k));
  if (k > in_width || k > in_height) {
    throw Error(Errc::KernelTooLarge, "kernel " + std::to_string(k) + " larger than image " +
                                          to_string({in_width, in_height}));
  }
  return {in_width - k + 1, in_height - k + 1};
}

}  // namespace mcnn
