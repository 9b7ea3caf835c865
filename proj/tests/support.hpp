#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "mcnn/image.hpp"
#include "mcnn/morphology.hpp"
#include "mcnn/rng.hpp"

namespace testing_support {

inline mcnn::Image random_image(int w, int h, mcnn::Rng& rng, double lo = 0.05, double hi = 1.0) {
  mcnn::Image img(w, h);
  for (double& v : img.pixels()) v = rng.uniform(lo, hi);
  return img;
}

// Raw 8-bit values, normalized: every value lies on the grid PGM files use.
inline mcnn::Image random_levels(int w, int h, mcnn::Rng& rng) {
  mcnn::Image raw(w, h);
  for (double& v : raw.pixels()) v = static_cast<double>(rng.below(256));
  return mcnn::normalize(raw);
}

// Textbook dilation: out(x) = max over set cells b of f(x - b), with b
// measured from the mask center; valid region only.
inline mcnn::Image brute_dilate(const mcnn::Image& f, const mcnn::StructuringElement& se) {
  const int rh = se.height() / 2;
  const int rw = se.width() / 2;
  mcnn::Image out(f.width() - 2 * rw, f.height() - 2 * rh);
  for (int i = 0; i < out.height(); ++i) {
    for (int j = 0; j < out.width(); ++j) {
      double best = -std::numeric_limits<double>::infinity();
      for (int r = 0; r < se.height(); ++r)
        for (int c = 0; c < se.width(); ++c)
          if (se.at(r, c)) best = std::max(best, f(i + rh - (r - rh), j + rw - (c - rw)));
      out(i, j) = best;
    }
  }
  return out;
}

// Textbook erosion: out(x) = min over set cells b of f(x + b).
inline mcnn::Image brute_erode(const mcnn::Image& f, const mcnn::StructuringElement& se) {
  const int rh = se.height() / 2;
  const int rw = se.width() / 2;
  mcnn::Image out(f.width() - 2 * rw, f.height() - 2 * rh);
  for (int i = 0; i < out.height(); ++i) {
    for (int j = 0; j < out.width(); ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (int r = 0; r < se.height(); ++r)
        for (int c = 0; c < se.width(); ++c)
          if (se.at(r, c)) best = std::min(best, f(i + r, j + c));
      out(i, j) = best;
    }
  }
  return out;
}

inline double max_abs(const mcnn::Image& a, const mcnn::Image& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.pixels()[i] - b.pixels()[i]));
  return worst;
}

// Fresh directory under the system temp dir, removed first if present.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mcnn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
