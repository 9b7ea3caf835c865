#pragma once

#include <cmath>
#include <string>

#include "mcnn/correlate.hpp"
#include "mcnn/error.hpp"
#include "mcnn/image.hpp"
#include "mcnn/morphology.hpp"

namespace mcnn {

/// Smallest admissible weight of a counter-harmonic-mean kernel. Keeps the
/// denominator sum strictly positive.
inline constexpr double kWeightFloor = 1e-60;

/// Largest admissible |P|.
inline constexpr double kMaxOrder = 20.0;

inline Taps flat_kernel(int size, double value = 1.0) { return Taps(size, size, value); }

/// Kernel with `value` on the cells of `se` and kWeightFloor elsewhere.
inline Taps kernel_from_se(const StructuringElement& se, double value = 1.0) {
  Taps k(se.width(), se.height(), kWeightFloor);
  for (int r = 0; r < se.height(); ++r)
    for (int c = 0; c < se.width(); ++c)
      if (se.at(r, c)) k(r, c) = value;
  return k;
}

/// Intermediates of one counter-harmonic-mean evaluation. The layer module
/// keeps them around for the backward pass.
struct ChmTerms {
  Image log_f;
  Image pow_p;       // f^P
  Image pow_p1;      // f^(P+1)
  Image numerator;   // f^(P+1) correlated with w
  Image denominator; // f^P correlated with w
  Image out;         // numerator / denominator
};

namespace detail {

inline void require_chm_domain(const Image& f, const Taps& w, double order) {
  if (!(std::abs(order) <= kMaxOrder)) {
    throw Error(Errc::InvalidArgument, "order P = " + std::to_string(order) + " outside [-20, 20]");
  }
  for (double v : w.values()) {
    if (!(v >= kWeightFloor)) throw Error(Errc::InvalidArgument, "kernel weight below floor: " + std::to_string(v));
  }
  for (double v : f.pixels()) {
    if (!(v > 0.0)) throw Error(Errc::InvalidArgument, "CHM input must be strictly positive, got " + std::to_string(v));
  }
}

}  // namespace detail

/// Evaluates the counter-harmonic mean of order P and fills every
/// intermediate. Powers are computed once as exp(P log f) and reused for
/// both the numerator and the denominator.
inline void chm_terms(const Image& f, const Taps& w, double order, ChmTerms& t) {
  detail::require_chm_domain(f, w, order);
  t.log_f = f;
  t.pow_p = f;
  t.pow_p1 = f;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double lf = std::log(f.pixels()[i]);
    const double p = std::exp(order * lf);
    t.log_f.pixels()[i] = lf;
    t.pow_p.pixels()[i] = p;
    t.pow_p1.pixels()[i] = p * f.pixels()[i];
  }
  correlate_valid(t.pow_p1, w, t.numerator);
  correlate_valid(t.pow_p, w, t.denominator);
  t.out = t.numerator;
  for (std::size_t i = 0; i < t.out.size(); ++i) t.out.pixels()[i] /= t.denominator.pixels()[i];
}

/// Valid-mode counter-harmonic mean filter of order P:
/// out = (f^(P+1) * w) / (f^P * w).
inline Image chm_filter(const Image& f, const Taps& w, double order) {
  ChmTerms t;
  chm_terms(f, w, order, t);
  return std::move(t.out);
}

inline double max_abs_difference(const Image& a, const Image& b) {
  require_same_shape(a, b, "max_abs_difference");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.pixels()[i] - b.pixels()[i]));
  return worst;
}

/// Sup-norm distance between the order-P CHM with a flat kernel and the
/// exact dilation by the kernel's window. Shrinks toward 0 as P grows.
inline double pseudo_dilate_bound_check(const Image& f, const Taps& w, double order) {
  if (!(order > 0.0)) throw Error(Errc::InvalidArgument, "pseudo-dilation needs P > 0");
  const StructuringElement window(w.width(), w.height(), std::vector<std::uint8_t>(w.size(), 1));
  return max_abs_difference(chm_filter(f, w, order), dilate(f, window));
}

/// Order -P followed by order +P. Approaches the opening as P grows.
inline Image pseudo_open(const Image& f, const Taps& w, double order) {
  if (!(order > 0.0)) throw Error(Errc::InvalidArgument, "pseudo-opening takes the magnitude P > 0");
  return chm_filter(chm_filter(f, w, -order), w, order);
}

/// Order +P followed by order -P. Approaches the closing as P grows.
inline Image pseudo_close(const Image& f, const Taps& w, double order) {
  if (!(order > 0.0)) throw Error(Errc::InvalidArgument, "pseudo-closing takes the magnitude P > 0");
  return chm_filter(chm_filter(f, w, order), w, -order);
}

}  // namespace mcnn
