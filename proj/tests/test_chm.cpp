#include <gtest/gtest.h>

#include "mcnn/chm.hpp"
#include "assertions.hpp"
#include "support.hpp"

using namespace mcnn;

namespace {

Image window_1_to_9() {
  Image f(3, 3);
  for (int i = 0; i < 9; ++i) f.pixels()[i] = 0.1 * (i + 1);
  return f;
}

// Windowed min/max by direct loops.
Image window_extreme(const Image& f, int k, bool take_max) {
  Image out(f.width() - k + 1, f.height() - k + 1);
  for (int i = 0; i < out.height(); ++i)
    for (int j = 0; j < out.width(); ++j) {
      double m = f(i, j);
      for (int r = 0; r < k; ++r)
        for (int c = 0; c < k; ++c) m = take_max ? std::max(m, f(i + r, j + c)) : std::min(m, f(i + r, j + c));
      out(i, j) = m;
    }
  return out;
}

}  // namespace

TEST(Chm, ConstantImage) {
  Rng rng(1);
  const Image f(7, 7, 0.3);
  Taps w(3, 3);
  for (double& v : w.values()) v = rng.uniform(0.1, 1.0);
  for (double p : {-20.0, -3.0, 0.0, 0.5, 7.0, 20.0}) {
    EXPECT_TRUE(testing_support::is_constant(chm_filter(f, w, p), 0.3));
  }
}

TEST(Chm, HandEvaluatedWindows) {
  EXPECT_NEAR(chm_filter(window_1_to_9(), flat_kernel(3), 0.0)(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(chm_filter(window_1_to_9(), flat_kernel(3), 1.0)(0, 0), 2.85 / 4.5, 1e-15);
}

TEST(Chm, ZeroOrderIsNormalizedCorrelation) {
  Rng rng(2);
  const Image f = testing_support::random_image(10, 9, rng);
  Taps w(5, 3);
  for (double& v : w.values()) v = rng.uniform(0.1, 1.0);
  double wsum = 0.0;
  for (double v : w.values()) wsum += v;
  const Image out = chm_filter(f, w, 0.0);
  for (int i = 0; i < out.height(); ++i)
    for (int j = 0; j < out.width(); ++j) {
      double acc = 0.0;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 5; ++c) acc += f(i + r, j + c) * w(r, c);
      EXPECT_NEAR(out(i, j), acc / wsum, 1e-14);
    }
}

TEST(Chm, BoundsAndMonotoneInOrder) {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Image f = testing_support::random_image(12, 12, rng, 1.0 / 512, 511.0 / 512);
    Taps w(3, 3);
    for (double& v : w.values()) v = rng.uniform(kWeightFloor, 1.0);
    const Image lo = window_extreme(f, 3, false);
    const Image hi = window_extreme(f, 3, true);
    Image prev = chm_filter(f, w, -20.0);
    for (double p = -20.0; p <= 20.0; p += 2.5) {
      const Image out = chm_filter(f, w, p);
      for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_GE(out.pixels()[i], lo.pixels()[i] * (1 - 1e-12));
        EXPECT_LE(out.pixels()[i], hi.pixels()[i] * (1 + 1e-12));
        EXPECT_GE(out.pixels()[i], prev.pixels()[i] * (1 - 1e-12));
      }
      prev = out;
    }
  }
}

TEST(Chm, TwoLevelWorstWindow) {
  // Enumerate all 2^9 binary 3x3 windows; the worst gap to the max is the
  // window with a single bright pixel.
  const double a = 1.0 / 512;
  const double b = 511.0 / 512;
  const double p = 10.0;
  double worst = 0.0;
  for (int pattern = 0; pattern < 512; ++pattern) {
    Image f(3, 3);
    for (int i = 0; i < 9; ++i) f.pixels()[i] = (pattern >> i) & 1 ? b : a;
    worst = std::max(worst, pseudo_dilate_bound_check(f, flat_kernel(3), p));
  }
  const double lehmer_one_bright = (std::pow(b, p + 1) + 8 * std::pow(a, p + 1)) / (std::pow(b, p) + 8 * std::pow(a, p));
  EXPECT_NEAR(worst, b - lehmer_one_bright, 1e-15);
}

TEST(Chm, ConvergesToDilation) {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Image f = testing_support::random_image(32, 32, rng);
    const double d5 = pseudo_dilate_bound_check(f, flat_kernel(5), 5.0);
    const double d10 = pseudo_dilate_bound_check(f, flat_kernel(5), 10.0);
    const double d20 = pseudo_dilate_bound_check(f, flat_kernel(5), 20.0);
    EXPECT_GT(d5, d10);
    EXPECT_GT(d10, d20);
  }
  EXPECT_EQ(pseudo_dilate_bound_check(Image(9, 9, 0.6), flat_kernel(5), 10.0), 0.0);
}

TEST(Chm, PseudoOpenClose) {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const Image f = testing_support::random_image(12, 12, rng);
    const StructuringElement box = se_square(3);
    const double gap5 = max_abs_difference(pseudo_open(f, flat_kernel(3), 5.0), open(f, box));
    const double gap15 = max_abs_difference(pseudo_open(f, flat_kernel(3), 15.0), open(f, box));
    EXPECT_LT(gap15, gap5);
    const Image po = pseudo_open(f, flat_kernel(3), 15.0);
    const Image pc = pseudo_close(f, flat_kernel(3), 15.0);
    for (std::size_t i = 0; i < po.size(); ++i) EXPECT_LE(po.pixels()[i], pc.pixels()[i] + 1e-2);
  }
  EXPECT_TRUE(testing_support::is_constant(pseudo_open(Image(9, 9, 0.25), flat_kernel(3), 15.0), 0.25));
}

TEST(Chm, DomainErrors) {
  const Image f(5, 5, 0.5);
  EXPECT_THROW(chm_filter(f, flat_kernel(3), 20.5), Error);
  EXPECT_THROW(chm_filter(f, Taps(3, 3, 0.0), 1.0), Error);
  EXPECT_THROW(chm_filter(Image(5, 5, 0.0), flat_kernel(3), 1.0), Error);
  EXPECT_THROW(pseudo_dilate_bound_check(f, flat_kernel(3), -1.0), Error);
}

TEST(Chm, KernelFromSe) {
  const Taps k = kernel_from_se(se_diamond(3), 2.0);
  EXPECT_EQ(k(1, 1), 2.0);
  EXPECT_EQ(k(0, 0), kWeightFloor);
}
