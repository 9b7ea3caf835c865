#include <gtest/gtest.h>

#include "mcnn/morphology.hpp"
#include "assertions.hpp"
#include "support.hpp"

using namespace mcnn;
using testing_support::brute_dilate;
using testing_support::brute_erode;

namespace {

std::vector<StructuringElement> all_ses() {
  std::vector<StructuringElement> out{se_square(1), se_square(2), se_square(3), se_diamond(3), se_diamond(5),
                                      se_disk(3),   se_disk(5),   se_line(5, 0), se_line(5, 45), se_line(5, 90),
                                      se_line(5, 135), se_line(4, 0), se_line(4, 45)};
  return out;
}

Image negate(const Image& f) {
  Image out = f;
  for (double& v : out.pixels()) v = 1.0 - v;
  return out;
}

int set_cells(const StructuringElement& se) { return se.count(); }

}  // namespace

TEST(StructuringElement, Constructors) {
  const StructuringElement sq = se_square(3);
  EXPECT_EQ(sq.width(), 3);
  EXPECT_EQ(set_cells(sq), 9);

  const StructuringElement di = se_diamond(3);
  EXPECT_EQ(di.width(), 3);
  EXPECT_EQ(set_cells(di), 5);
  EXPECT_FALSE(di.at(0, 0));
  EXPECT_TRUE(di.at(0, 1));
  EXPECT_EQ(set_cells(se_diamond(5)), 13);

  const StructuringElement li = se_line(5, 0);
  EXPECT_EQ(li.width(), 5);
  EXPECT_EQ(li.height(), 5);  // every SE lives in a square box
  EXPECT_EQ(set_cells(li), 5);

  EXPECT_EQ(se_disk(5).width(), 5);
  EXPECT_EQ(set_cells(se_disk(5)), 13);
  EXPECT_EQ(set_cells(se_line(15, 45)), 15);
  EXPECT_EQ(set_cells(se_line(10, 0)), 10);
}

TEST(StructuringElement, DiagonalLineGoesUpRight) {
  const StructuringElement li = se_line(3, 45);
  ASSERT_EQ(li.width(), 3);
  EXPECT_TRUE(li.at(0, 2));
  EXPECT_TRUE(li.at(1, 1));
  EXPECT_TRUE(li.at(2, 0));
  EXPECT_FALSE(li.at(0, 0));
}

TEST(StructuringElement, EvenSizesSitInNextOddBox) {
  const StructuringElement sq = se_square(2);
  EXPECT_EQ(sq.width(), 3);
  EXPECT_EQ(set_cells(sq), 4);
  EXPECT_TRUE(sq.at(1, 1));
  EXPECT_TRUE(sq.at(2, 2));
  EXPECT_FALSE(sq.at(0, 0));
}

TEST(StructuringElement, Errors) {
  EXPECT_THROW(se_square(0), Error);
  EXPECT_THROW(se_line(5, 30), Error);
  EXPECT_THROW(se_disk(-1), Error);
}

TEST(Morphology, ConstantImage) {
  const Image f(9, 9, 0.4);
  for (const auto& se : all_ses()) {
    EXPECT_TRUE(testing_support::is_constant(dilate(f, se), 0.4));
    EXPECT_TRUE(testing_support::is_constant(erode(f, se), 0.4));
    EXPECT_TRUE(testing_support::is_constant(open(f, se), 0.4));
    EXPECT_TRUE(testing_support::is_constant(close(f, se), 0.4));
    EXPECT_TRUE(testing_support::is_constant(white_top_hat(f, se), 0.0));
    EXPECT_TRUE(testing_support::is_constant(black_top_hat(f, se), 0.0));
  }
}

TEST(Morphology, ImpulseResponses) {
  Image bright(7, 7, 0.2);
  bright(3, 3) = 0.9;
  const Image d = dilate(bright, se_square(3));  // 5x5, impulse at (2, 2)
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) EXPECT_EQ(d(r, c), (std::abs(r - 2) <= 1 && std::abs(c - 2) <= 1) ? 0.9 : 0.2);

  Image dark(7, 7, 0.8);
  dark(3, 3) = 0.1;
  const Image e = erode(dark, se_square(3));
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) EXPECT_EQ(e(r, c), (std::abs(r - 2) <= 1 && std::abs(c - 2) <= 1) ? 0.1 : 0.8);

  EXPECT_TRUE(testing_support::is_constant(open(bright, se_square(3)), 0.2));

  const Image wth = white_top_hat(bright, se_square(3));  // 3x3, center is the impulse
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(wth(r, c), (r == 1 && c == 1) ? 0.7 : 0.0, 1e-15);
}

TEST(Morphology, BruteForceEquivalence) {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int w = 10 + static_cast<int>(rng.below(9));
    const int h = 10 + static_cast<int>(rng.below(9));
    const Image f = testing_support::random_image(w, h, rng);
    for (const auto& se : all_ses()) {
      EXPECT_EQ(dilate(f, se), brute_dilate(f, se));
      EXPECT_EQ(erode(f, se), brute_erode(f, se));
      EXPECT_EQ(open(f, se), brute_dilate(brute_erode(f, se), se));
      EXPECT_EQ(close(f, se), brute_erode(brute_dilate(f, se), se));
    }
  }
}

TEST(Morphology, TopHatsAreResidues) {
  Rng rng(12);
  const Image f = testing_support::random_image(12, 12, rng);
  for (const auto& se : all_ses()) {
    const Image o = open(f, se);
    const Image c = close(f, se);
    const Image fo = center_crop(f, size_of(o));
    const Image wth = white_top_hat(f, se);
    const Image bth = black_top_hat(f, se);
    for (std::size_t i = 0; i < o.size(); ++i) {
      EXPECT_EQ(wth.pixels()[i], fo.pixels()[i] - o.pixels()[i]);
      EXPECT_EQ(bth.pixels()[i], c.pixels()[i] - fo.pixels()[i]);
      EXPECT_GE(wth.pixels()[i], 0.0);
      EXPECT_GE(bth.pixels()[i], 0.0);
    }
  }
}

TEST(Morphology, OrderingIdempotenceDuality) {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const Image f = testing_support::random_levels(20, 20, rng);  // dyadic values: 1 - (1 - v) == v
    for (const auto& se : all_ses()) {
      const Image o = open(f, se);
      const Size s = size_of(o);
      const Image e = center_crop(erode(f, se), s);
      const Image d = center_crop(dilate(f, se), s);
      const Image c = close(f, se);
      const Image fc = center_crop(f, s);
      for (std::size_t i = 0; i < o.size(); ++i) {
        EXPECT_LE(e.pixels()[i], o.pixels()[i]);
        EXPECT_LE(o.pixels()[i], fc.pixels()[i]);
        EXPECT_LE(fc.pixels()[i], c.pixels()[i]);
        EXPECT_LE(c.pixels()[i], d.pixels()[i]);
      }
      const Image oo = open(o, se);
      EXPECT_EQ(oo, center_crop(o, size_of(oo)));
      const Image cc = close(c, se);
      EXPECT_EQ(cc, center_crop(c, size_of(cc)));
      EXPECT_EQ(erode(f, se), negate(dilate(negate(f), se.reflected())));
    }
  }
}
