#include <gtest/gtest.h>

#include "mcnn/datagen.hpp"
#include "assertions.hpp"
#include "support.hpp"

using namespace mcnn;

namespace {

constexpr int kMega = 1000;  // 1000 x 1000 = 10^6 pixels

int count_equal(const Image& img, double v) {
  return static_cast<int>(std::count(img.pixels().begin(), img.pixels().end(), v));
}

}  // namespace

TEST(Metrics, MseAndPsnr) {
  const Image a(4, 3, 0.5);
  EXPECT_EQ(mse(a, a), 0.0);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  const Image b(4, 3, 0.6);
  EXPECT_NEAR(mse(a, b), 0.01, 1e-15);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-12);
  Rng rng(1);
  const Image c = testing_support::random_image(5, 5, rng);
  const Image d = testing_support::random_image(5, 5, rng);
  EXPECT_EQ(mse(c, d), mse(d, c));
  EXPECT_THROW(mse(a, c), Error);
}

TEST(Noise, Binomial) {
  Rng rng(2);
  const Image small = testing_support::random_image(20, 20, rng);
  EXPECT_EQ(binomial_noise(small, 0.0, rng), small);
  EXPECT_TRUE(testing_support::is_constant(binomial_noise(small, 1.0, rng), kMinIntensity, 0.0));
  const Image big(kMega, kMega, 0.5);
  const double off = count_equal(binomial_noise(big, 0.1, rng), kMinIntensity) / 1e6;
  EXPECT_NEAR(off, 0.1, 0.002);
  EXPECT_THROW(binomial_noise(small, 1.5, rng), Error);
}

TEST(Noise, SaltAndPepper) {
  Rng rng(3);
  const Image small = testing_support::random_image(20, 20, rng);
  EXPECT_EQ(salt_pepper_noise(small, 0.0, rng), small);
  const Image all = salt_pepper_noise(Image(kMega, kMega, 0.5), 1.0, rng);
  const int salt = count_equal(all, kMaxIntensity);
  const int pepper = count_equal(all, kMinIntensity);
  EXPECT_EQ(salt + pepper, kMega * kMega);
  EXPECT_NEAR(static_cast<double>(salt) / pepper, 1.0, 0.01);

  const Image some = salt_pepper_noise(small, 0.3, rng);
  for (std::size_t i = 0; i < some.size(); ++i) {
    const double v = some.pixels()[i];
    EXPECT_TRUE(v == small.pixels()[i] || v == kMinIntensity || v == kMaxIntensity);
  }
}

TEST(Noise, Gaussian) {
  Rng rng(4);
  const Image small = testing_support::random_image(20, 20, rng);
  EXPECT_EQ(gaussian_noise(small, 0.0, rng), small);
  const Image big(kMega, kMega, 0.5);
  const Image noisy = gaussian_noise(big, 0.06, rng);
  double mean = 0.0;
  for (double v : noisy.pixels()) {
    mean += (v - 0.5) / 1e6;
    ASSERT_GE(v, kMinIntensity);
    ASSERT_LE(v, kMaxIntensity);
  }
  EXPECT_NEAR(mean, 0.0, 5 * 0.06 / 1000);
  const Image extreme = gaussian_noise(Image(100, 100, 0.01), 0.5, rng);
  for (double v : extreme.pixels()) {
    EXPECT_GE(v, kMinIntensity);
    EXPECT_LE(v, kMaxIntensity);
  }
}

TEST(Noise, SpecParsing) {
  EXPECT_EQ(NoiseSpec::parse("none").kind, NoiseSpec::Kind::None);
  const NoiseSpec b = NoiseSpec::parse("binomial:0.1");
  EXPECT_EQ(b.kind, NoiseSpec::Kind::Binomial);
  EXPECT_EQ(b.amount, 0.1);
  EXPECT_EQ(NoiseSpec::parse(b.to_string()).to_string(), "binomial:0.1");
  EXPECT_EQ(NoiseSpec::parse("salt_pepper:0.1").kind, NoiseSpec::Kind::SaltPepper);
  EXPECT_EQ(NoiseSpec::parse("gaussian:0.06").amount, 0.06);
  EXPECT_THROW(NoiseSpec::parse("binomial:1.5"), Error);
  EXPECT_THROW(NoiseSpec::parse("gaussian:-1"), Error);
  EXPECT_THROW(NoiseSpec::parse("speckle:0.1"), Error);
  EXPECT_THROW(NoiseSpec::parse("binomial"), Error);
}

TEST(Synthetic, DefectBackgroundRange) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    DefectSpec spec;
    spec.spots = 0;
    spec.lines = 0;
    const Image bg = synth_defects(128, 96, spec, rng);
    for (double v : bg.pixels()) {
      EXPECT_GE(v, 0.3);
      EXPECT_LE(v, 0.7);
    }
  }
}

TEST(Synthetic, SpotShowsInWhiteTopHat) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    DefectSpec none;
    none.spots = 0;
    none.lines = 0;
    DefectSpec one = none;
    one.spots = 1;
    Rng a(seed);
    Rng b(seed);
    const Image bg = synth_defects(64, 64, none, a);
    const Image img = synth_defects(64, 64, one, b);  // same background, one spot added
    const Image wth = white_top_hat(img, se_disk(5));
    double near = 0.0;
    double far = 0.0;
    for (int r = 0; r < wth.height(); ++r)
      for (int c = 0; c < wth.width(); ++c) {
        bool by_spot = false;
        for (int dr = -3; dr <= 3; ++dr)
          for (int dc = -3; dc <= 3; ++dc) {
            const int rr = r + 2 + dr;
            const int cc = c + 2 + dc;
            if (rr >= 0 && rr < 64 && cc >= 0 && cc < 64 && img(rr, cc) != bg(rr, cc)) by_spot = true;
          }
        (by_spot ? near : far) = std::max(by_spot ? near : far, wth(r, c));
      }
    EXPECT_GT(near, 0.2) << "seed " << seed;
    EXPECT_LT(far, 0.06) << "seed " << seed;
  }
}

TEST(Synthetic, DeterministicAndQuantized) {
  Rng a(9);
  Rng b(9);
  const Image t = synth_texture(50, 40, a);
  EXPECT_EQ(t, synth_texture(50, 40, b));
  EXPECT_EQ(synth_defects(50, 40, DefectSpec{}, a), synth_defects(50, 40, DefectSpec{}, b));
  EXPECT_EQ(normalize(denormalize(t)), t);
  for (double v : t.pixels()) {
    EXPECT_GE(v, kMinIntensity);
    EXPECT_LE(v, kMaxIntensity);
  }
}

TEST(Task, Parsing) {
  EXPECT_EQ(SeSpec::parse("line:15:45").make(), se_line(15, 45));
  EXPECT_EQ(SeSpec::parse("disk:5").make(), se_disk(5));
  EXPECT_EQ(SeSpec::parse("line:10:45").to_string(), "line:10:45");
  EXPECT_THROW(SeSpec::parse("square"), Error);
  EXPECT_THROW(SeSpec::parse("hexagon:3").make(), Error);
  EXPECT_EQ(parse_operator("white_top_hat"), Operator::WhiteTopHat);
  EXPECT_EQ(parse_operator(to_string(Operator::DualTopHat)), Operator::DualTopHat);
  EXPECT_THROW(parse_operator("gradient"), Error);
}

TEST(Task, DualTopHatIsMeanOfResidues) {
  Rng rng(10);
  const Image f = testing_support::random_image(30, 30, rng);
  TaskSpec task;
  task.op = Operator::DualTopHat;
  task.se = SeSpec::parse("disk:5");
  const Image out = apply_operator(task, f);
  const Image w = white_top_hat(f, se_disk(5));
  const Image b = black_top_hat(f, se_line(10, 0));  // 11x11 box, margin 20
  ASSERT_EQ(size_of(out).width, 10);
  const Image wc = center_crop(w, size_of(out));
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out.pixels()[i], 0.5 * (wc.pixels()[i] + b.pixels()[i]));
}

TEST(PairStream, DilationPairs) {
  Rng rng(11);
  const Image f = testing_support::random_levels(20, 20, rng);
  TaskSpec task;
  task.se = SeSpec::parse("square:5");
  const PairStream stream({f}, task, 4);
  const Sample s = stream.draw(3);
  EXPECT_EQ(s.input, f);
  EXPECT_EQ(s.target, dilate(f, se_square(5)));

  // A wider network sees the target center-cropped to its own output.
  const PairStream wide({f}, task, 10);
  EXPECT_EQ(wide.draw(0).target, center_crop(dilate(f, se_square(5)), 10, 10));
  EXPECT_EQ(wide.aligned_target(0), wide.draw(0).target);
}

TEST(PairStream, PatchesStayAligned) {
  Rng rng(12);
  const Image f = testing_support::random_levels(40, 30, rng);
  TaskSpec task;
  task.se = SeSpec::parse("square:3");
  task.patch = 12;
  const PairStream stream({f}, task, 6);
  const Image full = dilate(f, se_square(3));  // margin 2; network margin 6
  for (std::uint64_t i = 0; i < 20; ++i) {
    const Sample s = stream.draw(i);
    ASSERT_EQ(size_of(s.input).width, 12);
    ASSERT_EQ(size_of(s.target).width, 6);
    // Locate the patch and check the target against the oracle.
    bool found = false;
    for (int top = 0; top + 12 <= 30 && !found; ++top)
      for (int left = 0; left + 12 <= 40 && !found; ++left) {
        if (crop(f, top, left, 12, 12) == s.input) {
          found = true;
          EXPECT_EQ(s.target, crop(full, top + 2, left + 2, 6, 6));
        }
      }
    EXPECT_TRUE(found);
  }
  EXPECT_EQ(stream.epoch_length(), static_cast<std::uint64_t>(std::ceil(34.0 * 24 / 36)));
}

TEST(PairStream, NoisyInputsCleanTargets) {
  Rng rng(13);
  const Image f = testing_support::random_image(16, 16, rng, 0.2, 0.9);
  TaskSpec task;
  task.op = Operator::Identity;
  task.noise = NoiseSpec::parse("binomial:0.1");
  const PairStream stream({f}, task, 2);
  const Sample a = stream.draw(0);
  const Sample b = stream.draw(1);
  EXPECT_EQ(a.target, center_crop(f, 14, 14));
  EXPECT_EQ(b.target, a.target);
  EXPECT_NE(a.input, b.input);
  EXPECT_EQ(stream.draw(0).input, a.input);
}

TEST(PairStream, ExternalTargetsAndErrors) {
  Rng rng(14);
  const Image f = testing_support::random_image(16, 16, rng);
  const Image t = testing_support::random_image(16, 16, rng);
  TaskSpec ext;
  ext.op = Operator::External;
  const PairStream stream({f}, ext, 4, {t});
  EXPECT_EQ(stream.draw(0).target, center_crop(t, 12, 12));
  EXPECT_THROW(PairStream({f}, ext, 4, {}), Error);

  TaskSpec task;
  task.se = SeSpec::parse("square:5");
  EXPECT_THROW(PairStream({f}, task, 20), Error);      // image smaller than margin
  EXPECT_THROW(PairStream({f}, task, 5), Error);       // odd margin difference
  EXPECT_THROW(PairStream({f}, task, 2), Error);       // operator wider than network
  EXPECT_THROW(PairStream({}, task, 4), Error);
  task.patch = 4;
  EXPECT_THROW(PairStream({f}, task, 4), Error);       // patch not larger than margin
}
