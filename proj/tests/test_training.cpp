#include <gtest/gtest.h>

#include "mcnn/training.hpp"
#include "support.hpp"

using namespace mcnn;

namespace {

NetworkSpec spec_of(const std::string& text) { return NetworkSpec::from_config(KeyValues::parse(text)); }

// Two-level 8x8 blocks. The level ratio 13/7 is large enough that a P = 10
// CHM with the right support is close to the dilation, and small enough that
// a misplaced bright cell does not saturate its own weight gradient.
Image blocks(Rng& rng) {
  Image img(64, 64);
  std::vector<double> level(64);
  for (double& v : level) v = rng.bernoulli(0.3) ? 0.65 : 0.35;
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) img(r, c) = level[(r / 8) * 8 + c / 8];
  return quantize(img);
}

TaskSpec dilation_task(int patch = 0) {
  TaskSpec t;
  t.op = Operator::Dilate;
  t.se = SeSpec::parse("square:3");
  t.patch = patch;
  return t;
}

TrainConfig small_config(std::uint64_t samples) {
  TrainConfig c;
  c.lr0 = 0.05;
  c.max_samples = samples;
  c.eval_every = samples;
  c.order_lr_scale = 10;
  c.grad_clip = 0.1;
  return c;
}

std::vector<Image> texture_set(int count, int size, std::uint64_t seed) {
  std::vector<Image> out;
  for (int i = 0; i < count; ++i) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i));
    out.push_back(synth_texture(size, size, rng));
  }
  return out;
}

}  // namespace

TEST(Training, LearningRateSchedule) {
  EXPECT_EQ(lr_schedule(0.2, 100, 0), 0.2);
  EXPECT_EQ(lr_schedule(0.2, 100, 100), 0.1);
  EXPECT_EQ(lr_schedule(0.2, 100, 300), 0.05);
  EXPECT_THROW(lr_schedule(0.2, 0, 5), Error);
}

TEST(Training, ConfigValidation) {
  EXPECT_THROW(TrainConfig::from_config(KeyValues::parse("train.momentum = 1\n")), Error);
  EXPECT_THROW(TrainConfig::from_config(KeyValues::parse("train.lr = -1\n")), Error);
  EXPECT_THROW(TrainConfig::from_config(KeyValues::parse("train.freeze = everything\n")), Error);
  const TrainConfig c = TrainConfig::from_config(KeyValues::parse("train.freeze = orders\ntrain.alternate_every = 2\n"));
  EXPECT_TRUE(c.freeze.orders);
  EXPECT_FALSE(c.freeze.weights);
  EXPECT_EQ(c.alternate_every, 2);
}

TEST(Training, ZeroLearningRateChangesNothing) {
  const Network net = build(spec_of("layer.0.kind = pconv\nlayer.0.kernel = 5\n"), 1);
  const PairStream stream(texture_set(1, 32, 1), dilation_task(16), net.margin());
  const std::vector<Sample> eval{stream.whole(0, std::uint64_t{0})};
  TrainConfig c = small_config(40);
  c.lr0 = 0.0;
  c.eval_every = 10;
  const TrainReport r = train_online(net, stream, eval, c);
  EXPECT_EQ(r.final_net.params(), net.params());
  ASSERT_EQ(r.curve.size(), 5u);
  for (const CurvePoint& p : r.curve) EXPECT_EQ(p.eval_mse, r.curve[0].eval_mse);

  c.patience = 2;
  const TrainReport stopped = train_online(net, stream, eval, c);
  EXPECT_TRUE(stopped.stopped_early);
  EXPECT_EQ(stopped.samples, 20u);
}

TEST(Training, AlternationFreezesOneGroupPerEpoch) {
  const Network net = build(spec_of("layer.0.kind = pconv\nlayer.0.kernel = 5\n"), 2);
  const PairStream stream(texture_set(1, 32, 2), dilation_task(16), net.margin());
  const std::vector<Sample> eval{stream.whole(0, std::uint64_t{0})};
  TrainConfig c = small_config(1);
  c.alternate_every = 1;
  c.epoch_length = 2;
  Network prev = net;
  for (std::uint64_t t = 1; t <= 8; ++t) {
    c.max_samples = t;
    c.eval_every = t;
    const Network next = train_online(net, stream, eval, c).final_net;
    const PConvParams& a = prev.params()[0].pconv[0];
    const PConvParams& b = next.params()[0].pconv[0];
    const bool order_phase = ((t - 1) / 2) % 2 == 1;
    if (order_phase) {
      EXPECT_EQ(a.w, b.w) << "sample " << t - 1;
      EXPECT_NE(a.order, b.order) << "sample " << t - 1;
    } else {
      EXPECT_NE(a.w, b.w) << "sample " << t - 1;
      EXPECT_EQ(a.order, b.order) << "sample " << t - 1;
    }
    prev = next;
  }
}

TEST(Training, ClippingBoundsAppliedNorm) {
  const Network net = build(spec_of("layer.0.kind = pconv\nlayer.0.kernel = 5\nlayer.1.kind = pconv\nlayer.1.kernel = 3\n"), 3);
  const PairStream stream(texture_set(2, 32, 3), dilation_task(20), net.margin());
  const std::vector<Sample> eval{stream.whole(0, std::uint64_t{0})};
  TrainConfig c = small_config(200);
  c.grad_clip = 1e-3;
  const TrainReport r = train_online(net, stream, eval, c);
  EXPECT_GT(r.max_applied_grad_norm, 0.0);
  EXPECT_LE(r.max_applied_grad_norm, 1e-3 * (1 + 1e-12));
}

TEST(Training, Reproducible) {
  const NetworkSpec spec = spec_of("layer.0.kind = pconv\nlayer.0.kernel = 5\nlayer.1.kind = conv\nlayer.1.kernel = 3\n");
  TaskSpec task = dilation_task(20);
  task.noise = NoiseSpec::parse("gaussian:0.05");
  auto once = [&] {
    const Network net = build(spec, 4);
    const PairStream stream(texture_set(2, 32, 4), task, net.margin());
    const TrainReport r = train_online(net, stream, {stream.whole(1, std::uint64_t{0})}, small_config(150));
    std::ostringstream curve;
    write_curve_csv(r, curve);
    return params_to_string(r.final_net) + params_to_string(r.best) + curve.str();
  };
  EXPECT_EQ(once(), once());
}

TEST(Training, RealizableTaskConverges) {
  // Targets come from a network of the student's own topology.
  const NetworkSpec spec = spec_of("layer.0.kind = pconv\nlayer.0.kernel = 5\n");
  Network teacher = build(spec, 0);
  teacher.mutable_params()[0].pconv[0] = PConvParams{kernel_from_se(se_square(3).padded_to(5, 5)), 6.0};
  Rng rng(5);
  const std::vector<Image> images{blocks(rng), blocks(rng)};
  std::vector<Image> targets;
  for (const Image& f : images) targets.push_back(predict(teacher, f));
  TaskSpec task;
  task.op = Operator::External;
  task.patch = 24;
  const PairStream stream(images, task, 4, targets);
  const std::vector<Sample> eval{{images[1], targets[1]}};

  const Network student = build(spec, 6);
  TrainConfig c = small_config(4000);
  c.lr0 = 1.0;
  c.eval_every = 500;
  const TrainReport r = train_online(student, stream, eval, c);
  EXPECT_LT(r.best_eval_mse, 0.1 * r.curve.front().eval_mse);
}

TEST(Training, PinnedOrderDilationFitsTrainImage) {
  Rng rng(7);
  TaskSpec task;
  task.op = Operator::Dilate;
  task.se = SeSpec::parse("square:5");
  const Network net = build(spec_of("layer.0.kind = pconv\nlayer.0.kernel = 11\nlayer.0.order = 10\n"), 1);
  const PairStream stream({blocks(rng)}, task, net.margin());
  const std::vector<Sample> train_set{stream.whole(0, std::uint64_t{0})};
  TrainConfig c;
  c.lr0 = 3.0;
  c.max_samples = 2000;
  c.decay_tau = 2000;
  c.eval_every = 500;
  c.grad_clip = 0.0;
  c.freeze.orders = true;
  const TrainReport r = train_online(net, stream, train_set, c);
  EXPECT_LT(r.best_eval_mse, 1e-4);
  EXPECT_EQ(r.final_net.params()[0].pconv[0].order, 10.0);
}
