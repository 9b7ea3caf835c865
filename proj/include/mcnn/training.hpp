#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mcnn/config.hpp"
#include "mcnn/datagen.hpp"
#include "mcnn/error.hpp"
#include "mcnn/network.hpp"

namespace mcnn {

struct TrainConfig {
  double lr0 = 0.01;
  double decay_tau = 0.0;     // samples; 0 means one epoch of the stream
  double momentum = 0.9;
  std::uint64_t max_samples = 10000;
  int alternate_every = 0;    // epochs per P/w phase; 0 disables alternation
  std::uint64_t epoch_length = 0;  // 0 means the stream's epoch length
  double grad_clip = 1.0;     // global gradient-norm bound; 0 disables
  double order_lr_scale = 1.0;
  FreezeMask freeze;
  std::uint64_t seed = 1;
  std::uint64_t eval_every = 500;
  int patience = 0;           // evaluations without improvement; 0 disables

  static TrainConfig from_config(const KeyValues& kv, const std::string& prefix = "train.") {
    TrainConfig c;
    c.lr0 = kv.get_double(prefix + "lr", c.lr0);
    c.decay_tau = kv.get_double(prefix + "decay_tau", c.decay_tau);
    c.momentum = kv.get_double(prefix + "momentum", c.momentum);
    c.max_samples = static_cast<std::uint64_t>(kv.get_int(prefix + "max_samples", static_cast<long long>(c.max_samples)));
    c.alternate_every = static_cast<int>(kv.get_int(prefix + "alternate_every", c.alternate_every));
    c.epoch_length = static_cast<std::uint64_t>(kv.get_int(prefix + "epoch_length", 0));
    c.grad_clip = kv.get_double(prefix + "grad_clip", c.grad_clip);
    c.order_lr_scale = kv.get_double(prefix + "order_lr_scale", c.order_lr_scale);
    const std::string freeze = kv.get_or(prefix + "freeze", "none");
    if (freeze == "weights") {
      c.freeze.weights = true;
    } else if (freeze == "orders") {
      c.freeze.orders = true;
    } else if (freeze != "none") {
      throw Error(Errc::InvalidConfig, prefix + "freeze must be none, weights or orders");
    }
    c.seed = static_cast<std::uint64_t>(kv.get_int(prefix + "seed", static_cast<long long>(c.seed)));
    c.eval_every = static_cast<std::uint64_t>(kv.get_int(prefix + "eval_every", static_cast<long long>(c.eval_every)));
    c.patience = static_cast<int>(kv.get_int(prefix + "patience", c.patience));
    c.validate();
    return c;
  }

  void validate() const {
    if (!(lr0 >= 0.0)) throw Error(Errc::InvalidConfig, "learning rate must be >= 0");
    if (!(decay_tau >= 0.0)) throw Error(Errc::InvalidConfig, "decay_tau must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(Errc::InvalidConfig, "momentum must be in [0, 1)");
    if (!(grad_clip >= 0.0)) throw Error(Errc::InvalidConfig, "grad_clip must be >= 0");
    if (eval_every == 0) throw Error(Errc::InvalidConfig, "eval_every must be >= 1");
    if (alternate_every < 0 || patience < 0) throw Error(Errc::InvalidConfig, "negative schedule value");
  }
};

/// lr0 / (1 + t / tau)
inline double lr_schedule(double lr0, double decay_tau, std::uint64_t t) {
  if (!(decay_tau > 0.0)) throw Error(Errc::InvalidArgument, "decay_tau must be > 0");
  return lr0 / (1.0 + static_cast<double>(t) / decay_tau);
}

struct CurvePoint {
  std::uint64_t sample = 0;
  double train_loss = 0.0;  // mean training loss since the previous point
  double eval_mse = 0.0;
  double eval_psnr = 0.0;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<CurvePoint> curve;
  Network best;
  Network final_net;
  double best_eval_mse = std::numeric_limits<double>::infinity();
  std::uint64_t best_sample = 0;
  std::uint64_t samples = 0;
  bool stopped_early = false;
  double max_applied_grad_norm = 0.0;
};

inline double evaluate_mse(const Network& net, const std::vector<Sample>& set) {
  if (set.empty()) throw Error(Errc::InvalidArgument, "empty evaluation set");
  double total = 0.0;
  for (const Sample& s : set) total += mse(predict(net, s.input), s.target);
  return total / static_cast<double>(set.size());
}

/// Which parameter groups are frozen at sample t (alternation plus the
/// configured static mask). Even phases train the weights, odd phases P.
inline FreezeMask freeze_at(const TrainConfig& config, std::uint64_t epoch_length, std::uint64_t t) {
  FreezeMask mask = config.freeze;
  if (config.alternate_every > 0) {
    const std::uint64_t epoch = t / epoch_length;
    const bool order_phase = (epoch / static_cast<std::uint64_t>(config.alternate_every)) % 2 == 1;
    if (order_phase) {
      mask.weights = true;
    } else {
      mask.orders = true;
    }
  }
  return mask;
}

namespace detail {

inline std::string numerical_diagnostic(const Network& net, const ForwardResult& fwd) {
  std::string orders;
  double min_den = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < fwd.caches.size(); ++i) {
    for (const PConvCache& c : fwd.caches[i].pconv) {
      orders += " " + format_double(c.params.order);
      min_den = std::min(min_den, c.terms.denominator.min());
    }
  }
  (void)net;
  return "last P:" + (orders.empty() ? std::string(" none") : orders) + ", min denominator: " + format_double(min_den);
}

}  // namespace detail

/// Online SGD: one update per sample with momentum, 1/(1 + t/tau) decay,
/// optional gradient-norm clipping and P/w alternation. Evaluates on
/// `eval_set` every eval_every samples (and at t = 0) and keeps the best
/// snapshot.
inline TrainReport train_online(Network net, const PairStream& stream, const std::vector<Sample>& eval_set,
                                const TrainConfig& config, std::ostream* log = nullptr) {
  config.validate();
  const std::uint64_t epoch = config.epoch_length > 0 ? config.epoch_length : stream.epoch_length();
  const double tau = config.decay_tau > 0.0 ? config.decay_tau : static_cast<double>(epoch);
  const std::uint64_t stream_offset = Rng::splitmix64(config.seed) >> 16;

  TrainReport report{{}, net, net};
  int evals_without_improvement = 0;
  double running_loss = 0.0;
  std::uint64_t running_count = 0;

  auto evaluate = [&](std::uint64_t t) {
    const double e = evaluate_mse(net, eval_set);
    if (!std::isfinite(e)) throw Error(Errc::NumericalFailure, "evaluation MSE is not finite at sample " + std::to_string(t));
    report.curve.push_back({t, running_count ? running_loss / static_cast<double>(running_count) : 0.0, e,
                            psnr_from_mse(e), lr_schedule(config.lr0, tau, t)});
    running_loss = 0.0;
    running_count = 0;
    if (log) {
      *log << "sample " << t << " eval_mse " << e << " psnr " << psnr_from_mse(e) << "\n";
    }
    if (e < report.best_eval_mse) {
      report.best_eval_mse = e;
      report.best_sample = t;
      report.best = net;
      evals_without_improvement = 0;
    } else {
      ++evals_without_improvement;
    }
  };

  evaluate(0);
  std::uint64_t t = 0;
  for (; t < config.max_samples; ++t) {
    const Sample sample = stream.draw(stream_offset + t);
    const ForwardResult fwd = forward(net, sample.input);
    BackwardResult bwd = backward(net, fwd, sample.target);
    if (!std::isfinite(bwd.loss)) {
      throw Error(Errc::NumericalFailure, "loss is not finite at sample " + std::to_string(t) + "; " +
                                              detail::numerical_diagnostic(net, fwd));
    }
    running_loss += bwd.loss;
    ++running_count;

    const FreezeMask mask = freeze_at(config, epoch, t);
    double norm = gradient_norm(net, bwd.gradients, mask);
    if (!std::isfinite(norm)) {
      throw Error(Errc::NumericalFailure, "gradient is not finite at sample " + std::to_string(t) + "; " +
                                              detail::numerical_diagnostic(net, fwd));
    }
    if (config.grad_clip > 0.0 && norm > config.grad_clip) {
      scale_gradients(bwd.gradients, config.grad_clip / norm);
      norm = gradient_norm(net, bwd.gradients, mask);
      if (norm > config.grad_clip * (1.0 + 1e-12)) {
        throw Error(Errc::NumericalFailure, "gradient clipping failed to bound the norm");
      }
    }
    report.max_applied_grad_norm = std::max(report.max_applied_grad_norm, norm);

    apply_update(net, bwd.gradients, {lr_schedule(config.lr0, tau, t), config.momentum, config.order_lr_scale, mask});

    if ((t + 1) % config.eval_every == 0) {
      evaluate(t + 1);
      if (config.patience > 0 && evals_without_improvement >= config.patience) {
        ++t;
        report.stopped_early = true;
        break;
      }
    }
  }
  if (report.curve.back().sample != t) evaluate(t);
  report.samples = t;
  report.final_net = std::move(net);
  return report;
}

inline void write_curve_csv(const TrainReport& report, std::ostream& out) {
  out << "sample_index,train_loss,eval_mse,eval_psnr,lr\n";
  for (const CurvePoint& p : report.curve) {
    out << p.sample << "," << format_double(p.train_loss) << "," << format_double(p.eval_mse) << ","
        << format_double(p.eval_psnr) << "," << format_double(p.lr) << "\n";
  }
}

}  // namespace mcnn
