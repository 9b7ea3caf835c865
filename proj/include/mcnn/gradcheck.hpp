#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mcnn/error.hpp"
#include "mcnn/image.hpp"
#include "mcnn/layers.hpp"
#include "mcnn/rng.hpp"

namespace mcnn {

/// |a - n| / max(1e-8, |a| + |n|)
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// A differentiable computation as seen by the checker: parameter groups
/// holding current values plus analytic gradients, and an evaluation
/// function producing the output maps for a given set of values.
///
/// The scalar checked is L = sum over maps m and pixels x of
/// loss_weights[m](x) * outputs[m](x), so analytic gradients must be those of
/// that L (i.e. backward seeded with loss_weights).
struct GradientProbe {
  struct Group {
    std::string name;
    std::vector<double> values;
    std::vector<double> analytic;
    std::vector<bool> skip;  // optional; entries excluded from the check
  };

  std::vector<Group> groups;
  std::function<std::vector<Image>(const std::vector<Group>&)> evaluate;
  std::vector<Image> loss_weights;
};

struct GradCheckGroup {
  std::string name;
  std::size_t checked = 0;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double tolerance = 0.0;
  bool passed = false;

  double max_rel_err() const {
    double worst = 0.0;
    for (const auto& g : groups) worst = std::max(worst, g.max_rel_err);
    return worst;
  }
};

namespace detail {

// Loss difference accumulated pixel by pixel so that unchanged pixels cancel
// exactly instead of drowning the signal in the rounding error of two sums.
inline double weighted_difference(const std::vector<Image>& plus, const std::vector<Image>& minus,
                                  const std::vector<Image>& weights) {
  if (plus.size() != weights.size() || minus.size() != weights.size()) {
    throw Error(Errc::ShapeMismatch, "gradient probe output count");
  }
  double acc = 0.0;
  for (std::size_t m = 0; m < weights.size(); ++m) {
    require_same_shape(plus[m], weights[m], "gradient probe output");
    for (std::size_t i = 0; i < weights[m].size(); ++i) {
      acc += weights[m].pixels()[i] * (plus[m].pixels()[i] - minus[m].pixels()[i]);
    }
  }
  return acc;
}

inline std::vector<Image> random_weights(const std::vector<Image>& outputs, Rng& rng) {
  std::vector<Image> weights;
  for (const Image& out : outputs) {
    Image w(out.width(), out.height());
    const double scale = 1.0 / static_cast<double>(out.size());
    for (double& v : w.pixels()) v = rng.uniform(-1.0, 1.0) * scale;
    weights.push_back(std::move(w));
  }
  return weights;
}

inline std::vector<double> flatten(const Image& img) { return img.data(); }
inline std::vector<double> flatten(const Taps& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace detail

/// Central differences (L(v+h) - L(v-h)) / 2h for every entry of every group,
/// compared against the analytic gradient.
inline GradCheckReport finite_diff_check(const GradientProbe& probe, double h, double tolerance) {
  if (!(h > 0.0)) throw Error(Errc::InvalidArgument, "finite-difference step must be positive");
  GradCheckReport report;
  report.tolerance = tolerance;
  std::vector<GradientProbe::Group> work = probe.groups;
  for (std::size_t g = 0; g < work.size(); ++g) {
    GradCheckGroup summary{work[g].name, 0, 0.0};
    for (std::size_t i = 0; i < work[g].values.size(); ++i) {
      if (!work[g].skip.empty() && work[g].skip[i]) continue;
      const double original = work[g].values[i];
      work[g].values[i] = original + h;
      const auto plus = probe.evaluate(work);
      work[g].values[i] = original - h;
      const auto minus = probe.evaluate(work);
      work[g].values[i] = original;
      const double numeric = detail::weighted_difference(plus, minus, probe.loss_weights) / (2.0 * h);
      summary.max_rel_err = std::max(summary.max_rel_err, relative_error(work[g].analytic[i], numeric));
      ++summary.checked;
    }
    report.groups.push_back(summary);
  }
  report.passed = report.max_rel_err() < tolerance;
  return report;
}

inline GradientProbe pconv_probe(const Image& input, const PConvParams& params, std::uint64_t seed) {
  Rng rng(seed);
  auto [out, cache] = pconv_forward(input, params);
  GradientProbe probe;
  probe.loss_weights = detail::random_weights({out}, rng);
  const PConvGrads grads = pconv_backward(cache, probe.loss_weights[0]);
  probe.groups.push_back({"input", detail::flatten(input), detail::flatten(grads.input), {}});
  probe.groups.push_back({"w", detail::flatten(params.w), detail::flatten(grads.w), {}});
  probe.groups.push_back({"P", {params.order}, {grads.order}, {}});
  const Size in_size = size_of(input);
  const Taps shape = params.w;
  probe.evaluate = [in_size, shape](const std::vector<GradientProbe::Group>& g) {
    const Image f(in_size.width, in_size.height, g[0].values);
    const PConvParams p{Taps(shape.width(), shape.height(), g[1].values), g[2].values[0]};
    return std::vector<Image>{pconv_forward(f, p).first};
  };
  return probe;
}

inline GradientProbe conv_probe(std::span<const Image> inputs, const ConvParams& params, std::uint64_t seed) {
  Rng rng(seed);
  auto [outs, cache] = conv_forward(inputs, params);
  GradientProbe probe;
  probe.loss_weights = detail::random_weights(outs, rng);
  const ConvGrads grads = conv_backward(cache, probe.loss_weights);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    probe.groups.push_back({"input" + std::to_string(i), detail::flatten(inputs[i]), detail::flatten(grads.inputs[i]), {}});
  }
  for (std::size_t k = 0; k < params.kernels.size(); ++k) {
    probe.groups.push_back(
        {"kernel" + std::to_string(k), detail::flatten(params.kernels[k]), detail::flatten(grads.kernels[k]), {}});
  }
  probe.groups.push_back({"bias", params.biases, grads.biases, {}});

  // Entries whose perturbation would cross a relu kink are not differentiable.
  if (params.activation == Activation::Relu) {
    for (const Image& pre : cache.pre_activation) {
      for (double z : pre.pixels()) {
        if (std::abs(z - params.lower) < 1e-3) {
          throw Error(Errc::InvalidArgument, "conv_probe: pre-activation too close to the relu kink; pick another seed");
        }
      }
    }
  }

  const std::size_t n_inputs = inputs.size();
  std::vector<Size> sizes;
  for (const Image& in : inputs) sizes.push_back(size_of(in));
  probe.evaluate = [n_inputs, sizes, params](const std::vector<GradientProbe::Group>& g) {
    std::vector<Image> maps;
    for (std::size_t i = 0; i < n_inputs; ++i) maps.emplace_back(sizes[i].width, sizes[i].height, g[i].values);
    ConvParams p = params;
    for (std::size_t k = 0; k < p.kernels.size(); ++k) {
      p.kernels[k] = Taps(p.kernels[k].width(), p.kernels[k].height(), g[n_inputs + k].values);
    }
    p.biases = g[n_inputs + p.kernels.size()].values;
    return conv_forward(maps, p).first;
  };
  return probe;
}

/// Pixels where |a' - b'| < tie_margin are excluded: |.| has a kink there.
inline GradientProbe absdiff_probe(const Image& a, const Image& b, std::uint64_t seed, double tie_margin = 1e-4) {
  Rng rng(seed);
  auto [out, cache] = absdiff_forward(a, b);
  GradientProbe probe;
  probe.loss_weights = detail::random_weights({out}, rng);
  const AbsDiffGrads grads = absdiff_backward(cache, probe.loss_weights[0]);

  Image near_tie(out.width(), out.height());
  for (std::size_t i = 0; i < out.size(); ++i) near_tie.pixels()[i] = out.pixels()[i] < tie_margin ? 1.0 : 0.0;
  auto skip_for = [&](Size s) {
    const Image placed = detail::embed_center(near_tie, s);
    std::vector<bool> skip(placed.size());
    for (std::size_t i = 0; i < placed.size(); ++i) skip[i] = placed.pixels()[i] != 0.0;
    return skip;
  };
  probe.groups.push_back({"a", a.data(), grads.a.data(), skip_for(size_of(a))});
  probe.groups.push_back({"b", b.data(), grads.b.data(), skip_for(size_of(b))});
  const Size sa = size_of(a);
  const Size sb = size_of(b);
  probe.evaluate = [sa, sb](const std::vector<GradientProbe::Group>& g) {
    return std::vector<Image>{
        absdiff_forward(Image(sa.width, sa.height, g[0].values), Image(sb.width, sb.height, g[1].values)).first};
  };
  return probe;
}

inline GradientProbe average_probe(std::span<const Image> maps, std::uint64_t seed) {
  Rng rng(seed);
  auto [out, cache] = average_forward(maps);
  GradientProbe probe;
  probe.loss_weights = detail::random_weights({out}, rng);
  const auto grads = average_backward(cache, probe.loss_weights[0]);
  for (std::size_t m = 0; m < maps.size(); ++m) {
    probe.groups.push_back({"map" + std::to_string(m), maps[m].data(), grads[m].data(), {}});
  }
  const Size s = size_of(maps[0]);
  probe.evaluate = [s](const std::vector<GradientProbe::Group>& g) {
    std::vector<Image> ms;
    for (const auto& group : g) ms.emplace_back(s.width, s.height, group.values);
    return std::vector<Image>{average_forward(ms).first};
  };
  return probe;
}

inline GradCheckReport finite_diff_check(const PConvParams& params, const Image& input, double h, double tolerance,
                                         std::uint64_t seed = 0) {
  return finite_diff_check(pconv_probe(input, params, seed), h, tolerance);
}

inline GradCheckReport finite_diff_check(const ConvParams& params, std::span<const Image> inputs, double h,
                                         double tolerance, std::uint64_t seed = 0) {
  return finite_diff_check(conv_probe(inputs, params, seed), h, tolerance);
}

/// Orders exercised by the PConv gradient sweep.
inline const std::vector<double>& sweep_orders() {
  static const std::vector<double> orders{-10.0, -5.0, -1.0, -0.5, 0.0, 0.5, 1.0, 5.0, 10.0};
  return orders;
}

struct SweepResult {
  int instances = 0;
  int failures = 0;
  double max_rel_err = 0.0;
  double worst_order = 0.0;
  std::uint64_t worst_seed = 0;
};

/// Finite-difference check of PConv over `seeds` random instances per order:
/// 8x8 input in [0.05, 1), 3x3 kernel in [0.1, 1].
inline SweepResult pconv_gradient_sweep(int seeds, double h = 1e-5, double tolerance = 1e-4) {
  SweepResult out;
  for (int seed = 0; seed < seeds; ++seed) {
    for (double order : sweep_orders()) {
      Rng rng = Rng::substream(static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(std::lround(order * 2.0) + 100));
      Image f(8, 8);
      for (double& v : f.pixels()) v = rng.uniform(0.05, 1.0);
      Taps w(3, 3);
      for (double& v : w.values()) v = rng.uniform(0.1, 1.0);
      const GradCheckReport r = finite_diff_check(PConvParams{w, order}, f, h, tolerance, static_cast<std::uint64_t>(seed));
      ++out.instances;
      if (!r.passed) ++out.failures;
      if (r.max_rel_err() > out.max_rel_err) {
        out.max_rel_err = r.max_rel_err();
        out.worst_order = order;
        out.worst_seed = static_cast<std::uint64_t>(seed);
      }
    }
  }
  return out;
}

}  // namespace mcnn
