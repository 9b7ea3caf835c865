#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcnn/chm.hpp"
#include "mcnn/correlate.hpp"
#include "mcnn/error.hpp"
#include "mcnn/image.hpp"

namespace mcnn {

// ---------------------------------------------------------------------------
// PConv: counter-harmonic mean with learnable kernel w and order P.
// ---------------------------------------------------------------------------

struct PConvParams {
  Taps w;
  double order = 1.0;

  friend bool operator==(const PConvParams&, const PConvParams&) = default;
};

struct PConvCache {
  Image input;
  ChmTerms terms;
  PConvParams params;
};

struct PConvGrads {
  Image input;
  Taps w;
  double order = 0.0;
};

/// Forward pass; the output is bit-identical to chm_filter(f, w, P).
inline std::pair<Image, PConvCache> pconv_forward(const Image& f, const PConvParams& params) {
  PConvCache cache{f, {}, params};
  chm_terms(f, params.w, params.order, cache.terms);
  Image out = cache.terms.out;
  return {std::move(out), std::move(cache)};
}

/// Exact chain-rule gradients through h = N / D with N = f^(P+1) * w and
/// D = f^P * w. With A = g / D and B = g N / D^2 = A h:
///
///   dL/dw(k) = sum_x A(x) f^(P+1)(x+k) - B(x) f^P(x+k)
///   dL/df(y) = (P+1) f^P(y) (A *' w)(y) - P f^(P-1)(y) (B *' w)(y)
///   dL/dP    = sum_y log f(y) [f^(P+1)(y) (A *' w)(y) - f^P(y) (B *' w)(y)]
///
/// where *' is the adjoint of the valid correlation (scatter back onto the
/// input grid).
inline PConvGrads pconv_backward(const PConvCache& cache, const Image& grad_out) {
  const ChmTerms& t = cache.terms;
  require_same_shape(grad_out, t.out, "pconv_backward grad_out");
  const double order = cache.params.order;

  Image a = grad_out;
  Image b = grad_out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    a.pixels()[i] = grad_out.pixels()[i] / t.denominator.pixels()[i];
    b.pixels()[i] = a.pixels()[i] * t.out.pixels()[i];
  }

  PConvGrads grads{Image(cache.input.width(), cache.input.height()),
                   Taps(cache.params.w.width(), cache.params.w.height()), 0.0};

  Taps grad_b(cache.params.w.width(), cache.params.w.height());
  correlate_taps_gradient_accumulate(t.pow_p1, a, grads.w);
  correlate_taps_gradient_accumulate(t.pow_p, b, grad_b);
  for (std::size_t k = 0; k < grads.w.size(); ++k) grads.w.values()[k] -= grad_b.values()[k];

  Image spread_a(cache.input.width(), cache.input.height());
  Image spread_b(cache.input.width(), cache.input.height());
  correlate_adjoint_accumulate(a, cache.params.w, spread_a);
  correlate_adjoint_accumulate(b, cache.params.w, spread_b);

  double grad_order = 0.0;
  for (std::size_t y = 0; y < cache.input.size(); ++y) {
    const double f = cache.input.pixels()[y];
    const double pp = t.pow_p.pixels()[y];
    const double pp1 = t.pow_p1.pixels()[y];
    const double sa = spread_a.pixels()[y];
    const double sb = spread_b.pixels()[y];
    grads.input.pixels()[y] = (order + 1.0) * pp * sa - order * (pp / f) * sb;
    grad_order += t.log_f.pixels()[y] * (pp1 * sa - pp * sb);
  }
  grads.order = grad_order;
  return grads;
}

// ---------------------------------------------------------------------------
// Conv: linear valid convolution with a connection table, bias, activation.
// ---------------------------------------------------------------------------

enum class Activation { Identity, Relu };

inline std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "identity"; }

/// One (input map, kernel, output map) entry of a connection table.
struct Connection {
  int input = 0;
  int kernel = 0;
  int output = 0;
  friend bool operator==(const Connection&, const Connection&) = default;
};

struct ConvParams {
  std::vector<Taps> kernels;
  std::vector<double> biases;  // one per output map
  std::vector<Connection> table;
  Activation activation = Activation::Identity;
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();

  std::size_t outputs() const noexcept { return biases.size(); }

  /// Every input connected to every output through its own kernel.
  static ConvParams fully_connected(int inputs, int outputs, int kernel_size, Activation act = Activation::Identity) {
    ConvParams p;
    p.activation = act;
    p.biases.assign(static_cast<std::size_t>(outputs), 0.0);
    for (int o = 0; o < outputs; ++o) {
      for (int i = 0; i < inputs; ++i) {
        p.table.push_back({i, static_cast<int>(p.kernels.size()), o});
        p.kernels.emplace_back(kernel_size, kernel_size);
      }
    }
    return p;
  }

  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

struct ConvCache {
  std::vector<Image> inputs;
  std::vector<Image> pre_activation;
  ConvParams params;
};

struct ConvGrads {
  std::vector<Image> inputs;
  std::vector<Taps> kernels;
  std::vector<double> biases;
};

namespace detail {

inline void validate_table(std::size_t n_inputs, const ConvParams& p) {
  for (const Connection& c : p.table) {
    if (c.input < 0 || static_cast<std::size_t>(c.input) >= n_inputs) {
      throw Error(Errc::InvalidSpec, "connection table references missing input map " + std::to_string(c.input));
    }
    if (c.kernel < 0 || static_cast<std::size_t>(c.kernel) >= p.kernels.size()) {
      throw Error(Errc::InvalidSpec, "connection table references missing kernel " + std::to_string(c.kernel));
    }
    if (c.output < 0 || static_cast<std::size_t>(c.output) >= p.outputs()) {
      throw Error(Errc::InvalidSpec, "connection table references missing output map " + std::to_string(c.output));
    }
  }
}

}  // namespace detail

inline std::pair<std::vector<Image>, ConvCache> conv_forward(std::span<const Image> maps, const ConvParams& params) {
  detail::validate_table(maps.size(), params);
  if (maps.empty()) throw Error(Errc::InvalidSpec, "conv layer without inputs");
  for (const Image& m : maps) require_same_shape(m, maps[0], "conv_forward inputs");
  if (params.kernels.empty()) throw Error(Errc::InvalidSpec, "conv layer without kernels");

  const Size out_size = valid_output(size_of(maps[0]), params.kernels[0].width(), params.kernels[0].height());
  ConvCache cache{{maps.begin(), maps.end()}, {}, params};
  cache.pre_activation.reserve(params.outputs());
  for (std::size_t o = 0; o < params.outputs(); ++o) {
    cache.pre_activation.emplace_back(out_size.width, out_size.height, params.biases[o]);
  }
  Image response;
  for (const Connection& c : params.table) {
    correlate_valid(maps[static_cast<std::size_t>(c.input)], params.kernels[static_cast<std::size_t>(c.kernel)], response);
    require_same_shape(response, cache.pre_activation[static_cast<std::size_t>(c.output)], "conv_forward kernel sizes");
    auto dst = cache.pre_activation[static_cast<std::size_t>(c.output)].pixels();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += response.pixels()[i];
  }
  std::vector<Image> out = cache.pre_activation;
  if (params.activation == Activation::Relu) {
    for (Image& m : out)
      for (double& v : m.pixels()) v = std::max(params.lower, std::min(v, params.upper));
  }
  return {std::move(out), std::move(cache)};
}

inline ConvGrads conv_backward(const ConvCache& cache, std::span<const Image> grad_out) {
  const ConvParams& p = cache.params;
  if (grad_out.size() != p.outputs()) throw Error(Errc::ShapeMismatch, "conv_backward output count");
  ConvGrads grads;
  for (const Image& in : cache.inputs) grads.inputs.emplace_back(in.width(), in.height());
  for (const Taps& k : p.kernels) grads.kernels.emplace_back(k.width(), k.height());
  grads.biases.assign(p.outputs(), 0.0);

  std::vector<Image> gated(grad_out.begin(), grad_out.end());
  for (std::size_t o = 0; o < gated.size(); ++o) {
    require_same_shape(gated[o], cache.pre_activation[o], "conv_backward grad_out");
    if (p.activation == Activation::Relu) {
      for (std::size_t i = 0; i < gated[o].size(); ++i) {
        const double z = cache.pre_activation[o].pixels()[i];
        if (!(z > p.lower && z < p.upper)) gated[o].pixels()[i] = 0.0;
      }
    }
    for (double g : gated[o].pixels()) grads.biases[o] += g;
  }
  for (const Connection& c : p.table) {
    const auto in = static_cast<std::size_t>(c.input);
    const auto k = static_cast<std::size_t>(c.kernel);
    const auto o = static_cast<std::size_t>(c.output);
    correlate_taps_gradient_accumulate(cache.inputs[in], gated[o], grads.kernels[k]);
    correlate_adjoint_accumulate(gated[o], p.kernels[k], grads.inputs[in]);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// AbsDiff: |a - b| after center-cropping the larger operand.
// ---------------------------------------------------------------------------

struct AbsDiffCache {
  Size a_size;
  Size b_size;
  Image difference;  // a' - b' on the common geometry
};

struct AbsDiffGrads {
  Image a;
  Image b;
};

namespace detail {

inline Size common_size(Size a, Size b) { return {std::min(a.width, b.width), std::min(a.height, b.height)}; }

// Places `src` in the center of a zero image of size `dst`.
inline Image embed_center(const Image& src, Size dst) {
  if (size_of(src) == dst) return src;
  if ((dst.width - src.width()) % 2 || (dst.height - src.height()) % 2) {
    throw Error(Errc::OddMargin, "cannot center " + to_string(size_of(src)) + " in " + to_string(dst));
  }
  Image out(dst.width, dst.height);
  const int top = (dst.height - src.height()) / 2;
  const int left = (dst.width - src.width()) / 2;
  for (int r = 0; r < src.height(); ++r) std::copy_n(src.row(r), src.width(), out.row(top + r) + left);
  return out;
}

}  // namespace detail

inline std::pair<Image, AbsDiffCache> absdiff_forward(const Image& a, const Image& b) {
  const Size common = detail::common_size(size_of(a), size_of(b));
  Image ca = center_crop(a, common);
  const Image cb = center_crop(b, common);
  for (std::size_t i = 0; i < ca.size(); ++i) ca.pixels()[i] -= cb.pixels()[i];
  Image out = ca;
  for (double& v : out.pixels()) v = std::abs(v);
  return {std::move(out), AbsDiffCache{size_of(a), size_of(b), std::move(ca)}};
}

/// sign(a' - b') times grad_out, placed back into each operand's geometry.
/// Ties (a' == b') pass no gradient.
inline AbsDiffGrads absdiff_backward(const AbsDiffCache& cache, const Image& grad_out) {
  require_same_shape(grad_out, cache.difference, "absdiff_backward grad_out");
  Image ga = grad_out;
  for (std::size_t i = 0; i < ga.size(); ++i) {
    const double d = cache.difference.pixels()[i];
    const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    ga.pixels()[i] = sign * grad_out.pixels()[i];
  }
  Image gb = ga;
  for (double& v : gb.pixels()) v = -v;
  return {detail::embed_center(ga, cache.a_size), detail::embed_center(gb, cache.b_size)};
}

// ---------------------------------------------------------------------------
// Average: pixelwise mean of n maps.
// ---------------------------------------------------------------------------

struct AverageCache {
  std::size_t count = 0;
  Size size;
};

inline std::pair<Image, AverageCache> average_forward(std::span<const Image> maps) {
  if (maps.empty()) throw Error(Errc::InvalidArgument, "average of zero maps");
  Image out = maps[0];
  for (std::size_t m = 1; m < maps.size(); ++m) {
    require_same_shape(maps[m], maps[0], "average_forward");
    for (std::size_t i = 0; i < out.size(); ++i) out.pixels()[i] += maps[m].pixels()[i];
  }
  const double scale = 1.0 / static_cast<double>(maps.size());
  for (double& v : out.pixels()) v *= scale;
  return {std::move(out), AverageCache{maps.size(), size_of(maps[0])}};
}

inline std::vector<Image> average_backward(const AverageCache& cache, const Image& grad_out) {
  if (size_of(grad_out) != cache.size) throw Error(Errc::ShapeMismatch, "average_backward grad_out");
  Image share = grad_out;
  const double scale = 1.0 / static_cast<double>(cache.count);
  for (double& v : share.pixels()) v *= scale;
  return std::vector<Image>(cache.count, share);
}

}  // namespace mcnn
