#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mcnn/chm.hpp"
#include "mcnn/config.hpp"
#include "mcnn/error.hpp"
#include "mcnn/image.hpp"
#include "mcnn/layers.hpp"
#include "mcnn/rng.hpp"

namespace mcnn {

enum class LayerKind { PConv, Conv, AbsDiff, Average };

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::PConv: return "pconv";
    case LayerKind::Conv: return "conv";
    case LayerKind::AbsDiff: return "absdiff";
    case LayerKind::Average: return "average";
  }
  return "?";
}

inline LayerKind parse_layer_kind(std::string_view s) {
  if (s == "pconv") return LayerKind::PConv;
  if (s == "conv") return LayerKind::Conv;
  if (s == "absdiff") return LayerKind::AbsDiff;
  if (s == "average") return LayerKind::Average;
  throw Error(Errc::InvalidSpec, "unknown layer kind '" + std::string(s) + "'");
}

/// How a PConv filter's order P is initialized.
struct OrderInit {
  enum class Mode { Random, Positive, Negative, Fixed };
  Mode mode = Mode::Random;
  double value = 0.0;

  static OrderInit parse(std::string_view s) {
    if (s == "random") return {Mode::Random, 0.0};
    if (s == "positive") return {Mode::Positive, 0.0};
    if (s == "negative") return {Mode::Negative, 0.0};
    return {Mode::Fixed, parse_double(s, "order")};
  }

  std::string to_string() const {
    switch (mode) {
      case Mode::Random: return "random";
      case Mode::Positive: return "positive";
      case Mode::Negative: return "negative";
      case Mode::Fixed: return format_double(value);
    }
    return "?";
  }

  friend bool operator==(const OrderInit&, const OrderInit&) = default;
};

/// Reference to the network input.
inline constexpr int kInputRef = -1;

struct LayerSpec {
  LayerKind kind = LayerKind::PConv;
  std::vector<int> inputs{kInputRef};
  int kernel_size = 11;
  int filters = 1;
  Activation activation = Activation::Identity;
  std::vector<OrderInit> order_init;  // empty: random; one entry: all filters

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Layers in evaluation order; the last layer's single map is the prediction.
/// The loss is always the per-pixel mean squared error.
struct NetworkSpec {
  std::vector<LayerSpec> layers;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;

  static NetworkSpec from_config(const KeyValues& kv) {
    NetworkSpec spec;
    for (int i = 0;; ++i) {
      const std::string prefix = "layer." + std::to_string(i) + ".";
      auto kind = kv.get(prefix + "kind");
      if (!kind) break;
      LayerSpec layer;
      layer.kind = parse_layer_kind(*kind);
      layer.inputs.clear();
      for (const std::string& ref : kv.get_list(prefix + "inputs")) {
        layer.inputs.push_back(ref == "input" ? kInputRef : static_cast<int>(parse_int(ref, prefix + "inputs")));
      }
      if (layer.inputs.empty()) layer.inputs.push_back(i == 0 ? kInputRef : i - 1);
      layer.kernel_size = static_cast<int>(kv.get_int(prefix + "kernel", 11));
      layer.filters = static_cast<int>(kv.get_int(prefix + "filters", 1));
      const std::string act = kv.get_or(prefix + "activation", "identity");
      if (act == "relu") {
        layer.activation = Activation::Relu;
      } else if (act != "identity") {
        throw Error(Errc::InvalidSpec, prefix + "activation: unknown '" + act + "'");
      }
      for (const std::string& o : kv.get_list(prefix + "order")) layer.order_init.push_back(OrderInit::parse(o));
      spec.layers.push_back(std::move(layer));
    }
    if (spec.layers.empty()) throw Error(Errc::InvalidSpec, "network has no layers (expected layer.0.kind)");
    return spec;
  }

  KeyValues to_config() const {
    KeyValues kv;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      const std::string prefix = "layer." + std::to_string(i) + ".";
      kv.set(prefix + "kind", mcnn::to_string(l.kind));
      std::string refs;
      for (std::size_t r = 0; r < l.inputs.size(); ++r) {
        refs += (r ? ", " : "") + (l.inputs[r] == kInputRef ? std::string("input") : std::to_string(l.inputs[r]));
      }
      kv.set(prefix + "inputs", refs);
      if (l.kind == LayerKind::PConv || l.kind == LayerKind::Conv) {
        kv.set(prefix + "kernel", std::to_string(l.kernel_size));
        kv.set(prefix + "filters", std::to_string(l.filters));
      }
      if (l.kind == LayerKind::Conv) kv.set(prefix + "activation", mcnn::to_string(l.activation));
      if (l.kind == LayerKind::PConv && !l.order_init.empty()) {
        std::string orders;
        for (std::size_t o = 0; o < l.order_init.size(); ++o) orders += (o ? ", " : "") + l.order_init[o].to_string();
        kv.set(prefix + "order", orders);
      }
    }
    return kv;
  }
};

/// Static facts about one layer derived from the spec.
struct LayerShape {
  int maps = 1;        // output map count
  int margin = 0;      // input size minus output size (both axes)
  bool positive = false;
};

namespace detail {

inline std::string layer_name(std::size_t i) { return "layer " + std::to_string(i); }

}  // namespace detail

/// Validates the DAG and computes per-layer map counts and margins.
inline std::vector<LayerShape> analyze(const NetworkSpec& spec) {
  if (spec.layers.empty()) throw Error(Errc::InvalidSpec, "network has no layers");
  std::vector<LayerShape> shapes;
  const LayerShape input_shape{1, 0, true};
  auto ref_shape = [&](int ref) -> const LayerShape& { return ref == kInputRef ? input_shape : shapes[ref]; };

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string name = detail::layer_name(i);
    if (l.inputs.empty()) throw Error(Errc::InvalidSpec, name + " has no inputs");
    for (int ref : l.inputs) {
      if (ref != kInputRef && (ref < 0 || static_cast<std::size_t>(ref) >= i)) {
        throw Error(Errc::InvalidSpec, name + " references layer " + std::to_string(ref) +
                                           " (only earlier layers or 'input' allowed)");
      }
    }
    int in_maps = 0;
    for (int ref : l.inputs) in_maps += ref_shape(ref).maps;
    const int in_margin = ref_shape(l.inputs[0]).margin;
    auto require_aligned = [&]() {
      for (int ref : l.inputs) {
        if (ref_shape(ref).margin != in_margin) {
          throw Error(Errc::InvalidSpec, name + " combines inputs of different geometry");
        }
      }
    };

    LayerShape shape;
    switch (l.kind) {
      case LayerKind::PConv:
      case LayerKind::Conv: {
        if (l.kernel_size < 1 || l.kernel_size % 2 == 0) throw Error(Errc::InvalidSpec, name + ": kernel size must be odd");
        if (l.filters < 1) throw Error(Errc::InvalidSpec, name + ": filters must be >= 1");
        require_aligned();
        shape.maps = l.filters;
        shape.margin = in_margin + l.kernel_size - 1;
        if (l.kind == LayerKind::PConv) {
          for (int ref : l.inputs) {
            if (!ref_shape(ref).positive) {
              throw Error(Errc::InvalidSpec, name + ": pconv fed by a sign-indefinite source (layer " +
                                                 std::to_string(ref) + ")");
            }
          }
          if (in_maps != 1 && in_maps != l.filters) {
            throw Error(Errc::InvalidSpec, name + ": pconv needs 1 input map or one per filter, got " +
                                               std::to_string(in_maps));
          }
          if (!l.order_init.empty() && l.order_init.size() != 1 && static_cast<int>(l.order_init.size()) != l.filters) {
            throw Error(Errc::InvalidSpec, name + ": order list must have 1 or 'filters' entries");
          }
          shape.positive = true;
        }
        break;
      }
      case LayerKind::AbsDiff: {
        if (l.inputs.size() != 2) throw Error(Errc::InvalidSpec, name + ": absdiff needs exactly 2 inputs");
        const LayerShape& a = ref_shape(l.inputs[0]);
        const LayerShape& b = ref_shape(l.inputs[1]);
        if (a.maps != b.maps) throw Error(Errc::InvalidSpec, name + ": absdiff operands have different map counts");
        if ((a.margin - b.margin) % 2 != 0) throw Error(Errc::InvalidSpec, name + ": absdiff operands have odd margin");
        shape.maps = a.maps;
        shape.margin = std::max(a.margin, b.margin);
        break;
      }
      case LayerKind::Average: {
        require_aligned();
        shape.maps = 1;
        shape.margin = in_margin;
        break;
      }
    }
    shapes.push_back(shape);
  }
  if (shapes.back().maps != 1) throw Error(Errc::InvalidSpec, "final layer must produce exactly one map");
  return shapes;
}

/// Concrete parameters of one layer.
struct LayerParams {
  std::vector<PConvParams> pconv;  // one per filter
  ConvParams conv;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Gradients (or momentum buffers) with the same structure as the parameters.
struct LayerGradients {
  std::vector<Taps> pconv_w;
  std::vector<double> pconv_order;
  std::vector<Taps> conv_kernels;
  std::vector<double> conv_biases;

  friend bool operator==(const LayerGradients&, const LayerGradients&) = default;
};

struct Gradients {
  std::vector<LayerGradients> layers;
  friend bool operator==(const Gradients&, const Gradients&) = default;
};

/// Parameter group used for alternating optimization and freezing.
enum class ParamRole { PConvWeights, PConvOrder, ConvWeights, ConvBias };

class Network {
 public:
  Network(NetworkSpec spec, std::vector<LayerParams> params)
      : spec_(std::move(spec)), shapes_(analyze(spec_)), params_(std::move(params)) {
    if (params_.size() != spec_.layers.size()) throw Error(Errc::InvalidSpec, "parameter/layer count mismatch");
    check_params();
    velocity_ = zero_gradients();
  }

  const NetworkSpec& spec() const noexcept { return spec_; }
  const std::vector<LayerShape>& shapes() const noexcept { return shapes_; }
  const std::vector<LayerParams>& params() const noexcept { return params_; }
  std::vector<LayerParams>& mutable_params() noexcept { return params_; }
  const Gradients& velocity() const noexcept { return velocity_; }
  Gradients& mutable_velocity() noexcept { return velocity_; }

  /// Total shrinkage between the input and the prediction.
  int margin() const noexcept { return shapes_.back().margin; }

  Size output_size(Size input) const {
    const Size out{input.width - margin(), input.height - margin()};
    if (out.width < 1 || out.height < 1) {
      throw Error(Errc::KernelTooLarge, "input " + to_string(input) + " too small for network margin " +
                                            std::to_string(margin()));
    }
    return out;
  }

  Gradients zero_gradients() const {
    Gradients g;
    for (const LayerParams& p : params_) {
      LayerGradients lg;
      for (const PConvParams& f : p.pconv) {
        lg.pconv_w.emplace_back(f.w.width(), f.w.height());
        lg.pconv_order.push_back(0.0);
      }
      for (const Taps& k : p.conv.kernels) lg.conv_kernels.emplace_back(k.width(), k.height());
      lg.conv_biases.assign(p.conv.biases.size(), 0.0);
      g.layers.push_back(std::move(lg));
    }
    return g;
  }

  /// Enforces w >= floor and |P| <= 20 on every PConv filter.
  void project() {
    for (LayerParams& p : params_) {
      for (PConvParams& f : p.pconv) {
        for (double& w : f.w.values()) w = std::max(w, kWeightFloor);
        f.order = std::clamp(f.order, -kMaxOrder, kMaxOrder);
      }
    }
  }

 private:
  void check_params() const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const LayerSpec& l = spec_.layers[i];
      const LayerParams& p = params_[i];
      const std::string name = detail::layer_name(i);
      if (l.kind == LayerKind::PConv) {
        if (static_cast<int>(p.pconv.size()) != l.filters) throw Error(Errc::InvalidSpec, name + ": filter count");
        for (const PConvParams& f : p.pconv) {
          if (f.w.width() != l.kernel_size || f.w.height() != l.kernel_size) {
            throw Error(Errc::InvalidSpec, name + ": kernel shape");
          }
        }
      } else if (l.kind == LayerKind::Conv) {
        if (static_cast<int>(p.conv.outputs()) != l.filters) throw Error(Errc::InvalidSpec, name + ": output count");
        for (const Taps& k : p.conv.kernels) {
          if (k.width() != l.kernel_size || k.height() != l.kernel_size) {
            throw Error(Errc::InvalidSpec, name + ": kernel shape");
          }
        }
      }
    }
  }

  NetworkSpec spec_;
  std::vector<LayerShape> shapes_;
  std::vector<LayerParams> params_;
  Gradients velocity_;
};

/// Deterministic initialization:
///  - PConv w: flat 1/|W| times uniform jitter in [0.9, 1.1], floored;
///  - PConv P: uniform in [0.5, 2] with random sign unless pinned;
///  - Conv kernels: uniform in [-a, a], a = 1 / (k sqrt(fan_in)); biases 0.
inline Network build(const NetworkSpec& spec, std::uint64_t seed) {
  const std::vector<LayerShape> shapes = analyze(spec);
  Rng rng(seed);
  std::vector<LayerParams> params;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    LayerParams p;
    int in_maps = 0;
    for (int ref : l.inputs) in_maps += ref == kInputRef ? 1 : shapes[ref].maps;
    if (l.kind == LayerKind::PConv) {
      const int k = l.kernel_size;
      const double flat = 1.0 / static_cast<double>(k * k);
      for (int f = 0; f < l.filters; ++f) {
        PConvParams filter{Taps(k, k), 0.0};
        for (double& w : filter.w.values()) w = std::max(kWeightFloor, flat * rng.uniform(0.9, 1.1));
        const OrderInit init = l.order_init.empty() ? OrderInit{}
                                                    : l.order_init[l.order_init.size() == 1 ? 0 : f];
        const double magnitude = rng.uniform(0.5, 2.0);
        const bool negative = rng.bernoulli(0.5);
        switch (init.mode) {
          case OrderInit::Mode::Random: filter.order = negative ? -magnitude : magnitude; break;
          case OrderInit::Mode::Positive: filter.order = magnitude; break;
          case OrderInit::Mode::Negative: filter.order = -magnitude; break;
          case OrderInit::Mode::Fixed: filter.order = init.value; break;
        }
        if (std::abs(filter.order) > kMaxOrder) throw Error(Errc::InvalidSpec, "pinned |P| exceeds 20");
        p.pconv.push_back(std::move(filter));
      }
    } else if (l.kind == LayerKind::Conv) {
      p.conv = ConvParams::fully_connected(in_maps, l.filters, l.kernel_size, l.activation);
      const double a = 1.0 / (l.kernel_size * std::sqrt(static_cast<double>(in_maps)));
      for (Taps& k : p.conv.kernels)
        for (double& v : k.values()) v = rng.uniform(-a, a);
    }
    params.push_back(std::move(p));
  }
  return Network(spec, std::move(params));
}

/// Forward intermediates for every layer.
struct LayerCache {
  std::vector<PConvCache> pconv;
  std::optional<ConvCache> conv;
  std::vector<AbsDiffCache> absdiff;
  std::optional<AverageCache> average;
};

struct ForwardResult {
  Image prediction;
  std::vector<LayerCache> caches;
  Size input_size;
};

namespace detail {

inline std::vector<Image> gather_inputs(const LayerSpec& l, const Image& input, const std::vector<std::vector<Image>>& maps) {
  std::vector<Image> in;
  for (int ref : l.inputs) {
    if (ref == kInputRef) {
      in.push_back(input);
    } else {
      in.insert(in.end(), maps[ref].begin(), maps[ref].end());
    }
  }
  return in;
}

}  // namespace detail

/// Evaluates the layers in order and returns the last layer's map.
inline ForwardResult forward(const Network& net, const Image& input) {
  net.output_size(size_of(input));
  const NetworkSpec& spec = net.spec();
  std::vector<std::vector<Image>> maps(spec.layers.size());
  ForwardResult result;
  result.input_size = size_of(input);
  result.caches.resize(spec.layers.size());

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const LayerParams& p = net.params()[i];
    LayerCache& cache = result.caches[i];
    switch (l.kind) {
      case LayerKind::PConv: {
        const std::vector<Image> in = detail::gather_inputs(l, input, maps);
        for (std::size_t f = 0; f < p.pconv.size(); ++f) {
          auto [out, c] = pconv_forward(in.size() == 1 ? in[0] : in[f], p.pconv[f]);
          maps[i].push_back(std::move(out));
          cache.pconv.push_back(std::move(c));
        }
        break;
      }
      case LayerKind::Conv: {
        const std::vector<Image> in = detail::gather_inputs(l, input, maps);
        auto [outs, c] = conv_forward(in, p.conv);
        maps[i] = std::move(outs);
        cache.conv = std::move(c);
        break;
      }
      case LayerKind::AbsDiff: {
        const std::vector<Image>& a = l.inputs[0] == kInputRef ? std::vector<Image>{input} : maps[l.inputs[0]];
        const std::vector<Image>& b = l.inputs[1] == kInputRef ? std::vector<Image>{input} : maps[l.inputs[1]];
        for (std::size_t m = 0; m < a.size(); ++m) {
          auto [out, c] = absdiff_forward(a[m], b[m]);
          maps[i].push_back(std::move(out));
          cache.absdiff.push_back(std::move(c));
        }
        break;
      }
      case LayerKind::Average: {
        const std::vector<Image> in = detail::gather_inputs(l, input, maps);
        auto [out, c] = average_forward(in);
        maps[i].push_back(std::move(out));
        cache.average = c;
        break;
      }
    }
  }
  result.prediction = std::move(maps.back()[0]);
  return result;
}

inline Image predict(const Network& net, const Image& input) { return forward(net, input).prediction; }

struct BackwardResult {
  double loss = 0.0;
  Gradients gradients;
  Image input_gradient;
};

namespace detail {

inline void accumulate(Image& dst, const Image& src) {
  if (dst.empty()) {
    dst = src;
    return;
  }
  require_same_shape(dst, src, "gradient accumulation");
  for (std::size_t i = 0; i < dst.size(); ++i) dst.pixels()[i] += src.pixels()[i];
}

}  // namespace detail

/// Back-propagates an arbitrary gradient on the prediction. Gradients
/// arriving at a map from several consumers are summed.
inline BackwardResult backward_from(const Network& net, const ForwardResult& fwd, const Image& grad_prediction) {
  const NetworkSpec& spec = net.spec();
  const std::size_t n = spec.layers.size();
  BackwardResult result;
  result.gradients = net.zero_gradients();

  std::vector<std::vector<Image>> grads(n);
  for (std::size_t i = 0; i < n; ++i) grads[i].resize(static_cast<std::size_t>(net.shapes()[i].maps));
  Image input_grad;
  grads[n - 1][0] = grad_prediction;

  // Scatters the gradients of a layer's concatenated inputs back to their sources.
  auto scatter = [&](const LayerSpec& l, std::vector<Image>& in_grads) {
    std::size_t pos = 0;
    for (int ref : l.inputs) {
      if (ref == kInputRef) {
        detail::accumulate(input_grad, in_grads[pos++]);
      } else {
        for (auto& g : grads[ref]) detail::accumulate(g, in_grads[pos++]);
      }
    }
  };

  for (std::size_t i = n; i-- > 0;) {
    const LayerSpec& l = spec.layers[i];
    const LayerCache& cache = fwd.caches[i];
    LayerGradients& lg = result.gradients.layers[i];
    std::vector<Image>& out_grads = grads[i];
    if (std::all_of(out_grads.begin(), out_grads.end(), [](const Image& g) { return g.empty(); })) continue;
    for (std::size_t m = 0; m < out_grads.size(); ++m) {
      if (out_grads[m].empty()) {
        const Image* shape_src = nullptr;
        if (l.kind == LayerKind::PConv) shape_src = &cache.pconv[m].terms.out;
        if (l.kind == LayerKind::Conv) shape_src = &cache.conv->pre_activation[m];
        if (l.kind == LayerKind::AbsDiff) shape_src = &cache.absdiff[m].difference;
        out_grads[m] = Image(shape_src->width(), shape_src->height());
      }
    }

    switch (l.kind) {
      case LayerKind::PConv: {
        int in_maps = 0;
        for (int ref : l.inputs) in_maps += ref == kInputRef ? 1 : net.shapes()[ref].maps;
        std::vector<Image> in_grads(static_cast<std::size_t>(in_maps));
        for (std::size_t f = 0; f < cache.pconv.size(); ++f) {
          PConvGrads g = pconv_backward(cache.pconv[f], out_grads[f]);
          lg.pconv_w[f] = std::move(g.w);
          lg.pconv_order[f] = g.order;
          detail::accumulate(in_grads[in_maps == 1 ? 0 : f], g.input);
        }
        scatter(l, in_grads);
        break;
      }
      case LayerKind::Conv: {
        ConvGrads g = conv_backward(*cache.conv, out_grads);
        lg.conv_kernels = std::move(g.kernels);
        lg.conv_biases = std::move(g.biases);
        scatter(l, g.inputs);
        break;
      }
      case LayerKind::AbsDiff: {
        for (std::size_t m = 0; m < cache.absdiff.size(); ++m) {
          AbsDiffGrads g = absdiff_backward(cache.absdiff[m], out_grads[m]);
          const std::pair<int, Image*> sides[2] = {{l.inputs[0], &g.a}, {l.inputs[1], &g.b}};
          for (auto [ref, grad] : sides) {
            if (ref == kInputRef) {
              detail::accumulate(input_grad, *grad);
            } else {
              detail::accumulate(grads[ref][m], *grad);
            }
          }
        }
        break;
      }
      case LayerKind::Average: {
        std::vector<Image> in_grads = average_backward(*cache.average, out_grads[0]);
        scatter(l, in_grads);
        break;
      }
    }
  }
  result.input_gradient = input_grad.empty() ? Image(fwd.input_size.width, fwd.input_size.height) : input_grad;
  return result;
}

/// Per-pixel MSE against `target` and its gradients. The target must already
/// have the prediction's geometry.
inline BackwardResult backward(const Network& net, const ForwardResult& fwd, const Image& target) {
  require_same_shape(fwd.prediction, target, "backward target");
  const double n = static_cast<double>(target.size());
  Image seed = fwd.prediction;
  double loss = 0.0;
  for (std::size_t i = 0; i < seed.size(); ++i) {
    const double d = fwd.prediction.pixels()[i] - target.pixels()[i];
    loss += d * d;
    seed.pixels()[i] = 2.0 * d / n;
  }
  BackwardResult result = backward_from(net, fwd, seed);
  result.loss = loss / n;
  return result;
}

/// Calls fn(role, values, grads) for every parameter group. Works on const
/// and mutable parameter vectors alike.
template <class Params, class Fn>
void for_each_group(Params& params, const Gradients& grads, Fn&& fn) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const LayerGradients& g = grads.layers[i];
    for (std::size_t f = 0; f < p.pconv.size(); ++f) {
      fn(ParamRole::PConvWeights, p.pconv[f].w.values(), g.pconv_w[f].values());
      fn(ParamRole::PConvOrder, std::span(&p.pconv[f].order, 1), std::span(&g.pconv_order[f], 1));
    }
    for (std::size_t k = 0; k < p.conv.kernels.size(); ++k) {
      fn(ParamRole::ConvWeights, p.conv.kernels[k].values(), g.conv_kernels[k].values());
    }
    if (!p.conv.biases.empty()) fn(ParamRole::ConvBias, std::span(p.conv.biases), std::span(g.conv_biases));
  }
}

/// Parameter groups excluded from an update.
struct FreezeMask {
  bool weights = false;  // PConv kernels, Conv kernels and biases
  bool orders = false;   // PConv P

  bool frozen(ParamRole role) const noexcept { return role == ParamRole::PConvOrder ? orders : weights; }
};

struct UpdateOptions {
  double lr = 0.01;
  double momentum = 0.0;
  double order_lr_scale = 1.0;  // multiplier on lr for the P groups
  FreezeMask freeze;
};

/// Momentum step v <- mu v - lr g; param += v, then the PConv projections.
/// Frozen groups keep both their values and their velocity.
inline void apply_update(Network& net, const Gradients& grads, const UpdateOptions& opt) {
  // Velocity buffers are visited with the same traversal order as params.
  std::vector<std::span<double>> velocity;
  for (LayerGradients& v : net.mutable_velocity().layers) {
    for (std::size_t f = 0; f < v.pconv_w.size(); ++f) {
      velocity.emplace_back(v.pconv_w[f].values());
      velocity.emplace_back(&v.pconv_order[f], 1);
    }
    for (auto& k : v.conv_kernels) velocity.emplace_back(k.values());
    if (!v.conv_biases.empty()) velocity.emplace_back(v.conv_biases);
  }
  std::size_t group = 0;
  for_each_group(net.mutable_params(), grads, [&](ParamRole role, std::span<double> values, std::span<const double> g) {
    std::span<double> v = velocity[group++];
    if (opt.freeze.frozen(role)) return;
    const double lr = role == ParamRole::PConvOrder ? opt.lr * opt.order_lr_scale : opt.lr;
    for (std::size_t i = 0; i < values.size(); ++i) {
      v[i] = opt.momentum * v[i] - lr * g[i];
      values[i] += v[i];
    }
  });
  net.project();
}

inline double gradient_norm(const Network& net, const Gradients& grads, const FreezeMask& freeze = {}) {
  double sum = 0.0;
  for_each_group(net.params(), grads, [&](ParamRole role, std::span<const double>, std::span<const double> g) {
    if (freeze.frozen(role)) return;
    for (double x : g) sum += x * x;
  });
  return std::sqrt(sum);
}

inline void scale_gradients(Gradients& grads, double factor) {
  for (LayerGradients& g : grads.layers) {
    for (Taps& t : g.pconv_w)
      for (double& v : t.values()) v *= factor;
    for (double& v : g.pconv_order) v *= factor;
    for (Taps& t : g.conv_kernels)
      for (double& v : t.values()) v *= factor;
    for (double& v : g.conv_biases) v *= factor;
  }
}

// ---------------------------------------------------------------------------
// Parameter files.
//
//   mcnn-params 1
//   <network spec as layer.N.key = value lines>
//   end-spec
//   pconv <layer> <filter> <k>        followed by k lines of k weights, then
//   order <value>
//   conv <layer> <kernel> <k>         followed by k lines of k weights
//   bias <layer> <values...>
//   end
//
// Numbers use the shortest representation that round-trips exactly.
// ---------------------------------------------------------------------------

inline void write_params(const Network& net, std::ostream& out) {
  out << "mcnn-params 1\n" << net.spec().to_config().to_string() << "end-spec\n";
  auto write_taps = [&](const Taps& t) {
    for (int r = 0; r < t.height(); ++r) {
      for (int c = 0; c < t.width(); ++c) out << (c ? " " : "") << format_double(t(r, c));
      out << "\n";
    }
  };
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const LayerParams& p = net.params()[i];
    for (std::size_t f = 0; f < p.pconv.size(); ++f) {
      out << "pconv " << i << " " << f << " " << p.pconv[f].w.width() << "\n";
      write_taps(p.pconv[f].w);
      out << "order " << format_double(p.pconv[f].order) << "\n";
    }
    for (std::size_t k = 0; k < p.conv.kernels.size(); ++k) {
      out << "conv " << i << " " << k << " " << p.conv.kernels[k].width() << "\n";
      write_taps(p.conv.kernels[k]);
    }
    if (!p.conv.biases.empty()) {
      out << "bias " << i;
      for (double b : p.conv.biases) out << " " << format_double(b);
      out << "\n";
    }
  }
  out << "end\n";
}

inline std::string params_to_string(const Network& net) {
  std::ostringstream ss;
  write_params(net, ss);
  return ss.str();
}

inline void save_params(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  write_params(net, out);
  if (!out) throw Error(Errc::Io, "write failed for " + path.string());
}

inline Network read_params(std::istream& in) {
  std::string line;
  auto next_line = [&](const char* expecting) {
    if (!std::getline(in, line)) throw Error(Errc::Truncated, std::string("parameter file ends before ") + expecting);
    return std::string(trim(line));
  };
  if (next_line("header") != "mcnn-params 1") throw Error(Errc::BadMagic, "not an mcnn parameter file");
  std::string spec_text;
  for (std::string l = next_line("end-spec"); l != "end-spec"; l = next_line("end-spec")) spec_text += l + "\n";
  const NetworkSpec spec = NetworkSpec::from_config(KeyValues::parse(spec_text));

  // Start from a deterministic build only to obtain the parameter layout;
  // every value is then overwritten and checked for presence.
  Network skeleton = build(spec, 0);
  std::vector<LayerParams> params = skeleton.params();
  std::vector<std::vector<bool>> seen_pconv(params.size()), seen_conv(params.size());
  std::vector<bool> seen_bias(params.size(), false);
  for (std::size_t i = 0; i < params.size(); ++i) {
    seen_pconv[i].assign(params[i].pconv.size(), false);
    seen_conv[i].assign(params[i].conv.kernels.size(), false);
  }

  auto read_taps = [&](Taps& t) {
    for (int r = 0; r < t.height(); ++r) {
      const std::vector<std::string> cells = split(next_line("kernel row"), ' ');
      if (static_cast<int>(cells.size()) != t.width()) throw Error(Errc::Truncated, "short kernel row");
      for (int c = 0; c < t.width(); ++c) t(r, c) = parse_double(cells[static_cast<std::size_t>(c)], "kernel weight");
    }
  };
  auto index_in = [](const std::string& s, std::size_t bound, const char* what) {
    const long long v = parse_int(s, what);
    if (v < 0 || static_cast<std::size_t>(v) >= bound) throw Error(Errc::InvalidSpec, std::string(what) + " out of range");
    return static_cast<std::size_t>(v);
  };

  for (std::string l = next_line("end"); l != "end"; l = next_line("end")) {
    const std::vector<std::string> tok = split(l, ' ');
    if (tok[0] == "pconv" && tok.size() == 4) {
      const std::size_t layer = index_in(tok[1], params.size(), "layer");
      const std::size_t f = index_in(tok[2], params[layer].pconv.size(), "filter");
      if (parse_int(tok[3], "kernel size") != params[layer].pconv[f].w.width()) {
        throw Error(Errc::InvalidSpec, "kernel size does not match spec");
      }
      read_taps(params[layer].pconv[f].w);
      const std::vector<std::string> order = split(next_line("order"), ' ');
      if (order.size() != 2 || order[0] != "order") throw Error(Errc::Truncated, "missing order line");
      params[layer].pconv[f].order = parse_double(order[1], "order");
      seen_pconv[layer][f] = true;
    } else if (tok[0] == "conv" && tok.size() == 4) {
      const std::size_t layer = index_in(tok[1], params.size(), "layer");
      const std::size_t k = index_in(tok[2], params[layer].conv.kernels.size(), "kernel");
      if (parse_int(tok[3], "kernel size") != params[layer].conv.kernels[k].width()) {
        throw Error(Errc::InvalidSpec, "kernel size does not match spec");
      }
      read_taps(params[layer].conv.kernels[k]);
      seen_conv[layer][k] = true;
    } else if (tok[0] == "bias" && tok.size() >= 2) {
      const std::size_t layer = index_in(tok[1], params.size(), "layer");
      if (tok.size() - 2 != params[layer].conv.biases.size()) throw Error(Errc::InvalidSpec, "bias count");
      for (std::size_t b = 0; b + 2 < tok.size(); ++b) params[layer].conv.biases[b] = parse_double(tok[b + 2], "bias");
      seen_bias[layer] = true;
    } else {
      throw Error(Errc::MalformedHeader, "unexpected line in parameter file: '" + l + "'");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool complete = std::all_of(seen_pconv[i].begin(), seen_pconv[i].end(), [](bool b) { return b; }) &&
                          std::all_of(seen_conv[i].begin(), seen_conv[i].end(), [](bool b) { return b; }) &&
                          (params[i].conv.biases.empty() || seen_bias[i]);
    if (!complete) throw Error(Errc::Truncated, "parameters missing for layer " + std::to_string(i));
  }
  return Network(spec, std::move(params));
}

inline Network params_from_string(const std::string& text) {
  std::istringstream in(text);
  return read_params(in);
}

inline Network load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  try {
    return read_params(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace mcnn
