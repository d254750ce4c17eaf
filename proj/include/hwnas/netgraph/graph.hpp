#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hwnas/autodiff/ops.hpp"
#include "hwnas/autodiff/rng.hpp"
#include "hwnas/autodiff/tensor.hpp"
#include "hwnas/netgraph/layer.hpp"

namespace hwnas {

struct GraphMeta {
  std::string seed_name;
  std::uint64_t rng_seed = 0;

  bool operator==(const GraphMeta&) const = default;
};

/// Ordered layer list with per-layer shape annotations and parameters.
///
/// params[i] holds the trainable tensors of layer i in slot order:
///   Conv2d             {weight [Cout,Kx,Ky,Cin], bias [Cout]}
///   DepthwiseSeparable {depthwise [Cin,Kx,Ky], pointwise [Cout,1,1,Cin], bias [Cout]}
///   Dense              {weight [F,G], bias [G]}
/// and is empty for the parameter-free kinds.
template <class T>
struct NetworkGraph {
  InputShape input;
  std::vector<LayerSpec> layers;
  std::vector<ShapeAnnotation> shapes;
  std::vector<std::vector<Tensor<T>>> params;
  GraphMeta meta;

  std::size_t size() const { return layers.size(); }
};

inline std::vector<Shape> param_shapes(const LayerSpec& s) {
  switch (s.kind) {
    case LayerKind::Conv2d:
      return {{s.cout, s.kx, s.ky, s.cin}, {s.cout}};
    case LayerKind::DepthwiseSeparable:
      return {{s.cin, s.kx, s.ky}, {s.cout, 1, 1, s.cin}, {s.cout}};
    case LayerKind::Dense:
      return {{s.cin, s.cout}, {s.cout}};
    default:
      return {};
  }
}

/// Index of the bias slot (which the size cost model does not count).
inline std::size_t bias_slot(const LayerSpec& s) {
  return s.kind == LayerKind::DepthwiseSeparable ? 2 : 1;
}

/// Structural checks that need no shape information.
inline void validate_layers(const std::vector<LayerSpec>& layers) {
  if (layers.empty()) throw GraphError("graph has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& s = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + std::string(to_string(s.kind)) + ")";
    const std::size_t want_inputs = s.kind == LayerKind::ResidualAdd ? 2 : 1;
    if (s.inputs.size() != want_inputs) {
      throw GraphError(where + ": expected " + std::to_string(want_inputs) + " inputs");
    }
    for (int ref : s.inputs) {
      if (ref < kNetworkInput || ref >= static_cast<int>(i)) {
        throw GraphError(where + ": input " + std::to_string(ref) + " does not precede it");
      }
    }
    if (s.stride == 0) throw GraphError(where + ": stride must be positive");
    switch (s.kind) {
      case LayerKind::Conv2d:
      case LayerKind::DepthwiseSeparable:
        if (s.kx == 0 || s.ky == 0) throw GraphError(where + ": kernel extents must be >= 1");
        if (s.cin == 0 || s.cout == 0) throw GraphError(where + ": channel counts must be >= 1");
        break;
      case LayerKind::Dense:
        if (s.cin == 0 || s.cout == 0) throw GraphError(where + ": feature counts must be >= 1");
        break;
      case LayerKind::Identity:
        if (s.cin != s.cout) throw GraphError(where + ": identity requires cin == cout");
        if (s.stride != 1) throw GraphError(where + ": identity requires stride == 1");
        break;
      default:
        break;
    }
  }
}

namespace detail {

struct Produced {
  std::size_t channels = 0, height = 0, width = 0;
  bool flat = false;
};

}  // namespace detail

/// Annotates every layer with input/output extents.
///
/// Channel fields of pass-through layers (ReLU, AvgPool, ResidualAdd) are
/// filled from their producer; every other layer must agree with it.
template <class T>
void infer_shapes(NetworkGraph<T>& g, InputShape input) {
  validate_layers(g.layers);
  if (input.channels == 0 || input.height == 0 || input.width == 0) {
    throw GraphError("input shape extents must be >= 1");
  }
  g.input = input;
  std::vector<detail::Produced> out(g.layers.size());
  const detail::Produced net_in{input.channels, input.height, input.width, false};
  auto producer = [&](int ref) -> const detail::Produced& { return ref == kNetworkInput ? net_in : out[ref]; };

  g.shapes.assign(g.layers.size(), {});
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    auto& s = g.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + std::string(to_string(s.kind)) + ")";
    const auto& p = producer(s.inputs[0]);
    auto expect_channels = [&](std::size_t want) {
      if (want != p.channels) {
        throw GraphError(where + ": declares " + std::to_string(want) + " input channels, producer gives " +
                         std::to_string(p.channels));
      }
    };
    auto require_spatial = [&] {
      if (p.flat) throw GraphError(where + ": needs a spatial input");
    };
    detail::Produced o = p;
    switch (s.kind) {
      case LayerKind::Conv2d:
      case LayerKind::DepthwiseSeparable: {
        require_spatial();
        expect_channels(s.cin);
        if (s.kx > p.height + 2 * s.padding || s.ky > p.width + 2 * s.padding) {
          throw GraphError(where + ": kernel larger than padded input");
        }
        o = {s.cout, conv_output_extent(p.height, s.kx, s.stride, s.padding),
             conv_output_extent(p.width, s.ky, s.stride, s.padding), false};
        break;
      }
      case LayerKind::Dense:
        if (!p.flat) throw GraphError(where + ": needs a pooled (flat) input");
        expect_channels(s.cin);
        o = {s.cout, 1, 1, true};
        break;
      case LayerKind::Identity:
        expect_channels(s.cin);
        break;
      case LayerKind::ReLU:
        s.cin = s.cout = p.channels;
        break;
      case LayerKind::AvgPool:
        require_spatial();
        s.cin = s.cout = p.channels;
        o = {p.channels, 1, 1, true};
        break;
      case LayerKind::ResidualAdd: {
        const auto& q = producer(s.inputs[1]);
        if (q.channels != p.channels || q.height != p.height || q.width != p.width || q.flat != p.flat) {
          throw GraphError(where + ": operands have different shapes");
        }
        s.cin = s.cout = p.channels;
        break;
      }
    }
    out[i] = o;
    g.shapes[i] = {p.height, p.width, o.height, o.width, p.channels, o.channels};
  }
}

/// Kaiming-uniform (fan-in) weights and zero bias for one layer, in slot order.
template <class T>
std::vector<Tensor<T>> init_layer_params(const LayerSpec& s, Rng& rng) {
  std::vector<Tensor<T>> out;
  const auto shapes = param_shapes(s);
  for (std::size_t slot = 0; slot < shapes.size(); ++slot) {
    Tensor<T> t(shapes[slot]);
    if (slot != bias_slot(s)) {
      std::size_t fan_in = s.cin * s.kx * s.ky;
      if (s.kind == LayerKind::DepthwiseSeparable) fan_in = slot == 0 ? s.kx * s.ky : s.cin;
      if (s.kind == LayerKind::Dense) fan_in = s.cin;
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    out.push_back(std::move(t));
  }
  return out;
}

template <class T>
void init_params(NetworkGraph<T>& g, Rng& rng) {
  g.params.assign(g.layers.size(), {});
  for (std::size_t i = 0; i < g.layers.size(); ++i) g.params[i] = init_layer_params<T>(g.layers[i], rng);
}

/// Checks parameter tensors against the layer specs.
template <class T>
void validate_params(const NetworkGraph<T>& g) {
  if (g.params.size() != g.layers.size()) throw GraphError("parameter list does not match layer count");
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto shapes = param_shapes(g.layers[i]);
    if (g.params[i].size() != shapes.size()) {
      throw GraphError("layer " + std::to_string(i) + ": expected " + std::to_string(shapes.size()) +
                       " parameter tensors");
    }
    for (std::size_t k = 0; k < shapes.size(); ++k) {
      if (g.params[i][k].shape() != shapes[k]) {
        throw GraphError("layer " + std::to_string(i) + " slot " + std::to_string(k) + ": parameter shape " +
                         to_string(g.params[i][k].shape()) + " does not match spec " + to_string(shapes[k]));
      }
    }
  }
}

/// Kernel weights of all target layers, counted from the stored tensors.
template <class T>
std::size_t target_weight_count(const NetworkGraph<T>& g) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    if (!is_target_layer(g.layers[i])) continue;
    for (std::size_t k = 0; k < g.params[i].size(); ++k)
      if (k != bias_slot(g.layers[i])) n += g.params[i][k].size();
  }
  return n;
}

/// Bias elements of all layers plus every weight of non-target layers.
template <class T>
std::size_t other_param_count(const NetworkGraph<T>& g) {
  std::size_t n = 0;
  for (const auto& layer : g.params)
    for (const auto& t : layer) n += t.size();
  return n - target_weight_count(g);
}

/// Stable FNV-1a digest of the architecture (specs and shapes, not values).
template <class T>
std::uint64_t architecture_hash(const NetworkGraph<T>& g) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  mix(g.input.channels);
  mix(g.input.height);
  mix(g.input.width);
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto& s = g.layers[i];
    for (auto v : {static_cast<std::size_t>(s.kind), s.cin, s.cout, s.kx, s.ky, s.stride, s.padding}) mix(v);
    for (int r : s.inputs) mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(r)));
    if (i < g.shapes.size()) {
      const auto& a = g.shapes[i];
      for (auto v : {a.ix, a.iy, a.ox, a.oy, a.cin, a.cout}) mix(v);
    }
  }
  return h;
}

/// Converts parameter storage to another scalar type.
template <class To, class From>
NetworkGraph<To> convert_graph(const NetworkGraph<From>& g) {
  NetworkGraph<To> out;
  out.input = g.input;
  out.layers = g.layers;
  out.shapes = g.shapes;
  out.meta = g.meta;
  out.params.resize(g.params.size());
  for (std::size_t i = 0; i < g.params.size(); ++i)
    for (const auto& t : g.params[i]) {
      std::vector<To> v(t.values().begin(), t.values().end());
      out.params[i].emplace_back(t.shape(), std::move(v));
    }
  return out;
}

}  // namespace hwnas
