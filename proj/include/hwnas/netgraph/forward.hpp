#pragma once

#include <span>
#include <vector>

#include "hwnas/autodiff/ops.hpp"
#include "hwnas/netgraph/graph.hpp"

namespace hwnas {

/// Evaluates one layer given its bound parameters and input Vars.
template <class T>
Var<T> apply_layer(const LayerSpec& s, std::span<const Var<T>> params, std::span<const Var<T>> in) {
  switch (s.kind) {
    case LayerKind::Conv2d:
      return add_channel_bias(conv2d(in[0], params[0], s.stride, s.padding), params[1]);
    case LayerKind::DepthwiseSeparable: {
      auto dw = depthwise_conv2d(in[0], params[0], s.stride, s.padding);
      return add_channel_bias(conv2d(dw, params[1], 1, 0), params[2]);
    }
    case LayerKind::Dense:
      return dense(in[0], params[0], params[1]);
    case LayerKind::ReLU:
      return relu(in[0]);
    case LayerKind::AvgPool:
      return global_avg_pool(in[0]);
    case LayerKind::ResidualAdd:
      return add(in[0], in[1]);
    case LayerKind::Identity:
      return in[0];
  }
  throw GraphError("unhandled layer kind");
}

/// Runs the layers in order. `layer_fn(i, inputs)` produces layer i's output.
template <class T, class LayerFn>
Var<T> walk_layers(std::size_t layer_count, const std::vector<LayerSpec>& layers, Var<T> x, LayerFn&& layer_fn) {
  std::vector<Var<T>> outs;
  outs.reserve(layer_count);
  std::vector<Var<T>> in;
  for (std::size_t i = 0; i < layer_count; ++i) {
    in.clear();
    for (int ref : layers[i].inputs) in.push_back(ref == kNetworkInput ? x : outs[ref]);
    outs.push_back(layer_fn(i, std::span<const Var<T>>(in)));
  }
  return outs.back();
}

/// Forward pass where `bind(layer, slot, tensor)` turns each parameter into a
/// Var (registered, constant, or transformed, e.g. masked).
template <class T, class Graph, class Binder>
Var<T> forward_with(Graph& g, Var<T> x, Binder&& bind) {
  std::vector<Var<T>> params;
  return walk_layers<T>(g.layers.size(), g.layers, x, [&](std::size_t i, std::span<const Var<T>> in) {
    params.clear();
    for (std::size_t k = 0; k < g.params[i].size(); ++k) params.push_back(bind(i, k, g.params[i][k]));
    return apply_layer<T>(g.layers[i], params, in);
  });
}

/// Forward pass with every parameter registered for gradients.
template <class T>
Var<T> forward(NetworkGraph<T>& g, Var<T> x) {
  Tape<T>& tape = *x.tape;
  return forward_with<T>(g, x, [&](std::size_t, std::size_t, Tensor<T>& p) { return tape.parameter(p); });
}

/// Forward pass treating parameters as constants.
template <class T>
Var<T> forward_eval(const NetworkGraph<T>& g, Var<T> x) {
  Tape<T>& tape = *x.tape;
  return forward_with<T>(g, x, [&](std::size_t, std::size_t, const Tensor<T>& p) { return tape.constant(p); });
}

}  // namespace hwnas
