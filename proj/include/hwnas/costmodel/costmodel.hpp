#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hwnas/autodiff/ops.hpp"
#include "hwnas/netgraph/graph.hpp"

namespace hwnas {

// ---------------------------------------------------------------------------
// Closed-form counts (element units)
// ---------------------------------------------------------------------------

/// Weights of a standard convolution: Cin*Cout*Kx*Ky.
inline std::int64_t conv_size(std::int64_t cin, std::int64_t cout, std::int64_t kx, std::int64_t ky) {
  return cin * cout * kx * ky;
}

/// Weights of depthwise + pointwise: Cin*Kx*Ky + Cin*Cout.
inline std::int64_t separable_size(std::int64_t cin, std::int64_t cout, std::int64_t kx, std::int64_t ky) {
  return cin * kx * ky + cin * cout;
}

/// Kernel weights of one layer; zero for everything except Conv2d / DepthwiseSeparable.
inline std::int64_t layer_weight_size(const LayerSpec& s) {
  const auto cin = static_cast<std::int64_t>(s.cin), cout = static_cast<std::int64_t>(s.cout);
  const auto kx = static_cast<std::int64_t>(s.kx), ky = static_cast<std::int64_t>(s.ky);
  switch (s.kind) {
    case LayerKind::Conv2d:
      return conv_size(cin, cout, kx, ky);
    case LayerKind::DepthwiseSeparable:
      return separable_size(cin, cout, kx, ky);
    default:
      return 0;
  }
}

/// Layers a cost report lists: searchable convolutions plus Identity, which
/// stands in for a convolution removed by path selection.
inline bool is_cost_layer(const LayerSpec& s) { return is_target_layer(s) || s.kind == LayerKind::Identity; }

struct LayerCost {
  std::size_t layer = 0;
  std::int64_t size = 0;    ///< kernel weights
  std::int64_t ops = 0;     ///< MACs: size * Ox * Oy
  std::int64_t memory = 0;  ///< size + Ix*Iy*Cin + Ox*Oy*Cout

  bool operator==(const LayerCost&) const = default;
};

inline LayerCost layer_cost(std::size_t index, const LayerSpec& s, const ShapeAnnotation& a) {
  LayerCost c;
  c.layer = index;
  c.size = layer_weight_size(s);
  c.ops = c.size * static_cast<std::int64_t>(a.ox * a.oy);
  c.memory = c.size + static_cast<std::int64_t>(a.ix * a.iy * a.cin + a.ox * a.oy * a.cout);
  return c;
}

template <class T>
std::vector<LayerCost> graph_costs(const NetworkGraph<T>& g) {
  std::vector<LayerCost> out;
  for (std::size_t i = 0; i < g.layers.size(); ++i)
    if (is_cost_layer(g.layers[i])) out.push_back(layer_cost(i, g.layers[i], g.shapes.at(i)));
  return out;
}

inline std::int64_t model_size(std::span<const LayerCost> costs) {
  std::int64_t s = 0;
  for (const auto& c : costs) s += c.size;
  return s;
}

inline std::int64_t model_ops(std::span<const LayerCost> costs) {
  std::int64_t s = 0;
  for (const auto& c : costs) s += c.ops;
  return s;
}

inline std::optional<LayerCost> find_layer(std::span<const LayerCost> costs, std::size_t layer) {
  for (const auto& c : costs)
    if (c.layer == layer) return c;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Memory hierarchy
// ---------------------------------------------------------------------------

/// One constrained memory level. Capacities are in the same unit as
/// element_size (elements when element_size == 1).
struct HwDescriptor {
  double level_capacity = 0;
  double reserved_offset = 0;
  double element_size = 1;

  void validate() const {
    if (!(level_capacity > reserved_offset) || reserved_offset < 0) {
      throw std::invalid_argument("hw descriptor needs level_capacity > reserved_offset >= 0");
    }
    if (!(element_size > 0)) throw std::invalid_argument("hw descriptor element_size must be positive");
  }

  /// Usable budget T_m in elements.
  double budget() const {
    validate();
    return (level_capacity - reserved_offset) / element_size;
  }
};

/// Layers that overflow T_m by less than a factor (1 + margin).
inline std::vector<std::size_t> detect_critical_layers(std::span<const LayerCost> costs, const HwDescriptor& hw,
                                                       double margin) {
  if (margin < 0) throw std::invalid_argument("critical margin must be non-negative");
  const double tm = hw.budget();
  std::vector<std::size_t> out;
  for (const auto& c : costs) {
    const auto m = static_cast<double>(c.memory);
    if (m > tm && m < (1.0 + margin) * tm) out.push_back(c.layer);
  }
  return out;
}

/// Sum of positive per-layer excesses over T_m.
inline double l2_violation(std::span<const LayerCost> costs, const HwDescriptor& hw) {
  const double tm = hw.budget();
  double v = 0;
  for (const auto& c : costs) {
    const auto m = static_cast<double>(c.memory);
    if (m > tm) v += m - tm;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Metrics and reports
// ---------------------------------------------------------------------------

enum class Metric { Size, Ops, LayerMemory };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::Size:
      return "size";
    case Metric::Ops:
      return "ops";
    case Metric::LayerMemory:
      return "layer_memory";
  }
  return "?";
}

inline Metric parse_metric(std::string_view s) {
  if (s == "size") return Metric::Size;
  if (s == "ops") return Metric::Ops;
  if (s == "layer_memory") return Metric::LayerMemory;
  throw std::invalid_argument("unknown metric '" + std::string(s) + "'");
}

/// Discrete value of a metric. LayerMemory reads the entry for `layer`.
inline double metric_value(Metric m, std::size_t layer, std::span<const LayerCost> costs) {
  switch (m) {
    case Metric::Size:
      return static_cast<double>(model_size(costs));
    case Metric::Ops:
      return static_cast<double>(model_ops(costs));
    case Metric::LayerMemory: {
      auto c = find_layer(costs, layer);
      if (!c) throw std::out_of_range("no cost entry for layer " + std::to_string(layer));
      return static_cast<double>(c->memory);
    }
  }
  return 0;
}

struct ConstraintResult {
  Metric metric = Metric::Size;
  std::size_t layer = 0;  ///< meaningful for LayerMemory only
  double target = 0;
  double value = 0;
  bool satisfied = false;
  double excess = 0;  ///< max(0, value - target)
};

inline ConstraintResult evaluate_constraint(Metric m, std::size_t layer, double target,
                                            std::span<const LayerCost> costs) {
  ConstraintResult r;
  r.metric = m;
  r.layer = layer;
  r.target = target;
  r.value = metric_value(m, layer, costs);
  r.satisfied = r.value <= target;
  r.excess = r.satisfied ? 0.0 : r.value - target;
  return r;
}

struct CostReport {
  std::vector<LayerCost> per_layer;
  std::int64_t size = 0;
  std::int64_t ops = 0;
  std::optional<double> l2v;  ///< present when a memory level was supplied
  std::vector<ConstraintResult> constraints;

  bool all_satisfied() const {
    for (const auto& c : constraints)
      if (!c.satisfied) return false;
    return true;
  }
};

inline CostReport make_cost_report(std::vector<LayerCost> costs, const std::optional<HwDescriptor>& hw = {}) {
  CostReport r;
  r.size = model_size(costs);
  r.ops = model_ops(costs);
  if (hw) r.l2v = l2_violation(costs, *hw);
  r.per_layer = std::move(costs);
  return r;
}

// ---------------------------------------------------------------------------
// Differentiable forms
// ---------------------------------------------------------------------------

/// Per-layer cost terms recorded on a tape.
template <class T>
struct LayerCostVars {
  std::size_t layer = 0;
  Var<T> size;
  Var<T> ops;
  Var<T> memory;
};

/// Sum_i g_i * S_i for a (one-hot or soft) coefficient vector.
template <class T>
Var<T> layer_size_path(Var<T> coefficients, std::span<const std::int64_t> alternative_sizes) {
  if (coefficients.size() != alternative_sizes.size()) {
    throw ShapeError("layer_size_path: coefficient count does not match alternatives");
  }
  Tensor<T> s(coefficients.shape());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<T>(alternative_sizes[i]);
  return sum(hadamard(coefficients, coefficients.tape->constant(std::move(s))));
}

/// Weight count of a layer from (possibly differentiable) effective channel counts.
template <class T>
Var<T> layer_size_mask(const LayerSpec& s, Var<T> cin_eff, Var<T> cout_eff) {
  const T k = static_cast<T>(s.kx * s.ky);
  switch (s.kind) {
    case LayerKind::Conv2d:
      return scale(mul(cin_eff, cout_eff), k);
    case LayerKind::DepthwiseSeparable:
      return add(scale(cin_eff, k), mul(cin_eff, cout_eff));
    default:
      throw GraphError("layer_size_mask: not a searchable layer");
  }
}

/// Builds ops and memory terms around a size term.
template <class T>
LayerCostVars<T> layer_cost_vars(std::size_t index, const ShapeAnnotation& a, Var<T> size, Var<T> cin_eff,
                                 Var<T> cout_eff) {
  const T out_plane = static_cast<T>(a.ox * a.oy);
  const T in_plane = static_cast<T>(a.ix * a.iy);
  auto ops = scale(size, out_plane);
  auto memory = add(add(size, scale(cin_eff, in_plane)), scale(cout_eff, out_plane));
  return {index, size, ops, memory};
}

template <class T>
Var<T> total_size(Tape<T>& tape, std::span<const LayerCostVars<T>> costs) {
  std::vector<Var<T>> terms;
  for (const auto& c : costs) terms.push_back(c.size);
  return add_all<T>(tape, terms);
}

template <class T>
Var<T> total_ops(Tape<T>& tape, std::span<const LayerCostVars<T>> costs) {
  std::vector<Var<T>> terms;
  for (const auto& c : costs) terms.push_back(c.ops);
  return add_all<T>(tape, terms);
}

}  // namespace hwnas
