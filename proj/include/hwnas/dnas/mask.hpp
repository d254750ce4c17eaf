#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "hwnas/dnas/searchable.hpp"
#include "hwnas/netgraph/forward.hpp"

namespace hwnas {

/// Indices with theta >= 0; when none survive, the single largest theta.
template <class T>
std::vector<std::size_t> kept_channels(const Tensor<T>& theta) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < theta.size(); ++i)
    if (theta[i] >= T{0}) keep.push_back(i);
  if (keep.empty()) keep.push_back(argmax<T>(theta.values()));
  return keep;
}

/// Heaviside(theta, 0) with the keep-one rule, straight-through backward.
template <class T>
Var<T> binarize_mask(Var<T> theta) {
  const auto keep = kept_channels(theta.value());
  Tensor<T> out(theta.shape(), T{0});
  for (auto k : keep) out[k] = T{1};
  const std::size_t t_id = theta.id;
  return theta.tape->record(std::move(out), {t_id}, [=](Tape<T>& tape, std::span<const T> gout) {
    if (auto* g = tape.grad_sink(t_id))
      for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i] += gout[i];
  });
}

struct EffectiveChannels {
  std::size_t layer = 0;
  std::size_t cin = 0;
  std::size_t cout = 0;

  bool operator==(const EffectiveChannels&) const = default;
};

/// Seed network whose convolution outputs are gated by trainable channel masks.
///
/// Convolutions whose outputs meet at a residual add share one mask group, so
/// pruning keeps the operands aligned. A layer's input channels follow the
/// group of whatever produces its input; the network input and the dense
/// head's outputs are never masked.
template <class T>
class MaskedNetwork final : public SearchableModel<T> {
 public:
  explicit MaskedNetwork(NetworkGraph<T> seed) : seed_(std::move(seed)) {
    build_groups();
    for (std::size_t g = 0; g < group_channels_.size(); ++g) theta_.emplace_back(Shape{group_channels_[g]}, T{1});
  }

  DnasMode mode() const override { return DnasMode::Mask; }
  const NetworkGraph<T>& seed() const override { return seed_; }

  std::size_t group_count() const { return theta_.size(); }
  /// Mask group gating layer i's output channels, or -1.
  int output_group(std::size_t i) const { return out_group_.at(i); }
  /// Mask group gating layer i's input channels, or -1.
  int input_group(std::size_t i) const {
    const int ref = seed_.layers.at(i).inputs.at(0);
    return ref == kNetworkInput ? -1 : out_group_[static_cast<std::size_t>(ref)];
  }

  Tensor<T>& theta(std::size_t group) { return theta_.at(group); }
  const Tensor<T>& theta(std::size_t group) const { return theta_.at(group); }

  /// The mask attached to a searchable layer (shared between group members).
  Tensor<T>* mask_of(std::size_t layer) {
    if (!is_target_layer(seed_.layers.at(layer))) return nullptr;
    return &theta_[static_cast<std::size_t>(out_group_[layer])];
  }

  ArchSample<T> sample(Tape<T>& tape, Sampling how, Rng&, T) override {
    ArchSample<T> out;
    for (auto& th : theta_) {
      switch (how) {
        case Sampling::Search:
          out.coefficients.push_back(binarize_mask(tape.parameter(th)));
          break;
        case Sampling::Frozen:
        case Sampling::Argmax:
          out.coefficients.push_back(binarize_mask(tape.constant(th)));
          break;
        case Sampling::Soft:
          throw std::invalid_argument("soft sampling is only defined for path search");
      }
    }
    return out;
  }

  Var<T> forward(Var<T> x, const ArchSample<T>& sample, bool train_weights) override {
    check_sample(sample);
    Tape<T>& tape = *x.tape;
    std::vector<bool> trivial(sample.coefficients.size());
    for (std::size_t g = 0; g < trivial.size(); ++g) {
      const auto c = sample.coefficients[g];
      const auto& v = c.value().values();
      trivial[g] = !tape.requires_grad(c) && std::all_of(v.begin(), v.end(), [](T e) { return e == T{1}; });
    }
    return forward_with<T>(seed_, x, [&](std::size_t i, std::size_t slot, Tensor<T>& p) {
      Var<T> v = train_weights ? tape.parameter(p) : tape.constant(p);
      const int g = out_group_[i];
      if (g < 0 || !is_masked_slot(seed_.layers[i], slot) || trivial[static_cast<std::size_t>(g)]) return v;
      return hadamard(v, sample.coefficients[static_cast<std::size_t>(g)], 0);
    });
  }

  std::vector<LayerCostVars<T>> layer_costs(Tape<T>& tape, const ArchSample<T>& sample) const override {
    check_sample(sample);
    std::vector<Var<T>> count;
    for (const auto& c : sample.coefficients) count.push_back(sum(c));
    auto channels = [&](int group, std::size_t fixed) {
      return group < 0 ? tape.constant(Tensor<T>::scalar(static_cast<T>(fixed))) : count[static_cast<std::size_t>(group)];
    };
    std::vector<LayerCostVars<T>> out;
    for (std::size_t i = 0; i < seed_.layers.size(); ++i) {
      const auto& s = seed_.layers[i];
      if (!is_cost_layer(s)) continue;
      const auto& a = seed_.shapes[i];
      auto cin = channels(input_group(i), a.cin);
      auto cout = channels(out_group_[i], a.cout);
      auto size = is_target_layer(s) ? layer_size_mask<T>(s, cin, cout) : tape.constant(Tensor<T>::scalar(T{0}));
      out.push_back(layer_cost_vars<T>(i, a, size, cin, cout));
    }
    return out;
  }

  std::vector<Tensor<T>*> weights() override {
    std::vector<Tensor<T>*> out;
    for (auto& layer : seed_.params)
      for (auto& p : layer) out.push_back(&p);
    return out;
  }

  std::vector<Tensor<T>*> arch_params() override {
    std::vector<Tensor<T>*> out;
    for (auto& t : theta_) out.push_back(&t);
    return out;
  }

  std::vector<EffectiveChannels> effective_channels() const {
    std::vector<EffectiveChannels> out;
    for (std::size_t i = 0; i < seed_.layers.size(); ++i) {
      if (!is_target_layer(seed_.layers[i])) continue;
      out.push_back({i, channel_count(input_group(i), seed_.shapes[i].cin),
                     channel_count(out_group_[i], seed_.shapes[i].cout)});
    }
    return out;
  }

  std::vector<std::string> export_warnings() const override {
    std::vector<std::string> out;
    for (std::size_t g = 0; g < theta_.size(); ++g) {
      const auto& t = theta_[g].values();
      if (std::none_of(t.begin(), t.end(), [](T v) { return v >= T{0}; })) {
        out.push_back("mask group " + std::to_string(g) + " (layers " + members(g) +
                      ") pruned every channel; kept channel " + std::to_string(argmax<T>(t)));
      }
    }
    return out;
  }

  /// Physically removes masked channels and the matching input slices.
  NetworkGraph<T> export_graph() const override {
    std::vector<std::vector<std::size_t>> keep;
    for (const auto& t : theta_) keep.push_back(kept_channels(t));
    auto indices = [&](int group, std::size_t full) {
      if (group >= 0) return keep[static_cast<std::size_t>(group)];
      std::vector<std::size_t> all(full);
      std::iota(all.begin(), all.end(), std::size_t{0});
      return all;
    };

    NetworkGraph<T> g;
    g.meta = seed_.meta;
    g.layers = seed_.layers;
    g.params.resize(seed_.layers.size());
    for (std::size_t i = 0; i < seed_.layers.size(); ++i) {
      auto& s = g.layers[i];
      const auto ci = indices(input_group(i), seed_.shapes[i].cin);
      const auto co = indices(out_group_[i], seed_.shapes[i].cout);
      const auto& src = seed_.params[i];
      switch (s.kind) {
        case LayerKind::Conv2d:
          s.cin = ci.size();
          s.cout = co.size();
          g.params[i] = {slice_conv(src[0], co, ci), slice_vector(src[1], co)};
          break;
        case LayerKind::DepthwiseSeparable:
          s.cin = ci.size();
          s.cout = co.size();
          g.params[i] = {slice_rows(src[0], ci), slice_conv(src[1], co, ci), slice_vector(src[2], co)};
          break;
        case LayerKind::Dense:
          s.cin = ci.size();
          g.params[i] = {slice_rows(src[0], ci), src[1]};
          break;
        case LayerKind::Identity:
          s.cin = s.cout = ci.size();
          break;
        default:
          break;  // channel counts re-inferred
      }
    }
    infer_shapes(g, seed_.input);
    validate_params(g);
    return g;
  }

 private:
  static bool is_masked_slot(const LayerSpec& s, std::size_t slot) {
    if (s.kind == LayerKind::Conv2d) return true;
    if (s.kind == LayerKind::DepthwiseSeparable) return slot >= 1;
    return false;
  }

  std::size_t channel_count(int group, std::size_t full) const {
    return group < 0 ? full : kept_channels(theta_[static_cast<std::size_t>(group)]).size();
  }

  std::string members(std::size_t g) const {
    std::string s;
    for (std::size_t i = 0; i < out_group_.size(); ++i) {
      if (out_group_[i] != static_cast<int>(g) || !is_target_layer(seed_.layers[i])) continue;
      if (!s.empty()) s += ",";
      s += std::to_string(i);
    }
    return s;
  }

  // Union-find over provisional per-conv groups; residual adds merge operands.
  void build_groups() {
    const auto n = seed_.layers.size();
    std::vector<int> parent;
    auto find = [&](int a) {
      while (parent[static_cast<std::size_t>(a)] != a) a = parent[static_cast<std::size_t>(a)];
      return a;
    };
    std::vector<int> provisional(n, -1);
    auto source = [&](int ref) { return ref == kNetworkInput ? -1 : provisional[static_cast<std::size_t>(ref)]; };
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = seed_.layers[i];
      switch (s.kind) {
        case LayerKind::Conv2d:
        case LayerKind::DepthwiseSeparable:
          provisional[i] = static_cast<int>(parent.size());
          parent.push_back(provisional[i]);
          break;
        case LayerKind::Dense:
          break;
        case LayerKind::ResidualAdd: {
          const int a = source(s.inputs[0]), b = source(s.inputs[1]);
          if ((a < 0) != (b < 0)) {
            throw GraphError("layer " + std::to_string(i) + ": residual add mixes masked and unmasked channels");
          }
          if (a >= 0) parent[static_cast<std::size_t>(find(b))] = find(a);
          provisional[i] = a;
          break;
        }
        default:
          provisional[i] = source(s.inputs[0]);
      }
    }
    std::vector<int> compact(parent.size(), -1);
    out_group_.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
      if (provisional[i] < 0) continue;
      const int root = find(provisional[i]);
      auto& c = compact[static_cast<std::size_t>(root)];
      if (c < 0) {
        c = static_cast<int>(group_channels_.size());
        group_channels_.push_back(seed_.shapes[i].cout);
      }
      out_group_[i] = c;
    }
  }

  static Tensor<T> slice_vector(const Tensor<T>& v, const std::vector<std::size_t>& idx) {
    Tensor<T> out({idx.size()});
    for (std::size_t k = 0; k < idx.size(); ++k) out[k] = v[idx[k]];
    return out;
  }

  // Leading-axis selection of a tensor of any rank.
  static Tensor<T> slice_rows(const Tensor<T>& t, const std::vector<std::size_t>& idx) {
    Shape shape = t.shape();
    const std::size_t row = t.size() / shape[0];
    shape[0] = idx.size();
    Tensor<T> out(shape);
    for (std::size_t k = 0; k < idx.size(); ++k)
      std::copy_n(t.values().data() + idx[k] * row, row, out.values().data() + k * row);
    return out;
  }

  // [Cout, Kx, Ky, Cin] selection along the first and last axes.
  static Tensor<T> slice_conv(const Tensor<T>& w, const std::vector<std::size_t>& co,
                              const std::vector<std::size_t>& ci) {
    const auto& sh = w.shape();
    const std::size_t k = sh[1] * sh[2], cin = sh[3];
    Tensor<T> out({co.size(), sh[1], sh[2], ci.size()});
    std::size_t pos = 0;
    for (auto o : co)
      for (std::size_t s = 0; s < k; ++s)
        for (auto c : ci) out[pos++] = w[(o * k + s) * cin + c];
    return out;
  }

  void check_sample(const ArchSample<T>& s) const {
    if (s.coefficients.size() != theta_.size()) throw std::invalid_argument("sample does not match mask groups");
  }

  NetworkGraph<T> seed_;
  std::vector<Tensor<T>> theta_;
  std::vector<std::size_t> group_channels_;
  std::vector<int> out_group_;
};

}  // namespace hwnas
