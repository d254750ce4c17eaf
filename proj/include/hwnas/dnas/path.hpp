#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hwnas/dnas/searchable.hpp"
#include "hwnas/netgraph/forward.hpp"

namespace hwnas {

/// Candidate replacements for one convolution: 3x3 conv, 5x5 conv,
/// depthwise-separable 3x3, and Identity when stride is 1 and cin == cout.
/// Padding is shifted with the kernel so every candidate keeps the output extent.
inline std::vector<LayerSpec> default_alternatives(const LayerSpec& conv, const ShapeAnnotation& shape) {
  std::vector<LayerSpec> out;
  auto keeps_shape = [&](std::size_t k, std::size_t pad) {
    return conv_output_extent(shape.ix, k, conv.stride, pad) == shape.ox &&
           conv_output_extent(shape.iy, k, conv.stride, pad) == shape.oy;
  };
  auto padding_for = [&](std::size_t k) -> std::optional<std::size_t> {
    const auto p = static_cast<long>(conv.padding) + (static_cast<long>(k) - static_cast<long>(conv.kx)) / 2;
    if (p < 0) return std::nullopt;
    return static_cast<std::size_t>(p);
  };
  const int in = conv.inputs.at(0);
  for (std::size_t k : {3u, 5u}) {
    auto p = padding_for(k);
    if (p && keeps_shape(k, *p)) out.push_back(conv_spec(conv.cin, conv.cout, k, conv.stride, *p, in));
  }
  if (auto p = padding_for(3); p && keeps_shape(3, *p)) {
    out.push_back(separable_spec(conv.cin, conv.cout, 3, conv.stride, *p, in));
  }
  if (conv.stride == 1 && conv.cin == conv.cout) out.push_back(identity_spec(conv.cin, in));
  return out;
}

template <class T>
struct SupernetModule {
  std::size_t layer = 0;  ///< position in the skeleton
  std::vector<LayerSpec> alternatives;
  std::vector<std::vector<Tensor<T>>> params;  ///< per alternative, slot order
  std::vector<std::int64_t> sizes;             ///< kernel weights per alternative
  Tensor<T> theta;

  std::size_t count() const { return alternatives.size(); }
};

/// Seed network whose convolutions are replaced by multi-path modules.
template <class T>
class Supernet final : public SearchableModel<T> {
 public:
  using AlternativeFn = std::function<std::vector<LayerSpec>(const LayerSpec&, const ShapeAnnotation&)>;

  /// Alternatives are initialized from `rng` in module order; theta starts at 1.
  Supernet(NetworkGraph<T> seed, Rng& rng, AlternativeFn alternatives = default_alternatives)
      : seed_(std::move(seed)), module_of_(seed_.layers.size(), -1) {
    for (std::size_t i = 0; i < seed_.layers.size(); ++i) {
      const auto& s = seed_.layers[i];
      if (s.kind != LayerKind::Conv2d) continue;
      SupernetModule<T> m;
      m.layer = i;
      m.alternatives = alternatives(s, seed_.shapes[i]);
      if (m.alternatives.empty()) throw GraphError("layer " + std::to_string(i) + ": no alternatives");
      for (auto& alt : m.alternatives) {
        alt.inputs = s.inputs;
        check_alternative(i, alt);
        m.params.push_back(init_layer_params<T>(alt, rng));
        m.sizes.push_back(layer_weight_size(alt));
      }
      m.theta = Tensor<T>({m.count()}, T{1});
      module_of_[i] = static_cast<int>(modules_.size());
      modules_.push_back(std::move(m));
    }
  }

  DnasMode mode() const override { return DnasMode::Path; }

  const std::vector<SupernetModule<T>>& modules() const { return modules_; }
  std::vector<SupernetModule<T>>& modules() { return modules_; }
  const NetworkGraph<T>& seed() const override { return seed_; }

  ArchSample<T> sample(Tape<T>& tape, Sampling how, Rng& rng, T temperature) override {
    if (!(temperature > T{0})) throw std::invalid_argument("temperature must be positive");
    ArchSample<T> out;
    for (auto& m : modules_) {
      switch (how) {
        case Sampling::Frozen: {
          auto noise = gumbel_noise<T>(rng, m.theta.shape());
          for (std::size_t i = 0; i < noise.size(); ++i) noise[i] += m.theta[i];
          out.coefficients.push_back(tape.constant(one_hot(m.count(), argmax<T>(noise.values()))));
          break;
        }
        case Sampling::Search: {
          auto noise = tape.constant(gumbel_noise<T>(rng, m.theta.shape()));
          auto scores = softmax(add(tape.parameter(m.theta), noise), temperature);
          out.coefficients.push_back(ste_onehot_argmax(scores));
          break;
        }
        case Sampling::Soft:
          out.coefficients.push_back(softmax(tape.parameter(m.theta), temperature));
          break;
        case Sampling::Argmax:
          out.coefficients.push_back(tape.constant(one_hot(m.count(), argmax<T>(m.theta.values()))));
          break;
      }
    }
    return out;
  }

  Var<T> forward(Var<T> x, const ArchSample<T>& sample, bool train_weights) override {
    check_sample(sample);
    Tape<T>& tape = *x.tape;
    auto bind = [&](Tensor<T>& p) { return train_weights ? tape.parameter(p) : tape.constant(p); };
    std::vector<Var<T>> params;
    return walk_layers<T>(seed_.layers.size(), seed_.layers, x, [&](std::size_t i, std::span<const Var<T>> in) {
      if (module_of_[i] < 0) {
        params.clear();
        for (auto& p : seed_.params[i]) params.push_back(bind(p));
        return apply_layer<T>(seed_.layers[i], params, in);
      }
      auto& m = modules_[static_cast<std::size_t>(module_of_[i])];
      const Var<T> g = sample.coefficients[static_cast<std::size_t>(module_of_[i])];
      auto branch = [&](std::size_t a) {
        std::vector<Var<T>> ps;
        for (auto& p : m.params[a]) ps.push_back(bind(p));
        return apply_layer<T>(m.alternatives[a], ps, in);
      };
      // A constant one-hot selection only needs the selected branch.
      if (!tape.requires_grad(g)) {
        if (auto only = single_selected(g.value())) return branch(*only);
      }
      std::vector<Var<T>> branches;
      for (std::size_t a = 0; a < m.count(); ++a) branches.push_back(branch(a));
      return weighted_sum<T>(branches, g);
    });
  }

  std::vector<LayerCostVars<T>> layer_costs(Tape<T>& tape, const ArchSample<T>& sample) const override {
    check_sample(sample);
    std::vector<LayerCostVars<T>> out;
    for (std::size_t k = 0; k < modules_.size(); ++k) {
      const auto& m = modules_[k];
      const auto& a = seed_.shapes[m.layer];
      auto size = layer_size_path<T>(sample.coefficients[k], m.sizes);
      auto cin = tape.constant(Tensor<T>::scalar(static_cast<T>(a.cin)));
      auto cout = tape.constant(Tensor<T>::scalar(static_cast<T>(a.cout)));
      out.push_back(layer_cost_vars<T>(m.layer, a, size, cin, cout));
    }
    return out;
  }

  std::vector<Tensor<T>*> weights() override {
    std::vector<Tensor<T>*> out;
    for (std::size_t i = 0; i < seed_.layers.size(); ++i) {
      if (module_of_[i] >= 0) {
        for (auto& alt : modules_[static_cast<std::size_t>(module_of_[i])].params)
          for (auto& p : alt) out.push_back(&p);
      } else {
        for (auto& p : seed_.params[i]) out.push_back(&p);
      }
    }
    return out;
  }

  std::vector<Tensor<T>*> arch_params() override {
    std::vector<Tensor<T>*> out;
    for (auto& m : modules_) out.push_back(&m.theta);
    return out;
  }

  /// Index of the largest theta per module (ties to the lowest index).
  std::vector<std::size_t> selected() const {
    std::vector<std::size_t> out;
    for (const auto& m : modules_) out.push_back(argmax<T>(m.theta.values()));
    return out;
  }

  /// Single-path network for an explicit choice per module.
  NetworkGraph<T> export_selection(std::span<const std::size_t> choice) const {
    if (choice.size() != modules_.size()) throw std::invalid_argument("export_selection: one index per module");
    NetworkGraph<T> g = seed_;
    for (std::size_t k = 0; k < modules_.size(); ++k) {
      const auto& m = modules_[k];
      if (choice[k] >= m.count()) throw std::out_of_range("export_selection: alternative index out of range");
      g.layers[m.layer] = m.alternatives[choice[k]];
      g.params[m.layer] = m.params[choice[k]];
    }
    infer_shapes(g, seed_.input);
    validate_params(g);
    return g;
  }

  NetworkGraph<T> export_graph() const override {
    const auto s = selected();
    return export_selection(s);
  }

 private:
  static Tensor<T> one_hot(std::size_t n, std::size_t k) {
    Tensor<T> t({n}, T{0});
    t[k] = T{1};
    return t;
  }

  static std::optional<std::size_t> single_selected(const Tensor<T>& g) {
    std::optional<std::size_t> sel;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i] == T{0}) continue;
      if (g[i] != T{1} || sel) return std::nullopt;
      sel = i;
    }
    return sel;
  }

  void check_alternative(std::size_t i, const LayerSpec& alt) const {
    NetworkGraph<T> probe;
    probe.layers = {alt};
    probe.layers[0].inputs = {kNetworkInput};
    const auto& a = seed_.shapes[i];
    infer_shapes(probe, InputShape{a.cin, a.ix, a.iy});
    const auto& b = probe.shapes[0];
    if (b.ox != a.ox || b.oy != a.oy || b.cout != a.cout) {
      throw GraphError("layer " + std::to_string(i) + ": alternative " + std::string(to_string(alt.kind)) +
                       " changes the output shape");
    }
  }

  void check_sample(const ArchSample<T>& s) const {
    if (s.coefficients.size() != modules_.size()) throw std::invalid_argument("sample does not match supernet");
  }

  NetworkGraph<T> seed_;
  std::vector<SupernetModule<T>> modules_;
  std::vector<int> module_of_;
};

/// Sum over modules of mean/std of each soft coefficient vector.
template <class T>
Var<T> icv_loss(Tape<T>& tape, const ArchSample<T>& soft) {
  std::vector<Var<T>> terms;
  for (const auto& g : soft.coefficients) terms.push_back(inverse_cv(g));
  return add_all<T>(tape, terms);
}

}  // namespace hwnas
