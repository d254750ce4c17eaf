#pragma once

#include <algorithm>
#include <string_view>
#include <vector>

#include "hwnas/autodiff/ops.hpp"
#include "hwnas/autodiff/rng.hpp"
#include "hwnas/costmodel/costmodel.hpp"
#include "hwnas/netgraph/graph.hpp"

namespace hwnas {

enum class DnasMode { Path, Mask };

inline std::string_view to_string(DnasMode m) { return m == DnasMode::Path ? "path" : "mask"; }

inline DnasMode parse_dnas_mode(std::string_view s) {
  if (s == "path") return DnasMode::Path;
  if (s == "mask") return DnasMode::Mask;
  throw std::invalid_argument("unknown dnas mode '" + std::string(s) + "'");
}

/// How architecture coefficients are produced for one step.
enum class Sampling {
  Frozen,  ///< theta held constant; path mode draws a Gumbel sample (uniform at init)
  Search,  ///< theta trainable; discretized sample with straight-through gradients
  Soft,    ///< theta trainable; continuous softmax(theta / tau), path mode only
  Argmax,  ///< theta constant; deterministic discretization used for evaluation/export
};

/// Coefficients for one step: one Var per module (path) or per mask group (mask).
template <class T>
struct ArchSample {
  std::vector<Var<T>> coefficients;
};

/// Common surface of the path and mask search spaces used by the trainer.
template <class T>
class SearchableModel {
 public:
  virtual ~SearchableModel() = default;

  virtual DnasMode mode() const = 0;

  virtual ArchSample<T> sample(Tape<T>& tape, Sampling how, Rng& rng, T temperature) = 0;

  /// Logits for input x. With train_weights the weights are registered on
  /// the tape, otherwise they enter as constants.
  virtual Var<T> forward(Var<T> x, const ArchSample<T>& sample, bool train_weights) = 0;

  /// Differentiable per-layer size / ops / memory terms.
  virtual std::vector<LayerCostVars<T>> layer_costs(Tape<T>& tape, const ArchSample<T>& sample) const = 0;

  virtual std::vector<Tensor<T>*> weights() = 0;
  virtual std::vector<Tensor<T>*> arch_params() = 0;

  /// Concrete network at the current argmax / binarized state.
  virtual NetworkGraph<T> export_graph() const = 0;

  /// The network the search started from.
  virtual const NetworkGraph<T>& seed() const = 0;

  /// Export-time warnings (e.g. forced keep-one channels).
  virtual std::vector<std::string> export_warnings() const { return {}; }

  std::vector<LayerCost> discrete_costs() const { return graph_costs(export_graph()); }
};

/// Copy of every weight and theta tensor, for best-state restore.
template <class T>
struct ModelSnapshot {
  std::vector<Tensor<T>> weights;
  std::vector<Tensor<T>> theta;
};

template <class T>
ModelSnapshot<T> take_snapshot(SearchableModel<T>& m) {
  ModelSnapshot<T> s;
  for (auto* t : m.weights()) s.weights.push_back(*t);
  for (auto* t : m.arch_params()) s.theta.push_back(*t);
  return s;
}

/// Copies parameter values back; gradient buffers are left alone.
template <class T>
void restore_snapshot(SearchableModel<T>& m, const ModelSnapshot<T>& s) {
  auto w = m.weights();
  auto a = m.arch_params();
  if (w.size() != s.weights.size() || a.size() != s.theta.size()) {
    throw std::invalid_argument("snapshot does not match model");
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i]->shape() != s.weights[i].shape()) throw std::invalid_argument("snapshot weight shape mismatch");
    std::ranges::copy(s.weights[i].values(), w[i]->values().begin());
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]->shape() != s.theta[i].shape()) throw std::invalid_argument("snapshot theta shape mismatch");
    std::ranges::copy(s.theta[i].values(), a[i]->values().begin());
  }
}

}  // namespace hwnas
