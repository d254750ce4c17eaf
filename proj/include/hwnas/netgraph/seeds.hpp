#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hwnas/netgraph/graph.hpp"

namespace hwnas {

struct SeedDescription {
  std::string name;
  InputShape input;
  std::vector<LayerSpec> layers;
};

/// Fluent helper for sequential descriptions with optional residual adds.
/// Each call appends one layer fed by the previous one and returns its index
/// via last(); channel counts are tracked automatically.
class SeedBuilder {
 public:
  SeedBuilder(std::string name, InputShape input) : desc_{std::move(name), input, {}}, channels_(input.channels) {}

  SeedBuilder& conv(std::size_t cout, std::size_t k, std::size_t stride = 1, std::size_t padding = 0) {
    return push(conv_spec(channels_, cout, k, stride, padding, last()), cout);
  }
  SeedBuilder& separable(std::size_t cout, std::size_t k, std::size_t stride = 1, std::size_t padding = 0) {
    return push(separable_spec(channels_, cout, k, stride, padding, last()), cout);
  }
  SeedBuilder& relu() { return push({LayerKind::ReLU, channels_, channels_, 1, 1, 1, 0, {last()}}, channels_); }
  SeedBuilder& identity() { return push(identity_spec(channels_, last()), channels_); }
  SeedBuilder& avgpool() { return push({LayerKind::AvgPool, channels_, channels_, 1, 1, 1, 0, {last()}}, channels_); }
  SeedBuilder& dense(std::size_t outputs) {
    return push({LayerKind::Dense, channels_, outputs, 1, 1, 1, 0, {last()}}, outputs);
  }
  /// Adds the output of layer `skip` to the current output.
  SeedBuilder& residual(int skip) {
    return push({LayerKind::ResidualAdd, channels_, channels_, 1, 1, 1, 0, {skip, last()}}, channels_);
  }

  int last() const { return static_cast<int>(desc_.layers.size()) - 1; }
  SeedDescription build() const { return desc_; }

 private:
  SeedBuilder& push(LayerSpec s, std::size_t channels) {
    desc_.layers.push_back(std::move(s));
    channels_ = channels;
    return *this;
  }

  SeedDescription desc_;
  std::size_t channels_;
};

/// Validates, annotates, and initializes a description.
template <class T = double>
NetworkGraph<T> build_seed(const SeedDescription& d, std::uint64_t rng_seed) {
  NetworkGraph<T> g;
  g.layers = d.layers;
  g.meta = {d.name, rng_seed};
  infer_shapes(g, d.input);
  Rng rng(rng_seed, 0x5eed);
  init_params(g, rng);
  return g;
}

/// 6 convolutions (widths 8/16/32 times `width`) with two residual adds,
/// 3x16x16 input, 10 classes. The last block's two 32-channel convolutions
/// are the memory-heaviest layers.
inline SeedDescription mini_resnet(std::size_t width = 1, std::size_t classes = 10) {
  const std::size_t a = 8 * width, b = 16 * width, c = 32 * width;
  SeedBuilder s("mini-resnet", {3, 16, 16});
  s.conv(a, 3, 1, 1).relu();
  const int stem = s.last();
  s.conv(a, 3, 1, 1).residual(stem).relu();
  s.conv(b, 3, 2, 1).relu();
  s.conv(c, 3, 2, 1).relu();
  const int block_in = s.last();
  s.conv(c, 3, 1, 1).relu().conv(c, 3, 1, 1).residual(block_in).relu();
  s.avgpool().dense(classes);
  auto d = s.build();
  if (width != 1) d.name += "-x" + std::to_string(width);
  return d;
}

/// One standard convolution followed by three depthwise-separable blocks of
/// width 16 times `width`, 1x32x32 input, 8 classes.
inline SeedDescription mini_dscnn(std::size_t width = 1, std::size_t classes = 8) {
  const std::size_t w = 16 * width;
  SeedBuilder s("mini-dscnn", {1, 32, 32});
  s.conv(w, 3, 2, 1).relu();
  s.separable(w, 3, 1, 1).relu();
  s.separable(w, 3, 2, 1).relu();
  s.separable(w, 3, 1, 1).relu();
  s.avgpool().dense(classes);
  auto d = s.build();
  if (width != 1) d.name += "-x" + std::to_string(width);
  return d;
}

inline SeedDescription builtin_seed(const std::string& name, std::size_t width = 1) {
  if (name == "mini-resnet") return mini_resnet(width);
  if (name == "mini-dscnn") return mini_dscnn(width);
  throw GraphError("unknown built-in seed '" + name + "'");
}

}  // namespace hwnas
