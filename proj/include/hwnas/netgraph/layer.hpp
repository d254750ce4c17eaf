#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hwnas {

/// Raised when a graph description or document violates a structural rule.
class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class LayerKind { Conv2d, DepthwiseSeparable, Dense, ReLU, AvgPool, ResidualAdd, Identity };

inline constexpr std::array<std::pair<LayerKind, std::string_view>, 7> kLayerKindNames{{
    {LayerKind::Conv2d, "Conv2d"},
    {LayerKind::DepthwiseSeparable, "DepthwiseSeparable"},
    {LayerKind::Dense, "Dense"},
    {LayerKind::ReLU, "ReLU"},
    {LayerKind::AvgPool, "AvgPool"},
    {LayerKind::ResidualAdd, "ResidualAdd"},
    {LayerKind::Identity, "Identity"},
}};

inline std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kLayerKindNames)
    if (k == kind) return name;
  return "?";
}

inline LayerKind parse_layer_kind(std::string_view name) {
  for (const auto& [k, n] : kLayerKindNames)
    if (n == name) return k;
  throw GraphError("unknown layer kind '" + std::string(name) + "'");
}

/// Network input is referenced as producer -1.
inline constexpr int kNetworkInput = -1;

struct LayerSpec {
  LayerKind kind = LayerKind::Identity;
  std::size_t cin = 0;
  std::size_t cout = 0;
  std::size_t kx = 1;
  std::size_t ky = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::vector<int> inputs;

  bool operator==(const LayerSpec&) const = default;
};

/// Conv2d and DepthwiseSeparable layers are the ones the search reshapes and
/// the cost models sum over.
inline bool is_target_layer(const LayerSpec& s) {
  return s.kind == LayerKind::Conv2d || s.kind == LayerKind::DepthwiseSeparable;
}

struct ShapeAnnotation {
  std::size_t ix = 0;
  std::size_t iy = 0;
  std::size_t ox = 0;
  std::size_t oy = 0;
  std::size_t cin = 0;
  std::size_t cout = 0;

  bool operator==(const ShapeAnnotation&) const = default;
};

struct InputShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  bool operator==(const InputShape&) const = default;
};

inline LayerSpec conv_spec(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
                           std::size_t padding, int input) {
  return {LayerKind::Conv2d, cin, cout, k, k, stride, padding, {input}};
}

inline LayerSpec separable_spec(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
                                std::size_t padding, int input) {
  return {LayerKind::DepthwiseSeparable, cin, cout, k, k, stride, padding, {input}};
}

inline LayerSpec identity_spec(std::size_t channels, int input) {
  return {LayerKind::Identity, channels, channels, 1, 1, 1, 0, {input}};
}

}  // namespace hwnas
