#pragma once

#include <fstream>
#include <string>

#include "json.hpp"

#include "hwnas/netgraph/base64.hpp"
#include "hwnas/netgraph/graph.hpp"

namespace hwnas {

using json = nlohmann::ordered_json;

template <class T>
constexpr const char* dtype_name() {
  return sizeof(T) == 8 ? "f64" : "f32";
}

inline json to_json(const LayerSpec& s) {
  return json{{"kind", to_string(s.kind)}, {"cin", s.cin},       {"cout", s.cout},       {"kx", s.kx},
              {"ky", s.ky},                {"stride", s.stride}, {"padding", s.padding}, {"inputs", s.inputs}};
}

inline LayerSpec layer_from_json(const json& j) {
  LayerSpec s;
  s.kind = parse_layer_kind(j.at("kind").get<std::string>());
  s.cin = j.at("cin").get<std::size_t>();
  s.cout = j.at("cout").get<std::size_t>();
  s.kx = j.at("kx").get<std::size_t>();
  s.ky = j.at("ky").get<std::size_t>();
  s.stride = j.at("stride").get<std::size_t>();
  s.padding = j.at("padding").get<std::size_t>();
  s.inputs = j.at("inputs").get<std::vector<int>>();
  return s;
}

inline json to_json(const ShapeAnnotation& a) {
  return json{{"ix", a.ix}, {"iy", a.iy}, {"ox", a.ox}, {"oy", a.oy}, {"cin", a.cin}, {"cout", a.cout}};
}

inline ShapeAnnotation shape_from_json(const json& j) {
  return {j.at("ix").get<std::size_t>(), j.at("iy").get<std::size_t>(),  j.at("ox").get<std::size_t>(),
          j.at("oy").get<std::size_t>(), j.at("cin").get<std::size_t>(), j.at("cout").get<std::size_t>()};
}

template <class T>
json tensor_to_json(const Tensor<T>& t) {
  return json{{"shape", t.shape()}, {"data", base64::encode_values(t.data())}};
}

template <class T>
Tensor<T> tensor_from_json(const json& j) {
  return Tensor<T>(j.at("shape").get<Shape>(), base64::decode_values<T>(j.at("data").get<std::string>()));
}

/// Graph document: layers[], shapes[], params (base64 keyed by layer index), meta.
template <class T>
json graph_to_json(const NetworkGraph<T>& g) {
  json doc;
  doc["format"] = "hwnas-graph";
  doc["version"] = 1;
  doc["dtype"] = dtype_name<T>();
  doc["input"] = {{"channels", g.input.channels}, {"height", g.input.height}, {"width", g.input.width}};
  doc["layers"] = json::array();
  for (const auto& s : g.layers) doc["layers"].push_back(to_json(s));
  doc["shapes"] = json::array();
  for (const auto& a : g.shapes) doc["shapes"].push_back(to_json(a));
  doc["params"] = json::object();
  for (std::size_t i = 0; i < g.params.size(); ++i) {
    if (g.params[i].empty()) continue;
    json blobs = json::array();
    for (const auto& t : g.params[i]) blobs.push_back(tensor_to_json(t));
    doc["params"][std::to_string(i)] = std::move(blobs);
  }
  doc["meta"] = {{"seed_name", g.meta.seed_name}, {"rng_seed", g.meta.rng_seed}};
  return doc;
}

/// Parses and re-validates a graph document: stored shapes must match a fresh
/// shape inference, and parameter tensors must match the layer specs.
template <class T>
NetworkGraph<T> graph_from_json(const json& doc) {
  if (doc.value("format", "") != "hwnas-graph") throw GraphError("not a graph document");
  if (doc.at("dtype").get<std::string>() != dtype_name<T>()) {
    throw GraphError("graph document dtype " + doc.at("dtype").get<std::string>() + " does not match " +
                     dtype_name<T>());
  }
  NetworkGraph<T> g;
  const auto& in = doc.at("input");
  const InputShape input{in.at("channels").get<std::size_t>(), in.at("height").get<std::size_t>(),
                         in.at("width").get<std::size_t>()};
  for (const auto& l : doc.at("layers")) g.layers.push_back(layer_from_json(l));
  std::vector<ShapeAnnotation> stored;
  for (const auto& a : doc.at("shapes")) stored.push_back(shape_from_json(a));
  const auto declared = g.layers;
  infer_shapes(g, input);
  if (g.layers != declared) throw GraphError("layer channel fields disagree with their producers");
  if (stored != g.shapes) throw GraphError("stored shape annotations disagree with shape inference");
  g.params.assign(g.layers.size(), {});
  for (const auto& [key, blobs] : doc.at("params").items()) {
    const std::size_t idx = std::stoul(key);
    if (idx >= g.layers.size()) throw GraphError("parameters for missing layer " + key);
    for (const auto& b : blobs) g.params[idx].push_back(tensor_from_json<T>(b));
  }
  validate_params(g);
  const auto& meta = doc.at("meta");
  g.meta = {meta.at("seed_name").get<std::string>(), meta.at("rng_seed").get<std::uint64_t>()};
  return g;
}

inline void write_json(const std::string& path, const json& doc) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << doc.dump(2) << '\n';
}

inline json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return json::parse(is);
}

template <class T>
std::string serialize(const NetworkGraph<T>& g) {
  return graph_to_json(g).dump(2);
}

template <class T>
NetworkGraph<T> deserialize(const std::string& text) {
  return graph_from_json<T>(json::parse(text));
}

}  // namespace hwnas
