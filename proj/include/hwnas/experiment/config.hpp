#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwnas/netgraph/serialize.hpp"
#include "hwnas/trainer/trainer.hpp"

namespace hwnas {

/// Configuration error carrying the offending key path, e.g.
/// "search.constraints[0].fraction: must be in (0, 1]".
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SeedNetworkConfig {
  std::string name = "mini-resnet";
  std::size_t width = 1;
};

struct DatasetConfig {
  std::string kind = "synthetic";  ///< "synthetic" or "file"
  // synthetic
  std::size_t train_samples = 1000;  ///< train + validation pool
  std::size_t test_samples = 500;
  std::size_t classes = 0;  ///< 0: the seed network's class count
  std::size_t blobs = 3;
  double noise = 0.6;
  double jitter = 1.5;
  std::uint64_t seed = 1234;
  // file
  std::string train_path;
  std::string test_path;
};

struct SweepConfig {
  std::vector<std::uint64_t> seeds;      ///< empty: the run seed only
  std::vector<double> lambdas;           ///< sweep-lambda
  std::vector<double> target_fractions;  ///< search grid over the first constraint
};

struct ExperimentConfig {
  std::string name = "run";
  std::uint64_t seed = 0;
  std::string precision = "float32";
  SeedNetworkConfig seed_network;
  DatasetConfig dataset;
  SearchConfig search;
  SweepConfig sweep;
  std::string output_dir = "out";
  bool record_wall_time = false;
  bool write_checkpoint = true;
  std::size_t jobs = 1;
};

namespace detail {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError((path_.empty() ? "config" : path_) + ": " + msg); }
  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ConfigError(at(key) + ": " + msg);
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <class V>
  void read(const std::string& key, V& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<V>();
    } catch (const json::exception&) {
      fail(key, "wrong type");
    }
  }

  template <class V>
  void read(const std::string& key, std::optional<V>& out) {
    if (!has(key) || j_.at(key).is_null()) return;
    V v{};
    read(key, v);
    out = v;
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  Reader child(const std::string& key) { return Reader(raw(key), at(key)); }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(at(k) + ": unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Enum, class Parse>
void read_enum(Reader& r, const std::string& key, Enum& out, Parse parse) {
  std::string s;
  if (!r.has(key)) return;
  r.read(key, s);
  try {
    out = parse(s);
  } catch (const std::invalid_argument& e) {
    r.fail(key, e.what());
  }
}

inline void require(bool ok, Reader& r, const std::string& key, const std::string& msg) {
  if (!ok) r.fail(key, msg);
}

inline HwDescriptor parse_hw(Reader r) {
  HwDescriptor hw;
  r.read("level_capacity", hw.level_capacity);
  r.read("reserved_offset", hw.reserved_offset);
  r.read("element_size", hw.element_size);
  r.finish();
  try {
    hw.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  return hw;
}

inline void parse_search(Reader r, SearchConfig& s) {
  r.read("epochs_wu", s.epochs_wu);
  r.read("epochs_sr", s.epochs_sr);
  require(s.epochs_sr >= 1, r, "epochs_sr", "must be >= 1");
  r.read("epochs_ft", s.epochs_ft);
  r.read("patience", s.patience);
  s.max_search_epochs = std::max(s.max_search_epochs, s.epochs_sr);
  r.read("max_search_epochs", s.max_search_epochs);
  require(s.max_search_epochs >= s.epochs_sr, r, "max_search_epochs", "must be >= epochs_sr");
  r.read("batch_size", s.batch_size);
  require(s.batch_size >= 1, r, "batch_size", "must be >= 1");
  r.read("lr_weights", s.lr_weights);
  require(s.lr_weights >= 0, r, "lr_weights", "must be non-negative");
  r.read("lr_arch", s.lr_arch);
  require(s.lr_arch >= 0, r, "lr_arch", "must be non-negative");
  r.read("val_fraction", s.val_fraction);
  require(s.val_fraction > 0 && s.val_fraction < 1, r, "val_fraction", "must be in (0, 1)");
  read_enum(r, "mode", s.mode, parse_dnas_mode);

  std::string sampling = s.soft_sampling ? "soft" : "discretized";
  r.read("sampling", sampling);
  require(sampling == "soft" || sampling == "discretized", r, "sampling", "must be 'discretized' or 'soft'");
  s.soft_sampling = sampling == "soft";
  require(!s.soft_sampling || s.mode == DnasMode::Path, r, "sampling", "soft sampling requires mode 'path'");
  r.read("temperature", s.temperature);
  require(s.temperature > 0, r, "temperature", "must be positive");
  r.read("icv_strength", s.icv_strength);
  require(s.icv_strength >= 0, r, "icv_strength", "must be non-negative");

  if (r.has("constraints")) {
    const auto& arr = r.raw("constraints");
    if (!arr.is_array()) r.fail("constraints", "expected an array");
    s.constraints.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Reader c(arr[i], r.at("constraints") + "[" + std::to_string(i) + "]");
      ConstraintSpec spec;
      read_enum(c, "metric", spec.metric, parse_metric);
      require(spec.metric != Metric::LayerMemory, c, "metric", "layer_memory constraints come from 'hw'");
      c.read("fraction", spec.fraction);
      c.read("target", spec.absolute);
      c.finish();
      if (spec.fraction.has_value() == spec.absolute.has_value()) c.fail("needs exactly one of 'fraction' or 'target'");
      if (spec.fraction) require(*spec.fraction > 0 && *spec.fraction <= 1, c, "fraction", "must be in (0, 1]");
      if (spec.absolute) require(*spec.absolute > 0, c, "target", "must be positive");
      s.constraints.push_back(spec);
    }
  }
  if (r.has("hw") && !r.raw("hw").is_null()) s.hw = parse_hw(r.child("hw"));
  r.read("critical_margin", s.critical_margin);
  require(s.critical_margin >= 0, r, "critical_margin", "must be non-negative");
  read_enum(r, "form", s.form, parse_penalty_form);
  if (r.has("lambda")) {
    Reader l = r.child("lambda");
    read_enum(l, "mode", s.lambda_mode, parse_lambda_mode);
    l.read("value", s.lambda_value);
    if (s.lambda_value) require(*s.lambda_value >= 0, l, "value", "must be non-negative");
    l.read("factor", s.lambda_factor);
    require(s.lambda_factor >= 0, l, "factor", "must be non-negative");
    l.finish();
  }
  r.read("restore_best", s.restore_best);
  r.finish();
}

}  // namespace detail

/// Strict parse: unknown keys and out-of-range values are rejected with the
/// key path in the message. Missing keys keep their defaults.
inline ExperimentConfig parse_config(const json& doc) {
  using detail::Reader;
  ExperimentConfig c;
  Reader r(doc, "");
  r.read("name", c.name);
  detail::require(!c.name.empty() && c.name.find('/') == std::string::npos, r, "name",
                  "must be a non-empty file name component");
  r.read("seed", c.seed);
  r.read("precision", c.precision);
  detail::require(c.precision == "float32" || c.precision == "float64", r, "precision",
                  "must be 'float32' or 'float64'");
  if (r.has("seed_network")) {
    Reader s = r.child("seed_network");
    s.read("name", c.seed_network.name);
    detail::require(c.seed_network.name == "mini-resnet" || c.seed_network.name == "mini-dscnn", s, "name",
                    "unknown built-in seed '" + c.seed_network.name + "'");
    s.read("width", c.seed_network.width);
    detail::require(c.seed_network.width >= 1, s, "width", "must be >= 1");
    s.finish();
  }
  if (r.has("dataset")) {
    Reader d = r.child("dataset");
    auto& ds = c.dataset;
    d.read("kind", ds.kind);
    detail::require(ds.kind == "synthetic" || ds.kind == "file", d, "kind", "must be 'synthetic' or 'file'");
    d.read("train_samples", ds.train_samples);
    d.read("test_samples", ds.test_samples);
    d.read("classes", ds.classes);
    d.read("blobs", ds.blobs);
    d.read("noise", ds.noise);
    d.read("jitter", ds.jitter);
    d.read("seed", ds.seed);
    d.read("train_path", ds.train_path);
    d.read("test_path", ds.test_path);
    d.finish();
    if (ds.kind == "synthetic") {
      detail::require(ds.train_samples >= 2, d, "train_samples", "must be >= 2");
      detail::require(ds.blobs >= 1, d, "blobs", "must be >= 1");
      detail::require(ds.noise >= 0, d, "noise", "must be non-negative");
      detail::require(ds.jitter >= 0, d, "jitter", "must be non-negative");
    } else {
      detail::require(!ds.train_path.empty(), d, "train_path", "required for kind 'file'");
    }
  }
  if (r.has("search")) detail::parse_search(r.child("search"), c.search);
  if (r.has("sweep")) {
    Reader s = r.child("sweep");
    s.read("seeds", c.sweep.seeds);
    s.read("lambdas", c.sweep.lambdas);
    for (std::size_t i = 0; i < c.sweep.lambdas.size(); ++i)
      detail::require(c.sweep.lambdas[i] >= 0, s, "lambdas[" + std::to_string(i) + "]", "must be non-negative");
    s.read("target_fractions", c.sweep.target_fractions);
    for (std::size_t i = 0; i < c.sweep.target_fractions.size(); ++i) {
      const double f = c.sweep.target_fractions[i];
      detail::require(f > 0 && f <= 1, s, "target_fractions[" + std::to_string(i) + "]", "must be in (0, 1]");
    }
    s.finish();
  }
  r.read("output_dir", c.output_dir);
  detail::require(!c.output_dir.empty(), r, "output_dir", "must be non-empty");
  r.read("record_wall_time", c.record_wall_time);
  r.read("write_checkpoint", c.write_checkpoint);
  r.read("jobs", c.jobs);
  detail::require(c.jobs >= 1, r, "jobs", "must be >= 1");
  r.finish();
  c.search.seed = c.seed;
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  json doc;
  try {
    doc = read_json(path);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(doc);
}

/// Normalized document with every default filled in.
inline json config_to_json(const ExperimentConfig& c) {
  const auto& s = c.search;
  json constraints = json::array();
  for (const auto& k : s.constraints) {
    json e{{"metric", to_string(k.metric)}};
    if (k.fraction) e["fraction"] = *k.fraction;
    if (k.absolute) e["target"] = *k.absolute;
    constraints.push_back(e);
  }
  json hw = nullptr;
  if (s.hw) {
    hw = json{{"level_capacity", s.hw->level_capacity},
              {"reserved_offset", s.hw->reserved_offset},
              {"element_size", s.hw->element_size}};
  }
  json lambda{{"mode", to_string(s.lambda_mode)}, {"factor", s.lambda_factor}};
  lambda["value"] = s.lambda_value ? json(*s.lambda_value) : json(nullptr);
  const auto& d = c.dataset;
  return json{
      {"name", c.name},
      {"seed", c.seed},
      {"precision", c.precision},
      {"seed_network", {{"name", c.seed_network.name}, {"width", c.seed_network.width}}},
      {"dataset",
       {{"kind", d.kind},
        {"train_samples", d.train_samples},
        {"test_samples", d.test_samples},
        {"classes", d.classes},
        {"blobs", d.blobs},
        {"noise", d.noise},
        {"jitter", d.jitter},
        {"seed", d.seed},
        {"train_path", d.train_path},
        {"test_path", d.test_path}}},
      {"search",
       {{"mode", to_string(s.mode)},
        {"epochs_wu", s.epochs_wu},
        {"epochs_sr", s.epochs_sr},
        {"epochs_ft", s.epochs_ft},
        {"patience", s.patience},
        {"max_search_epochs", s.max_search_epochs},
        {"batch_size", s.batch_size},
        {"lr_weights", s.lr_weights},
        {"lr_arch", s.lr_arch},
        {"val_fraction", s.val_fraction},
        {"sampling", s.soft_sampling ? "soft" : "discretized"},
        {"temperature", s.temperature},
        {"icv_strength", s.icv_strength},
        {"constraints", constraints},
        {"hw", hw},
        {"critical_margin", s.critical_margin},
        {"form", to_string(s.form)},
        {"lambda", lambda},
        {"restore_best", s.restore_best}}},
      {"sweep",
       {{"seeds", c.sweep.seeds}, {"lambdas", c.sweep.lambdas}, {"target_fractions", c.sweep.target_fractions}}},
      {"output_dir", c.output_dir},
      {"record_wall_time", c.record_wall_time},
      {"write_checkpoint", c.write_checkpoint},
      {"jobs", c.jobs}};
}

}  // namespace hwnas
