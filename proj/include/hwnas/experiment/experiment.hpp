#pragma once

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hwnas/dnas/mask.hpp"
#include "hwnas/dnas/path.hpp"
#include "hwnas/experiment/config.hpp"
#include "hwnas/netgraph/seeds.hpp"
#include "hwnas/trainer/trainer.hpp"

namespace hwnas {

inline constexpr const char* kOutputRootEnv = "HWNAS_OUTPUT_ROOT";

/// Relative output directories are placed under $HWNAS_OUTPUT_ROOT when set.
inline std::filesystem::path resolve_output_dir(const ExperimentConfig& c) {
  std::filesystem::path p(c.output_dir);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return std::filesystem::path(root) / p;
  return p;
}

/// Numbers of one finished run, mirrored in its report.
struct RunSummary {
  std::string name;
  std::filesystem::path dir;
  std::uint64_t seed = 0;
  bool satisfied = true;
  std::int64_t size = 0;
  std::int64_t ops = 0;
  std::optional<double> l2v;
  std::vector<ConstraintResult> constraints;
  std::vector<double> lambda_targets;
  std::vector<std::size_t> critical_layers;
  double val_loss = 0;
  double val_accuracy = 0;
  double pre_finetune_val_accuracy = 0;
  std::optional<double> test_loss;
  std::optional<double> test_accuracy;
  json report;
};

template <class T>
struct ExperimentData {
  Dataset<T> train, valid;
  std::optional<Dataset<T>> test;
};

inline std::size_t default_classes(const std::string& seed_name) { return seed_name == "mini-dscnn" ? 8 : 10; }

inline SeedDescription seed_description(const ExperimentConfig& c, std::size_t classes) {
  if (c.seed_network.name == "mini-resnet") return mini_resnet(c.seed_network.width, classes);
  if (c.seed_network.name == "mini-dscnn") return mini_dscnn(c.seed_network.width, classes);
  throw ConfigError("seed_network.name: unknown built-in seed '" + c.seed_network.name + "'");
}

template <class T>
ExperimentData<T> prepare_data(const ExperimentConfig& c, const InputShape& input_of_seed) {
  ExperimentData<T> d;
  Dataset<T> pool;
  if (c.dataset.kind == "synthetic") {
    SyntheticSpec spec;
    spec.shape = input_of_seed;
    spec.classes = c.dataset.classes ? c.dataset.classes : default_classes(c.seed_network.name);
    spec.blobs = c.dataset.blobs;
    spec.noise = c.dataset.noise;
    spec.jitter = c.dataset.jitter;
    spec.seed = c.dataset.seed;
    pool = make_synthetic<T>(spec, c.dataset.train_samples, kTrainPoolStream);
    if (c.dataset.test_samples > 0) d.test = make_synthetic<T>(spec, c.dataset.test_samples, kTestStream);
  } else {
    pool = load_dataset<T>(c.dataset.train_path);
    if (!c.dataset.test_path.empty()) d.test = load_dataset<T>(c.dataset.test_path);
  }
  if (pool.shape != input_of_seed) throw ConfigError("dataset: image shape does not match the seed network input");
  if (d.test && (d.test->shape != pool.shape || d.test->classes != pool.classes)) {
    throw ConfigError("dataset.test_path: shape or class count differs from the training set");
  }
  auto [train, valid] = split_validation(pool, c.search.val_fraction, c.seed);
  d.train = std::move(train);
  d.valid = std::move(valid);
  return d;
}

/// Class count the seed network is built with.
inline std::size_t resolve_classes(const ExperimentConfig& c) {
  if (c.dataset.kind == "file") return read_json(c.dataset.train_path).at("classes").get<std::size_t>();
  return c.dataset.classes ? c.dataset.classes : default_classes(c.seed_network.name);
}

template <class T>
std::unique_ptr<SearchableModel<T>> make_model(const ExperimentConfig& c, NetworkGraph<T> seed) {
  if (c.search.mode == DnasMode::Path) {
    Rng rng(c.seed, 0xa17);
    return std::make_unique<Supernet<T>>(std::move(seed), rng);
  }
  return std::make_unique<MaskedNetwork<T>>(std::move(seed));
}

namespace detail {

inline std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

inline std::string trace_csv(const std::vector<TraceRow>& trace, const std::vector<CostConstraint>& constraints) {
  std::string out = "epoch,phase,task_loss,val_loss,size,ops";
  for (const auto& c : constraints) out += ",lambda_" + c.name();
  out += ",accuracy\n";
  for (const auto& r : trace) {
    out += std::to_string(r.epoch) + "," + r.phase + "," + number(r.task_loss) + "," + number(r.val_loss) + "," +
           std::to_string(r.size) + "," + std::to_string(r.ops);
    for (std::size_t j = 0; j < constraints.size(); ++j) out += "," + (j < r.lambdas.size() ? number(r.lambdas[j]) : "");
    out += "," + number(r.accuracy) + "\n";
  }
  return out;
}

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace detail

/// Report document, CSV trace and exported graph for one run.
template <class T>
RunSummary emit_report(const ExperimentConfig& c, const SearchResult<T>& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string csv_name = "trace.csv", graph_name = "graph.json";
  detail::write_text(dir / csv_name, detail::trace_csv(r.trace, r.constraints));
  write_json((dir / graph_name).string(), graph_to_json(r.exported));

  RunSummary s;
  s.name = c.name;
  s.dir = dir;
  s.seed = c.seed;
  s.satisfied = r.satisfied();
  s.size = r.costs.size;
  s.ops = r.costs.ops;
  s.l2v = r.costs.l2v;
  s.constraints = r.satisfaction;
  s.lambda_targets = r.lambda_targets;
  s.critical_layers = r.critical_layers;
  s.val_loss = r.validation.loss;
  s.val_accuracy = r.validation.accuracy;
  s.pre_finetune_val_accuracy = r.pre_finetune_val_accuracy;
  if (r.test) {
    s.test_loss = r.test->loss;
    s.test_accuracy = r.test->accuracy;
  }

  json per_layer = json::array();
  for (const auto& l : r.costs.per_layer) {
    per_layer.push_back({{"layer", l.layer},
                         {"kind", to_string(r.exported.layers[l.layer].kind)},
                         {"size", l.size},
                         {"ops", l.ops},
                         {"memory", l.memory}});
  }
  json constraints = json::array();
  for (std::size_t j = 0; j < r.satisfaction.size(); ++j) {
    const auto& k = r.satisfaction[j];
    json e{{"metric", to_string(k.metric)}, {"target", k.target}, {"value", k.value}, {"satisfied", k.satisfied}};
    if (k.metric == Metric::LayerMemory) e["layer"] = k.layer;
    e["lambda_target"] = r.lambda_targets.at(j);
    constraints.push_back(std::move(e));
  }
  std::size_t wu = 0, sr = 0, ft = 0;
  for (const auto& row : r.trace) {
    wu += row.phase == "warmup";
    sr += row.phase == "search";
    ft += row.phase == "finetune";
  }
  const double wall = r.timing.warmup_s + r.timing.search_s + r.timing.finetune_s;
  s.report = json{
      {"config", config_to_json(c)},
      {"phase_epochs", {{"warmup", wu}, {"search", sr}, {"finetune", ft}, {"selected_search_epoch", r.selected_epoch}}},
      {"trace_csv_path", csv_name},
      {"exported_graph_path", graph_name},
      {"costs", {{"size", r.costs.size}, {"ops", r.costs.ops}, {"l2v", detail::optional_number(r.costs.l2v)},
                 {"per_layer", per_layer}}},
      {"constraints", constraints},
      {"metrics",
       {{"val_loss", r.validation.loss},
        {"val_accuracy", r.validation.accuracy},
        {"pre_finetune_val_accuracy", r.pre_finetune_val_accuracy},
        {"test_loss", detail::optional_number(s.test_loss)},
        {"test_accuracy", detail::optional_number(s.test_accuracy)}}},
      {"search",
       {{"loss_hat", r.loss_hat}, {"critical_layers", r.critical_layers}, {"warnings", r.warnings}}},
      {"seed", c.seed},
      {"wall_time_s", c.record_wall_time ? wall : 0.0}};
  write_json((dir / "report.json").string(), s.report);
  return s;
}

/// Warmup (or checkpoint reuse), search, fine-tune and report for one config.
/// `warmup_out` receives the warmup checkpoint when non-null.
template <class T>
RunSummary run_single_as(const ExperimentConfig& c, const json* warmup_in = nullptr, json* warmup_out = nullptr) {
  const auto desc = seed_description(c, resolve_classes(c));
  auto data = prepare_data<T>(c, desc.input);
  auto model = make_model<T>(c, build_seed<T>(desc, c.seed));
  Trainer<T> trainer(*model, data.train, data.valid, c.search);
  if (warmup_in) {
    trainer.load_checkpoint(*warmup_in);
  } else {
    trainer.warmup();
  }
  const auto dir = resolve_output_dir(c) / c.name;
  if (warmup_out || c.write_checkpoint) {
    auto ckpt = trainer.checkpoint();
    if (c.write_checkpoint) {
      std::filesystem::create_directories(dir);
      write_json((dir / "warmup.json").string(), ckpt);
    }
    if (warmup_out) *warmup_out = std::move(ckpt);
  }
  trainer.search();
  auto result = trainer.finish(data.test ? &*data.test : nullptr);
  return emit_report(c, result, dir);
}

inline RunSummary run_single(const ExperimentConfig& c, const json* warmup_in = nullptr, json* warmup_out = nullptr) {
  if (c.precision == "float64") return run_single_as<double>(c, warmup_in, warmup_out);
  return run_single_as<float>(c, warmup_in, warmup_out);
}

/// Applies fn(i) for i in [0, n) on up to `jobs` threads; results keep index order.
template <class R, class Fn>
std::vector<R> parallel_map(std::size_t n, std::size_t jobs, Fn&& fn) {
  std::vector<R> out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(jobs, 1), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline std::vector<std::uint64_t> sweep_seeds(const ExperimentConfig& c) {
  return c.sweep.seeds.empty() ? std::vector<std::uint64_t>{c.seed} : c.sweep.seeds;
}

/// Single-run config derived from a sweep config.
inline ExperimentConfig derive(const ExperimentConfig& base, std::uint64_t seed, const std::string& suffix) {
  ExperimentConfig c = base;
  c.seed = seed;
  c.search.seed = seed;
  c.name = base.name + "-s" + std::to_string(seed) + suffix;
  c.sweep = {};
  c.jobs = 1;
  return c;
}

/// Runs variants that share one warmup per seed. `variants` maps a base
/// config to (suffix, modified config) pairs.
template <class Variants>
std::vector<std::vector<RunSummary>> run_shared_warmup(const ExperimentConfig& base, Variants&& variants) {
  const auto seeds = sweep_seeds(base);
  return parallel_map<std::vector<RunSummary>>(seeds.size(), base.jobs, [&](std::size_t i) {
    std::vector<RunSummary> runs;
    json ckpt;
    bool have = false;
    for (auto& [suffix, cfg] : variants(derive(base, seeds[i], ""))) {
      cfg.name = base.name + "-s" + std::to_string(seeds[i]) + suffix;
      runs.push_back(run_single(cfg, have ? &ckpt : nullptr, have ? nullptr : &ckpt));
      have = true;
    }
    return runs;
  });
}

inline std::string fraction_tag(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", f);
  return buf;
}

/// `search`: one run, or seeds x target fractions when a sweep is configured.
/// Target fractions replace the first global constraint's target.
inline std::vector<RunSummary> run_search(const ExperimentConfig& c) {
  if (c.sweep.seeds.empty() && c.sweep.target_fractions.empty()) return {run_single(c)};
  if (!c.sweep.target_fractions.empty() && c.search.constraints.empty()) {
    throw ConfigError("sweep.target_fractions: needs at least one entry in search.constraints");
  }
  auto grid = run_shared_warmup(c, [&](const ExperimentConfig& seeded) {
    std::vector<std::pair<std::string, ExperimentConfig>> v;
    if (c.sweep.target_fractions.empty()) v.emplace_back("", seeded);
    for (double f : c.sweep.target_fractions) {
      auto k = seeded;
      k.search.constraints[0].fraction = f;
      k.search.constraints[0].absolute.reset();
      v.emplace_back("-t" + fraction_tag(f), std::move(k));
    }
    return v;
  });
  std::vector<RunSummary> out;
  for (auto& runs : grid)
    for (auto& r : runs) out.push_back(std::move(r));
  return out;
}

struct SweepRow {
  std::string variant;
  RunSummary run;
};

inline std::string comparison_csv(const std::vector<SweepRow>& rows) {
  std::string out =
      "variant,seed,size,ops,satisfied,val_loss,val_accuracy,pre_finetune_val_accuracy,test_accuracy\n";
  for (const auto& r : rows) {
    out += r.variant + "," + std::to_string(r.run.seed) + "," + std::to_string(r.run.size) + "," +
           std::to_string(r.run.ops) + "," + (r.run.satisfied ? "1" : "0") + "," + detail::number(r.run.val_loss) +
           "," + detail::number(r.run.val_accuracy) + "," + detail::number(r.run.pre_finetune_val_accuracy) + "," +
           (r.run.test_accuracy ? detail::number(*r.run.test_accuracy) : "") + "\n";
  }
  return out;
}

/// PlainObjective runs with constant lambda over sweep.lambdas x seeds.
/// Writes <name>-lambda-sweep.csv with one row per run.
inline std::vector<SweepRow> run_lambda_sweep(const ExperimentConfig& c) {
  if (c.sweep.lambdas.empty()) throw ConfigError("sweep.lambdas: must list at least one value");
  if (c.search.constraints.empty()) throw ConfigError("search.constraints: the sweep penalizes the first metric");
  auto grid = run_shared_warmup(c, [&](const ExperimentConfig& seeded) {
    std::vector<std::pair<std::string, ExperimentConfig>> v;
    for (std::size_t i = 0; i < c.sweep.lambdas.size(); ++i) {
      auto k = seeded;
      k.search.form = PenaltyForm::PlainObjective;
      k.search.lambda_mode = LambdaMode::Constant;
      k.search.lambda_value = c.sweep.lambdas[i];
      k.search.constraints.resize(1);
      k.search.hw.reset();
      v.emplace_back("-lambda" + std::to_string(i), std::move(k));
    }
    return v;
  });
  std::vector<SweepRow> rows;
  std::string csv = "lambda,seed,size,ops,val_accuracy,test_accuracy\n";
  for (auto& runs : grid)
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const auto& r = runs[i];
      csv += detail::number(c.sweep.lambdas[i]) + "," + std::to_string(r.seed) + "," + std::to_string(r.size) + "," +
             std::to_string(r.ops) + "," + detail::number(r.val_accuracy) + "," +
             (r.test_accuracy ? detail::number(*r.test_accuracy) : "") + "\n";
      rows.push_back({"lambda=" + detail::number(c.sweep.lambdas[i]), std::move(runs[i])});
    }
  const auto dir = resolve_output_dir(c);
  std::filesystem::create_directories(dir);
  detail::write_text(dir / (c.name + "-lambda-sweep.csv"), csv);
  return rows;
}

enum class AblationKind { MaxAbs, LambdaSchedule, Icv };

inline AblationKind parse_ablation(std::string_view s) {
  if (s == "max-abs") return AblationKind::MaxAbs;
  if (s == "lambda-sched") return AblationKind::LambdaSchedule;
  if (s == "icv") return AblationKind::Icv;
  throw std::invalid_argument("unknown ablation '" + std::string(s) + "' (max-abs, lambda-sched, icv)");
}

inline std::string_view to_string(AblationKind k) {
  switch (k) {
    case AblationKind::MaxAbs:
      return "max-abs";
    case AblationKind::LambdaSchedule:
      return "lambda-sched";
    case AblationKind::Icv:
      return "icv";
  }
  return "?";
}

/// Variants of one ablation, differing only in the ablated setting.
inline std::vector<std::pair<std::string, ExperimentConfig>> ablation_variants(AblationKind kind,
                                                                               const ExperimentConfig& c) {
  std::vector<std::pair<std::string, ExperimentConfig>> v;
  auto with = [&](std::string tag, auto&& edit) {
    auto k = c;
    edit(k.search);
    v.emplace_back(std::move(tag), std::move(k));
  };
  switch (kind) {
    case AblationKind::MaxAbs:
      with("max", [](SearchConfig& s) { s.form = PenaltyForm::MaxHinge; });
      with("abs", [](SearchConfig& s) { s.form = PenaltyForm::AbsValue; });
      break;
    case AblationKind::LambdaSchedule:
      with("scheduled", [](SearchConfig& s) { s.lambda_mode = LambdaMode::Scheduled; });
      with("constant-low", [](SearchConfig& s) {
        s.lambda_mode = LambdaMode::Constant;
        s.lambda_value.reset();
        s.lambda_factor /= 100;
      });
      with("constant-high", [](SearchConfig& s) {
        s.lambda_mode = LambdaMode::Constant;
        s.lambda_value.reset();
        s.lambda_factor *= 100;
      });
      break;
    case AblationKind::Icv:
      if (c.search.mode != DnasMode::Path) throw ConfigError("search.mode: the icv ablation needs mode 'path'");
      with("discretized", [](SearchConfig& s) { s.soft_sampling = false; });
      with("icv", [](SearchConfig& s) { s.soft_sampling = true; });
      break;
  }
  return v;
}

/// Paired runs per seed sharing one warmup. Writes <name>-ablate-<kind>.csv.
inline std::vector<SweepRow> run_ablation(AblationKind kind, const ExperimentConfig& c) {
  const auto names = ablation_variants(kind, c);
  auto grid = run_shared_warmup(c, [&](const ExperimentConfig& seeded) {
    auto v = ablation_variants(kind, seeded);
    for (auto& [tag, cfg] : v) tag = "-" + tag;
    return v;
  });
  std::vector<SweepRow> rows;
  for (auto& runs : grid)
    for (std::size_t i = 0; i < runs.size(); ++i) rows.push_back({names[i].first, std::move(runs[i])});
  const auto dir = resolve_output_dir(c);
  std::filesystem::create_directories(dir);
  detail::write_text(dir / (c.name + "-ablate-" + std::string(to_string(kind)) + ".csv"), comparison_csv(rows));
  return rows;
}

/// Cost report of a stored graph against an optional memory level.
inline json audit(const json& graph_doc, const std::optional<HwDescriptor>& hw, double critical_margin = 0.3) {
  const auto dtype = graph_doc.at("dtype").get<std::string>();
  std::vector<LayerCost> costs;
  std::vector<LayerSpec> layers;
  if (dtype == dtype_name<double>()) {
    auto g = graph_from_json<double>(graph_doc);
    costs = graph_costs(g);
    layers = g.layers;
  } else {
    auto g = graph_from_json<float>(graph_doc);
    costs = graph_costs(g);
    layers = g.layers;
  }
  const auto report = make_cost_report(costs, hw);
  json per_layer = json::array();
  for (const auto& l : report.per_layer) {
    json e{{"layer", l.layer}, {"kind", to_string(layers[l.layer].kind)}, {"size", l.size}, {"ops", l.ops},
           {"memory", l.memory}};
    if (hw) e["fits"] = static_cast<double>(l.memory) <= hw->budget();
    per_layer.push_back(std::move(e));
  }
  json out{{"size", report.size}, {"ops", report.ops}, {"per_layer", per_layer}};
  if (hw) {
    out["budget"] = hw->budget();
    out["l2v"] = *report.l2v;
    out["critical_layers"] = detect_critical_layers(costs, *hw, critical_margin);
  }
  return out;
}

/// Reads a memory-level descriptor document: level_capacity, reserved_offset,
/// element_size and an optional critical_margin.
inline std::pair<HwDescriptor, double> load_hw_descriptor(const json& doc) {
  double margin = 0.3;
  json rest = doc;
  if (doc.is_object() && doc.contains("critical_margin")) {
    detail::Reader m(doc, "hw");
    m.read("critical_margin", margin);
    detail::require(margin >= 0, m, "critical_margin", "must be non-negative");
    rest.erase("critical_margin");
  }
  return {detail::parse_hw(detail::Reader(rest, "hw")), margin};
}

}  // namespace hwnas
