#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hwnas/dnas/path.hpp"
#include "hwnas/dnas/searchable.hpp"
#include "hwnas/netgraph/forward.hpp"
#include "hwnas/netgraph/serialize.hpp"
#include "hwnas/objective/objective.hpp"
#include "hwnas/trainer/adam.hpp"
#include "hwnas/trainer/dataset.hpp"

namespace hwnas {

enum class LambdaMode { Scheduled, Constant };

inline std::string_view to_string(LambdaMode m) { return m == LambdaMode::Scheduled ? "scheduled" : "constant"; }

inline LambdaMode parse_lambda_mode(std::string_view s) {
  if (s == "scheduled") return LambdaMode::Scheduled;
  if (s == "constant") return LambdaMode::Constant;
  throw std::invalid_argument("unknown lambda mode '" + std::string(s) + "'");
}

/// Global size or ops constraint. The target is either absolute or a
/// fraction of the seed network's cost.
struct ConstraintSpec {
  Metric metric = Metric::Size;
  std::optional<double> fraction;
  std::optional<double> absolute;

  bool operator==(const ConstraintSpec&) const = default;
};

struct SearchConfig {
  std::size_t epochs_wu = 20;
  std::size_t epochs_sr = 30;
  std::size_t epochs_ft = 20;
  std::size_t patience = 10;
  std::size_t max_search_epochs = 100;
  std::size_t batch_size = 32;
  double lr_weights = 1e-3;
  double lr_arch = 5e-3;
  std::uint64_t seed = 0;
  double val_fraction = 0.10;

  DnasMode mode = DnasMode::Mask;
  bool soft_sampling = false;  ///< path mode: continuous softmax + ICV instead of discretized Gumbel
  double temperature = 1.0;
  double icv_strength = 0.1;

  std::vector<ConstraintSpec> constraints;
  std::optional<HwDescriptor> hw;  ///< enables layer-wise memory constraints on critical layers
  double critical_margin = 0.3;

  PenaltyForm form = PenaltyForm::MaxHinge;
  LambdaMode lambda_mode = LambdaMode::Scheduled;
  std::optional<double> lambda_value;  ///< constant mode: absolute lambda for every constraint
  double lambda_factor = 1.0;          ///< multiplies computed lambda targets

  bool restore_best = true;  ///< end search at the best feasible validation epoch

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
    if (epochs_sr < 1) fail("epochs_sr must be >= 1");
    if (max_search_epochs < epochs_sr) fail("max_search_epochs must be >= epochs_sr");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!(val_fraction > 0 && val_fraction < 1)) fail("val_fraction must be in (0,1)");
    if (!(lr_weights >= 0) || !(lr_arch >= 0)) fail("learning rates must be non-negative");
    if (!(temperature > 0)) fail("temperature must be positive");
    if (!(icv_strength >= 0)) fail("icv_strength must be non-negative");
    if (!(critical_margin >= 0)) fail("critical_margin must be non-negative");
    if (!(lambda_factor >= 0)) fail("lambda_factor must be non-negative");
    if (lambda_value && !(*lambda_value >= 0)) fail("lambda_value must be non-negative");
    if (soft_sampling && mode != DnasMode::Path) fail("soft sampling requires path mode");
    for (const auto& c : constraints) {
      if (c.metric == Metric::LayerMemory) fail("layer_memory constraints come from the hw descriptor");
      if (c.fraction.has_value() == c.absolute.has_value()) fail("constraint needs exactly one of fraction/target");
      if (c.fraction && !(*c.fraction > 0 && *c.fraction <= 1)) fail("constraint fraction must be in (0,1]");
      if (c.absolute && !(*c.absolute > 0)) fail("constraint target must be positive");
    }
    if (hw) hw->validate();
  }
};

struct TraceRow {
  std::size_t epoch = 0;  ///< 1-based across all phases
  std::string phase;
  double task_loss = 0;
  double val_loss = 0;
  double accuracy = 0;  ///< validation accuracy
  std::int64_t size = 0;
  std::int64_t ops = 0;
  std::vector<double> lambdas;
  std::vector<double> values;  ///< discretized R_j per constraint
  bool feasible = true;

  bool operator==(const TraceRow&) const = default;
};

struct Evaluation {
  double loss = 0;
  double accuracy = 0;
};

struct PhaseTimes {
  double warmup_s = 0;
  double search_s = 0;
  double finetune_s = 0;
};

template <class T>
struct SearchResult {
  NetworkGraph<T> exported;
  std::vector<Tensor<T>> theta;
  std::vector<TraceRow> trace;
  std::vector<CostConstraint> constraints;  ///< as resolved at search start
  std::vector<ConstraintResult> satisfaction;
  CostReport costs;
  std::vector<std::size_t> critical_layers;
  std::vector<double> lambda_targets;
  double loss_hat = 0;
  std::size_t search_epochs = 0;
  std::size_t selected_epoch = 0;  ///< search epoch whose state was exported
  double pre_finetune_val_accuracy = 0;
  Evaluation validation;
  std::optional<Evaluation> test;
  std::vector<std::string> warnings;
  PhaseTimes timing;

  bool satisfied() const {
    for (const auto& c : satisfaction)
      if (!c.satisfied) return false;
    return true;
  }
};

/// Passed to the step observer after backward() and before the optimizer step.
template <class T>
struct StepContext {
  std::string_view phase;
  std::size_t epoch = 0;
  std::size_t step = 0;
  Tape<T>& tape;
  Var<T> task;
  const ConstrainedLoss<T>* loss = nullptr;  ///< search phase only
  SearchableModel<T>& model;
};

template <class T>
using StepObserver = std::function<void(const StepContext<T>&)>;

template <class T, class Forward>
Evaluation detail_evaluate(const Dataset<T>& ds, std::size_t batch, Forward&& fwd) {
  if (ds.size() == 0) return {};
  double loss = 0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += batch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(ds.size(), start + batch); ++i) idx.push_back(i);
    Tape<T> tape;
    auto x = tape.constant(ds.gather(idx));
    auto labels = ds.gather_labels(idx);
    auto logits = fwd(tape, x);
    loss += static_cast<double>(softmax_cross_entropy(logits, labels).item()) * static_cast<double>(idx.size());
    const auto& lv = logits.value();
    const std::size_t k = lv.extent(1);
    for (std::size_t n = 0; n < idx.size(); ++n) {
      std::span<const T> row(lv.values().data() + n * k, k);
      correct += static_cast<int>(argmax<T>(row)) == labels[n];
    }
  }
  const double n = static_cast<double>(ds.size());
  return {loss / n, static_cast<double>(correct) / n};
}

/// Mean cross-entropy and accuracy of a concrete network.
template <class T>
Evaluation evaluate_graph(const NetworkGraph<T>& g, const Dataset<T>& ds, std::size_t batch = 128) {
  return detail_evaluate(ds, batch, [&](Tape<T>&, Var<T> x) { return forward_eval(g, x); });
}


/// Warmup, constrained search, export and fine-tune over one searchable model.
template <class T>
class Trainer {
 public:
  Trainer(SearchableModel<T>& model, const Dataset<T>& train, const Dataset<T>& valid, SearchConfig cfg)
      : model_(model),
        train_(train),
        valid_(valid),
        cfg_(std::move(cfg)),
        rng_(cfg_.seed, 0x7a17),
        opt_w_(model.weights(), AdamConfig{cfg_.lr_weights}) {
    cfg_.validate();
    if (model.mode() != cfg_.mode) throw std::invalid_argument("model does not match configured dnas mode");
    if (train_.size() == 0 || valid_.size() == 0) throw std::invalid_argument("train and validation sets must be non-empty");
    seed_costs_ = graph_costs(model_.seed());
  }

  void set_step_observer(StepObserver<T> obs) { observer_ = std::move(obs); }
  const std::vector<TraceRow>& trace() const { return trace_; }
  bool warmed_up() const { return warmed_up_; }
  double loss_hat() const { return loss_hat_; }

  /// Weights-only training with theta frozen at its initial value.
  void warmup() {
    if (warmed_up_) throw std::logic_error("warmup already done");
    const auto t0 = std::chrono::steady_clock::now();
    double last = 0;
    for (std::size_t e = 1; e <= cfg_.epochs_wu; ++e) {
      last = run_epoch("warmup", e, Sampling::Frozen, nullptr);
      record("warmup", last, {}, Sampling::Argmax);
    }
    // Without warmup epochs fall back to the validation loss of the initial weights.
    loss_hat_ = cfg_.epochs_wu > 0 ? last : evaluate_model(Sampling::Argmax).loss;
    warmed_up_ = true;
    timing_.warmup_s = seconds_since(t0);
  }

  /// Joint W / theta optimization of the constrained loss.
  void search() {
    if (!warmed_up_) throw std::logic_error("search before warmup");
    if (searched_) throw std::logic_error("search already done");
    const auto t0 = std::chrono::steady_clock::now();
    resolve_constraints();
    Adam<T> opt_theta(model_.arch_params(), AdamConfig{cfg_.lr_arch});
    const Sampling how = cfg_.soft_sampling ? Sampling::Soft : Sampling::Search;
    const Sampling eval_how = cfg_.soft_sampling ? Sampling::Soft : Sampling::Argmax;

    // Early stopping watches the validation task loss of feasible epochs only:
    // an epoch violating a constraint is never an improvement.
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::optional<ModelSnapshot<T>> best_state;
    std::size_t e = 0;
    while (true) {
      ++e;
      const auto lambdas = lambdas_at(e);
      for (std::size_t j = 0; j < constraints_.size(); ++j) constraints_[j].lambda = lambdas[j];
      const double task = run_epoch("search", e, how, &opt_theta);
      const auto& row = record("search", task, lambdas, eval_how);
      if (row.feasible && row.val_loss < best_val) {
        best_val = row.val_loss;
        best_epoch = e;
        if (cfg_.restore_best) {
          best_state = take_snapshot(model_);
          selected_epoch_ = e;
        }
      }
      const bool stalled = best_epoch > 0 && e - best_epoch >= cfg_.patience;
      if (e >= cfg_.epochs_sr && (stalled || e >= cfg_.max_search_epochs)) break;
    }
    search_epochs_ = e;
    opt_theta.zero_grad();
    if (best_state) {
      restore_snapshot(model_, *best_state);
    } else {
      selected_epoch_ = e;
    }
    searched_ = true;
    timing_.search_s = seconds_since(t0);
  }

  /// Exports the searched network, fine-tunes it and evaluates it.
  SearchResult<T> finish(const Dataset<T>* test = nullptr) {
    if (!searched_) throw std::logic_error("finish before search");
    const auto t0 = std::chrono::steady_clock::now();
    SearchResult<T> r;
    r.exported = model_.export_graph();
    r.warnings = model_.export_warnings();
    for (auto* t : model_.arch_params()) r.theta.push_back(*t);
    r.pre_finetune_val_accuracy = evaluate_graph(r.exported, valid_).accuracy;

    Adam<T> opt(graph_weights(r.exported), AdamConfig{cfg_.lr_weights});
    for (std::size_t e = 1; e <= cfg_.epochs_ft; ++e) {
      double total = 0;
      std::size_t steps = 0;
      for_each_batch([&](const Tensor<T>& xb, const std::vector<int>& yb) {
        Tape<T> tape;
        auto task = softmax_cross_entropy(forward(r.exported, tape.constant(xb)), yb);
        check_finite(task, "finetune", e);
        opt.zero_grad();
        tape.backward(task);
        if (observer_) observer_(StepContext<T>{"finetune", e, steps, tape, task, nullptr, model_});
        opt.step();
        total += static_cast<double>(task.item());
        ++steps;
      });
      TraceRow row;
      row.epoch = trace_.size() + 1;
      row.phase = "finetune";
      row.task_loss = total / static_cast<double>(steps);
      const auto ev = evaluate_graph(r.exported, valid_);
      row.val_loss = ev.loss;
      row.accuracy = ev.accuracy;
      const auto costs = graph_costs(r.exported);
      row.size = model_size(costs);
      row.ops = model_ops(costs);
      for (const auto& c : constraints_) row.values.push_back(metric_value(c.metric, c.layer, costs));
      row.feasible = feasible(costs);
      trace_.push_back(row);
    }
    r.validation = evaluate_graph(r.exported, valid_);
    if (test) r.test = evaluate_graph(r.exported, *test);

    r.costs = make_cost_report(graph_costs(r.exported), cfg_.hw);
    for (const auto& c : constraints_)
      r.satisfaction.push_back(evaluate_constraint(c.metric, c.layer, c.target, r.costs.per_layer));
    r.costs.constraints = r.satisfaction;
    r.constraints = constraints_;
    r.critical_layers = critical_;
    r.lambda_targets = lambda_targets_;
    r.loss_hat = loss_hat_;
    r.search_epochs = search_epochs_;
    r.selected_epoch = selected_epoch_;
    r.trace = trace_;
    timing_.finetune_s = seconds_since(t0);
    r.timing = timing_;
    return r;
  }

  /// Warmup state: model tensors, weight optimizer, rng, trace and L_hat.
  json checkpoint() const {
    if (!warmed_up_ || searched_) throw std::logic_error("checkpoints are taken between warmup and search");
    auto& model = const_cast<SearchableModel<T>&>(model_);
    json weights = json::array(), theta = json::array();
    for (auto* t : model.weights()) weights.push_back(tensor_to_json(*t));
    for (auto* t : model.arch_params()) theta.push_back(tensor_to_json(*t));
    json rows = json::array();
    for (const auto& r : trace_) rows.push_back(row_to_json(r));
    return json{{"format", "hwnas-checkpoint"},
                {"version", 1},
                {"dtype", dtype_name<T>()},
                {"mode", to_string(cfg_.mode)},
                {"seed_architecture", std::to_string(architecture_hash(model_.seed()))},
                {"config_seed", cfg_.seed},
                {"epochs_wu", cfg_.epochs_wu},
                {"batch_size", cfg_.batch_size},
                {"lr_weights", cfg_.lr_weights},
                {"train_data", std::to_string(data_hash(train_))},
                {"loss_hat", loss_hat_},
                {"weights", std::move(weights)},
                {"theta", std::move(theta)},
                {"optimizer_w", opt_w_.state_to_json()},
                {"rng", rng_.state()},
                {"trace", std::move(rows)}};
  }

  /// Restores a warmup checkpoint taken from an identically built model.
  void load_checkpoint(const json& doc) {
    if (warmed_up_) throw std::logic_error("checkpoint must be loaded before warmup");
    if (doc.value("format", "") != "hwnas-checkpoint") throw std::invalid_argument("not a checkpoint document");
    if (doc.value("version", 0) != 1) throw std::invalid_argument("unsupported checkpoint version");
    if (doc.at("dtype").get<std::string>() != dtype_name<T>()) throw std::invalid_argument("checkpoint dtype mismatch");
    if (parse_dnas_mode(doc.at("mode").get<std::string>()) != cfg_.mode) {
      throw std::invalid_argument("checkpoint dnas mode mismatch");
    }
    if (doc.at("seed_architecture").get<std::string>() != std::to_string(architecture_hash(model_.seed()))) {
      throw std::invalid_argument("checkpoint was taken from a different seed network");
    }
    if (doc.at("config_seed").get<std::uint64_t>() != cfg_.seed) {
      throw std::invalid_argument("checkpoint was taken with a different seed");
    }
    if (doc.at("epochs_wu").get<std::size_t>() != cfg_.epochs_wu) {
      throw std::invalid_argument("checkpoint was taken with a different warmup length");
    }
    if (doc.at("batch_size").get<std::size_t>() != cfg_.batch_size ||
        doc.at("lr_weights").get<double>() != cfg_.lr_weights) {
      throw std::invalid_argument("checkpoint was taken with different warmup hyperparameters");
    }
    if (doc.at("train_data").get<std::string>() != std::to_string(data_hash(train_))) {
      throw std::invalid_argument("checkpoint was taken on a different training set");
    }
    ModelSnapshot<T> snap;
    for (const auto& t : doc.at("weights")) snap.weights.push_back(tensor_from_json<T>(t));
    for (const auto& t : doc.at("theta")) snap.theta.push_back(tensor_from_json<T>(t));
    restore_snapshot(model_, snap);
    opt_w_.load_state(doc.at("optimizer_w"));
    rng_.set_state(doc.at("rng").get<std::string>());
    trace_.clear();
    for (const auto& r : doc.at("trace")) trace_.push_back(row_from_json(r));
    loss_hat_ = doc.at("loss_hat").get<double>();
    warmed_up_ = true;
  }

  static json row_to_json(const TraceRow& r) {
    return json{{"epoch", r.epoch},     {"phase", r.phase}, {"task_loss", r.task_loss}, {"val_loss", r.val_loss},
                {"accuracy", r.accuracy}, {"size", r.size},  {"ops", r.ops},             {"lambdas", r.lambdas},
                {"values", r.values}, {"feasible", r.feasible}};
  }

  static TraceRow row_from_json(const json& j) {
    TraceRow r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.phase = j.at("phase").get<std::string>();
    r.task_loss = j.at("task_loss").get<double>();
    r.val_loss = j.at("val_loss").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    r.size = j.at("size").get<std::int64_t>();
    r.ops = j.at("ops").get<std::int64_t>();
    r.lambdas = j.at("lambdas").get<std::vector<double>>();
    r.values = j.at("values").get<std::vector<double>>();
    r.feasible = j.at("feasible").get<bool>();
    return r;
  }

  Evaluation evaluate_model(Sampling how) {
    return detail_evaluate(valid_, 128, [&](Tape<T>& tape, Var<T> x) {
      auto s = model_.sample(tape, how, rng_eval_, static_cast<T>(cfg_.temperature));
      return model_.forward(x, s, false);
    });
  }

 private:
  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  // FNV-1a over labels and pixel bytes.
  static std::uint64_t data_hash(const Dataset<T>& ds) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](const void* p, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ull;
    };
    mix(ds.labels.data(), ds.labels.size() * sizeof(int));
    mix(ds.images.data(), ds.images.size() * sizeof(T));
    return h;
  }

  static std::vector<Tensor<T>*> graph_weights(NetworkGraph<T>& g) {
    std::vector<Tensor<T>*> out;
    for (auto& layer : g.params)
      for (auto& p : layer) out.push_back(&p);
    return out;
  }

  template <class Fn>
  void for_each_batch(Fn&& fn) {
    std::vector<std::size_t> order(train_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      std::span<const std::size_t> idx(order.data() + start, std::min(cfg_.batch_size, order.size() - start));
      fn(train_.gather(idx), train_.gather_labels(idx));
    }
  }

  static void check_finite(Var<T> loss, std::string_view phase, std::size_t epoch) {
    if (!std::isfinite(static_cast<double>(loss.item()))) {
      throw std::runtime_error(std::string(phase) + " diverged at epoch " + std::to_string(epoch) +
                               ": loss is not finite");
    }
  }

  // One pass over the training set; returns the mean task loss.
  double run_epoch(std::string_view phase, std::size_t epoch, Sampling how, Adam<T>* opt_theta) {
    const T tau = static_cast<T>(cfg_.temperature);
    double total = 0;
    std::size_t steps = 0;
    for_each_batch([&](const Tensor<T>& xb, const std::vector<int>& yb) {
      Tape<T> tape;
      auto sample = model_.sample(tape, how, rng_, tau);
      auto task = softmax_cross_entropy(model_.forward(tape.constant(xb), sample, true), yb);
      check_finite(task, phase, epoch);
      std::optional<ConstrainedLoss<T>> loss;
      Var<T> objective = task;
      if (opt_theta) {
        auto costs = model_.layer_costs(tape, sample);
        loss = constrained_loss<T>(task, constraints_, costs);
        objective = loss->total;
        if (how == Sampling::Soft && cfg_.icv_strength > 0) {
          objective = add(objective, scale(icv_loss(tape, sample), static_cast<T>(cfg_.icv_strength)));
        }
      }
      opt_w_.zero_grad();
      if (opt_theta) opt_theta->zero_grad();
      tape.backward(objective);
      if (observer_) observer_(StepContext<T>{phase, epoch, steps, tape, task, loss ? &*loss : nullptr, model_});
      opt_w_.step();
      if (opt_theta) opt_theta->step();
      total += static_cast<double>(task.item());
      ++steps;
    });
    return total / static_cast<double>(steps);
  }

  const TraceRow& record(std::string_view phase, double task_loss, std::vector<double> lambdas, Sampling eval_how) {
    TraceRow row;
    row.epoch = trace_.size() + 1;
    row.phase = std::string(phase);
    row.task_loss = task_loss;
    const auto ev = evaluate_model(eval_how);
    row.val_loss = ev.loss;
    row.accuracy = ev.accuracy;
    const auto costs = model_.discrete_costs();
    row.size = model_size(costs);
    row.ops = model_ops(costs);
    row.lambdas = std::move(lambdas);
    for (const auto& c : constraints_) row.values.push_back(metric_value(c.metric, c.layer, costs));
    row.feasible = feasible(costs);
    trace_.push_back(std::move(row));
    return trace_.back();
  }

  // Plain-objective terms have no target to meet.
  bool feasible(std::span<const LayerCost> costs) const {
    for (const auto& c : constraints_)
      if (c.form != PenaltyForm::PlainObjective && !evaluate_constraint(c.metric, c.layer, c.target, costs).satisfied) return false;
    return true;
  }

  // Absolute targets, critical layers and lambda targets from the warmup-end state.
  void resolve_constraints() {
    constraints_.clear();
    for (const auto& c : cfg_.constraints) {
      CostConstraint k;
      k.metric = c.metric;
      k.form = cfg_.form;
      k.target = c.absolute ? *c.absolute : *c.fraction * metric_value(c.metric, 0, seed_costs_);
      constraints_.push_back(k);
    }
    const auto now = model_.discrete_costs();
    if (cfg_.hw) {
      critical_ = detect_critical_layers(now, *cfg_.hw, cfg_.critical_margin);
      for (auto layer : critical_) {
        CostConstraint k;
        k.metric = Metric::LayerMemory;
        k.layer = layer;
        k.form = cfg_.form;
        k.target = cfg_.hw->budget();
        constraints_.push_back(k);
      }
    }
    lambda_targets_.clear();
    for (const auto& c : constraints_) {
      const double r_hat = metric_value(c.metric, c.layer, now);
      lambda_targets_.push_back(cfg_.lambda_factor * lambda_target(loss_hat_, r_hat, c.target));
    }
  }

  std::vector<double> lambdas_at(std::size_t epoch) const {
    std::vector<double> out;
    for (double t : lambda_targets_) {
      if (cfg_.lambda_mode == LambdaMode::Scheduled) {
        out.push_back(lambda_at_epoch(t, cfg_.epochs_sr, epoch));
      } else {
        out.push_back(cfg_.lambda_value ? *cfg_.lambda_value : t);
      }
    }
    return out;
  }

  SearchableModel<T>& model_;
  const Dataset<T>& train_;
  const Dataset<T>& valid_;
  SearchConfig cfg_;
  Rng rng_;
  Rng rng_eval_{0, 0xe7a1};  // only consumed by sampling modes that ignore it
  Adam<T> opt_w_;
  StepObserver<T> observer_;
  std::vector<LayerCost> seed_costs_;

  std::vector<TraceRow> trace_;
  std::vector<CostConstraint> constraints_;
  std::vector<std::size_t> critical_;
  std::vector<double> lambda_targets_;
  double loss_hat_ = 0;
  std::size_t search_epochs_ = 0;
  std::size_t selected_epoch_ = 0;
  bool warmed_up_ = false;
  bool searched_ = false;
  PhaseTimes timing_;
};

}  // namespace hwnas
