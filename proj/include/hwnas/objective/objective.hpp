#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hwnas/costmodel/costmodel.hpp"

namespace hwnas {

enum class PenaltyForm { MaxHinge, AbsValue, PlainObjective };

inline std::string_view to_string(PenaltyForm f) {
  switch (f) {
    case PenaltyForm::MaxHinge:
      return "max_hinge";
    case PenaltyForm::AbsValue:
      return "abs_value";
    case PenaltyForm::PlainObjective:
      return "plain_objective";
  }
  return "?";
}

inline PenaltyForm parse_penalty_form(std::string_view s) {
  if (s == "max_hinge") return PenaltyForm::MaxHinge;
  if (s == "abs_value") return PenaltyForm::AbsValue;
  if (s == "plain_objective") return PenaltyForm::PlainObjective;
  throw std::invalid_argument("unknown penalty form '" + std::string(s) + "'");
}

/// One cost term of the loss. LayerMemory constraints address a single layer;
/// a critical set is expanded into one constraint per layer.
struct CostConstraint {
  Metric metric = Metric::Size;
  std::size_t layer = 0;
  double target = 0;
  double lambda = 0;
  PenaltyForm form = PenaltyForm::MaxHinge;

  void validate() const {
    if (form != PenaltyForm::PlainObjective && !(target > 0)) {
      throw std::invalid_argument("constraint target must be positive");
    }
    if (!(lambda >= 0)) throw std::invalid_argument("constraint lambda must be non-negative");
  }

  std::string name() const {
    std::string n(to_string(metric));
    if (metric == Metric::LayerMemory) n += "[" + std::to_string(layer) + "]";
    return n;
  }
};

/// lambda * max(0, R - T), lambda * |R - T|, or lambda * R.
template <class T>
Var<T> penalty(PenaltyForm form, Var<T> r, double target, double lambda) {
  if (!(lambda >= 0)) throw std::invalid_argument("penalty: lambda must be non-negative");
  const T lam = static_cast<T>(lambda);
  switch (form) {
    case PenaltyForm::MaxHinge: {
      auto d = add_constant(r, static_cast<T>(-target));
      return scale(positive_part(d), lam);
    }
    case PenaltyForm::AbsValue:
      return scale(abs(add_constant(r, static_cast<T>(-target))), lam);
    case PenaltyForm::PlainObjective:
      return scale(r, lam);
  }
  throw std::invalid_argument("penalty: unknown form");
}

/// Differentiable value of a constraint's metric.
template <class T>
Var<T> constraint_value(Tape<T>& tape, const CostConstraint& c, std::span<const LayerCostVars<T>> costs) {
  switch (c.metric) {
    case Metric::Size:
      return total_size(tape, costs);
    case Metric::Ops:
      return total_ops(tape, costs);
    case Metric::LayerMemory:
      for (const auto& lc : costs)
        if (lc.layer == c.layer) return lc.memory;
      throw std::out_of_range("no cost terms for layer " + std::to_string(c.layer));
  }
  throw std::invalid_argument("constraint_value: unknown metric");
}

/// Task loss and the individual terms that make up the constrained loss.
template <class T>
struct ConstrainedLoss {
  Var<T> total;
  std::vector<Var<T>> values;     ///< R_j per constraint
  std::vector<Var<T>> penalties;  ///< lambda_j-weighted penalty per constraint
};

/// task + sum_j penalty_j, summed left to right.
template <class T>
ConstrainedLoss<T> constrained_loss(Var<T> task, std::span<const CostConstraint> constraints,
                                    std::span<const LayerCostVars<T>> costs) {
  Tape<T>& tape = *task.tape;
  ConstrainedLoss<T> out{task, {}, {}};
  for (const auto& c : constraints) {
    c.validate();
    auto r = constraint_value(tape, c, costs);
    auto p = penalty(c.form, r, c.target, c.lambda);
    out.values.push_back(r);
    out.penalties.push_back(p);
    out.total = add(out.total, p);
  }
  return out;
}

inline constexpr double kLambdaTargetEpsilon = 1e-8;

/// L_hat / |R_hat - T| with the denominator floored at epsilon.
inline double lambda_target(double loss_hat, double cost_hat, double target) {
  return loss_hat / std::max(std::abs(cost_hat - target), kLambdaTargetEpsilon);
}

/// Linear ramp min(e * target / epochs_sr, target).
inline double lambda_at_epoch(double target_lambda, std::size_t epochs_sr, std::size_t epoch) {
  if (epochs_sr == 0) throw std::invalid_argument("epochs_sr must be >= 1");
  return std::min(static_cast<double>(epoch) * target_lambda / static_cast<double>(epochs_sr), target_lambda);
}

struct LambdaSchedule {
  std::vector<double> targets;
  std::size_t epochs_sr = 1;

  std::vector<double> at(std::size_t epoch) const {
    std::vector<double> out;
    for (double t : targets) out.push_back(lambda_at_epoch(t, epochs_sr, epoch));
    return out;
  }
};

}  // namespace hwnas
