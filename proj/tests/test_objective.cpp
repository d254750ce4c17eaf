#include <gtest/gtest.h>

#include <cmath>

#include "hwnas/dnas/mask.hpp"
#include "hwnas/netgraph/seeds.hpp"
#include "hwnas/objective/objective.hpp"

using namespace hwnas;

namespace {

double dpenalty_dr(PenaltyForm form, double r, double target, double lambda) {
  Tape<double> tape;
  auto rt = Tensor<double>::scalar(r);
  auto rv = tape.parameter(rt);
  auto p = penalty(form, rv, target, lambda);
  return tape.gradient(p, rt)[0];
}

double penalty_value(PenaltyForm form, double r, double target, double lambda) {
  Tape<double> tape;
  return penalty(form, tape.constant(Tensor<double>::scalar(r)), target, lambda).item();
}

}  // namespace

TEST(Penalty, HingeActive) {
  EXPECT_DOUBLE_EQ(penalty_value(PenaltyForm::MaxHinge, 800, 600, 0.005), 1.0);
  EXPECT_DOUBLE_EQ(dpenalty_dr(PenaltyForm::MaxHinge, 800, 600, 0.005), 0.005);
}

TEST(Penalty, HingeInactiveHasZeroGradient) {
  EXPECT_EQ(penalty_value(PenaltyForm::MaxHinge, 450, 600, 0.005), 0.0);
  EXPECT_EQ(dpenalty_dr(PenaltyForm::MaxHinge, 450, 600, 0.005), 0.0);
  // Exactly on target still counts as satisfied.
  EXPECT_EQ(dpenalty_dr(PenaltyForm::MaxHinge, 600, 600, 0.005), 0.0);
}

TEST(Penalty, AbsValuePushesUpBelowTarget) {
  EXPECT_DOUBLE_EQ(penalty_value(PenaltyForm::AbsValue, 450, 600, 0.005), 0.75);
  EXPECT_LT(dpenalty_dr(PenaltyForm::AbsValue, 450, 600, 0.005), 0.0);
  EXPECT_GT(dpenalty_dr(PenaltyForm::AbsValue, 800, 600, 0.005), 0.0);
}

TEST(Penalty, PlainObjectiveIgnoresTarget) {
  EXPECT_DOUBLE_EQ(penalty_value(PenaltyForm::PlainObjective, 450, 600, 0.01), 4.5);
  EXPECT_DOUBLE_EQ(penalty_value(PenaltyForm::PlainObjective, 450, 0, 0.01), 4.5);
  EXPECT_DOUBLE_EQ(dpenalty_dr(PenaltyForm::PlainObjective, 450, 600, 0.01), 0.01);
}

TEST(Penalty, NegativeLambdaRejected) {
  Tape<double> tape;
  auto r = tape.constant(Tensor<double>::scalar(1.0));
  EXPECT_THROW(penalty(PenaltyForm::MaxHinge, r, 1.0, -1.0), std::invalid_argument);
}

TEST(Penalty, FormNamesRoundTrip) {
  for (auto f : {PenaltyForm::MaxHinge, PenaltyForm::AbsValue, PenaltyForm::PlainObjective})
    EXPECT_EQ(parse_penalty_form(to_string(f)), f);
  EXPECT_THROW(parse_penalty_form("max"), std::invalid_argument);
}

TEST(ConstrainedLossTest, NoConstraintsIsTaskLoss) {
  Tape<double> tape;
  auto task = tape.constant(Tensor<double>::scalar(1.234));
  std::vector<LayerCostVars<double>> costs;
  auto loss = constrained_loss<double>(task, {}, costs);
  EXPECT_EQ(loss.total.item(), 1.234);
  EXPECT_EQ(loss.total.id, task.id);
}

TEST(ConstrainedLossTest, DecompositionIsExact) {
  MaskedNetwork<double> net(build_seed(mini_resnet(), 3));
  Rng rng(2);
  Tape<double> tape;
  auto sample = net.sample(tape, Sampling::Search, rng, 1.0);
  auto task = tape.constant(Tensor<double>::scalar(2.3));
  auto costs = net.layer_costs(tape, sample);
  const auto seed_costs = graph_costs(net.seed());
  std::vector<CostConstraint> cs = {
      {Metric::Size, 0, 0.5 * static_cast<double>(model_size(seed_costs)), 1e-4, PenaltyForm::MaxHinge},
      {Metric::Ops, 0, 0.5 * static_cast<double>(model_ops(seed_costs)), 1e-6, PenaltyForm::AbsValue},
      {Metric::LayerMemory, 9, 1000, 1e-3, PenaltyForm::MaxHinge},
  };
  auto loss = constrained_loss<double>(task, cs, costs);
  ASSERT_EQ(loss.penalties.size(), 3u);
  double expect = task.item();
  for (const auto& p : loss.penalties) expect = expect + p.item();
  EXPECT_EQ(loss.total.item(), expect);
  EXPECT_EQ(loss.values[0].item(), static_cast<double>(model_size(seed_costs)));
  EXPECT_EQ(loss.values[1].item(), static_cast<double>(model_ops(seed_costs)));
  EXPECT_EQ(loss.values[2].item(), static_cast<double>(find_layer(seed_costs, 9)->memory));
  // Only the critical layer's memory enters the layer-wise term.
  EXPECT_DOUBLE_EQ(loss.penalties[2].item(), 1e-3 * (static_cast<double>(find_layer(seed_costs, 9)->memory) - 1000));
}

TEST(ConstrainedLossTest, UnknownLayerThrows) {
  MaskedNetwork<double> net(build_seed(mini_resnet(), 3));
  Rng rng(2);
  Tape<double> tape;
  auto sample = net.sample(tape, Sampling::Search, rng, 1.0);
  auto costs = net.layer_costs(tape, sample);
  std::vector<CostConstraint> cs = {{Metric::LayerMemory, 1, 10, 1, PenaltyForm::MaxHinge}};
  EXPECT_THROW(constrained_loss<double>(tape.constant(Tensor<double>::scalar(0.0)), cs, costs), std::out_of_range);
}

TEST(ConstrainedLossTest, SatisfiedHingesLeaveThetaGradientUnchanged) {
  MaskedNetwork<double> net(build_seed(mini_resnet(), 5));
  const auto seed_costs = graph_costs(net.seed());
  Rng data(9);
  Tensor<double> x({4, 3, 16, 16});
  for (auto& v : x.values()) v = data.uniform(-1, 1);
  const std::vector<int> labels = {0, 3, 7, 1};
  std::vector<CostConstraint> cs = {
      {Metric::Size, 0, 2.0 * static_cast<double>(model_size(seed_costs)), 5.0, PenaltyForm::MaxHinge},
      {Metric::Ops, 0, 1.5 * static_cast<double>(model_ops(seed_costs)), 5.0, PenaltyForm::MaxHinge},
  };
  Rng rng(4);
  Tape<double> tape;
  auto sample = net.sample(tape, Sampling::Search, rng, 1.0);
  auto task = softmax_cross_entropy(net.forward(tape.constant(x), sample, true), labels);
  auto loss = constrained_loss<double>(task, cs, net.layer_costs(tape, sample));
  EXPECT_EQ(loss.total.item(), task.item());
  for (std::size_t g = 0; g < net.group_count(); ++g) {
    const auto with = tape.gradient(loss.total, net.theta(g));
    const auto without = tape.gradient(task, net.theta(g));
    EXPECT_EQ(with, without) << "group " << g;
  }
}

TEST(LambdaTarget, Examples) {
  EXPECT_DOUBLE_EQ(lambda_target(2.0, 1000, 600), 0.005);
  EXPECT_NEAR(lambda_target(1.386, 416, 312), 0.013327, 5e-7);
  // Symmetric in the sign of the gap.
  EXPECT_DOUBLE_EQ(lambda_target(2.0, 200, 600), 0.005);
}

TEST(LambdaTarget, OnTargetIsClamped) {
  const double l = lambda_target(1.0, 600, 600);
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_DOUBLE_EQ(l, 1.0 / kLambdaTargetEpsilon);
}

TEST(LambdaSchedule, RampAndSaturation) {
  EXPECT_EQ(lambda_at_epoch(0.4, 30, 0), 0.0);
  EXPECT_DOUBLE_EQ(lambda_at_epoch(0.4, 30, 15), 0.2);
  EXPECT_DOUBLE_EQ(lambda_at_epoch(0.4, 30, 30), 0.4);
  EXPECT_DOUBLE_EQ(lambda_at_epoch(0.4, 30, 60), 0.4);
  EXPECT_THROW(lambda_at_epoch(0.4, 0, 1), std::invalid_argument);
}

TEST(LambdaSchedule, MonotoneNonDecreasing) {
  LambdaSchedule s{{0.3, 7.0, 0.0}, 13};
  auto prev = s.at(0);
  for (std::size_t e = 1; e < 40; ++e) {
    auto cur = s.at(e);
    for (std::size_t j = 0; j < cur.size(); ++j) EXPECT_GE(cur[j], prev[j]);
    if (e >= 13)
      for (std::size_t j = 0; j < cur.size(); ++j) EXPECT_EQ(cur[j], s.targets[j]);
    prev = cur;
  }
}

TEST(CostConstraintTest, Validation) {
  CostConstraint c{Metric::Size, 0, 0, 1, PenaltyForm::MaxHinge};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.form = PenaltyForm::PlainObjective;
  EXPECT_NO_THROW(c.validate());
  c.lambda = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ((CostConstraint{Metric::LayerMemory, 9}.name()), "layer_memory[9]");
}
