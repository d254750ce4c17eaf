#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gradcheck.hpp"
#include "hwnas/autodiff/ops.hpp"

using namespace hwnas;
using hwnas::testing::check_gradients;
using hwnas::testing::random_tensor;
using hwnas::testing::weighted_sum;

namespace {

constexpr double kGradTol = 1e-5;

Tensor<double> filled(Shape s, double v) { return Tensor<double>(std::move(s), v); }

}  // namespace

TEST(Tensor, RejectsZeroExtentAndValueCountMismatch) {
  EXPECT_THROW(Tensor<double>(Shape{2, 0}), ShapeError);
  EXPECT_THROW(Tensor<double>(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor<double> t(Shape{2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_FALSE(t.has_grad());
  t.grad();
  EXPECT_EQ(t.grad().size(), t.size());
}

TEST(Conv2d, OneByOneIsScalarProduct) {
  Tape<double> tape;
  auto y = conv2d(tape.constant(filled({1, 1, 1, 1}, 3.0)), tape.constant(filled({1, 1, 1, 1}, 2.0)), 1, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.value()[0], 6.0);
}

TEST(Conv2d, SumOfOnes) {
  Tape<double> tape;
  auto y = conv2d(tape.constant(filled({1, 1, 3, 3}, 1.0)), tape.constant(filled({1, 3, 3, 1}, 1.0)), 1, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.value()[0], 9.0);
}

TEST(Conv2d, OutputExtentFollowsStrideAndPadding) {
  Tape<double> tape;
  auto x = tape.constant(filled({1, 2, 16, 16}, 1.0));
  auto w = tape.constant(filled({4, 3, 3, 2}, 1.0));
  EXPECT_EQ(conv2d(x, w, 1, 1).shape(), (Shape{1, 4, 16, 16}));
  EXPECT_EQ(conv2d(x, w, 2, 1).shape(), (Shape{1, 4, 8, 8}));
  EXPECT_EQ(conv2d(x, w, 1, 0).shape(), (Shape{1, 4, 14, 14}));
}

TEST(Conv2d, ChannelMismatchIsShapeError) {
  Tape<double> tape;
  auto x = tape.constant(filled({1, 2, 5, 5}, 1.0));
  auto w = tape.constant(filled({1, 3, 3, 3}, 1.0));
  EXPECT_THROW(conv2d(x, w, 1, 0), ShapeError);
}

TEST(Conv2d, KernelLargerThanPaddedInputIsShapeError) {
  Tape<double> tape;
  auto x = tape.constant(filled({1, 1, 2, 2}, 1.0));
  auto w = tape.constant(filled({1, 5, 5, 1}, 1.0));
  EXPECT_THROW(conv2d(x, w, 1, 1), ShapeError);
  EXPECT_NO_THROW(conv2d(x, w, 1, 2));
}

TEST(Conv2d, PaddedBorderMatchesDirectSum) {
  // Corner output of a padded 3x3 all-ones conv sees a 2x2 patch.
  Tape<double> tape;
  Rng rng(3);
  auto xt = random_tensor(rng, {1, 1, 4, 4});
  auto y = conv2d(tape.constant(xt), tape.constant(filled({1, 3, 3, 1}, 1.0)), 1, 1);
  EXPECT_NEAR(y.value()[0], xt[0] + xt[1] + xt[4] + xt[5], 1e-15);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  for (std::size_t stride : {1u, 2u}) {
    auto res = check_gradients(
        [&](Tape<double>&, std::vector<Var<double>>& v) {
          return weighted_sum(conv2d(v[0], v[1], stride, 1));
        },
        {random_tensor(rng, {1, 2, 5, 5}), random_tensor(rng, {3, 3, 3, 2})});
    EXPECT_LT(res.max_rel_error, kGradTol) << "stride " << stride;
  }
  // gradient of sum(output) w.r.t. weight, as in the reference example
  auto res = check_gradients(
      [&](Tape<double>&, std::vector<Var<double>>& v) { return sum(conv2d(v[0], v[1], 1, 0)); },
      {random_tensor(rng, {1, 2, 5, 5}), random_tensor(rng, {3, 3, 3, 2})});
  EXPECT_LT(res.max_rel_error, kGradTol);
}

TEST(DepthwiseConv2d, PerChannelScalarProduct) {
  Tape<double> tape;
  auto y = depthwise_conv2d(tape.constant(Tensor<double>({1, 2, 1, 1}, {3.0, 5.0})),
                            tape.constant(Tensor<double>({2, 1, 1}, {2.0, 4.0})), 1, 0);
  EXPECT_DOUBLE_EQ(y.value()[0], 6.0);
  EXPECT_DOUBLE_EQ(y.value()[1], 20.0);
}

TEST(DepthwiseConv2d, SingleChannelEqualsConv2d) {
  Rng rng(4);
  auto xt = random_tensor(rng, {2, 1, 6, 6});
  auto wt = random_tensor(rng, {1, 3, 3});
  Tape<double> tape;
  auto d = depthwise_conv2d(tape.constant(xt), tape.constant(wt), 2, 1);
  auto c = conv2d(tape.constant(xt), tape.constant(Tensor<double>({1, 3, 3, 1}, wt.data())), 2, 1);
  ASSERT_EQ(d.shape(), c.shape());
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(d.value()[i], c.value()[i], 1e-14);
}

TEST(DepthwiseConv2d, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  auto res = check_gradients(
      [&](Tape<double>&, std::vector<Var<double>>& v) {
        return weighted_sum(depthwise_conv2d(v[0], v[1], 2, 1));
      },
      {random_tensor(rng, {2, 3, 5, 5}), random_tensor(rng, {3, 3, 3})});
  EXPECT_LT(res.max_rel_error, kGradTol);
}

TEST(Dense, IdentityAndScalarAffine) {
  Tape<double> tape;
  Tensor<double> x({1, 2}, {0.5, -1.5});
  auto y = dense(tape.constant(x), tape.constant(Tensor<double>({2, 2}, {1, 0, 0, 1})),
                 tape.constant(filled({2}, 0.0)));
  EXPECT_EQ(y.value(), x);
  auto z = dense(tape.constant(Tensor<double>({1, 1}, {3.0})), tape.constant(Tensor<double>({1, 1}, {2.0})),
                 tape.constant(Tensor<double>({1}, {0.25})));
  EXPECT_DOUBLE_EQ(z.item(), 6.25);
}

TEST(Dense, ShapeMismatchThrows) {
  Tape<double> tape;
  EXPECT_THROW(dense(tape.constant(filled({1, 3}, 1.0)), tape.constant(filled({2, 2}, 1.0)),
                     tape.constant(filled({2}, 0.0))),
               ShapeError);
}

TEST(Dense, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  auto res = check_gradients(
      [&](Tape<double>&, std::vector<Var<double>>& v) { return weighted_sum(dense(v[0], v[1], v[2])); },
      {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 5}), random_tensor(rng, {5})});
  EXPECT_LT(res.max_rel_error, kGradTol);
}

TEST(Elementwise, ReluValues) {
  Tape<double> tape;
  auto y = relu(tape.constant(Tensor<double>({2}, {-1.0, 2.0})));
  EXPECT_DOUBLE_EQ(y.value()[0], 0.0);
  EXPECT_DOUBLE_EQ(y.value()[1], 2.0);
}

TEST(Elementwise, ReluGradientAtZeroIsOne) {
  Tensor<double> x({3}, {-1.0, 0.0, 2.0});
  Tape<double> tape;
  tape.backward(sum(relu(tape.parameter(x))));
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 1.0);
  EXPECT_EQ(x.grad()[2], 1.0);
}

TEST(Elementwise, ChannelMaskZeroesWholeChannel) {
  Tape<double> tape;
  auto y = hadamard(tape.constant(filled({1, 2, 2, 2}, 1.0)), tape.constant(Tensor<double>({2}, {1.0, 0.0})));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y.value()[i], 1.0);
  for (std::size_t i = 4; i < 8; ++i) EXPECT_EQ(y.value()[i], 0.0);
}

TEST(Elementwise, GlobalAvgPoolOfConstantMap) {
  Tape<double> tape;
  auto y = global_avg_pool(tape.constant(filled({2, 3, 4, 5}, 1.75)));
  EXPECT_EQ(y.shape(), (Shape{2, 3}));
  for (auto v : y.value().values()) EXPECT_DOUBLE_EQ(v, 1.75);
}

TEST(Elementwise, BroadcastRejectsWrongLength) {
  Tape<double> tape;
  EXPECT_THROW(hadamard(tape.constant(filled({1, 3, 2, 2}, 1.0)), tape.constant(filled({2}, 1.0))),
               ShapeError);
  EXPECT_THROW(add(tape.constant(filled({2}, 1.0)), tape.constant(filled({3}, 1.0))), ShapeError);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  const std::vector<std::pair<const char*, hwnas::testing::Builder>> cases = {
      {"relu", [](Tape<double>&, std::vector<Var<double>>& v) { return weighted_sum(relu(v[0])); }},
      {"add", [](Tape<double>&, std::vector<Var<double>>& v) { return weighted_sum(add(v[0], v[1])); }},
      {"sub", [](Tape<double>&, std::vector<Var<double>>& v) { return weighted_sum(sub(v[0], v[1])); }},
      {"hadamard", [](Tape<double>&, std::vector<Var<double>>& v) { return weighted_sum(hadamard(v[0], v[1])); }},
      {"scale", [](Tape<double>&, std::vector<Var<double>>& v) { return weighted_sum(scale(v[0], 0.3)); }},
      {"gap", [](Tape<double>&, std::vector<Var<double>>& v) { return weighted_sum(global_avg_pool(v[0])); }},
      {"abs", [](Tape<double>&, std::vector<Var<double>>& v) { return weighted_sum(abs(v[0])); }},
  };
  for (const auto& [name, build] : cases) {
    auto res = check_gradients(build, {random_tensor(rng, {2, 3, 2, 2}), random_tensor(rng, {2, 3, 2, 2})});
    EXPECT_LT(res.max_rel_error, kGradTol) << name;
  }
  auto masked = check_gradients(
      [](Tape<double>&, std::vector<Var<double>>& v) { return weighted_sum(hadamard(v[0], v[1])); },
      {random_tensor(rng, {2, 3, 2, 2}), random_tensor(rng, {3})});
  EXPECT_LT(masked.max_rel_error, kGradTol);
  auto axis0 = check_gradients(
      [](Tape<double>&, std::vector<Var<double>>& v) { return weighted_sum(hadamard(v[0], v[1], 0)); },
      {random_tensor(rng, {4, 3, 3, 2}), random_tensor(rng, {4})});
  EXPECT_LT(axis0.max_rel_error, kGradTol);
  auto bias = check_gradients(
      [](Tape<double>&, std::vector<Var<double>>& v) { return weighted_sum(add_channel_bias(v[0], v[1])); },
      {random_tensor(rng, {2, 3, 2, 2}), random_tensor(rng, {3})});
  EXPECT_LT(bias.max_rel_error, kGradTol);
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogK) {
  Tape<double> tape;
  const std::vector<int> labels{2};
  auto loss = softmax_cross_entropy(tape.constant(filled({1, 4}, 0.7)), labels);
  EXPECT_NEAR(loss.item(), std::log(4.0), 1e-12);
  EXPECT_NEAR(loss.item(), 1.386294, 1e-6);
}

TEST(SoftmaxCrossEntropy, DominantLogitDrivesLossToZero) {
  const std::vector<int> labels{1};
  double prev = 1e9;
  for (double big : {1.0, 5.0, 20.0, 60.0}) {
    Tape<double> tape;
    auto loss = softmax_cross_entropy(tape.constant(Tensor<double>({1, 3}, {0.0, big, 0.0})), labels).item();
    EXPECT_LT(loss, prev);
    prev = loss;
  }
  EXPECT_LT(prev, 1e-20);
}

TEST(SoftmaxCrossEntropy, GradientIsSoftmaxMinusOneHot) {
  Rng rng(8);
  auto logits = random_tensor(rng, {3, 4}, -2, 2);
  const std::vector<int> labels{0, 3, 1};
  logits.zero_grad();
  Tape<double> tape;
  tape.backward(softmax_cross_entropy(tape.parameter(logits), labels));
  for (std::size_t n = 0; n < 3; ++n) {
    double z = 0;
    for (std::size_t j = 0; j < 4; ++j) z += std::exp(logits[n * 4 + j]);
    for (std::size_t j = 0; j < 4; ++j) {
      const double expected = (std::exp(logits[n * 4 + j]) / z - (static_cast<int>(j) == labels[n])) / 3.0;
      EXPECT_NEAR(logits.grad()[n * 4 + j], expected, 1e-12);
    }
  }
  auto res = check_gradients(
      [&](Tape<double>&, std::vector<Var<double>>& v) { return softmax_cross_entropy(v[0], labels); }, {logits});
  EXPECT_LT(res.max_rel_error, kGradTol);
}

TEST(SoftmaxCrossEntropy, LabelOutOfRangeThrows) {
  Tape<double> tape;
  const std::vector<int> labels{4};
  EXPECT_THROW(softmax_cross_entropy(tape.constant(filled({1, 4}, 0.0)), labels), std::out_of_range);
}

TEST(Softmax, TemperatureGradientMatchesFiniteDifferences) {
  Rng rng(9);
  for (double temp : {1.0, 0.5, 3.0}) {
    auto res = check_gradients(
        [&](Tape<double>&, std::vector<Var<double>>& v) { return weighted_sum(softmax(v[0], temp)); },
        {random_tensor(rng, {5})});
    EXPECT_LT(res.max_rel_error, kGradTol);
  }
}

TEST(SteOnehot, ForwardValues) {
  Tape<double> tape;
  auto y = ste_onehot_argmax(tape.constant(Tensor<double>({3}, {0.2, 0.7, 0.1})));
  EXPECT_EQ(y.value(), Tensor<double>({3}, {0.0, 1.0, 0.0}));
  auto single = ste_onehot_argmax(tape.constant(Tensor<double>({1}, {-4.0})));
  EXPECT_EQ(single.value()[0], 1.0);
  auto tie = ste_onehot_argmax(tape.constant(Tensor<double>({3}, {0.5, 0.5, 0.1})));
  EXPECT_EQ(tie.value(), Tensor<double>({3}, {1.0, 0.0, 0.0}));
}

TEST(SteOnehot, BackwardIsIdentity) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    auto scores = random_tensor(rng, {4});
    auto upstream = random_tensor(rng, {4});
    scores.zero_grad();
    Tape<double> tape;
    auto y = ste_onehot_argmax(tape.parameter(scores));
    double total = 0;
    for (auto v : y.value().values()) total += v;
    EXPECT_EQ(total, 1.0);
    tape.backward(sum(hadamard(y, tape.constant(upstream))));
    EXPECT_EQ(scores.grad(), upstream.data());
  }
}

TEST(SteHeaviside, ForwardAndIdentityBackward) {
  Tensor<double> theta({3}, {0.3, -0.1, 0.0});
  theta.zero_grad();
  Tape<double> tape;
  auto h = ste_heaviside(tape.parameter(theta), 0.0);
  EXPECT_EQ(h.value(), Tensor<double>({3}, {1.0, 0.0, 1.0}));
  Tensor<double> upstream({3}, {0.25, -2.0, 7.0});
  tape.backward(sum(hadamard(h, tape.constant(upstream))));
  EXPECT_EQ(theta.grad(), upstream.data());

  Tape<double> tape2;
  auto ones = ste_heaviside(tape2.constant(Tensor<double>({4}, {0.1, 2.0, 3.0, 1e-9})));
  for (auto v : ones.value().values()) EXPECT_EQ(v, 1.0);
}

TEST(Gumbel, AnalyticPoint) { EXPECT_DOUBLE_EQ(gumbel_from_uniform(1.0 / std::numbers::e), 0.0); }

TEST(Gumbel, MonteCarloMeanIsEulerMascheroni) {
  Rng rng(11);
  auto g = gumbel_noise<double>(rng, {1000000});
  double mean = 0;
  for (auto v : g.values()) mean += v;
  mean /= static_cast<double>(g.size());
  EXPECT_NEAR(mean, std::numbers::egamma, 0.01);
}

TEST(Gumbel, SameSeedSameSequence) {
  Rng a(12), b(12), c(13);
  auto ga = gumbel_noise<double>(a, {64});
  auto gb = gumbel_noise<double>(b, {64});
  auto gc = gumbel_noise<double>(c, {64});
  EXPECT_EQ(ga, gb);
  EXPECT_NE(ga, gc);
}

TEST(Rng, StateRoundTripResumesSequence) {
  Rng a(21, 3);
  a.uniform();
  Rng b;
  b.set_state(a.state());
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(InverseCv, DirectArithmetic) {
  Tape<double> tape;
  EXPECT_NEAR(inverse_cv(tape.constant(Tensor<double>({2}, {0.9, 0.1}))).item(), 1.25, 1e-12);
  const double uniform = inverse_cv(tape.constant(Tensor<double>({2}, {0.5, 0.5}))).item();
  EXPECT_TRUE(std::isfinite(uniform));
  EXPECT_NEAR(uniform, 0.5 / kIcvSigmaFloor, 1e-6);
  EXPECT_LT(inverse_cv(tape.constant(Tensor<double>({2}, {0.99, 0.01}))).item(),
            inverse_cv(tape.constant(Tensor<double>({2}, {0.6, 0.4}))).item());
}

TEST(InverseCv, GradientMatchesFiniteDifferences) {
  Rng rng(14);
  auto res = check_gradients(
      [](Tape<double>&, std::vector<Var<double>>& v) { return inverse_cv(v[0]); },
      {random_tensor(rng, {4}, 0.1, 1.0)});
  EXPECT_LT(res.max_rel_error, kGradTol);
}

TEST(Backward, SquareSumGradient) {
  Tensor<double> w({2}, {1.0, 2.0});
  Tensor<double> unused({3}, 5.0);
  w.zero_grad();
  unused.zero_grad();
  Tape<double> tape;
  auto wv = tape.parameter(w);
  tape.parameter(unused);
  tape.backward(sum(hadamard(wv, wv)));
  EXPECT_EQ(w.grad(), (std::vector<double>{2.0, 4.0}));
  EXPECT_EQ(unused.grad(), (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(Backward, NonScalarLossRejected) {
  Tape<double> tape;
  auto v = tape.constant(filled({2}, 1.0));
  EXPECT_THROW(tape.backward(v), ShapeError);
}

TEST(Backward, TopologicalOrderHolds) {
  Tape<double> tape;
  Rng rng(15);
  auto x = tape.constant(random_tensor(rng, {1, 2, 4, 4}));
  auto w = tape.constant(random_tensor(rng, {2, 3, 3, 2}));
  sum(relu(conv2d(x, w, 1, 1)));
  for (std::size_t i = 0; i < tape.size(); ++i)
    for (auto p : tape.parents(i)) EXPECT_LT(p, i);
}

TEST(Backward, ComposedNetworkMatchesFiniteDifferences) {
  Rng rng(16);
  const std::vector<int> labels{1, 0};
  auto res = check_gradients(
      [&](Tape<double>&, std::vector<Var<double>>& v) {
        auto h = relu(add_channel_bias(conv2d(v[0], v[1], 1, 1), v[2]));
        auto logits = dense(global_avg_pool(h), v[3], v[4]);
        return softmax_cross_entropy(logits, labels);
      },
      {random_tensor(rng, {2, 2, 5, 5}), random_tensor(rng, {3, 3, 3, 2}), random_tensor(rng, {3}),
       random_tensor(rng, {3, 2}), random_tensor(rng, {2})});
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(Backward, DeterministicAcrossRuns) {
  auto run = [] {
    Rng rng(17);
    auto x = random_tensor(rng, {2, 2, 5, 5});
    auto w = random_tensor(rng, {3, 3, 3, 2});
    w.zero_grad();
    Tape<double> tape;
    tape.backward(sum(relu(conv2d(tape.constant(x), tape.parameter(w), 1, 1))));
    return w.grad();
  };
  EXPECT_EQ(run(), run());
}

TEST(Tape, GradientDoesNotTouchParameter) {
  Tensor<double> w({2}, {3.0, -1.0});
  Tape<double> tape;
  auto wv = tape.parameter(w);
  auto g = tape.gradient(sum(hadamard(wv, wv)), w);
  EXPECT_EQ(g, (std::vector<double>{6.0, -2.0}));
  EXPECT_FALSE(w.has_grad());
}
