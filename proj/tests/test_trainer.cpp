#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "hwnas/dnas/mask.hpp"
#include "hwnas/dnas/path.hpp"
#include "hwnas/netgraph/seeds.hpp"
#include "hwnas/trainer/trainer.hpp"

using namespace hwnas;

namespace {

// Two 4-channel convolutions on a 2x6x6 input. Each module offers a 3x3 and a
// 1x1 kernel, giving sizes {72, 8} and {144, 16}: totals 216, 88, 152 and 24.
SeedDescription two_module_seed() {
  SeedBuilder b("two-module", {2, 6, 6});
  b.conv(4, 3, 1, 1).relu().conv(4, 3, 1, 1).relu().avgpool().dense(3);
  return b.build();
}

std::vector<LayerSpec> three_then_one(const LayerSpec& s, const ShapeAnnotation&) {
  return {conv_spec(s.cin, s.cout, 3, 1, 1, s.inputs.at(0)), conv_spec(s.cin, s.cout, 1, 1, 0, s.inputs.at(0))};
}

template <class T>
Supernet<T> two_module_supernet(std::uint64_t seed) {
  Rng rng(seed, 0xa17);
  return Supernet<T>(build_seed<T>(two_module_seed(), seed), rng, three_then_one);
}

SyntheticSpec small_task() {
  SyntheticSpec s;
  s.shape = {2, 6, 6};
  s.classes = 3;
  s.blobs = 2;
  s.noise = 0.5;
  s.jitter = 0.5;
  s.seed = 77;
  return s;
}

SearchConfig small_config(std::uint64_t seed) {
  SearchConfig c;
  c.epochs_wu = 2;
  c.epochs_sr = 4;
  c.epochs_ft = 1;
  c.patience = 2;
  c.max_search_epochs = 8;
  c.batch_size = 16;
  c.seed = seed;
  c.mode = DnasMode::Path;
  c.constraints = {{Metric::Size, std::nullopt, 200.0}};
  return c;
}

struct Data {
  Dataset<float> train, valid, test;
};

Data small_data() {
  auto pool = make_synthetic<float>(small_task(), 120, kTrainPoolStream);
  auto [train, valid] = split_validation(pool, 0.1, 1);
  return {std::move(train), std::move(valid), make_synthetic<float>(small_task(), 60, kTestStream)};
}

template <class T>
std::vector<T> vec(const Tensor<T>& t) {
  return {t.values().begin(), t.values().end()};
}

}  // namespace

TEST(SplitValidation, SizesAndDisjointness) {
  SyntheticSpec s;
  s.shape = {1, 2, 2};
  s.classes = 7;
  auto ds = make_synthetic<double>(s, 1000, kTrainPoolStream);
  // Tag every sample by a unique pixel value so membership can be traced.
  for (std::size_t i = 0; i < ds.size(); ++i) ds.images[i * ds.image_size()] = static_cast<double>(i);
  auto [train, valid] = split_validation(ds, 0.10, 3);
  EXPECT_EQ(train.size(), 900u);
  EXPECT_EQ(valid.size(), 100u);
  std::set<double> seen;
  for (const auto* part : {&train, &valid})
    for (std::size_t i = 0; i < part->size(); ++i) EXPECT_TRUE(seen.insert(part->images[i * ds.image_size()]).second);
  EXPECT_EQ(seen.size(), 1000u);

  std::vector<int> total(7), held(7);
  for (int l : ds.labels) ++total[static_cast<std::size_t>(l)];
  for (int l : valid.labels) ++held[static_cast<std::size_t>(l)];
  for (std::size_t c = 0; c < 7; ++c) EXPECT_LE(std::abs(held[c] - 0.10 * total[c]), 1.0) << "class " << c;
}

TEST(SplitValidation, SeededAndDeterministic) {
  auto ds = make_synthetic<float>(small_task(), 200, kTrainPoolStream);
  auto a = split_validation(ds, 0.25, 8);
  auto b = split_validation(ds, 0.25, 8);
  auto c = split_validation(ds, 0.25, 9);
  EXPECT_EQ(a.second.images, b.second.images);
  EXPECT_EQ(a.first.labels, b.first.labels);
  EXPECT_NE(a.second.images, c.second.images);
  EXPECT_THROW(split_validation(ds, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(split_validation(ds, 0.0, 1), std::invalid_argument);
}

TEST(Synthetic, BalancedLabelsAndIndependentStreams) {
  auto a = make_synthetic<float>(small_task(), 30, kTrainPoolStream);
  auto b = make_synthetic<float>(small_task(), 30, kTestStream);
  a.validate();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.labels[i], static_cast<int>(i % 3));
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.images, b.images);
  EXPECT_EQ(a.images, make_synthetic<float>(small_task(), 30, kTrainPoolStream).images);
}

TEST(Synthetic, TensorFileRoundTrip) {
  auto a = make_synthetic<float>(small_task(), 12, kTrainPoolStream);
  auto b = dataset_from_json<float>(dataset_to_json(a));
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.classes, b.classes);
  auto doc = dataset_to_json(a);
  doc["labels"][0] = 5;
  EXPECT_THROW(dataset_from_json<float>(doc), std::invalid_argument);
}

TEST(AdamTest, ZeroGradientLeavesParameters) {
  Tensor<double> p({3}, std::vector<double>{1, -2, 3});
  Adam<double> opt({&p}, {});
  for (int i = 0; i < 5; ++i) {
    opt.zero_grad();
    opt.step();
  }
  EXPECT_EQ(vec(p), (std::vector<double>{1, -2, 3}));
  EXPECT_EQ(opt.steps(), 5u);
}

TEST(AdamTest, ConstantGradientMovesAgainstSign) {
  Tensor<double> p({2}, std::vector<double>{0, 0});
  Adam<double> opt({&p}, {0.01});
  for (int i = 0; i < 10; ++i) {
    opt.zero_grad();
    p.grad()[0] = 3.0;
    p.grad()[1] = -0.5;
    opt.step();
  }
  EXPECT_LT(p[0], 0.0);
  EXPECT_GT(p[1], 0.0);
  // Bias-corrected Adam takes ~lr per step under a constant gradient.
  EXPECT_NEAR(p[0], -0.1, 1e-6);
  EXPECT_NEAR(p[1], 0.1, 1e-6);
}

TEST(AdamTest, ZeroLearningRateIsIdentity) {
  Tensor<double> p({2}, std::vector<double>{0.5, 0.25});
  Adam<double> opt({&p}, {0.0});
  opt.zero_grad();
  p.grad()[0] = 1;
  p.grad()[1] = -7;
  opt.step();
  EXPECT_EQ(vec(p), (std::vector<double>{0.5, 0.25}));
}

TEST(AdamTest, StateRoundTripContinuesIdentically) {
  Tensor<float> a({2}, std::vector<float>{1, 2}), b = a;
  Adam<float> oa({&a}, {0.1}), ob({&b}, {0.1});
  auto feed = [](Tensor<float>& t, int i) {
    t.zero_grad();
    t.grad()[0] = std::sin(static_cast<float>(i));
    t.grad()[1] = std::cos(static_cast<float>(i));
  };
  for (int i = 0; i < 3; ++i) {
    feed(a, i);
    oa.step();
  }
  b = a;
  ob.load_state(oa.state_to_json());
  for (int i = 3; i < 6; ++i) {
    feed(a, i);
    oa.step();
    feed(b, i);
    ob.step();
  }
  EXPECT_EQ(vec(a), vec(b));
  Tensor<float> c({3});
  Adam<float> oc({&c}, {});
  EXPECT_THROW(oc.load_state(oa.state_to_json()), std::invalid_argument);
}

TEST(SearchConfigTest, Validation) {
  auto c = small_config(0);
  EXPECT_NO_THROW(c.validate());
  c.val_fraction = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config(0);
  c.epochs_sr = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config(0);
  c.constraints = {{Metric::Size, 1.5, std::nullopt}};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.constraints = {{Metric::Size, 0.5, 100.0}};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config(0);
  c.mode = DnasMode::Mask;
  c.soft_sampling = true;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(TrainerPhases, WarmupFreezesThetaAndReducesLoss) {
  auto data = small_data();
  auto net = two_module_supernet<float>(1);
  auto cfg = small_config(1);
  cfg.epochs_wu = 4;
  Trainer<float> tr(net, data.train, data.valid, cfg);
  const double before = tr.evaluate_model(Sampling::Argmax).loss;
  std::size_t steps = 0;
  tr.set_step_observer([&](const StepContext<float>& ctx) {
    ++steps;
    for (auto* t : ctx.model.arch_params())
      if (t->has_grad())
        for (float g : t->grad()) ASSERT_EQ(g, 0.0f);
  });
  tr.warmup();
  EXPECT_GT(steps, 0u);
  for (auto* t : net.arch_params())
    for (float v : t->values()) EXPECT_EQ(v, 1.0f);
  EXPECT_EQ(tr.trace().size(), 4u);
  EXPECT_LT(tr.trace().back().task_loss, tr.trace().front().task_loss);
  EXPECT_LT(tr.trace().back().val_loss, before);
}

TEST(TrainerPhases, OrderEnforced) {
  auto data = small_data();
  auto net = two_module_supernet<float>(1);
  Trainer<float> tr(net, data.train, data.valid, small_config(1));
  EXPECT_THROW(tr.search(), std::logic_error);
  EXPECT_THROW(tr.finish(), std::logic_error);
  EXPECT_THROW(tr.checkpoint(), std::logic_error);
}

TEST(TrainerPhases, FullRunContract) {
  auto data = small_data();
  auto net = two_module_supernet<float>(2);
  auto cfg = small_config(2);
  cfg.epochs_ft = 2;
  Trainer<float> tr(net, data.train, data.valid, cfg);
  std::vector<std::string> phases_with_theta_grad;
  tr.set_step_observer([&](const StepContext<float>& ctx) {
    if (ctx.phase == "search") return;
    for (auto* t : ctx.model.arch_params())
      if (t->has_grad())
        for (float g : t->grad())
          if (g != 0.0f) phases_with_theta_grad.emplace_back(ctx.phase);
  });
  tr.warmup();
  tr.search();
  const auto selected = take_snapshot(net);
  const auto search_costs = net.discrete_costs();
  auto r = tr.finish(&data.test);
  EXPECT_TRUE(phases_with_theta_grad.empty());

  std::size_t search_rows = 0, ft_rows = 0;
  for (const auto& row : r.trace) {
    search_rows += row.phase == "search";
    ft_rows += row.phase == "finetune";
  }
  EXPECT_GE(search_rows, cfg.epochs_sr);
  EXPECT_EQ(search_rows, r.search_epochs);
  EXPECT_EQ(ft_rows, 2u);
  for (std::size_t i = 0; i < r.trace.size(); ++i) EXPECT_EQ(r.trace[i].epoch, i + 1);

  // Exported costs equal the discretized costs of the selected search state.
  const auto exported_costs = graph_costs(r.exported);
  ASSERT_EQ(exported_costs.size(), search_costs.size());
  for (std::size_t i = 0; i < exported_costs.size(); ++i) EXPECT_EQ(exported_costs[i], search_costs[i]);
  EXPECT_EQ(r.costs.size, model_size(exported_costs));
  ASSERT_EQ(r.satisfaction.size(), 1u);
  EXPECT_EQ(r.satisfaction[0].satisfied, model_size(exported_costs) <= 200);
  EXPECT_EQ(r.satisfied(), r.satisfaction[0].satisfied);
  ASSERT_TRUE(r.test.has_value());
  EXPECT_GE(r.test->accuracy, 0.0);
  EXPECT_EQ(r.theta.size(), selected.theta.size());
  for (std::size_t i = 0; i < r.theta.size(); ++i) EXPECT_EQ(vec(r.theta[i]), vec(selected.theta[i]));
}

TEST(TrainerPhases, FinetuneKeepsArchitecture) {
  auto data = small_data();
  auto net = two_module_supernet<float>(3);
  auto cfg = small_config(3);
  cfg.epochs_ft = 3;
  Trainer<float> tr(net, data.train, data.valid, cfg);
  tr.warmup();
  tr.search();
  const auto before = architecture_hash(net.export_graph());
  auto r = tr.finish();
  EXPECT_EQ(architecture_hash(r.exported), before);
  EXPECT_NE(graph_to_json(r.exported), graph_to_json(net.export_graph()));
}

TEST(TrainerPhases, CheckpointResumeIsBitIdentical) {
  auto data = small_data();
  auto cfg = small_config(4);

  auto net_a = two_module_supernet<float>(4);
  Trainer<float> a(net_a, data.train, data.valid, cfg);
  a.warmup();
  const auto ckpt = a.checkpoint();
  a.search();
  auto ra = a.finish(&data.test);

  auto net_b = two_module_supernet<float>(4);
  Trainer<float> b(net_b, data.train, data.valid, cfg);
  b.load_checkpoint(json::parse(ckpt.dump()));
  EXPECT_TRUE(b.warmed_up());
  EXPECT_EQ(b.loss_hat(), a.loss_hat());
  b.search();
  auto rb = b.finish(&data.test);

  EXPECT_EQ(graph_to_json(ra.exported).dump(), graph_to_json(rb.exported).dump());
  EXPECT_EQ(ra.trace, rb.trace);
  EXPECT_EQ(ra.test->loss, rb.test->loss);
  EXPECT_EQ(ra.lambda_targets, rb.lambda_targets);
}

TEST(TrainerPhases, CheckpointMismatchesRejected) {
  auto data = small_data();
  auto net = two_module_supernet<float>(4);
  Trainer<float> a(net, data.train, data.valid, small_config(4));
  a.warmup();
  const auto ckpt = a.checkpoint();

  auto other = two_module_supernet<float>(4);
  Trainer<float> wrong_seed(other, data.train, data.valid, small_config(5));
  EXPECT_THROW(wrong_seed.load_checkpoint(ckpt), std::invalid_argument);

  Rng rng(4, 0xa17);
  SeedBuilder sb("other", {2, 6, 6});
  sb.conv(5, 3, 1, 1).relu().conv(4, 3, 1, 1).relu().avgpool().dense(3);
  Supernet<float> different(build_seed<float>(sb.build(), 4), rng, three_then_one);
  Trainer<float> wrong_net(different, data.train, data.valid, small_config(4));
  EXPECT_THROW(wrong_net.load_checkpoint(ckpt), std::invalid_argument);

  auto bad = ckpt;
  bad["version"] = 99;
  auto again = two_module_supernet<float>(4);
  Trainer<float> t(again, data.train, data.valid, small_config(4));
  EXPECT_THROW(t.load_checkpoint(bad), std::invalid_argument);
}

TEST(TrainerPhases, DivergenceAborts) {
  auto data = small_data();
  auto net = two_module_supernet<float>(1);
  auto cfg = small_config(1);
  cfg.lr_weights = 1e30;
  Trainer<float> tr(net, data.train, data.valid, cfg);
  EXPECT_THROW(tr.warmup(), std::runtime_error);
}

TEST(TrainerPhases, MaskModeRuns) {
  auto data = small_data();
  MaskedNetwork<float> net(build_seed<float>(two_module_seed(), 6));
  auto cfg = small_config(6);
  cfg.mode = DnasMode::Mask;
  cfg.constraints = {{Metric::Size, 0.5, std::nullopt}};
  Trainer<float> tr(net, data.train, data.valid, cfg);
  tr.warmup();
  tr.search();
  auto r = tr.finish();
  ASSERT_EQ(r.constraints.size(), 1u);
  EXPECT_EQ(r.constraints[0].target, 0.5 * static_cast<double>(model_size(graph_costs(net.seed()))));
  EXPECT_EQ(r.costs.size, model_size(graph_costs(r.exported)));
  EXPECT_GT(r.lambda_targets[0], 0.0);
}

TEST(TrainerPhases, MismatchedModeRejected) {
  auto data = small_data();
  MaskedNetwork<float> net(build_seed<float>(two_module_seed(), 6));
  EXPECT_THROW(Trainer<float>(net, data.train, data.valid, small_config(6)), std::invalid_argument);
}

// Initial argmax (ties to the first alternative) is the 216-weight network,
// the only one above the 200 target; search must leave it.
TEST(PathSearch, EnumerableSupernetReachesFeasibility) {
  auto data = small_data();
  int feasible = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto net = two_module_supernet<float>(100 + seed);
    EXPECT_EQ(model_size(net.discrete_costs()), 216);
    Trainer<float> tr(net, data.train, data.valid, small_config(100 + seed));
    tr.warmup();
    tr.search();
    auto r = tr.finish();
    feasible += r.satisfied();
  }
  EXPECT_GE(feasible, 19);
}
