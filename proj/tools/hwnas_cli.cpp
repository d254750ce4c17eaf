#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "hwnas/experiment/experiment.hpp"

using namespace hwnas;

namespace {

constexpr int kExitSatisfied = 0;
constexpr int kExitError = 1;
constexpr int kExitUnsatisfied = 2;

void print_run(const RunSummary& r) {
  std::printf("%-40s size=%-8lld ops=%-10lld %s val_acc=%.4f", r.name.c_str(), static_cast<long long>(r.size),
              static_cast<long long>(r.ops), r.satisfied ? "satisfied  " : "UNSATISFIED", r.val_accuracy);
  if (r.test_accuracy) std::printf(" test_acc=%.4f", *r.test_accuracy);
  std::printf("  %s\n", (r.dir / "report.json").string().c_str());
}

ExperimentConfig load(const std::string& path, const std::optional<std::uint64_t>& seed) {
  auto c = load_config(path);
  if (seed) {
    c.seed = *seed;
    c.search.seed = *seed;
    if (!c.sweep.seeds.empty()) c.sweep.seeds = {*seed};
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hardware-constrained differentiable architecture search"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, kind, graph_path, hw_path;
  std::optional<std::uint64_t> seed;

  auto* search = app.add_subcommand("search", "Warmup, constrained search and fine-tune; one report per run");
  search->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  search->add_option("--seed", seed, "Override the run seed");
  search->add_option("--resume-warmup", checkpoint_path, "Reuse a warmup checkpoint")->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep-lambda", "Plain-objective runs over sweep.lambdas");
  sweep->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--seed", seed, "Run a single seed");

  auto* ablate = app.add_subcommand("ablate", "Paired runs differing in one setting");
  ablate->add_option("kind", kind, "max-abs | lambda-sched | icv")
      ->required()
      ->check(CLI::IsMember({"max-abs", "lambda-sched", "icv"}));
  ablate->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  ablate->add_option("--seed", seed, "Run a single seed");

  auto* audit_cmd = app.add_subcommand("audit", "Cost report of a graph document");
  audit_cmd->add_option("graph", graph_path, "Graph document (JSON)")->required()->check(CLI::ExistingFile);
  audit_cmd->add_option("hw", hw_path, "Memory level descriptor (JSON)")->check(CLI::ExistingFile);

  auto* show = app.add_subcommand("config", "Print the normalized config with defaults filled in");
  show->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitError;
  }

  try {
    if (*search) {
      const auto c = load(config_path, seed);
      std::vector<RunSummary> runs;
      if (!checkpoint_path.empty()) {
        if (!c.sweep.seeds.empty() || !c.sweep.target_fractions.empty()) {
          throw ConfigError("--resume-warmup applies to single runs; remove the sweep section");
        }
        const auto ckpt = read_json(checkpoint_path);
        runs.push_back(run_single(c, &ckpt));
      } else {
        runs = run_search(c);
      }
      bool all = true;
      for (const auto& r : runs) {
        print_run(r);
        all = all && r.satisfied;
      }
      return all ? kExitSatisfied : kExitUnsatisfied;
    }
    if (*sweep) {
      for (const auto& row : run_lambda_sweep(load(config_path, seed))) print_run(row.run);
      return kExitSatisfied;
    }
    if (*ablate) {
      for (const auto& row : run_ablation(parse_ablation(kind), load(config_path, seed))) {
        std::printf("[%s] ", row.variant.c_str());
        print_run(row.run);
      }
      return kExitSatisfied;
    }
    if (*audit_cmd) {
      std::optional<HwDescriptor> hw;
      double margin = 0.3;
      if (!hw_path.empty()) std::tie(hw, margin) = load_hw_descriptor(read_json(hw_path));
      const auto report = audit(read_json(graph_path), hw, margin);
      std::cout << report.dump(2) << '\n';
      return hw && report.at("l2v").get<double>() > 0 ? kExitUnsatisfied : kExitSatisfied;
    }
    if (*show) {
      std::cout << config_to_json(load_config(config_path)).dump(2) << '\n';
      return kExitSatisfied;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "hwnas: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
