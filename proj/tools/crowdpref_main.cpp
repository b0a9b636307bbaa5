// Command-line front end for the preference reward-learning pipeline:
// generate -> annotate -> train -> evaluate, plus run-all.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crowdpref/config.hpp"
#include "crowdpref/pipeline.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> output_dir;
};

crowdpref::ExperimentConfig load(const CommonOpts& opts) {
  crowdpref::ExperimentConfig cfg = crowdpref::parse_config_file(opts.config_path);
  if (opts.output_dir) cfg.run.output_dir = *opts.output_dir;
  if (opts.seed) cfg.run.seeds = {*opts.seed};
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "Experiment config file")->required();
  cmd->add_option("--seed", opts.seed, "Run only this seed (default: all seeds in the config)");
  cmd->add_option("--output-dir", opts.output_dir, "Override the configured output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward learning from noisy crowdsourced preferences"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string variant;
  bool use_true_reward = false;

  CLI::App* gen = app.add_subcommand("generate", "Roll out trajectories and write the clip store");
  add_common(gen, opts);

  CLI::App* ann = app.add_subcommand("annotate", "Label queries with the simulated crowd");
  add_common(ann, opts);

  CLI::App* trn = app.add_subcommand("train", "Train a reward model variant");
  add_common(trn, opts);
  trn->add_option("--variant", variant, "bt | mv | crowd-bt | dcbt-no-collab | dcbt");

  CLI::App* evl = app.add_subcommand("evaluate", "Relabel, run offline Q-learning, report metrics");
  add_common(evl, opts);
  evl->add_option("--variant", variant, "Variant whose checkpoint to evaluate");
  evl->add_flag("--true-reward", use_true_reward, "Evaluate the true-reward pipeline instead");

  CLI::App* all = app.add_subcommand("run-all", "Full pipeline over all seeds and variants");
  add_common(all, opts);

  CLI11_PARSE(app, argc, argv);

  try {
    const crowdpref::ExperimentConfig cfg = load(opts);
    if (variant.empty()) variant = cfg.train_variant;
    if (gen->parsed()) {
      for (uint64_t seed : cfg.run.seeds) crowdpref::cmd_generate(cfg, seed);
    } else if (ann->parsed()) {
      for (uint64_t seed : cfg.run.seeds) crowdpref::cmd_annotate(cfg, seed);
    } else if (trn->parsed()) {
      for (uint64_t seed : cfg.run.seeds) crowdpref::cmd_train(cfg, seed, variant);
    } else if (evl->parsed()) {
      for (uint64_t seed : cfg.run.seeds)
        crowdpref::cmd_evaluate(cfg, seed, variant, use_true_reward);
    } else if (all->parsed()) {
      crowdpref::run_all(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
