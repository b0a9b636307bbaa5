#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "crowdpref/aggregate.hpp"
#include "crowdpref/config.hpp"
#include "crowdpref/crowd.hpp"
#include "crowdpref/dataset_io.hpp"
#include "crowdpref/envgen.hpp"
#include "crowdpref/policy.hpp"
#include "crowdpref/prefmodels.hpp"

namespace crowdpref {

// Stream tags deriving stage-specific seeds from one run seed.
inline constexpr uint64_t kRolloutStream = 0x0707u;
inline constexpr uint64_t kCrowdStream = 0xc02dau;
inline constexpr uint64_t kMvStream = 0x3u;
inline constexpr uint64_t kEvalStream = 0xe7a1u;

struct Paths {
  std::string root;

  explicit Paths(const std::string& output_dir) : root(output_dir) {}
  std::string seed_dir(uint64_t seed) const { return root + "/seed" + std::to_string(seed); }
  std::string clips_file(uint64_t seed) const { return seed_dir(seed) + "/clips.txt"; }
  std::string scores_file(uint64_t seed) const { return seed_dir(seed) + "/clip_scores.txt"; }
  std::string prefs_file(uint64_t seed) const { return seed_dir(seed) + "/prefs.txt"; }
  std::string truth_file(uint64_t seed) const { return seed_dir(seed) + "/prefs.truth"; }
  std::string variant_dir(uint64_t seed, const std::string& v) const {
    return seed_dir(seed) + "/" + v;
  }
  std::string checkpoint_file(uint64_t seed, const std::string& v) const {
    return variant_dir(seed, v) + "/checkpoint.txt";
  }
  std::string trainlog_file(uint64_t seed, const std::string& v) const {
    return variant_dir(seed, v) + "/train_log.csv";
  }
  std::string report_file() const { return root + "/report.csv"; }
};

inline Mdp build_env(const ExperimentConfig& cfg) {
  return build_gridworld(cfg.env.width, cfg.env.height, cfg.env.goals, cfg.env.hazards,
                         cfg.env.seed, cfg.env.gamma);
}

/// Behavioral mixture for data generation: epsilon-greedy optimal policies at
/// eps in {0.1, 0.3, 0.6} plus a uniform-random policy, round-robin across
/// trajectories.
inline std::vector<Trajectory> generate_trajectories(const Mdp& mdp, const DataConfig& data,
                                                     uint64_t run_seed) {
  const ValueSolution sol = value_iteration(mdp);
  std::vector<PolicyFn> policies = {
      epsilon_greedy_policy(sol.greedy, mdp.n_actions, 0.1),
      epsilon_greedy_policy(sol.greedy, mdp.n_actions, 0.3),
      epsilon_greedy_policy(sol.greedy, mdp.n_actions, 0.6),
      uniform_policy(mdp.n_actions),
  };
  std::vector<Trajectory> trajectories;
  trajectories.reserve(static_cast<size_t>(data.n_trajectories));
  const uint64_t base = Rng::mix(run_seed, kRolloutStream);
  for (int i = 0; i < data.n_trajectories; ++i) {
    const PolicyFn& policy = policies[static_cast<size_t>(i) % policies.size()];
    trajectories.push_back(rollout(mdp, policy, data.horizon, Rng::mix(base, static_cast<uint64_t>(i))));
  }
  return trajectories;
}

/// Writes the clip store and the true-score sidecar for one run seed.
inline void cmd_generate(const ExperimentConfig& cfg, uint64_t seed) {
  cfg.validate();
  const Mdp mdp = build_env(cfg);
  std::vector<Clip> clips = clip_trajectories(generate_trajectories(mdp, cfg.data, seed), cfg.data.t_c);
  if (static_cast<int>(clips.size()) < cfg.data.n_clips)
    throw std::runtime_error("generate: config yields too few clips (" +
                             std::to_string(clips.size()) + " < " +
                             std::to_string(cfg.data.n_clips) + ")");
  clips.resize(static_cast<size_t>(cfg.data.n_clips));
  ClipStore store{std::move(clips)};
  store.validate();

  std::vector<double> scores(store.clips.size());
  for (size_t i = 0; i < store.clips.size(); ++i)
    scores[i] = true_clip_score(store.clips[i], mdp);

  const Paths paths(cfg.run.output_dir);
  std::filesystem::create_directories(paths.seed_dir(seed));
  save_clips(paths.clips_file(seed), store);
  save_clip_scores(paths.scores_file(seed), scores);
}

/// Labels queries with the simulated crowd; writes the noisy dataset and the
/// hidden-truth sidecar.
inline void cmd_annotate(const ExperimentConfig& cfg, uint64_t seed) {
  cfg.validate();
  const Paths paths(cfg.run.output_dir);
  const ClipStore store = load_clips(paths.clips_file(seed));
  const Mdp mdp = build_env(cfg);

  CrowdConfig crowd = cfg.crowd;
  crowd.seed = Rng::mix(Rng::mix(cfg.crowd.seed, kCrowdStream), seed);
  BuiltDataset built = build_dataset(store, mdp, cfg.data.n_queries, cfg.labels_per_query, crowd);

  save_records(paths.prefs_file(seed), built.dataset.records);
  save_truth(paths.truth_file(seed), truth_rows(built.dataset, built.truth));
}

inline DatasetTruth truth_from_rows(const std::vector<TruthRow>& rows) {
  DatasetTruth truth;
  truth.record_truth.reserve(rows.size());
  uint32_t max_id = 0;
  for (const TruthRow& t : rows)
    if (t.record.annotator != kCollapsedAnnotator) max_id = std::max(max_id, t.record.annotator);
  truth.abilities.assign(static_cast<size_t>(max_id) + 1, 0.0);
  for (const TruthRow& t : rows) {
    truth.record_truth.push_back(t.true_label);
    truth.query_truth[query_key(t.record)] = t.true_label;
    if (t.record.annotator != kCollapsedAnnotator)
      truth.abilities[t.record.annotator] = t.ability;
  }
  return truth;
}

inline PreferenceDataset load_dataset(const Paths& paths, uint64_t seed) {
  return make_dataset(load_clips(paths.clips_file(seed)), load_records(paths.prefs_file(seed)));
}

/// Trains one variant on one seed's dataset. The `mv` variant first collapses
/// the dataset by majority vote and then trains plain BT on the result.
inline void cmd_train(const ExperimentConfig& cfg, uint64_t seed, const std::string& variant_name) {
  cfg.validate();
  const Paths paths(cfg.run.output_dir);
  PreferenceDataset ds = load_dataset(paths, seed);

  TrainConfig train_cfg = cfg.train;
  if (variant_name == "mv") {
    ds = mv_collapse(ds, Rng::mix(seed, kMvStream));
    train_cfg.variant = Variant::BT;
  } else {
    train_cfg.variant = variant_from_string(variant_name);
  }

  const int n_states = cfg.env.width * cfg.env.height;
  TrainResult result = train(ds, n_states, 4, train_cfg, seed);

  std::filesystem::create_directories(paths.variant_dir(seed, variant_name));
  const bool with_reliability = train_cfg.variant != Variant::BT;
  save_checkpoint(paths.checkpoint_file(seed, variant_name), result.nets.reward,
                  with_reliability ? &result.nets.reliability : nullptr);

  auto log = open_out(paths.trainlog_file(seed, variant_name));
  log << "step,phase,loss_dcbt,loss_reg,loss_l1l2,loss_total\n";
  for (const TrainLogRow& row : result.log)
    log << row.step << ',' << row.phase << ',' << fmt_double(row.loss_data) << ','
        << fmt_double(row.loss_reg) << ',' << fmt_double(row.loss_l1l2) << ','
        << fmt_double(row.loss_total) << '\n';
}

struct EvalRow {
  std::string variant;
  uint64_t seed = 0;
  double avg_return = 0.0;
  std::optional<double> pearson;
  std::optional<double> spearman;
  double label_error_raw = 0.0;
  double label_error_mv = 0.0;
};

inline std::string fmt_optional(const std::optional<double>& x) {
  return x.has_value() ? fmt_double(*x) : "nan";
}

inline void append_report_row(const std::string& path, const EvalRow& row) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  if (fresh) out << "variant,seed,avg_return,pearson,spearman,label_error_raw,label_error_mv\n";
  out << row.variant << ',' << row.seed << ',' << fmt_double(row.avg_return) << ','
      << fmt_optional(row.pearson) << ',' << fmt_optional(row.spearman) << ','
      << fmt_double(row.label_error_raw) << ',' << fmt_double(row.label_error_mv) << '\n';
}

/// Relabels the clips, trains offline Q-learning, evaluates the greedy policy
/// on the true MDP, and appends one report row. With `use_true_reward` the
/// checkpoint is bypassed and the MDP's own reward drives the pipeline.
inline EvalRow cmd_evaluate(const ExperimentConfig& cfg, uint64_t seed,
                            const std::string& variant_name, bool use_true_reward = false) {
  cfg.validate();
  const Paths paths(cfg.run.output_dir);
  const Mdp mdp = build_env(cfg);
  const ClipStore store = load_clips(paths.clips_file(seed));

  RewardFn reward;
  Checkpoint ck;
  if (use_true_reward) {
    reward = reward_fn_of(mdp);
  } else {
    ck = load_checkpoint(paths.checkpoint_file(seed, variant_name));
    if (ck.reward.n_states != mdp.n_states || ck.reward.n_actions != mdp.n_actions)
      throw std::runtime_error("evaluate: checkpoint does not match the configured environment");
    reward = reward_fn_of(ck.reward);
  }

  const TransitionSet transitions = relabel(store.clips, reward);
  LearningRateSchedule schedule{LearningRateSchedule::Kind::Constant, cfg.eval.q_lr};
  const QTable table = offline_q_learning(transitions, mdp.n_states, mdp.n_actions, mdp.gamma,
                                          cfg.eval.q_sweeps, schedule);

  EvalRow row;
  row.variant = use_true_reward ? "true" : variant_name;
  row.seed = seed;
  row.avg_return =
      evaluate_policy(mdp, table, cfg.eval.episodes, cfg.eval.horizon, Rng::mix(seed, kEvalStream));
  const AlignmentReport alignment = reward_alignment(reward, mdp);
  row.pearson = alignment.pearson;
  row.spearman = alignment.spearman;

  const PreferenceDataset ds =
      make_dataset(store, load_records(paths.prefs_file(seed)));
  const DatasetTruth truth = truth_from_rows(load_truth(paths.truth_file(seed)));
  row.label_error_raw = label_error_rate(ds, truth);
  row.label_error_mv = label_error_rate(mv_collapse(ds, Rng::mix(seed, kMvStream)), truth);

  append_report_row(paths.report_file(), row);
  return row;
}

/// Full pipeline over every configured seed and variant, writing a fresh
/// report. Reproducible: a fixed config yields byte-identical reports.
inline void run_all(const ExperimentConfig& cfg) {
  cfg.validate();
  const Paths paths(cfg.run.output_dir);
  std::filesystem::create_directories(paths.root);
  std::filesystem::remove(paths.report_file());
  for (uint64_t seed : cfg.run.seeds) {
    cmd_generate(cfg, seed);
    cmd_annotate(cfg, seed);
    if (cfg.run.include_true_baseline) cmd_evaluate(cfg, seed, "true", /*use_true_reward=*/true);
    for (const std::string& variant : cfg.run.variants) {
      cmd_train(cfg, seed, variant);
      cmd_evaluate(cfg, seed, variant);
    }
  }
}

}  // namespace crowdpref
