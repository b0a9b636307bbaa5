#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "crowdpref/core.hpp"
#include "crowdpref/dataset_io.hpp"
#include "crowdpref/envgen.hpp"
#include "crowdpref/rng.hpp"

namespace crowdpref {

/// Hidden per-annotator correctness probability. Simulator-only.
struct AnnotatorProfile {
  uint32_t id = 0;
  double ability = 0.0;  // probability of emitting the ground-truth label
};

struct CrowdConfig {
  int n_annotators = 2500;
  int max_queries_per_annotator = 20;
  int max_annotators_per_query = 10;
  double tie_epsilon = 0.0;
  bool tie_epsilon_auto = true;  // resolve to 0.05 * observed true-score range
  int beta_a = 7;
  int beta_b = 3;
  uint64_t seed = 0;

  void validate() const {
    if (n_annotators < 1) throw std::invalid_argument("CrowdConfig: n_annotators must be >= 1");
    if (max_queries_per_annotator < 1 || max_annotators_per_query < 1)
      throw std::invalid_argument("CrowdConfig: budget caps must be >= 1");
    if (max_annotators_per_query > n_annotators)
      throw std::invalid_argument("CrowdConfig: max_annotators_per_query exceeds n_annotators");
    if (!tie_epsilon_auto && tie_epsilon < 0.0)
      throw std::invalid_argument("CrowdConfig: tie_epsilon must be non-negative");
    if (beta_a < 1 || beta_b < 1) throw std::invalid_argument("CrowdConfig: bad Beta parameters");
  }
};

/// Abilities drawn i.i.d. from Beta(beta_a, beta_b); deterministic given seed.
inline std::vector<AnnotatorProfile> sample_annotators(const CrowdConfig& config) {
  config.validate();
  Rng rng(Rng::mix(config.seed, 0xab111u));
  std::vector<AnnotatorProfile> profiles(static_cast<size_t>(config.n_annotators));
  for (int i = 0; i < config.n_annotators; ++i) {
    profiles[static_cast<size_t>(i)].id = static_cast<uint32_t>(i);
    profiles[static_cast<size_t>(i)].ability = rng.beta_int(config.beta_a, config.beta_b);
  }
  return profiles;
}

/// Ground-truth label for a scored pair: a margin above eps decides, anything
/// inside the band is a tie.
inline PreferenceLabel ground_truth_label(double score1, double score2, double tie_epsilon) {
  if (score1 - score2 > tie_epsilon) return PreferenceLabel::Succ;
  if (score2 - score1 > tie_epsilon) return PreferenceLabel::Prec;
  return PreferenceLabel::Approx;
}

/// Emits the truth with probability `ability`; otherwise one of the two
/// incorrect labels uniformly at random.
inline PreferenceLabel annotate(const AnnotatorProfile& profile, PreferenceLabel truth, Rng& rng) {
  if (rng.uniform01() < profile.ability) return truth;
  const PreferenceLabel all[3] = {PreferenceLabel::Succ, PreferenceLabel::Approx,
                                  PreferenceLabel::Prec};
  PreferenceLabel wrong[2];
  int k = 0;
  for (PreferenceLabel y : all)
    if (y != truth) wrong[k++] = y;
  return wrong[rng.uniform01() < 0.5 ? 0 : 1];
}

/// Evaluation-only ground truth attached to a generated dataset. Never
/// serialized into the training dataset file.
struct DatasetTruth {
  std::vector<PreferenceLabel> record_truth;            // aligned with dataset records
  std::map<QueryKey, PreferenceLabel> query_truth;      // key -> true label
  std::vector<double> abilities;                        // indexed by annotator id
  std::vector<double> clip_scores;                      // true mean-reward score per clip id
  double tie_epsilon = 0.0;                             // resolved value
};

struct BuiltDataset {
  PreferenceDataset dataset;
  DatasetTruth truth;
};

/// Samples n_queries distinct unordered clip pairs, assigns each to
/// labels_per_query distinct annotators chosen uniformly among those under
/// their query cap, and labels them with the noisy-annotator model.
inline BuiltDataset build_dataset(const ClipStore& clips, const Mdp& mdp, int n_queries,
                                  int labels_per_query, const CrowdConfig& config) {
  config.validate();
  clips.validate();
  const int n_clips = clips.size();
  if (n_clips < 2) throw std::invalid_argument("build_dataset: need at least two clips");
  if (n_queries < 1) throw std::invalid_argument("build_dataset: n_queries must be >= 1");
  if (labels_per_query < 1)
    throw std::invalid_argument("build_dataset: labels_per_query must be >= 1");
  if (labels_per_query > config.max_annotators_per_query)
    throw std::invalid_argument("build_dataset: labels_per_query exceeds max_annotators_per_query");
  if (labels_per_query > config.n_annotators)
    throw std::runtime_error("build_dataset: infeasible budget (too few annotators)");
  const long long total_labels = static_cast<long long>(n_queries) * labels_per_query;
  const long long capacity =
      static_cast<long long>(config.n_annotators) * config.max_queries_per_annotator;
  if (total_labels > capacity)
    throw std::runtime_error("build_dataset: infeasible budget (label capacity exceeded)");
  const double n_pairs = 0.5 * static_cast<double>(n_clips) * (n_clips - 1);
  if (static_cast<double>(n_queries) > n_pairs)
    throw std::runtime_error("build_dataset: infeasible budget (not enough distinct clip pairs)");

  const std::vector<AnnotatorProfile> profiles = sample_annotators(config);

  DatasetTruth truth;
  truth.abilities.resize(profiles.size());
  for (const AnnotatorProfile& p : profiles) truth.abilities[p.id] = p.ability;
  truth.clip_scores.resize(static_cast<size_t>(n_clips));
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int i = 0; i < n_clips; ++i) {
    truth.clip_scores[static_cast<size_t>(i)] = true_clip_score(clips.at(i), mdp);
    lo = std::min(lo, truth.clip_scores[static_cast<size_t>(i)]);
    hi = std::max(hi, truth.clip_scores[static_cast<size_t>(i)]);
  }
  truth.tie_epsilon = config.tie_epsilon_auto ? 0.05 * (hi - lo) : config.tie_epsilon;

  Rng query_rng(Rng::mix(config.seed, 0x9e11e5u));
  std::set<QueryKey> seen;
  std::vector<std::pair<int, int>> queries;  // oriented as drawn
  queries.reserve(static_cast<size_t>(n_queries));
  while (static_cast<int>(queries.size()) < n_queries) {
    const int c1 = static_cast<int>(query_rng.uniform_int(static_cast<uint64_t>(n_clips)));
    int c2 = static_cast<int>(query_rng.uniform_int(static_cast<uint64_t>(n_clips) - 1));
    if (c2 >= c1) ++c2;
    const QueryKey key = c1 < c2 ? QueryKey{c1, c2} : QueryKey{c2, c1};
    if (seen.insert(key).second) queries.emplace_back(c1, c2);
  }

  // Uniform assignment among annotators with remaining budget; annotators are
  // removed from the eligible pool once their cap is reached.
  Rng assign_rng(Rng::mix(config.seed, 0xa551e7u));
  Rng label_rng(Rng::mix(config.seed, 0x1abe15u));
  std::vector<uint32_t> eligible(profiles.size());
  for (size_t i = 0; i < eligible.size(); ++i) eligible[i] = static_cast<uint32_t>(i);
  std::vector<int> used(profiles.size(), 0);

  std::vector<PreferenceRecord> records;
  records.reserve(static_cast<size_t>(total_labels));
  truth.record_truth.reserve(static_cast<size_t>(total_labels));

  for (const auto& [c1, c2] : queries) {
    if (static_cast<int>(eligible.size()) < labels_per_query)
      throw std::runtime_error("build_dataset: infeasible budget (annotator caps exhausted)");
    const PreferenceLabel yt = ground_truth_label(truth.clip_scores[static_cast<size_t>(c1)],
                                                  truth.clip_scores[static_cast<size_t>(c2)],
                                                  truth.tie_epsilon);
    truth.query_truth[c1 < c2 ? QueryKey{c1, c2} : QueryKey{c2, c1}] = yt;

    std::vector<uint32_t> chosen;
    std::set<uint32_t> chosen_set;
    while (static_cast<int>(chosen.size()) < labels_per_query) {
      const uint32_t w = eligible[assign_rng.uniform_int(eligible.size())];
      if (chosen_set.insert(w).second) chosen.push_back(w);
    }
    for (uint32_t w : chosen) {
      PreferenceRecord rec;
      rec.clip1 = c1;
      rec.clip2 = c2;
      rec.annotator = w;
      rec.label = annotate(profiles[w], yt, label_rng);
      records.push_back(rec);
      truth.record_truth.push_back(yt);
      if (++used[w] >= config.max_queries_per_annotator) {
        auto it = std::find(eligible.begin(), eligible.end(), w);
        std::swap(*it, eligible.back());
        eligible.pop_back();
      }
    }
  }

  BuiltDataset out{make_dataset(clips, std::move(records), config.n_annotators), std::move(truth)};
  return out;
}

inline std::vector<TruthRow> truth_rows(const PreferenceDataset& ds, const DatasetTruth& truth) {
  std::vector<TruthRow> rows;
  rows.reserve(ds.records.size());
  for (int i = 0; i < ds.size(); ++i) {
    TruthRow t;
    t.record = ds.records[static_cast<size_t>(i)];
    t.true_label = truth.record_truth[static_cast<size_t>(i)];
    t.ability = truth.abilities[t.record.annotator];
    rows.push_back(t);
  }
  return rows;
}

}  // namespace crowdpref
