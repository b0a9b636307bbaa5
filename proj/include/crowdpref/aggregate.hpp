#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "crowdpref/core.hpp"
#include "crowdpref/crowd.hpp"
#include "crowdpref/rng.hpp"

namespace crowdpref {

struct VoteTally {
  std::array<int, 3> counts{0, 0, 0};  // indexed by PreferenceLabel

  void add(PreferenceLabel y) { ++counts[static_cast<size_t>(y)]; }
  int total() const { return counts[0] + counts[1] + counts[2]; }
};

/// Modal label; ties among the maxima are broken uniformly at random.
inline PreferenceLabel majority_vote(std::span<const PreferenceLabel> labels, Rng& rng) {
  if (labels.empty()) throw std::invalid_argument("majority_vote: empty label list");
  VoteTally tally;
  for (PreferenceLabel y : labels) tally.add(y);
  int best = 0;
  for (int c : tally.counts) best = std::max(best, c);
  std::vector<PreferenceLabel> tied;
  for (int k = 0; k < 3; ++k)
    if (tally.counts[static_cast<size_t>(k)] == best) tied.push_back(static_cast<PreferenceLabel>(k));
  if (tied.size() == 1) return tied.front();
  return tied[rng.uniform_int(tied.size())];
}

/// One record per query key, labeled by majority vote over that query's
/// records. Collapsed records carry the reserved sentinel annotator id.
inline PreferenceDataset mv_collapse(const PreferenceDataset& ds, uint64_t seed) {
  Rng rng(seed);
  std::vector<PreferenceRecord> collapsed;
  collapsed.reserve(ds.query_index.size());
  std::map<QueryKey, bool> done;
  for (const PreferenceRecord& rec : ds.records) {
    const QueryKey key = query_key(rec);
    if (done[key]) continue;
    done[key] = true;
    const std::vector<int>& bucket = ds.query_index.at(key);
    std::vector<PreferenceLabel> labels;
    labels.reserve(bucket.size());
    for (int j : bucket) labels.push_back(ds.records[static_cast<size_t>(j)].label);
    PreferenceRecord out;
    out.clip1 = rec.clip1;
    out.clip2 = rec.clip2;
    out.label = majority_vote(labels, rng);
    out.annotator = kCollapsedAnnotator;
    collapsed.push_back(out);
  }
  return make_dataset(ds.clips, std::move(collapsed), ds.n_annotators);
}

/// Fraction of labels differing from the hidden ground truth, looked up by
/// query key so raw and collapsed datasets share one code path.
inline double label_error_rate(const PreferenceDataset& ds, const DatasetTruth& truth) {
  if (ds.records.empty()) throw std::invalid_argument("label_error_rate: empty dataset");
  int wrong = 0;
  for (const PreferenceRecord& rec : ds.records) {
    const auto it = truth.query_truth.find(query_key(rec));
    if (it == truth.query_truth.end())
      throw std::runtime_error("label_error_rate: missing truth entry for a query");
    if (rec.label != it->second) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(ds.records.size());
}

}  // namespace crowdpref
