#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace crowdpref {

/// Three-valued preference judgment on an ordered clip pair.
enum class PreferenceLabel : int { Succ = 0, Approx = 1, Prec = 2 };

/// Soft target for the cross-entropy losses: Succ -> 1, Approx -> 0.5, Prec -> 0.
inline double soft_label(PreferenceLabel y) {
  switch (y) {
    case PreferenceLabel::Succ: return 1.0;
    case PreferenceLabel::Approx: return 0.5;
    case PreferenceLabel::Prec: return 0.0;
  }
  throw std::invalid_argument("soft_label: bad label");
}

inline const char* label_to_string(PreferenceLabel y) {
  switch (y) {
    case PreferenceLabel::Succ: return "succ";
    case PreferenceLabel::Approx: return "approx";
    case PreferenceLabel::Prec: return "prec";
  }
  throw std::invalid_argument("label_to_string: bad label");
}

inline PreferenceLabel label_from_string(const std::string& s) {
  if (s == "succ") return PreferenceLabel::Succ;
  if (s == "approx") return PreferenceLabel::Approx;
  if (s == "prec") return PreferenceLabel::Prec;
  throw std::invalid_argument("label_from_string: unknown label '" + s + "'");
}

struct ClipStep {
  int state = 0;
  int action = 0;
  bool operator==(const ClipStep&) const = default;
};

/// Fixed-length window of (state, action) pairs cut from a trajectory.
struct Clip {
  int id = 0;
  std::vector<ClipStep> steps;
  int length() const { return static_cast<int>(steps.size()); }
  bool operator==(const Clip&) const = default;
};

/// Id-addressable clip store; clip ids are dense indices into `clips`.
struct ClipStore {
  std::vector<Clip> clips;

  int size() const { return static_cast<int>(clips.size()); }
  const Clip& at(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("ClipStore: bad clip id");
    return clips[static_cast<size_t>(id)];
  }

  /// Shared clip length; all clips in one store have the same T_c.
  int t_c() const {
    if (clips.empty()) throw std::runtime_error("ClipStore: empty store has no clip length");
    return clips.front().length();
  }

  void validate() const {
    for (int i = 0; i < size(); ++i) {
      const Clip& c = clips[static_cast<size_t>(i)];
      if (c.id != i) throw std::invalid_argument("ClipStore: clip ids must be dense indices");
      if (c.steps.empty()) throw std::invalid_argument("ClipStore: clip length must be >= 1");
      if (c.length() != clips.front().length())
        throw std::invalid_argument("ClipStore: clips must share one length");
    }
  }
};

/// Reserved annotator id for majority-vote-collapsed records.
inline constexpr uint32_t kCollapsedAnnotator = std::numeric_limits<uint32_t>::max();

/// One annotator's label on one ordered clip pair.
struct PreferenceRecord {
  int clip1 = 0;  // first member of the ordered query
  int clip2 = 0;  // second member
  PreferenceLabel label = PreferenceLabel::Approx;
  uint32_t annotator = 0;
  bool operator==(const PreferenceRecord&) const = default;
};

/// Unordered query key: (smaller clip id, larger clip id).
using QueryKey = std::pair<int, int>;

inline QueryKey query_key(const PreferenceRecord& r) {
  return r.clip1 < r.clip2 ? QueryKey{r.clip1, r.clip2} : QueryKey{r.clip2, r.clip1};
}

/// Preference dataset with a co-label index over queries.
///
/// Every record is indexed under its unordered query key. All records of one
/// key must share the same orientation (the simulator emits exactly one
/// orientation per query); mixed orientations are rejected at construction.
struct PreferenceDataset {
  ClipStore clips;
  std::vector<PreferenceRecord> records;
  std::map<QueryKey, std::vector<int>> query_index;
  std::vector<std::vector<int>> siblings;  // per record: other record indices on the same query
  int n_annotators = 0;

  int size() const { return static_cast<int>(records.size()); }
  const PreferenceRecord& record(int i) const {
    if (i < 0 || i >= size()) throw std::out_of_range("PreferenceDataset: bad record index");
    return records[static_cast<size_t>(i)];
  }
};

inline PreferenceDataset make_dataset(ClipStore clips, std::vector<PreferenceRecord> records,
                                      int n_annotators = 0) {
  clips.validate();
  PreferenceDataset ds;
  ds.clips = std::move(clips);
  ds.records = std::move(records);

  uint32_t max_id = 0;
  bool any_real_annotator = false;
  for (int i = 0; i < ds.size(); ++i) {
    const PreferenceRecord& r = ds.records[static_cast<size_t>(i)];
    if (r.clip1 == r.clip2)
      throw std::invalid_argument("make_dataset: query clips must be distinct");
    if (r.clip1 < 0 || r.clip1 >= ds.clips.size() || r.clip2 < 0 || r.clip2 >= ds.clips.size())
      throw std::invalid_argument("make_dataset: record references unknown clip id");
    const QueryKey key = query_key(r);
    auto& bucket = ds.query_index[key];
    if (!bucket.empty()) {
      const PreferenceRecord& first = ds.records[static_cast<size_t>(bucket.front())];
      if (first.clip1 != r.clip1)
        throw std::invalid_argument("make_dataset: mixed query orientations for one key");
    }
    bucket.push_back(i);
    if (r.annotator != kCollapsedAnnotator) {
      any_real_annotator = true;
      max_id = std::max(max_id, r.annotator);
    }
  }

  ds.n_annotators = n_annotators > 0 ? n_annotators : (any_real_annotator ? static_cast<int>(max_id) + 1 : 0);
  for (const PreferenceRecord& r : ds.records) {
    if (r.annotator != kCollapsedAnnotator && static_cast<int>(r.annotator) >= ds.n_annotators)
      throw std::invalid_argument("make_dataset: annotator id out of range");
  }

  ds.siblings.resize(ds.records.size());
  for (const auto& [key, bucket] : ds.query_index) {
    for (int i : bucket) {
      auto& sibs = ds.siblings[static_cast<size_t>(i)];
      sibs.reserve(bucket.size() - 1);
      for (int j : bucket)
        if (j != i) sibs.push_back(j);
    }
  }
  return ds;
}

/// C_i: the other (label, annotator) pairs on record i's query.
inline std::vector<std::pair<PreferenceLabel, uint32_t>> colabels(const PreferenceDataset& ds,
                                                                  int i) {
  ds.record(i);  // range check
  const std::vector<int>& sibs = ds.siblings[static_cast<size_t>(i)];
  std::vector<std::pair<PreferenceLabel, uint32_t>> out;
  out.reserve(sibs.size());
  for (int j : sibs) {
    const PreferenceRecord& r = ds.records[static_cast<size_t>(j)];
    out.emplace_back(r.label, r.annotator);
  }
  return out;
}

}  // namespace crowdpref
