#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "crowdpref/core.hpp"

namespace crowdpref {

/// Shortest round-trip-exact decimal form of a double.
inline std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return in;
}

// ---- clips: one line per clip, `clip_id` then `state:action` pairs ----

inline void save_clips(const std::string& path, const ClipStore& store) {
  auto out = open_out(path);
  for (const Clip& c : store.clips) {
    out << c.id;
    for (const ClipStep& s : c.steps) out << ' ' << s.state << ':' << s.action;
    out << '\n';
  }
}

inline ClipStore load_clips(const std::string& path) {
  auto in = open_in(path);
  ClipStore store;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Clip c;
    if (!(ls >> c.id)) throw std::runtime_error("clips file: bad clip id line");
    std::string tok;
    while (ls >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) throw std::runtime_error("clips file: bad step token");
      ClipStep step;
      step.state = std::stoi(tok.substr(0, colon));
      step.action = std::stoi(tok.substr(colon + 1));
      c.steps.push_back(step);
    }
    store.clips.push_back(std::move(c));
  }
  store.validate();
  return store;
}

// ---- records: `clip1_id,clip2_id,label,annotator_id` per line ----

inline void save_records(const std::string& path, const std::vector<PreferenceRecord>& records) {
  auto out = open_out(path);
  for (const PreferenceRecord& r : records)
    out << r.clip1 << ',' << r.clip2 << ',' << label_to_string(r.label) << ',' << r.annotator
        << '\n';
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::vector<PreferenceRecord> load_records(const std::string& path) {
  auto in = open_in(path);
  std::vector<PreferenceRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 4) throw std::runtime_error("records file: expected 4 fields per line");
    PreferenceRecord r;
    r.clip1 = std::stoi(f[0]);
    r.clip2 = std::stoi(f[1]);
    r.label = label_from_string(f[2]);
    r.annotator = static_cast<uint32_t>(std::stoul(f[3]));
    records.push_back(r);
  }
  return records;
}

// ---- hidden truth: record line plus `true_label,ability` columns ----

struct TruthRow {
  PreferenceRecord record;
  PreferenceLabel true_label = PreferenceLabel::Approx;
  double ability = 0.0;
};

inline void save_truth(const std::string& path, const std::vector<TruthRow>& rows) {
  auto out = open_out(path);
  for (const TruthRow& t : rows)
    out << t.record.clip1 << ',' << t.record.clip2 << ',' << label_to_string(t.record.label) << ','
        << t.record.annotator << ',' << label_to_string(t.true_label) << ','
        << fmt_double(t.ability) << '\n';
}

inline std::vector<TruthRow> load_truth(const std::string& path) {
  auto in = open_in(path);
  std::vector<TruthRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 6) throw std::runtime_error("truth file: expected 6 fields per line");
    TruthRow t;
    t.record.clip1 = std::stoi(f[0]);
    t.record.clip2 = std::stoi(f[1]);
    t.record.label = label_from_string(f[2]);
    t.record.annotator = static_cast<uint32_t>(std::stoul(f[3]));
    t.true_label = label_from_string(f[4]);
    t.ability = std::stod(f[5]);
    rows.push_back(t);
  }
  return rows;
}

// ---- true clip scores sidecar: `clip_id,true_score` per line ----

inline void save_clip_scores(const std::string& path, const std::vector<double>& scores) {
  auto out = open_out(path);
  for (size_t i = 0; i < scores.size(); ++i) out << i << ',' << fmt_double(scores[i]) << '\n';
}

inline std::vector<double> load_clip_scores(const std::string& path) {
  auto in = open_in(path);
  std::vector<double> scores;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 2) throw std::runtime_error("clip scores file: expected 2 fields per line");
    if (std::stoul(f[0]) != scores.size())
      throw std::runtime_error("clip scores file: ids must be dense and ordered");
    scores.push_back(std::stod(f[1]));
  }
  return scores;
}

}  // namespace crowdpref
