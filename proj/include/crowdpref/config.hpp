#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crowdpref/crowd.hpp"
#include "crowdpref/envgen.hpp"
#include "crowdpref/prefmodels.hpp"

namespace crowdpref {

struct EnvConfig {
  int width = 5;
  int height = 5;
  std::vector<Cell> goals;
  std::vector<Cell> hazards;
  uint64_t seed = 0;
  double gamma = 0.95;
};

struct DataConfig {
  int n_trajectories = 200;
  int horizon = 120;
  int t_c = 30;
  int n_clips = 500;
  int n_queries = 300;
};

struct EvalConfig {
  int episodes = 200;
  int horizon = 100;
  int q_sweeps = 300;
  double q_lr = 1.0;
};

struct RunConfig {
  std::vector<uint64_t> seeds = {1};
  std::string output_dir = "out";
  std::vector<std::string> variants = {"bt", "mv", "crowd-bt", "dcbt-no-collab", "dcbt"};
  bool include_true_baseline = true;
};

struct ExperimentConfig {
  EnvConfig env;
  DataConfig data;
  CrowdConfig crowd;
  int labels_per_query = 5;  // crowd section key
  TrainConfig train;
  std::string train_variant = "dcbt";  // accepts the model variants plus "mv"
  EvalConfig eval;
  RunConfig run;

  void validate() const {
    if (run.seeds.empty()) throw std::invalid_argument("config: run.seeds must be nonempty");
    if (run.output_dir.empty()) throw std::invalid_argument("config: run.output_dir must be set");
    if (data.n_trajectories < 1 || data.horizon < 1 || data.t_c < 1 || data.n_clips < 1 ||
        data.n_queries < 1)
      throw std::invalid_argument("config: data section values must be >= 1");
    if (data.horizon < data.t_c)
      throw std::invalid_argument("config: data.horizon must be >= data.t_c");
    if (labels_per_query < 1)
      throw std::invalid_argument("config: crowd.labels_per_query must be >= 1");
    if (eval.episodes < 1 || eval.horizon < 1 || eval.q_sweeps < 1)
      throw std::invalid_argument("config: eval section values must be >= 1");
    if (env.width < 1 || env.height < 1) throw std::invalid_argument("config: empty grid");
    crowd.validate();
    train.validate();
    for (const std::string& v : run.variants)
      if (v != "mv") variant_from_string(v);
    if (train_variant != "mv") variant_from_string(train_variant);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  size_t e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline long long to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
  }
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": '" + v + "'");
}

/// Cells as whitespace-separated `x,y` tokens, e.g. `goals = 6,6 3,4`.
inline std::vector<Cell> to_cells(const std::string& key, const std::string& v) {
  std::vector<Cell> cells;
  for (const std::string& tok : split_ws(v)) {
    const size_t comma = tok.find(',');
    if (comma == std::string::npos)
      throw std::invalid_argument("config: bad cell for " + key + ": '" + tok + "'");
    Cell c;
    c.first = static_cast<int>(to_int(key, tok.substr(0, comma)));
    c.second = static_cast<int>(to_int(key, tok.substr(comma + 1)));
    cells.push_back(c);
  }
  return cells;
}

}  // namespace detail

/// Flat sectioned key-value format: `[section]` headers, `key = value` lines,
/// `#` comments. Unknown sections or keys are rejected.
inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string section;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config: bad section header at line " + std::to_string(lineno));
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "env" && section != "data" && section != "crowd" && section != "train" &&
          section != "eval" && section != "run")
        throw std::invalid_argument("config: unknown section [" + section + "]");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key = value at line " + std::to_string(lineno));
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const std::string qual = section + "." + key;

    using detail::to_bool;
    using detail::to_cells;
    using detail::to_double;
    using detail::to_int;

    if (section == "env") {
      if (key == "width") cfg.env.width = static_cast<int>(to_int(qual, value));
      else if (key == "height") cfg.env.height = static_cast<int>(to_int(qual, value));
      else if (key == "goals") cfg.env.goals = to_cells(qual, value);
      else if (key == "hazards") cfg.env.hazards = to_cells(qual, value);
      else if (key == "seed") cfg.env.seed = static_cast<uint64_t>(to_int(qual, value));
      else if (key == "gamma") cfg.env.gamma = to_double(qual, value);
      else throw std::invalid_argument("config: unknown key " + qual);
    } else if (section == "data") {
      if (key == "n_trajectories") cfg.data.n_trajectories = static_cast<int>(to_int(qual, value));
      else if (key == "horizon") cfg.data.horizon = static_cast<int>(to_int(qual, value));
      else if (key == "t_c") cfg.data.t_c = static_cast<int>(to_int(qual, value));
      else if (key == "n_clips") cfg.data.n_clips = static_cast<int>(to_int(qual, value));
      else if (key == "n_queries") cfg.data.n_queries = static_cast<int>(to_int(qual, value));
      else throw std::invalid_argument("config: unknown key " + qual);
    } else if (section == "crowd") {
      if (key == "n_annotators") cfg.crowd.n_annotators = static_cast<int>(to_int(qual, value));
      else if (key == "labels_per_query") cfg.labels_per_query = static_cast<int>(to_int(qual, value));
      else if (key == "max_queries_per_annotator")
        cfg.crowd.max_queries_per_annotator = static_cast<int>(to_int(qual, value));
      else if (key == "max_annotators_per_query")
        cfg.crowd.max_annotators_per_query = static_cast<int>(to_int(qual, value));
      else if (key == "tie_epsilon") {
        if (value == "auto") {
          cfg.crowd.tie_epsilon_auto = true;
        } else {
          cfg.crowd.tie_epsilon_auto = false;
          cfg.crowd.tie_epsilon = to_double(qual, value);
        }
      } else if (key == "beta_a") cfg.crowd.beta_a = static_cast<int>(to_int(qual, value));
      else if (key == "beta_b") cfg.crowd.beta_b = static_cast<int>(to_int(qual, value));
      else if (key == "seed") cfg.crowd.seed = static_cast<uint64_t>(to_int(qual, value));
      else throw std::invalid_argument("config: unknown key " + qual);
    } else if (section == "train") {
      if (key == "variant") cfg.train_variant = value;
      else if (key == "t_total") cfg.train.t_total = static_cast<int>(to_int(qual, value));
      else if (key == "t_init") cfg.train.t_init = static_cast<int>(to_int(qual, value));
      else if (key == "t_alt") cfg.train.t_alt = static_cast<int>(to_int(qual, value));
      else if (key == "beta") cfg.train.beta = to_double(qual, value);
      else if (key == "alpha_bar") cfg.train.alpha_bar = to_double(qual, value);
      else if (key == "lambda1") cfg.train.lambda1 = to_double(qual, value);
      else if (key == "lambda2") cfg.train.lambda2 = to_double(qual, value);
      else if (key == "batch_size") cfg.train.batch_size = static_cast<int>(to_int(qual, value));
      else if (key == "learning_rate") cfg.train.learning_rate = to_double(qual, value);
      else if (key == "embed_dim") cfg.train.embed_dim = static_cast<int>(to_int(qual, value));
      else if (key == "hidden") cfg.train.hidden = static_cast<int>(to_int(qual, value));
      else if (key == "detach_pbt_in_alpha") cfg.train.detach_pbt_in_alpha = to_bool(qual, value);
      else throw std::invalid_argument("config: unknown key " + qual);
    } else if (section == "eval") {
      if (key == "episodes") cfg.eval.episodes = static_cast<int>(to_int(qual, value));
      else if (key == "horizon") cfg.eval.horizon = static_cast<int>(to_int(qual, value));
      else if (key == "q_sweeps") cfg.eval.q_sweeps = static_cast<int>(to_int(qual, value));
      else if (key == "q_lr") cfg.eval.q_lr = to_double(qual, value);
      else throw std::invalid_argument("config: unknown key " + qual);
    } else if (section == "run") {
      if (key == "seeds") {
        cfg.run.seeds.clear();
        for (const std::string& tok : detail::split_ws(value))
          cfg.run.seeds.push_back(static_cast<uint64_t>(to_int(qual, tok)));
      } else if (key == "output_dir") cfg.run.output_dir = value;
      else if (key == "variants") cfg.run.variants = detail::split_ws(value);
      else if (key == "include_true_baseline")
        cfg.run.include_true_baseline = to_bool(qual, value);
      else throw std::invalid_argument("config: unknown key " + qual);
    } else {
      throw std::invalid_argument("config: key outside any section at line " +
                                  std::to_string(lineno));
    }
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return parse_config(in);
}

}  // namespace crowdpref
