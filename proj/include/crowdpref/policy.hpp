#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "crowdpref/core.hpp"
#include "crowdpref/envgen.hpp"
#include "crowdpref/nnet.hpp"
#include "crowdpref/rng.hpp"
#include "crowdpref/stats.hpp"

namespace crowdpref {

struct Transition {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next_state = 0;
  bool terminal = false;
};

struct TransitionSet {
  std::vector<Transition> items;
};

using RewardFn = std::function<double(int state, int action)>;

inline RewardFn reward_fn_of(const RewardNet& net) {
  return [&net](int s, int a) { return net.forward(s, a); };
}

inline RewardFn reward_fn_of(const Mdp& mdp) {
  return [&mdp](int s, int a) { return mdp.r(s, a); };
}

/// Consecutive steps within each clip become transitions rewarded by the
/// estimated reward function. Clip boundaries are non-terminal cuts: the last
/// step of a clip emits no transition, and nothing is stitched across clips.
inline TransitionSet relabel(const std::vector<Clip>& clips, const RewardFn& reward) {
  TransitionSet out;
  for (const Clip& c : clips) {
    for (size_t t = 0; t + 1 < c.steps.size(); ++t) {
      Transition tr;
      tr.state = c.steps[t].state;
      tr.action = c.steps[t].action;
      tr.reward = reward(tr.state, tr.action);
      tr.next_state = c.steps[t + 1].state;
      tr.terminal = false;
      if (!std::isfinite(tr.reward)) throw std::runtime_error("relabel: non-finite reward");
      out.items.push_back(tr);
    }
  }
  return out;
}

inline TransitionSet relabel(const std::vector<Clip>& clips, const RewardNet& net) {
  return relabel(clips, reward_fn_of(net));
}

struct QTable {
  int n_states = 0;
  int n_actions = 0;
  Vec q;

  QTable() = default;
  QTable(int states, int actions)
      : n_states(states), n_actions(actions), q(static_cast<size_t>(states) * actions, 0.0) {}
  double& at(int s, int a) { return q[static_cast<size_t>(s) * n_actions + a]; }
  double at(int s, int a) const { return q[static_cast<size_t>(s) * n_actions + a]; }
  double max_over_actions(int s) const {
    double best = at(s, 0);
    for (int a = 1; a < n_actions; ++a) best = std::max(best, at(s, a));
    return best;
  }
  /// Greedy action; ties resolve to the lowest action index.
  int greedy(int s) const {
    int best = 0;
    for (int a = 1; a < n_actions; ++a)
      if (at(s, a) > at(s, best)) best = a;
    return best;
  }
};

struct LearningRateSchedule {
  enum class Kind { Constant, Harmonic };
  Kind kind = Kind::Constant;
  double base = 1.0;  // Constant: lr = base; Harmonic: lr = base / visit_count(s,a)
};

/// Q-learning sweeps over the fixed transition set, in data order. With the
/// constant-1.0 schedule on deterministic data this converges to the value
/// iteration fixed point of the empirical model; the harmonic schedule
/// averages targets for stochastic data.
inline QTable offline_q_learning(const TransitionSet& transitions, int n_states, int n_actions,
                                 double gamma, int sweeps,
                                 LearningRateSchedule schedule = {}) {
  if (gamma <= 0.0 || gamma >= 1.0)
    throw std::invalid_argument("offline_q_learning: gamma must be in (0,1)");
  if (sweeps < 1) throw std::invalid_argument("offline_q_learning: sweeps must be >= 1");
  QTable table(n_states, n_actions);
  std::vector<long long> visits(static_cast<size_t>(n_states) * n_actions, 0);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (const Transition& tr : transitions.items) {
      double lr = schedule.base;
      if (schedule.kind == LearningRateSchedule::Kind::Harmonic) {
        auto& k = visits[static_cast<size_t>(tr.state) * n_actions + tr.action];
        lr = schedule.base / static_cast<double>(++k);
      }
      const double target =
          tr.reward + (tr.terminal ? 0.0 : gamma * table.max_over_actions(tr.next_state));
      double& q = table.at(tr.state, tr.action);
      q += lr * (target - q);
    }
  }
  return table;
}

/// Mean undiscounted true-reward return of the greedy policy over seeded
/// episodes.
inline double evaluate_policy(const Mdp& mdp, const QTable& table, int episodes, int horizon,
                              uint64_t seed) {
  if (episodes < 1 || horizon < 1)
    throw std::invalid_argument("evaluate_policy: episodes and horizon must be >= 1");
  if (table.n_states != mdp.n_states || table.n_actions != mdp.n_actions)
    throw std::invalid_argument("evaluate_policy: Q table does not match the MDP");
  Rng rng(seed);
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    int s = sample_index(mdp.start_distribution, rng);
    double ret = 0.0;
    for (int t = 0; t < horizon; ++t) {
      const int a = table.greedy(s);
      ret += mdp.r(s, a);
      std::span<const double> row(&mdp.transition[(static_cast<size_t>(s) * mdp.n_actions + a) *
                                                  mdp.n_states],
                                  static_cast<size_t>(mdp.n_states));
      s = sample_index(row, rng);
    }
    total += ret;
  }
  return total / static_cast<double>(episodes);
}

struct AlignmentReport {
  std::optional<double> pearson;
  std::optional<double> spearman;
};

/// Pearson and Spearman correlation between an estimated reward function and
/// the MDP's true reward, over the full (state, action) table. A constant
/// side leaves the corresponding correlation undefined.
inline AlignmentReport reward_alignment(const RewardFn& reward, const Mdp& mdp) {
  const size_t n = static_cast<size_t>(mdp.n_states) * mdp.n_actions;
  Vec learned(n), truth(n);
  size_t k = 0;
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a, ++k) {
      learned[k] = reward(s, a);
      truth[k] = mdp.r(s, a);
    }
  AlignmentReport report;
  report.pearson = pearson(learned, truth);
  report.spearman = spearman(learned, truth);
  return report;
}

inline AlignmentReport reward_alignment(const RewardNet& net, const Mdp& mdp) {
  return reward_alignment(reward_fn_of(net), mdp);
}

}  // namespace crowdpref
