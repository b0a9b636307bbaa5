#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <set>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "crowdpref/core.hpp"
#include "crowdpref/rng.hpp"

namespace crowdpref {

/// Tabular MDP with dense transition and reward tables.
struct Mdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> transition;   // [s * A * S + a * S + s']
  std::vector<double> true_reward;  // [s * A + a]
  double gamma = 0.95;
  std::vector<double> start_distribution;

  double p(int s, int a, int s2) const {
    return transition[(static_cast<size_t>(s) * n_actions + a) * n_states + s2];
  }
  double& p(int s, int a, int s2) {
    return transition[(static_cast<size_t>(s) * n_actions + a) * n_states + s2];
  }
  double r(int s, int a) const { return true_reward[static_cast<size_t>(s) * n_actions + a]; }
  double& r(int s, int a) { return true_reward[static_cast<size_t>(s) * n_actions + a]; }

  void validate() const {
    if (n_states <= 0 || n_actions <= 0) throw std::invalid_argument("Mdp: empty state/action space");
    if (gamma <= 0.0 || gamma >= 1.0) throw std::invalid_argument("Mdp: gamma must be in (0,1)");
    for (int s = 0; s < n_states; ++s)
      for (int a = 0; a < n_actions; ++a) {
        double sum = 0.0;
        for (int s2 = 0; s2 < n_states; ++s2) sum += p(s, a, s2);
        if (std::abs(sum - 1.0) > 1e-9)
          throw std::invalid_argument("Mdp: transition row does not sum to 1");
      }
    double sum = 0.0;
    for (double w : start_distribution) sum += w;
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("Mdp: start distribution does not sum to 1");
  }
};

using Cell = std::pair<int, int>;  // (x, y)

/// Deterministic gridworld. Four move actions (+x, -x, +y, -y); moves off the
/// grid stay in place. Entering a goal cell pays +1 and goals are absorbing;
/// entering a hazard cell pays -1; everything else pays 0.
/// The seed is accepted for interface stability; construction is deterministic.
inline Mdp build_gridworld(int width, int height, const std::vector<Cell>& goals,
                           const std::vector<Cell>& hazards, uint64_t seed, double gamma = 0.95) {
  (void)seed;
  if (width < 1 || height < 1) throw std::invalid_argument("build_gridworld: empty grid");
  auto in_grid = [&](const Cell& c) {
    return c.first >= 0 && c.first < width && c.second >= 0 && c.second < height;
  };
  std::set<Cell> goal_set(goals.begin(), goals.end());
  std::set<Cell> hazard_set(hazards.begin(), hazards.end());
  for (const Cell& c : goal_set)
    if (!in_grid(c)) throw std::invalid_argument("build_gridworld: goal cell outside grid");
  for (const Cell& c : hazard_set) {
    if (!in_grid(c)) throw std::invalid_argument("build_gridworld: hazard cell outside grid");
    if (goal_set.count(c)) throw std::invalid_argument("build_gridworld: goal and hazard cells overlap");
  }

  Mdp mdp;
  mdp.n_states = width * height;
  mdp.n_actions = 4;
  mdp.gamma = gamma;
  mdp.transition.assign(static_cast<size_t>(mdp.n_states) * mdp.n_actions * mdp.n_states, 0.0);
  mdp.true_reward.assign(static_cast<size_t>(mdp.n_states) * mdp.n_actions, 0.0);

  auto state_of = [&](const Cell& c) { return c.second * width + c.first; };
  constexpr int dx[4] = {+1, -1, 0, 0};
  constexpr int dy[4] = {0, 0, +1, -1};

  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const Cell here{x, y};
      const int s = state_of(here);
      const bool absorbed = goal_set.count(here) > 0;
      for (int a = 0; a < 4; ++a) {
        Cell dest{x + dx[a], y + dy[a]};
        if (absorbed || !in_grid(dest)) dest = here;
        mdp.p(s, a, state_of(dest)) = 1.0;
        if (!absorbed) {
          if (goal_set.count(dest)) mdp.r(s, a) = 1.0;
          else if (hazard_set.count(dest)) mdp.r(s, a) = -1.0;
        }
      }
    }

  // Start uniformly from plain cells; degenerate grids fall back to all cells.
  std::vector<int> starts;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (!goal_set.count({x, y}) && !hazard_set.count({x, y})) starts.push_back(state_of({x, y}));
  mdp.start_distribution.assign(static_cast<size_t>(mdp.n_states), 0.0);
  if (starts.empty())
    for (int s = 0; s < mdp.n_states; ++s) mdp.start_distribution[s] = 1.0 / mdp.n_states;
  else
    for (int s : starts) mdp.start_distribution[static_cast<size_t>(s)] = 1.0 / starts.size();

  mdp.validate();
  return mdp;
}

struct Trajectory {
  std::vector<ClipStep> steps;
  int length() const { return static_cast<int>(steps.size()); }
};

/// Maps a state to a distribution over actions.
using PolicyFn = std::function<std::vector<double>(int)>;

inline int sample_index(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform01();
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

inline Trajectory rollout(const Mdp& mdp, const PolicyFn& policy, int horizon, uint64_t seed) {
  if (horizon < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
  Rng rng(seed);
  Trajectory traj;
  traj.steps.reserve(static_cast<size_t>(horizon));
  int s = sample_index(mdp.start_distribution, rng);
  for (int t = 0; t < horizon; ++t) {
    const std::vector<double> probs = policy(s);
    if (static_cast<int>(probs.size()) != mdp.n_actions)
      throw std::invalid_argument("rollout: policy distribution has wrong arity");
    const int a = sample_index(probs, rng);
    traj.steps.push_back({s, a});
    std::span<const double> row(&mdp.transition[(static_cast<size_t>(s) * mdp.n_actions + a) *
                                                mdp.n_states],
                                static_cast<size_t>(mdp.n_states));
    s = sample_index(row, rng);
  }
  return traj;
}

/// Cuts each trajectory into non-overlapping windows of length t_c; the
/// trailing remainder is dropped. Clip ids are assigned densely in order.
inline std::vector<Clip> clip_trajectories(const std::vector<Trajectory>& trajectories, int t_c) {
  if (t_c < 1) throw std::invalid_argument("clip_trajectories: t_c must be >= 1");
  std::vector<Clip> clips;
  for (const Trajectory& traj : trajectories) {
    if (traj.length() < t_c)
      throw std::invalid_argument("clip_trajectories: trajectory shorter than t_c");
    const int n = traj.length() / t_c;
    for (int k = 0; k < n; ++k) {
      Clip c;
      c.id = static_cast<int>(clips.size());
      c.steps.assign(traj.steps.begin() + static_cast<ptrdiff_t>(k) * t_c,
                     traj.steps.begin() + static_cast<ptrdiff_t>(k + 1) * t_c);
      clips.push_back(std::move(c));
    }
  }
  return clips;
}

/// Mean of the true reward over the clip's (state, action) pairs.
inline double true_clip_score(const Clip& clip, const Mdp& mdp) {
  double sum = 0.0;
  for (const ClipStep& st : clip.steps) {
    if (st.state < 0 || st.state >= mdp.n_states || st.action < 0 || st.action >= mdp.n_actions)
      throw std::out_of_range("true_clip_score: step outside the MDP");
    sum += mdp.r(st.state, st.action);
  }
  return sum / static_cast<double>(clip.length());
}

struct ValueSolution {
  std::vector<double> v;       // [s]
  std::vector<double> q;       // [s * A + a]
  std::vector<int> greedy;     // [s], ties resolved to the lowest action index
};

inline ValueSolution value_iteration(const Mdp& mdp, double tol = 1e-10,
                                     int max_iters = 1000000) {
  ValueSolution sol;
  sol.v.assign(static_cast<size_t>(mdp.n_states), 0.0);
  sol.q.assign(static_cast<size_t>(mdp.n_states) * mdp.n_actions, 0.0);
  for (int it = 0; it < max_iters; ++it) {
    double delta = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < mdp.n_actions; ++a) {
        double q = mdp.r(s, a);
        for (int s2 = 0; s2 < mdp.n_states; ++s2) {
          const double w = mdp.p(s, a, s2);
          if (w != 0.0) q += mdp.gamma * w * sol.v[static_cast<size_t>(s2)];
        }
        sol.q[static_cast<size_t>(s) * mdp.n_actions + a] = q;
        best = std::max(best, q);
      }
      delta = std::max(delta, std::abs(best - sol.v[static_cast<size_t>(s)]));
      sol.v[static_cast<size_t>(s)] = best;
    }
    if (delta < tol) break;
  }
  sol.greedy.assign(static_cast<size_t>(mdp.n_states), 0);
  for (int s = 0; s < mdp.n_states; ++s) {
    int best_a = 0;
    for (int a = 1; a < mdp.n_actions; ++a)
      if (sol.q[static_cast<size_t>(s) * mdp.n_actions + a] >
          sol.q[static_cast<size_t>(s) * mdp.n_actions + best_a])
        best_a = a;
    sol.greedy[static_cast<size_t>(s)] = best_a;
  }
  return sol;
}

inline PolicyFn uniform_policy(int n_actions) {
  return [n_actions](int) { return std::vector<double>(n_actions, 1.0 / n_actions); };
}

inline PolicyFn epsilon_greedy_policy(std::vector<int> greedy, int n_actions, double eps) {
  return [greedy = std::move(greedy), n_actions, eps](int s) {
    std::vector<double> probs(static_cast<size_t>(n_actions), eps / n_actions);
    probs[static_cast<size_t>(greedy[static_cast<size_t>(s)])] += 1.0 - eps;
    return probs;
  };
}

}  // namespace crowdpref
