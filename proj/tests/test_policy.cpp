#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "crowdpref/policy.hpp"

using namespace crowdpref;

namespace {

std::vector<Clip> rollout_clips(const Mdp& mdp, int n, int t_c, uint64_t seed) {
  std::vector<Trajectory> trajs;
  for (int i = 0; i < n; ++i)
    trajs.push_back(rollout(mdp, uniform_policy(mdp.n_actions), 4 * t_c, Rng::mix(seed, i)));
  return clip_trajectories(trajs, t_c);
}

}  // namespace

TEST_CASE("relabel emits one transition per consecutive step pair") {
  const Mdp mdp = build_gridworld(4, 4, {{3, 3}}, {}, 0);
  const auto clips = rollout_clips(mdp, 3, 30, 2);
  RewardNet net(mdp.n_states, 4, 8);
  net.init_zero();
  const TransitionSet ts = relabel(clips, net);
  CHECK(ts.items.size() == clips.size() * 29);  // fencepost per clip
  for (const Transition& tr : ts.items) {
    CHECK(tr.reward == 0.0);  // zero net
    CHECK_FALSE(tr.terminal);
  }
}

TEST_CASE("relabeling with the true reward matches the MDP table") {
  const Mdp mdp = build_gridworld(5, 5, {{4, 4}}, {{2, 2}}, 0);
  const auto clips = rollout_clips(mdp, 4, 20, 3);
  const TransitionSet ts = relabel(clips, reward_fn_of(mdp));
  for (const Transition& tr : ts.items) CHECK(tr.reward == mdp.r(tr.state, tr.action));
}

TEST_CASE("q-learning fixes a single terminal transition") {
  TransitionSet ts;
  ts.items.push_back({0, 1, 0.7, 0, true});
  const QTable q = offline_q_learning(ts, 1, 2, 0.9, 50);
  CHECK(q.at(0, 1) == Catch::Approx(0.7).margin(1e-12));
}

TEST_CASE("q-learning matches value iteration on a deterministic chain") {
  // Two states; action 0 hops, action 1 stays. Staying in state 1 pays 1.
  Mdp mdp;
  mdp.n_states = 2;
  mdp.n_actions = 2;
  mdp.gamma = 0.9;
  mdp.transition = {
      0.0, 1.0,  // s0 a0 -> s1
      1.0, 0.0,  // s0 a1 -> s0
      1.0, 0.0,  // s1 a0 -> s0
      0.0, 1.0,  // s1 a1 -> s1
  };
  mdp.true_reward = {0.0, -0.1, 0.2, 1.0};
  mdp.start_distribution = {1.0, 0.0};
  mdp.validate();

  TransitionSet ts;
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) {
      const int s2 = mdp.p(s, a, 1) == 1.0 ? 1 : 0;
      ts.items.push_back({s, a, mdp.r(s, a), s2, false});
    }
  const QTable q = offline_q_learning(ts, 2, 2, mdp.gamma, 400);
  const ValueSolution sol = value_iteration(mdp, 1e-13);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a)
      CHECK(q.at(s, a) == Catch::Approx(sol.q[s * 2 + a]).margin(1e-6));
}

TEST_CASE("full-coverage true-reward transitions recover the optimal policy") {
  const Mdp mdp = build_gridworld(4, 4, {{3, 3}}, {{1, 1}}, 0);
  TransitionSet ts;
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      int s2 = 0;
      for (int k = 0; k < mdp.n_states; ++k)
        if (mdp.p(s, a, k) == 1.0) s2 = k;
      ts.items.push_back({s, a, mdp.r(s, a), s2, false});
    }
  const QTable q = offline_q_learning(ts, mdp.n_states, mdp.n_actions, mdp.gamma, 500);
  const ValueSolution sol = value_iteration(mdp, 1e-13);
  for (int s = 0; s < mdp.n_states; ++s) CHECK(q.greedy(s) == sol.greedy[s]);
}

TEST_CASE("harmonic schedule averages stochastic targets") {
  // One state-action with two equally likely rewards; Q converges to the mean.
  TransitionSet ts;
  ts.items.push_back({0, 0, 1.0, 0, true});
  ts.items.push_back({0, 0, 0.0, 0, true});
  const QTable q = offline_q_learning(ts, 1, 1, 0.5, 1000,
                                      {LearningRateSchedule::Kind::Harmonic, 1.0});
  CHECK(q.at(0, 0) == Catch::Approx(0.5).margin(1e-9));
}

TEST_CASE("evaluate_policy on a zero-reward MDP returns zero") {
  const Mdp mdp = build_gridworld(3, 3, {}, {}, 0);
  QTable q(mdp.n_states, mdp.n_actions);
  CHECK(evaluate_policy(mdp, q, 20, 50, 1) == 0.0);
}

TEST_CASE("optimal policy on a corridor earns one unit per episode") {
  // Start anywhere on a 4-cell corridor; the goal is at most 3 steps away.
  const Mdp mdp = build_gridworld(4, 1, {{3, 0}}, {}, 0);
  TransitionSet ts;
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      int s2 = 0;
      for (int k = 0; k < mdp.n_states; ++k)
        if (mdp.p(s, a, k) == 1.0) s2 = k;
      ts.items.push_back({s, a, mdp.r(s, a), s2, false});
    }
  const QTable q = offline_q_learning(ts, mdp.n_states, mdp.n_actions, mdp.gamma, 300);
  CHECK(evaluate_policy(mdp, q, 50, 10, 3) == 1.0);

  // Determinism across identical evaluations.
  CHECK(evaluate_policy(mdp, q, 50, 10, 3) == evaluate_policy(mdp, q, 50, 10, 3));
}

TEST_CASE("returns are bounded by horizon times the reward magnitude") {
  const Mdp mdp = build_gridworld(4, 4, {{0, 0}}, {{2, 2}}, 0);
  QTable q(mdp.n_states, mdp.n_actions);
  Rng rng(5);
  for (double& x : q.q) x = rng.normal();
  const double ret = evaluate_policy(mdp, q, 40, 60, 9);
  CHECK(std::abs(ret) <= 60.0);
}

TEST_CASE("reward_alignment recognizes the true table and its transforms") {
  const Mdp mdp = build_gridworld(5, 5, {{4, 4}}, {{1, 3}}, 0);
  const AlignmentReport exact = reward_alignment(reward_fn_of(mdp), mdp);
  REQUIRE(exact.pearson.has_value());
  REQUIRE(exact.spearman.has_value());
  CHECK(*exact.pearson == Catch::Approx(1.0).margin(1e-12));
  CHECK(*exact.spearman == Catch::Approx(1.0).margin(1e-12));

  const AlignmentReport negated =
      reward_alignment([&](int s, int a) { return -mdp.r(s, a); }, mdp);
  CHECK(*negated.pearson == Catch::Approx(-1.0).margin(1e-12));
  CHECK(*negated.spearman == Catch::Approx(-1.0).margin(1e-12));

  const AlignmentReport shifted =
      reward_alignment([&](int s, int a) { return mdp.r(s, a) + 5.0; }, mdp);
  CHECK(*shifted.pearson == Catch::Approx(1.0).margin(1e-12));
  CHECK(*shifted.spearman == Catch::Approx(1.0).margin(1e-12));

  // Constant learned reward leaves Pearson undefined.
  const AlignmentReport flat = reward_alignment([](int, int) { return 0.25; }, mdp);
  CHECK_FALSE(flat.pearson.has_value());
  CHECK_FALSE(flat.spearman.has_value());
}
