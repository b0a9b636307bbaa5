#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "crowdpref/envgen.hpp"

using namespace crowdpref;

TEST_CASE("1x1 grid has zero rewards and self-transitions only") {
  const Mdp mdp = build_gridworld(1, 1, {}, {}, 0);
  REQUIRE(mdp.n_states == 1);
  for (int a = 0; a < 4; ++a) {
    CHECK(mdp.r(0, a) == 0.0);
    CHECK(mdp.p(0, a, 0) == 1.0);
  }
}

TEST_CASE("goal-entering rewards match a brute-force enumeration") {
  // Interior goal: one +1 entry per entering direction.
  const Mdp interior = build_gridworld(5, 5, {{2, 2}}, {}, 0);
  int plus = 0;
  for (int s = 0; s < interior.n_states; ++s)
    for (int a = 0; a < 4; ++a)
      if (interior.r(s, a) == 1.0) ++plus;
  CHECK(plus == 4);

  // Corner goal: the enumeration oracle decides how many entries exist.
  const Mdp corner = build_gridworld(5, 5, {{4, 4}}, {}, 0);
  const int goal_state = 4 * 5 + 4;
  int expected = 0;
  for (int s = 0; s < corner.n_states; ++s)
    for (int a = 0; a < 4; ++a) {
      if (s == goal_state) continue;  // absorbed
      if (corner.p(s, a, goal_state) == 1.0) ++expected;
    }
  int got = 0;
  for (int s = 0; s < corner.n_states; ++s)
    for (int a = 0; a < 4; ++a)
      if (corner.r(s, a) == 1.0) ++got;
  CHECK(got == expected);
  CHECK(got == 2);
}

TEST_CASE("gridworld construction is deterministic") {
  const Mdp a = build_gridworld(4, 3, {{3, 2}}, {{1, 1}}, 17);
  const Mdp b = build_gridworld(4, 3, {{3, 2}}, {{1, 1}}, 17);
  CHECK(a.transition == b.transition);
  CHECK(a.true_reward == b.true_reward);
  CHECK(a.start_distribution == b.start_distribution);
}

TEST_CASE("gridworld rejects bad cells") {
  CHECK_THROWS_AS(build_gridworld(0, 3, {}, {}, 0), std::invalid_argument);
  CHECK_THROWS_AS(build_gridworld(3, 3, {{4, 0}}, {}, 0), std::invalid_argument);
  CHECK_THROWS_AS(build_gridworld(3, 3, {{1, 1}}, {{1, 1}}, 0), std::invalid_argument);
}

TEST_CASE("goals are absorbing") {
  const Mdp mdp = build_gridworld(3, 3, {{1, 1}}, {}, 0);
  const int goal = 1 * 3 + 1;
  for (int a = 0; a < 4; ++a) {
    CHECK(mdp.p(goal, a, goal) == 1.0);
    CHECK(mdp.r(goal, a) == 0.0);
  }
}

TEST_CASE("deterministic MDP and policy make rollouts seed-independent") {
  Mdp mdp;
  mdp.n_states = 1;
  mdp.n_actions = 2;
  mdp.transition = {1.0, 1.0};  // both actions self-transition
  mdp.true_reward = {0.0, 0.0};
  mdp.start_distribution = {1.0};
  mdp.validate();
  PolicyFn policy = [](int) { return std::vector<double>{0.0, 1.0}; };
  const Trajectory a = rollout(mdp, policy, 8, 1);
  const Trajectory b = rollout(mdp, policy, 8, 999);
  CHECK(a.steps == b.steps);
  for (const ClipStep& st : a.steps) CHECK(st.action == 1);
}

TEST_CASE("uniform rollout on a 2-state symmetric chain approaches the stationary split") {
  Mdp mdp;
  mdp.n_states = 2;
  mdp.n_actions = 1;
  // Symmetric switching chain: always hop to the other state.
  mdp.transition = {0.0, 1.0, 1.0, 0.0};
  mdp.true_reward = {0.0, 0.0};
  mdp.gamma = 0.9;
  mdp.start_distribution = {0.5, 0.5};
  mdp.validate();
  const Trajectory traj = rollout(mdp, uniform_policy(1), 10000, 5);
  const double freq0 =
      static_cast<double>(std::count_if(traj.steps.begin(), traj.steps.end(),
                                        [](const ClipStep& st) { return st.state == 0; })) /
      10000.0;
  CHECK(std::abs(freq0 - 0.5) < 0.02);  // stationary distribution is (1/2, 1/2)
}

TEST_CASE("horizon one yields a single start-sampled step") {
  const Mdp mdp = build_gridworld(2, 2, {}, {}, 0);
  const Trajectory traj = rollout(mdp, uniform_policy(4), 1, 3);
  REQUIRE(traj.length() == 1);
  CHECK(mdp.start_distribution[traj.steps[0].state] > 0.0);
}

TEST_CASE("rollouts respect transition support") {
  const Mdp mdp = build_gridworld(4, 4, {{3, 3}}, {{1, 2}}, 0);
  const Trajectory traj = rollout(mdp, uniform_policy(4), 500, 11);
  for (int t = 0; t + 1 < traj.length(); ++t)
    CHECK(mdp.p(traj.steps[t].state, traj.steps[t].action, traj.steps[t + 1].state) > 0.0);
}

TEST_CASE("clip_trajectories windows and drops the remainder") {
  auto make_traj = [](int len) {
    Trajectory t;
    for (int i = 0; i < len; ++i) t.steps.push_back({i % 4, i % 2});
    return t;
  };
  CHECK(clip_trajectories({make_traj(90)}, 30).size() == 3);

  const auto one = clip_trajectories({make_traj(30)}, 30);
  REQUIRE(one.size() == 1);
  CHECK(one[0].steps == make_traj(30).steps);

  const auto dropped = clip_trajectories({make_traj(31)}, 30);
  REQUIRE(dropped.size() == 1);
  CHECK(dropped[0].length() == 30);

  CHECK_THROWS_AS(clip_trajectories({make_traj(29)}, 30), std::invalid_argument);

  // Output count is the sum of floor(len / t_c).
  const auto many = clip_trajectories({make_traj(65), make_traj(30), make_traj(59)}, 30);
  CHECK(many.size() == 2 + 1 + 1);
  for (size_t i = 0; i < many.size(); ++i) CHECK(many[i].id == static_cast<int>(i));
}

TEST_CASE("true_clip_score averages the true reward") {
  const Mdp mdp = build_gridworld(5, 1, {{4, 0}}, {}, 0);
  Clip zero;
  zero.id = 0;
  for (int i = 0; i < 30; ++i) zero.steps.push_back({0, 1});  // bouncing off the left wall
  CHECK(true_clip_score(zero, mdp) == 0.0);

  Clip one = zero;
  one.steps[7] = {3, 0};  // one goal-entering step
  CHECK(true_clip_score(one, mdp) == Catch::Approx(1.0 / 30.0).epsilon(1e-12));

  // Permuting the steps leaves the score unchanged.
  Clip shuffled = one;
  std::rotate(shuffled.steps.begin(), shuffled.steps.begin() + 11, shuffled.steps.end());
  CHECK(true_clip_score(shuffled, mdp) == true_clip_score(one, mdp));
}

TEST_CASE("value iteration solves a corridor") {
  // 4x1 corridor with the goal on the right: the greedy policy moves right.
  const Mdp mdp = build_gridworld(4, 1, {{3, 0}}, {}, 0);
  const ValueSolution sol = value_iteration(mdp);
  for (int s = 0; s < 3; ++s) CHECK(sol.greedy[s] == 0);  // action 0 is +x
}
