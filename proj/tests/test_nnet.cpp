#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "crowdpref/nnet.hpp"

using namespace crowdpref;

TEST_CASE("zero-initialized reward net outputs zero everywhere") {
  RewardNet net(6, 3, 16);
  net.init_zero();
  for (int s = 0; s < 6; ++s)
    for (int a = 0; a < 3; ++a) CHECK(net.forward(s, a) == 0.0);
}

TEST_CASE("reward forward is pure") {
  RewardNet net(4, 2, 8);
  Rng rng(3);
  net.init_random(rng);
  CHECK(net.forward(2, 1) == net.forward(2, 1));
  CHECK_THROWS_AS(net.forward(4, 0), std::out_of_range);
  CHECK_THROWS_AS(net.forward(0, 2), std::out_of_range);
}

TEST_CASE("reward forward matches a hand computation on a tiny net") {
  // hidden = 1: out = w3 * tanh(w2 * tanh(w1_s + w1_a + b1) + b2) + b3
  RewardNet net(2, 1, 1);
  net.p.w1(0, 0) = 0.3;   // state 0 column
  net.p.w1(0, 1) = -0.2;  // state 1 column
  net.p.w1(0, 2) = 0.5;   // action 0 column
  net.p.b1[0] = 0.1;
  net.p.w2(0, 0) = 1.4;
  net.p.b2[0] = -0.3;
  net.p.w3[0] = 2.0;
  net.p.b3[0] = 0.25;
  const double h1 = std::tanh(0.3 + 0.5 + 0.1);
  const double h2 = std::tanh(1.4 * h1 - 0.3);
  CHECK(net.forward(0, 0) == Catch::Approx(2.0 * h2 + 0.25).epsilon(1e-15));
  const double g1 = std::tanh(-0.2 + 0.5 + 0.1);
  const double g2 = std::tanh(1.4 * g1 - 0.3);
  CHECK(net.forward(1, 0) == Catch::Approx(2.0 * g2 + 0.25).epsilon(1e-15));
}

TEST_CASE("zero-initialized reliability head gives alpha = 0.5") {
  ReliabilityNet net(5, 4);
  net.init_zero();
  Vec mean(4, 0.7);
  CHECK(net.forward(2, mean.data(), nullptr, nullptr, 0.9) == 0.5);
}

TEST_CASE("reliability output stays strictly inside (0,1)") {
  ReliabilityNet net(3, 2);
  Rng rng(8);
  net.init_random(rng);
  for (int i = 0; i < 50; ++i) {
    Vec m1{rng.normal(), rng.normal()}, m2{rng.normal(), rng.normal()};
    const double alpha = net.forward(static_cast<uint32_t>(i % 3), m1.data(), m2.data(), nullptr,
                                     rng.uniform01());
    CHECK(alpha > 0.0);
    CHECK(alpha < 1.0);
  }
  // Empty co-label groups mean zero vectors; the output is still a probability.
  const double alpha = net.forward(0, nullptr, nullptr, nullptr, 0.5);
  CHECK(alpha > 0.0);
  CHECK(alpha < 1.0);
  CHECK_THROWS_AS(net.forward(3, nullptr, nullptr, nullptr, 0.5), std::out_of_range);
}

TEST_CASE("reliability forward matches a hand computation in one dimension") {
  ReliabilityNet net(2, 1);
  net.p.embeddings(0, 0) = 0.4;
  net.p.embeddings(1, 0) = -0.8;
  net.p.head_w = {0.5, 1.0, -1.0, 2.0, 3.0};  // [own; succ; approx; prec; p_bt]
  net.p.head_b[0] = 0.1;
  const double succ_mean = -0.8;  // annotator 1 alone in the succ group
  const double z = 0.5 * 0.4 + 1.0 * (-0.8) + 2.0 * 0.0 + 3.0 * 0.6 + 0.1;
  CHECK(net.forward(0, &succ_mean, nullptr, nullptr, 0.6) ==
        Catch::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-15));
}

TEST_CASE("grad_check accepts a closed-form gradient and flags the scale") {
  Vec params{0.3, -1.2, 0.7, 2.5, -0.4};
  // loss = ||p||^2 / 2, gradient = p.
  auto loss = [&]() {
    double s = 0.0;
    for (double x : params) s += x * x;
    return 0.5 * s;
  };
  std::vector<CoordRef> coords;
  for (size_t i = 0; i < params.size(); ++i) coords.push_back({&params[i], params[i]});
  Rng rng(5);
  CHECK(grad_check(loss, coords, 20, 1e-5, rng) < 1e-8);

  // Constant loss has zero gradient and zero error.
  auto constant = []() { return 3.5; };
  std::vector<CoordRef> zero_coords;
  for (size_t i = 0; i < params.size(); ++i) zero_coords.push_back({&params[i], 0.0});
  Rng rng2(6);
  CHECK(grad_check(constant, zero_coords, 10, 1e-5, rng2) == 0.0);

  // A wrong analytic gradient is reported.
  std::vector<CoordRef> wrong;
  for (size_t i = 0; i < params.size(); ++i) wrong.push_back({&params[i], params[i] + 1.0});
  Rng rng3(7);
  CHECK(grad_check(loss, wrong, 10, 1e-5, rng3) > 0.1);
}

TEST_CASE("reward backward matches finite differences") {
  RewardNet net(5, 3, 12);
  Rng rng(11);
  net.init_random(rng);
  // loss = sum over a few pairs of net(s, a).
  const std::vector<std::pair<int, int>> pairs = {{0, 0}, {3, 2}, {4, 1}, {0, 2}};
  auto loss = [&]() {
    double s = 0.0;
    for (auto [st, ac] : pairs) s += net.forward(st, ac);
    return s;
  };
  RewardParams grad = net.p;
  grad.zero();
  for (auto [st, ac] : pairs) {
    RewardNet::Activations act;
    net.forward(st, ac, act);
    net.backward(st, ac, act, 1.0, grad);
  }
  std::vector<CoordRef> coords;
  auto params = tensor_views(net.p, "reward");
  auto grads = tensor_views(grad, "reward");
  for (size_t t = 0; t < params.size(); ++t)
    for (size_t i = 0; i < params[t].data->size(); ++i)
      coords.push_back({&(*params[t].data)[i], (*grads[t].data)[i]});
  Rng probe_rng(13);
  CHECK(grad_check(loss, coords, 60, 1e-5, probe_rng) < 1e-7);
}

TEST_CASE("checkpoints round-trip exactly") {
  RewardNet reward(7, 4, 10);
  ReliabilityNet reliability(6, 3);
  Rng rng(21);
  reward.init_random(rng);
  reliability.init_random(rng);

  const auto path = (std::filesystem::temp_directory_path() / "crowdpref_ck.txt").string();
  save_checkpoint(path, reward, &reliability);
  const Checkpoint ck = load_checkpoint(path);
  REQUIRE(ck.has_reliability);
  CHECK(ck.reward.p.w1.a == reward.p.w1.a);
  CHECK(ck.reward.p.b1 == reward.p.b1);
  CHECK(ck.reward.p.w2.a == reward.p.w2.a);
  CHECK(ck.reward.p.b2 == reward.p.b2);
  CHECK(ck.reward.p.w3 == reward.p.w3);
  CHECK(ck.reward.p.b3 == reward.p.b3);
  CHECK(ck.reliability.p.embeddings.a == reliability.p.embeddings.a);
  CHECK(ck.reliability.p.head_w == reliability.p.head_w);
  CHECK(ck.reliability.p.head_b == reliability.p.head_b);

  // A second save of the loaded nets is byte-identical.
  const auto path2 = (std::filesystem::temp_directory_path() / "crowdpref_ck2.txt").string();
  save_checkpoint(path2, ck.reward, &ck.reliability);
  std::ifstream a(path), b(path2);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);

  // Reward-only checkpoints load without a reliability net.
  save_checkpoint(path, reward, nullptr);
  CHECK_FALSE(load_checkpoint(path).has_reliability);
}
