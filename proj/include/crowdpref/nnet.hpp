#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crowdpref/dataset_io.hpp"
#include "crowdpref/rng.hpp"

namespace crowdpref {

using Vec = std::vector<double>;

struct Matrix {
  int rows = 0;
  int cols = 0;
  Vec a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
  double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }
};

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// ---------------------------------------------------------------------------
// Reward network: one-hot(state) ++ one-hot(action) -> tanh MLP -> scalar.
// ---------------------------------------------------------------------------

struct RewardParams {
  Matrix w1;  // hidden x (n_states + n_actions)
  Vec b1;     // hidden
  Matrix w2;  // hidden x hidden
  Vec b2;     // hidden
  Vec w3;     // hidden
  Vec b3;     // 1

  void zero() {
    std::fill(w1.a.begin(), w1.a.end(), 0.0);
    std::fill(b1.begin(), b1.end(), 0.0);
    std::fill(w2.a.begin(), w2.a.end(), 0.0);
    std::fill(b2.begin(), b2.end(), 0.0);
    std::fill(w3.begin(), w3.end(), 0.0);
    std::fill(b3.begin(), b3.end(), 0.0);
  }
};

/// Named views of every parameter tensor, used by the optimizer, the
/// checkpoint format, and the gradient checker.
struct TensorView {
  std::string name;
  Vec* data;
};

inline std::vector<TensorView> tensor_views(RewardParams& p, const std::string& prefix) {
  return {{prefix + ".w1", &p.w1.a}, {prefix + ".b1", &p.b1}, {prefix + ".w2", &p.w2.a},
          {prefix + ".b2", &p.b2},   {prefix + ".w3", &p.w3}, {prefix + ".b3", &p.b3}};
}

inline std::array<const Vec*, 6> reward_tensors(const RewardParams& p) {
  return {&p.w1.a, &p.b1, &p.w2.a, &p.b2, &p.w3, &p.b3};
}

struct RewardNet {
  int n_states = 0;
  int n_actions = 0;
  int hidden = 64;
  RewardParams p;

  RewardNet() = default;
  RewardNet(int states, int actions, int hidden_units = 64)
      : n_states(states), n_actions(actions), hidden(hidden_units) {
    if (states < 1 || actions < 1 || hidden_units < 1)
      throw std::invalid_argument("RewardNet: bad dimensions");
    p.w1 = Matrix(hidden, n_states + n_actions);
    p.b1.assign(static_cast<size_t>(hidden), 0.0);
    p.w2 = Matrix(hidden, hidden);
    p.b2.assign(static_cast<size_t>(hidden), 0.0);
    p.w3.assign(static_cast<size_t>(hidden), 0.0);
    p.b3.assign(1, 0.0);
  }

  void init_zero() { p.zero(); }

  /// Weights and biases uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
  void init_random(Rng& rng) {
    const double s1 = 1.0 / std::sqrt(static_cast<double>(n_states + n_actions));
    for (double& w : p.w1.a) w = rng.uniform(-s1, s1);
    for (double& w : p.b1) w = rng.uniform(-s1, s1);
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& w : p.w2.a) w = rng.uniform(-s2, s2);
    for (double& w : p.b2) w = rng.uniform(-s2, s2);
    for (double& w : p.w3) w = rng.uniform(-s2, s2);
    p.b3[0] = rng.uniform(-s2, s2);
  }

  struct Activations {
    Vec h1, h2;  // post-tanh hidden activations
  };

  /// Scalar reward for a (state, action) pair, keeping activations for backward.
  double forward(int s, int a, Activations& act) const {
    check_input(s, a);
    act.h1.resize(static_cast<size_t>(hidden));
    act.h2.resize(static_cast<size_t>(hidden));
    const int acol = n_states + a;
    for (int i = 0; i < hidden; ++i)
      act.h1[static_cast<size_t>(i)] =
          std::tanh(p.w1(i, s) + p.w1(i, acol) + p.b1[static_cast<size_t>(i)]);
    for (int i = 0; i < hidden; ++i) {
      double z = p.b2[static_cast<size_t>(i)];
      const double* wrow = p.w2.row(i);
      for (int j = 0; j < hidden; ++j) z += wrow[j] * act.h1[static_cast<size_t>(j)];
      act.h2[static_cast<size_t>(i)] = std::tanh(z);
    }
    double out = p.b3[0];
    for (int i = 0; i < hidden; ++i) out += p.w3[static_cast<size_t>(i)] * act.h2[static_cast<size_t>(i)];
    return out;
  }

  double forward(int s, int a) const {
    Activations act;
    return forward(s, a, act);
  }

  /// Accumulates d(out)/d(params) * d_out into `grad`.
  void backward(int s, int a, const Activations& act, double d_out, RewardParams& grad) const {
    check_input(s, a);
    thread_local Vec dz2, dh1;
    dz2.resize(static_cast<size_t>(hidden));
    dh1.assign(static_cast<size_t>(hidden), 0.0);
    for (int i = 0; i < hidden; ++i) {
      const double h2 = act.h2[static_cast<size_t>(i)];
      grad.w3[static_cast<size_t>(i)] += d_out * h2;
      dz2[static_cast<size_t>(i)] = d_out * p.w3[static_cast<size_t>(i)] * (1.0 - h2 * h2);
    }
    grad.b3[0] += d_out;
    for (int i = 0; i < hidden; ++i) {
      const double d = dz2[static_cast<size_t>(i)];
      grad.b2[static_cast<size_t>(i)] += d;
      double* grow = grad.w2.row(i);
      const double* wrow = p.w2.row(i);
      for (int j = 0; j < hidden; ++j) {
        grow[j] += d * act.h1[static_cast<size_t>(j)];
        dh1[static_cast<size_t>(j)] += d * wrow[j];
      }
    }
    const int acol = n_states + a;
    for (int i = 0; i < hidden; ++i) {
      const double h1 = act.h1[static_cast<size_t>(i)];
      const double d = dh1[static_cast<size_t>(i)] * (1.0 - h1 * h1);
      grad.w1(i, s) += d;
      grad.w1(i, acol) += d;
      grad.b1[static_cast<size_t>(i)] += d;
    }
  }

 private:
  void check_input(int s, int a) const {
    if (s < 0 || s >= n_states || a < 0 || a >= n_actions)
      throw std::out_of_range("RewardNet: state/action outside the encoded space");
  }
};

/// Convenience wrapper matching the operation name used throughout.
inline double reward_forward(const RewardNet& net, int state, int action) {
  return net.forward(state, action);
}

// ---------------------------------------------------------------------------
// Reliability network: worker embedding + per-label-group co-label means +
// the current BT estimate -> single logistic unit.
// ---------------------------------------------------------------------------

struct ReliabilityParams {
  Matrix embeddings;  // M x d
  Vec head_w;         // 4d + 1
  Vec head_b;         // 1

  void zero() {
    std::fill(embeddings.a.begin(), embeddings.a.end(), 0.0);
    std::fill(head_w.begin(), head_w.end(), 0.0);
    std::fill(head_b.begin(), head_b.end(), 0.0);
  }
};

inline std::vector<TensorView> tensor_views(ReliabilityParams& p, const std::string& prefix) {
  return {{prefix + ".embeddings", &p.embeddings.a},
          {prefix + ".head_w", &p.head_w},
          {prefix + ".head_b", &p.head_b}};
}

struct ReliabilityNet {
  int n_annotators = 0;
  int dim = 8;
  ReliabilityParams p;

  ReliabilityNet() = default;
  ReliabilityNet(int annotators, int embed_dim = 8) : n_annotators(annotators), dim(embed_dim) {
    if (annotators < 0 || embed_dim < 1) throw std::invalid_argument("ReliabilityNet: bad dimensions");
    p.embeddings = Matrix(annotators, embed_dim);
    p.head_w.assign(static_cast<size_t>(4 * embed_dim + 1), 0.0);
    p.head_b.assign(1, 0.0);
  }

  void init_zero() { p.zero(); }

  /// Embeddings standard normal * 0.1; head uniform in +-1/sqrt(4d+1).
  void init_random(Rng& rng) {
    for (double& w : p.embeddings.a) w = 0.1 * rng.normal();
    const double s = 1.0 / std::sqrt(static_cast<double>(4 * dim + 1));
    for (double& w : p.head_w) w = rng.uniform(-s, s);
    p.head_b[0] = rng.uniform(-s, s);
  }

  /// Pre-activation of the head on [embed(w); mean_succ; mean_approx;
  /// mean_prec; p_bt]. Group mean pointers may be null, meaning zero vectors.
  double preactivation(uint32_t w, const double* mean_succ, const double* mean_approx,
                       const double* mean_prec, double p_bt_value) const {
    if (static_cast<int>(w) >= n_annotators)
      throw std::out_of_range("ReliabilityNet: annotator id >= M");
    double z = p.head_b[0];
    const double* e = p.embeddings.row(static_cast<int>(w));
    for (int k = 0; k < dim; ++k) z += p.head_w[static_cast<size_t>(k)] * e[k];
    const double* groups[3] = {mean_succ, mean_approx, mean_prec};
    for (int g = 0; g < 3; ++g) {
      if (groups[g] == nullptr) continue;
      const size_t off = static_cast<size_t>(dim) * (1 + g);
      for (int k = 0; k < dim; ++k) z += p.head_w[off + static_cast<size_t>(k)] * groups[g][k];
    }
    z += p.head_w[static_cast<size_t>(4 * dim)] * p_bt_value;
    return z;
  }

  double forward(uint32_t w, const double* mean_succ, const double* mean_approx,
                 const double* mean_prec, double p_bt_value) const {
    return stable_sigmoid(preactivation(w, mean_succ, mean_approx, mean_prec, p_bt_value));
  }
};

/// Reliability alpha in (0,1) from explicit per-group co-label means.
inline double reliability_forward(const ReliabilityNet& net, uint32_t w,
                                  const double* mean_succ, const double* mean_approx,
                                  const double* mean_prec, double p_bt_value) {
  return net.forward(w, mean_succ, mean_approx, mean_prec, p_bt_value);
}

// ---------------------------------------------------------------------------
// Optimizer: per-tensor first/second-moment adaptive steps.
// ---------------------------------------------------------------------------

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  struct State {
    Vec m, v;
    long long step = 0;
  };

  void apply(Vec& param, const Vec& grad, State& st) const {
    if (st.m.size() != param.size()) {
      st.m.assign(param.size(), 0.0);
      st.v.assign(param.size(), 0.0);
      st.step = 0;
    }
    ++st.step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
    for (size_t i = 0; i < param.size(); ++i) {
      st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * grad[i];
      st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * grad[i] * grad[i];
      param[i] -= lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps);
    }
  }
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checker.
// ---------------------------------------------------------------------------

struct CoordRef {
  double* x;        // parameter coordinate
  double analytic;  // analytic gradient at that coordinate
};

/// Max over n_probes random coordinates of
/// |analytic - central difference| / max(1, |central difference|).
inline double grad_check(const std::function<double()>& loss, std::span<const CoordRef> coords,
                         int n_probes, double h, Rng& rng) {
  if (coords.empty()) throw std::invalid_argument("grad_check: no coordinates");
  if (h <= 0.0) throw std::invalid_argument("grad_check: h must be positive");
  double worst = 0.0;
  for (int probe = 0; probe < n_probes; ++probe) {
    const CoordRef& c = coords[rng.uniform_int(coords.size())];
    const double saved = *c.x;
    *c.x = saved + h;
    const double up = loss();
    *c.x = saved - h;
    const double down = loss();
    *c.x = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("grad_check: non-finite loss");
    const double fd = (up - down) / (2.0 * h);
    const double err = std::abs(c.analytic - fd) / std::max(1.0, std::abs(fd));
    worst = std::max(worst, err);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Checkpoints: named tensors with shapes, text, round-trip exact.
// ---------------------------------------------------------------------------

inline void write_tensor(std::ostream& out, const std::string& name, const Vec& data, int rows,
                         int cols) {
  out << "tensor " << name << ' ' << rows << ' ' << cols;
  for (double x : data) out << ' ' << fmt_double(x);
  out << '\n';
}

inline void save_checkpoint(const std::string& path, const RewardNet& reward,
                            const ReliabilityNet* reliability) {
  auto out = open_out(path);
  out << "crowdpref-checkpoint 1\n";
  out << "reward " << reward.n_states << ' ' << reward.n_actions << ' ' << reward.hidden << '\n';
  write_tensor(out, "reward.w1", reward.p.w1.a, reward.p.w1.rows, reward.p.w1.cols);
  write_tensor(out, "reward.b1", reward.p.b1, 1, static_cast<int>(reward.p.b1.size()));
  write_tensor(out, "reward.w2", reward.p.w2.a, reward.p.w2.rows, reward.p.w2.cols);
  write_tensor(out, "reward.b2", reward.p.b2, 1, static_cast<int>(reward.p.b2.size()));
  write_tensor(out, "reward.w3", reward.p.w3, 1, static_cast<int>(reward.p.w3.size()));
  write_tensor(out, "reward.b3", reward.p.b3, 1, 1);
  if (reliability != nullptr) {
    out << "reliability " << reliability->n_annotators << ' ' << reliability->dim << '\n';
    write_tensor(out, "reliability.embeddings", reliability->p.embeddings.a,
                 reliability->p.embeddings.rows, reliability->p.embeddings.cols);
    write_tensor(out, "reliability.head_w", reliability->p.head_w, 1,
                 static_cast<int>(reliability->p.head_w.size()));
    write_tensor(out, "reliability.head_b", reliability->p.head_b, 1, 1);
  }
}

struct Checkpoint {
  RewardNet reward;
  bool has_reliability = false;
  ReliabilityNet reliability;
};

inline Vec read_tensor(std::istream& in, const std::string& expect_name, size_t expect_size) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated file");
  std::istringstream ls(line);
  std::string kw, name;
  int rows = 0, cols = 0;
  if (!(ls >> kw >> name >> rows >> cols) || kw != "tensor" || name != expect_name)
    throw std::runtime_error("checkpoint: expected tensor " + expect_name);
  Vec data;
  data.reserve(expect_size);
  double x = 0.0;
  while (ls >> x) data.push_back(x);
  if (data.size() != expect_size || data.size() != static_cast<size_t>(rows) * cols)
    throw std::runtime_error("checkpoint: bad tensor size for " + expect_name);
  return data;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "crowdpref-checkpoint 1")
    throw std::runtime_error("checkpoint: bad header in " + path);
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing reward meta");
  std::istringstream meta(line);
  std::string kw;
  int n_states = 0, n_actions = 0, hidden = 0;
  if (!(meta >> kw >> n_states >> n_actions >> hidden) || kw != "reward")
    throw std::runtime_error("checkpoint: bad reward meta");
  Checkpoint ck;
  ck.reward = RewardNet(n_states, n_actions, hidden);
  const size_t h = static_cast<size_t>(hidden);
  ck.reward.p.w1.a = read_tensor(in, "reward.w1", h * (n_states + n_actions));
  ck.reward.p.b1 = read_tensor(in, "reward.b1", h);
  ck.reward.p.w2.a = read_tensor(in, "reward.w2", h * h);
  ck.reward.p.b2 = read_tensor(in, "reward.b2", h);
  ck.reward.p.w3 = read_tensor(in, "reward.w3", h);
  ck.reward.p.b3 = read_tensor(in, "reward.b3", 1);
  if (std::getline(in, line) && !line.empty()) {
    std::istringstream rmeta(line);
    int m = 0, d = 0;
    if (!(rmeta >> kw >> m >> d) || kw != "reliability")
      throw std::runtime_error("checkpoint: bad reliability meta");
    ck.has_reliability = true;
    ck.reliability = ReliabilityNet(m, d);
    ck.reliability.p.embeddings.a =
        read_tensor(in, "reliability.embeddings", static_cast<size_t>(m) * d);
    ck.reliability.p.head_w = read_tensor(in, "reliability.head_w", static_cast<size_t>(4 * d + 1));
    ck.reliability.p.head_b = read_tensor(in, "reliability.head_b", 1);
  }
  return ck;
}

}  // namespace crowdpref
