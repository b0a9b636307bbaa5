#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crowdpref/core.hpp"
#include "crowdpref/nnet.hpp"
#include "crowdpref/rng.hpp"

namespace crowdpref {

/// Model variants: plain BT, Crowd-BT (annotator identity only), DCBT without
/// co-label collaboration, and the full DCBT model.
enum class Variant { BT, CROWD_BT, DCBT_NO_COLLAB, DCBT };

inline const char* variant_to_string(Variant v) {
  switch (v) {
    case Variant::BT: return "bt";
    case Variant::CROWD_BT: return "crowd-bt";
    case Variant::DCBT_NO_COLLAB: return "dcbt-no-collab";
    case Variant::DCBT: return "dcbt";
  }
  throw std::invalid_argument("variant_to_string: bad variant");
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "bt") return Variant::BT;
  if (s == "crowd-bt") return Variant::CROWD_BT;
  if (s == "dcbt-no-collab") return Variant::DCBT_NO_COLLAB;
  if (s == "dcbt") return Variant::DCBT;
  throw std::invalid_argument("variant_from_string: unknown variant '" + s + "'");
}

struct TrainConfig {
  int t_total = 3000;
  int t_init = -1;  // negative: resolve to round(0.2 * t_total)
  int t_alt = 100;
  double beta = 0.5;        // fraction of each alternation period spent on theta_R
  double alpha_bar = 0.99;  // reliability target during initialization
  double lambda1 = 0.1;     // weight of the identifiability regularizer
  double lambda2 = 1e-4;    // weight of the l1/l2 penalty on theta_R
  Variant variant = Variant::DCBT;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int embed_dim = 8;
  int hidden = 64;
  // Treat the P_BT input of the reliability net as a constant when updating
  // theta_R on the main objective.
  bool detach_pbt_in_alpha = false;
  // Diagnostic switch: pin every alpha_i to 1 and never update the
  // reliability parameters, which degenerates DCBT to plain BT.
  bool freeze_alpha_at_one = false;

  int resolved_t_init() const {
    return t_init < 0 ? static_cast<int>(std::lround(0.2 * t_total)) : t_init;
  }

  void validate() const {
    if (t_total < 1) throw std::invalid_argument("TrainConfig: t_total must be >= 1");
    if (resolved_t_init() > t_total)
      throw std::invalid_argument("TrainConfig: t_init must be <= t_total");
    if (t_alt < 1) throw std::invalid_argument("TrainConfig: t_alt must be >= 1");
    if (beta <= 0.0 || beta >= 1.0) throw std::invalid_argument("TrainConfig: beta must be in (0,1)");
    if (alpha_bar <= 0.0 || alpha_bar >= 1.0)
      throw std::invalid_argument("TrainConfig: alpha_bar must be in (0,1)");
    if (lambda1 < 0.0 || lambda2 < 0.0)
      throw std::invalid_argument("TrainConfig: lambda weights must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("TrainConfig: learning rate must be > 0");
    if (embed_dim < 1 || hidden < 1) throw std::invalid_argument("TrainConfig: bad net dimensions");
  }
};

struct Nets {
  RewardNet reward;
  ReliabilityNet reliability;
};

inline constexpr double kProbFloor = 1e-12;

inline double clamp_prob(double p) {
  return std::min(std::max(p, kProbFloor), 1.0 - kProbFloor);
}

// ---------------------------------------------------------------------------
// Probability models.
// ---------------------------------------------------------------------------

/// Mean reward of a clip under the learned reward network (Bradley-Terry score).
inline double clip_score(const RewardNet& net, const Clip& clip) {
  double sum = 0.0;
  for (const ClipStep& st : clip.steps) sum += net.forward(st.state, st.action);
  return sum / static_cast<double>(clip.length());
}

/// Bradley-Terry win probability from two clip scores.
inline double p_bt(double g1, double g2) { return stable_sigmoid(g1 - g2); }

/// Crowd-BT: per-annotator reliability mixes the BT probability with its complement.
inline double p_crowd_bt(double alpha, double p) { return alpha * p + (1.0 - alpha) * (1.0 - p); }

/// DCBT: same mixture with a per-record reliability.
inline double p_dcbt(double alpha_i, double p) { return alpha_i * p + (1.0 - alpha_i) * (1.0 - p); }

/// Per-label-group co-label means feeding the reliability head.
struct ColabelGroups {
  std::array<std::vector<uint32_t>, 3> members;  // annotator ids by label group
  Vec means;                                     // 3 * dim, zero for empty groups

  void compute(const ReliabilityNet& rel, const PreferenceDataset& ds, int i) {
    for (auto& g : members) g.clear();
    means.assign(static_cast<size_t>(3) * rel.dim, 0.0);
    for (int j : ds.siblings[static_cast<size_t>(i)]) {
      const PreferenceRecord& r = ds.records[static_cast<size_t>(j)];
      members[static_cast<size_t>(r.label)].push_back(r.annotator);
    }
    for (int g = 0; g < 3; ++g) {
      const auto& ws = members[static_cast<size_t>(g)];
      if (ws.empty()) continue;
      double* m = means.data() + static_cast<size_t>(g) * rel.dim;
      for (uint32_t w : ws) {
        if (static_cast<int>(w) >= rel.n_annotators)
          throw std::out_of_range("ColabelGroups: annotator id >= M");
        const double* e = rel.p.embeddings.row(static_cast<int>(w));
        for (int k = 0; k < rel.dim; ++k) m[k] += e[k];
      }
      for (int k = 0; k < rel.dim; ++k) m[k] /= static_cast<double>(ws.size());
    }
  }
};

/// Per-record reliability alpha_i for the non-BT variants. The conditioning
/// set depends on the variant: DCBT sees the co-label group means and the
/// current BT estimate, the no-collaboration ablation zeroes the group means,
/// and Crowd-BT sees the annotator embedding alone.
inline double record_reliability(const Nets& nets, const PreferenceDataset& ds, int i,
                                 Variant variant) {
  if (variant == Variant::BT)
    throw std::invalid_argument("record_reliability: BT has no reliability model");
  const PreferenceRecord& rec = ds.record(i);
  const bool use_groups = variant == Variant::DCBT;
  const bool use_pbt = variant != Variant::CROWD_BT;
  double p = 0.0;
  if (use_pbt) {
    const double g1 = clip_score(nets.reward, ds.clips.at(rec.clip1));
    const double g2 = clip_score(nets.reward, ds.clips.at(rec.clip2));
    p = p_bt(g1, g2);
  }
  ColabelGroups groups;
  const double* m = nullptr;
  if (use_groups) {
    groups.compute(nets.reliability, ds, i);
    m = groups.means.data();
  }
  const int d = nets.reliability.dim;
  return nets.reliability.forward(rec.annotator, use_groups ? m : nullptr,
                                  use_groups ? m + d : nullptr, use_groups ? m + 2 * d : nullptr,
                                  p);
}

// ---------------------------------------------------------------------------
// Loss engine. One pass computes values and, when requested, exact analytic
// gradients. Reward-network evaluations are memoized per (state, action)
// within a batch; the memo changes neither values nor gradient order.
// ---------------------------------------------------------------------------

class RewardCache {
 public:
  void reset(const RewardNet& net) {
    const size_t need = static_cast<size_t>(net.n_states) * net.n_actions;
    if (slot_.size() != need) {
      slot_.assign(need, -1);
    } else {
      for (int key : touched_) slot_[static_cast<size_t>(key)] = -1;
    }
    touched_.clear();
    n_used_ = 0;
  }

  int slot(const RewardNet& net, int s, int a) {
    if (s < 0 || s >= net.n_states || a < 0 || a >= net.n_actions)
      throw std::out_of_range("RewardCache: state/action outside the encoded space");
    const int key = s * net.n_actions + a;
    int sl = slot_[static_cast<size_t>(key)];
    if (sl < 0) {
      sl = n_used_++;
      if (static_cast<int>(entries_.size()) < n_used_) entries_.emplace_back();
      Entry& e = entries_[static_cast<size_t>(sl)];
      e.s = s;
      e.a = a;
      e.d_out = 0.0;
      e.value = net.forward(s, a, e.act);
      slot_[static_cast<size_t>(key)] = sl;
      touched_.push_back(key);
    }
    return sl;
  }

  double value(int sl) const { return entries_[static_cast<size_t>(sl)].value; }
  void add_grad(int sl, double g) { entries_[static_cast<size_t>(sl)].d_out += g; }

  /// Backpropagates accumulated output gradients in first-touch order.
  void backward(const RewardNet& net, RewardParams& grad) const {
    for (int i = 0; i < n_used_; ++i) {
      const Entry& e = entries_[static_cast<size_t>(i)];
      if (e.d_out != 0.0) net.backward(e.s, e.a, e.act, e.d_out, grad);
    }
  }

 private:
  struct Entry {
    int s = 0, a = 0;
    double value = 0.0, d_out = 0.0;
    RewardNet::Activations act;
  };
  std::vector<int> slot_;
  std::vector<int> touched_;
  std::vector<Entry> entries_;
  int n_used_ = 0;
};

struct LossTerms {
  double data = 0.0;   // phase data term: variant cross-entropy, or the full
                       // initialization loss during the init phase
  double reg = 0.0;    // identifiability regularizer (unweighted)
  double l1l2 = 0.0;   // l1 + l2 penalty on theta_R (unweighted)
  double total = 0.0;  // data + lambda1 * reg + lambda2 * l1l2
};

enum class Objective { Init, Main };

struct EvalScratch {
  RewardCache cache;
  ColabelGroups groups;
};

/// Soft-label binary cross-entropy value and derivative w.r.t. the probability.
inline double soft_cross_entropy(double y_tilde, double prob, double* d_prob) {
  const double pc = clamp_prob(prob);
  if (d_prob != nullptr) {
    const bool inside = prob >= kProbFloor && prob <= 1.0 - kProbFloor;
    *d_prob = inside ? -(y_tilde / pc - (1.0 - y_tilde) / (1.0 - pc)) : 0.0;
  }
  return -(y_tilde * std::log(pc) + (1.0 - y_tilde) * std::log(1.0 - pc));
}

/// Values and gradients of one objective on one batch.
///
/// Gradients accumulate into grad_r / grad_w when non-null; both pointers may
/// be null for value-only evaluation. Under Objective::Init the reliability
/// entropy terms are blocked from theta_R: their dependence on the BT
/// probability is treated as a constant.
inline LossTerms eval_objective(const Nets& nets, const PreferenceDataset& ds,
                                std::span<const int> batch, const TrainConfig& cfg, Objective obj,
                                RewardParams* grad_r, ReliabilityParams* grad_w,
                                EvalScratch& scratch) {
  if (batch.empty()) throw std::invalid_argument("eval_objective: empty batch");
  const RewardNet& reward = nets.reward;
  const ReliabilityNet& rel = nets.reliability;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const bool use_rel = cfg.variant != Variant::BT;
  const bool use_groups = cfg.variant == Variant::DCBT;
  const bool use_pbt_input = cfg.variant != Variant::CROWD_BT;
  const int d = rel.dim;

  RewardCache& cache = scratch.cache;
  cache.reset(reward);

  LossTerms terms;
  for (int idx : batch) {
    const PreferenceRecord& rec = ds.record(idx);
    const Clip& c1 = ds.clips.at(rec.clip1);
    const Clip& c2 = ds.clips.at(rec.clip2);

    double g1 = 0.0, g2 = 0.0;
    for (const ClipStep& st : c1.steps) g1 += cache.value(cache.slot(reward, st.state, st.action));
    g1 /= static_cast<double>(c1.length());
    for (const ClipStep& st : c2.steps) g2 += cache.value(cache.slot(reward, st.state, st.action));
    g2 /= static_cast<double>(c2.length());

    const double p = stable_sigmoid(g1 - g2);
    const double y_tilde = soft_label(rec.label);

    double d_p = 0.0;  // d(data)/dp accumulated across live paths

    // Reliability forward, shared by both objectives.
    double alpha = 1.0;
    double rel_p_input = 0.0;
    const double* m = nullptr;
    if (use_rel && !cfg.freeze_alpha_at_one) {
      rel_p_input = use_pbt_input ? p : 0.0;
      if (use_groups) {
        scratch.groups.compute(rel, ds, idx);
        m = scratch.groups.means.data();
      }
      alpha = rel.forward(rec.annotator, use_groups ? m : nullptr, use_groups ? m + d : nullptr,
                          use_groups ? m + 2 * d : nullptr, rel_p_input);
    }

    double d_alpha = 0.0;
    if (obj == Objective::Main) {
      double prob = p;
      if (use_rel) {
        const double a_eff = cfg.freeze_alpha_at_one ? 1.0 : alpha;
        prob = a_eff * p + (1.0 - a_eff) * (1.0 - p);
      }
      double d_prob = 0.0;
      terms.data += soft_cross_entropy(y_tilde, prob, &d_prob) * inv_b;
      d_prob *= inv_b;
      if (use_rel) {
        const double a_eff = cfg.freeze_alpha_at_one ? 1.0 : alpha;
        d_p += d_prob * (2.0 * a_eff - 1.0);
        if (!cfg.freeze_alpha_at_one) d_alpha = d_prob * (2.0 * p - 1.0);
      } else {
        d_p += d_prob;
      }
    } else {  // Objective::Init
      double d_prob = 0.0;
      terms.data += soft_cross_entropy(y_tilde, p, &d_prob) * inv_b;
      d_p += d_prob * inv_b;
      if (use_rel) {
        const double ac = clamp_prob(cfg.freeze_alpha_at_one ? 1.0 : alpha);
        terms.data +=
            -(cfg.alpha_bar * std::log(ac) + (1.0 - cfg.alpha_bar) * std::log(1.0 - ac)) * inv_b;
        if (!cfg.freeze_alpha_at_one) {
          const bool inside = alpha >= kProbFloor && alpha <= 1.0 - kProbFloor;
          d_alpha = inside
                        ? -(cfg.alpha_bar / ac - (1.0 - cfg.alpha_bar) / (1.0 - ac)) * inv_b
                        : 0.0;
        }
      }
    }

    // Reliability backward. During initialization the path from the BT
    // probability into alpha is blocked, so d_z never feeds back into d_p.
    if (d_alpha != 0.0) {
      const double d_z = d_alpha * alpha * (1.0 - alpha);
      const bool smooth_live =
          obj == Objective::Main && use_pbt_input && !cfg.detach_pbt_in_alpha;
      if (smooth_live) d_p += d_z * rel.p.head_w[static_cast<size_t>(4 * d)];
      if (grad_w != nullptr) {
        const double* e = rel.p.embeddings.row(static_cast<int>(rec.annotator));
        for (int k = 0; k < d; ++k) grad_w->head_w[static_cast<size_t>(k)] += d_z * e[k];
        if (use_groups) {
          for (int g = 0; g < 3; ++g) {
            const auto& ws = scratch.groups.members[static_cast<size_t>(g)];
            if (ws.empty()) continue;
            const size_t off = static_cast<size_t>(d) * (1 + g);
            for (int k = 0; k < d; ++k)
              grad_w->head_w[off + static_cast<size_t>(k)] += d_z * m[static_cast<size_t>(g) * d + k];
            const double scale = d_z / static_cast<double>(ws.size());
            for (uint32_t wj : ws) {
              double* row = grad_w->embeddings.row(static_cast<int>(wj));
              for (int k = 0; k < d; ++k)
                row[k] += scale * rel.p.head_w[off + static_cast<size_t>(k)];
            }
          }
        }
        grad_w->head_w[static_cast<size_t>(4 * d)] += d_z * rel_p_input;
        grad_w->head_b[0] += d_z;
        double* own = grad_w->embeddings.row(static_cast<int>(rec.annotator));
        for (int k = 0; k < d; ++k) own[k] += d_z * rel.p.head_w[static_cast<size_t>(k)];
      }
    }

    double d_g1 = d_p * p * (1.0 - p);
    double d_g2 = -d_g1;

    // Identifiability regularizer, Eq. (7)-style: both clip scores of every
    // record are pushed toward zero.
    terms.reg += (softplus(g1) + softplus(-g1) + softplus(g2) + softplus(-g2)) * 0.5 * inv_b;
    if (grad_r != nullptr && cfg.lambda1 != 0.0) {
      d_g1 += cfg.lambda1 * (2.0 * stable_sigmoid(g1) - 1.0) * 0.5 * inv_b;
      d_g2 += cfg.lambda1 * (2.0 * stable_sigmoid(g2) - 1.0) * 0.5 * inv_b;
    }

    if (grad_r != nullptr) {
      const double w1 = d_g1 / static_cast<double>(c1.length());
      for (const ClipStep& st : c1.steps) cache.add_grad(cache.slot(reward, st.state, st.action), w1);
      const double w2 = d_g2 / static_cast<double>(c2.length());
      for (const ClipStep& st : c2.steps) cache.add_grad(cache.slot(reward, st.state, st.action), w2);
    }
  }

  // l1 + l2 penalty over theta_R.
  for (const Vec* tensor : reward_tensors(reward.p))
    for (double x : *tensor) terms.l1l2 += std::abs(x) + x * x;
  if (grad_r != nullptr && cfg.lambda2 != 0.0) {
    auto penalize = [&](const Vec& src, Vec& dst) {
      for (size_t i = 0; i < src.size(); ++i) {
        const double sign = src[i] > 0.0 ? 1.0 : (src[i] < 0.0 ? -1.0 : 0.0);
        dst[i] += cfg.lambda2 * (sign + 2.0 * src[i]);
      }
    };
    penalize(reward.p.w1.a, grad_r->w1.a);
    penalize(reward.p.b1, grad_r->b1);
    penalize(reward.p.w2.a, grad_r->w2.a);
    penalize(reward.p.b2, grad_r->b2);
    penalize(reward.p.w3, grad_r->w3);
    penalize(reward.p.b3, grad_r->b3);
  }

  if (grad_r != nullptr) cache.backward(reward, *grad_r);

  terms.total = terms.data + cfg.lambda1 * terms.reg + cfg.lambda2 * terms.l1l2;
  return terms;
}

// ---------------------------------------------------------------------------
// Named loss values (value-only views of the engine).
// ---------------------------------------------------------------------------

/// Soft-label cross-entropy of the variant's preference probability.
inline double loss_dcbt(const Nets& nets, const PreferenceDataset& ds, std::span<const int> batch,
                        Variant variant, bool freeze_alpha_at_one = false) {
  TrainConfig cfg;
  cfg.variant = variant;
  cfg.freeze_alpha_at_one = freeze_alpha_at_one;
  cfg.lambda1 = 0.0;
  cfg.lambda2 = 0.0;
  EvalScratch scratch;
  return eval_objective(nets, ds, batch, cfg, Objective::Main, nullptr, nullptr, scratch).data;
}

/// Identifiability regularizer pinning clip scores near zero.
inline double loss_reg(const RewardNet& net, const PreferenceDataset& ds,
                       std::span<const int> batch) {
  if (batch.empty()) throw std::invalid_argument("loss_reg: empty batch");
  double total = 0.0;
  for (int idx : batch) {
    const PreferenceRecord& rec = ds.record(idx);
    const double g1 = clip_score(net, ds.clips.at(rec.clip1));
    const double g2 = clip_score(net, ds.clips.at(rec.clip2));
    total += softplus(g1) + softplus(-g1) + softplus(g2) + softplus(-g2);
  }
  return total * 0.5 / static_cast<double>(batch.size());
}

/// l1 + l2 penalty over the reward network parameters.
inline double loss_l1l2(const RewardNet& net) {
  double total = 0.0;
  for (const Vec* tensor : reward_tensors(net.p))
    for (double x : *tensor) total += std::abs(x) + x * x;
  return total;
}

/// Composite objective: data term + lambda1 * reg + lambda2 * l1l2.
inline double loss_total(const Nets& nets, const PreferenceDataset& ds, std::span<const int> batch,
                         const TrainConfig& cfg) {
  EvalScratch scratch;
  return eval_objective(nets, ds, batch, cfg, Objective::Main, nullptr, nullptr, scratch).total;
}

/// Initialization loss: plain BT cross-entropy plus the cross-entropy between
/// alpha_i and Bernoulli(alpha_bar).
inline double loss_init(const Nets& nets, const PreferenceDataset& ds, std::span<const int> batch,
                        double alpha_bar, Variant variant, bool freeze_alpha_at_one = false) {
  TrainConfig cfg;
  cfg.variant = variant;
  cfg.alpha_bar = alpha_bar;
  cfg.freeze_alpha_at_one = freeze_alpha_at_one;
  cfg.lambda1 = 0.0;
  cfg.lambda2 = 0.0;
  EvalScratch scratch;
  return eval_objective(nets, ds, batch, cfg, Objective::Init, nullptr, nullptr, scratch).data;
}

// ---------------------------------------------------------------------------
// Trainer: initialization phase, then alternating optimization.
// ---------------------------------------------------------------------------

struct TrainLogRow {
  int step = 0;
  const char* phase = "";
  double loss_data = 0.0;
  double loss_reg = 0.0;
  double loss_l1l2 = 0.0;
  double loss_total = 0.0;
};

struct TrainResult {
  Nets nets;
  std::vector<TrainLogRow> log;
};

using StepObserver = std::function<void(int step, const Nets&)>;

inline constexpr uint64_t kInitStream = 0x1717u;
inline constexpr uint64_t kBatchStream = 0xba7c4u;

inline TrainResult train(const PreferenceDataset& ds, int n_states, int n_actions,
                         const TrainConfig& cfg, uint64_t seed, const StepObserver& observer = {}) {
  cfg.validate();
  if (ds.records.empty()) throw std::invalid_argument("train: empty dataset");

  TrainResult result;
  Rng init_rng(Rng::mix(seed, kInitStream));
  result.nets.reward = RewardNet(n_states, n_actions, cfg.hidden);
  result.nets.reward.init_random(init_rng);
  result.nets.reliability = ReliabilityNet(ds.n_annotators, cfg.embed_dim);
  result.nets.reliability.init_random(init_rng);
  Nets& nets = result.nets;

  RewardParams grad_r = nets.reward.p;
  ReliabilityParams grad_w = nets.reliability.p;

  Adam opt;
  opt.lr = cfg.learning_rate;
  auto param_r = tensor_views(nets.reward.p, "reward");
  auto gview_r = tensor_views(grad_r, "reward");
  auto param_w = tensor_views(nets.reliability.p, "reliability");
  auto gview_w = tensor_views(grad_w, "reliability");
  std::vector<Adam::State> state_r(param_r.size()), state_w(param_w.size());

  const bool reliability_trainable = cfg.variant != Variant::BT && !cfg.freeze_alpha_at_one;
  const int t_init = cfg.resolved_t_init();

  Rng batch_rng(Rng::mix(seed, kBatchStream));
  std::vector<int> batch(static_cast<size_t>(cfg.batch_size));
  EvalScratch scratch;
  result.log.reserve(static_cast<size_t>(cfg.t_total));

  for (int t = 1; t <= cfg.t_total; ++t) {
    for (int& b : batch)
      b = static_cast<int>(batch_rng.uniform_int(static_cast<uint64_t>(ds.size())));

    const char* phase;
    Objective obj;
    bool update_r, update_w;
    if (t <= t_init) {
      phase = "init";
      obj = Objective::Init;
      update_r = true;
      update_w = reliability_trainable;
    } else if (static_cast<double>(t % cfg.t_alt) < cfg.beta * cfg.t_alt) {
      phase = "reward";
      obj = Objective::Main;
      update_r = true;
      update_w = false;
    } else {
      phase = "reliability";
      obj = Objective::Main;
      update_r = false;
      update_w = reliability_trainable;
    }

    grad_r.zero();
    grad_w.zero();
    const LossTerms terms = eval_objective(nets, ds, batch, cfg, obj, update_r ? &grad_r : nullptr,
                                           update_w ? &grad_w : nullptr, scratch);
    if (!std::isfinite(terms.total))
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(t));

    if (update_r)
      for (size_t k = 0; k < param_r.size(); ++k)
        opt.apply(*param_r[k].data, *gview_r[k].data, state_r[k]);
    if (update_w)
      for (size_t k = 0; k < param_w.size(); ++k)
        opt.apply(*param_w[k].data, *gview_w[k].data, state_w[k]);

    result.log.push_back({t, phase, terms.data, terms.reg, terms.l1l2, terms.total});
    if (observer) observer(t, nets);
  }
  return result;
}

}  // namespace crowdpref
