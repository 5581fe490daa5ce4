#include "midam/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace midam {

bool GradEstimate::all_finite() const {
  return g_w.all_finite() && std::isfinite(g_a) && std::isfinite(g_b) &&
         std::isfinite(g_alpha);
}

ObjectiveValue eval_from_scores(std::span<const double> h,
                                const BagDataset& ds, double a, double b,
                                double alpha, const MarginConfig& cfg) {
  if (ds.pos_index.empty() || ds.neg_index.empty()) {
    throw std::invalid_argument("objective needs both classes present");
  }
  if (h.size() != ds.bags.size()) {
    throw std::invalid_argument("one score per bag required");
  }
  ObjectiveValue v;
  double mean_pos = 0.0;
  double mean_neg = 0.0;
  for (std::size_t i : ds.pos_index) {
    v.f1_term += (h[i] - a) * (h[i] - a);
    mean_pos += h[i];
  }
  v.f1_term /= static_cast<double>(ds.n_pos());
  mean_pos /= static_cast<double>(ds.n_pos());
  for (std::size_t i : ds.neg_index) {
    v.f2_term += (h[i] - b) * (h[i] - b);
    mean_neg += h[i];
  }
  v.f2_term /= static_cast<double>(ds.n_neg());
  mean_neg /= static_cast<double>(ds.n_neg());
  v.f3_term =
      alpha * (cfg.margin + mean_neg - mean_pos) - 0.5 * alpha * alpha;
  v.total = v.f1_term + v.f2_term + v.f3_term;
  return v;
}

ObjectiveValue eval_full(const ModelParams& p, const BagDataset& ds,
                         const PoolKind& kind, const MarginConfig& cfg) {
  std::vector<double> h;
  h.reserve(ds.bags.size());
  for (const Bag& bag : ds.bags) {
    h.push_back(pool(p, bag, full_bag_subset(bag), kind));
  }
  return eval_from_scores(h, ds, p.a, p.b, p.alpha, cfg);
}

double optimal_alpha(double mean_pos_h, double mean_neg_h,
                     const MarginConfig& cfg) {
  const double z = cfg.margin + mean_neg_h - mean_pos_h;
  if (z < 0.0) return 0.0;
  return std::min(z, cfg.omega_upper);
}

GradEstimate grad_estimators(const ModelParams& p, const BagDataset& ds,
                             const SampleBatch& batch,
                             std::span<const InnerValue> s_used,
                             const PoolKind& kind, const MarginConfig& cfg,
                             double weight_decay) {
  const std::size_t n_pos = batch.n_pos;
  const std::size_t n_neg = batch.size() - batch.n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("batch must contain both classes");
  }
  if (s_used.size() != batch.size()) {
    throw std::invalid_argument("one inner estimate required per batch bag");
  }

  GradEstimate g;
  g.g_w = ParamGrad::zeros_like(p);
  double mean_pos_f2 = 0.0;
  double mean_neg_f2 = 0.0;

  for (std::size_t k = 0; k < batch.size(); ++k) {
    const std::size_t bag_idx = batch.bag_ids[k];
    const Bag& bag = ds.bags[bag_idx];
    const InnerValue& s = s_used[k];
    const double f2 = outer_f2(s, kind);
    const bool positive = batch.is_positive(k);

    // squared-deviation term plus the alpha ranking term share the
    // grad_f1 * grad_f2 factor, so fold both into one upstream scalar
    double upstream;
    if (positive) {
      mean_pos_f2 += f2;
      upstream = (2.0 * (f2 - p.a) - p.alpha) / static_cast<double>(n_pos);
    } else {
      mean_neg_f2 += f2;
      upstream = (2.0 * (f2 - p.b) + p.alpha) / static_cast<double>(n_neg);
    }
    pool_vjp(p, bag, batch.per_bag_instances[k], kind, s, upstream, g.g_w);
  }
  mean_pos_f2 /= static_cast<double>(n_pos);
  mean_neg_f2 /= static_cast<double>(n_neg);

  g.g_a = -2.0 * (mean_pos_f2 - p.a);
  g.g_b = -2.0 * (mean_neg_f2 - p.b);
  g.g_alpha = cfg.margin + mean_neg_f2 - mean_pos_f2;

  if (weight_decay != 0.0) {
    for (std::size_t i = 0; i < g.g_w.W1.size(); ++i)
      g.g_w.W1[i] += weight_decay * p.W1[i];
    for (std::size_t i = 0; i < g.g_w.b1.size(); ++i)
      g.g_w.b1[i] += weight_decay * p.b1[i];
    for (std::size_t i = 0; i < g.g_w.w_c.size(); ++i)
      g.g_w.w_c[i] += weight_decay * p.w_c[i];
    g.g_w.c0 += weight_decay * p.c0;
    for (std::size_t i = 0; i < g.g_w.V.size(); ++i)
      g.g_w.V[i] += weight_decay * p.V[i];
    for (std::size_t i = 0; i < g.g_w.w_a.size(); ++i)
      g.g_w.w_a[i] += weight_decay * p.w_a[i];
  }
  return g;
}

GradEstimate grad_estimators(const ModelParams& p, const BagDataset& ds,
                             const SampleBatch& batch, const PoolState& state,
                             const MarginConfig& cfg, double weight_decay) {
  std::vector<InnerValue> s_used;
  s_used.reserve(batch.size());
  for (std::size_t id : batch.bag_ids) {
    if (id >= state.s.size() || !state.visited[id]) {
      throw std::invalid_argument("pool state missing estimate for bag " +
                                  std::to_string(id));
    }
    s_used.push_back(state.s[id]);
  }
  return grad_estimators(p, ds, batch, s_used, state.kind, cfg, weight_decay);
}

namespace {

constexpr double kProbClamp = 1e-7;

double clamp_prob(double h) {
  return std::min(std::max(h, kProbClamp), 1.0 - kProbClamp);
}

}  // namespace

std::pair<double, ParamGrad> ce_loss_and_grad(const ModelParams& p,
                                              const BagDataset& ds,
                                              const SampleBatch& batch,
                                              const PoolKind& kind) {
  if (batch.size() == 0) throw std::invalid_argument("empty batch");
  double loss = 0.0;
  ParamGrad grad = ParamGrad::zeros_like(p);
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  for (std::size_t k = 0; k < batch.size(); ++k) {
    const Bag& bag = ds.bags[batch.bag_ids[k]];
    const auto& subset = batch.per_bag_instances[k];
    const double y = static_cast<double>(bag.label);
    const InnerValue s = inner_f1(p, bag, subset, kind);

    if (kind.method == PoolMethod::attention) {
      // h = sigmoid(s1/s2): the sigmoid slope cancels against the BCE
      // derivative, leaving (h - y) as the upstream on the ratio
      const double den = std::max(s.s2, kAttDenFloor);
      const double ratio = s.s1 / den;
      const double h = sigmoid(ratio);
      const double hc = clamp_prob(h);
      loss -= inv_n * (y * std::log(hc) + (1.0 - y) * std::log(1.0 - hc));
      const double up_z = (h - y) * inv_n;
      const double up_num = up_z / den;
      const double up_den = -up_z * s.s1 / (den * den);
      const auto idx = subset;
      const double inv_b = 1.0 / static_cast<double>(idx.size());
      for (std::size_t j : idx) {
        const InstanceForward f = forward(p, bag.instances[j]);
        accumulate_att_pair_grad(p, bag.instances[j], f, up_num * inv_b,
                                 up_den * inv_b, grad);
      }
    } else {
      const double h = outer_f2(s, kind);
      const double hc = clamp_prob(h);
      loss -= inv_n * (y * std::log(hc) + (1.0 - y) * std::log(1.0 - hc));
      const double upstream = inv_n * (hc - y) / (hc * (1.0 - hc));
      pool_vjp(p, bag, subset, kind, s, upstream, grad);
    }
  }
  return {loss, std::move(grad)};
}

double bce_from_scores(std::span<const double> h, const BagDataset& ds) {
  double loss = 0.0;
  for (std::size_t i = 0; i < ds.bags.size(); ++i) {
    const double hc = clamp_prob(h[i]);
    const double y = static_cast<double>(ds.bags[i].label);
    loss -= y * std::log(hc) + (1.0 - y) * std::log(1.0 - hc);
  }
  return ds.bags.empty() ? 0.0 : loss / static_cast<double>(ds.bags.size());
}

double ce_loss_full(const ModelParams& p, const BagDataset& ds,
                    const PoolKind& kind) {
  std::vector<double> h;
  h.reserve(ds.bags.size());
  for (const Bag& bag : ds.bags) {
    h.push_back(pool(p, bag, full_bag_subset(bag), kind));
  }
  return bce_from_scores(h, ds);
}

}  // namespace midam
