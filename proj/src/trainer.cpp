#include "midam/trainer.hpp"

#include <chrono>
#include <limits>
#include <cmath>
#include <stdexcept>

namespace midam {

Method parse_method(const std::string& name) {
  if (name == "midam") return Method::midam;
  if (name == "dam_mb") return Method::dam_mb;
  if (name == "ce") return Method::ce;
  throw std::invalid_argument("unknown method '" + name + "'");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::midam:
      return "midam";
    case Method::dam_mb:
      return "dam_mb";
    case Method::ce:
      return "ce";
  }
  return "?";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "momentum") return OptimizerKind::momentum;
  if (name == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

std::string optimizer_name(OptimizerKind o) {
  return o == OptimizerKind::momentum ? "momentum" : "adam";
}

void TrainConfig::validate() const {
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (method != Method::ce && eta >= 0.5) {
    throw std::invalid_argument(
        "eta must be below 0.5 so the a/b updates stay convex combinations");
  }
  if (!(gamma0 > 0.0 && gamma0 <= 1.0)) {
    throw std::invalid_argument("gamma0 must be in (0, 1]");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0)) {
    throw std::invalid_argument("beta1 must be in [0, 1)");
  }
  if (!(eta_prime > 0.0)) {
    throw std::invalid_argument("eta_prime must be positive");
  }
  if (s_pos < 1 || s_neg < 1) {
    throw std::invalid_argument("bag batch sizes must be >= 1");
  }
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(margin_cfg.margin > 0.0)) {
    throw std::invalid_argument("margin must be positive");
  }
  if (!(margin_cfg.omega_upper > 0.0)) {
    throw std::invalid_argument("omega_upper must be positive");
  }
}

std::size_t TrainConfig::resolve_attention_dim(std::size_t d) const {
  if (attention_dim > 0) return attention_dim;
  return std::max<std::size_t>(4, (d + 1) / 2);
}

MomentumState MomentumState::zeros_like(const ModelParams& p) {
  MomentumState mom;
  mom.v_w = ParamGrad::zeros_like(p);
  mom.u_w = ParamGrad::zeros_like(p);
  return mom;
}

void LiveRates::decay(const TrainConfig& cfg) {
  eta /= cfg.lr_decay_factor;
  eta_prime /= cfg.mom_gamma_decay_factor;
  beta1 = 1.0 - (1.0 - beta1) / cfg.mom_gamma_decay_factor;
  gamma0 /= cfg.mom_gamma_decay_factor;
}

namespace {

void check_finite(const GradEstimate& g, long step) {
  if (g.all_finite()) return;
  std::string which = "g_w";
  if (!std::isfinite(g.g_a)) which = "g_a";
  if (!std::isfinite(g.g_b)) which = "g_b";
  if (!std::isfinite(g.g_alpha)) which = "g_alpha";
  throw std::runtime_error("non-finite gradient estimate (" + which +
                           ") at step " + std::to_string(step));
}

// v <- beta1 v + (1 - beta1) g for the (w, a, b) blocks, then either the
// plain momentum step or the Adam-style normalized step.
void apply_primal_update(ModelParams& p, MomentumState& mom,
                         const GradEstimate& g, const TrainConfig& cfg,
                         const LiveRates& rates, bool update_ab) {
  const double b1 = rates.beta1;
  mom.v_w.scale(b1);
  mom.v_w.axpy(1.0 - b1, g.g_w);
  if (update_ab) {
    mom.v_a = b1 * mom.v_a + (1.0 - b1) * g.g_a;
    mom.v_b = b1 * mom.v_b + (1.0 - b1) * g.g_b;
  }
  mom.step += 1;
  mom.beta1_prod *= b1;

  if (cfg.optimizer == OptimizerKind::momentum) {
    const double eta = rates.eta;
    for (std::size_t i = 0; i < p.W1.size(); ++i)
      p.W1[i] -= eta * mom.v_w.W1[i];
    for (std::size_t i = 0; i < p.b1.size(); ++i)
      p.b1[i] -= eta * mom.v_w.b1[i];
    for (std::size_t i = 0; i < p.w_c.size(); ++i)
      p.w_c[i] -= eta * mom.v_w.w_c[i];
    p.c0 -= eta * mom.v_w.c0;
    for (std::size_t i = 0; i < p.V.size(); ++i) p.V[i] -= eta * mom.v_w.V[i];
    for (std::size_t i = 0; i < p.w_a.size(); ++i)
      p.w_a[i] -= eta * mom.v_w.w_a[i];
    if (update_ab) {
      p.a -= eta * mom.v_a;
      p.b -= eta * mom.v_b;
    }
    return;
  }

  // Adam-style: second moments of the raw gradient, bias-corrected
  const double b2 = cfg.adam_beta2;
  mom.beta2_prod *= b2;
  const double corr1 = 1.0 - mom.beta1_prod;
  const double corr2 = 1.0 - mom.beta2_prod;
  const double eps = cfg.adam_eps;
  const double eta = rates.eta;
  auto adam_axis = [&](std::vector<double>& theta, std::vector<double>& u,
                       const std::vector<double>& v,
                       const std::vector<double>& gr) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      u[i] = b2 * u[i] + (1.0 - b2) * gr[i] * gr[i];
      const double mhat = v[i] / corr1;
      const double uhat = u[i] / corr2;
      theta[i] -= eta * mhat / (std::sqrt(uhat) + eps);
    }
  };
  adam_axis(p.W1, mom.u_w.W1, mom.v_w.W1, g.g_w.W1);
  adam_axis(p.b1, mom.u_w.b1, mom.v_w.b1, g.g_w.b1);
  adam_axis(p.w_c, mom.u_w.w_c, mom.v_w.w_c, g.g_w.w_c);
  mom.u_w.c0 = b2 * mom.u_w.c0 + (1.0 - b2) * g.g_w.c0 * g.g_w.c0;
  p.c0 -= eta * (mom.v_w.c0 / corr1) / (std::sqrt(mom.u_w.c0 / corr2) + eps);
  adam_axis(p.V, mom.u_w.V, mom.v_w.V, g.g_w.V);
  adam_axis(p.w_a, mom.u_w.w_a, mom.v_w.w_a, g.g_w.w_a);
  if (update_ab) {
    mom.u_a = b2 * mom.u_a + (1.0 - b2) * g.g_a * g.g_a;
    mom.u_b = b2 * mom.u_b + (1.0 - b2) * g.g_b * g.g_b;
    p.a -= eta * (mom.v_a / corr1) / (std::sqrt(mom.u_a / corr2) + eps);
    p.b -= eta * (mom.v_b / corr1) / (std::sqrt(mom.u_b / corr2) + eps);
  }
}

void apply_dual_update(ModelParams& p, double g_alpha, double eta_prime,
                       const MarginConfig& cfg) {
  double alpha = p.alpha + eta_prime * (g_alpha - p.alpha);
  alpha = std::max(0.0, std::min(alpha, cfg.omega_upper));
  p.alpha = alpha;
}

void check_params_finite(const ModelParams& p, long step) {
  bool ok = std::isfinite(p.c0) && std::isfinite(p.a) && std::isfinite(p.b) &&
            std::isfinite(p.alpha);
  for (double v : p.W1) ok = ok && std::isfinite(v);
  for (double v : p.b1) ok = ok && std::isfinite(v);
  for (double v : p.w_c) ok = ok && std::isfinite(v);
  for (double v : p.V) ok = ok && std::isfinite(v);
  for (double v : p.w_a) ok = ok && std::isfinite(v);
  if (!ok) {
    throw std::runtime_error("non-finite parameters after step " +
                             std::to_string(step));
  }
}

std::size_t effective_b(const TrainConfig& cfg, const BagDataset& ds) {
  return cfg.b == 0 ? ds.max_bag_size() : cfg.b;
}

}  // namespace

void midam_step(ModelParams& p, const BagDataset& ds, BagSampler& sampler,
                PoolState& state, MomentumState& mom, const TrainConfig& cfg,
                const LiveRates& rates) {
  const SampleBatch batch =
      sampler.next(std::min(cfg.s_pos, ds.n_pos()),
                   std::min(cfg.s_neg, ds.n_neg()), effective_b(cfg, ds));
  state.gamma0 = rates.gamma0;
  std::vector<InnerValue> s_used;
  s_used.reserve(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const std::size_t id = batch.bag_ids[k];
    const InnerValue fresh =
        inner_f1(p, ds.bags[id], batch.per_bag_instances[k], state.kind);
    s_used.push_back(update(state, id, fresh));
  }
  const GradEstimate g = grad_estimators(p, ds, batch, s_used, state.kind,
                                         cfg.margin_cfg, cfg.weight_decay);
  check_finite(g, mom.step + 1);
  apply_primal_update(p, mom, g, cfg, rates, /*update_ab=*/true);
  apply_dual_update(p, g.g_alpha, rates.eta_prime, cfg.margin_cfg);
  check_params_finite(p, mom.step);
}

void dam_mb_step(ModelParams& p, const BagDataset& ds, BagSampler& sampler,
                 MomentumState& mom, const TrainConfig& cfg,
                 const LiveRates& rates) {
  const SampleBatch batch =
      sampler.next(std::min(cfg.s_pos, ds.n_pos()),
                   std::min(cfg.s_neg, ds.n_neg()), effective_b(cfg, ds));
  std::vector<InnerValue> s_used;
  s_used.reserve(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    s_used.push_back(inner_f1(p, ds.bags[batch.bag_ids[k]],
                              batch.per_bag_instances[k], cfg.kind));
  }
  const GradEstimate g = grad_estimators(p, ds, batch, s_used, cfg.kind,
                                         cfg.margin_cfg, cfg.weight_decay);
  check_finite(g, mom.step + 1);
  apply_primal_update(p, mom, g, cfg, rates, /*update_ab=*/true);
  apply_dual_update(p, g.g_alpha, rates.eta_prime, cfg.margin_cfg);
  check_params_finite(p, mom.step);
}

void ce_step(ModelParams& p, const BagDataset& ds, BagSampler& sampler,
             MomentumState& mom, const TrainConfig& cfg,
             const LiveRates& rates) {
  const SampleBatch batch =
      sampler.next(std::min(cfg.s_pos, ds.n_pos()),
                   std::min(cfg.s_neg, ds.n_neg()), effective_b(cfg, ds));
  auto [loss, grad] = ce_loss_and_grad(p, ds, batch, cfg.kind);
  (void)loss;
  if (cfg.weight_decay != 0.0) {
    for (std::size_t i = 0; i < grad.W1.size(); ++i)
      grad.W1[i] += cfg.weight_decay * p.W1[i];
    for (std::size_t i = 0; i < grad.b1.size(); ++i)
      grad.b1[i] += cfg.weight_decay * p.b1[i];
    for (std::size_t i = 0; i < grad.w_c.size(); ++i)
      grad.w_c[i] += cfg.weight_decay * p.w_c[i];
    grad.c0 += cfg.weight_decay * p.c0;
    for (std::size_t i = 0; i < grad.V.size(); ++i)
      grad.V[i] += cfg.weight_decay * p.V[i];
    for (std::size_t i = 0; i < grad.w_a.size(); ++i)
      grad.w_a[i] += cfg.weight_decay * p.w_a[i];
  }
  GradEstimate g;
  g.g_w = std::move(grad);
  check_finite(g, mom.step + 1);
  apply_primal_update(p, mom, g, cfg, rates, /*update_ab=*/false);
  check_params_finite(p, mom.step);
}

TrainResult train(const BagDataset& ds_train, const BagDataset& ds_val,
                  const BagDataset& ds_test, const TrainConfig& cfg,
                  const EpochHook& on_epoch) {
  cfg.validate();
  if (ds_train.pos_index.empty() || ds_train.neg_index.empty()) {
    throw std::invalid_argument("training set needs both classes");
  }
  const std::size_t d = ds_train.dim;
  const std::size_t m = cfg.resolve_attention_dim(d);
  ModelParams p = init_params(d, m, cfg.seed, cfg.init_scale);
  BagSampler sampler(ds_train, mix_seed(cfg.seed, 0xBA6ULL));
  PoolState state = init_state(ds_train, cfg.kind, cfg.gamma0);
  MomentumState mom = MomentumState::zeros_like(p);
  LiveRates rates(cfg);

  TrainResult result;
  result.best_params = p;
  result.best_val_auc = -1.0;

  const std::size_t s_pos = std::min(cfg.s_pos, ds_train.n_pos());
  const std::size_t s_neg = std::min(cfg.s_neg, ds_train.n_neg());
  const std::size_t steps_per_epoch = static_cast<std::size_t>(std::max(
      (ds_train.n_pos() + s_pos - 1) / s_pos,
      (ds_train.n_neg() + s_neg - 1) / s_neg));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      switch (cfg.method) {
        case Method::midam:
          midam_step(p, ds_train, sampler, state, mom, cfg, rates);
          break;
        case Method::dam_mb:
          dam_mb_step(p, ds_train, sampler, mom, cfg, rates);
          break;
        case Method::ce:
          ce_step(p, ds_train, sampler, mom, cfg, rates);
          break;
      }
    }

    MetricsRow row;
    row.epoch = epoch;
    const double skipped = std::numeric_limits<double>::quiet_NaN();
    if (cfg.eval_train) {
      // one scoring pass feeds both the AUC and the objective value
      const auto scores = score_dataset(p, ds_train, cfg.kind);
      row.train_auc = auc_of_scores(ds_train, scores);
      row.objective =
          cfg.method == Method::ce
              ? bce_from_scores(scores, ds_train)
              : eval_from_scores(scores, ds_train, p.a, p.b, p.alpha,
                                 cfg.margin_cfg)
                    .total;
    } else {
      row.train_auc = skipped;
      row.objective = skipped;
    }
    row.val_auc = cfg.eval_val ? dataset_auc(p, ds_val, cfg.kind) : skipped;
    row.test_auc = cfg.eval_test ? dataset_auc(p, ds_test, cfg.kind) : skipped;
    if (cfg.method == Method::midam && cfg.upsilon_every > 0 &&
        epoch % cfg.upsilon_every == 0) {
      const EstimatorErrorReport rep = error_report(state, p, ds_train);
      row.upsilon_pos = rep.upsilon_pos;
      row.upsilon_neg = rep.upsilon_neg;
    }
    row.alpha = p.alpha;
    row.lr = rates.eta;
    row.wall_ms = static_cast<long>(
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - t0)
            .count());
    result.metrics.push_back(row);

    if (cfg.eval_val ? row.val_auc > result.best_val_auc : true) {
      // without validation scoring the final epoch wins
      result.best_val_auc = cfg.eval_val ? row.val_auc : 0.0;
      result.best_epoch = epoch;
      result.best_params = p;
    }
    if (on_epoch) {
      on_epoch(row, p, cfg.method == Method::midam ? &state : nullptr);
    }

    if (cfg.eval_train && cfg.stop_at_train_auc > 0.0 &&
        row.train_auc >= cfg.stop_at_train_auc) {
      break;
    }
    for (int decay_epoch : cfg.lr_decay_epochs) {
      if (epoch == decay_epoch) rates.decay(cfg);
    }
  }
  return result;
}

}  // namespace midam
