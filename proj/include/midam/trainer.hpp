#ifndef MIDAM_TRAINER_HPP
#define MIDAM_TRAINER_HPP

#include <functional>

#include "midam/eval.hpp"

namespace midam {

enum class Method { midam, dam_mb, ce };
enum class OptimizerKind { momentum, adam };

Method parse_method(const std::string& name);
std::string method_name(Method m);
OptimizerKind parse_optimizer(const std::string& name);
std::string optimizer_name(OptimizerKind o);

struct TrainConfig {
  Method method = Method::midam;
  PoolKind kind{PoolMethod::smoothed_max, 0.1};
  std::size_t s_pos = 8;
  std::size_t s_neg = 8;
  std::size_t b = 4;  // instances sampled per bag; 0 means whole bag
  double eta = 0.01;
  double eta_prime = 1.0;
  double beta1 = 0.1;  // momentum retention; the fresh gradient gets 1-beta1
  double gamma0 = 0.9;
  int epochs = 100;
  std::vector<int> lr_decay_epochs{50, 75};
  double lr_decay_factor = 10.0;
  // eta_prime, 1-beta1 and gamma0 all shrink by this factor at the same
  // epochs as the learning rate
  double mom_gamma_decay_factor = 2.0;
  double weight_decay = 1e-4;
  MarginConfig margin_cfg{};
  OptimizerKind optimizer = OptimizerKind::momentum;
  double adam_eps = 1e-8;
  double adam_beta2 = 0.999;
  std::uint64_t seed = 0;
  std::size_t attention_dim = 0;  // 0: d/2 rounded up, floor of 4
  double init_scale = 1.0;
  int upsilon_every = 0;  // estimator-error report cadence in epochs; 0 off
  // per-epoch scoring can be narrowed when only parts of the metrics are
  // needed; skipped splits report empty fields
  bool eval_train = true;
  bool eval_val = true;  // false disables best-validation selection
  bool eval_test = true;
  // end the run early once the training AUC reaches this level (0 = off)
  double stop_at_train_auc = 0.0;

  void validate() const;
  std::size_t resolve_attention_dim(std::size_t d) const;
};

// First and (for Adam) second moment accumulators for (w, a, b).
struct MomentumState {
  ParamGrad v_w;
  double v_a = 0.0;
  double v_b = 0.0;
  ParamGrad u_w;
  double u_a = 0.0;
  double u_b = 0.0;
  long step = 0;
  double beta1_prod = 1.0;
  double beta2_prod = 1.0;

  static MomentumState zeros_like(const ModelParams& p);
};

// Schedule-decayed values live here so one config can describe a whole run.
struct LiveRates {
  double eta;
  double eta_prime;
  double beta1;
  double gamma0;

  explicit LiveRates(const TrainConfig& cfg)
      : eta(cfg.eta),
        eta_prime(cfg.eta_prime),
        beta1(cfg.beta1),
        gamma0(cfg.gamma0) {}
  void decay(const TrainConfig& cfg);
};

// One iteration: sample bags and instances, refresh the sampled pooling
// estimates, assemble the stochastic gradient at the refreshed estimates,
// then momentum (or Adam) step on (w, a, b) and projected ascent on alpha.
void midam_step(ModelParams& p, const BagDataset& ds, BagSampler& sampler,
                PoolState& state, MomentumState& mom, const TrainConfig& cfg,
                const LiveRates& rates);

// Same update with the fresh mini-batch inner value in place of the
// moving-average estimate; keeps no per-bag state.
void dam_mb_step(ModelParams& p, const BagDataset& ds, BagSampler& sampler,
                 MomentumState& mom, const TrainConfig& cfg,
                 const LiveRates& rates);

// Cross-entropy baseline step (mini-batch pooling, weights only).
void ce_step(ModelParams& p, const BagDataset& ds, BagSampler& sampler,
             MomentumState& mom, const TrainConfig& cfg,
             const LiveRates& rates);

struct TrainResult {
  ModelParams best_params;
  std::vector<MetricsRow> metrics;
  int best_epoch = 0;
  double best_val_auc = 0.0;
};

using EpochHook = std::function<void(
    const MetricsRow&, const ModelParams&, const PoolState*)>;

// Full training loop with the epoch-indexed decay schedule; returns the
// parameters from the epoch with the highest validation AUC.
TrainResult train(const BagDataset& ds_train, const BagDataset& ds_val,
                  const BagDataset& ds_test, const TrainConfig& cfg,
                  const EpochHook& on_epoch = nullptr);

struct CvResult {
  std::vector<TrialResult> trials;
  CvSummary summary;
};

// Stratified k-fold cross validation repeated over seeds; a failing trial
// is recorded and the remaining trials still run. Trials are independent
// and run on `threads` workers, each trial seeded from (seed, fold), so
// the results do not depend on the thread count.
CvResult run_cv(const BagDataset& ds, const TrainConfig& cfg, int folds,
                std::span<const std::uint64_t> seeds, double test_frac,
                bool standardize,
                const std::function<void(const TrialResult&)>& on_trial =
                    nullptr,
                int threads = 1,
                const std::function<void(const TrialResult&,
                                         const std::vector<MetricsRow>&)>&
                    on_trial_metrics = nullptr);

}  // namespace midam

#endif
