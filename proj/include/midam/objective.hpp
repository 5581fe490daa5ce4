#ifndef MIDAM_OBJECTIVE_HPP
#define MIDAM_OBJECTIVE_HPP

#include <utility>

#include "midam/vrsp.hpp"

namespace midam {

struct MarginConfig {
  double margin = 0.1;       // pushes mean positive above mean negative
  double omega_upper = 10.0; // dual feasible interval is [0, omega_upper]
};

// total = f1_term + f2_term + f3_term:
//   f1_term: mean over positive bags of (h - a)^2
//   f2_term: mean over negative bags of (h - b)^2
//   f3_term: alpha * (margin + mean_neg h - mean_pos h) - alpha^2 / 2
struct ObjectiveValue {
  double f1_term = 0.0;
  double f2_term = 0.0;
  double f3_term = 0.0;
  double total = 0.0;
};

struct GradEstimate {
  ParamGrad g_w;
  double g_a = 0.0;
  double g_b = 0.0;
  double g_alpha = 0.0;  // margin + mean_neg f2(s) - mean_pos f2(s)

  bool all_finite() const;
};

// Deterministic objective over full bags; diagnostic only.
ObjectiveValue eval_full(const ModelParams& p, const BagDataset& ds,
                         const PoolKind& kind, const MarginConfig& cfg);

// Same objective assembled from precomputed full-bag scores.
ObjectiveValue eval_from_scores(std::span<const double> h,
                                const BagDataset& ds, double a, double b,
                                double alpha, const MarginConfig& cfg);

// Mean binary cross-entropy of precomputed full-bag scores.
double bce_from_scores(std::span<const double> h, const BagDataset& ds);

// Unique maximizer of alpha*z - alpha^2/2 over [0, omega_upper]
// with z = margin + mean_neg_h - mean_pos_h.
double optimal_alpha(double mean_pos_h, double mean_neg_h,
                     const MarginConfig& cfg);

// Stochastic gradient of the min-max objective assembled from the batch.
// s_used[k] is the inner estimate for batch bag k (the moving-average value
// for the variance-reduced path, or the fresh mini-batch value for the
// naive baseline). weight_decay adds lambda * w to the weight block.
GradEstimate grad_estimators(const ModelParams& p, const BagDataset& ds,
                             const SampleBatch& batch,
                             std::span<const InnerValue> s_used,
                             const PoolKind& kind, const MarginConfig& cfg,
                             double weight_decay = 0.0);

// Overload reading the estimates out of the pool state.
GradEstimate grad_estimators(const ModelParams& p, const BagDataset& ds,
                             const SampleBatch& batch, const PoolState& state,
                             const MarginConfig& cfg,
                             double weight_decay = 0.0);

// Mean binary cross-entropy of the pooled prediction over the batch bags
// (naive mini-batch pooling, no estimator state) and its weight gradient.
std::pair<double, ParamGrad> ce_loss_and_grad(const ModelParams& p,
                                              const BagDataset& ds,
                                              const SampleBatch& batch,
                                              const PoolKind& kind);

// Deterministic full-bag CE loss over a dataset; diagnostic only.
double ce_loss_full(const ModelParams& p, const BagDataset& ds,
                    const PoolKind& kind);

}  // namespace midam

#endif
