#ifndef MIDAM_POOLING_HPP
#define MIDAM_POOLING_HPP

#include <span>
#include <string>

#include "midam/model.hpp"

namespace midam {

enum class PoolMethod { mean, max, smoothed_max, attention };

struct PoolKind {
  PoolMethod method = PoolMethod::smoothed_max;
  double tau = 0.1;  // smoothed_max temperature
};

PoolKind parse_pool_kind(const std::string& name, double tau);
std::string pool_kind_name(const PoolKind& kind);

// Value of the inner (averaged) part of a pooling over an instance subset.
// Attention uses both slots: s1 = mean exp(g)*delta, s2 = mean exp(g).
// The other kinds use s1 only: mean of phi, max of phi, or mean exp(phi/tau).
struct InnerValue {
  double s1 = 0.0;
  double s2 = 0.0;
};

inline std::size_t inner_dim(const PoolKind& kind) {
  return kind.method == PoolMethod::attention ? 2 : 1;
}

// Squared distance in the inner-value space (1 or 2 components).
double inner_sq_dist(const InnerValue& u, const InnerValue& v,
                     const PoolKind& kind);

// Denominator floor applied to the attention s2 component.
inline constexpr double kAttDenFloor = 1e-12;

// Exact mean (or max) of per-instance quantities over the subset,
// reduced in ascending instance order.
InnerValue inner_f1(const ModelParams& p, const Bag& bag,
                    std::span<const std::size_t> subset,
                    const PoolKind& kind);

// Cheap outer map: identity for mean/max, tau*log(s1) for smoothed_max,
// sigmoid(s1/s2) for attention.
double outer_f2(const InnerValue& s, const PoolKind& kind);

// Deterministic pooled prediction over the subset (the whole bag when
// subset covers it).
double pool(const ModelParams& p, const Bag& bag,
            std::span<const std::size_t> subset, const PoolKind& kind);

// Accumulates upstream * grad_f1(subset at p) * grad_f2(s_eval) into acc.
// s_eval is the inner value at which the outer derivative is taken; it may
// differ from the subset's own inner value (estimator-based training).
// For mean/max s_eval is ignored.
void pool_vjp(const ModelParams& p, const Bag& bag,
              std::span<const std::size_t> subset, const PoolKind& kind,
              const InnerValue& s_eval, double upstream, ParamGrad& acc);

std::vector<std::size_t> full_bag_subset(const Bag& bag);

}  // namespace midam

#endif
