#ifndef MIDAM_VRSP_HPP
#define MIDAM_VRSP_HPP

#include "midam/pooling.hpp"

namespace midam {

// Per-bag moving-average estimates of the inner pooling value. A slot is
// zero until its bag is first sampled; the first visit copies the fresh
// value instead of blending with the zero init.
struct PoolState {
  PoolKind kind;
  double gamma0 = 0.9;
  std::vector<InnerValue> s;
  std::vector<char> visited;

  std::size_t size() const { return s.size(); }
};

struct EstimatorErrorReport {
  double upsilon_pos = 0.0;  // mean over positive bags of |s - f1(full bag)|^2
  double upsilon_neg = 0.0;
};

PoolState init_state(const BagDataset& ds, const PoolKind& kind,
                     double gamma0);

// Moving-average update for one sampled bag; returns the new estimate.
InnerValue update(PoolState& state, std::size_t bag_idx,
                  const InnerValue& fresh);

// Full-dataset diagnostic; costs one forward pass over every instance.
EstimatorErrorReport error_report(const PoolState& state,
                                  const ModelParams& p, const BagDataset& ds);

}  // namespace midam

#endif
