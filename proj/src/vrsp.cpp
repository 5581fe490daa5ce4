#include "midam/vrsp.hpp"

#include <stdexcept>

namespace midam {

PoolState init_state(const BagDataset& ds, const PoolKind& kind,
                     double gamma0) {
  if (!(gamma0 > 0.0 && gamma0 <= 1.0)) {
    throw std::invalid_argument("gamma0 must be in (0, 1]");
  }
  PoolState state;
  state.kind = kind;
  state.gamma0 = gamma0;
  state.s.assign(ds.bags.size(), InnerValue{});
  state.visited.assign(ds.bags.size(), 0);
  return state;
}

InnerValue update(PoolState& state, std::size_t bag_idx,
                  const InnerValue& fresh) {
  if (bag_idx >= state.s.size()) {
    throw std::out_of_range("pool state has no bag " + std::to_string(bag_idx));
  }
  InnerValue& s = state.s[bag_idx];
  if (!state.visited[bag_idx]) {
    s = fresh;
    state.visited[bag_idx] = 1;
  } else {
    const double g = state.gamma0;
    s.s1 = (1.0 - g) * s.s1 + g * fresh.s1;
    s.s2 = (1.0 - g) * s.s2 + g * fresh.s2;
  }
  return s;
}

EstimatorErrorReport error_report(const PoolState& state,
                                  const ModelParams& p, const BagDataset& ds) {
  if (state.s.size() != ds.bags.size()) {
    throw std::invalid_argument("pool state does not match dataset");
  }
  EstimatorErrorReport rep;
  for (std::size_t i : ds.pos_index) {
    const auto full = full_bag_subset(ds.bags[i]);
    const InnerValue f1 = inner_f1(p, ds.bags[i], full, state.kind);
    rep.upsilon_pos += inner_sq_dist(state.s[i], f1, state.kind);
  }
  for (std::size_t i : ds.neg_index) {
    const auto full = full_bag_subset(ds.bags[i]);
    const InnerValue f1 = inner_f1(p, ds.bags[i], full, state.kind);
    rep.upsilon_neg += inner_sq_dist(state.s[i], f1, state.kind);
  }
  if (!ds.pos_index.empty()) {
    rep.upsilon_pos /= static_cast<double>(ds.pos_index.size());
  }
  if (!ds.neg_index.empty()) {
    rep.upsilon_neg /= static_cast<double>(ds.neg_index.size());
  }
  return rep;
}

}  // namespace midam
