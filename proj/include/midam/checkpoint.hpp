#ifndef MIDAM_CHECKPOINT_HPP
#define MIDAM_CHECKPOINT_HPP

#include <optional>
#include <string>

#include "midam/vrsp.hpp"

namespace midam {

// Text checkpoint: a "midam-checkpoint 1" banner, then one block per array,
//
//   array <name> <rows> <cols>
//   <cols> values per row, space separated, 17 significant digits
//
// Model arrays: W1, b1, w_c, c0, V, w_a, a, b, alpha (scalars are 1x1).
// When the pooling state is included: pool_s (one row per bag) and
// pool_visited.
void save_checkpoint(const std::string& path, const ModelParams& p,
                     const PoolState* state = nullptr);

struct Checkpoint {
  ModelParams params;
  std::optional<PoolState> state;  // kind/gamma0 are not stored; caller sets
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace midam

#endif
