#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "midam/vrsp.hpp"
#include "midam/eval.hpp"
#include "oracles.hpp"

using namespace midam;

namespace {

const PoolKind kSmx{PoolMethod::smoothed_max, 1.0};
const PoolKind kAtt{PoolMethod::attention, 0.0};

// Frozen-model mean squared error of the pooled prediction against the
// deterministic full-bag value, time-averaged over rounds.
double frozen_pool_error(const ModelParams& p, const BagDataset& ds,
                         const PoolKind& kind, double gamma0, std::size_t b,
                         int rounds, std::uint64_t seed, bool use_state) {
  PoolState state = init_state(ds, kind, gamma0);
  Rng rng(seed);
  std::vector<double> h_det(ds.bags.size());
  for (std::size_t i = 0; i < ds.bags.size(); ++i) {
    h_det[i] = pool(p, ds.bags[i], full_bag_subset(ds.bags[i]), kind);
  }
  double total = 0.0;
  std::size_t count = 0;
  for (int t = 0; t < rounds; ++t) {
    for (std::size_t i = 0; i < ds.bags.size(); ++i) {
      const auto subset =
          rng.sample_without_replacement(ds.bags[i].size(), b);
      const InnerValue fresh = inner_f1(p, ds.bags[i], subset, kind);
      const InnerValue est = use_state ? update(state, i, fresh) : fresh;
      const double err = outer_f2(est, kind) - h_det[i];
      total += err * err;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace

TEST_CASE("fresh state starts at zero and unvisited") {
  const BagDataset ds = generate_synthetic(3, 3, 4, 2, 1.0, 1, 0);
  const PoolState st = init_state(ds, kAtt, 0.9);
  REQUIRE(st.size() == 6);
  for (std::size_t i = 0; i < st.size(); ++i) {
    CHECK(st.s[i].s1 == 0.0);
    CHECK(st.s[i].s2 == 0.0);
    CHECK(st.visited[i] == 0);
  }
  CHECK_THROWS_AS(init_state(ds, kAtt, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(init_state(ds, kAtt, 1.5), std::invalid_argument);
}

TEST_CASE("update blends after the first visit") {
  const BagDataset ds = generate_synthetic(1, 1, 2, 2, 1.0, 1, 0);
  PoolState st = init_state(ds, kSmx, 0.5);

  InnerValue fresh;
  fresh.s1 = 2.0;
  const InnerValue first = update(st, 0, fresh);
  CHECK(first.s1 == 2.0);  // first visit copies, no blend with the zero init
  CHECK(st.visited[0] == 1);

  fresh.s1 = 4.0;
  const InnerValue second = update(st, 0, fresh);
  CHECK(second.s1 == 3.0);

  st.gamma0 = 1.0;
  fresh.s1 = 9.0;
  CHECK(update(st, 0, fresh).s1 == 9.0);

  CHECK_THROWS_AS(update(st, 17, fresh), std::out_of_range);
}

TEST_CASE("one full-bag update with gamma0=1 reproduces the exact pooling") {
  const BagDataset ds = generate_synthetic(2, 2, 6, 3, 1.5, 1, 4);
  const ModelParams p = init_params(3, 2, 9, 1.0);
  for (const PoolKind& kind : {PoolKind{PoolMethod::smoothed_max, 0.1}, kAtt}) {
    PoolState st = init_state(ds, kind, 1.0);
    for (std::size_t i = 0; i < ds.bags.size(); ++i) {
      const auto full = full_bag_subset(ds.bags[i]);
      const InnerValue s = update(st, i, inner_f1(p, ds.bags[i], full, kind));
      const double exact = pool(p, ds.bags[i], full, kind);
      CHECK(std::fabs(outer_f2(s, kind) - exact) <= 1e-12);
    }
    const EstimatorErrorReport rep = error_report(st, p, ds);
    CHECK(rep.upsilon_pos == 0.0);
    CHECK(rep.upsilon_neg == 0.0);
  }
}

TEST_CASE("error report on a fresh state equals the mean squared f1") {
  const BagDataset ds = generate_synthetic(3, 4, 5, 2, 1.0, 1, 2);
  const ModelParams zero = init_params(2, 2, 0, 0.0);
  const PoolState st = init_state(ds, kSmx, 0.9);  // tau = 1
  const EstimatorErrorReport rep = error_report(st, zero, ds);
  // every phi is 0.5, so f1 = exp(0.5) per bag and the error is e
  CHECK(rep.upsilon_pos == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
  CHECK(rep.upsilon_neg == doctest::Approx(std::exp(1.0)).epsilon(1e-12));

  // nonzero model: oracle recomputes full-bag f1 directly
  const ModelParams p = init_params(2, 2, 3, 1.0);
  const EstimatorErrorReport rep2 = error_report(st, p, ds);
  double want = 0.0;
  for (std::size_t i : ds.pos_index) {
    const InnerValue f1 =
        inner_f1(p, ds.bags[i], full_bag_subset(ds.bags[i]), kSmx);
    want += f1.s1 * f1.s1;
  }
  want /= static_cast<double>(ds.n_pos());
  CHECK(rep2.upsilon_pos == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("estimates stay inside the convex hull of fresh values") {
  const BagDataset ds = generate_synthetic(1, 1, 8, 3, 1.0, 1, 6);
  const ModelParams p = init_params(3, 2, 12, 1.0);
  const PoolKind smx{PoolMethod::smoothed_max, 0.5};
  PoolState st = init_state(ds, smx, 0.3);
  Rng rng(7);
  double lo = 1e300, hi = -1e300;
  for (int t = 0; t < 100; ++t) {
    const auto subset = rng.sample_without_replacement(8, 2);
    const InnerValue fresh = inner_f1(p, ds.bags[0], subset, smx);
    lo = std::min(lo, fresh.s1);
    hi = std::max(hi, fresh.s1);
    const InnerValue s = update(st, 0, fresh);
    CHECK(s.s1 >= lo - 1e-12);
    CHECK(s.s1 <= hi + 1e-12);
    // phi in (0,1) caps the estimate at exp(1/tau)
    CHECK(s.s1 <= std::exp(1.0 / smx.tau));
    CHECK(s.s1 >= std::exp(0.0));
  }
}

TEST_CASE("mini-batch inner values are unbiased for the full-bag value") {
  const BagDataset ds = generate_synthetic(1, 1, 8, 3, 1.0, 1, 8);
  const ModelParams p = init_params(3, 2, 5, 1.0);
  Rng rng(11);
  for (const PoolKind& kind : {PoolKind{PoolMethod::smoothed_max, 0.5}, kAtt}) {
    const Bag& bag = ds.bags[0];
    const InnerValue full = inner_f1(p, bag, full_bag_subset(bag), kind);
    InnerValue acc;
    const int draws = 20000;
    for (int t = 0; t < draws; ++t) {
      const auto subset = rng.sample_without_replacement(8, 2);
      const InnerValue fresh = inner_f1(p, bag, subset, kind);
      acc.s1 += fresh.s1;
      acc.s2 += fresh.s2;
    }
    acc.s1 /= draws;
    acc.s2 /= draws;
    CHECK(std::fabs(acc.s1 - full.s1) / std::fabs(full.s1) <= 0.01);
    if (kind.method == PoolMethod::attention) {
      CHECK(std::fabs(acc.s2 - full.s2) / std::fabs(full.s2) <= 0.01);
    }
  }
}

TEST_CASE("frozen model: smaller gamma0 reaches a lower error floor") {
  const BagDataset ds = generate_synthetic(2, 2, 16, 3, 1.0, 2, 14);
  const ModelParams p = init_params(3, 2, 20, 1.0);
  const PoolKind smx{PoolMethod::smoothed_max, 0.5};
  double err_small = 0.0, err_large = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    err_small += frozen_pool_error(p, ds, smx, 0.1, 4, 400, seed, true);
    err_large += frozen_pool_error(p, ds, smx, 0.9, 4, 400, seed, true);
  }
  CHECK(err_small < err_large);
}

TEST_CASE("variance-reduced pooling beats naive mini-batch pooling") {
  const BagDataset ds = generate_synthetic(2, 2, 16, 3, 1.0, 2, 15);
  const ModelParams p = init_params(3, 2, 33, 1.0);
  for (const PoolKind& kind : {PoolKind{PoolMethod::smoothed_max, 0.5}, kAtt}) {
    CAPTURE(pool_kind_name(kind));
    double vrsp = 0.0, naive = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      vrsp += frozen_pool_error(p, ds, kind, 0.1, 2, 400, seed, true);
      naive += frozen_pool_error(p, ds, kind, 0.1, 2, 400, seed + 100, false);
    }
    CHECK(vrsp < naive);
  }
}
