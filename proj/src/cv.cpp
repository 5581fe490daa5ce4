#include <atomic>
#include <thread>

#include "midam/trainer.hpp"

namespace midam {

namespace {

struct TrialOutput {
  TrialResult result;
  std::vector<MetricsRow> metrics;
};

TrialOutput run_trial(const BagDataset& ds, const TrainConfig& cfg, int folds,
                      std::uint64_t seed, int fold, double test_frac,
                      bool standardize) {
  TrialOutput out;
  out.result.fold = fold;
  out.result.seed = seed;
  try {
    const auto triples = stratified_split(ds, folds, test_frac, seed);
    const SplitTriple& triple = triples[static_cast<std::size_t>(fold)];
    TrainConfig trial_cfg = cfg;
    trial_cfg.seed = mix_seed(seed, static_cast<std::uint64_t>(fold));
    TrainResult tr;
    if (standardize) {
      const Standardizer sc = Standardizer::fit(triple.train);
      tr = train(sc.apply(triple.train), sc.apply(triple.val),
                 sc.apply(triple.test), trial_cfg);
    } else {
      tr = train(triple.train, triple.val, triple.test, trial_cfg);
    }
    out.result.test_auc_at_best_val =
        tr.metrics.empty()
            ? 0.5
            : tr.metrics[static_cast<std::size_t>(tr.best_epoch - 1)].test_auc;
    out.result.best_val_auc = tr.metrics.empty() ? 0.5 : tr.best_val_auc;
    out.metrics = std::move(tr.metrics);
  } catch (const std::exception& e) {
    out.result.failed = true;
    out.result.error = e.what();
  }
  return out;
}

}  // namespace

CvResult run_cv(const BagDataset& ds, const TrainConfig& cfg, int folds,
                std::span<const std::uint64_t> seeds, double test_frac,
                bool standardize,
                const std::function<void(const TrialResult&)>& on_trial,
                int threads,
                const std::function<void(const TrialResult&,
                                         const std::vector<MetricsRow>&)>&
                    on_trial_metrics) {
  std::vector<std::pair<std::uint64_t, int>> plan;
  for (std::uint64_t seed : seeds) {
    for (int fold = 0; fold < folds; ++fold) plan.emplace_back(seed, fold);
  }
  std::vector<TrialOutput> outputs(plan.size());

  if (threads <= 1) {
    for (std::size_t k = 0; k < plan.size(); ++k) {
      outputs[k] = run_trial(ds, cfg, folds, plan[k].first, plan[k].second,
                             test_frac, standardize);
      if (on_trial) on_trial(outputs[k].result);
      if (on_trial_metrics) {
        on_trial_metrics(outputs[k].result, outputs[k].metrics);
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t k = next.fetch_add(1);
        if (k >= plan.size()) return;
        outputs[k] = run_trial(ds, cfg, folds, plan[k].first, plan[k].second,
                               test_frac, standardize);
      }
    };
    std::vector<std::thread> pool;
    const int n_workers =
        std::min<int>(threads, static_cast<int>(plan.size()));
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    for (const TrialOutput& out : outputs) {
      if (on_trial) on_trial(out.result);
      if (on_trial_metrics) on_trial_metrics(out.result, out.metrics);
    }
  }

  CvResult result;
  result.trials.reserve(outputs.size());
  for (TrialOutput& out : outputs) result.trials.push_back(out.result);
  result.summary = summarize(result.trials);
  return result;
}

}  // namespace midam
