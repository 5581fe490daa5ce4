#ifndef MIDAM_EVAL_HPP
#define MIDAM_EVAL_HPP

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "midam/objective.hpp"

namespace midam {

// Wilcoxon-Mann-Whitney AUC with the 0.5-per-tie convention, computed by
// sort-and-midrank in O((P+N) log(P+N)).
double auc(std::span<const double> scores_pos,
           std::span<const double> scores_neg);

// Deterministic full-bag pooled score per bag; evaluation never touches
// estimator state or instance subsampling.
std::vector<double> score_dataset(const ModelParams& p, const BagDataset& ds,
                                  const PoolKind& kind);

double dataset_auc(const ModelParams& p, const BagDataset& ds,
                   const PoolKind& kind);

// AUC of precomputed per-bag scores against the dataset labels.
double auc_of_scores(const BagDataset& ds, std::span<const double> scores);

struct MetricsRow {
  int epoch = 0;
  double train_auc = 0.0;
  double val_auc = 0.0;
  double test_auc = 0.0;
  double objective = 0.0;
  double upsilon_pos = std::numeric_limits<double>::quiet_NaN();
  double upsilon_neg = std::numeric_limits<double>::quiet_NaN();
  double alpha = 0.0;
  double lr = 0.0;
  long wall_ms = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);

struct TrialResult {
  int fold = 0;
  std::uint64_t seed = 0;
  double test_auc_at_best_val = 0.0;
  double best_val_auc = 0.0;
  bool failed = false;
  std::string error;
};

struct CvSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n-1)
  int n_trials = 0;
  int n_failed = 0;
};

CvSummary summarize(const std::vector<TrialResult>& trials);

}  // namespace midam

#endif
