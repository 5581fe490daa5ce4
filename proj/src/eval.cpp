#include "midam/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace midam {

double auc(std::span<const double> scores_pos,
           std::span<const double> scores_neg) {
  if (scores_pos.empty() || scores_neg.empty()) {
    throw std::invalid_argument("auc needs at least one score per class");
  }
  const std::size_t np = scores_pos.size();
  const std::size_t nn = scores_neg.size();
  std::vector<std::pair<double, bool>> all;
  all.reserve(np + nn);
  for (double v : scores_pos) all.emplace_back(v, true);
  for (double v : scores_neg) all.emplace_back(v, false);
  std::sort(all.begin(), all.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });

  // midranks over tie groups; rank sum of positives gives the U statistic
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double midrank =
        0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].second) rank_sum_pos += midrank;
    }
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(np) *
                                      static_cast<double>(np + 1);
  return u / (static_cast<double>(np) * static_cast<double>(nn));
}

std::vector<double> score_dataset(const ModelParams& p, const BagDataset& ds,
                                  const PoolKind& kind) {
  std::vector<double> scores;
  scores.reserve(ds.bags.size());
  for (const Bag& bag : ds.bags) {
    const auto full = full_bag_subset(bag);
    scores.push_back(pool(p, bag, full, kind));
  }
  return scores;
}

double auc_of_scores(const BagDataset& ds, std::span<const double> scores) {
  std::vector<double> pos, neg;
  pos.reserve(ds.n_pos());
  neg.reserve(ds.n_neg());
  for (std::size_t i : ds.pos_index) pos.push_back(scores[i]);
  for (std::size_t i : ds.neg_index) neg.push_back(scores[i]);
  return auc(pos, neg);
}

double dataset_auc(const ModelParams& p, const BagDataset& ds,
                   const PoolKind& kind) {
  return auc_of_scores(ds, score_dataset(p, ds, kind));
}

std::string metrics_csv_header() {
  return "epoch,train_auc,val_auc,test_auc,objective,upsilon_pos,upsilon_neg,"
         "alpha,lr,wall_ms";
}

namespace {

void append_num(std::string& out, double v) {
  if (std::isnan(v)) return;  // skipped diagnostic -> empty field
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  out += buf;
}

}  // namespace

std::string metrics_csv_line(const MetricsRow& row) {
  std::string out = std::to_string(row.epoch);
  out += ',';
  append_num(out, row.train_auc);
  out += ',';
  append_num(out, row.val_auc);
  out += ',';
  append_num(out, row.test_auc);
  out += ',';
  append_num(out, row.objective);
  out += ',';
  append_num(out, row.upsilon_pos);
  out += ',';
  append_num(out, row.upsilon_neg);
  out += ',';
  append_num(out, row.alpha);
  out += ',';
  append_num(out, row.lr);
  out += ',';
  out += std::to_string(row.wall_ms);
  return out;
}

CvSummary summarize(const std::vector<TrialResult>& trials) {
  CvSummary s;
  s.n_trials = static_cast<int>(trials.size());
  double sum = 0.0;
  int n_ok = 0;
  for (const auto& t : trials) {
    if (t.failed) {
      ++s.n_failed;
      continue;
    }
    sum += t.test_auc_at_best_val;
    ++n_ok;
  }
  if (n_ok > 0) s.mean = sum / n_ok;
  if (n_ok > 1) {
    double ss = 0.0;
    for (const auto& t : trials) {
      if (t.failed) continue;
      const double d = t.test_auc_at_best_val - s.mean;
      ss += d * d;
    }
    s.stddev = std::sqrt(ss / (n_ok - 1));
  }
  return s;
}

}  // namespace midam
