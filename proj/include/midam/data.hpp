#ifndef MIDAM_DATA_HPP
#define MIDAM_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "midam/rng.hpp"

namespace midam {

struct Instance {
  std::vector<double> features;
};

struct Bag {
  int id = 0;
  int label = 0;  // 0 or 1
  std::vector<Instance> instances;

  std::size_t size() const { return instances.size(); }
};

// A labeled multi-instance dataset. Immutable after construction; the
// pos/neg index vectors partition [0, bags.size()).
struct BagDataset {
  std::vector<Bag> bags;
  std::vector<std::size_t> pos_index;
  std::vector<std::size_t> neg_index;
  std::size_t dim = 0;

  std::size_t n_pos() const { return pos_index.size(); }
  std::size_t n_neg() const { return neg_index.size(); }
  std::size_t max_bag_size() const;

  // Rebuilds pos_index/neg_index from labels and validates invariants
  // (nonempty bags, consistent feature dimension).
  void rebuild_index();
};

struct CsvOptions {
  bool has_header = false;
};

// Canonical CSV: one instance per row, columns bag_id,label,f0..f{d-1}.
// All rows of a bag must carry the same label; row order within a bag is
// preserved. Feature dimension is inferred from the first data row.
BagDataset load_csv(const std::string& path, const CsvOptions& opts = {});

// Inverse of load_csv up to float-to-text round-trip (17 significant digits).
void save_csv(const BagDataset& ds, const std::string& path,
              const CsvOptions& opts = {});

// Gaussian witness model: negative bags are standard normal in d dims;
// positive bags carry `witness_count` instances with every coordinate
// shifted by `witness_shift`. Positive bags come first (ids 0..n_pos-1).
BagDataset generate_synthetic(int n_pos, int n_neg, int bag_size, int dim,
                              double witness_shift, int witness_count,
                              std::uint64_t seed);

struct SplitTriple {
  BagDataset train;
  BagDataset val;
  BagDataset test;
};

// Class-stratified split: a test set of per-class proportion `test_frac`
// is drawn once per seed, then the remaining bags are dealt into `folds`
// validation folds per class. Triple k has fold k as validation and the
// other folds as training; the test set is shared across the k triples.
std::vector<SplitTriple> stratified_split(const BagDataset& ds, int folds,
                                          double test_frac,
                                          std::uint64_t seed);

struct SampleBatch {
  std::vector<std::size_t> bag_ids;  // positives first, then negatives
  std::size_t n_pos = 0;
  std::vector<std::vector<std::size_t>> per_bag_instances;  // ascending

  std::size_t size() const { return bag_ids.size(); }
  bool is_positive(std::size_t k) const { return k < n_pos; }
};

// Two-level batch sampler: bags are drawn without replacement from
// per-class shuffled queues that reshuffle when exhausted, instances
// uniformly without replacement within each sampled bag (all of them
// when the bag holds fewer than b).
class BagSampler {
 public:
  BagSampler(const BagDataset& ds, std::uint64_t seed);

  SampleBatch next(std::size_t s_pos, std::size_t s_neg, std::size_t b);

 private:
  std::vector<std::size_t> draw_bags(std::vector<std::size_t>& queue,
                                     const std::vector<std::size_t>& all,
                                     std::size_t count);

  const BagDataset* ds_;
  Rng rng_;
  std::vector<std::size_t> pos_queue_;
  std::vector<std::size_t> neg_queue_;
};

// Per-feature z-scoring. Features with zero variance are left unscaled.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const BagDataset& ds);
  BagDataset apply(const BagDataset& ds) const;
};

}  // namespace midam

#endif
