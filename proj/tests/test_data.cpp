#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "midam/data.hpp"
#include "oracles.hpp"

using namespace midam;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

}  // namespace

TEST_CASE("load_csv groups rows into bags") {
  const std::string path = temp_path("midam_basic.csv");
  write_file(path,
             "0,1,0.5,0.5\n"
             "0,1,0.1,0.9\n"
             "1,0,0.0,0.0\n");
  const BagDataset ds = load_csv(path);
  CHECK(ds.bags.size() == 2);
  CHECK(ds.n_pos() == 1);
  CHECK(ds.n_neg() == 1);
  CHECK(ds.dim == 2);
  CHECK(ds.bags[0].size() == 2);
  CHECK(ds.bags[0].instances[1].features[1] == doctest::Approx(0.9));
  std::remove(path.c_str());
}

TEST_CASE("load_csv rejects inconsistent labels within a bag") {
  const std::string path = temp_path("midam_badlabel.csv");
  write_file(path,
             "7,0,1.0\n"
             "7,1,2.0\n");
  CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("inconsistent"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("load_csv rejects empty and malformed input") {
  const std::string path = temp_path("midam_empty.csv");
  write_file(path, "");
  CHECK_THROWS_AS(load_csv(path), std::runtime_error);
  write_file(path, "0,1,0.5\n0,1,oops\n");
  CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("line 2"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("save then load is the identity") {
  const BagDataset ds = generate_synthetic(3, 4, 5, 3, 1.5, 2, 11);
  const std::string path = temp_path("midam_roundtrip.csv");
  CsvOptions opts;
  SUBCASE("without header") {}
  SUBCASE("with header") { opts.has_header = true; }
  save_csv(ds, path, opts);
  const BagDataset back = load_csv(path, opts);
  REQUIRE(back.bags.size() == ds.bags.size());
  CHECK(back.dim == ds.dim);
  for (std::size_t i = 0; i < ds.bags.size(); ++i) {
    CHECK(back.bags[i].id == ds.bags[i].id);
    CHECK(back.bags[i].label == ds.bags[i].label);
    REQUIRE(back.bags[i].size() == ds.bags[i].size());
    for (std::size_t k = 0; k < ds.bags[i].size(); ++k) {
      for (std::size_t j = 0; j < ds.dim; ++j) {
        CHECK(back.bags[i].instances[k].features[j] ==
              ds.bags[i].instances[k].features[j]);
      }
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("synthetic generator shapes and witness count") {
  const BagDataset ds = generate_synthetic(1, 1, 4, 2, 3.0, 1, 0);
  REQUIRE(ds.bags.size() == 2);
  CHECK(ds.n_pos() == 1);
  CHECK(ds.n_neg() == 1);
  const Bag& pos = ds.bags[ds.pos_index[0]];
  REQUIRE(pos.size() == 4);
  // with a 3-sigma shift on both coordinates the witness stands out
  int witnesses = 0;
  for (const Instance& x : pos.instances) {
    if (x.features[0] + x.features[1] > 3.0) ++witnesses;
  }
  CHECK(witnesses == 1);

  CHECK_THROWS_AS(generate_synthetic(1, 1, 4, 2, 3.0, 5, 0),
                  std::invalid_argument);

  const BagDataset again = generate_synthetic(1, 1, 4, 2, 3.0, 1, 0);
  CHECK(again.bags[0].instances[0].features[0] ==
        ds.bags[0].instances[0].features[0]);
}

TEST_CASE("synthetic with zero shift carries no label signal") {
  const BagDataset ds = generate_synthetic(60, 60, 8, 4, 0.0, 2, 5);
  std::vector<double> pos, neg;
  for (std::size_t i : ds.pos_index) {
    double best = -1e9;
    for (const Instance& x : ds.bags[i].instances) {
      double s = 0.0;
      for (double v : x.features) s += v;
      best = std::max(best, s);
    }
    pos.push_back(best);
  }
  for (std::size_t i : ds.neg_index) {
    double best = -1e9;
    for (const Instance& x : ds.bags[i].instances) {
      double s = 0.0;
      for (double v : x.features) s += v;
      best = std::max(best, s);
    }
    neg.push_back(best);
  }
  const double roc = midam::testing::brute_force_auc(pos, neg);
  CHECK(roc > 0.3);
  CHECK(roc < 0.7);
}

TEST_CASE("synthetic benchmark is separable by the witness direction") {
  const BagDataset ds = generate_synthetic(50, 50, 32, 10, 2.0, 2, 1);
  // Bayes-optimal instance scorer for the witness model scores along the
  // all-ones mean-difference direction; bag score is max pooling.
  std::vector<double> pos, neg;
  for (const Bag& bag : ds.bags) {
    double best = -1e18;
    for (const Instance& x : bag.instances) {
      double s = 0.0;
      for (double v : x.features) s += v;
      best = std::max(best, s);
    }
    (bag.label == 1 ? pos : neg).push_back(best);
  }
  CHECK(midam::testing::brute_force_auc(pos, neg) >= 0.99);
}

TEST_CASE("stratified split proportions and determinism") {
  const BagDataset ds = generate_synthetic(10, 10, 3, 2, 1.0, 1, 3);
  const auto triples = stratified_split(ds, 5, 0.1, 42);
  REQUIRE(triples.size() == 5);
  for (const auto& t : triples) {
    CHECK(t.test.n_pos() == 1);
    CHECK(t.test.n_neg() == 1);
    CHECK(t.val.bags.size() + t.train.bags.size() == 18);
    CHECK(t.val.bags.size() >= 2);
    CHECK(t.val.bags.size() <= 4);
    // no bag appears in two partitions
    std::set<int> seen;
    for (const auto* part : {&t.train, &t.val, &t.test}) {
      for (const Bag& bag : part->bags) {
        CHECK(seen.insert(bag.id).second);
      }
    }
    CHECK(seen.size() == 20);
  }

  const auto replay = stratified_split(ds, 5, 0.1, 42);
  for (std::size_t f = 0; f < 5; ++f) {
    REQUIRE(replay[f].val.bags.size() == triples[f].val.bags.size());
    for (std::size_t i = 0; i < replay[f].val.bags.size(); ++i) {
      CHECK(replay[f].val.bags[i].id == triples[f].val.bags[i].id);
    }
  }

  CHECK_THROWS_AS(stratified_split(ds, 1, 0.1, 0), std::invalid_argument);
  const BagDataset tiny = generate_synthetic(3, 3, 2, 2, 1.0, 1, 0);
  CHECK_THROWS_AS(stratified_split(tiny, 5, 0.1, 0), std::runtime_error);
}

TEST_CASE("a MUSK1-shaped dataset yields 15 trials worth of splits") {
  const BagDataset ds = generate_synthetic(47, 45, 3, 4, 1.0, 1, 9);
  std::size_t total = 0;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    total += stratified_split(ds, 5, 0.1, seed).size();
  }
  CHECK(total == 15);
}

TEST_CASE("sampler covers whole bags when b is large") {
  const BagDataset ds = generate_synthetic(4, 4, 6, 2, 1.0, 1, 7);
  BagSampler sampler(ds, 1);
  const SampleBatch batch = sampler.next(1, 1, 100);
  REQUIRE(batch.size() == 2);
  CHECK(batch.per_bag_instances[0].size() == 6);
  CHECK(batch.per_bag_instances[1].size() == 6);
}

TEST_CASE("sampling every positive bag each iteration") {
  const BagDataset ds = generate_synthetic(8, 5, 3, 2, 1.0, 1, 7);
  BagSampler sampler(ds, 1);
  for (int it = 0; it < 4; ++it) {
    const SampleBatch batch = sampler.next(8, 2, 2);
    std::set<std::size_t> pos_ids(batch.bag_ids.begin(),
                                  batch.bag_ids.begin() + 8);
    CHECK(pos_ids.size() == 8);  // all distinct, hence all positive bags
  }
  CHECK_THROWS_AS(sampler.next(9, 2, 2), std::invalid_argument);
}

TEST_CASE("default batch shape caps the per-step instance budget") {
  const BagDataset ds = generate_synthetic(10, 12, 9, 3, 1.0, 1, 33);
  BagSampler sampler(ds, 2);
  const SampleBatch batch = sampler.next(8, 8, 4);
  CHECK(batch.size() == 16);
  std::size_t total = 0;
  for (const auto& subset : batch.per_bag_instances) {
    CHECK(subset.size() <= 4);
    total += subset.size();
  }
  CHECK(total <= 64);
}

TEST_CASE("queue fairness over an epoch of batches") {
  const BagDataset ds = generate_synthetic(10, 6, 3, 2, 1.0, 1, 21);
  BagSampler sampler(ds, 5);
  std::vector<int> pos_counts(ds.bags.size(), 0);
  std::vector<int> neg_counts(ds.bags.size(), 0);
  const int iters = 25;
  const std::size_t s_pos = 4, s_neg = 3;
  for (int it = 0; it < iters; ++it) {
    const SampleBatch batch = sampler.next(s_pos, s_neg, 2);
    std::set<std::size_t> dedupe(batch.bag_ids.begin(), batch.bag_ids.end());
    CHECK(dedupe.size() == batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
      (batch.is_positive(k) ? pos_counts : neg_counts)[batch.bag_ids[k]]++;
    }
  }
  const int pos_floor = iters * static_cast<int>(s_pos) / 10;
  const int neg_floor = iters * static_cast<int>(s_neg) / 6;
  for (std::size_t i : ds.pos_index) CHECK(pos_counts[i] >= pos_floor);
  for (std::size_t i : ds.neg_index) CHECK(neg_counts[i] >= neg_floor);
}

TEST_CASE("instance subsampling is uniform") {
  const BagDataset ds = generate_synthetic(1, 1, 10, 2, 1.0, 1, 13);
  BagSampler sampler(ds, 99);
  std::vector<int> hits(10, 0);
  const int draws = 10000;
  for (int it = 0; it < draws; ++it) {
    const SampleBatch batch = sampler.next(1, 1, 2);
    for (std::size_t j : batch.per_bag_instances[0]) hits[j]++;
  }
  // each instance is included with probability 0.2 per draw
  const double se = std::sqrt(0.2 * 0.8 / draws);
  for (int h : hits) {
    const double freq = static_cast<double>(h) / draws;
    CHECK(std::fabs(freq - 0.2) <= 3.0 * se);
  }
}

TEST_CASE("standardizer zero-means the training features") {
  const BagDataset ds = generate_synthetic(5, 5, 6, 3, 2.0, 1, 17);
  const Standardizer sc = Standardizer::fit(ds);
  const BagDataset z = sc.apply(ds);
  std::vector<double> mean(ds.dim, 0.0);
  std::size_t n = 0;
  for (const Bag& bag : z.bags) {
    for (const Instance& x : bag.instances) {
      for (std::size_t j = 0; j < ds.dim; ++j) mean[j] += x.features[j];
      ++n;
    }
  }
  for (std::size_t j = 0; j < ds.dim; ++j) {
    CHECK(mean[j] / static_cast<double>(n) == doctest::Approx(0.0).epsilon(1e-9));
  }
}
