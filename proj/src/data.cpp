#include "midam/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace midam {

std::size_t BagDataset::max_bag_size() const {
  std::size_t n = 0;
  for (const auto& bag : bags) n = std::max(n, bag.size());
  return n;
}

void BagDataset::rebuild_index() {
  pos_index.clear();
  neg_index.clear();
  for (std::size_t i = 0; i < bags.size(); ++i) {
    const Bag& bag = bags[i];
    if (bag.instances.empty()) {
      throw std::runtime_error("bag " + std::to_string(bag.id) +
                               " has no instances");
    }
    for (const Instance& x : bag.instances) {
      if (x.features.size() != dim) {
        throw std::runtime_error("bag " + std::to_string(bag.id) +
                                 " has instance of dimension " +
                                 std::to_string(x.features.size()) +
                                 ", expected " + std::to_string(dim));
      }
    }
    if (bag.label == 1) {
      pos_index.push_back(i);
    } else if (bag.label == 0) {
      neg_index.push_back(i);
    } else {
      throw std::runtime_error("bag " + std::to_string(bag.id) +
                               " has non-binary label " +
                               std::to_string(bag.label));
    }
  }
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\r')) --end;
  double v = 0.0;
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw std::runtime_error("line " + std::to_string(line_no) +
                             ": cannot parse '" + s + "' as a number");
  }
  return v;
}

long parse_long(const std::string& s, std::size_t line_no,
                const char* what) {
  double v = parse_double(s, line_no);
  long l = static_cast<long>(v);
  if (static_cast<double>(l) != v) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": " + what +
                             " '" + s + "' is not an integer");
  }
  return l;
}

}  // namespace

BagDataset load_csv(const std::string& path, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  BagDataset ds;
  std::unordered_map<int, std::size_t> slot_of;  // bag id -> bags index
  std::string line;
  std::size_t line_no = 0;
  bool first_row = true;

  while (std::getline(in, line)) {
    ++line_no;
    if (opts.has_header && line_no == 1) continue;
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (cells.size() < 3) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": expected bag_id,label,features...");
    }
    int bag_id = static_cast<int>(parse_long(cells[0], line_no, "bag_id"));
    long label = parse_long(cells[1], line_no, "label");
    if (label != 0 && label != 1) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": label must be 0 or 1, got " +
                               std::to_string(label));
    }
    if (first_row) {
      ds.dim = cells.size() - 2;
      first_row = false;
    } else if (cells.size() - 2 != ds.dim) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": row has " +
                               std::to_string(cells.size() - 2) +
                               " features, expected " + std::to_string(ds.dim));
    }
    Instance x;
    x.features.resize(ds.dim);
    for (std::size_t j = 0; j < ds.dim; ++j) {
      double v = parse_double(cells[j + 2], line_no);
      if (!std::isfinite(v)) {
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": non-finite feature value");
      }
      x.features[j] = v;
    }

    auto it = slot_of.find(bag_id);
    if (it == slot_of.end()) {
      slot_of.emplace(bag_id, ds.bags.size());
      Bag bag;
      bag.id = bag_id;
      bag.label = static_cast<int>(label);
      bag.instances.push_back(std::move(x));
      ds.bags.push_back(std::move(bag));
    } else {
      Bag& bag = ds.bags[it->second];
      if (bag.label != label) {
        throw std::runtime_error("line " + std::to_string(line_no) + ": bag " +
                                 std::to_string(bag_id) +
                                 " carries inconsistent labels");
      }
      bag.instances.push_back(std::move(x));
    }
  }

  if (ds.bags.empty()) throw std::runtime_error(path + ": no data rows");
  ds.rebuild_index();
  return ds;
}

void save_csv(const BagDataset& ds, const std::string& path,
              const CsvOptions& opts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[64];
  if (opts.has_header) {
    out << "bag_id,label";
    for (std::size_t j = 0; j < ds.dim; ++j) out << ",f" << j;
    out << "\n";
  }
  for (const Bag& bag : ds.bags) {
    for (const Instance& x : bag.instances) {
      out << bag.id << ',' << bag.label;
      for (double v : x.features) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << ',' << buf;
      }
      out << "\n";
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

BagDataset generate_synthetic(int n_pos, int n_neg, int bag_size, int dim,
                              double witness_shift, int witness_count,
                              std::uint64_t seed) {
  if (n_pos < 1 || n_neg < 1 || bag_size < 1 || dim < 1 || witness_count < 1) {
    throw std::invalid_argument("synthetic generator: all counts must be >= 1");
  }
  if (witness_count > bag_size) {
    throw std::invalid_argument("witness_count exceeds bag_size");
  }
  Rng rng(seed);
  BagDataset ds;
  ds.dim = static_cast<std::size_t>(dim);
  ds.bags.reserve(static_cast<std::size_t>(n_pos + n_neg));
  int next_id = 0;
  for (int i = 0; i < n_pos; ++i) {
    Bag bag;
    bag.id = next_id++;
    bag.label = 1;
    for (int k = 0; k < bag_size; ++k) {
      Instance x;
      x.features.resize(ds.dim);
      const bool witness = k < witness_count;
      for (int j = 0; j < dim; ++j) {
        x.features[static_cast<std::size_t>(j)] =
            (witness ? witness_shift : 0.0) + rng.normal();
      }
      bag.instances.push_back(std::move(x));
    }
    ds.bags.push_back(std::move(bag));
  }
  for (int i = 0; i < n_neg; ++i) {
    Bag bag;
    bag.id = next_id++;
    bag.label = 0;
    for (int k = 0; k < bag_size; ++k) {
      Instance x;
      x.features.resize(ds.dim);
      for (int j = 0; j < dim; ++j) {
        x.features[static_cast<std::size_t>(j)] = rng.normal();
      }
      bag.instances.push_back(std::move(x));
    }
    ds.bags.push_back(std::move(bag));
  }
  ds.rebuild_index();
  return ds;
}

namespace {

BagDataset subset_dataset(const BagDataset& ds,
                          std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end());
  BagDataset out;
  out.dim = ds.dim;
  out.bags.reserve(indices.size());
  for (std::size_t i : indices) out.bags.push_back(ds.bags[i]);
  out.rebuild_index();
  return out;
}

}  // namespace

std::vector<SplitTriple> stratified_split(const BagDataset& ds, int folds,
                                          double test_frac,
                                          std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("folds must be >= 2");
  if (!(test_frac > 0.0 && test_frac < 1.0)) {
    throw std::invalid_argument("test_frac must be in (0, 1)");
  }
  Rng rng(mix_seed(seed, 0x517A17ULL));

  std::vector<std::size_t> test_ids;
  // fold_members[f] collects bag indices of validation fold f, both classes
  std::vector<std::vector<std::size_t>> fold_members(
      static_cast<std::size_t>(folds));

  for (const auto* cls : {&ds.pos_index, &ds.neg_index}) {
    std::vector<std::size_t> ids = *cls;
    if (ids.empty()) throw std::runtime_error("split: a class is empty");
    rng.shuffle(ids);
    std::size_t n_test = static_cast<std::size_t>(
        std::lround(test_frac * static_cast<double>(ids.size())));
    if (n_test < 1) n_test = 1;
    if (ids.size() < n_test + static_cast<std::size_t>(folds)) {
      throw std::runtime_error(
          "split: class too small for requested folds and test fraction");
    }
    test_ids.insert(test_ids.end(), ids.begin(),
                    ids.begin() + static_cast<std::ptrdiff_t>(n_test));
    for (std::size_t k = n_test; k < ids.size(); ++k) {
      fold_members[(k - n_test) % static_cast<std::size_t>(folds)].push_back(
          ids[k]);
    }
  }

  std::vector<SplitTriple> out;
  out.reserve(static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_ids;
    for (int g = 0; g < folds; ++g) {
      if (g == f) continue;
      const auto& m = fold_members[static_cast<std::size_t>(g)];
      train_ids.insert(train_ids.end(), m.begin(), m.end());
    }
    SplitTriple triple;
    triple.train = subset_dataset(ds, train_ids);
    triple.val = subset_dataset(ds, fold_members[static_cast<std::size_t>(f)]);
    triple.test = subset_dataset(ds, test_ids);
    out.push_back(std::move(triple));
  }
  return out;
}

BagSampler::BagSampler(const BagDataset& ds, std::uint64_t seed)
    : ds_(&ds), rng_(seed) {}

std::vector<std::size_t> BagSampler::draw_bags(
    std::vector<std::size_t>& queue, const std::vector<std::size_t>& all,
    std::size_t count) {
  std::vector<std::size_t> taken;
  taken.reserve(count);
  while (taken.size() < count) {
    if (queue.empty()) {
      queue = all;
      rng_.shuffle(queue);
    }
    // skip ids already taken in this batch; skipped ids stay queued
    std::size_t pick = queue.size();
    for (std::size_t j = queue.size(); j-- > 0;) {
      if (std::find(taken.begin(), taken.end(), queue[j]) == taken.end()) {
        pick = j;
        break;
      }
    }
    if (pick == queue.size()) {
      // everything left is a duplicate; refill on the next pass
      queue.clear();
      continue;
    }
    taken.push_back(queue[pick]);
    queue.erase(queue.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return taken;
}

SampleBatch BagSampler::next(std::size_t s_pos, std::size_t s_neg,
                             std::size_t b) {
  if (s_pos > ds_->n_pos() || s_neg > ds_->n_neg()) {
    throw std::invalid_argument("batch size exceeds class bag count");
  }
  if (b < 1) throw std::invalid_argument("instance batch size must be >= 1");
  SampleBatch batch;
  batch.n_pos = s_pos;
  auto pos = draw_bags(pos_queue_, ds_->pos_index, s_pos);
  auto neg = draw_bags(neg_queue_, ds_->neg_index, s_neg);
  batch.bag_ids = std::move(pos);
  batch.bag_ids.insert(batch.bag_ids.end(), neg.begin(), neg.end());
  batch.per_bag_instances.reserve(batch.bag_ids.size());
  for (std::size_t id : batch.bag_ids) {
    const std::size_t n = ds_->bags[id].size();
    batch.per_bag_instances.push_back(
        rng_.sample_without_replacement(n, std::min(b, n)));
  }
  return batch;
}

Standardizer Standardizer::fit(const BagDataset& ds) {
  Standardizer sc;
  sc.mean.assign(ds.dim, 0.0);
  sc.scale.assign(ds.dim, 1.0);
  std::size_t n = 0;
  for (const Bag& bag : ds.bags) n += bag.size();
  if (n == 0) return sc;
  for (const Bag& bag : ds.bags) {
    for (const Instance& x : bag.instances) {
      for (std::size_t j = 0; j < ds.dim; ++j) sc.mean[j] += x.features[j];
    }
  }
  for (std::size_t j = 0; j < ds.dim; ++j) sc.mean[j] /= static_cast<double>(n);
  std::vector<double> var(ds.dim, 0.0);
  for (const Bag& bag : ds.bags) {
    for (const Instance& x : bag.instances) {
      for (std::size_t j = 0; j < ds.dim; ++j) {
        const double dv = x.features[j] - sc.mean[j];
        var[j] += dv * dv;
      }
    }
  }
  for (std::size_t j = 0; j < ds.dim; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(n));
    sc.scale[j] = sd > 0.0 ? sd : 1.0;
  }
  return sc;
}

BagDataset Standardizer::apply(const BagDataset& ds) const {
  if (mean.size() != ds.dim) {
    throw std::invalid_argument("standardizer dimension mismatch");
  }
  BagDataset out = ds;
  for (Bag& bag : out.bags) {
    for (Instance& x : bag.instances) {
      for (std::size_t j = 0; j < ds.dim; ++j) {
        x.features[j] = (x.features[j] - mean[j]) / scale[j];
      }
    }
  }
  return out;
}

}  // namespace midam
