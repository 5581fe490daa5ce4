// Command-line front end: dataset generation and conversion, single
// training runs, cross-validation benchmarks, and estimator diagnostics.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include "midam/checkpoint.hpp"
#include "midam/trainer.hpp"

namespace fs = std::filesystem;
using namespace midam;

namespace {

struct CommonOpts {
  std::string config_file;
  std::string dataset;
  bool has_header = false;
  std::string method = "midam";
  std::string pool = "smx";
  double tau = 0.1;
  std::size_t s_pos = 8;
  std::size_t s_neg = 8;
  std::size_t b = 4;
  double eta = 0.01;
  double eta_prime = 1.0;
  double beta1 = -1.0;  // resolved by method when unset
  double gamma0 = 0.9;
  int epochs = 100;
  std::vector<int> lr_decay_epochs{50, 75};
  double lr_decay_factor = 10.0;
  double mom_gamma_decay_factor = 2.0;
  double weight_decay = 1e-4;
  double margin = 0.1;
  double omega_upper = 10.0;
  std::string optimizer;  // resolved by method when unset
  double adam_eps = 1e-8;
  double adam_beta2 = 0.999;
  std::uint64_t seed = 0;
  std::size_t attention_dim = 0;
  double init_scale = 1.0;
  int upsilon_every = 0;
  bool no_standardize = false;
  double test_frac = 0.1;
  int folds = 5;
  std::string out_dir;
  std::string run_id;
  int threads = 1;
  int checkpoint_every = 0;
};

void add_common_options(CLI::App* cmd, CommonOpts& o) {
  // explicit flags must override config-file values: the loader splices
  // file tokens in front of the command line and the last value wins
  cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  cmd->add_option("--config", o.config_file,
                  "key=value file; explicit flags win");
  cmd->add_option("--dataset", o.dataset, "canonical CSV dataset")
      ->required();
  cmd->add_flag("--header", o.has_header, "dataset CSV has a header row");
  cmd->add_option("--method", o.method, "midam | dam_mb | ce")
      ->check(CLI::IsMember({"midam", "dam_mb", "ce"}));
  cmd->add_option("--pool", o.pool, "mean | max | smx | att")
      ->check(CLI::IsMember({"mean", "max", "smx", "att"}));
  cmd->add_option("--tau", o.tau, "smoothed-max temperature");
  cmd->add_option("--s-pos", o.s_pos, "positive bags per iteration");
  cmd->add_option("--s-neg", o.s_neg, "negative bags per iteration");
  cmd->add_option("--b", o.b, "instances sampled per bag (0 = whole bag)");
  cmd->add_option("--eta", o.eta, "primal step size");
  cmd->add_option("--eta-prime", o.eta_prime, "dual step size");
  cmd->add_option("--beta1", o.beta1,
                  "momentum retention (default 0.1; 0.9 for ce)");
  cmd->add_option("--gamma0", o.gamma0, "pooling estimator blend weight");
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--lr-decay-epochs", o.lr_decay_epochs,
                  "epochs at which the schedule decays")
      ->delimiter(',');
  cmd->add_option("--lr-decay-factor", o.lr_decay_factor,
                  "learning-rate division at each decay epoch");
  cmd->add_option("--mom-gamma-decay-factor", o.mom_gamma_decay_factor,
                  "division of eta', 1-beta1 and gamma0 at each decay epoch");
  cmd->add_option("--weight-decay", o.weight_decay, "L2 coefficient");
  cmd->add_option("--margin", o.margin, "AUC margin parameter");
  cmd->add_option("--omega-upper", o.omega_upper,
                  "upper end of the dual interval");
  cmd->add_option("--optimizer", o.optimizer,
                  "momentum | adam (default momentum; adam for ce)")
      ->check(CLI::IsMember({"", "momentum", "adam"}));
  cmd->add_option("--adam-eps", o.adam_eps, "Adam epsilon");
  cmd->add_option("--adam-beta2", o.adam_beta2, "Adam second-moment decay");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--attention-dim", o.attention_dim,
                  "attention width m (0 = d/2 rounded up, floor 4)");
  cmd->add_option("--init-scale", o.init_scale, "weight init scale");
  cmd->add_option("--upsilon-every", o.upsilon_every,
                  "estimator-error report cadence in epochs (0 = off)");
  cmd->add_flag("--no-standardize", o.no_standardize,
                "skip per-feature z-scoring fit on the train split");
  cmd->add_option("--test-frac", o.test_frac, "per-class test proportion");
  cmd->add_option("--folds", o.folds, "validation folds");
  cmd->add_option("--out", o.out_dir,
                  "output directory (default $MIDAM_OUT_DIR or ./runs)");
  cmd->add_option("--run-id", o.run_id, "run directory name");
  cmd->add_option("--threads", o.threads,
                  "worker threads for cv trials (1 = bit-reproducible order)");
  cmd->add_option("--checkpoint-every", o.checkpoint_every,
                  "write a checkpoint every K epochs (0 = best only)");
}

// Flat key=value config support. File keys are the long flag names; an
// unknown key fails the parse, and later (command-line) values win.
std::vector<std::string> config_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::FileError(path + " (config file not readable)");
  std::vector<std::string> tokens;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw CLI::FileError(path + ":" + std::to_string(line_no) +
                           ": expected key=value");
    }
    std::string key = line.substr(0, eq);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) {
      key.pop_back();
    }
    std::string value = line.substr(eq + 1);
    const auto vfirst = value.find_first_not_of(" \t");
    value = vfirst == std::string::npos ? "" : value.substr(vfirst);
    if (key == "config") {
      throw CLI::FileError(path + ":" + std::to_string(line_no) +
                           ": config files cannot nest");
    }
    tokens.push_back("--" + key + "=" + value);
  }
  return tokens;
}

// Splices the config file's tokens directly after the subcommand name so
// that everything typed on the command line comes later and wins.
std::vector<std::string> splice_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config_path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(std::strlen("--config="));
      break;
    }
  }
  if (config_path.empty() || args.empty()) return args;
  const auto tokens = config_tokens(config_path);
  args.insert(args.begin() + 1, tokens.begin(), tokens.end());
  return args;
}

TrainConfig resolve_config(const CLI::App* cmd, const CommonOpts& o) {
  TrainConfig cfg;
  cfg.method = parse_method(o.method);
  cfg.kind = parse_pool_kind(o.pool, o.tau);
  cfg.s_pos = o.s_pos;
  cfg.s_neg = o.s_neg;
  cfg.b = o.b;
  cfg.eta = o.eta;
  cfg.eta_prime = o.eta_prime;
  cfg.gamma0 = o.gamma0;
  cfg.epochs = o.epochs;
  cfg.lr_decay_epochs = o.lr_decay_epochs;
  cfg.lr_decay_factor = o.lr_decay_factor;
  cfg.mom_gamma_decay_factor = o.mom_gamma_decay_factor;
  cfg.weight_decay = o.weight_decay;
  cfg.margin_cfg.margin = o.margin;
  cfg.margin_cfg.omega_upper = o.omega_upper;
  cfg.adam_eps = o.adam_eps;
  cfg.adam_beta2 = o.adam_beta2;
  cfg.seed = o.seed;
  cfg.attention_dim = o.attention_dim;
  cfg.init_scale = o.init_scale;
  cfg.upsilon_every = o.upsilon_every;

  // the CE baseline defaults to the Adam optimizer with its usual moments
  const bool opt_set = cmd->count("--optimizer") > 0 && !o.optimizer.empty();
  const bool beta1_set = cmd->count("--beta1") > 0;
  if (cfg.method == Method::ce) {
    cfg.optimizer =
        opt_set ? parse_optimizer(o.optimizer) : OptimizerKind::adam;
    cfg.beta1 = beta1_set ? o.beta1 : 0.9;
  } else {
    cfg.optimizer =
        opt_set ? parse_optimizer(o.optimizer) : OptimizerKind::momentum;
    cfg.beta1 = beta1_set ? o.beta1 : 0.1;
  }
  cfg.validate();
  return cfg;
}

std::string default_out_dir() {
  const char* env = std::getenv("MIDAM_OUT_DIR");
  return env != nullptr && *env != '\0' ? env : "runs";
}

fs::path make_run_dir(const CommonOpts& o, const std::string& fallback_id) {
  const fs::path base = o.out_dir.empty() ? default_out_dir() : o.out_dir;
  const fs::path dir = base / (o.run_id.empty() ? fallback_id : o.run_id);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << body;
}

std::string num17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Fully resolved configuration echo; every line is a loadable key=value
// pair, so a run can be replayed with --config on this file.
std::string echo_common(const CommonOpts& o, const TrainConfig& cfg) {
  std::ostringstream ss;
  ss << "dataset=" << o.dataset << "\n";
  ss << "header=" << (o.has_header ? "true" : "false") << "\n";
  ss << "method=" << method_name(cfg.method) << "\n";
  ss << "pool=" << pool_kind_name(cfg.kind) << "\n";
  ss << "tau=" << num17(cfg.kind.tau) << "\n";
  ss << "s-pos=" << cfg.s_pos << "\n";
  ss << "s-neg=" << cfg.s_neg << "\n";
  ss << "b=" << cfg.b << "\n";
  ss << "eta=" << num17(cfg.eta) << "\n";
  ss << "eta-prime=" << num17(cfg.eta_prime) << "\n";
  ss << "beta1=" << num17(cfg.beta1) << "\n";
  ss << "gamma0=" << num17(cfg.gamma0) << "\n";
  ss << "epochs=" << cfg.epochs << "\n";
  if (!cfg.lr_decay_epochs.empty()) {
    ss << "lr-decay-epochs=";
    for (std::size_t i = 0; i < cfg.lr_decay_epochs.size(); ++i) {
      ss << (i ? "," : "") << cfg.lr_decay_epochs[i];
    }
    ss << "\n";
  }
  ss << "lr-decay-factor=" << num17(cfg.lr_decay_factor) << "\n";
  ss << "mom-gamma-decay-factor=" << num17(cfg.mom_gamma_decay_factor)
     << "\n";
  ss << "weight-decay=" << num17(cfg.weight_decay) << "\n";
  ss << "margin=" << num17(cfg.margin_cfg.margin) << "\n";
  ss << "omega-upper=" << num17(cfg.margin_cfg.omega_upper) << "\n";
  ss << "optimizer=" << optimizer_name(cfg.optimizer) << "\n";
  ss << "adam-eps=" << num17(cfg.adam_eps) << "\n";
  ss << "adam-beta2=" << num17(cfg.adam_beta2) << "\n";
  ss << "seed=" << cfg.seed << "\n";
  ss << "attention-dim=" << cfg.attention_dim << "\n";
  ss << "init-scale=" << num17(cfg.init_scale) << "\n";
  ss << "upsilon-every=" << cfg.upsilon_every << "\n";
  ss << "no-standardize=" << (o.no_standardize ? "true" : "false") << "\n";
  ss << "test-frac=" << num17(o.test_frac) << "\n";
  ss << "folds=" << o.folds << "\n";
  ss << "threads=" << o.threads << "\n";
  ss << "checkpoint-every=" << o.checkpoint_every << "\n";
  return ss.str();
}

BagDataset load_dataset(const CommonOpts& o) {
  CsvOptions opts;
  opts.has_header = o.has_header;
  return load_csv(o.dataset, opts);
}

std::string json_kv(const std::string& key, const std::string& value,
                    bool quote = true) {
  return "\"" + key + "\": " + (quote ? "\"" + value + "\"" : value);
}

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

// ---------------------------------------------------------------- gen

struct GenOpts {
  std::string out;
  int n_pos = 50;
  int n_neg = 50;
  int bag_size = 32;
  int dim = 10;
  double witness_shift = 2.0;
  int witness_count = 2;
  std::uint64_t seed = 0;
  bool header = false;
};

int cmd_gen(const GenOpts& o) {
  const BagDataset ds =
      generate_synthetic(o.n_pos, o.n_neg, o.bag_size, o.dim, o.witness_shift,
                         o.witness_count, o.seed);
  CsvOptions opts;
  opts.has_header = o.header;
  save_csv(ds, o.out, opts);
  std::cout << "wrote " << ds.bags.size() << " bags (" << ds.n_pos() << "+, "
            << ds.n_neg() << "-), d=" << ds.dim << " to " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- convert

struct ConvertOpts {
  std::string in;
  std::string out;
  std::string format = "musk";
  bool header = false;
};

// molecule_name, conformation_name, f..., label; bag ids follow first
// appearance of each molecule name
BagDataset read_musk(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  BagDataset ds;
  std::unordered_map<std::string, std::size_t> slot_of;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '|') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 4) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": expected name,conf,features...,label");
    }
    const std::string& name = cells[0];
    const double label_val = std::stod(cells.back());
    const int label = label_val > 0.5 ? 1 : 0;
    const std::size_t d = cells.size() - 3;
    if (ds.dim == 0) {
      ds.dim = d;
    } else if (d != ds.dim) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": inconsistent feature count");
    }
    Instance x;
    x.features.resize(d);
    for (std::size_t j = 0; j < d; ++j) x.features[j] = std::stod(cells[j + 2]);
    auto it = slot_of.find(name);
    if (it == slot_of.end()) {
      slot_of.emplace(name, ds.bags.size());
      Bag bag;
      bag.id = static_cast<int>(ds.bags.size());
      bag.label = label;
      bag.instances.push_back(std::move(x));
      ds.bags.push_back(std::move(bag));
    } else {
      Bag& bag = ds.bags[it->second];
      if (bag.label != label) {
        throw std::runtime_error("line " + std::to_string(line_no) + ": bag " +
                                 name + " carries inconsistent labels");
      }
      bag.instances.push_back(std::move(x));
    }
  }
  if (ds.bags.empty()) throw std::runtime_error(path + ": no data rows");
  ds.rebuild_index();
  return ds;
}

// "<label> qid:<bag> <idx>:<value> ... [# comment]" with 1-based indices
BagDataset read_svmlight(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  struct Row {
    int bag_id;
    int label;
    std::vector<std::pair<std::size_t, double>> feats;
  };
  std::vector<Row> rows;
  std::size_t max_idx = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::stringstream ss(line);
    std::string tok;
    if (!(ss >> tok)) continue;
    Row row;
    row.label = std::stod(tok) > 0.0 ? 1 : 0;
    row.bag_id = -1;
    while (ss >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) {
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": expected key:value, got '" + tok + "'");
      }
      const std::string key = tok.substr(0, colon);
      const std::string val = tok.substr(colon + 1);
      if (key == "qid" || key == "bag") {
        row.bag_id = std::stoi(val);
      } else {
        const std::size_t idx = static_cast<std::size_t>(std::stoul(key));
        if (idx < 1) {
          throw std::runtime_error("line " + std::to_string(line_no) +
                                   ": feature indices are 1-based");
        }
        row.feats.emplace_back(idx - 1, std::stod(val));
        max_idx = std::max(max_idx, idx);
      }
    }
    if (row.bag_id < 0) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": missing qid:<bag> token");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");

  BagDataset ds;
  ds.dim = max_idx;
  std::unordered_map<int, std::size_t> slot_of;
  for (const Row& row : rows) {
    Instance x;
    x.features.assign(ds.dim, 0.0);
    for (const auto& [idx, val] : row.feats) x.features[idx] = val;
    auto it = slot_of.find(row.bag_id);
    if (it == slot_of.end()) {
      slot_of.emplace(row.bag_id, ds.bags.size());
      Bag bag;
      bag.id = row.bag_id;
      bag.label = row.label;
      bag.instances.push_back(std::move(x));
      ds.bags.push_back(std::move(bag));
    } else {
      Bag& bag = ds.bags[it->second];
      if (bag.label != row.label) {
        throw std::runtime_error("bag " + std::to_string(row.bag_id) +
                                 " carries inconsistent labels");
      }
      bag.instances.push_back(std::move(x));
    }
  }
  ds.rebuild_index();
  return ds;
}

int cmd_convert(const ConvertOpts& o) {
  const BagDataset ds =
      o.format == "musk" ? read_musk(o.in) : read_svmlight(o.in);
  CsvOptions opts;
  opts.has_header = o.header;
  save_csv(ds, o.out, opts);
  std::cout << "converted " << ds.bags.size() << " bags (" << ds.n_pos()
            << "+, " << ds.n_neg() << "-), d=" << ds.dim << " to " << o.out
            << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

int cmd_train(const CLI::App* cmd, const CommonOpts& o, int fold) {
  const TrainConfig cfg = resolve_config(cmd, o);
  const BagDataset ds = load_dataset(o);
  const fs::path dir = make_run_dir(
      o, method_name(cfg.method) + "_" + pool_kind_name(cfg.kind) + "_seed" +
             std::to_string(cfg.seed) + "_fold" + std::to_string(fold));
  write_text(dir / "config.txt",
             echo_common(o, cfg) + "fold=" + std::to_string(fold) + "\n");

  if (fold < 0 || fold >= o.folds) {
    throw std::runtime_error("--fold must be in [0, " +
                             std::to_string(o.folds - 1) + "]");
  }
  const auto triples = stratified_split(ds, o.folds, o.test_frac, cfg.seed);
  SplitTriple triple = triples[static_cast<std::size_t>(fold)];
  if (!o.no_standardize) {
    const Standardizer sc = Standardizer::fit(triple.train);
    triple.train = sc.apply(triple.train);
    triple.val = sc.apply(triple.val);
    triple.test = sc.apply(triple.test);
  }

  std::ofstream metrics(dir / "metrics.csv");
  metrics << metrics_csv_header() << "\n";
  const EpochHook hook = [&](const MetricsRow& row, const ModelParams& p,
                             const PoolState* state) {
    metrics << metrics_csv_line(row) << "\n";
    metrics.flush();
    if (o.checkpoint_every > 0 && row.epoch % o.checkpoint_every == 0) {
      save_checkpoint(
          (dir / ("checkpoint_epoch" + std::to_string(row.epoch) + ".txt"))
              .string(),
          p, state);
    }
  };

  const TrainResult result =
      train(triple.train, triple.val, triple.test, cfg, hook);
  save_checkpoint((dir / "checkpoint.txt").string(), result.best_params);

  const double test_at_best =
      result.metrics.empty()
          ? 0.5
          : result.metrics[static_cast<std::size_t>(result.best_epoch - 1)]
                .test_auc;
  std::ostringstream summary;
  summary << "{ " << json_kv("method", method_name(cfg.method)) << ", "
          << json_kv("pool", pool_kind_name(cfg.kind)) << ", "
          << json_kv("seed", std::to_string(cfg.seed), false) << ", "
          << json_kv("fold", std::to_string(fold), false) << ", "
          << json_kv("epochs", std::to_string(cfg.epochs), false) << ", "
          << json_kv("best_epoch", std::to_string(result.best_epoch), false)
          << ", " << json_kv("best_val_auc", num(result.best_val_auc), false)
          << ", " << json_kv("test_auc_at_best_val", num(test_at_best), false)
          << " }\n";
  write_text(dir / "summary.txt", summary.str());
  std::cout << summary.str();
  return 0;
}

// ---------------------------------------------------------------- cv

int cmd_cv(const CLI::App* cmd, const CommonOpts& o, int n_seeds) {
  const TrainConfig cfg = resolve_config(cmd, o);
  const BagDataset ds = load_dataset(o);
  const fs::path dir = make_run_dir(
      o, method_name(cfg.method) + "_" + pool_kind_name(cfg.kind) + "_cv");
  write_text(dir / "config.txt",
             echo_common(o, cfg) + "seeds=" + std::to_string(n_seeds) + "\n");

  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < n_seeds; ++k) {
    seeds.push_back(cfg.seed + static_cast<std::uint64_t>(k));
  }

  std::ofstream trials_csv(dir / "trials.csv");
  trials_csv << "seed,fold,test_auc_at_best_val,failed,error\n";
  const auto on_trial_metrics = [&](const TrialResult& t,
                                    const std::vector<MetricsRow>& rows) {
    trials_csv << t.seed << ',' << t.fold << ',' << num(t.test_auc_at_best_val)
               << ',' << (t.failed ? 1 : 0) << ',' << t.error << "\n";
    trials_csv.flush();
    std::cout << "trial seed=" << t.seed << " fold=" << t.fold << " -> "
              << (t.failed ? "FAILED: " + t.error
                           : num(t.test_auc_at_best_val))
              << "\n";
    std::ofstream per_trial(dir / ("metrics_s" + std::to_string(t.seed) +
                                   "_f" + std::to_string(t.fold) + ".csv"));
    per_trial << metrics_csv_header() << "\n";
    for (const MetricsRow& row : rows) {
      per_trial << metrics_csv_line(row) << "\n";
    }
  };

  const CvResult cv = run_cv(ds, cfg, o.folds, seeds, o.test_frac,
                             !o.no_standardize, nullptr, o.threads,
                             on_trial_metrics);

  std::ostringstream summary;
  summary << "{ " << json_kv("method", method_name(cfg.method)) << ", "
          << json_kv("pool", pool_kind_name(cfg.kind)) << ", "
          << json_kv("trials", std::to_string(cv.summary.n_trials), false)
          << ", "
          << json_kv("failures", std::to_string(cv.summary.n_failed), false)
          << ", " << json_kv("mean_test_auc", num(cv.summary.mean), false)
          << ", " << json_kv("stddev", num(cv.summary.stddev), false)
          << " }\n";
  write_text(dir / "summary.txt", summary.str());
  std::cout << summary.str();
  return 0;
}

// ---------------------------------------------------------------- diag

struct DiagOpts {
  std::string mode = "frozen";
  int budget = 64;
  std::vector<std::string> b_list{"1", "2", "4", "full"};
  int rounds = 500;
  double frozen_gamma0 = 0.1;
  int n_seeds = 20;
  double auc_target = 0.9;
  int fold = 0;
};

int epochs_to_target(const std::vector<MetricsRow>& rows, double target) {
  for (const MetricsRow& row : rows) {
    if (row.train_auc >= target) return row.epoch;
  }
  return -1;  // never reached
}

// time-averaged squared pooled-prediction error on a frozen model
std::pair<double, double> frozen_errors(const ModelParams& p,
                                        const BagDataset& ds,
                                        const PoolKind& kind, double gamma0,
                                        std::size_t b, int rounds,
                                        std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> h_det(ds.bags.size());
  for (std::size_t i = 0; i < ds.bags.size(); ++i) {
    h_det[i] = pool(p, ds.bags[i], full_bag_subset(ds.bags[i]), kind);
  }
  PoolState state = init_state(ds, kind, gamma0);
  double err_vrsp = 0.0, err_naive = 0.0;
  std::size_t count = 0;
  for (int t = 0; t < rounds; ++t) {
    for (std::size_t i = 0; i < ds.bags.size(); ++i) {
      const auto subset = rng.sample_without_replacement(
          ds.bags[i].size(), std::min(b, ds.bags[i].size()));
      const InnerValue fresh = inner_f1(p, ds.bags[i], subset, kind);
      const InnerValue est = update(state, i, fresh);
      const double dv = outer_f2(est, kind) - h_det[i];
      const double dn = outer_f2(fresh, kind) - h_det[i];
      err_vrsp += dv * dv;
      err_naive += dn * dn;
      ++count;
    }
  }
  return {err_vrsp / static_cast<double>(count),
          err_naive / static_cast<double>(count)};
}

int cmd_diag(const CLI::App* cmd, const CommonOpts& o, const DiagOpts& d) {
  const TrainConfig base_cfg = resolve_config(cmd, o);
  const BagDataset ds = load_dataset(o);
  const fs::path dir = make_run_dir(
      o, "diag_" + d.mode + "_" + pool_kind_name(base_cfg.kind));
  {
    std::ostringstream extra;
    extra << "mode=" << d.mode << "\n"
          << "budget=" << d.budget << "\n"
          << "b-list=";
    for (std::size_t i = 0; i < d.b_list.size(); ++i) {
      extra << (i ? "," : "") << d.b_list[i];
    }
    extra << "\n"
          << "rounds=" << d.rounds << "\n"
          << "frozen-gamma0=" << num17(d.frozen_gamma0) << "\n"
          << "n-seeds=" << d.n_seeds << "\n"
          << "auc-target=" << num17(d.auc_target) << "\n"
          << "fold=" << d.fold << "\n";
    write_text(dir / "config.txt", echo_common(o, base_cfg) + extra.str());
  }

  if (d.mode == "frozen") {
    // isolates estimation error from optimization dynamics
    const std::size_t m = base_cfg.resolve_attention_dim(ds.dim);
    const ModelParams p =
        init_params(ds.dim, m, base_cfg.seed, base_cfg.init_scale);
    const std::size_t b = base_cfg.b == 0 ? ds.max_bag_size() : base_cfg.b;
    double vrsp = 0.0, naive = 0.0;
    for (int s = 0; s < d.n_seeds; ++s) {
      const auto [ev, en] =
          frozen_errors(p, ds, base_cfg.kind, d.frozen_gamma0, b, d.rounds,
                        mix_seed(base_cfg.seed, static_cast<std::uint64_t>(s)));
      vrsp += ev;
      naive += en;
    }
    vrsp /= d.n_seeds;
    naive /= d.n_seeds;
    const bool pass = vrsp < naive;
    std::ostringstream rep;
    rep << "frozen-model estimator comparison (" << d.rounds << " rounds, "
        << d.n_seeds << " seeds, b=" << b
        << ", gamma0=" << d.frozen_gamma0 << ")\n"
        << "vrsp_mse=" << num(vrsp) << "\n"
        << "naive_mse=" << num(naive) << "\n"
        << (pass ? "PASS" : "FAIL") << ": variance-reduced error "
        << (pass ? "below" : "NOT below") << " naive mini-batch error\n";
    write_text(dir / "frozen.txt", rep.str());
    std::cout << rep.str();
    return pass ? 0 : 2;
  }

  // grid modes train once per cell and log one metrics file each
  std::vector<std::pair<std::string, TrainConfig>> cells;
  if (d.mode == "budget") {
    for (std::size_t s = 2; s * 2 <= static_cast<std::size_t>(d.budget);
         s *= 2) {
      const std::size_t b = static_cast<std::size_t>(d.budget) / s;
      TrainConfig cfg = base_cfg;
      cfg.s_pos = s;
      cfg.s_neg = s;
      cfg.b = b;
      cells.emplace_back("s" + std::to_string(s) + "_b" + std::to_string(b),
                         cfg);
    }
  } else if (d.mode == "bsweep") {
    for (const std::string& tok : d.b_list) {
      TrainConfig cfg = base_cfg;
      cfg.b = tok == "full" ? 0 : static_cast<std::size_t>(std::stoul(tok));
      cells.emplace_back("b_" + tok, cfg);
    }
  } else {
    throw std::runtime_error("unknown diag mode '" + d.mode + "'");
  }

  const auto triples =
      stratified_split(ds, o.folds, o.test_frac, base_cfg.seed);
  SplitTriple triple = triples[static_cast<std::size_t>(d.fold)];
  if (!o.no_standardize) {
    const Standardizer sc = Standardizer::fit(triple.train);
    triple.train = sc.apply(triple.train);
    triple.val = sc.apply(triple.val);
    triple.test = sc.apply(triple.test);
  }

  std::ostringstream summary;
  summary << "cell,epochs_to_train_auc_" << num(d.auc_target)
          << ",best_val_auc,test_auc_at_best_val\n";
  for (const auto& [name, cfg] : cells) {
    std::ofstream metrics(dir / ("metrics_" + name + ".csv"));
    metrics << metrics_csv_header() << "\n";
    const EpochHook hook = [&](const MetricsRow& row, const ModelParams&,
                               const PoolState*) {
      metrics << metrics_csv_line(row) << "\n";
    };
    const TrainResult result =
        train(triple.train, triple.val, triple.test, cfg, hook);
    const double test_at_best =
        result.metrics.empty()
            ? 0.5
            : result.metrics[static_cast<std::size_t>(result.best_epoch - 1)]
                  .test_auc;
    summary << name << ','
            << epochs_to_target(result.metrics, d.auc_target) << ','
            << num(result.best_val_auc) << ',' << num(test_at_best) << "\n";
    std::cout << "cell " << name << " done\n";
  }
  write_text(dir / "summary.txt", summary.str());
  std::cout << summary.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-instance deep AUC maximization with stochastic pooling"};
  app.require_subcommand(1);

  GenOpts gen;
  CLI::App* gen_cmd =
      app.add_subcommand("gen", "generate a synthetic witness dataset");
  gen_cmd->add_option("--out", gen.out, "output CSV path")->required();
  gen_cmd->add_option("--n-pos", gen.n_pos, "positive bags");
  gen_cmd->add_option("--n-neg", gen.n_neg, "negative bags");
  gen_cmd->add_option("--bag-size", gen.bag_size, "instances per bag");
  gen_cmd->add_option("--dim", gen.dim, "feature dimension");
  gen_cmd->add_option("--witness-shift", gen.witness_shift,
                      "mean shift of witness instances");
  gen_cmd->add_option("--witness-count", gen.witness_count,
                      "witness instances per positive bag");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_flag("--header", gen.header, "write a header row");

  ConvertOpts conv;
  CLI::App* conv_cmd =
      app.add_subcommand("convert", "convert MUSK or svmlight data to CSV");
  conv_cmd->add_option("--in", conv.in, "input file")->required();
  conv_cmd->add_option("--out", conv.out, "output CSV path")->required();
  conv_cmd->add_option("--format", conv.format, "musk | svmlight")
      ->check(CLI::IsMember({"musk", "svmlight"}));
  conv_cmd->add_flag("--header", conv.header, "write a header row");

  CommonOpts train_opts;
  int train_fold = 0;
  CLI::App* train_cmd = app.add_subcommand("train", "train one model");
  add_common_options(train_cmd, train_opts);
  train_cmd->add_option("--fold", train_fold, "validation fold to hold out");

  CommonOpts cv_opts;
  int cv_seeds = 3;
  CLI::App* cv_cmd =
      app.add_subcommand("cv", "k-fold cross validation over several seeds");
  add_common_options(cv_cmd, cv_opts);
  cv_cmd->add_option("--seeds", cv_seeds, "number of seeds (base --seed)");

  CommonOpts diag_opts;
  DiagOpts diag;
  CLI::App* diag_cmd =
      app.add_subcommand("diag", "estimator diagnostics and ablation grids");
  add_common_options(diag_cmd, diag_opts);
  diag_cmd->add_option("--mode", diag.mode, "budget | bsweep | frozen")
      ->check(CLI::IsMember({"budget", "bsweep", "frozen"}));
  diag_cmd->add_option("--budget", diag.budget,
                       "fixed bag-batch x instance-batch product");
  diag_cmd
      ->add_option("--b-list", diag.b_list,
                   "instance-batch sizes to sweep, e.g. 1,2,4,full")
      ->delimiter(',');
  diag_cmd->add_option("--rounds", diag.rounds, "frozen-model rounds");
  diag_cmd->add_option("--frozen-gamma0", diag.frozen_gamma0,
                       "gamma0 for the frozen comparison");
  diag_cmd->add_option("--n-seeds", diag.n_seeds, "frozen-model seeds");
  diag_cmd->add_option("--auc-target", diag.auc_target,
                       "train AUC threshold for epochs-to-target");
  diag_cmd->add_option("--fold", diag.fold, "fold used by the grid modes");

  try {
    std::vector<std::string> args = splice_config(argc, argv);
    std::reverse(args.begin(), args.end());  // CLI11 consumes reversed args
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // help text, exit 0
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "\n";
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen);
    if (conv_cmd->parsed()) return cmd_convert(conv);
    if (train_cmd->parsed()) {
      return cmd_train(train_cmd, train_opts, train_fold);
    }
    if (cv_cmd->parsed()) return cmd_cv(cv_cmd, cv_opts, cv_seeds);
    if (diag_cmd->parsed()) return cmd_diag(diag_cmd, diag_opts, diag);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
