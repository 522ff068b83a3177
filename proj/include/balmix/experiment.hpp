#pragma once

// Experiment harness: JSON configuration, the (method, alpha, width, seed,
// fold) run grid, run records on disk and min/median/max summaries.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "balmix/data.hpp"
#include "balmix/error.hpp"
#include "balmix/metrics.hpp"
#include "balmix/model.hpp"
#include "balmix/persist.hpp"

namespace balmix {

enum class Method { class_sampling, instance_sampling, sqrt_sampling, focal, cb, balanced_mixup, mixup };

inline constexpr std::array<Method, 7> kAllMethods = {Method::class_sampling, Method::instance_sampling,
                                                      Method::sqrt_sampling,  Method::focal,
                                                      Method::cb,             Method::balanced_mixup,
                                                      Method::mixup};

inline std::string method_name(Method m) {
  switch (m) {
    case Method::class_sampling: return "class_sampling";
    case Method::instance_sampling: return "instance_sampling";
    case Method::sqrt_sampling: return "sqrt_sampling";
    case Method::focal: return "focal";
    case Method::cb: return "cb";
    case Method::balanced_mixup: return "balanced_mixup";
    case Method::mixup: return "mixup";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (auto m : kAllMethods)
    if (method_name(m) == s) return m;
  throw ParameterError("unknown method '" + s + "'");
}

inline bool method_uses_alpha(Method m) { return m == Method::balanced_mixup || m == Method::mixup; }

struct DataSourceConfig {
  std::optional<std::string> csv;
  std::optional<LongTailSpec> generator;
  // Generator only: draw the test set as a fresh sample of the same
  // distribution instead of holding out part of the data.
  std::optional<std::uint64_t> test_sample_seed;
};

struct SplitConfig {
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  std::optional<std::size_t> folds;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  DataSourceConfig data;
  std::vector<std::size_t> hidden{32};
  Activation activation = Activation::relu;
  TrainConfig train;  // seed, policy, loss and sampler are set per run
  double focal_gamma = 2.0;
  double cb_beta = 0.999;
  LambdaPer lambda_per = LambdaPer::example;
  std::vector<Method> methods{Method::instance_sampling};
  std::vector<double> alphas{0.1, 0.2, 0.3};
  SplitConfig split;
  std::vector<std::uint64_t> seeds{0};
  std::size_t bootstrap = 1000;
  std::size_t threads = 1;
  std::string out = "out";
};

// ---------------------------------------------------------------------------
// Config (de)serialization. Unknown keys are rejected at every level.

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ParameterError("config: " + where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const auto* a : allowed) ok = ok || key == a;
    if (!ok) throw ParameterError("config: unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParameterError("config: bad value for '" + std::string(key) + "' in " + where);
  }
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string schedule_name(Schedule s) { return s == Schedule::constant ? "constant" : "cosine_to_zero"; }

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  using detail::check_keys;
  using detail::get_or;
  ExperimentConfig c;
  check_keys(j, {"data", "model", "train", "methods", "alphas", "split", "seeds", "bootstrap", "threads", "out"},
             "top level");

  if (!j.contains("data")) throw ParameterError("config: 'data' is required");
  const auto& d = j.at("data");
  check_keys(d, {"csv", "generator", "test_sample_seed"}, "data");
  if (d.contains("csv") == d.contains("generator"))
    throw ParameterError("config: data needs exactly one of 'csv' or 'generator'");
  if (d.contains("csv")) c.data.csv = get_or<std::string>(d, "csv", "", "data");
  if (d.contains("generator")) {
    const auto& g = d.at("generator");
    check_keys(g, {"classes", "dim", "n_max", "imbalance_ratio", "noise_sigma", "seed"}, "data.generator");
    LongTailSpec s;
    s.num_classes = get_or(g, "classes", s.num_classes, "data.generator");
    s.dim = get_or(g, "dim", s.dim, "data.generator");
    s.n_max = get_or(g, "n_max", s.n_max, "data.generator");
    s.imbalance_ratio = get_or(g, "imbalance_ratio", s.imbalance_ratio, "data.generator");
    s.noise_sigma = get_or(g, "noise_sigma", s.noise_sigma, "data.generator");
    s.seed = get_or(g, "seed", s.seed, "data.generator");
    c.data.generator = s;
  }
  if (d.contains("test_sample_seed")) {
    if (!c.data.generator) throw ParameterError("config: test_sample_seed needs a generator data source");
    c.data.test_sample_seed = get_or<std::uint64_t>(d, "test_sample_seed", 0, "data");
  }

  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, {"hidden", "activation"}, "model");
    if (m.contains("hidden")) {
      c.hidden = m.at("hidden").is_array() ? get_or<std::vector<std::size_t>>(m, "hidden", {}, "model")
                                           : std::vector<std::size_t>{get_or<std::size_t>(m, "hidden", 32, "model")};
      if (c.hidden.empty()) throw ParameterError("config: model.hidden list is empty");
    }
    c.activation = parse_activation(get_or<std::string>(m, "activation", "relu", "model"));
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t, {"epochs", "batch_size", "lr", "schedule", "cycles", "momentum", "monitor", "lambda_per",
                   "focal_gamma", "cb_beta"},
               "train");
    c.train.epochs = get_or(t, "epochs", c.train.epochs, "train");
    c.train.batch_size = get_or(t, "batch_size", c.train.batch_size, "train");
    c.train.lr0 = get_or(t, "lr", c.train.lr0, "train");
    const auto sched = get_or<std::string>(t, "schedule", "cosine_to_zero", "train");
    if (sched == "cosine_to_zero") c.train.schedule = Schedule::cosine_to_zero;
    else if (sched == "constant") c.train.schedule = Schedule::constant;
    else throw ParameterError("config: unknown schedule '" + sched + "'");
    c.train.cycles = get_or(t, "cycles", c.train.cycles, "train");
    c.train.momentum = get_or(t, "momentum", c.train.momentum, "train");
    c.train.monitor = parse_metric(get_or<std::string>(t, "monitor", "balanced_acc", "train"));
    const auto lp = get_or<std::string>(t, "lambda_per", "example", "train");
    if (lp == "example") c.lambda_per = LambdaPer::example;
    else if (lp == "batch") c.lambda_per = LambdaPer::batch;
    else throw ParameterError("config: unknown lambda_per '" + lp + "'");
    c.focal_gamma = get_or(t, "focal_gamma", c.focal_gamma, "train");
    c.cb_beta = get_or(t, "cb_beta", c.cb_beta, "train");
  }

  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : get_or<std::vector<std::string>>(j, "methods", {}, "top level")) c.methods.push_back(parse_method(m));
    if (c.methods.empty()) throw ParameterError("config: methods list is empty");
  }
  c.alphas = get_or(j, "alphas", c.alphas, "top level");
  if (j.contains("split")) {
    const auto& s = j.at("split");
    check_keys(s, {"val_fraction", "test_fraction", "folds", "seed"}, "split");
    c.split.val_fraction = get_or(s, "val_fraction", c.split.val_fraction, "split");
    c.split.test_fraction = get_or(s, "test_fraction", c.split.test_fraction, "split");
    if (s.contains("folds") && !s.at("folds").is_null()) c.split.folds = get_or<std::size_t>(s, "folds", 5, "split");
    c.split.seed = get_or(s, "seed", c.split.seed, "split");
  }
  c.seeds = get_or(j, "seeds", c.seeds, "top level");
  c.bootstrap = get_or(j, "bootstrap", c.bootstrap, "top level");
  c.threads = get_or(j, "threads", c.threads, "top level");
  c.out = get_or(j, "out", c.out, "top level");

  // Semantic checks, all before any training starts.
  if (c.seeds.empty()) throw ParameterError("config: seeds list is empty");
  const bool needs_alpha = std::any_of(c.methods.begin(), c.methods.end(), method_uses_alpha);
  if (needs_alpha && c.alphas.empty()) throw ParameterError("config: mixing methods need a non-empty alpha grid");
  for (auto a : c.alphas)
    if (!(a > 0.0) || !std::isfinite(a)) throw ParameterError("config: alphas must be finite and > 0");
  if (!(c.split.val_fraction > 0.0 && c.split.val_fraction < 1.0))
    throw ParameterError("config: split.val_fraction must lie in (0, 1)");
  if (!(c.split.test_fraction > 0.0 && c.split.test_fraction < 1.0))
    throw ParameterError("config: split.test_fraction must lie in (0, 1)");
  if (c.split.folds && *c.split.folds < 2) throw ParameterError("config: split.folds must be >= 2");
  if (c.bootstrap == 1) throw ParameterError("config: bootstrap must be 0 (off) or >= 2");
  if (c.threads < 1) throw ParameterError("config: threads must be >= 1");
  TrainConfig probe = c.train;
  probe.loss.gamma = c.focal_gamma;
  probe.loss.cb_beta = c.cb_beta;
  probe.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError(path + ": cannot open config");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParameterError(path + ": " + e.what());
  }
  return parse_config(j);
}

// Normalized config with every default filled in. Output location and thread
// count do not affect results and are left out.
inline json canonical_json(const ExperimentConfig& c) {
  json data;
  if (c.data.csv) data["csv"] = *c.data.csv;
  if (c.data.generator) {
    const auto& g = *c.data.generator;
    data["generator"] = {{"classes", g.num_classes}, {"dim", g.dim},         {"n_max", g.n_max},
                         {"imbalance_ratio", g.imbalance_ratio}, {"noise_sigma", g.noise_sigma}, {"seed", g.seed}};
  }
  if (c.data.test_sample_seed) data["test_sample_seed"] = *c.data.test_sample_seed;
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(method_name(m));
  return {
      {"data", data},
      {"model", {{"hidden", c.hidden}, {"activation", activation_name(c.activation)}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.lr0},
        {"schedule", detail::schedule_name(c.train.schedule)},
        {"cycles", c.train.cycles},
        {"momentum", c.train.momentum},
        {"monitor", std::string(metric_name(c.train.monitor))},
        {"lambda_per", c.lambda_per == LambdaPer::batch ? "batch" : "example"},
        {"focal_gamma", c.focal_gamma},
        {"cb_beta", c.cb_beta}}},
      {"methods", methods},
      {"alphas", c.alphas},
      {"split",
       {{"val_fraction", c.split.val_fraction},
        {"test_fraction", c.split.test_fraction},
        {"folds", c.split.folds ? json(*c.split.folds) : json(nullptr)},
        {"seed", c.split.seed}}},
      {"seeds", c.seeds},
      {"bootstrap", c.bootstrap},
  };
}

// json objects keep keys sorted, so the dump is independent of file key order.
inline std::string config_hash(const ExperimentConfig& c) { return detail::hex16(detail::fnv1a(canonical_json(c).dump())); }

// ---------------------------------------------------------------------------
// Runs

struct RunKey {
  Method method = Method::instance_sampling;
  std::optional<double> alpha;
  std::size_t hidden = 32;
  std::uint64_t seed = 0;
  std::optional<std::size_t> fold;
};

inline json to_json(const RunKey& k) {
  return {{"method", method_name(k.method)},
          {"alpha", k.alpha ? json(*k.alpha) : json(nullptr)},
          {"hidden", k.hidden},
          {"seed", k.seed},
          {"fold", k.fold ? json(*k.fold) : json(nullptr)}};
}

struct RunRecord {
  std::string config_hash;
  RunKey key;
  EvalReport report;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_metric = 0.0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_test = 0;
  double duration_s = 0.0;
};

inline std::string run_id(const RunRecord& r) {
  return detail::hex16(detail::fnv1a(r.config_hash + to_json(r.key).dump()));
}

inline json to_json(const RunRecord& r) {
  json hist = json::array();
  for (const auto& e : r.history)
    hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_metric", e.val_metric}, {"lr", e.lr}});
  return {{"config_hash", r.config_hash},
          {"run_id", run_id(r)},
          {"key", to_json(r.key)},
          {"report", to_json(r.report)},
          {"history", hist},
          {"checkpoint", {{"epoch", r.best_epoch}, {"val_metric", r.best_val_metric}}},
          {"sizes", {{"train", r.n_train}, {"val", r.n_val}, {"test", r.n_test}}},
          {"duration_s", r.duration_s}};
}

// Reads back what summaries need: key, metric values and bootstrap stats.
inline RunRecord record_from_json(const json& j) {
  RunRecord r;
  try {
    r.config_hash = j.at("config_hash").get<std::string>();
    const auto& k = j.at("key");
    r.key.method = parse_method(k.at("method").get<std::string>());
    if (!k.at("alpha").is_null()) r.key.alpha = k.at("alpha").get<double>();
    r.key.hidden = k.at("hidden").get<std::size_t>();
    r.key.seed = k.at("seed").get<std::uint64_t>();
    if (!k.at("fold").is_null()) r.key.fold = k.at("fold").get<std::size_t>();
    const auto& rep = j.at("report");
    const auto& cm = rep.at("confusion_matrix");
    r.report.confusion = ConfusionMatrix(cm.size());
    for (std::size_t i = 0; i < cm.size(); ++i)
      for (std::size_t c = 0; c < cm[i].size(); ++c)
        for (std::uint64_t n = cm[i][c].get<std::uint64_t>(); n > 0; --n) r.report.confusion.add(i, c);
    for (auto id : kAllMetrics) {
      const auto& m = rep.at(std::string(metric_name(id)));
      if (!m.at("value").is_null()) r.report[id].value = m.at("value").get<double>();
      if (!m.at("boot_mean").is_null()) {
        BootstrapResult b;
        b.mean = m.at("boot_mean").get<double>();
        b.std = m.at("boot_std").get<double>();
        b.n_resamples = rep.value("boot_resamples", std::size_t{0});
        r.report[id].boot = b;
      }
    }
    r.best_epoch = j.at("checkpoint").at("epoch").get<std::size_t>();
    r.best_val_metric = j.at("checkpoint").at("val_metric").get<double>();
    r.duration_s = j.value("duration_s", 0.0);
  } catch (const json::exception& e) {
    throw IngestionError(std::string("run record: ") + e.what());
  }
  return r;
}

// Per-method machinery: sampler exponent, mix policy and loss.
inline TrainConfig run_train_config(const ExperimentConfig& c, const RunKey& key) {
  TrainConfig t = c.train;
  t.model.hidden = key.hidden;
  t.model.activation = c.activation;
  t.seed = derive_seed(key.seed, key.fold.value_or(0));
  t.loss = LossSpec{};
  t.loss.gamma = c.focal_gamma;
  t.loss.cb_beta = c.cb_beta;
  t.policy = MixPolicy{};
  t.policy.lambda_per = c.lambda_per;
  t.sampler_q = kInstanceSampling;
  switch (key.method) {
    case Method::class_sampling: t.sampler_q = kClassSampling; break;
    case Method::instance_sampling: break;
    case Method::sqrt_sampling: t.sampler_q = kSqrtSampling; break;
    case Method::focal: t.loss.kind = LossKind::focal; break;
    case Method::cb: t.loss.kind = LossKind::cb; break;
    case Method::balanced_mixup:
      t.policy.kind = MixKind::balanced;
      t.policy.alpha = key.alpha.value();
      break;
    case Method::mixup:
      t.policy.kind = MixKind::mixup;
      t.policy.alpha = key.alpha.value();
      break;
  }
  return t;
}

// Run grid in a fixed order: method, alpha, width, seed, fold.
inline std::vector<RunKey> run_grid(const ExperimentConfig& c) {
  std::vector<RunKey> keys;
  std::vector<std::optional<std::size_t>> folds;
  if (c.split.folds) {
    for (std::size_t f = 0; f < *c.split.folds; ++f) folds.emplace_back(f);
  } else {
    folds.emplace_back(std::nullopt);
  }
  for (auto m : c.methods) {
    std::vector<std::optional<double>> alphas;
    if (method_uses_alpha(m)) {
      for (auto a : c.alphas) alphas.emplace_back(a);
    } else {
      alphas.emplace_back(std::nullopt);
    }
    for (const auto& a : alphas)
      for (auto h : c.hidden)
        for (auto s : c.seeds)
          for (const auto& f : folds) keys.push_back(RunKey{m, a, h, s, f});
  }
  return keys;
}

inline Dataset load_source(const DataSourceConfig& d) {
  if (d.csv) return load_csv(*d.csv);
  if (d.generator) return generate_longtail(*d.generator);
  throw ParameterError("config: no data source");
}

struct Partition {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Train/validation/test parts for one fold (or the single hold-out split).
inline std::vector<Partition> make_partitions(const ExperimentConfig& c, const Dataset& data) {
  std::vector<Partition> parts;
  auto split_val = [&](const Dataset& trainval, Dataset test) {
    const auto tv = stratified_split(trainval, SplitSpec{c.split.val_fraction, std::nullopt, derive_seed(c.split.seed, 7)});
    parts.push_back(Partition{tv.first, tv.second, std::move(test)});
  };
  if (c.split.folds) {
    for (auto& [trainval, test] : stratified_kfold(data, *c.split.folds, c.split.seed)) split_val(trainval, test);
  } else if (c.data.test_sample_seed) {
    LongTailSpec g = *c.data.generator;
    g.sample_seed = *c.data.test_sample_seed;
    split_val(data, generate_longtail(g));
  } else {
    const auto idx = stratified_split_indices(data, c.split.test_fraction, derive_seed(c.split.seed, 11));
    split_val(data.subset(idx.train), data.subset(idx.val));
  }
  return parts;
}

inline RunRecord execute_run(const ExperimentConfig& c, const std::string& hash, const RunKey& key,
                             const Partition& part, Checkpoint* best = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  const TrainConfig t = run_train_config(c, key);
  const TrainResult tr = train(part.train, part.val, t);
  const auto preds = predict(tr.checkpoint.params, part.test.features());
  RunRecord r;
  r.config_hash = hash;
  r.key = key;
  r.report = evaluate(part.test.labels(), preds, part.test.num_classes(), c.bootstrap, derive_seed(t.seed, 99));
  r.history = tr.history;
  r.best_epoch = tr.checkpoint.epoch;
  r.best_val_metric = tr.checkpoint.val_metric;
  r.n_train = part.train.size();
  r.n_val = part.val.size();
  r.n_test = part.test.size();
  r.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (best) *best = tr.checkpoint;
  return r;
}

inline void ensure_writable_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto probe = dir / ".balmix_write_probe";
  std::ofstream f(probe);
  if (ec || !f) throw ParameterError(dir.string() + ": output directory is not writable");
  f.close();
  std::filesystem::remove(probe, ec);
}

struct RunOptions {
  bool write = true;           // persist runs/<id>/record.json and checkpoint
  std::ostream* log = nullptr;  // one line per finished run
};

// Every grid point trained and evaluated; records returned in grid order.
// Worker threads own their runs; writing goes through one lock.
inline std::vector<RunRecord> run_experiment(const ExperimentConfig& c, const RunOptions& opts = {}) {
  const std::filesystem::path out = c.out;
  if (opts.write) ensure_writable_dir(out / "runs");
  const Dataset data = load_source(c.data);
  const auto parts = make_partitions(c, data);
  const auto keys = run_grid(c);
  const auto hash = config_hash(c);

  std::vector<RunRecord> records(keys.size());
  std::atomic<std::size_t> next{0};
  std::mutex io;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < keys.size(); i = next++) {
      try {
        Checkpoint ckpt;
        RunRecord r = execute_run(c, hash, keys[i], parts[keys[i].fold.value_or(0)], &ckpt);
        std::lock_guard lock(io);
        if (opts.write) {
          const auto dir = out / "runs" / run_id(r);
          save_checkpoint(ckpt, CheckpointMeta{run_train_config(c, keys[i]).seed, c.train.monitor}, dir / "checkpoint");
          std::ofstream(dir / "record.json") << to_json(r).dump(2) << '\n';
        }
        if (opts.log)
          *opts.log << "run " << i + 1 << '/' << keys.size() << ' ' << to_json(r.key).dump() << " done in "
                    << r.duration_s << " s\n";
        records[i] = std::move(r);
      } catch (...) {
        std::lock_guard lock(io);
        if (!failure) failure = std::current_exception();
        next = keys.size();
      }
    }
  };
  const std::size_t n_threads = std::min(c.threads, keys.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return records;
}

inline std::vector<RunRecord> load_records(const std::filesystem::path& runs_dir) {
  if (!std::filesystem::is_directory(runs_dir)) throw IngestionError(runs_dir.string() + ": not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(runs_dir))
    if (std::filesystem::exists(e.path() / "record.json")) files.push_back(e.path() / "record.json");
  std::vector<RunRecord> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw IngestionError(f.string() + ": " + e.what());
    }
    out.push_back(record_from_json(j));
  }
  // Directory order is unspecified; restore a stable order.
  std::sort(out.begin(), out.end(), [](const RunRecord& a, const RunRecord& b) {
    auto tie = [](const RunRecord& r) {
      return std::make_tuple(static_cast<int>(r.key.method), r.key.alpha.value_or(-1.0), r.key.hidden, r.key.seed,
                             r.key.fold ? static_cast<long long>(*r.key.fold) : -1LL);
    };
    return tie(a) < tie(b);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Summaries

enum class GroupKey { method, alpha, hidden, seed, fold };

inline std::string group_key_name(GroupKey k) {
  switch (k) {
    case GroupKey::method: return "method";
    case GroupKey::alpha: return "alpha";
    case GroupKey::hidden: return "hidden";
    case GroupKey::seed: return "seed";
    case GroupKey::fold: return "fold";
  }
  return "?";
}

inline GroupKey parse_group_key(const std::string& s) {
  for (auto k : {GroupKey::method, GroupKey::alpha, GroupKey::hidden, GroupKey::seed, GroupKey::fold})
    if (group_key_name(k) == s) return k;
  throw ParameterError("unknown group key '" + s + "'");
}

inline const std::vector<GroupKey> kDefaultGrouping{GroupKey::method, GroupKey::alpha, GroupKey::hidden};

inline std::string format_number(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

inline std::string key_field(const RunKey& k, GroupKey g) {
  switch (g) {
    case GroupKey::method: return method_name(k.method);
    case GroupKey::alpha: return k.alpha ? format_number(*k.alpha, "%g") : "";
    case GroupKey::hidden: return std::to_string(k.hidden);
    case GroupKey::seed: return std::to_string(k.seed);
    case GroupKey::fold: return k.fold ? std::to_string(*k.fold) : "";
  }
  return "";
}

struct MetricSummary {
  std::size_t n = 0;  // records with a defined value
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
  std::optional<double> boot_mean;  // averaged over the group's records
  std::optional<double> boot_std;
};

struct SummaryRow {
  std::vector<std::string> key;
  std::size_t n_records = 0;
  std::array<MetricSummary, kAllMetrics.size()> metrics;
};

struct SummaryTable {
  std::vector<GroupKey> group_by;
  std::vector<SummaryRow> rows;
};

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Groups appear in order of first occurrence in `records`.
inline SummaryTable summarize(const std::vector<RunRecord>& records, const std::vector<GroupKey>& group_by,
                              std::ostream* warn = nullptr) {
  if (records.empty()) throw ParameterError("summarize: no records");
  std::vector<std::vector<std::string>> order;
  std::map<std::vector<std::string>, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) {
    std::vector<std::string> key;
    for (auto g : group_by) key.push_back(key_field(r.key, g));
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&r);
  }
  SummaryTable table;
  table.group_by = group_by;
  for (const auto& key : order) {
    const auto& members = groups.at(key);
    SummaryRow row;
    row.key = key;
    row.n_records = members.size();
    for (auto id : kAllMetrics) {
      std::vector<double> vals;
      double bm = 0.0;
      double bs = 0.0;
      std::size_t nb = 0;
      for (const auto* r : members) {
        const auto& m = r->report[id];
        if (m.value) vals.push_back(*m.value);
        if (m.boot) {
          bm += m.boot->mean;
          bs += m.boot->std;
          ++nb;
        }
      }
      auto& s = row.metrics[static_cast<std::size_t>(id)];
      s.n = vals.size();
      if (!vals.empty()) {
        s.min = *std::min_element(vals.begin(), vals.end());
        s.max = *std::max_element(vals.begin(), vals.end());
        s.median = median_of(vals);
      } else if (warn) {
        *warn << "warning: " << metric_name(id) << " undefined for every record in group";
        for (const auto& k : key) *warn << ' ' << k;
        *warn << '\n';
      }
      if (nb) {
        s.boot_mean = bm / static_cast<double>(nb);
        s.boot_std = bs / static_cast<double>(nb);
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline std::string render_csv(const SummaryTable& t) {
  std::ostringstream out;
  for (auto g : t.group_by) out << group_key_name(g) << ',';
  out << "n";
  for (auto id : kAllMetrics) {
    const auto m = std::string(metric_name(id));
    out << ',' << m << "_min," << m << "_median," << m << "_max," << m << "_boot_mean," << m << "_boot_std";
  }
  out << '\n';
  for (const auto& row : t.rows) {
    for (const auto& k : row.key) out << k << ',';
    out << row.n_records;
    for (const auto& s : row.metrics) {
      if (s.n) {
        out << ',' << format_number(s.min) << ',' << format_number(s.median) << ',' << format_number(s.max);
      } else {
        out << ",,,";
      }
      out << ',' << (s.boot_mean ? format_number(*s.boot_mean) : "") << ','
          << (s.boot_std ? format_number(*s.boot_std) : "");
    }
    out << '\n';
  }
  return out.str();
}

// Aligned text: "min ← median → max" per metric, then bootstrap "mean ± std",
// values in percent with two decimals.
inline std::string render_text(const SummaryTable& t) {
  auto pct = [](double v) { return format_number(100.0 * v, "%.2f"); };
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header;
  std::string keyhead;
  for (auto g : t.group_by) keyhead += (keyhead.empty() ? "" : "/") + group_key_name(g);
  header.push_back(keyhead);
  for (auto id : kAllMetrics) header.emplace_back(metric_name(id));
  cells.push_back(header);
  for (const auto& row : t.rows) {
    std::string label;
    for (const auto& k : row.key)
      if (!k.empty()) label += (label.empty() ? "" : " ") + k;
    std::vector<std::string> line{label};
    for (const auto& s : row.metrics)
      line.push_back(s.n ? pct(s.min) + " ← " + pct(s.median) + " → " + pct(s.max) : "n/a");
    cells.push_back(line);
  }
  bool any_boot = false;
  for (const auto& row : t.rows)
    for (const auto& s : row.metrics) any_boot = any_boot || s.boot_mean.has_value();
  const std::size_t triple_rows = cells.size();
  if (any_boot) {
    std::vector<std::string> bh{"bootstrap"};
    for (auto id : kAllMetrics) bh.emplace_back(metric_name(id));
    cells.push_back(bh);
    for (const auto& row : t.rows) {
      std::string label;
      for (const auto& k : row.key)
        if (!k.empty()) label += (label.empty() ? "" : " ") + k;
      std::vector<std::string> line{label};
      for (const auto& s : row.metrics)
        line.push_back(s.boot_mean ? pct(*s.boot_mean) + " ± " + pct(*s.boot_std) : "n/a");
      cells.push_back(line);
    }
  }
  // Column widths in code points so the arrows do not skew alignment.
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char ch : s) w += (ch & 0xC0) != 0x80;
    return w;
  };
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t i = 0; i < line.size(); ++i) widths[i] = std::max(widths[i], width(line[i]));
  std::ostringstream out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    if (r == triple_rows) out << '\n';
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      out << cells[r][i];
      if (i + 1 < cells[r].size()) out << std::string(widths[i] - width(cells[r][i]) + 2, ' ');
    }
    out << '\n';
  }
  return out.str();
}

inline void write_summary(const SummaryTable& t, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "summary.csv") << render_csv(t);
  std::ofstream(dir / "summary.txt") << render_text(t);
}

// ---------------------------------------------------------------------------
// Plot data

// Beta(alpha, 1) density alpha * x^(alpha - 1) on x = i / points, i = 1..points.
inline std::vector<std::pair<double, double>> emit_beta_pdf(double alpha, std::size_t points) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ParameterError("beta-pdf: alpha must be finite and > 0");
  if (points < 2) throw ParameterError("beta-pdf: points must be >= 2");
  std::vector<std::pair<double, double>> rows;
  for (std::size_t i = 1; i <= points; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(points);
    rows.emplace_back(x, alpha * std::pow(x, alpha - 1.0));
  }
  return rows;
}

inline std::string beta_pdf_csv(double alpha, std::size_t points) {
  std::ostringstream out;
  out << "x,pdf\n";
  for (const auto& [x, p] : emit_beta_pdf(alpha, points)) out << format_number(x, "%.17g") << ',' << format_number(p, "%.17g") << '\n';
  return out.str();
}

inline std::vector<std::pair<std::size_t, std::size_t>> emit_class_histogram(const Dataset& ds) {
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  for (std::size_t k = 0; k < ds.num_classes(); ++k) rows.emplace_back(k, ds.class_counts()[k]);
  return rows;
}

inline std::string class_histogram_csv(const Dataset& ds) {
  std::ostringstream out;
  out << "class,count\n";
  for (const auto& [k, n] : emit_class_histogram(ds)) out << k << ',' << n << '\n';
  return out.str();
}

}  // namespace balmix
