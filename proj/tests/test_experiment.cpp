#include <filesystem>
#include <fstream>
#include <sstream>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <gtest/gtest.h>

#include "balmix/experiment.hpp"

using namespace balmix;
namespace fs = std::filesystem;

namespace {

json small_config_json(const std::string& out) {
  json j = json::parse(R"({
    "data": {"generator": {"classes": 3, "dim": 2, "n_max": 60, "imbalance_ratio": 6, "noise_sigma": 0.5, "seed": 4}},
    "model": {"hidden": 8},
    "train": {"epochs": 3, "batch_size": 8, "lr": 0.05},
    "methods": ["instance_sampling", "balanced_mixup"],
    "alphas": [0.2],
    "seeds": [1, 2],
    "bootstrap": 20
  })");
  j["out"] = out;
  return j;
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunRecord fake_record(Method m, std::optional<double> alpha, std::uint64_t seed, double bal_acc) {
  RunRecord r;
  r.config_hash = "0000000000000000";
  r.key = RunKey{m, alpha, 32, seed, std::nullopt};
  r.report.confusion = ConfusionMatrix(2);
  r.report[MetricId::balanced_acc].value = bal_acc;
  return r;
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  const auto c = parse_config(small_config_json("x"));
  EXPECT_EQ(c.hidden, (std::vector<std::size_t>{8}));
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_DOUBLE_EQ(c.train.lr0, 0.05);
  EXPECT_EQ(c.train.batch_size, 8u);
  EXPECT_EQ(c.train.monitor, MetricId::balanced_acc);
  EXPECT_EQ(c.methods, (std::vector<Method>{Method::instance_sampling, Method::balanced_mixup}));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(c.bootstrap, 20u);
  EXPECT_DOUBLE_EQ(c.split.val_fraction, 0.1);
  ASSERT_TRUE(c.data.generator);
  EXPECT_EQ(c.data.generator->n_max, 60u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  auto bad = [](const std::string& path, const json& value) {
    json j = small_config_json("x");
    j[json::json_pointer(path)] = value;
    return j;
  };
  EXPECT_THROW(parse_config(bad("/colour", 1)), ParameterError);
  EXPECT_THROW(parse_config(bad("/train/learning_rate", 0.1)), ParameterError);
  EXPECT_THROW(parse_config(bad("/data/generator/clases", 3)), ParameterError);
  EXPECT_THROW(parse_config(bad("/methods", json::array({"smote"}))), ParameterError);
  EXPECT_THROW(parse_config(bad("/alphas", json::array({0.0}))), ParameterError);
  EXPECT_THROW(parse_config(bad("/train/lr", -1.0)), ParameterError);
  EXPECT_THROW(parse_config(bad("/train/epochs", "ten")), ParameterError);
  EXPECT_THROW(parse_config(bad("/seeds", json::array())), ParameterError);
  EXPECT_THROW(parse_config(bad("/bootstrap", 1)), ParameterError);
  EXPECT_THROW(parse_config(bad("/split/folds", 1)), ParameterError);
  EXPECT_THROW(parse_config(bad("/data/csv", "a.csv")), ParameterError);
  EXPECT_THROW(parse_config(json::parse(R"({"methods": ["focal"]})")), ParameterError);
}

TEST(Config, HashIgnoresKeyOrderAndOutput) {
  const auto a = parse_config(small_config_json("dir_a"));
  // same content, keys listed in another order
  const auto b = parse_config(json::parse(R"({
    "seeds": [1, 2], "bootstrap": 20, "alphas": [0.2],
    "methods": ["instance_sampling", "balanced_mixup"],
    "train": {"lr": 0.05, "batch_size": 8, "epochs": 3},
    "model": {"hidden": 8}, "out": "dir_b", "threads": 4,
    "data": {"generator": {"seed": 4, "noise_sigma": 0.5, "imbalance_ratio": 6, "n_max": 60, "dim": 2, "classes": 3}}
  })"));
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  auto c = a;
  c.train.epochs = 4;
  EXPECT_NE(config_hash(a), config_hash(c));
}

TEST(Config, LoadFileErrors) {
  EXPECT_THROW(load_config("/nonexistent/config.json"), std::exception);
  const auto dir = fresh_dir("balmix_cfg_test");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_config((dir / "bad.json").string()), std::exception);
  fs::remove_all(dir);
}

TEST(Grid, RunCounts) {
  auto c = parse_config(small_config_json("x"));
  c.methods = {Method::instance_sampling};
  c.seeds = {1};
  EXPECT_EQ(run_grid(c).size(), 1u);
  c.methods = {Method::balanced_mixup, Method::mixup};
  c.alphas = {0.1, 0.2, 0.3};
  c.seeds = {1, 2, 3, 4, 5};
  EXPECT_EQ(run_grid(c).size(), 30u);
  c.split.folds = 5;
  c.methods = {Method::class_sampling};
  EXPECT_EQ(run_grid(c).size(), 25u);
  for (const auto& k : run_grid(c)) EXPECT_FALSE(k.alpha);
}

TEST(Grid, MethodsMapToSamplerPolicyAndLoss) {
  const auto c = parse_config(small_config_json("x"));
  auto cfg = [&](Method m, std::optional<double> a = std::nullopt) { return run_train_config(c, RunKey{m, a, 8, 1, std::nullopt}); };
  EXPECT_EQ(cfg(Method::class_sampling).sampler_q, kClassSampling);
  EXPECT_EQ(cfg(Method::sqrt_sampling).sampler_q, kSqrtSampling);
  EXPECT_EQ(cfg(Method::instance_sampling).policy.kind, MixKind::none);
  EXPECT_EQ(cfg(Method::focal).loss.kind, LossKind::focal);
  EXPECT_EQ(cfg(Method::cb).loss.kind, LossKind::cb);
  const auto bm = cfg(Method::balanced_mixup, 0.3);
  EXPECT_EQ(bm.policy.kind, MixKind::balanced);
  EXPECT_DOUBLE_EQ(bm.policy.alpha, 0.3);
  EXPECT_EQ(cfg(Method::mixup, 0.2).policy.kind, MixKind::mixup);
  EXPECT_EQ(cfg(Method::mixup, 0.2).model.hidden, 8u);
}

TEST(Experiment, DeterministicRecordsAndSummary) {
  const auto d1 = fresh_dir("balmix_exp_a"), d2 = fresh_dir("balmix_exp_b");
  auto c1 = parse_config(small_config_json(d1.string()));
  auto c2 = parse_config(small_config_json(d2.string()));
  c2.threads = 3;
  const auto r1 = run_experiment(c1);
  const auto r2 = run_experiment(c2);
  ASSERT_EQ(r1.size(), 4u);
  for (std::size_t i = 0; i < r1.size(); ++i) {
    EXPECT_EQ(run_id(r1[i]), run_id(r2[i]));
    EXPECT_TRUE(r1[i].report.confusion == r2[i].report.confusion);
    EXPECT_EQ(r1[i].best_epoch, r2[i].best_epoch);
    EXPECT_TRUE(fs::exists(d1 / "runs" / run_id(r1[i]) / "record.json"));
    EXPECT_TRUE(fs::exists(d1 / "runs" / run_id(r1[i]) / "checkpoint" / "checkpoint.json"));
  }
  const auto loaded = load_records(d2 / "runs");
  ASSERT_EQ(loaded.size(), 4u);
  write_summary(summarize(r1, kDefaultGrouping), d1);
  write_summary(summarize(loaded, kDefaultGrouping), d2);
  EXPECT_EQ(slurp(d1 / "summary.csv"), slurp(d2 / "summary.csv"));
  EXPECT_EQ(slurp(d1 / "summary.txt"), slurp(d2 / "summary.txt"));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Experiment, RecordJsonRoundTrip) {
  auto c = parse_config(small_config_json("unused"));
  c.methods = {Method::balanced_mixup};
  c.seeds = {3};
  const auto recs = run_experiment(c, RunOptions{false, nullptr});
  ASSERT_EQ(recs.size(), 1u);
  const auto back = record_from_json(json::parse(to_json(recs[0]).dump()));
  EXPECT_EQ(run_id(back), run_id(recs[0]));
  EXPECT_TRUE(back.report.confusion == recs[0].report.confusion);
  for (auto id : kAllMetrics) {
    EXPECT_EQ(back.report[id].value, recs[0].report[id].value);
    EXPECT_EQ(back.report[id].boot.has_value(), recs[0].report[id].boot.has_value());
  }
  EXPECT_EQ(back.best_epoch, recs[0].best_epoch);
}

TEST(Experiment, EveryMethodRuns) {
  auto c = parse_config(small_config_json("unused"));
  c.methods.assign(kAllMethods.begin(), kAllMethods.end());
  c.seeds = {1};
  c.bootstrap = 0;
  const auto recs = run_experiment(c, RunOptions{false, nullptr});
  EXPECT_EQ(recs.size(), kAllMethods.size());
  for (const auto& r : recs) EXPECT_TRUE(r.report[MetricId::balanced_acc].value);
}

TEST(Experiment, KFoldPartitionsCoverTheData) {
  auto c = parse_config(small_config_json("unused"));
  c.split.folds = 4;
  const auto data = load_source(c.data);
  const auto parts = make_partitions(c, data);
  ASSERT_EQ(parts.size(), 4u);
  std::size_t test_total = 0;
  for (const auto& p : parts) {
    EXPECT_EQ(p.train.size() + p.val.size() + p.test.size(), data.size());
    test_total += p.test.size();
  }
  EXPECT_EQ(test_total, data.size());
}

TEST(Experiment, UnwritableOutputFailsBeforeTraining) {
  const auto dir = fresh_dir("balmix_ro_test");
  fs::create_directories(dir);
  std::ofstream(dir / "file") << "x";
  // a regular file where a directory is expected
  auto c = parse_config(small_config_json((dir / "file" / "sub").string()));
  EXPECT_THROW(run_experiment(c), ParameterError);
  fs::remove_all(dir);
}

TEST(Summary, MinMedianMaxAndFormats) {
  std::vector<RunRecord> recs;
  const double vals[] = {0.5, 0.9, 0.7, 0.6};
  for (std::uint64_t s = 0; s < 4; ++s) recs.push_back(fake_record(Method::class_sampling, std::nullopt, s, vals[s]));
  recs.push_back(fake_record(Method::balanced_mixup, 0.1, 0, 0.8));
  auto& boot = recs.back().report[MetricId::balanced_acc].boot;
  boot = BootstrapResult{0.79, 0.02, 100, 0};

  const auto t = summarize(recs, kDefaultGrouping);
  ASSERT_EQ(t.rows.size(), 2u);
  const auto& s = t.rows[0].metrics[static_cast<std::size_t>(MetricId::balanced_acc)];
  EXPECT_EQ(s.n, 4u);
  EXPECT_DOUBLE_EQ(s.min, 0.5);
  EXPECT_DOUBLE_EQ(s.median, 0.65);
  EXPECT_DOUBLE_EQ(s.max, 0.9);
  EXPECT_FALSE(s.boot_mean);

  const auto csv = render_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')).rfind("method,alpha,hidden,n,quad_kappa_min,", 0), 0u);
  EXPECT_NE(csv.find("class_sampling,,32,4,"), std::string::npos);
  EXPECT_NE(csv.find("0.500000,0.650000,0.900000"), std::string::npos);
  EXPECT_NE(csv.find("balanced_mixup,0.1,32,1,"), std::string::npos);
  EXPECT_NE(csv.find("0.790000,0.020000"), std::string::npos);

  const auto txt = render_text(t);
  EXPECT_NE(txt.find("50.00 ← 65.00 → 90.00"), std::string::npos) << txt;
  EXPECT_NE(txt.find("79.00 ± 2.00"), std::string::npos) << txt;

  const auto by_seed = summarize(recs, {GroupKey::seed});
  EXPECT_EQ(by_seed.rows.size(), 4u);
  EXPECT_EQ(by_seed.rows[0].n_records, 2u);
  EXPECT_THROW(summarize({}, kDefaultGrouping), ParameterError);
  EXPECT_THROW(parse_group_key("colour"), ParameterError);
}

TEST(PlotData, BetaPdf) {
  for (const auto& [x, p] : emit_beta_pdf(1.0, 10)) EXPECT_DOUBLE_EQ(p, 1.0);
  EXPECT_DOUBLE_EQ(emit_beta_pdf(0.1, 100).back().second, 0.1);
  using Big = boost::multiprecision::cpp_bin_float_50;
  const Big ref = Big("0.2") * boost::multiprecision::pow(Big("0.01"), Big("-0.8"));
  EXPECT_NEAR(static_cast<double>(ref), 7.962, 1e-3);
  const auto rows = emit_beta_pdf(0.2, 100);
  EXPECT_DOUBLE_EQ(rows.front().first, 0.01);
  EXPECT_NEAR(rows.front().second, static_cast<double>(ref), 1e-12);
  // decreasing for alpha < 1
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i].second, rows[i - 1].second);
  EXPECT_EQ(beta_pdf_csv(1.0, 2), "x,pdf\n0.5,1\n1,1\n");
  EXPECT_THROW(emit_beta_pdf(0.0, 10), ParameterError);
  EXPECT_THROW(emit_beta_pdf(1.0, 1), ParameterError);
}

TEST(PlotData, ClassHistogram) {
  const auto ds = generate_longtail(5, 2, 2000, 100.0, 1.0, 3);
  EXPECT_EQ(class_histogram_csv(ds), "class,count\n0,2000\n1,632\n2,200\n3,63\n4,20\n");
}
