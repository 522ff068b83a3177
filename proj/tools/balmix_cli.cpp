// balmix: command-line front end for data generation, training runs,
// cross-validation sweeps, summaries and plot data.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "balmix/balmix.hpp"

namespace fs = std::filesystem;
using namespace balmix;

namespace {

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw ParameterError(path + ": cannot open for writing");
  out << text;
}

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> bootstrap;
  std::vector<std::string> methods;
  std::vector<double> alphas;
  std::string data;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    app->add_option("--out", out, "output directory (overrides config 'out')");
    app->add_option("--seed", seed, "run with this single seed");
    app->add_option("--threads", threads, "worker threads");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--bootstrap", bootstrap, "bootstrap resamples (0 = off)");
    app->add_option("--methods", methods, "methods to run");
    app->add_option("--alphas", alphas, "alpha grid for mixing methods");
    app->add_option("--data", data, "CSV dataset (replaces the config data source)")->check(CLI::ExistingFile);
  }

  ExperimentConfig load() const {
    ExperimentConfig c = load_config(config);
    if (!out.empty()) c.out = out;
    if (seed) c.seeds = {*seed};
    if (threads) c.threads = *threads;
    if (epochs) c.train.epochs = *epochs;
    if (bootstrap) {
      if (*bootstrap == 1) throw ParameterError("--bootstrap must be 0 or >= 2");
      c.bootstrap = *bootstrap;
    }
    if (!methods.empty()) {
      c.methods.clear();
      for (const auto& m : methods) c.methods.push_back(parse_method(m));
    }
    if (!alphas.empty()) c.alphas = alphas;
    if (!data.empty()) {
      c.data = DataSourceConfig{};
      c.data.csv = data;
    }
    return c;
  }
};

void write_config_copy(const ExperimentConfig& c) {
  std::ofstream(fs::path(c.out) / "config.json") << canonical_json(c).dump(2) << '\n';
}

int run_sweep(const ExperimentConfig& c) {
  ensure_writable_dir(c.out);
  write_config_copy(c);
  RunOptions opts;
  opts.log = &std::cerr;
  const auto records = run_experiment(c, opts);
  const auto table = summarize(records, kDefaultGrouping, &std::cerr);
  write_summary(table, c.out);
  std::cout << render_text(table);
  std::cerr << records.size() << " runs; summary in " << (fs::path(c.out) / "summary.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Balanced-MixUp experiments on long-tailed data"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic long-tail dataset as CSV");
  LongTailSpec spec;
  std::optional<std::uint64_t> sample_seed;
  std::string gen_out;
  gen->add_option("--classes", spec.num_classes, "number of classes K")->capture_default_str();
  gen->add_option("--dim", spec.dim, "feature dimension")->capture_default_str();
  gen->add_option("--n-max", spec.n_max, "size of the head class")->capture_default_str();
  gen->add_option("--ratio", spec.imbalance_ratio, "head/tail imbalance ratio")->capture_default_str();
  gen->add_option("--noise", spec.noise_sigma, "per-class Gaussian noise sigma")->capture_default_str();
  gen->add_option("--seed", spec.seed, "seed for class means and samples")->capture_default_str();
  gen->add_option("--sample-seed", sample_seed, "separate seed for the samples");
  gen->add_option("--out", gen_out, "output CSV (default stdout)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train one run and save its checkpoint and report");
  Overrides train_ov;
  train_ov.add_to(train_cmd);
  std::optional<std::size_t> train_hidden;
  train_cmd->add_option("--hidden", train_hidden, "hidden width");

  // cv
  auto* cv = app.add_subcommand("cv", "stratified k-fold cross-validation over the config grid");
  Overrides cv_ov;
  cv_ov.add_to(cv);
  std::optional<std::size_t> cv_folds;
  cv->add_option("--folds", cv_folds, "number of folds (default: config value or 5)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run the full method x alpha x width x seed grid");
  Overrides sweep_ov;
  sweep_ov.add_to(sweep);

  // summarize
  auto* summ = app.add_subcommand("summarize", "summarize run records into summary.csv / summary.txt");
  std::string summ_in;
  std::string summ_out;
  std::vector<std::string> group_by;
  summ->add_option("--in", summ_in, "experiment directory containing runs/")->required();
  summ->add_option("--out", summ_out, "where to write the summary (default: --in)");
  summ->add_option("--group-by", group_by, "grouping keys: method alpha hidden seed fold");

  // beta-pdf
  auto* beta = app.add_subcommand("beta-pdf", "Beta(alpha, 1) density curve as CSV");
  double beta_alpha = 0.2;
  std::size_t beta_points = 200;
  std::string beta_out;
  beta->add_option("--alpha", beta_alpha, "alpha")->capture_default_str();
  beta->add_option("--points", beta_points, "grid points on (0, 1]")->capture_default_str();
  beta->add_option("--out", beta_out, "output CSV (default stdout)");

  // class-hist
  auto* hist = app.add_subcommand("class-hist", "per-class counts of a dataset as CSV");
  std::string hist_data;
  std::string hist_config;
  std::string hist_out;
  auto* hd = hist->add_option("--data", hist_data, "CSV dataset")->check(CLI::ExistingFile);
  auto* hc = hist->add_option("--config", hist_config, "experiment config; uses its data source")->check(CLI::ExistingFile);
  hd->excludes(hc);
  hist->add_option("--out", hist_out, "output CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      spec.sample_seed = sample_seed;
      const auto ds = generate_longtail(spec);
      std::ostringstream s;
      write_csv(s, ds);
      write_text(gen_out, s.str());
    } else if (*train_cmd) {
      ExperimentConfig c = train_ov.load();
      c.split.folds.reset();
      ensure_writable_dir(c.out);
      RunKey key = run_grid(c).front();
      if (train_hidden) key.hidden = *train_hidden;
      const Dataset data = load_source(c.data);
      const auto parts = make_partitions(c, data);
      Checkpoint ckpt;
      const RunRecord r = execute_run(c, config_hash(c), key, parts.front(), &ckpt);
      const fs::path out = c.out;
      save_checkpoint(ckpt, CheckpointMeta{run_train_config(c, key).seed, c.train.monitor}, out / "checkpoint");
      std::ofstream(out / "record.json") << to_json(r).dump(2) << '\n';
      std::ofstream(out / "report.json") << to_json(r.report).dump(2) << '\n';
      std::cout << to_json(r.report).dump(2) << '\n';
    } else if (*cv) {
      ExperimentConfig c = cv_ov.load();
      c.split.folds = cv_folds ? *cv_folds : c.split.folds.value_or(5);
      if (*c.split.folds < 2) throw ParameterError("--folds must be >= 2");
      return run_sweep(c);
    } else if (*sweep) {
      return run_sweep(sweep_ov.load());
    } else if (*summ) {
      std::vector<GroupKey> keys;
      for (const auto& g : group_by) keys.push_back(parse_group_key(g));
      if (keys.empty()) keys = kDefaultGrouping;
      const auto records = load_records(fs::path(summ_in) / "runs");
      const auto table = summarize(records, keys, &std::cerr);
      write_summary(table, summ_out.empty() ? summ_in : summ_out);
      std::cout << render_text(table);
    } else if (*beta) {
      write_text(beta_out, beta_pdf_csv(beta_alpha, beta_points));
    } else if (*hist) {
      Dataset ds;
      if (!hist_data.empty()) {
        ds = load_csv(hist_data);
      } else if (!hist_config.empty()) {
        ds = load_source(load_config(hist_config).data);
      } else {
        throw ParameterError("class-hist needs --data or --config");
      }
      write_text(hist_out, class_histogram_csv(ds));
    }
  } catch (const std::exception& e) {
    std::cerr << "balmix: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
