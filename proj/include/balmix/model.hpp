#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "balmix/data.hpp"
#include "balmix/error.hpp"
#include "balmix/losses.hpp"
#include "balmix/metrics.hpp"
#include "balmix/mixing.hpp"
#include "balmix/random.hpp"
#include "balmix/sampling.hpp"

namespace balmix {

enum class Activation { relu, tanh };

// Dense softmax classifier: logits = act(X W1 + b1) W2 + b2, or X W2 + b2
// when there is no hidden layer (hidden == 0, W1/b1 empty).
struct ModelParams {
  Matrix w1;  // d x H
  Vector b1;  // H
  Matrix w2;  // (H or d) x K
  Vector b2;  // K
  Activation activation = Activation::relu;

  std::size_t input_dim() const { return static_cast<std::size_t>(hidden() ? w1.rows() : w2.rows()); }
  std::size_t hidden() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t num_classes() const { return static_cast<std::size_t>(w2.cols()); }

  bool all_finite() const { return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite(); }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    auto same = [](const auto& x, const auto& y) {
      return x.rows() == y.rows() && x.cols() == y.cols() && (x.size() == 0 || x == y);
    };
    return a.activation == b.activation && same(a.w1, b.w1) && same(a.b1, b.b1) && same(a.w2, b.w2) &&
           same(a.b2, b.b2);
  }
};

// Weights and biases uniform in +-1/sqrt(fan_in).
inline ModelParams init_params(std::size_t input_dim, std::size_t hidden, std::size_t num_classes,
                               Activation activation, std::uint64_t seed) {
  if (input_dim < 1 || num_classes < 1) throw ParameterError("model needs d >= 1 and K >= 1");
  Rng rng = make_rng(seed, 0x696e6974ULL);
  auto fill = [&rng](auto& m, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = bound * (2.0 * uniform01(rng) - 1.0);
  };
  ModelParams p;
  p.activation = activation;
  const auto d = static_cast<Eigen::Index>(input_dim);
  const auto h = static_cast<Eigen::Index>(hidden);
  const auto k = static_cast<Eigen::Index>(num_classes);
  p.w1.resize(d, h);
  p.b1.resize(h);
  p.w2.resize(hidden ? h : d, k);
  p.b2.resize(k);
  fill(p.w1, input_dim);
  fill(p.b1, input_dim);
  fill(p.w2, hidden ? hidden : input_dim);
  fill(p.b2, hidden ? hidden : input_dim);
  return p;
}

inline ModelParams zeros_like(const ModelParams& p) {
  ModelParams z;
  z.activation = p.activation;
  z.w1 = Matrix::Zero(p.w1.rows(), p.w1.cols());
  z.b1 = Vector::Zero(p.b1.size());
  z.w2 = Matrix::Zero(p.w2.rows(), p.w2.cols());
  z.b2 = Vector::Zero(p.b2.size());
  return z;
}

namespace detail {

struct ForwardCache {
  Matrix pre;     // X W1 + b1
  Matrix hidden;  // act(pre)
  Matrix logits;
};

inline ForwardCache forward_cached(const ModelParams& p, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != p.input_dim()) throw ParameterError("forward: feature width differs from model input");
  if (!x.allFinite()) throw NumericError("forward: non-finite input");
  ForwardCache c;
  if (p.hidden()) {
    c.pre = (x * p.w1).rowwise() + p.b1.transpose();
    c.hidden = p.activation == Activation::relu ? Matrix(c.pre.cwiseMax(0.0)) : Matrix(c.pre.array().tanh().matrix());
    c.logits = (c.hidden * p.w2).rowwise() + p.b2.transpose();
  } else {
    c.logits = (x * p.w2).rowwise() + p.b2.transpose();
  }
  return c;
}

}  // namespace detail

inline Matrix forward(const ModelParams& params, const Matrix& features) {
  return detail::forward_cached(params, features).logits;
}

struct Backprop {
  double loss = 0.0;
  ModelParams grad;
};

// Loss value and exact gradients for every parameter tensor.
inline Backprop backward(const ModelParams& params, const Matrix& features, const Matrix& targets,
                         const LossSpec& loss) {
  const auto cache = detail::forward_cached(params, features);
  const LossValue lv = evaluate_loss(loss, cache.logits, targets);
  Backprop out;
  out.loss = lv.loss;
  out.grad = zeros_like(params);
  const Matrix& dlogits = lv.grad;
  out.grad.b2 = dlogits.colwise().sum().transpose();
  if (params.hidden()) {
    out.grad.w2 = cache.hidden.transpose() * dlogits;
    Matrix dh = dlogits * params.w2.transpose();
    if (params.activation == Activation::relu) {
      dh = dh.cwiseProduct((cache.pre.array() > 0.0).cast<double>().matrix());
    } else {
      dh = dh.cwiseProduct((1.0 - cache.hidden.array().square()).matrix());
    }
    out.grad.w1 = features.transpose() * dh;
    out.grad.b1 = dh.colwise().sum().transpose();
  } else {
    out.grad.w2 = features.transpose() * dlogits;
  }
  return out;
}

inline std::vector<ClassIndex> predict(const ModelParams& params, const Matrix& features) {
  const Matrix logits = forward(params, features);
  std::vector<ClassIndex> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<ClassIndex>(best);
  }
  return out;
}

inline Matrix one_hot_rows(const Dataset& ds) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(ds.num_classes()));
  for (std::size_t i = 0; i < ds.size(); ++i) y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(ds.labels()[i])) = 1.0;
  return y;
}

// Full-dataset cross-entropy against the hard labels.
inline double dataset_loss(const ModelParams& params, const Dataset& ds) {
  return ce_soft(forward(params, ds.features()), one_hot_rows(ds)).loss;
}

// ---------------------------------------------------------------------------
// Training

enum class Schedule { cosine_to_zero, constant };

struct ModelSpec {
  std::size_t hidden = 32;
  Activation activation = Activation::relu;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double lr0 = 0.01;
  Schedule schedule = Schedule::cosine_to_zero;
  std::size_t cycles = 1;
  double momentum = 0.0;
  std::uint64_t seed = 0;
  MetricId monitor = MetricId::balanced_acc;
  MixPolicy policy;
  LossSpec loss;
  double sampler_q = kInstanceSampling;  // unused by the balanced policy
  ModelSpec model;

  void validate() const {
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ParameterError("lr0 must be finite and > 0");
    if (cycles < 1) throw ParameterError("cycles must be >= 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must lie in [0, 1)");
    if (!(sampler_q >= 0.0 && sampler_q <= 1.0)) throw ParameterError("sampler_q must lie in [0, 1]");
    policy.validate();
    loss.validate();
    if (policy.kind != MixKind::none && loss.kind != LossKind::ce)
      throw ParameterError("focal and class-balanced losses need hard labels; use mix policy none");
  }
};

// Cosine decay from lr0 toward 0, restarted `cycles` times over the run.
inline double lr_at(const TrainConfig& config, std::size_t step, std::size_t total_steps) {
  if (config.schedule == Schedule::constant) return config.lr0;
  if (total_steps == 0 || step >= total_steps) throw ParameterError("lr_at: step outside [0, total_steps)");
  const std::size_t cycle_len = (total_steps + config.cycles - 1) / config.cycles;
  const double pos = static_cast<double>(step % cycle_len) / static_cast<double>(cycle_len);
  return config.lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * pos));
}

struct Checkpoint {
  ModelParams params;
  std::size_t epoch = 0;  // 0 = initialization
  double val_metric = std::numeric_limits<double>::quiet_NaN();
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean batch loss over the epoch
  double val_metric = 0.0;
  double lr = 0.0;          // learning rate of the epoch's last step
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;
  std::size_t total_steps = 0;
};

// Monitored metric on a dataset; undefined values rank as the metric's floor.
inline double monitor_value(const ModelParams& params, const Dataset& ds, MetricId id) {
  const auto cm = confusion(ds.labels(), predict(params, ds.features()), ds.num_classes());
  try {
    return metric_value(id, cm);
  } catch (const UndefinedMetric&) {
    return metric_floor(id);
  }
}

inline std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size) { return (n + batch_size - 1) / batch_size; }

// Mini-batch SGD with the configured sampler, mix policy and loss. After each
// epoch the monitored metric is evaluated on `val`; the best epoch (earliest
// on ties) is kept.
// Class-balanced weights come from the training set's counts (a class absent
// from it counts as 1) unless the config supplies them.
inline TrainResult train(const Dataset& train_set, const Dataset& val, const TrainConfig& config) {
  LossSpec loss = config.loss;
  if (loss.class_counts.empty()) {
    loss.class_counts = train_set.class_counts();
    for (auto& n : loss.class_counts) n = std::max<std::size_t>(n, 1);
  }
  TrainConfig checked = config;
  checked.loss = loss;
  checked.validate();
  if (train_set.empty()) throw ParameterError("train: empty training set");
  if (val.empty()) throw ParameterError("train: empty validation set");
  if (train_set.num_classes() != val.num_classes() || train_set.dim() != val.dim())
    throw ParameterError("train: training and validation sets disagree on K or d");

  TrainResult result;
  ModelParams params = init_params(train_set.dim(), config.model.hidden, train_set.num_classes(),
                                   config.model.activation, derive_seed(config.seed, 1));
  result.checkpoint.params = params;
  result.checkpoint.val_metric = monitor_value(params, val, config.monitor);
  if (config.epochs == 0) return result;

  const std::size_t per_epoch = steps_per_epoch(train_set.size(), config.batch_size);
  result.total_steps = per_epoch * config.epochs;

  const double main_q = config.policy.kind == MixKind::balanced ? kInstanceSampling : config.sampler_q;
  SampleStream main_stream(train_set, main_q, derive_seed(config.seed, 2));
  SampleStream class_stream(train_set, kClassSampling, derive_seed(config.seed, 3));
  Rng mix_rng = make_rng(config.seed, 4);

  ModelParams velocity = zeros_like(params);
  auto step_tensor = [&](auto& theta, auto& vel, const auto& g, double lr) {
    if (config.momentum > 0.0) {
      vel = config.momentum * vel + g;
      theta -= lr * vel;
    } else {
      theta -= lr * g;
    }
  };

  bool have_best = false;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double loss_sum = 0.0;
    double lr = config.lr0;
    for (std::size_t s = 0; s < per_epoch; ++s, ++step) {
      MixedBatch batch;
      switch (config.policy.kind) {
        case MixKind::none: batch = plain_batch(main_stream, config.batch_size); break;
        case MixKind::mixup: batch = classic_mixup_batch(main_stream, config.batch_size, config.policy, mix_rng); break;
        case MixKind::balanced:
          batch = balanced_mixup_batch(main_stream, class_stream, config.batch_size, config.policy, mix_rng);
          break;
      }
      const Backprop bp = backward(params, batch.features, batch.soft_labels, loss);
      loss_sum += bp.loss;
      lr = lr_at(config, step, result.total_steps);
      step_tensor(params.w1, velocity.w1, bp.grad.w1, lr);
      step_tensor(params.b1, velocity.b1, bp.grad.b1, lr);
      step_tensor(params.w2, velocity.w2, bp.grad.w2, lr);
      step_tensor(params.b2, velocity.b2, bp.grad.b2, lr);
    }
    if (!params.all_finite()) throw NumericError("train: parameters diverged at epoch " + std::to_string(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(per_epoch);
    rec.val_metric = monitor_value(params, val, config.monitor);
    rec.lr = lr;
    result.history.push_back(rec);
    if (!have_best || rec.val_metric > result.checkpoint.val_metric) {
      have_best = true;
      result.checkpoint = Checkpoint{params, epoch, rec.val_metric};
    }
  }
  return result;
}

}  // namespace balmix
