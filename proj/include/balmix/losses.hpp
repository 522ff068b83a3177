#pragma once

#include <cmath>
#include <vector>

#include "balmix/data.hpp"
#include "balmix/error.hpp"

namespace balmix {

inline constexpr double kLogFloor = -27.631021115928547;  // log(1e-12)

enum class LossKind { ce, focal, cb };

struct LossSpec {
  LossKind kind = LossKind::ce;
  double gamma = 2.0;      // focal focusing parameter
  double cb_beta = 0.999;  // effective-number parameter
  std::vector<std::size_t> class_counts;  // required for cb

  void validate() const {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ParameterError("focal gamma must be finite and >= 0");
    if (!(cb_beta >= 0.0 && cb_beta < 1.0)) throw ParameterError("cb_beta must lie in [0, 1)");
    if (kind == LossKind::cb && class_counts.empty()) throw ParameterError("class-balanced loss needs class counts");
  }
};

// Mean loss over the batch (nats) and its gradient with respect to the logits.
struct LossValue {
  double loss = 0.0;
  Matrix grad;
};

// Row-wise log-softmax with max subtraction.
inline Matrix log_softmax(const Matrix& logits) {
  if (!logits.allFinite()) throw NumericError("non-finite logits");
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

inline Matrix softmax(const Matrix& logits) { return log_softmax(logits).array().exp().matrix(); }

namespace detail {

inline void check_shapes(const Matrix& logits, const Matrix& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
    throw ParameterError("logits and targets differ in shape");
  if (logits.rows() == 0) throw ParameterError("empty batch");
}

// Index of the single 1 in each row; rejects soft rows.
inline std::vector<Eigen::Index> hard_labels(const Matrix& targets) {
  std::vector<Eigen::Index> out(static_cast<std::size_t>(targets.rows()));
  for (Eigen::Index r = 0; r < targets.rows(); ++r) {
    Eigen::Index hot = -1;
    for (Eigen::Index c = 0; c < targets.cols(); ++c) {
      const double v = targets(r, c);
      if (v == 1.0 && hot < 0) {
        hot = c;
      } else if (v != 0.0) {
        throw ParameterError("focal and class-balanced losses need hard one-hot labels");
      }
    }
    if (hot < 0) throw ParameterError("target row has no hot entry");
    out[static_cast<std::size_t>(r)] = hot;
  }
  return out;
}

}  // namespace detail

// Cross-entropy against soft labels: mean of -sum_c y_c log p_c.
inline LossValue ce_soft(const Matrix& logits, const Matrix& soft_labels) {
  detail::check_shapes(logits, soft_labels);
  const Matrix logp = log_softmax(logits);
  const auto b = static_cast<double>(logits.rows());
  LossValue out;
  out.loss = -(soft_labels.array() * logp.array().max(kLogFloor)).sum() / b;
  out.grad = (logp.array().exp().matrix() - soft_labels) / b;
  return out;
}

// Focal loss: mean of -(1 - p_t)^gamma log p_t.
inline LossValue focal(const Matrix& logits, const Matrix& one_hot_labels, double gamma) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ParameterError("focal gamma must be finite and >= 0");
  detail::check_shapes(logits, one_hot_labels);
  const auto labels = detail::hard_labels(one_hot_labels);
  const Matrix logp = log_softmax(logits);
  const Matrix p = logp.array().exp().matrix();
  const auto b = static_cast<double>(logits.rows());
  LossValue out;
  out.grad.resize(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto t = labels[static_cast<std::size_t>(r)];
    const double log_pt = std::max(logp(r, t), kLogFloor);
    const double pt = p(r, t);
    // 1 - p_t summed from the other classes keeps precision when p_t ~ 1.
    const double rest = p.row(r).sum() - pt;
    const double mod = std::pow(rest, gamma);
    out.loss += -mod * log_pt;
    // dL/dz_c = (gamma (1-p_t)^(gamma-1) p_t log p_t - (1-p_t)^gamma) (delta_ct - p_c)
    double coeff = -mod;
    if (gamma != 0.0 && rest > 0.0) coeff += gamma * std::pow(rest, gamma - 1.0) * pt * log_pt;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const double delta = c == t ? 1.0 : 0.0;
      out.grad(r, c) = coeff * (delta - p(r, c)) / b;
    }
  }
  out.loss /= b;
  return out;
}

// Inverse effective number per class, (1 - beta) / (1 - beta^n_k), before
// normalization.
inline std::vector<double> cb_raw_weights(const std::vector<std::size_t>& class_counts, double cb_beta) {
  if (!(cb_beta >= 0.0 && cb_beta < 1.0)) throw ParameterError("cb_beta must lie in [0, 1)");
  std::vector<double> w(class_counts.size());
  for (std::size_t k = 0; k < class_counts.size(); ++k) {
    if (class_counts[k] < 1) throw ParameterError("class-balanced weights need every count >= 1");
    w[k] = (1.0 - cb_beta) / (1.0 - std::pow(cb_beta, static_cast<double>(class_counts[k])));
  }
  return w;
}

// Raw weights rescaled to sum to K.
inline std::vector<double> cb_weights(const std::vector<std::size_t>& class_counts, double cb_beta) {
  auto w = cb_raw_weights(class_counts, cb_beta);
  double total = 0.0;
  for (auto v : w) total += v;
  const double scale = static_cast<double>(w.size()) / total;
  for (auto& v : w) v *= scale;
  return w;
}

// Class-weighted cross-entropy, mean over the batch.
inline LossValue cb_loss(const Matrix& logits, const Matrix& one_hot_labels, const std::vector<double>& weights) {
  detail::check_shapes(logits, one_hot_labels);
  if (weights.size() != static_cast<std::size_t>(logits.cols()))
    throw ParameterError("class weight vector length differs from K");
  const auto labels = detail::hard_labels(one_hot_labels);
  const Matrix logp = log_softmax(logits);
  const auto b = static_cast<double>(logits.rows());
  LossValue out;
  out.grad = logp.array().exp().matrix();
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto t = labels[static_cast<std::size_t>(r)];
    const double w = weights[static_cast<std::size_t>(t)];
    out.loss += -w * std::max(logp(r, t), kLogFloor);
    out.grad(r, t) -= 1.0;
    out.grad.row(r) *= w / b;
  }
  out.loss /= b;
  return out;
}

// Dispatch on the spec. For cb the weights are recomputed from the counts.
inline LossValue evaluate_loss(const LossSpec& spec, const Matrix& logits, const Matrix& targets) {
  switch (spec.kind) {
    case LossKind::ce:
      return ce_soft(logits, targets);
    case LossKind::focal:
      return focal(logits, targets, spec.gamma);
    case LossKind::cb:
      return cb_loss(logits, targets, cb_weights(spec.class_counts, spec.cb_beta));
  }
  throw ParameterError("unknown loss kind");
}

}  // namespace balmix
