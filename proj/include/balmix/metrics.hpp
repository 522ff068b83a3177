#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "balmix/data.hpp"
#include "balmix/error.hpp"
#include "balmix/random.hpp"

namespace balmix {

// C(i, j) = number of examples with true class i predicted as j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes) : k_(num_classes), counts_(num_classes * num_classes, 0) {}

  std::size_t num_classes() const { return k_; }
  std::uint64_t operator()(std::size_t i, std::size_t j) const { return counts_[i * k_ + j]; }
  void add(std::size_t truth, std::size_t pred) { ++counts_[truth * k_ + pred]; }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }
  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < k_; ++i) s += (*this)(i, i);
    return s;
  }
  // True-class counts.
  std::vector<std::uint64_t> row_sums() const {
    std::vector<std::uint64_t> r(k_, 0);
    for (std::size_t i = 0; i < k_; ++i)
      for (std::size_t j = 0; j < k_; ++j) r[i] += (*this)(i, j);
    return r;
  }
  // Predicted-class counts.
  std::vector<std::uint64_t> col_sums() const {
    std::vector<std::uint64_t> c(k_, 0);
    for (std::size_t i = 0; i < k_; ++i)
      for (std::size_t j = 0; j < k_; ++j) c[j] += (*this)(i, j);
    return c;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix confusion(const std::vector<ClassIndex>& labels, const std::vector<ClassIndex>& preds,
                                 std::size_t num_classes) {
  if (labels.size() != preds.size()) throw ParameterError("confusion: labels and predictions differ in length");
  if (labels.empty()) throw ParameterError("confusion: no examples");
  ConfusionMatrix cm(num_classes);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] >= num_classes || preds[n] >= num_classes) throw ParameterError("confusion: class index >= K");
    cm.add(labels[n], preds[n]);
  }
  return cm;
}

// Quadratic-weighted kappa: 1 - sum(w O) / sum(w E), w_ij = (i-j)^2/(K-1)^2,
// E the outer product of the marginals scaled to the observed total.
inline double quad_kappa(const ConfusionMatrix& cm) {
  const auto k = cm.num_classes();
  if (k < 2) throw UndefinedMetric("quad_kappa: needs K >= 2");
  const auto rows = cm.row_sums();
  const auto cols = cm.col_sums();
  const auto total = static_cast<double>(cm.total());
  if (total == 0.0) throw UndefinedMetric("quad_kappa: empty confusion matrix");
  const double norm = static_cast<double>((k - 1) * (k - 1));
  double observed = 0.0;
  double expected = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      const double w = d * d / norm;
      observed += w * static_cast<double>(cm(i, j));
      expected += w * static_cast<double>(rows[i]) * static_cast<double>(cols[j]) / total;
    }
  }
  if (expected == 0.0) throw UndefinedMetric("quad_kappa: zero expected disagreement");
  return 1.0 - observed / expected;
}

// Multiclass MCC (Gorodkin's R_K). 0 when either marginal is constant.
inline double mcc(const ConfusionMatrix& cm) {
  const auto rows = cm.row_sums();
  const auto cols = cm.col_sums();
  const auto s = static_cast<double>(cm.total());
  if (s == 0.0) throw ParameterError("mcc: empty confusion matrix");
  const auto c = static_cast<double>(cm.trace());
  double pt = 0.0;
  double pp = 0.0;
  double tt = 0.0;
  for (std::size_t k = 0; k < cm.num_classes(); ++k) {
    const auto t = static_cast<double>(rows[k]);
    const auto p = static_cast<double>(cols[k]);
    pt += p * t;
    pp += p * p;
    tt += t * t;
  }
  const double var_pred = s * s - pp;
  const double var_true = s * s - tt;
  if (var_pred == 0.0 || var_true == 0.0) return 0.0;
  return (c * s - pt) / std::sqrt(var_pred * var_true);
}

// Kendall tau-b from a contingency table, with concordant/discordant pair
// counts taken from 2-D suffix sums in O(K^2).
inline double kendall_tau(const ConfusionMatrix& cm) {
  const auto k = cm.num_classes();
  // below_right(i, j) = sum over i' >= i, j' >= j; below_left(i, j) = i' >= i, j' < j.
  std::vector<double> br((k + 1) * (k + 1), 0.0);
  std::vector<double> bl((k + 1) * (k + 1), 0.0);
  auto at = [k](std::vector<double>& v, std::size_t i, std::size_t j) -> double& { return v[i * (k + 1) + j]; };
  for (std::size_t i = k; i-- > 0;) {
    double row_suffix = 0.0;
    for (std::size_t j = k; j-- > 0;) {
      row_suffix += static_cast<double>(cm(i, j));
      at(br, i, j) = row_suffix + at(br, i + 1, j);
    }
    double row_prefix = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      at(bl, i, j + 1) = row_prefix + static_cast<double>(cm(i, j)) + at(bl, i + 1, j + 1);
      row_prefix += static_cast<double>(cm(i, j));
    }
  }
  double concordant = 0.0;
  double discordant = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const auto c = static_cast<double>(cm(i, j));
      if (c == 0.0) continue;
      if (j + 1 < k) concordant += c * at(br, i + 1, j + 1);
      discordant += c * at(bl, i + 1, j);
    }
  }
  const auto n = static_cast<double>(cm.total());
  double tied_true = 0.0;
  double tied_pred = 0.0;
  for (auto r : cm.row_sums()) tied_true += static_cast<double>(r) * (static_cast<double>(r) - 1.0) / 2.0;
  for (auto c : cm.col_sums()) tied_pred += static_cast<double>(c) * (static_cast<double>(c) - 1.0) / 2.0;
  const double pairs = n * (n - 1.0) / 2.0;
  const double denom = (pairs - tied_true) * (pairs - tied_pred);
  if (!(denom > 0.0)) throw UndefinedMetric("kendall_tau: one ranking is entirely tied");
  return (concordant - discordant) / std::sqrt(denom);
}

inline double kendall_tau(const std::vector<ClassIndex>& labels, const std::vector<ClassIndex>& preds) {
  if (labels.size() != preds.size()) throw ParameterError("kendall_tau: length mismatch");
  if (labels.size() < 2) throw ParameterError("kendall_tau: needs at least two examples");
  const auto k = 1 + std::max(*std::max_element(labels.begin(), labels.end()),
                              *std::max_element(preds.begin(), preds.end()));
  return kendall_tau(confusion(labels, preds, k));
}

// Mean recall over classes that occur in the truth.
inline double balanced_accuracy(const ConfusionMatrix& cm) {
  const auto rows = cm.row_sums();
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < cm.num_classes(); ++k) {
    if (rows[k] == 0) continue;
    sum += static_cast<double>(cm(k, k)) / static_cast<double>(rows[k]);
    ++present;
  }
  if (present == 0) throw ParameterError("balanced_accuracy: empty confusion matrix");
  return sum / static_cast<double>(present);
}

// Unweighted mean of per-class F1 over all K classes; a class with no
// true or predicted examples scores 0.
inline double macro_f1(const ConfusionMatrix& cm) {
  const auto rows = cm.row_sums();
  const auto cols = cm.col_sums();
  if (cm.total() == 0) throw ParameterError("macro_f1: empty confusion matrix");
  double sum = 0.0;
  for (std::size_t k = 0; k < cm.num_classes(); ++k) {
    const auto tp = static_cast<double>(cm(k, k));
    const double fp = static_cast<double>(cols[k]) - tp;
    const double fn = static_cast<double>(rows[k]) - tp;
    const double denom = 2.0 * tp + fp + fn;
    if (denom > 0.0) sum += 2.0 * tp / denom;
  }
  return sum / static_cast<double>(cm.num_classes());
}

// ---------------------------------------------------------------------------

enum class MetricId { quad_kappa, mcc, kendall_tau, balanced_acc, macro_f1 };

inline constexpr std::array<MetricId, 5> kAllMetrics = {MetricId::quad_kappa, MetricId::mcc, MetricId::kendall_tau,
                                                       MetricId::balanced_acc, MetricId::macro_f1};

inline std::string_view metric_name(MetricId id) {
  switch (id) {
    case MetricId::quad_kappa: return "quad_kappa";
    case MetricId::mcc: return "mcc";
    case MetricId::kendall_tau: return "kendall_tau";
    case MetricId::balanced_acc: return "balanced_acc";
    case MetricId::macro_f1: return "macro_f1";
  }
  return "?";
}

inline MetricId parse_metric(std::string_view name) {
  for (auto id : kAllMetrics)
    if (metric_name(id) == name) return id;
  throw ParameterError("unknown metric '" + std::string(name) + "'");
}

// Lowest attainable value; stands in for undefined results when ranking.
inline double metric_floor(MetricId id) {
  return id == MetricId::balanced_acc || id == MetricId::macro_f1 ? 0.0 : -1.0;
}

inline double metric_value(MetricId id, const ConfusionMatrix& cm) {
  switch (id) {
    case MetricId::quad_kappa: return quad_kappa(cm);
    case MetricId::mcc: return mcc(cm);
    case MetricId::kendall_tau: return kendall_tau(cm);
    case MetricId::balanced_acc: return balanced_accuracy(cm);
    case MetricId::macro_f1: return macro_f1(cm);
  }
  throw ParameterError("unknown metric");
}

// ---------------------------------------------------------------------------
// Stratified bootstrap

// Indices resampled with replacement inside each true class, so every
// resample keeps the original class counts.
inline Indices stratified_resample(const std::vector<Indices>& members_by_class, Rng& rng) {
  Indices out;
  for (const auto& m : members_by_class)
    for (std::size_t i = 0; i < m.size(); ++i) out.push_back(m[static_cast<std::size_t>(uniform_index(rng, m.size()))]);
  return out;
}

struct BootstrapResult {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  std::size_t n_resamples = 0;  // resamples that produced a value
  std::size_t n_skipped = 0;
};

inline constexpr int kBootstrapRetries = 10;

// Resample r draws from its own stream derived from (seed, r), so results do
// not depend on evaluation order.
inline BootstrapResult bootstrap(const std::vector<ClassIndex>& labels, const std::vector<ClassIndex>& preds,
                                 std::size_t num_classes, MetricId metric, std::size_t n_resamples,
                                 std::uint64_t seed) {
  if (n_resamples < 2) throw ParameterError("bootstrap needs n_resamples >= 2");
  confusion(labels, preds, num_classes);  // validates shapes and ranges
  std::vector<Indices> members(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);

  std::vector<double> values;
  values.reserve(n_resamples);
  BootstrapResult out;
  for (std::size_t r = 0; r < n_resamples; ++r) {
    Rng rng = make_rng(seed, r);
    bool ok = false;
    for (int attempt = 0; attempt <= kBootstrapRetries && !ok; ++attempt) {
      const auto idx = stratified_resample(members, rng);
      ConfusionMatrix cm(num_classes);
      for (auto i : idx) cm.add(labels[i], preds[i]);
      try {
        values.push_back(metric_value(metric, cm));
        ok = true;
      } catch (const UndefinedMetric&) {
      }
    }
    if (!ok) ++out.n_skipped;
  }
  if (2 * out.n_skipped > n_resamples)
    throw BootstrapFailure("bootstrap: " + std::string(metric_name(metric)) + " undefined on " +
                           std::to_string(out.n_skipped) + " of " + std::to_string(n_resamples) + " resamples");
  out.n_resamples = values.size();
  double sum = 0.0;
  for (auto v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (auto v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

struct MetricReport {
  std::optional<double> value;  // empty when undefined
  std::optional<BootstrapResult> boot;
};

struct EvalReport {
  ConfusionMatrix confusion{1};
  std::array<MetricReport, kAllMetrics.size()> metrics;

  const MetricReport& operator[](MetricId id) const { return metrics[static_cast<std::size_t>(id)]; }
  MetricReport& operator[](MetricId id) { return metrics[static_cast<std::size_t>(id)]; }
};

// All five metrics; bootstrap statistics when n_resamples >= 2.
inline EvalReport evaluate(const std::vector<ClassIndex>& labels, const std::vector<ClassIndex>& preds,
                           std::size_t num_classes, std::size_t n_resamples = 0, std::uint64_t seed = 0) {
  EvalReport report;
  report.confusion = confusion(labels, preds, num_classes);
  for (auto id : kAllMetrics) {
    auto& m = report[id];
    try {
      m.value = metric_value(id, report.confusion);
    } catch (const UndefinedMetric&) {
    }
    if (n_resamples >= 2) {
      try {
        m.boot = bootstrap(labels, preds, num_classes, id, n_resamples, derive_seed(seed, static_cast<std::uint64_t>(id)));
      } catch (const BootstrapFailure&) {
      }
    }
  }
  return report;
}

}  // namespace balmix
