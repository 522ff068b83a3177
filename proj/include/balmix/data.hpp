#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "balmix/error.hpp"
#include "balmix/random.hpp"

namespace balmix {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ClassIndex = std::size_t;
using Indices = std::vector<std::size_t>;

// Feature matrix (one example per row), integer labels in [0, K) and the
// per-class counts derived from them. Immutable once constructed.
class Dataset {
 public:
  Dataset() = default;

  Dataset(Matrix features, std::vector<ClassIndex> labels, std::size_t num_classes)
      : features_(std::move(features)), labels_(std::move(labels)), class_counts_(num_classes, 0) {
    if (num_classes == 0) throw ParameterError("dataset needs at least one class");
    if (static_cast<std::size_t>(features_.rows()) != labels_.size())
      throw ParameterError("feature rows and labels differ in length");
    if (!features_.allFinite()) throw ParameterError("dataset features must be finite");
    for (const auto y : labels_) {
      if (y >= num_classes)
        throw ParameterError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
      ++class_counts_[y];
    }
  }

  const Matrix& features() const { return features_; }
  const std::vector<ClassIndex>& labels() const { return labels_; }
  const std::vector<std::size_t>& class_counts() const { return class_counts_; }
  std::size_t num_classes() const { return class_counts_.size(); }
  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features_.cols()); }
  bool empty() const { return labels_.empty(); }

  // Rows in the given order; K is preserved even if a class ends up empty.
  Dataset subset(const Indices& idx) const {
    Matrix f(static_cast<Eigen::Index>(idx.size()), features_.cols());
    std::vector<ClassIndex> y(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] >= size()) throw ParameterError("subset index out of range");
      f.row(static_cast<Eigen::Index>(r)) = features_.row(static_cast<Eigen::Index>(idx[r]));
      y[r] = labels_[idx[r]];
    }
    return Dataset(std::move(f), std::move(y), num_classes());
  }

  // Example indices grouped by class, ascending within each class.
  std::vector<Indices> members_by_class() const {
    std::vector<Indices> out(num_classes());
    for (std::size_t i = 0; i < labels_.size(); ++i) out[labels_[i]].push_back(i);
    return out;
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.labels_ == b.labels_ && a.class_counts_ == b.class_counts_ &&
           a.features_.rows() == b.features_.rows() && a.features_.cols() == b.features_.cols() &&
           a.features_ == b.features_;
  }

 private:
  Matrix features_;
  std::vector<ClassIndex> labels_;
  std::vector<std::size_t> class_counts_;
};

inline Vector one_hot(ClassIndex label, std::size_t num_classes) {
  if (label >= num_classes)
    throw ParameterError("one_hot: label " + std::to_string(label) + " >= K=" + std::to_string(num_classes));
  Vector v = Vector::Zero(static_cast<Eigen::Index>(num_classes));
  v[static_cast<Eigen::Index>(label)] = 1.0;
  return v;
}

// ---------------------------------------------------------------------------
// Synthetic long-tail data

struct LongTailSpec {
  std::size_t num_classes = 5;
  std::size_t dim = 2;
  std::size_t n_max = 2000;
  double imbalance_ratio = 100.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
  // Seeds the per-example noise; class means depend on `seed` only, so a
  // second draw with a different sample_seed yields a fresh sample of the
  // same distribution (useful as an independent test set).
  std::optional<std::uint64_t> sample_seed;
};

// n_k = round(n_max * ratio^(-k/(K-1))), at least 1. Head class is k = 0.
inline std::vector<std::size_t> longtail_counts(std::size_t num_classes, std::size_t n_max, double imbalance_ratio) {
  if (num_classes < 2) throw ParameterError("long-tail generator needs K >= 2");
  if (n_max < num_classes) throw ParameterError("long-tail generator needs n_max >= K");
  if (!std::isfinite(imbalance_ratio) || imbalance_ratio < 1.0)
    throw ParameterError("imbalance_ratio must be finite and >= 1");
  std::vector<std::size_t> counts(num_classes);
  const double denom = static_cast<double>(num_classes - 1);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double n = static_cast<double>(n_max) * std::pow(imbalance_ratio, -static_cast<double>(k) / denom);
    counts[k] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n)));
  }
  return counts;
}

// Class means drawn uniformly from [-1, 1]^dim with a minimum pairwise
// separation that is relaxed only if rejection keeps failing.
inline Matrix longtail_means(std::size_t num_classes, std::size_t dim, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x6d65616e73ULL);
  Matrix means(static_cast<Eigen::Index>(num_classes), static_cast<Eigen::Index>(dim));
  double min_sep = 1.0 / std::pow(static_cast<double>(num_classes), 1.0 / static_cast<double>(dim));
  std::size_t placed = 0;
  int failures = 0;
  while (placed < num_classes) {
    Vector cand(static_cast<Eigen::Index>(dim));
    for (auto& c : cand) c = 2.0 * uniform01(rng) - 1.0;
    bool ok = true;
    for (std::size_t j = 0; j < placed && ok; ++j)
      ok = (means.row(static_cast<Eigen::Index>(j)).transpose() - cand).norm() >= min_sep;
    if (ok) {
      means.row(static_cast<Eigen::Index>(placed++)) = cand.transpose();
    } else if (++failures == 1000) {
      min_sep *= 0.5;
      failures = 0;
    }
  }
  return means;
}

inline Dataset generate_longtail(const LongTailSpec& spec) {
  if (spec.dim < 1) throw ParameterError("long-tail generator needs dim >= 1");
  if (!std::isfinite(spec.noise_sigma) || spec.noise_sigma <= 0.0)
    throw ParameterError("noise_sigma must be finite and > 0");
  const auto counts = longtail_counts(spec.num_classes, spec.n_max, spec.imbalance_ratio);
  const Matrix means = longtail_means(spec.num_classes, spec.dim, spec.seed);

  std::size_t n = 0;
  for (auto c : counts) n += c;
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.dim));
  std::vector<ClassIndex> y(n);
  Rng rng = make_rng(spec.sample_seed.value_or(spec.seed), 0x73616d706c65ULL);
  std::size_t row = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    for (std::size_t i = 0; i < counts[k]; ++i, ++row) {
      for (std::size_t d = 0; d < spec.dim; ++d)
        x(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(d)) =
            means(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d)) + spec.noise_sigma * standard_normal(rng);
      y[row] = k;
    }
  }
  return Dataset(std::move(x), std::move(y), spec.num_classes);
}

inline Dataset generate_longtail(std::size_t num_classes, std::size_t dim, std::size_t n_max, double imbalance_ratio,
                                 double noise_sigma, std::uint64_t seed) {
  LongTailSpec spec;
  spec.num_classes = num_classes;
  spec.dim = dim;
  spec.n_max = n_max;
  spec.imbalance_ratio = imbalance_ratio;
  spec.noise_sigma = noise_sigma;
  spec.seed = seed;
  return generate_longtail(spec);
}

// ---------------------------------------------------------------------------
// CSV: header `f0,...,f{d-1},label`, one example per row.

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::string where(const std::string& source, std::size_t line_no) {
  return source + ":" + std::to_string(line_no) + ": ";
}

}  // namespace detail

inline Dataset read_csv(std::istream& in, const std::string& source = "<csv>") {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw IngestionError(detail::where(source, 1) + "missing header row");
  ++line_no;
  const auto header = detail::split_commas(detail::trim(line));
  if (header.size() < 2) throw IngestionError(detail::where(source, line_no) + "header needs at least one feature and a label");
  for (std::size_t j = 0; j + 1 < header.size(); ++j) {
    if (detail::trim(header[j]) != "f" + std::to_string(j))
      throw IngestionError(detail::where(source, line_no) + "expected column f" + std::to_string(j));
  }
  if (detail::trim(header.back()) != "label")
    throw IngestionError(detail::where(source, line_no) + "last column must be 'label'");
  const std::size_t dim = header.size() - 1;

  std::vector<double> values;
  std::vector<ClassIndex> labels;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto cells = detail::split_commas(body);
    if (cells.size() != dim + 1)
      throw IngestionError(detail::where(source, line_no) + "expected " + std::to_string(dim + 1) + " fields, got " +
                           std::to_string(cells.size()));
    for (std::size_t j = 0; j < dim; ++j) {
      const auto cell = detail::trim(cells[j]);
      const std::string text(cell);
      char* end = nullptr;
      const double v = std::strtod(text.c_str(), &end);
      if (text.empty() || end != text.c_str() + text.size())
        throw IngestionError(detail::where(source, line_no) + "malformed feature '" + text + "'");
      if (!std::isfinite(v)) throw IngestionError(detail::where(source, line_no) + "non-finite feature '" + text + "'");
      values.push_back(v);
    }
    const auto cell = detail::trim(cells[dim]);
    unsigned long long label = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
    if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size())
      throw IngestionError(detail::where(source, line_no) + "label must be a nonnegative integer, got '" +
                           std::string(cell) + "'");
    labels.push_back(static_cast<ClassIndex>(label));
  }
  if (labels.empty()) throw IngestionError(detail::where(source, line_no) + "no data rows");

  Matrix x(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < dim; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * dim + j];
  const auto k = 1 + *std::max_element(labels.begin(), labels.end());
  return Dataset(std::move(x), std::move(labels), k);
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError(path + ": cannot open file");
  return read_csv(in, path);
}

inline void write_csv(std::ostream& out, const Dataset& ds) {
  for (std::size_t j = 0; j < ds.dim(); ++j) out << 'f' << j << ',';
  out << "label\n";
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.features()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      out << buf << ',';
    }
    out << ds.labels()[i] << '\n';
  }
}

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestionError(path + ": cannot open file for writing");
  write_csv(out, ds);
  if (!out) throw IngestionError(path + ": write failed");
}

// ---------------------------------------------------------------------------
// Stratified splitting

struct SplitSpec {
  double validation_fraction = 0.1;
  std::optional<std::size_t> folds;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  Indices train;
  Indices val;
};

// Validation share of a class of size n: round(fraction * n), clamped so
// both parts keep at least one example whenever n >= 2.
inline std::size_t validation_count(std::size_t n, double fraction) {
  if (n <= 1) return 0;
  const auto v = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(v, 1, n - 1);
}

inline SplitIndices stratified_split_indices(const Dataset& ds, double validation_fraction, std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ParameterError("validation_fraction must lie in (0, 1)");
  for (std::size_t k = 0; k < ds.num_classes(); ++k)
    if (ds.class_counts()[k] == 0) throw ParameterError("stratified split: class " + std::to_string(k) + " is empty");
  Rng rng = make_rng(seed, 0x73706c6974ULL);
  SplitIndices out;
  for (auto members : ds.members_by_class()) {
    shuffle(members, rng);
    const auto v = validation_count(members.size(), validation_fraction);
    out.val.insert(out.val.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(v));
    out.train.insert(out.train.end(), members.begin() + static_cast<std::ptrdiff_t>(v), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  return out;
}

inline std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, const SplitSpec& spec) {
  const auto idx = stratified_split_indices(ds, spec.validation_fraction, spec.seed);
  return {ds.subset(idx.train), ds.subset(idx.val)};
}

// Test-fold indices per fold. Within each class, members are shuffled and
// dealt round-robin, starting where the previous class stopped so that
// overall fold sizes stay balanced too.
inline std::vector<SplitIndices> stratified_kfold_indices(const Dataset& ds, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ParameterError("k-fold needs folds >= 2");
  if (folds > ds.size()) throw ParameterError("k-fold: folds exceeds number of examples");
  for (std::size_t k = 0; k < ds.num_classes(); ++k)
    if (ds.class_counts()[k] == 0) throw ParameterError("k-fold: class " + std::to_string(k) + " is empty");
  Rng rng = make_rng(seed, 0x6b666f6c64ULL);
  std::vector<std::size_t> fold_of(ds.size());
  std::size_t offset = 0;
  for (auto members : ds.members_by_class()) {
    shuffle(members, rng);
    for (std::size_t i = 0; i < members.size(); ++i) fold_of[members[i]] = (offset + i) % folds;
    offset = (offset + members.size()) % folds;
  }
  std::vector<SplitIndices> out(folds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t f = 0; f < folds; ++f) (f == fold_of[i] ? out[f].val : out[f].train).push_back(i);
  }
  return out;
}

// (train, test) pairs, one per fold.
inline std::vector<std::pair<Dataset, Dataset>> stratified_kfold(const Dataset& ds, std::size_t folds, std::uint64_t seed) {
  std::vector<std::pair<Dataset, Dataset>> out;
  for (const auto& f : stratified_kfold_indices(ds, folds, seed)) out.emplace_back(ds.subset(f.train), ds.subset(f.val));
  return out;
}

}  // namespace balmix
