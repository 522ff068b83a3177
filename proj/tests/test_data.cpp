#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "balmix/data.hpp"
#include "oracles.hpp"

using namespace balmix;

namespace {

Dataset from_counts(const std::vector<std::size_t>& counts, std::size_t dim = 2) {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  std::vector<ClassIndex> y;
  for (std::size_t k = 0; k < counts.size(); ++k)
    for (std::size_t i = 0; i < counts[k]; ++i) {
      x.row(static_cast<Eigen::Index>(y.size())).setConstant(static_cast<double>(y.size()));
      y.push_back(k);
    }
  return Dataset(x, y, counts.size());
}

std::vector<std::size_t> label_counts(const Dataset& ds) { return ds.class_counts(); }

// Count law evaluated in 50-digit arithmetic.
std::vector<std::size_t> oracle_counts(std::size_t k, std::size_t n_max, double ratio) {
  using oracle::BigFloat;
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < k; ++c) {
    BigFloat n = BigFloat(n_max) * boost::multiprecision::pow(BigFloat(ratio), -BigFloat(c) / BigFloat(k - 1));
    auto r = static_cast<std::size_t>(boost::multiprecision::round(n));
    out.push_back(std::max<std::size_t>(1, r));
  }
  return out;
}

}  // namespace

TEST(LongTail, CountsMatchArbitraryPrecisionLaw) {
  const std::vector<std::size_t> frozen{2000, 632, 200, 63, 20};
  EXPECT_EQ(oracle_counts(5, 2000, 100.0), frozen);
  EXPECT_EQ(longtail_counts(5, 2000, 100.0), frozen);
  const auto ds = generate_longtail(5, 3, 2000, 100.0, 0.5, 7);
  EXPECT_EQ(ds.class_counts(), frozen);
  EXPECT_EQ(ds.size(), 2915u);
  EXPECT_EQ(ds.dim(), 3u);
  for (std::size_t k : {3, 7, 23})
    for (double ratio : {1.0, 2.5, 10.0, 500.0}) EXPECT_EQ(longtail_counts(k, 1000, ratio), oracle_counts(k, 1000, ratio));
}

TEST(LongTail, RatioOneIsBalanced) {
  EXPECT_EQ(longtail_counts(2, 10, 1.0), (std::vector<std::size_t>{10, 10}));
}

TEST(LongTail, MinimumOneExamplePerClass) {
  const auto c = longtail_counts(4, 10, 1e6);
  EXPECT_EQ(c.back(), 1u);
  for (std::size_t i = 1; i < c.size(); ++i) EXPECT_LE(c[i], c[i - 1]);
}

TEST(LongTail, Deterministic) {
  const auto a = generate_longtail(5, 2, 200, 10.0, 0.5, 42);
  const auto b = generate_longtail(5, 2, 200, 10.0, 0.5, 42);
  EXPECT_TRUE(a == b);
  const auto c = generate_longtail(5, 2, 200, 10.0, 0.5, 43);
  EXPECT_FALSE(a == c);
}

TEST(LongTail, SampleSeedKeepsMeans) {
  LongTailSpec s;
  s.n_max = 4000;
  s.noise_sigma = 0.1;
  s.seed = 9;
  const auto a = generate_longtail(s);
  s.sample_seed = 1234;
  const auto b = generate_longtail(s);
  EXPECT_FALSE(a == b);
  // Class centroids agree to within the sampling error.
  const auto ma = a.members_by_class();
  for (std::size_t k = 0; k < 2; ++k) {
    Vector ca = Vector::Zero(2), cb = Vector::Zero(2);
    for (auto i : ma[k]) {
      ca += a.features().row(static_cast<Eigen::Index>(i)).transpose();
      cb += b.features().row(static_cast<Eigen::Index>(i)).transpose();
    }
    EXPECT_LT((ca - cb).norm() / static_cast<double>(ma[k].size()), 0.02);
  }
}

TEST(LongTail, MeansPairwiseDistinct) {
  for (std::size_t d : {1, 2, 8}) {
    const auto m = longtail_means(23, d, 5);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = i + 1; j < m.rows(); ++j) EXPECT_GT((m.row(i) - m.row(j)).norm(), 0.0);
  }
}

TEST(LongTail, RejectsBadParameters) {
  EXPECT_THROW(generate_longtail(1, 2, 10, 2.0, 1.0, 0), ParameterError);
  EXPECT_THROW(generate_longtail(3, 0, 10, 2.0, 1.0, 0), ParameterError);
  EXPECT_THROW(generate_longtail(5, 2, 4, 2.0, 1.0, 0), ParameterError);
  EXPECT_THROW(generate_longtail(5, 2, 10, 0.5, 1.0, 0), ParameterError);
  EXPECT_THROW(generate_longtail(5, 2, 10, std::nan(""), 1.0, 0), ParameterError);
  EXPECT_THROW(generate_longtail(5, 2, 10, 2.0, 0.0, 0), ParameterError);
  EXPECT_THROW(generate_longtail(5, 2, 10, 2.0, INFINITY, 0), ParameterError);
}

TEST(DatasetType, InvariantsEnforced) {
  Matrix x(2, 1);
  x << 1, 2;
  EXPECT_THROW(Dataset(x, {0, 3}, 3), ParameterError);
  EXPECT_THROW(Dataset(x, {0}, 3), ParameterError);
  x(1, 0) = NAN;
  EXPECT_THROW(Dataset(x, {0, 1}, 3), ParameterError);
}

TEST(OneHot, Examples) {
  EXPECT_EQ(one_hot(2, 5), (Vector(5) << 0, 0, 1, 0, 0).finished());
  EXPECT_EQ(one_hot(0, 2), (Vector(2) << 1, 0).finished());
  EXPECT_THROW(one_hot(4, 3), ParameterError);
  EXPECT_DOUBLE_EQ(one_hot(1, 4).sum(), 1.0);
}

TEST(Csv, LoadsCountsAndK) {
  std::istringstream in("f0,f1,label\n0.5,1,0\n-2,3e-1,0\n1,1,1\n0,0,2\n");
  const auto ds = read_csv(in);
  EXPECT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.num_classes(), 3u);
  EXPECT_EQ(ds.class_counts(), (std::vector<std::size_t>{2, 1, 1}));
  EXPECT_DOUBLE_EQ(ds.features()(1, 1), 0.3);
}

TEST(Csv, Errors) {
  auto bad = [](const std::string& text) {
    std::istringstream in(text);
    return read_csv(in, "t.csv");
  };
  EXPECT_THROW(bad("f0,label\n"), IngestionError);
  EXPECT_THROW(bad("f0,label\n1,-1\n"), IngestionError);
  EXPECT_THROW(bad("f0,label\n1,1.5\n"), IngestionError);
  EXPECT_THROW(bad("f0,label\nx,1\n"), IngestionError);
  EXPECT_THROW(bad("f0,label\nnan,1\n"), IngestionError);
  EXPECT_THROW(bad("f0,label\n1,2,3\n"), IngestionError);
  EXPECT_THROW(bad("x0,label\n1,1\n"), IngestionError);
  EXPECT_THROW(bad(""), IngestionError);
  EXPECT_THROW(load_csv("/nonexistent/file.csv"), IngestionError);
  try {
    bad("f0,label\n1,0\n2,zz\n");
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("t.csv:3"), std::string::npos) << e.what();
  }
}

TEST(Csv, SaveLoadRoundTrip) {
  const auto ds = generate_longtail(4, 3, 50, 5.0, 0.7, 3);
  const auto path = std::filesystem::temp_directory_path() / "balmix_roundtrip.csv";
  save_csv(ds, path.string());
  const auto back = load_csv(path.string());
  EXPECT_TRUE(ds == back);
  std::filesystem::remove(path);
}

TEST(Split, ValidationCountsFollowRoundingAndClamp) {
  auto val_counts = [](const std::vector<std::size_t>& counts, double frac) {
    const auto [tr, va] = stratified_split(from_counts(counts), SplitSpec{frac, std::nullopt, 1});
    return label_counts(va);
  };
  EXPECT_EQ(val_counts({100, 10}, 0.1), (std::vector<std::size_t>{10, 1}));
  EXPECT_EQ(val_counts({5, 5}, 0.2), (std::vector<std::size_t>{1, 1}));
  // round(0.1 n) per class: 200, 63.2 -> 63, 20, 6.3 -> 6, 2
  EXPECT_EQ(val_counts({2000, 632, 200, 63, 20}, 0.1), (std::vector<std::size_t>{200, 63, 20, 6, 2}));
  EXPECT_EQ(val_counts({1, 2, 3}, 0.01), (std::vector<std::size_t>{0, 1, 1}));
  EXPECT_EQ(val_counts({2, 3}, 0.99), (std::vector<std::size_t>{1, 2}));
}

TEST(Split, PartitionAndDeterminism) {
  const auto ds = from_counts({50, 17, 4, 1});
  const auto a = stratified_split_indices(ds, 0.25, 77);
  const auto b = stratified_split_indices(ds, 0.25, 77);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  std::multiset<std::size_t> all(a.train.begin(), a.train.end());
  all.insert(a.val.begin(), a.val.end());
  EXPECT_EQ(all.size(), ds.size());
  EXPECT_EQ(std::set<std::size_t>(all.begin(), all.end()).size(), ds.size());
  const auto c = stratified_split_indices(ds, 0.25, 78);
  EXPECT_NE(a.val, c.val);
  EXPECT_THROW(stratified_split_indices(ds, 0.0, 1), ParameterError);
  EXPECT_THROW(stratified_split_indices(ds, 1.0, 1), ParameterError);
}

TEST(KFold, ExactStratificationExamples) {
  const auto folds = stratified_kfold(from_counts({10, 5}), 5, 3);
  ASSERT_EQ(folds.size(), 5u);
  for (const auto& [train, test] : folds) {
    EXPECT_EQ(test.class_counts(), (std::vector<std::size_t>{2, 1}));
    EXPECT_EQ(train.class_counts(), (std::vector<std::size_t>{8, 4}));
  }
}

TEST(KFold, PerClassSizesDifferByAtMostOne) {
  for (const auto& counts : std::vector<std::vector<std::size_t>>{{7, 3}, {2000, 632, 200, 63, 20}, {1, 1, 9}}) {
    const auto ds = from_counts(counts);
    const auto folds = stratified_kfold_indices(ds, 5, 11);
    std::vector<std::size_t> seen(ds.size(), 0);
    for (std::size_t k = 0; k < counts.size(); ++k) {
      std::size_t lo = SIZE_MAX, hi = 0;
      for (const auto& f : folds) {
        std::size_t n = 0;
        for (auto i : f.val) n += ds.labels()[i] == k;
        lo = std::min(lo, n);
        hi = std::max(hi, n);
        // within +-1 of exact proportional stratification
        EXPECT_LE(std::abs(static_cast<double>(n) - static_cast<double>(counts[k]) / 5.0), 1.0);
      }
      EXPECT_LE(hi - lo, 1u);
    }
    for (const auto& f : folds) {
      for (auto i : f.val) ++seen[i];
      EXPECT_EQ(f.train.size() + f.val.size(), ds.size());
    }
    for (auto s : seen) EXPECT_EQ(s, 1u);
  }
}

TEST(KFold, Errors) {
  const auto ds = from_counts({2, 1});
  EXPECT_THROW(stratified_kfold(ds, 4, 0), ParameterError);
  EXPECT_THROW(stratified_kfold(ds, 1, 0), ParameterError);
  EXPECT_NO_THROW(stratified_kfold(ds, 3, 0));
}
