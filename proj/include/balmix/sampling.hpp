#pragma once

// The q-power family of class sampling laws:
//
//   p_j = n_j^q / sum_k n_k^q
//
// q = 1 is instance-based sampling (uniform over examples), q = 0 is
// class-based sampling (uniform over nonempty classes) and q = 1/2 is
// square-root sampling.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "balmix/data.hpp"
#include "balmix/error.hpp"
#include "balmix/random.hpp"

namespace balmix {

inline constexpr double kInstanceSampling = 1.0;
inline constexpr double kClassSampling = 0.0;
inline constexpr double kSqrtSampling = 0.5;

// Empty classes get probability 0 for every q, including q = 0.
inline std::vector<double> class_probabilities(const std::vector<std::size_t>& class_counts, double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw ParameterError("sampling exponent q must lie in [0, 1]");
  std::vector<double> p(class_counts.size(), 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < class_counts.size(); ++j) {
    if (class_counts[j] == 0) continue;
    p[j] = std::pow(static_cast<double>(class_counts[j]), q);
    total += p[j];
  }
  if (total == 0.0) throw ParameterError("class_probabilities: all class counts are zero");
  for (auto& v : p) v /= total;
  return p;
}

struct SamplingStrategy {
  double q = kInstanceSampling;
  std::vector<double> class_probs;

  SamplingStrategy() = default;
  SamplingStrategy(const std::vector<std::size_t>& class_counts, double exponent)
      : q(exponent), class_probs(class_probabilities(class_counts, exponent)) {}
};

// Seeded with-replacement stream of example indices: a class is drawn from
// the strategy's law, then a member uniformly within it. Holds a pointer to
// the source dataset, which must outlive the stream. Single-owner state.
class SampleStream {
 public:
  SampleStream(const Dataset& source, double q, std::uint64_t seed)
      : source_(&source),
        strategy_(source.class_counts(), q),
        members_(source.members_by_class()),
        rng_(make_rng(seed, 0x73747265616dULL)) {
    if (source.empty()) throw ParameterError("sample stream over an empty dataset");
    cumulative_.resize(strategy_.class_probs.size());
    std::partial_sum(strategy_.class_probs.begin(), strategy_.class_probs.end(), cumulative_.begin());
    last_class_ = 0;
    for (std::size_t j = 0; j < members_.size(); ++j)
      if (!members_[j].empty()) last_class_ = j;
  }

  const SamplingStrategy& strategy() const { return strategy_; }
  const Dataset& source() const { return *source_; }

  std::size_t next_index() {
    const double u = uniform01(rng_);
    std::size_t cls = last_class_;
    for (std::size_t j = 0; j < cumulative_.size(); ++j) {
      if (u < cumulative_[j] && !members_[j].empty()) {
        cls = j;
        break;
      }
    }
    const auto& m = members_[cls];
    return m[static_cast<std::size_t>(uniform_index(rng_, m.size()))];
  }

  // `length` consecutive draws; the default length is the dataset size.
  Indices epoch(std::size_t length) {
    if (length < 1) throw ParameterError("epoch length must be >= 1");
    Indices out(length);
    for (auto& i : out) i = next_index();
    return out;
  }
  Indices epoch() { return epoch(source_->size()); }

 private:
  const Dataset* source_;
  SamplingStrategy strategy_;
  std::vector<Indices> members_;
  std::vector<double> cumulative_;
  std::size_t last_class_;
  Rng rng_;
};

}  // namespace balmix
