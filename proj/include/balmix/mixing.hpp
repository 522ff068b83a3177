#pragma once

#include <cmath>
#include <optional>
#include <utility>

#include "balmix/data.hpp"
#include "balmix/error.hpp"
#include "balmix/random.hpp"
#include "balmix/sampling.hpp"

namespace balmix {

namespace detail {

// Marsaglia-Tsang for shape >= 1; shape < 1 boosted through Gamma(shape+1).
inline double sample_gamma(double shape, Rng& rng) {
  if (shape < 1.0) return sample_gamma(shape + 1.0, rng) * std::pow(uniform01(rng), 1.0 / shape);
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace detail

// One draw from Beta(a, b).
//   b == 1          inverse transform, U^(1/a)
//   a == 1          inverse transform, 1 - U^(1/b)
//   a, b <= 1       Joehnk's rejection method, in log space
//   otherwise       ratio of two Gamma variates
inline double sample_beta(double a, double b, Rng& rng) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
    throw ParameterError("Beta parameters must be finite and > 0");
  if (b == 1.0) return std::pow(uniform01(rng), 1.0 / a);
  if (a == 1.0) return 1.0 - std::pow(uniform01(rng), 1.0 / b);
  if (a <= 1.0 && b <= 1.0) {
    for (;;) {
      const double lx = std::log(uniform01(rng)) / a;
      const double ly = std::log(uniform01(rng)) / b;
      const double m = std::max(lx, ly);
      const double ls = m + std::log(std::exp(lx - m) + std::exp(ly - m));
      if (ls <= 0.0) return std::exp(lx - ls);
    }
  }
  const double ga = detail::sample_gamma(a, rng);
  const double gb = detail::sample_gamma(b, rng);
  return ga / (ga + gb);
}

enum class MixKind { none, mixup, balanced };
enum class LambdaPer { example, batch };

struct MixPolicy {
  MixKind kind = MixKind::none;
  double alpha = 0.2;
  LambdaPer lambda_per = LambdaPer::example;
  // Overrides the Beta draw; lets callers pin lambda to 0 or 1.
  std::optional<double> fixed_lambda;

  void validate() const {
    if (kind != MixKind::none && !(alpha > 0.0 && std::isfinite(alpha)))
      throw ParameterError("mix policy alpha must be finite and > 0");
    if (fixed_lambda && !(*fixed_lambda >= 0.0 && *fixed_lambda <= 1.0))
      throw ParameterError("fixed lambda must lie in [0, 1]");
  }
};

// Row b is lambdas[b] * example first[b] + (1 - lambdas[b]) * example second[b].
struct MixedBatch {
  Matrix features;
  Matrix soft_labels;
  Vector lambdas;
  Indices first;
  Indices second;
};

inline std::pair<Vector, Vector> mixup_pair(const Vector& xi, const Vector& yi, const Vector& xj, const Vector& yj,
                                            double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("mixup lambda must lie in [0, 1]");
  if (xi.size() != xj.size() || yi.size() != yj.size()) throw ParameterError("mixup_pair: shape mismatch");
  return {lambda * xi + (1.0 - lambda) * xj, lambda * yi + (1.0 - lambda) * yj};
}

namespace detail {

inline MixedBatch combine(const Dataset& ds, Indices first, Indices second, const Vector& lambdas) {
  const auto b = static_cast<Eigen::Index>(first.size());
  const auto k = static_cast<Eigen::Index>(ds.num_classes());
  MixedBatch out;
  out.features.resize(b, static_cast<Eigen::Index>(ds.dim()));
  out.soft_labels = Matrix::Zero(b, k);
  for (Eigen::Index r = 0; r < b; ++r) {
    const auto i = static_cast<Eigen::Index>(first[static_cast<std::size_t>(r)]);
    const auto j = static_cast<Eigen::Index>(second[static_cast<std::size_t>(r)]);
    const double lam = lambdas[r];
    out.features.row(r) = lam * ds.features().row(i) + (1.0 - lam) * ds.features().row(j);
    out.soft_labels(r, static_cast<Eigen::Index>(ds.labels()[static_cast<std::size_t>(i)])) += lam;
    out.soft_labels(r, static_cast<Eigen::Index>(ds.labels()[static_cast<std::size_t>(j)])) += 1.0 - lam;
  }
  out.lambdas = lambdas;
  out.first = std::move(first);
  out.second = std::move(second);
  return out;
}

inline Vector draw_lambdas(std::size_t batch, const MixPolicy& policy, double beta_b, Rng& rng) {
  Vector lambdas(static_cast<Eigen::Index>(batch));
  if (policy.fixed_lambda) {
    lambdas.setConstant(*policy.fixed_lambda);
  } else if (policy.lambda_per == LambdaPer::batch) {
    lambdas.setConstant(sample_beta(policy.alpha, beta_b, rng));
  } else {
    for (auto& l : lambdas) l = sample_beta(policy.alpha, beta_b, rng);
  }
  return lambdas;
}

}  // namespace detail

// Unmixed batch: one-hot targets, lambda = 1.
inline MixedBatch plain_batch(SampleStream& stream, std::size_t batch) {
  if (batch < 1) throw ParameterError("batch size must be >= 1");
  Indices idx = stream.epoch(batch);
  return detail::combine(stream.source(), idx, idx, Vector::Ones(static_cast<Eigen::Index>(batch)));
}

// Pairs B instance-sampled examples with B class-sampled ones positionally
// and mixes with lambda ~ Beta(alpha, 1); the instance-sampled member gets
// weight lambda.
inline MixedBatch balanced_mixup_batch(SampleStream& instance_stream, SampleStream& class_stream, std::size_t batch,
                                       const MixPolicy& policy, Rng& rng) {
  if (policy.kind != MixKind::balanced) throw ParameterError("balanced_mixup_batch needs a balanced mix policy");
  policy.validate();
  if (batch < 1) throw ParameterError("batch size must be >= 1");
  if (&instance_stream.source() != &class_stream.source())
    throw ParameterError("balanced_mixup_batch: streams must share a dataset");
  Indices first = instance_stream.epoch(batch);
  Indices second = class_stream.epoch(batch);
  const Vector lambdas = detail::draw_lambdas(batch, policy, 1.0, rng);
  return detail::combine(instance_stream.source(), std::move(first), std::move(second), lambdas);
}

// Classic MixUp: the batch is paired with a random permutation of itself
// and mixed with lambda ~ Beta(alpha, alpha).
inline MixedBatch classic_mixup_batch(SampleStream& stream, std::size_t batch, const MixPolicy& policy, Rng& rng) {
  if (policy.kind != MixKind::mixup) throw ParameterError("classic_mixup_batch needs a mixup policy");
  policy.validate();
  if (batch < 1) throw ParameterError("batch size must be >= 1");
  Indices first = stream.epoch(batch);
  Indices second = first;
  shuffle(second, rng);
  const Vector lambdas = detail::draw_lambdas(batch, policy, policy.alpha, rng);
  return detail::combine(stream.source(), std::move(first), std::move(second), lambdas);
}

}  // namespace balmix
