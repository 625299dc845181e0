#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "pyramid/core.hpp"

namespace pyramid {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for the stream addressed by `keys` under `root`. Streams addressed by
/// different key tuples are independent, so work keyed by (iteration, block,
/// index) draws the same numbers regardless of thread scheduling.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(root);
  for (auto k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_stream(std::uint64_t root, std::initializer_list<std::uint64_t> keys) {
  return Rng(derive_seed(root, keys));
}

double uniform01(Rng& rng);
double standard_normal(Rng& rng);
double exponential1(Rng& rng);
double gamma_draw(Rng& rng, double shape, double scale);
double beta_draw(Rng& rng, double a, double b);
/// Inverse-gamma with shape `a` and scale `b` (density proportional to x^{-a-1} e^{-b/x}).
double inv_gamma_draw(Rng& rng, double a, double b);
Vector dirichlet_draw(Rng& rng, const Vector& alpha);
int categorical_draw(Rng& rng, const Vector& probs);
/// Categorical draw from unnormalized log weights.
int categorical_log_draw(Rng& rng, std::span<const double> log_weights);
bool bernoulli_draw(Rng& rng, double p);
/// Bernoulli with success probability 1/(1+exp(-log_odds)).
bool bernoulli_logit_draw(Rng& rng, double log_odds);

/// Normal(mean, sd^2) truncated to (0, inf). Inverse-CDF in the bulk,
/// exponential rejection in the far tail.
double truncated_normal_positive(Rng& rng, double mean, double sd);

// Scalar helpers shared by the sampler and tests.
double log_normal_pdf(double x, double mean, double var);
double normal_cdf(double x);
/// log Phi(x), accurate in the far left tail.
double log_normal_cdf(double x);
double log_sum_exp(std::span<const double> xs);

}  // namespace pyramid
