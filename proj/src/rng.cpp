#include "pyramid/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/normal.hpp>

namespace pyramid {

double uniform01(Rng& rng) {
  // 53-bit resolution on (0,1); zero is excluded so logs stay finite.
  double u;
  do {
    u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  } while (u == 0.0);
  return u;
}

double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

double exponential1(Rng& rng) { return -std::log(uniform01(rng)); }

double gamma_draw(Rng& rng, double shape, double scale) {
  return std::gamma_distribution<double>(shape, scale)(rng);
}

double beta_draw(Rng& rng, double a, double b) {
  const double x = gamma_draw(rng, a, 1.0);
  const double y = gamma_draw(rng, b, 1.0);
  if (x + y == 0.0) return a / (a + b);
  return x / (x + y);
}

double inv_gamma_draw(Rng& rng, double a, double b) { return 1.0 / gamma_draw(rng, a, 1.0 / b); }

Vector dirichlet_draw(Rng& rng, const Vector& alpha) {
  Vector out(alpha.size());
  for (Eigen::Index i = 0; i < alpha.size(); ++i) out(i) = gamma_draw(rng, alpha(i), 1.0);
  const double s = out.sum();
  if (s == 0.0) return alpha / alpha.sum();
  return out / s;
}

int categorical_draw(Rng& rng, const Vector& probs) {
  const double u = uniform01(rng) * probs.sum();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (u < acc) return static_cast<int>(i);
  }
  // Round-off: return the last category with positive mass.
  for (Eigen::Index i = probs.size() - 1; i >= 0; --i)
    if (probs(i) > 0.0) return static_cast<int>(i);
  return static_cast<int>(probs.size()) - 1;
}

int categorical_log_draw(Rng& rng, std::span<const double> log_weights) {
  const double m = *std::max_element(log_weights.begin(), log_weights.end());
  Vector w(static_cast<Eigen::Index>(log_weights.size()));
  for (std::size_t i = 0; i < log_weights.size(); ++i) w(i) = std::exp(log_weights[i] - m);
  return categorical_draw(rng, w);
}

bool bernoulli_draw(Rng& rng, double p) { return uniform01(rng) < p; }

bool bernoulli_logit_draw(Rng& rng, double log_odds) {
  if (log_odds == std::numeric_limits<double>::infinity()) return true;
  if (log_odds == -std::numeric_limits<double>::infinity()) return false;
  const double p = log_odds >= 0 ? 1.0 / (1.0 + std::exp(-log_odds))
                                 : std::exp(log_odds) / (1.0 + std::exp(log_odds));
  return uniform01(rng) < p;
}

double truncated_normal_positive(Rng& rng, double mean, double sd) {
  // Standardized lower bound.
  const double a = -mean / sd;
  if (a < 5.0) {
    static const boost::math::normal_distribution<double> standard;
    // Upper tail mass above a, sampled as -Phi^{-1}(U * Phi(-a)).
    const double upper = normal_cdf(-a);
    const double z = -boost::math::quantile(standard, uniform01(rng) * upper);
    return mean + sd * std::max(z, a);
  }
  // Robert (1995) exponential proposal with optimal rate.
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double z = a + exponential1(rng) / rate;
    if (uniform01(rng) <= std::exp(-0.5 * (z - rate) * (z - rate))) return mean + sd * z;
  }
}

double log_normal_pdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * r * r / var;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double log_normal_cdf(double x) {
  if (x > -30.0) return std::log(normal_cdf(x));
  // Asymptotic expansion of the Mills ratio.
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace pyramid
