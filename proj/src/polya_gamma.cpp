#include "pyramid/polya_gamma.hpp"

#include <cmath>
#include <numbers>

namespace pyramid {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTrunc = 0.64;

// n-th coefficient of the alternating series for the J*(1, 0) density,
// piecewise around the truncation point.
double series_coef(int n, double x) {
  const double kn = (n + 0.5) * kPi;
  if (x > kTrunc) return kn * std::exp(-0.5 * kn * kn * x);
  if (x <= 0.0) return 0.0;
  const double expnt = -1.5 * (std::log(0.5 * kPi) + std::log(x)) + std::log(kn) -
                       2.0 * (n + 0.5) * (n + 0.5) / x;
  return std::exp(expnt);
}

// Probability of proposing from the exponential tail, given z = |c|/2.
double exponential_mass(double z) {
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double rt = std::sqrt(1.0 / kTrunc);
  const double b = rt * (kTrunc * z - 1.0);
  const double a = -rt * (kTrunc * z + 1.0);
  double q_over_p;
  if (z < 20.0) {
    q_over_p = 4.0 / kPi * fz * std::exp(fz * kTrunc) *
               (std::exp(-z) * normal_cdf(b) + std::exp(z) * normal_cdf(a));
  } else {
    // Log space once the factors leave double range.
    const double x0 = std::log(fz) + fz * kTrunc;
    const double xb = x0 - z + log_normal_cdf(b);
    const double xa = x0 + z + log_normal_cdf(a);
    q_over_p = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
  }
  return 1.0 / (1.0 + q_over_p);
}

// Inverse Gaussian(1/z, 1) truncated to (0, kTrunc).
double truncated_inverse_gaussian(double z, Rng& rng) {
  if (z < 1.0 / kTrunc) {
    // Mean beyond the truncation point: propose from the truncated
    // inverse-chi-square and accept with exp(-z^2 x / 2).
    for (;;) {
      double e1, e2;
      do {
        e1 = exponential1(rng);
        e2 = exponential1(rng);
      } while (e1 * e1 > 2.0 * e2 / kTrunc);
      double x = 1.0 + e1 * kTrunc;
      x = kTrunc / (x * x);
      if (uniform01(rng) <= std::exp(-0.5 * z * z * x)) return x;
    }
  }
  const double mu = 1.0 / z;
  for (;;) {
    double y = standard_normal(rng);
    y *= y;
    const double mu_y = mu * y;
    double x = mu + 0.5 * mu * mu_y - 0.5 * mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
    if (uniform01(rng) > mu / (mu + x)) x = mu * mu / x;
    if (x < kTrunc) return x;
  }
}

}  // namespace

double sample_pg(double c, Rng& rng) {
  const double z = 0.5 * std::abs(c);
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double p_exp = exponential_mass(z);
  for (;;) {
    const double x = uniform01(rng) < p_exp ? kTrunc + exponential1(rng) / fz
                                            : truncated_inverse_gaussian(z, rng);
    double s = series_coef(0, x);
    const double y = uniform01(rng) * s;
    for (int n = 1;; ++n) {
      if (n % 2 == 1) {
        s -= series_coef(n, x);
        if (y <= s) return 0.25 * x;
      } else {
        s += series_coef(n, x);
        if (y > s) break;
      }
    }
  }
}

double pg_mean(double c) {
  if (std::abs(c) < 1e-8) return 0.25;
  return std::tanh(0.5 * c) / (2.0 * c);
}

double pg_variance(double c) {
  const double a = std::abs(c);
  if (a < 1e-3) return 1.0 / 24.0 - a * a / 60.0;
  const double ch = std::cosh(0.5 * a);
  return (std::sinh(a) - a) / (4.0 * a * a * a * ch * ch);
}

}  // namespace pyramid
