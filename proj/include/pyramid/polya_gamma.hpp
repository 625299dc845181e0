#pragma once

#include "pyramid/rng.hpp"

namespace pyramid {

/// Exact draw from PG(1, c) by Devroye-style accept/reject: proposals from a
/// mixture of a truncated inverse Gaussian (left of 0.64) and an exponential
/// tail, accepted by the alternating series of the Jacobi density.
double sample_pg(double c, Rng& rng);

/// E[PG(1, c)] = tanh(c/2) / (2c), with the limit 1/4 at c = 0.
double pg_mean(double c);

/// Var[PG(1, c)] = (sinh(c) - c) / (4 c^3 cosh^2(c/2)), limit 1/24 at c = 0.
double pg_variance(double c);

}  // namespace pyramid
