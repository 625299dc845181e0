#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "pyramid/core.hpp"
#include "pyramid/gibbs.hpp"
#include "pyramid/simgen.hpp"

using namespace pyramid;

namespace {

TwoLayerParams tiny_truth(int d) {
  TwoLayerParams t;
  IntMatrix g(3, 2);
  g << 1, 0, 0, 1, 1, 1;
  t.graph = GraphicalMatrix::make(g);
  t.cardinalities.assign(3, d);
  t.beta0 = Matrix::Constant(3, d - 1, -1.0);
  t.beta.assign(d - 1, Matrix::Zero(3, 2));
  for (auto& b : t.beta)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 2; ++k)
        if (g(j, k)) b(j, k) = 2.0;
  t.tau = Vector::Constant(2, 0.5);
  t.eta.resize(2, 2);
  t.eta << 0.8, 0.2, 0.3, 0.7;
  return t;
}

Dataset tiny_data(int d, int n, std::uint64_t seed) {
  return simulate_two_layer(tiny_truth(d), n, seed).dataset;
}

SamplerConfig small_config(int K, PriorMode mode, bool positivity) {
  SamplerConfig cfg;
  cfg.K_upper = K;
  cfg.B = 2;
  cfg.mode = mode;
  cfg.positivity = positivity;
  cfg.iterations = 10;
  cfg.burn_in = 0;
  cfg.thin = 1;
  cfg.seed = 5;
  return cfg;
}

// Log-likelihood evaluated from the parameters alone, ignoring the cache.
double direct_loglik(const ChainState& s, const Dataset& data) {
  double ll = 0.0;
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.p; ++j) {
      Vector logits(s.d - 1);
      for (int c = 0; c < s.d - 1; ++c) {
        double v = s.beta0(j, c);
        for (int k = 0; k < s.K; ++k) v += s.G(j, k) * s.A(i, k) * s.beta[c](j, k);
        logits(c) = v;
      }
      ll += std::log(softmax_with_baseline(logits)(data.values(i, j) - 1));
    }
  return ll;
}

double lnorm(double x, double var) {
  return -0.5 * std::log(2 * std::numbers::pi * var) - 0.5 * x * x / var;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return s / xs.size();
}

double sd_of(const std::vector<double>& xs) {
  const double m = mean_of(xs);
  double v = 0;
  for (double x : xs) v += (x - m) * (x - m);
  return std::sqrt(v / (xs.size() - 1));
}

// Integral of f over (0, inf) through x = log(s).
template <class F>
double integrate_positive(F f, double lo = -15, double hi = 15, int n = 40001) {
  const double h = (hi - lo) / (n - 1);
  double acc = 0;
  for (int t = 0; t < n; ++t) {
    const double x = lo + t * h;
    const double w = (t == 0 || t == n - 1) ? 0.5 : 1.0;
    acc += w * f(std::exp(x)) * std::exp(x);
  }
  return acc * h;
}

double log_inv_gamma(double s, double a, double b) {
  return a * std::log(b) - std::lgamma(a) - (a + 1) * std::log(s) - b / s;
}

}  // namespace

TEST(PhiC, ZeroLogitsFourCategories) {
  auto data = tiny_data(4, 5, 1);
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  ChainState s = initialize_chain(data, cfg);
  s.beta0.setZero();
  s.G.setZero();
  refresh_linear_predictors(s);
  for (int c = 0; c < 3; ++c) {
    PhiC r = compute_phi_C(s, 0, 0, c);
    EXPECT_NEAR(r.C, std::log(3.0), 1e-15);
    EXPECT_NEAR(r.phi, -std::log(3.0), 1e-15);
  }
}

TEST(PhiC, BinaryReduction) {
  auto data = tiny_data(2, 5, 1);
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  ChainState s = initialize_chain(data, cfg);
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.p; ++j) {
      PhiC r = compute_phi_C(s, i, j, 0);
      EXPECT_DOUBLE_EQ(r.C, 0.0);
      EXPECT_NEAR(r.phi, linear_predictor(s, i, j, 0), 1e-14);
    }
}

TEST(PhiC, MatchesNaiveFormulaOnRandomStates) {
  auto data = tiny_data(5, 20, 3);
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  Rng rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    cfg.seed = rep + 1;
    ChainState s = initialize_chain(data, cfg);
    for (int j = 0; j < s.p; ++j)
      for (int c = 0; c < 4; ++c) {
        s.beta0(j, c) = 4 * standard_normal(rng);
        for (int k = 0; k < 2; ++k) s.beta[c](j, k) = 3 * standard_normal(rng);
      }
    refresh_linear_predictors(s);
    for (int i = 0; i < s.n; ++i)
      for (int j = 0; j < s.p; ++j)
        for (int c = 0; c < 4; ++c) {
          double sum = 1.0;  // baseline
          for (int q = 0; q < 4; ++q)
            if (q != c) sum += std::exp(linear_predictor(s, i, j, q));
          const double C = std::log(sum);
          PhiC r = compute_phi_C(s, i, j, c);
          EXPECT_NEAR(r.C, C, 1e-12);
          EXPECT_NEAR(r.phi, linear_predictor(s, i, j, c) - C, 1e-12);
        }
  }
}

TEST(PhiC, HugePredictorsStayFinite) {
  auto data = tiny_data(3, 4, 1);
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  ChainState s = initialize_chain(data, cfg);
  s.beta0(0, 0) = 900;
  s.beta0(0, 1) = -900;
  refresh_linear_predictors(s);
  for (int c = 0; c < 2; ++c) {
    PhiC r = compute_phi_C(s, 0, 0, c);
    EXPECT_TRUE(std::isfinite(r.C));
    EXPECT_TRUE(std::isfinite(r.phi));
  }
  EXPECT_NEAR(compute_phi_C(s, 0, 0, 1).C, 900 + std::log1p(std::exp(-900.0)), 1e-9);
}

TEST(BetaConditional, DataFreeEqualsPrior) {
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  cfg.hyper.mu0 = 0.7;
  cfg.hyper.sigma0_sq = 2.5;
  auto data = tiny_data(3, 4, 2);
  ChainState s = initialize_chain(data, cfg);
  // No subjects: an empty table with the same columns.
  Dataset empty{IntMatrix(0, 3), data.cardinalities};
  s.n = 0;
  s.A.resize(0, 2);
  s.z.clear();
  s.W.clear();
  refresh_linear_predictors(s);
  s.G.row(2) << 1, 1;
  for (int c = 0; c < 2; ++c) {
    auto bc = beta_full_conditional(s, empty, cfg, 2, c);
    ASSERT_EQ(bc.active.size(), 2u);
    EXPECT_NEAR(bc.mean(0), 0.7, 1e-14);
    EXPECT_NEAR(bc.mean(1), 0.0, 1e-14);
    EXPECT_NEAR(bc.mean(2), 0.0, 1e-14);
    Matrix cov = bc.precision.inverse();
    EXPECT_NEAR(cov(0, 0), 2.5, 1e-12);
    EXPECT_NEAR(cov(1, 1), s.sigma2(c, 0), 1e-12);
    EXPECT_NEAR(cov(2, 2), s.sigma2(c, 1), 1e-12);
    EXPECT_NEAR(cov(0, 1), 0.0, 1e-14);
  }
}

TEST(BetaConditional, InterceptOnlyShrinksTowardPriorMean) {
  auto cfg = small_config(0, PriorMode::fixed_K, false);
  cfg.hyper.mu0 = 0.0;
  auto data = tiny_data(2, 30, 4);
  ChainState s = initialize_chain(data, cfg);
  Rng rng(1);
  for (auto& w : s.W) w = 0.1 + uniform01(rng);
  for (int j = 0; j < 3; ++j) {
    auto bc = beta_full_conditional(s, data, cfg, j, 0);
    ASSERT_EQ(bc.mean.size(), 1);
    double sw = 0, sk = 0;
    for (int i = 0; i < s.n; ++i) {
      sw += s.W[s.idx(i, j, 0)];
      sk += (data.values(i, j) == 1 ? 0.5 : -0.5);
    }
    const double q = sw + 1.0 / cfg.hyper.sigma0_sq;
    EXPECT_NEAR(bc.precision(0, 0), q, 1e-12);
    EXPECT_NEAR(bc.mean(0), sk / q, 1e-12);
    EXPECT_LE(std::abs(bc.mean(0)), std::abs(sk / sw));
  }
}

TEST(BetaConditional, MatchesBruteForceGaussianDensity) {
  // Two coefficients: intercept and one active main effect, d = 3 so the
  // offsets C are nonzero.
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  cfg.hyper.mu0 = -0.3;
  auto data = tiny_data(3, 25, 8);
  ChainState s = initialize_chain(data, cfg);
  s.G.setZero();
  s.G(1, 1) = 1;
  refresh_linear_predictors(s);
  Rng rng(3);
  for (auto& w : s.W) w = 0.05 + uniform01(rng);
  const int j = 1, c = 0;
  auto bc = beta_full_conditional(s, data, cfg, j, c);
  ASSERT_EQ(bc.mean.size(), 2);
  // log full conditional up to a constant, from the augmented likelihood.
  auto log_target = [&](double b0, double b1) {
    double v = lnorm(b0 - cfg.hyper.mu0, cfg.hyper.sigma0_sq) + lnorm(b1, s.sigma2(c, 1));
    for (int i = 0; i < s.n; ++i) {
      const double C = compute_phi_C(s, i, j, c).C;
      const double psi = b0 + b1 * s.A(i, 1) - C;
      const double kappa = (data.values(i, j) == c + 1 ? 1.0 : 0.0) - 0.5;
      const double w = s.W[s.idx(i, j, c)];
      v += kappa * psi - 0.5 * w * psi * psi;
    }
    return v;
  };
  auto log_gauss = [&](double b0, double b1) {
    Vector x(2);
    x << b0 - bc.mean(0), b1 - bc.mean(1);
    return -0.5 * x.dot(bc.precision * x);
  };
  const double ref_t = log_target(0.0, 0.0), ref_g = log_gauss(0.0, 0.0);
  for (int rep = 0; rep < 20; ++rep) {
    const double b0 = 2 * standard_normal(rng), b1 = 2 * standard_normal(rng);
    EXPECT_NEAR(log_target(b0, b1) - ref_t, log_gauss(b0, b1) - ref_g, 1e-9);
  }
}

TEST(UpdateBeta, PseudoPriorForInactiveAndPositivityForActive) {
  auto cfg = small_config(2, PriorMode::fixed_K, true);
  cfg.hyper.v0 = 0.1;
  auto data = tiny_data(3, 40, 9);
  ChainState s = initialize_chain(data, cfg);
  s.G.setZero();
  s.G(0, 0) = 1;
  refresh_linear_predictors(s);
  std::vector<double> inactive;
  for (int it = 1; it <= 400; ++it) {
    SweepContext ctx{7, static_cast<std::uint64_t>(it), 1};
    update_w_beta(s, data, cfg, ctx);
    for (int c = 0; c < 2; ++c) {
      EXPECT_GT(s.beta[c](0, 0), 0.0);
      inactive.push_back(s.beta[c](2, 1));
    }
  }
  EXPECT_NEAR(mean_of(inactive), 0.0, 4 * 0.1 / std::sqrt(800.0));
  EXPECT_NEAR(sd_of(inactive), 0.1, 0.01);
}

TEST(GUpdate, DegenerateInclusionProbability) {
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  auto data = tiny_data(2, 10, 1);
  ChainState s = initialize_chain(data, cfg);
  s.gamma = 1.0;
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 2; ++k) EXPECT_EQ(g_log_odds(s, data, cfg, j, k), INFINITY);
  // gamma is redrawn at the end of update_g, so check G right after.
  update_g(s, data, cfg, SweepContext{1, 1, 1});
  EXPECT_EQ(s.G, IntMatrix::Ones(3, 2));
}

TEST(GUpdate, FlatLikelihoodLeavesPriorRatio) {
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  auto data = tiny_data(3, 10, 1);
  ChainState s = initialize_chain(data, cfg);
  s.gamma = 0.3;
  for (auto& b : s.beta) b.col(1).setZero();
  refresh_linear_predictors(s);
  for (int j = 0; j < 3; ++j) {
    double expect = std::log(0.3 / 0.7);
    for (int c = 0; c < 2; ++c)
      expect += lnorm(0.0, s.sigma2(c, 1)) - lnorm(0.0, cfg.hyper.v0 * cfg.hyper.v0);
    EXPECT_NEAR(g_log_odds(s, data, cfg, j, 1), expect, 1e-12);
  }
}

TEST(GUpdate, TwoSubjectEnumeration) {
  for (bool positivity : {false, true}) {
    auto cfg = small_config(2, PriorMode::fixed_K, positivity);
    auto data = tiny_data(3, 2, 21);
    ChainState s = initialize_chain(data, cfg);
    s.A << 1, 1, 1, 0;
    s.gamma = 0.4;
    for (auto& b : s.beta) b = b.cwiseAbs();
    refresh_linear_predictors(s);
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 2; ++k) {
        double lp[2];
        for (int g = 0; g < 2; ++g) {
          ChainState t = s;
          t.G(j, k) = g;
          double v = g ? std::log(0.4) : std::log(0.6);
          for (int c = 0; c < 2; ++c) {
            const double b = s.beta[c](j, k);
            v += g ? lnorm(b, s.sigma2(c, k)) + (positivity ? std::log(2.0) : 0.0)
                   : lnorm(b, cfg.hyper.v0 * cfg.hyper.v0);
          }
          lp[g] = v + direct_loglik(t, data);
        }
        EXPECT_NEAR(g_log_odds(s, data, cfg, j, k), lp[1] - lp[0], 1e-10);
      }
  }
}

TEST(GUpdate, NonPositiveCoefficientBlocksEdgeUnderPositivity) {
  auto cfg = small_config(2, PriorMode::fixed_K, true);
  auto data = tiny_data(3, 5, 2);
  ChainState s = initialize_chain(data, cfg);
  s.beta[1](0, 1) = -0.01;
  EXPECT_EQ(g_log_odds(s, data, cfg, 0, 1), -INFINITY);
}

TEST(GUpdate, GammaConjugateDraw) {
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  auto data = tiny_data(2, 3, 2);
  ChainState s = initialize_chain(data, cfg);
  // gamma is drawn last, given the G just sampled.
  std::vector<double> gs;
  for (int it = 1; it <= 4000; ++it) {
    update_g(s, data, cfg, SweepContext{3, static_cast<std::uint64_t>(it), 1});
    const double total = s.G.sum();
    // Beta(1 + total, 1 + 6 - total) has mean (1 + total) / 8.
    gs.push_back(s.gamma - (1 + total) / 8.0);
  }
  EXPECT_NEAR(mean_of(gs), 0.0, 0.01);
}

TEST(SigmaUpdate, NoEdgesDrawsFromPrior) {
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  cfg.hyper.a_sigma = 4.0;
  cfg.hyper.b_sigma = 3.0;
  auto data = tiny_data(2, 3, 2);
  ChainState s = initialize_chain(data, cfg);
  s.G.setZero();
  std::vector<double> xs;
  for (int it = 1; it <= 20000; ++it) {
    update_sigma_fixed_k(s, cfg, SweepContext{2, static_cast<std::uint64_t>(it), 1});
    xs.push_back(s.sigma2(0, 0));
  }
  const double m = 3.0 / 3.0, var = 9.0 / (9.0 * 2.0);
  EXPECT_NEAR(mean_of(xs), m, 4 * std::sqrt(var / xs.size()));
}

TEST(SigmaUpdate, PosteriorMeanMatchesQuadrature) {
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  auto data = tiny_data(2, 3, 2);
  ChainState s = initialize_chain(data, cfg);
  s.G.setZero();
  s.G(0, 1) = s.G(2, 1) = 1;
  s.beta[0](0, 1) = 1.3;
  s.beta[0](2, 1) = -0.6;
  s.beta[0](1, 1) = 5.0;  // inactive, must not count
  const double a = cfg.hyper.a_sigma, b = cfg.hyper.b_sigma;
  auto post = [&](double x) {
    return std::exp(log_inv_gamma(x, a, b) + lnorm(1.3, x) + lnorm(-0.6, x));
  };
  const double z = integrate_positive(post);
  const double quad_mean = integrate_positive([&](double x) { return x * post(x); }) / z;
  const double a1 = a + 1.0, b1 = b + 0.5 * (1.3 * 1.3 + 0.36);
  EXPECT_NEAR(quad_mean, b1 / (a1 - 1), 1e-6);
  std::vector<double> xs;
  for (int it = 1; it <= 40000; ++it) {
    update_sigma_fixed_k(s, cfg, SweepContext{4, static_cast<std::uint64_t>(it), 1});
    xs.push_back(s.sigma2(0, 1));
  }
  const double var = b1 * b1 / ((a1 - 1) * (a1 - 1) * (a1 - 2));
  EXPECT_NEAR(mean_of(xs), quad_mean, 4 * std::sqrt(var / xs.size()));
}

TEST(SigmaUpdate, DefaultHyperparameters) {
  Hyperparams h;
  EXPECT_EQ(h.a_sigma, 2.0);
  EXPECT_EQ(h.b_sigma, 2.0);
  EXPECT_EQ(h.theta_inf, 0.07);
  EXPECT_EQ(h.v0, 0.1);
  EXPECT_EQ(h.alpha, 5.0);
  SamplerConfig cfg;
  EXPECT_EQ(cfg.iterations, 15000);
  EXPECT_EQ(cfg.burn_in, 5000);
  EXPECT_EQ(cfg.thin, 5);
}

TEST(TauEta, NoSubjectsGivesFlatPriors) {
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  cfg.B = 3;
  auto data = tiny_data(2, 3, 2);
  ChainState s = initialize_chain(data, cfg);
  s.n = 0;
  s.A.resize(0, 2);
  s.z.clear();
  std::vector<double> t0, e0;
  for (int it = 1; it <= 20000; ++it) {
    update_tau_eta(s, SweepContext{9, static_cast<std::uint64_t>(it), 1});
    t0.push_back(s.tau(0));
    e0.push_back(s.eta(1, 2));
  }
  // Dirichlet(1,1,1) marginal is Beta(1,2): mean 1/3, var 1/18.
  EXPECT_NEAR(mean_of(t0), 1.0 / 3, 4 * std::sqrt(1.0 / 18 / 20000));
  EXPECT_NEAR(mean_of(e0), 0.5, 4 * std::sqrt(1.0 / 12 / 20000));
  EXPECT_NEAR(sd_of(e0), std::sqrt(1.0 / 12), 0.01);
}

TEST(TauEta, AllInClassOneWithTrait) {
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  auto data = tiny_data(2, 6, 2);
  ChainState s = initialize_chain(data, cfg);
  s.A.setOnes();
  std::fill(s.z.begin(), s.z.end(), 0);
  std::vector<double> e;
  for (int it = 1; it <= 20000; ++it) {
    update_tau_eta(s, SweepContext{9, static_cast<std::uint64_t>(it), 1});
    e.push_back(s.eta(0, 0));
  }
  // Beta(7, 1): mean 7/8, var 7/(64*9).
  EXPECT_NEAR(mean_of(e), 7.0 / 8, 4 * std::sqrt(7.0 / 576 / 20000));
}

TEST(TauEta, GridPosteriorForThreeSubjects) {
  auto cfg = small_config(1, PriorMode::fixed_K, false);
  auto data = tiny_data(2, 3, 2);
  ChainState s = initialize_chain(data, cfg);
  s.A << 1, 0, 1;
  s.z = {0, 0, 1};
  // Grid posterior for eta(0,0): two class-1 subjects, traits 1 and 0.
  const int n = 100001;
  double z = 0, m = 0;
  for (int t = 1; t < n - 1; ++t) {
    const double x = double(t) / (n - 1);
    const double w = x * (1 - x);
    z += w;
    m += x * w;
  }
  const double grid_mean = m / z;
  std::vector<double> e, tau0;
  for (int it = 1; it <= 20000; ++it) {
    update_tau_eta(s, SweepContext{11, static_cast<std::uint64_t>(it), 1});
    e.push_back(s.eta(0, 0));
    tau0.push_back(s.tau(0));
  }
  EXPECT_NEAR(grid_mean, 0.5, 1e-6);
  EXPECT_NEAR(mean_of(e), grid_mean, 4 * std::sqrt(0.05 / 20000));
  // tau ~ Dir(1+2, 1+1): mean 3/5.
  EXPECT_NEAR(mean_of(tau0), 0.6, 4 * std::sqrt(0.04 / 20000));
}

TEST(AZ, FlatCaseIsFairCoin) {
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  auto data = tiny_data(2, 3, 2);
  ChainState s = initialize_chain(data, cfg);
  s.eta.setConstant(0.5);
  for (auto& b : s.beta) b.setZero();
  refresh_linear_predictors(s);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(a_log_odds(s, data, i, k), 0.0, 1e-14);
  double ones = 0;
  const int reps = 4000;
  for (int it = 1; it <= reps; ++it) {
    update_A_Z(s, data, SweepContext{13, static_cast<std::uint64_t>(it), 1});
    ones += s.A(0, 0);
  }
  EXPECT_NEAR(ones / reps, 0.5, 4 * std::sqrt(0.25 / reps));
}

TEST(AZ, SingleClassIsCertain) {
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  cfg.B = 1;
  auto data = tiny_data(2, 50, 2);
  ChainState s = initialize_chain(data, cfg);
  for (int it = 1; it <= 20; ++it) {
    update_A_Z(s, data, SweepContext{1, static_cast<std::uint64_t>(it), 1});
    for (int z : s.z) EXPECT_EQ(z, 0);
  }
}

TEST(AZ, TwoPointEnumeration) {
  // One subject, one trait, one variable.
  TwoLayerParams t;
  t.graph = GraphicalMatrix::make(IntMatrix::Ones(1, 1));
  t.cardinalities = {3};
  t.beta0 = Matrix(1, 2);
  t.beta0 << -0.5, 0.4;
  t.beta.assign(2, Matrix::Constant(1, 1, 1.5));
  t.tau = Vector::Ones(1);
  t.eta = Matrix::Constant(1, 1, 0.5);
  auto cfg = small_config(1, PriorMode::fixed_K, false);
  cfg.B = 2;
  for (int y = 1; y <= 3; ++y) {
    IntMatrix v(1, 1);
    v << y;
    Dataset data = Dataset::make(v, {3});
    ChainState s = initialize_chain(data, cfg);
    s.G(0, 0) = 1;
    s.beta0 = t.beta0;
    s.beta[0](0, 0) = 1.5;
    s.beta[1](0, 0) = -0.8;
    s.eta << 0.3, 0.9;
    s.z = {1};
    refresh_linear_predictors(s);
    double lp[2];
    for (int a = 0; a < 2; ++a) {
      ChainState u = s;
      u.A(0, 0) = a;
      lp[a] = (a ? std::log(0.9) : std::log(0.1)) + direct_loglik(u, data);
    }
    EXPECT_NEAR(a_log_odds(s, data, 0, 0), lp[1] - lp[0], 1e-12);
    // Empirical frequency over repeated updates with z pinned to class 2.
    const double p1 = 1.0 / (1.0 + std::exp(lp[0] - lp[1]));
    double ones = 0;
    const int reps = 20000;
    for (int it = 1; it <= reps; ++it) {
      s.z = {1};
      update_A_Z(s, data, SweepContext{17, static_cast<std::uint64_t>(it), 1});
      ones += s.A(0, 0);
    }
    EXPECT_NEAR(ones / reps, p1, 4 * std::sqrt(p1 * (1 - p1) / reps));
  }
}

TEST(AZ, ClassWeightsEnumeration) {
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  auto data = tiny_data(2, 1, 3);
  ChainState s = initialize_chain(data, cfg);
  s.A << 1, 0;
  s.tau << 0.3, 0.7;
  s.eta << 0.8, 0.2, 0.4, 0.6;
  // Class draw given the traits A ends up with after the same update.
  const double w0 = 0.3 * 0.8 * 0.6, w1 = 0.7 * 0.2 * 0.4;
  const double p0 = w0 / (w0 + w1);
  double zeros = 0, n = 0;
  for (int it = 1; it <= 20000; ++it) {
    s.A << 1, 0;
    refresh_linear_predictors(s);
    ChainState t = s;
    update_A_Z(t, data, SweepContext{19, static_cast<std::uint64_t>(it), 1});
    if (t.A(0, 0) == 1 && t.A(0, 1) == 0) {
      zeros += t.z[0] == 0;
      n += 1;
    }
  }
  ASSERT_GT(n, 1000);
  EXPECT_NEAR(zeros / n, p0, 4 * std::sqrt(p0 * (1 - p0) / n));
}

TEST(Csp, WeightsMatchDirectDensities) {
  auto cfg = small_config(2, PriorMode::csp, false);
  cfg.hyper.a_sigma = 2.0;
  cfg.hyper.b_sigma = 2.0;
  cfg.hyper.theta_inf = 0.07;
  auto data = tiny_data(3, 4, 5);
  // K=2 latent columns, p=3 rows with two active in column 0.
  ChainState s = initialize_chain(data, cfg);
  s.G << 1, 0, 0, 1, 1, 1;
  s.beta[0] << 0.8, 0.1, 0.2, 1.1, -0.4, 0.3;
  s.beta[1] << 0.5, -0.2, 0.9, 0.6, 1.2, -0.7;
  s.csp->v << 0.35, 1.0;
  for (int k = 0; k < 2; ++k) {
    auto lw = csp_log_weights(s, cfg, k);
    ASSERT_EQ(lw.size(), 2u);
    const double w[2] = {0.35, 0.65};
    for (int l = 0; l < 2; ++l) {
      double expect = std::log(w[l]);
      for (int c = 0; c < 2; ++c) {
        if (l <= k) {
          for (int j = 0; j < 3; ++j)
            if (s.G(j, k)) expect += lnorm(s.beta[c](j, k), 0.07);
        } else {
          // Slab marginal: integrate the shared variance out numerically.
          auto f = [&](double x) {
            double v = log_inv_gamma(x, 2.0, 2.0);
            for (int j = 0; j < 3; ++j)
              if (s.G(j, k)) v += lnorm(s.beta[c](j, k), x);
            return std::exp(v);
          };
          expect += std::log(integrate_positive(f));
        }
      }
      EXPECT_NEAR(lw[l], expect, 1e-6) << "k=" << k << " l=" << l;
    }
  }
}

TEST(Csp, FixedChainRejectsUpdate) {
  auto cfg = small_config(2, PriorMode::fixed_K, false);
  auto data = tiny_data(2, 3, 5);
  ChainState s = initialize_chain(data, cfg);
  EXPECT_THROW(update_csp(s, cfg, SweepContext{1, 1, 1}), UsageError);
  EXPECT_THROW(csp_log_weights(s, cfg, 0), UsageError);
}

TEST(Csp, InvariantsAfterUpdate) {
  auto cfg = small_config(5, PriorMode::csp, true);
  auto data = tiny_data(3, 20, 5);
  ChainState s = initialize_chain(data, cfg);
  for (int it = 1; it <= 50; ++it) {
    update_csp(s, cfg, SweepContext{1, static_cast<std::uint64_t>(it), 1});
    const auto& csp = *s.csp;
    EXPECT_EQ(csp.v(4), 1.0);
    EXPECT_EQ(csp.pi(4), 1.0);
    for (int k = 0; k + 1 < 5; ++k) EXPECT_LE(csp.pi(k), csp.pi(k + 1));
    for (int k = 0; k < 5; ++k) {
      EXPECT_GE(csp.zind[k], 1);
      EXPECT_LE(csp.zind[k], 5);
      for (int c = 0; c < 2; ++c) {
        if (csp.zind[k] > k + 1)
          EXPECT_GT(s.sigma2(c, k), 0.0);
        else
          EXPECT_EQ(s.sigma2(c, k), cfg.hyper.theta_inf);
      }
    }
  }
}

// Null coefficients favour the spike everywhere, so with alpha -> 0 every
// label sits on the first stick and pi_1 -> 1.
TEST(Csp, VanishingConcentrationWithNullCoefficientsFillsFirstStick) {
  auto cfg = small_config(4, PriorMode::csp, false);
  cfg.hyper.alpha = 1e-3;
  auto data = tiny_data(3, 10, 5);
  ChainState s = initialize_chain(data, cfg);
  for (auto& b : s.beta) b.setZero();
  std::vector<double> pi1;
  for (int it = 1; it <= 300; ++it) {
    update_csp(s, cfg, SweepContext{1, static_cast<std::uint64_t>(it), 1});
    if (it > 100) pi1.push_back(s.csp->pi(0));
  }
  EXPECT_GT(mean_of(pi1), 0.99);
}

TEST(RunChain, OneRetainedDraw) {
  auto cfg = small_config(2, PriorMode::csp, true);
  cfg.iterations = 4;
  cfg.burn_in = 3;
  cfg.thin = 1;
  auto draws = run_chain(tiny_data(3, 10, 1), cfg);
  EXPECT_EQ(draws.size(), 1);
  EXPECT_EQ(cfg.retained_draws(), 1);
  EXPECT_EQ(draws.log_lik.size(), 4u);
}

TEST(RunChain, LongProtocolRetainsTwoThousand) {
  auto cfg = small_config(2, PriorMode::csp, true);
  cfg.iterations = 15000;
  cfg.burn_in = 5000;
  cfg.thin = 5;
  EXPECT_EQ(cfg.retained_draws(), 2000);
  auto draws = run_chain(tiny_data(3, 4, 1), cfg);
  EXPECT_EQ(draws.size(), 2000);
  EXPECT_EQ(draws.csp_pi.size(), 2000u);
  EXPECT_TRUE(draws.A.empty());
}

TEST(RunChain, RejectsBadConfigs) {
  auto data = tiny_data(3, 4, 1);
  auto cfg = small_config(2, PriorMode::csp, true);
  cfg.burn_in = cfg.iterations;
  EXPECT_THROW(run_chain(data, cfg), InputError);
  cfg = small_config(2, PriorMode::csp, true);
  cfg.thin = 0;
  EXPECT_THROW(run_chain(data, cfg), InputError);
  EXPECT_THROW(parse_prior_mode("bogus"), InputError);
  EXPECT_EQ(parse_prior_mode("fixed_K"), PriorMode::fixed_K);
  IntMatrix v(2, 2);
  v << 1, 1, 2, 3;
  EXPECT_THROW(run_chain(Dataset::make(v, {2, 3}), small_config(1, PriorMode::csp, true)),
               InputError);
}

TEST(RunChain, BitIdenticalAcrossRunsAndThreads) {
  auto data = simulate_two_layer(paper_sim_truth(), 150, 3).dataset;
  auto cfg = small_config(5, PriorMode::csp, true);
  cfg.iterations = 30;
  cfg.burn_in = 10;
  cfg.thin = 2;
  cfg.keep_local_draws = true;
  auto a = run_chain(data, cfg);
  auto b = run_chain(data, cfg);
  cfg.jobs = 3;
  auto c = run_chain(data, cfg);
  for (const auto* o : {&b, &c}) {
    ASSERT_EQ(a.size(), o->size());
    EXPECT_EQ(a.log_lik, o->log_lik);
    for (int t = 0; t < a.size(); ++t) {
      EXPECT_EQ(a.G[t], o->G[t]);
      EXPECT_EQ(a.beta0[t], o->beta0[t]);
      for (int q = 0; q < 3; ++q) EXPECT_EQ(a.beta[t][q], o->beta[t][q]);
      EXPECT_EQ(a.sigma2[t], o->sigma2[t]);
      EXPECT_EQ(a.eta[t], o->eta[t]);
      EXPECT_EQ(a.tau[t], o->tau[t]);
      EXPECT_EQ(a.csp_zind[t], o->csp_zind[t]);
      EXPECT_EQ(a.A[t], o->A[t]);
      EXPECT_EQ(a.Z[t], o->Z[t]);
    }
  }
}

TEST(RunChain, PositivityAndFiniteLikelihood) {
  auto data = simulate_two_layer(paper_sim_truth(), 200, 4).dataset;
  auto cfg = small_config(5, PriorMode::csp, true);
  cfg.iterations = 60;
  cfg.burn_in = 20;
  auto draws = run_chain(data, cfg);
  for (double ll : draws.log_lik) EXPECT_TRUE(std::isfinite(ll));
  for (int t = 0; t < draws.size(); ++t)
    for (int c = 0; c < 3; ++c)
      for (int j = 0; j < 20; ++j)
        for (int k = 0; k < 5; ++k)
          if (draws.G[t](j, k)) EXPECT_GT(draws.beta[t][c](j, k), 0.0);
}

TEST(RunChain, PredictorCacheMatchesRecompute) {
  auto data = simulate_two_layer(paper_sim_truth(), 120, 5).dataset;
  auto cfg = small_config(5, PriorMode::csp, true);
  ChainState s = initialize_chain(data, cfg);
  for (int it = 1; it <= 15; ++it) {
    sweep(s, data, cfg, SweepContext{cfg.seed, static_cast<std::uint64_t>(it), 1});
    for (int i = 0; i < s.n; ++i)
      for (int j = 0; j < s.p; ++j)
        for (int c = 0; c < 3; ++c) {
          const auto at = s.idx(i, j, c);
          ASSERT_NEAR(s.lin[at], linear_predictor(s, i, j, c), 1e-9);
          ASSERT_NEAR(s.elin[at], std::exp(s.lin[at]), 1e-9 * std::exp(s.lin[at]));
        }
    EXPECT_NEAR(log_likelihood(s, data), direct_loglik(s, data), 1e-8);
  }
  // The recompute-from-scratch mode gives the same chain up to rounding.
  auto fast = run_chain(data, cfg);
  cfg.recompute_predictors = true;
  auto slow = run_chain(data, cfg);
  ASSERT_EQ(fast.log_lik.size(), slow.log_lik.size());
  for (std::size_t t = 0; t < fast.log_lik.size(); ++t)
    EXPECT_NEAR(fast.log_lik[t], slow.log_lik[t], 1e-6 * std::abs(slow.log_lik[t]));
}

TEST(KStar, AllSticksFullGivesZero) {
  PosteriorDraws d;
  d.K = 4;
  d.csp_pi.assign(10, Vector::Ones(4));
  d.csp_zind.assign(10, std::vector<int>{1, 1, 1, 1});
  EXPECT_DOUBLE_EQ(estimate_k_star(d), 0.0);
  EXPECT_DOUBLE_EQ(estimate_k_star_indicator(d), 0.0);
}

TEST(KStar, StickTailGivesKMinusOne) {
  PosteriorDraws d;
  d.K = 6;
  Vector pi = Vector::Zero(6);
  pi(5) = 1.0;
  d.csp_pi.assign(7, pi);
  EXPECT_DOUBLE_EQ(estimate_k_star(d), 5.0);
  PosteriorDraws none;
  EXPECT_THROW(estimate_k_star(none), UsageError);
  EXPECT_THROW(estimate_k_star_indicator(none), UsageError);
}

TEST(KStar, TwoFormsAgreeWithinMonteCarloError) {
  // Both forms on the same retained draws of one chain; the per-draw
  // difference is compared with its batch-means standard error.
  auto data = simulate_two_layer(paper_sim_truth(), 500, 42).dataset;
  auto cfg = small_config(7, PriorMode::csp, true);
  cfg.iterations = 1500;
  cfg.burn_in = 500;
  cfg.thin = 5;
  cfg.seed = 42;
  auto draws = run_chain(data, cfg);
  ASSERT_EQ(draws.size(), 200);
  std::vector<double> diff(draws.size());
  for (int t = 0; t < draws.size(); ++t) {
    double eq = (1.0 - draws.csp_pi[t].array()).sum();
    double ind = 0;
    for (int k = 0; k < 7; ++k) ind += draws.csp_zind[t][k] > k + 1;
    diff[t] = eq - ind;
  }
  const int batches = 10, len = draws.size() / batches;
  std::vector<double> bm(batches, 0.0);
  for (int b = 0; b < batches; ++b) {
    for (int t = b * len; t < (b + 1) * len; ++t) bm[b] += diff[t];
    bm[b] /= len;
  }
  const double se = sd_of(bm) / std::sqrt(double(batches));
  const double gap = estimate_k_star(draws) - estimate_k_star_indicator(draws);
  EXPECT_LT(std::abs(gap), 3 * se + 1e-12)
      << "forms: " << estimate_k_star(draws) << " vs " << estimate_k_star_indicator(draws);
}
