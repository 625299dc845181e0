#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pyramid/core.hpp"
#include "pyramid/rng.hpp"

namespace pyramid {

enum class PriorMode { fixed_K, csp };
std::string to_string(PriorMode m);
PriorMode parse_prior_mode(const std::string& s);  // throws InputError

struct Hyperparams {
  double mu0 = 0.0;        // intercept prior mean
  double sigma0_sq = 4.0;  // intercept prior variance
  double v0 = 0.1;         // pseudo-prior sd for inactive coefficients
  double a_sigma = 2.0;
  double b_sigma = 2.0;
  double alpha = 5.0;       // stick-breaking concentration
  double theta_inf = 0.07;  // spike variance
};

struct SamplerConfig {
  int K_upper = 7;
  int B = 2;
  int iterations = 15000;
  int burn_in = 5000;
  int thin = 5;
  Hyperparams hyper;
  PriorMode mode = PriorMode::csp;
  bool positivity = true;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool keep_local_draws = false;  // store A and Z per retained draw
  bool recompute_predictors = false;  // rebuild the predictor cache every update (testing)

  void validate() const;  // throws InputError
  int retained_draws() const { return (iterations - burn_in) / thin; }
};

struct CspState {
  Vector v;               // K, v(K-1) = 1
  Vector pi;              // K, nondecreasing, pi(K-1) = 1
  std::vector<int> zind;  // K, 1-based stick labels
};

struct ChainState {
  int n = 0, p = 0, d = 2, K = 0, B = 1;
  Matrix beta0;              // p x (d-1)
  std::vector<Matrix> beta;  // d-1 slices, each p x K
  IntMatrix G;               // p x K
  Matrix sigma2;             // (d-1) x K
  double gamma = 0.5;
  Vector tau;                // B
  Matrix eta;                // K x B
  IntMatrix A;               // n x K
  std::vector<int> z;        // n, 0-based class
  std::vector<double> W;     // n*p*(d-1)
  std::optional<CspState> csp;
  // Linear predictors of the non-baseline categories and their exponentials,
  // same layout as W.
  std::vector<double> lin;
  std::vector<double> elin;

  std::size_t idx(int i, int j, int c) const {
    return (static_cast<std::size_t>(i) * p + j) * (d - 1) + c;
  }
  IntMatrix Z_one_hot() const;
};

/// Keys the per-task RNG substreams of one sweep.
struct SweepContext {
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  int jobs = 1;
  Rng stream(std::uint64_t block, std::uint64_t index) const {
    return make_stream(seed, {iteration, block, index});
  }
};

/// Requires constant d across columns.
ChainState initialize_chain(const Dataset& data, const SamplerConfig& cfg);

double linear_predictor(const ChainState& s, int i, int j, int c);  // from scratch
void refresh_linear_predictors(ChainState& s);

struct PhiC {
  double phi;
  double C;
};
/// c is a 0-based non-baseline category.
PhiC compute_phi_C(const ChainState& s, int i, int j, int c);

/// Gaussian full conditional of the active block [intercept, beta_k : g_jk = 1]
/// given W, before any truncation.
struct BetaConditional {
  std::vector<int> active;  // latent columns in the block
  Vector mean;
  Matrix precision;
};
BetaConditional beta_full_conditional(const ChainState& s, const Dataset& data,
                                      const SamplerConfig& cfg, int j, int c);

/// log P(g_jk = 1 | rest) - log P(g_jk = 0 | rest).
double g_log_odds(const ChainState& s, const Dataset& data, const SamplerConfig& cfg, int j, int k);
/// log P(a_ik = 1 | rest) - log P(a_ik = 0 | rest).
double a_log_odds(const ChainState& s, const Dataset& data, int i, int k);
/// Unnormalized log weights over stick labels 1..K for latent column k.
std::vector<double> csp_log_weights(const ChainState& s, const SamplerConfig& cfg, int k);

void update_w(ChainState& s, const Dataset& data, const SweepContext& ctx);
void update_beta(ChainState& s, const Dataset& data, const SamplerConfig& cfg,
                 const SweepContext& ctx);
/// W and beta drawn in turn for each (j, c), so each beta_jc sees auxiliaries
/// built from the current values of the other categories.
void update_w_beta(ChainState& s, const Dataset& data, const SamplerConfig& cfg,
                   const SweepContext& ctx);
void update_g(ChainState& s, const Dataset& data, const SamplerConfig& cfg,
              const SweepContext& ctx);
void update_sigma_fixed_k(ChainState& s, const SamplerConfig& cfg, const SweepContext& ctx);
void update_tau_eta(ChainState& s, const SweepContext& ctx);
void update_A_Z(ChainState& s, const Dataset& data, const SweepContext& ctx);
/// Throws UsageError unless the state carries stick-breaking variables.
void update_csp(ChainState& s, const SamplerConfig& cfg, const SweepContext& ctx);

/// One full Gibbs sweep.
void sweep(ChainState& s, const Dataset& data, const SamplerConfig& cfg, const SweepContext& ctx);

double log_likelihood(const ChainState& s, const Dataset& data);

struct PosteriorDraws {
  int n = 0, p = 0, d = 2, K = 0, B = 1;
  PriorMode mode = PriorMode::fixed_K;
  int iterations = 0, burn_in = 0, thin = 1;

  std::vector<IntMatrix> G;
  std::vector<Matrix> beta0;
  std::vector<std::vector<Matrix>> beta;
  std::vector<Matrix> sigma2;
  std::vector<double> gamma;
  std::vector<Vector> tau;
  std::vector<Matrix> eta;
  std::vector<Vector> csp_pi;
  std::vector<std::vector<int>> csp_zind;
  std::vector<IntMatrix> A;         // only with keep_local_draws
  std::vector<std::vector<int>> Z;  // only with keep_local_draws

  Matrix A_mean;  // n x K, over retained draws
  Matrix Z_freq;  // n x B, over retained draws

  // Per iteration diagnostics.
  std::vector<double> log_lik;
  std::vector<int> edge_count;
  std::vector<int> active_columns;

  int size() const { return static_cast<int>(G.size()); }
};

using ProgressFn = std::function<void(int iteration, double log_lik)>;

/// Throws NumericalError naming the iteration when the log-likelihood stops
/// being finite.
PosteriorDraws run_chain(const Dataset& data, const SamplerConfig& cfg,
                         const ProgressFn& progress = {});

/// Posterior mean of sum_k (1 - pi_k).
double estimate_k_star(const PosteriorDraws& draws);
/// Posterior mean of #{k : zind_k > k}.
double estimate_k_star_indicator(const PosteriorDraws& draws);

}  // namespace pyramid
