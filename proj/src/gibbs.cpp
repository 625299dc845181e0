#include "pyramid/gibbs.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "pyramid/polya_gamma.hpp"

namespace pyramid {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kSubjectChunk = 64;

enum Block : std::uint64_t {
  kBlockW = 1,
  kBlockBeta = 2,
  kBlockG = 3,
  kBlockSigma = 4,
  kBlockTauEta = 5,
  kBlockAZ = 6,
  kBlockCsp = 7,
  kBlockGamma = 8,
};

// log P(y = y0 | logits l) with the last category at logit 0.
double log_cat_prob(const double* l, int dm1, int y0) {
  double m = 0.0;
  for (int c = 0; c < dm1; ++c) m = std::max(m, l[c]);
  double s = std::exp(-m);
  for (int c = 0; c < dm1; ++c) s += std::exp(l[c] - m);
  const double num = y0 < dm1 ? l[y0] : 0.0;
  return num - m - std::log(s);
}

// Below this magnitude exp() of a predictor cannot overflow, so the cached
// exponentials can be used without max-subtraction.
constexpr double kSafeLogit = 300.0;

void set_lin(ChainState& s, std::size_t at, double v) {
  s.lin[at] = v;
  s.elin[at] = std::exp(v);
}

void refresh_row(ChainState& s, int i, int j) {
  for (int c = 0; c < s.d - 1; ++c) set_lin(s, s.idx(i, j, c), linear_predictor(s, i, j, c));
}

bool row_is_safe(const ChainState& s, std::size_t at) {
  for (int c = 0; c < s.d - 1; ++c)
    if (std::abs(s.lin[at + c]) > kSafeLogit) return false;
  return true;
}

// log p(y | a or g switched on) - log p(y | switched off) for the row starting
// at `at`; `b` holds the d-1 coefficients, `eb`/`emb` their exp(+-b), `cur`
// whether the coefficients are currently included in the predictors.
double flip_log_ratio(const ChainState& s, std::size_t at, int y0, const double* b,
                      const double* eb, const double* emb, int cur) {
  const int dm1 = s.d - 1;
  if (row_is_safe(s, at)) {
    double s0 = 1.0, s1 = 1.0;
    for (int c = 0; c < dm1; ++c) {
      const double e0 = cur ? s.elin[at + c] * emb[c] : s.elin[at + c];
      s0 += e0;
      s1 += e0 * eb[c];
    }
    return (y0 < dm1 ? b[y0] : 0.0) - std::log(s1 / s0);
  }
  double l0[64], l1[64];
  for (int c = 0; c < dm1; ++c) {
    l0[c] = s.lin[at + c] - cur * b[c];
    l1[c] = l0[c] + b[c];
  }
  return log_cat_prob(l1, dm1, y0) - log_cat_prob(l0, dm1, y0);
}

int constant_categories(const Dataset& data) {
  if (data.cardinalities.empty()) throw InputError("dataset has no columns");
  const int d = data.cardinalities[0];
  for (std::size_t j = 1; j < data.cardinalities.size(); ++j)
    if (data.cardinalities[j] != d)
      throw InputError("sampler needs the same number of categories in every column; column " +
                       std::to_string(j + 1) + " differs");
  if (d < 2) throw InputError("need at least 2 categories");
  if (d > 65) throw InputError("sampler supports at most 65 categories");
  return d;
}

void check_state_matches(const ChainState& s, const Dataset& data) {
  if (data.n() != s.n || data.p() != s.p) throw InputError("state and data dimensions differ");
}

// log multivariate t density at x (dimension q), location 0, scale s*I.
double log_mvt(double sq_norm, int q, double nu, double scale) {
  if (q == 0) return 0.0;
  return std::lgamma(0.5 * (nu + q)) - std::lgamma(0.5 * nu) -
         0.5 * q * std::log(nu * std::numbers::pi * scale) -
         0.5 * (nu + q) * std::log1p(sq_norm / (nu * scale));
}

double log_mvn_iso(double sq_norm, int q, double var) {
  if (q == 0) return 0.0;
  return -0.5 * q * std::log(2.0 * std::numbers::pi * var) - 0.5 * sq_norm / var;
}

// Stick weights w_l = v_l prod_{m<l} (1 - v_m), in log space.
std::vector<double> log_stick_weights(const Vector& v) {
  std::vector<double> lw(v.size());
  double acc = 0.0;
  for (int l = 0; l < v.size(); ++l) {
    lw[l] = std::log(v(l)) + acc;
    acc += std::log1p(-std::min(v(l), 1.0));
  }
  return lw;
}

void recompute_pi(CspState& csp) {
  const int K = static_cast<int>(csp.v.size());
  double acc = 0.0, rest = 1.0;
  for (int l = 0; l < K; ++l) {
    acc += csp.v(l) * rest;
    rest *= 1.0 - csp.v(l);
    csp.pi(l) = std::min(acc, 1.0);
  }
  if (K > 0) csp.pi(K - 1) = 1.0;
}

void draw_sigma_column(ChainState& s, const SamplerConfig& cfg, int c, int k, Rng& rng) {
  double cnt = 0.0, ss = 0.0;
  for (int j = 0; j < s.p; ++j)
    if (s.G(j, k)) {
      cnt += 1.0;
      ss += s.beta[c](j, k) * s.beta[c](j, k);
    }
  s.sigma2(c, k) =
      inv_gamma_draw(rng, cfg.hyper.a_sigma + 0.5 * cnt, cfg.hyper.b_sigma + 0.5 * ss);
}

// Draws the active block of (j, c) and refreshes the affected predictors.
void draw_beta_block(ChainState& s, const Dataset& data, const SamplerConfig& cfg, int j, int c,
                     Rng& rng) {
  const BetaConditional bc = beta_full_conditional(s, data, cfg, j, c);
  const int m = static_cast<int>(bc.mean.size());
  Vector x(m);
  if (!cfg.positivity) {
    Eigen::LLT<Matrix> llt(bc.precision);
    if (llt.info() != Eigen::Success)
      throw NumericalError("coefficient precision not positive definite at row " +
                           std::to_string(j + 1));
    Vector e(m);
    for (int r = 0; r < m; ++r) e(r) = standard_normal(rng);
    x = bc.mean + llt.matrixU().solve(e);
  } else {
    x(0) = s.beta0(j, c);
    for (int r = 1; r < m; ++r) x(r) = s.beta[c](j, bc.active[r - 1]);
    for (int r = 0; r < m; ++r) {
      const double qrr = bc.precision(r, r);
      double shift = 0.0;
      for (int l = 0; l < m; ++l)
        if (l != r) shift += bc.precision(r, l) * (x(l) - bc.mean(l));
      const double cm = bc.mean(r) - shift / qrr;
      const double sd = 1.0 / std::sqrt(qrr);
      x(r) = r == 0 ? cm + sd * standard_normal(rng) : truncated_normal_positive(rng, cm, sd);
    }
  }
  s.beta0(j, c) = x(0);
  for (int r = 1; r < m; ++r) s.beta[c](j, bc.active[r - 1]) = x(r);
  const double v0 = cfg.hyper.v0;
  for (int k = 0; k < s.K; ++k)
    if (!s.G(j, k)) s.beta[c](j, k) = v0 * standard_normal(rng);
  for (int i = 0; i < s.n; ++i) set_lin(s, s.idx(i, j, c), linear_predictor(s, i, j, c));
}

void draw_w_cell(ChainState& s, int j, int c, Rng& rng) {
  for (int i = 0; i < s.n; ++i) s.W[s.idx(i, j, c)] = sample_pg(compute_phi_C(s, i, j, c).phi, rng);
}

// Runs body(t) for t in [0, count) on up to `jobs` threads. Exceptions are
// rethrown on the calling thread (first one wins).
template <class F>
void parallel_for(int count, int jobs, F&& body) {
  std::exception_ptr err;
  std::atomic<bool> failed{false};
#pragma omp parallel for num_threads(std::max(jobs, 1)) schedule(static)
  for (int t = 0; t < count; ++t) {
    if (failed.load()) continue;
    try {
      body(t);
    } catch (...) {
#pragma omp critical(pyramid_parallel_error)
      {
        if (!err) err = std::current_exception();
      }
      failed = true;
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace

std::string to_string(PriorMode m) { return m == PriorMode::csp ? "csp" : "fixed_K"; }

PriorMode parse_prior_mode(const std::string& s) {
  if (s == "csp") return PriorMode::csp;
  if (s == "fixed_K" || s == "fixed") return PriorMode::fixed_K;
  throw InputError("unknown mode '" + s + "' (expected csp or fixed_K)");
}

void SamplerConfig::validate() const {
  if (K_upper < (mode == PriorMode::csp ? 1 : 0)) throw InputError("K_upper too small");
  if (B < 1) throw InputError("B must be at least 1");
  if (iterations < 1) throw InputError("iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations) throw InputError("need 0 <= burn_in < iterations");
  if (thin < 1) throw InputError("thin must be at least 1");
  if (!(hyper.v0 > 0)) throw InputError("v0 must be positive");
  if (!(hyper.theta_inf > 0)) throw InputError("theta_inf must be positive");
  if (!(hyper.sigma0_sq > 0)) throw InputError("sigma0_sq must be positive");
  if (!(hyper.a_sigma > 0) || !(hyper.b_sigma > 0)) throw InputError("a_sigma, b_sigma must be positive");
  if (!(hyper.alpha > 0)) throw InputError("alpha must be positive");
  if (jobs < 1) throw InputError("jobs must be at least 1");
}

IntMatrix ChainState::Z_one_hot() const {
  IntMatrix out = IntMatrix::Zero(n, B);
  for (int i = 0; i < n; ++i) out(i, z[i]) = 1;
  return out;
}

double linear_predictor(const ChainState& s, int i, int j, int c) {
  double v = s.beta0(j, c);
  for (int k = 0; k < s.K; ++k)
    if (s.G(j, k) && s.A(i, k)) v += s.beta[c](j, k);
  return v;
}

void refresh_linear_predictors(ChainState& s) {
  s.lin.assign(static_cast<std::size_t>(s.n) * s.p * (s.d - 1), 0.0);
  s.elin.assign(s.lin.size(), 1.0);
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.p; ++j) refresh_row(s, i, j);
}

ChainState initialize_chain(const Dataset& data, const SamplerConfig& cfg) {
  cfg.validate();
  ChainState s;
  s.n = data.n();
  s.p = data.p();
  s.d = constant_categories(data);
  s.K = cfg.K_upper;
  s.B = cfg.B;
  const int dm1 = s.d - 1;
  const auto& h = cfg.hyper;
  Rng rng = make_stream(cfg.seed, {0xfeedULL});

  s.beta0.resize(s.p, dm1);
  for (int j = 0; j < s.p; ++j)
    for (int c = 0; c < dm1; ++c)
      s.beta0(j, c) = h.mu0 + std::sqrt(h.sigma0_sq) * standard_normal(rng);
  s.G.resize(s.p, s.K);
  for (int j = 0; j < s.p; ++j)
    for (int k = 0; k < s.K; ++k) s.G(j, k) = bernoulli_draw(rng, 0.5);
  s.beta.assign(dm1, Matrix::Zero(s.p, s.K));
  for (int c = 0; c < dm1; ++c)
    for (int j = 0; j < s.p; ++j)
      for (int k = 0; k < s.K; ++k) {
        const double e = standard_normal(rng);
        if (s.G(j, k))
          s.beta[c](j, k) = cfg.positivity ? std::abs(e) : e;
        else
          s.beta[c](j, k) = h.v0 * e;
      }
  s.gamma = beta_draw(rng, 1.0, 1.0);

  s.sigma2.resize(dm1, s.K);
  if (cfg.mode == PriorMode::csp) {
    CspState csp;
    csp.v.resize(s.K);
    csp.pi.resize(s.K);
    for (int l = 0; l < s.K; ++l) csp.v(l) = l + 1 < s.K ? beta_draw(rng, 1.0, h.alpha) : 1.0;
    csp.zind.assign(s.K, s.K);
    recompute_pi(csp);
    for (int k = 0; k < s.K; ++k)
      for (int c = 0; c < dm1; ++c)
        s.sigma2(c, k) =
            csp.zind[k] > k + 1 ? inv_gamma_draw(rng, h.a_sigma, h.b_sigma) : h.theta_inf;
    s.csp = std::move(csp);
  } else {
    for (int k = 0; k < s.K; ++k)
      for (int c = 0; c < dm1; ++c) s.sigma2(c, k) = inv_gamma_draw(rng, h.a_sigma, h.b_sigma);
  }

  s.tau = dirichlet_draw(rng, Vector::Ones(s.B));
  s.eta.resize(s.K, s.B);
  for (int k = 0; k < s.K; ++k)
    for (int b = 0; b < s.B; ++b) s.eta(k, b) = beta_draw(rng, 1.0, 1.0);
  s.A.resize(s.n, s.K);
  for (int i = 0; i < s.n; ++i)
    for (int k = 0; k < s.K; ++k) s.A(i, k) = bernoulli_draw(rng, 0.5);
  s.z.resize(s.n);
  for (int i = 0; i < s.n; ++i)
    s.z[i] = categorical_draw(rng, Vector::Constant(s.B, 1.0 / s.B));
  s.W.assign(static_cast<std::size_t>(s.n) * s.p * dm1, 0.25);
  refresh_linear_predictors(s);
  return s;
}

PhiC compute_phi_C(const ChainState& s, int i, int j, int c) {
  const std::size_t at = s.idx(i, j, 0);
  const double* l = &s.lin[at];
  if (row_is_safe(s, at)) {
    double sum = 1.0;
    for (int q = 0; q < s.d - 1; ++q)
      if (q != c) sum += s.elin[at + q];
    const double C = std::log(sum);
    return {l[c] - C, C};
  }
  double m = 0.0;  // baseline logit
  for (int q = 0; q < s.d - 1; ++q)
    if (q != c) m = std::max(m, l[q]);
  double sum = std::exp(-m);
  for (int q = 0; q < s.d - 1; ++q)
    if (q != c) sum += std::exp(l[q] - m);
  const double C = m + std::log(sum);
  return {l[c] - C, C};
}

BetaConditional beta_full_conditional(const ChainState& s, const Dataset& data,
                                      const SamplerConfig& cfg, int j, int c) {
  BetaConditional out;
  for (int k = 0; k < s.K; ++k)
    if (s.G(j, k)) out.active.push_back(k);
  const int m = 1 + static_cast<int>(out.active.size());
  Matrix Q = Matrix::Zero(m, m);
  Vector b = Vector::Zero(m);
  std::vector<double> x(m);
  for (int i = 0; i < s.n; ++i) {
    const double w = s.W[s.idx(i, j, c)];
    const double C = compute_phi_C(s, i, j, c).C;
    const double kappa = (data.values(i, j) - 1 == c ? 1.0 : 0.0) - 0.5;
    x[0] = 1.0;
    for (int r = 1; r < m; ++r) x[r] = s.A(i, out.active[r - 1]);
    const double rhs = kappa + w * C;
    for (int r = 0; r < m; ++r) {
      if (x[r] == 0.0) continue;
      b(r) += rhs;
      for (int q = 0; q <= r; ++q)
        if (x[q] != 0.0) Q(r, q) += w;
    }
  }
  for (int r = 0; r < m; ++r)
    for (int q = r + 1; q < m; ++q) Q(r, q) = Q(q, r);
  const auto& h = cfg.hyper;
  Q(0, 0) += 1.0 / h.sigma0_sq;
  b(0) += h.mu0 / h.sigma0_sq;
  for (int r = 1; r < m; ++r) Q(r, r) += 1.0 / s.sigma2(c, out.active[r - 1]);
  Eigen::LLT<Matrix> llt(Q);
  if (llt.info() != Eigen::Success)
    throw NumericalError("coefficient precision not positive definite at row " +
                         std::to_string(j + 1));
  out.mean = llt.solve(b);
  out.precision = std::move(Q);
  return out;
}

double g_log_odds(const ChainState& s, const Dataset& data, const SamplerConfig& cfg, int j, int k) {
  if (s.gamma >= 1.0) return kInf;
  if (s.gamma <= 0.0) return -kInf;
  const int dm1 = s.d - 1;
  double lo = std::log(s.gamma) - std::log1p(-s.gamma);
  const double v0sq = cfg.hyper.v0 * cfg.hyper.v0;
  for (int c = 0; c < dm1; ++c) {
    const double b = s.beta[c](j, k);
    if (cfg.positivity && !(b > 0.0)) return -kInf;
    lo += log_normal_pdf(b, 0.0, s.sigma2(c, k)) - log_normal_pdf(b, 0.0, v0sq);
  }
  // Truncated slab: the normal density doubles on (0, inf).
  if (cfg.positivity) lo += dm1 * std::numbers::ln2;
  const int cur = s.G(j, k);
  double b[64], eb[64], emb[64];
  for (int c = 0; c < dm1; ++c) {
    b[c] = s.beta[c](j, k);
    eb[c] = std::exp(b[c]);
    emb[c] = std::exp(-b[c]);
  }
  for (int i = 0; i < s.n; ++i) {
    if (!s.A(i, k)) continue;
    lo += flip_log_ratio(s, s.idx(i, j, 0), data.values(i, j) - 1, b, eb, emb, cur);
  }
  return lo;
}

double a_log_odds(const ChainState& s, const Dataset& data, int i, int k) {
  const double e = s.eta(k, s.z[i]);
  double lo = std::log(e) - std::log1p(-e);
  const int dm1 = s.d - 1;
  const int cur = s.A(i, k);
  double b[64], eb[64], emb[64];
  for (int j = 0; j < s.p; ++j) {
    if (!s.G(j, k)) continue;
    for (int c = 0; c < dm1; ++c) {
      b[c] = s.beta[c](j, k);
      eb[c] = std::exp(b[c]);
      emb[c] = std::exp(-b[c]);
    }
    lo += flip_log_ratio(s, s.idx(i, j, 0), data.values(i, j) - 1, b, eb, emb, cur);
  }
  return lo;
}

std::vector<double> csp_log_weights(const ChainState& s, const SamplerConfig& cfg, int k) {
  if (!s.csp) throw UsageError("stick-breaking weights need the csp state");
  const auto& h = cfg.hyper;
  std::vector<double> lw = log_stick_weights(s.csp->v);
  int q = 0;
  for (int j = 0; j < s.p; ++j) q += s.G(j, k);
  double spike = 0.0, slab = 0.0;
  for (int c = 0; c < s.d - 1; ++c) {
    double sq = 0.0;
    for (int j = 0; j < s.p; ++j)
      if (s.G(j, k)) sq += s.beta[c](j, k) * s.beta[c](j, k);
    spike += log_mvn_iso(sq, q, h.theta_inf);
    slab += log_mvt(sq, q, 2.0 * h.a_sigma, h.b_sigma / h.a_sigma);
  }
  for (int l = 0; l < s.K; ++l) lw[l] += l <= k ? spike : slab;
  return lw;
}

void update_w(ChainState& s, const Dataset& data, const SweepContext& ctx) {
  check_state_matches(s, data);
  const int dm1 = s.d - 1;
  parallel_for(s.p * dm1, ctx.jobs, [&](int t) {
    Rng rng = ctx.stream(kBlockW, t);
    draw_w_cell(s, t / dm1, t % dm1, rng);
  });
}

void update_beta(ChainState& s, const Dataset& data, const SamplerConfig& cfg,
                 const SweepContext& ctx) {
  check_state_matches(s, data);
  const int dm1 = s.d - 1;
  parallel_for(s.p, ctx.jobs, [&](int j) {
    for (int c = 0; c < dm1; ++c) {
      Rng rng = ctx.stream(kBlockBeta, static_cast<std::uint64_t>(j) * dm1 + c);
      draw_beta_block(s, data, cfg, j, c, rng);
    }
  });
}

void update_w_beta(ChainState& s, const Dataset& data, const SamplerConfig& cfg,
                   const SweepContext& ctx) {
  check_state_matches(s, data);
  const int dm1 = s.d - 1;
  parallel_for(s.p, ctx.jobs, [&](int j) {
    for (int c = 0; c < dm1; ++c) {
      const std::uint64_t t = static_cast<std::uint64_t>(j) * dm1 + c;
      Rng rw = ctx.stream(kBlockW, t);
      draw_w_cell(s, j, c, rw);
      Rng rb = ctx.stream(kBlockBeta, t);
      draw_beta_block(s, data, cfg, j, c, rb);
    }
  });
}

void update_g(ChainState& s, const Dataset& data, const SamplerConfig& cfg,
              const SweepContext& ctx) {
  check_state_matches(s, data);
  parallel_for(s.p, ctx.jobs, [&](int j) {
    Rng rng = ctx.stream(kBlockG, j);
    for (int k = 0; k < s.K; ++k) {
      const int g = bernoulli_logit_draw(rng, g_log_odds(s, data, cfg, j, k)) ? 1 : 0;
      if (g == s.G(j, k)) continue;
      s.G(j, k) = g;
      for (int i = 0; i < s.n; ++i)
        if (s.A(i, k)) refresh_row(s, i, j);
    }
  });
  Rng rng = ctx.stream(kBlockGamma, 0);
  const double total = s.G.sum();
  s.gamma = beta_draw(rng, 1.0 + total, 1.0 + static_cast<double>(s.p) * s.K - total);
}

void update_sigma_fixed_k(ChainState& s, const SamplerConfig& cfg, const SweepContext& ctx) {
  for (int c = 0; c < s.d - 1; ++c)
    for (int k = 0; k < s.K; ++k) {
      Rng rng = ctx.stream(kBlockSigma, static_cast<std::uint64_t>(c) * s.K + k);
      draw_sigma_column(s, cfg, c, k, rng);
    }
}

void update_tau_eta(ChainState& s, const SweepContext& ctx) {
  Vector counts = Vector::Ones(s.B);
  for (int i = 0; i < s.n; ++i) counts(s.z[i]) += 1.0;
  Rng rt = ctx.stream(kBlockTauEta, 0);
  s.tau = dirichlet_draw(rt, counts);
  for (int k = 0; k < s.K; ++k) {
    std::vector<double> ones(s.B, 0.0), zeros(s.B, 0.0);
    for (int i = 0; i < s.n; ++i) (s.A(i, k) ? ones : zeros)[s.z[i]] += 1.0;
    for (int b = 0; b < s.B; ++b) {
      Rng rng = ctx.stream(kBlockTauEta, 1 + static_cast<std::uint64_t>(k) * s.B + b);
      s.eta(k, b) = beta_draw(rng, 1.0 + ones[b], 1.0 + zeros[b]);
    }
  }
}

void update_A_Z(ChainState& s, const Dataset& data, const SweepContext& ctx) {
  check_state_matches(s, data);
  Matrix log_eta = s.eta.array().log();
  Matrix log_1m_eta = (1.0 - s.eta.array()).log();
  Vector log_tau = s.tau.array().log();
  // Subjects share a substream per fixed-size chunk; chunks are the parallel
  // unit, so results do not depend on the thread count.
  const int chunks = (s.n + kSubjectChunk - 1) / kSubjectChunk;
  parallel_for(chunks, ctx.jobs, [&](int ch) {
    Rng rng = ctx.stream(kBlockAZ, ch);
    std::vector<double> lw(s.B);
    const int end = std::min(s.n, (ch + 1) * kSubjectChunk);
    for (int i = ch * kSubjectChunk; i < end; ++i) {
      for (int k = 0; k < s.K; ++k) {
        const int a = bernoulli_logit_draw(rng, a_log_odds(s, data, i, k)) ? 1 : 0;
        if (a == s.A(i, k)) continue;
        s.A(i, k) = a;
        for (int j = 0; j < s.p; ++j)
          if (s.G(j, k)) refresh_row(s, i, j);
      }
      for (int b = 0; b < s.B; ++b) {
        lw[b] = log_tau(b);
        for (int k = 0; k < s.K; ++k) lw[b] += s.A(i, k) ? log_eta(k, b) : log_1m_eta(k, b);
      }
      s.z[i] = categorical_log_draw(rng, lw);
    }
  });
}

void update_csp(ChainState& s, const SamplerConfig& cfg, const SweepContext& ctx) {
  if (!s.csp) throw UsageError("update_csp called on a fixed-K chain");
  CspState& csp = *s.csp;
  for (int k = 0; k < s.K; ++k) {
    Rng rng = ctx.stream(kBlockCsp, k);
    csp.zind[k] = categorical_log_draw(rng, csp_log_weights(s, cfg, k)) + 1;
  }
  for (int l = 0; l + 1 < s.K; ++l) {
    double at = 0.0, above = 0.0;
    for (int k = 0; k < s.K; ++k) {
      if (csp.zind[k] == l + 1) at += 1.0;
      if (csp.zind[k] > l + 1) above += 1.0;
    }
    Rng rng = ctx.stream(kBlockCsp, s.K + l);
    csp.v(l) = beta_draw(rng, 1.0 + at, cfg.hyper.alpha + above);
  }
  csp.v(s.K - 1) = 1.0;
  recompute_pi(csp);
  for (int c = 0; c < s.d - 1; ++c)
    for (int k = 0; k < s.K; ++k) {
      if (csp.zind[k] > k + 1) {
        Rng rng = ctx.stream(kBlockCsp, 2 * s.K + static_cast<std::uint64_t>(c) * s.K + k);
        draw_sigma_column(s, cfg, c, k, rng);
      } else {
        s.sigma2(c, k) = cfg.hyper.theta_inf;
      }
    }
}

void sweep(ChainState& s, const Dataset& data, const SamplerConfig& cfg, const SweepContext& ctx) {
  const bool fresh = cfg.recompute_predictors;
  update_w_beta(s, data, cfg, ctx);
  if (fresh) refresh_linear_predictors(s);
  update_g(s, data, cfg, ctx);
  if (fresh) refresh_linear_predictors(s);
  if (cfg.mode == PriorMode::csp)
    update_csp(s, cfg, ctx);
  else
    update_sigma_fixed_k(s, cfg, ctx);
  update_tau_eta(s, ctx);
  update_A_Z(s, data, ctx);
  if (fresh) refresh_linear_predictors(s);
}

double log_likelihood(const ChainState& s, const Dataset& data) {
  double ll = 0.0;
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.p; ++j)
      ll += log_cat_prob(&s.lin[s.idx(i, j, 0)], s.d - 1, data.values(i, j) - 1);
  return ll;
}

PosteriorDraws run_chain(const Dataset& data, const SamplerConfig& cfg, const ProgressFn& progress) {
  ChainState s = initialize_chain(data, cfg);
  PosteriorDraws out;
  out.n = s.n;
  out.p = s.p;
  out.d = s.d;
  out.K = s.K;
  out.B = s.B;
  out.mode = cfg.mode;
  out.iterations = cfg.iterations;
  out.burn_in = cfg.burn_in;
  out.thin = cfg.thin;
  out.A_mean = Matrix::Zero(s.n, s.K);
  out.Z_freq = Matrix::Zero(s.n, s.B);
  const int expected = cfg.retained_draws();
  out.G.reserve(expected);
  out.log_lik.reserve(cfg.iterations);

  for (int t = 1; t <= cfg.iterations; ++t) {
    sweep(s, data, cfg, SweepContext{cfg.seed, static_cast<std::uint64_t>(t), cfg.jobs});
    const double ll = log_likelihood(s, data);
    if (!std::isfinite(ll))
      throw NumericalError("non-finite log-likelihood at iteration " + std::to_string(t));
    out.log_lik.push_back(ll);
    out.edge_count.push_back(s.G.sum());
    int active = 0;
    for (int k = 0; k < s.K; ++k) {
      if (s.csp)
        active += s.csp->zind[k] > k + 1;
      else
        active += s.G.col(k).any();
    }
    out.active_columns.push_back(active);
    if (progress) progress(t, ll);

    if (t <= cfg.burn_in || (t - cfg.burn_in) % cfg.thin != 0) continue;
    out.G.push_back(s.G);
    out.beta0.push_back(s.beta0);
    out.beta.push_back(s.beta);
    out.sigma2.push_back(s.sigma2);
    out.gamma.push_back(s.gamma);
    out.tau.push_back(s.tau);
    out.eta.push_back(s.eta);
    if (s.csp) {
      out.csp_pi.push_back(s.csp->pi);
      out.csp_zind.push_back(s.csp->zind);
    }
    if (cfg.keep_local_draws) {
      out.A.push_back(s.A);
      out.Z.push_back(s.z);
    }
    out.A_mean += s.A.cast<double>();
    for (int i = 0; i < s.n; ++i) out.Z_freq(i, s.z[i]) += 1.0;
  }
  if (out.size() > 0) {
    out.A_mean /= out.size();
    out.Z_freq /= out.size();
  }
  return out;
}

double estimate_k_star(const PosteriorDraws& draws) {
  if (draws.csp_pi.empty()) throw UsageError("effective K needs retained stick-breaking draws");
  double acc = 0.0;
  for (const auto& pi : draws.csp_pi) acc += (1.0 - pi.array()).sum();
  return acc / draws.csp_pi.size();
}

double estimate_k_star_indicator(const PosteriorDraws& draws) {
  if (draws.csp_zind.empty()) throw UsageError("effective K needs retained stick-breaking draws");
  double acc = 0.0;
  for (const auto& zind : draws.csp_zind)
    for (std::size_t k = 0; k < zind.size(); ++k) acc += zind[k] > static_cast<int>(k) + 1;
  return acc / draws.csp_zind.size();
}

}  // namespace pyramid
