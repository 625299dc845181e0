#include "pyramid/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace pyramid {

namespace {

constexpr int kExhaustiveMaxK = 8;

Matrix hamming_cost(const IntMatrix& est, const IntMatrix& ref) {
  const int K = static_cast<int>(ref.cols());
  Matrix cost(K, K);  // cost(reference col, estimate col)
  for (int a = 0; a < K; ++a)
    for (int b = 0; b < K; ++b) cost(a, b) = (ref.col(a).array() != est.col(b).array()).count();
  return cost;
}

double assignment_cost(const Matrix& cost, const std::vector<int>& perm) {
  double s = 0.0;
  for (std::size_t k = 0; k < perm.size(); ++k) s += cost(static_cast<int>(k), perm[k]);
  return s;
}

}  // namespace

std::vector<int> hungarian(const Matrix& cost) {
  // Potentials formulation, O(K^3). Rows and columns are 1-based internally.
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw InputError("assignment needs a square cost matrix");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> out(n);
  for (int j = 1; j <= n; ++j) out[match[j] - 1] = j - 1;
  return out;
}

Permutation align_columns(const IntMatrix& estimate, const IntMatrix& reference) {
  if (estimate.rows() != reference.rows() || estimate.cols() != reference.cols())
    throw InputError("cannot align matrices of different shapes");
  const int K = static_cast<int>(reference.cols());
  const Matrix cost = hamming_cost(estimate, reference);
  Permutation perm(K);
  std::iota(perm.begin(), perm.end(), 0);
  if (K <= kExhaustiveMaxK) {
    Permutation best = perm;
    double best_cost = assignment_cost(cost, perm);
    while (std::next_permutation(perm.begin(), perm.end())) {
      const double c = assignment_cost(cost, perm);
      if (c < best_cost) {
        best_cost = c;
        best = perm;
      }
    }
    return best;
  }
  // Fix positions left to right, taking the smallest column that still admits
  // an optimal completion.
  const double opt = assignment_cost(cost, hungarian(cost));
  std::vector<int> free_cols(K);
  std::iota(free_cols.begin(), free_cols.end(), 0);
  double fixed_cost = 0.0;
  for (int k = 0; k < K; ++k) {
    const int rest = K - k - 1;
    for (std::size_t t = 0; t < free_cols.size(); ++t) {
      const int col = free_cols[t];
      double total = fixed_cost + cost(k, col);
      if (rest > 0) {
        Matrix sub(rest, rest);
        std::vector<int> cols;
        for (int c : free_cols)
          if (c != col) cols.push_back(c);
        for (int r = 0; r < rest; ++r)
          for (int c = 0; c < rest; ++c) sub(r, c) = cost(k + 1 + r, cols[c]);
        total += assignment_cost(sub, hungarian(sub));
      }
      if (total <= opt + 1e-9) {
        perm[k] = col;
        fixed_cost += cost(k, col);
        free_cols.erase(free_cols.begin() + static_cast<long>(t));
        break;
      }
    }
  }
  return perm;
}

IntMatrix permute_columns(const IntMatrix& m, const Permutation& perm) {
  IntMatrix out(m.rows(), static_cast<Eigen::Index>(perm.size()));
  for (std::size_t k = 0; k < perm.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(perm[k]);
  return out;
}

Matrix permute_columns(const Matrix& m, const Permutation& perm) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(perm.size()));
  for (std::size_t k = 0; k < perm.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(perm[k]);
  return out;
}

Matrix permute_rows(const Matrix& m, const Permutation& perm) {
  Matrix out(static_cast<Eigen::Index>(perm.size()), m.cols());
  for (std::size_t k = 0; k < perm.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(perm[k]);
  return out;
}

IntMatrix threshold_half(const Matrix& freq) {
  return (freq.array() > 0.5).cast<int>();
}

ModeEstimates posterior_mode_estimates(const PosteriorDraws& draws) {
  if (draws.size() == 0) throw InputError("no retained draws");
  Matrix gsum = Matrix::Zero(draws.p, draws.K);
  for (const auto& g : draws.G) gsum += g.cast<double>();
  ModeEstimates out;
  out.G_hat = threshold_half(gsum / draws.size());
  out.A_hat = threshold_half(draws.A_mean);
  out.Z_hat = IntMatrix::Zero(draws.n, draws.B);
  for (int i = 0; i < draws.n; ++i) {
    Eigen::Index best;
    draws.Z_freq.row(i).maxCoeff(&best);  // first maximum on ties
    out.Z_hat(i, best) = 1;
  }
  return out;
}

RecoveryErrors recovery_errors(const IntMatrix& G_hat, const IntMatrix& G_true) {
  if (G_hat.rows() != G_true.rows() || G_hat.cols() != G_true.cols())
    throw InputError("graph estimates differ in shape");
  const auto diff = (G_hat.array() != G_true.array());
  RecoveryErrors e;
  const double p = static_cast<double>(G_true.rows());
  e.entry = G_true.size() ? diff.count() / static_cast<double>(G_true.size()) : 0.0;
  e.row = p > 0 ? diff.rowwise().any().count() / p : 0.0;
  e.matrix = diff.any() ? 1.0 : 0.0;
  return e;
}

PosteriorMeans posterior_means(const PosteriorDraws& draws) {
  const int m = draws.size();
  if (m == 0) throw InputError("no retained draws");
  const int dm1 = draws.d - 1;
  PosteriorMeans out;
  out.beta0 = Matrix::Zero(draws.p, dm1);
  out.beta.assign(dm1, Matrix::Zero(draws.p, draws.K));
  out.sigma2 = Matrix::Zero(dm1, draws.K);
  out.eta = Matrix::Zero(draws.K, draws.B);
  out.tau = Vector::Zero(draws.B);
  out.G_freq = Matrix::Zero(draws.p, draws.K);
  for (int t = 0; t < m; ++t) {
    out.beta0 += draws.beta0[t];
    for (int c = 0; c < dm1; ++c) out.beta[c] += draws.beta[t][c];
    out.sigma2 += draws.sigma2[t];
    out.eta += draws.eta[t];
    out.tau += draws.tau[t];
    out.G_freq += draws.G[t].cast<double>();
  }
  out.beta0 /= m;
  for (auto& b : out.beta) b /= m;
  out.sigma2 /= m;
  out.eta /= m;
  out.tau /= m;
  out.G_freq /= m;
  return out;
}

double rmse(const Matrix& estimate, const Matrix& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw InputError("rmse blocks differ in shape");
  if (truth.size() == 0) return 0.0;
  return std::sqrt((estimate - truth).array().square().mean());
}

double rmse_masked(const Matrix& estimate, const Matrix& truth, const IntMatrix& mask) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols() ||
      mask.rows() != truth.rows() || mask.cols() != truth.cols())
    throw InputError("rmse blocks differ in shape");
  double s = 0.0;
  long cnt = 0;
  for (Eigen::Index i = 0; i < truth.rows(); ++i)
    for (Eigen::Index j = 0; j < truth.cols(); ++j)
      if (mask(i, j)) {
        const double e = estimate(i, j) - truth(i, j);
        s += e * e;
        ++cnt;
      }
  return cnt ? std::sqrt(s / cnt) : 0.0;
}

RmseReport rmse_blocks(const PosteriorMeans& means, const TwoLayerParams& truth,
                       const Permutation& class_perm) {
  const int dm1 = static_cast<int>(truth.beta.size());
  if (static_cast<int>(means.beta.size()) != dm1) throw InputError("category counts differ");
  RmseReport r;
  double act = 0.0, all = 0.0;
  long n_act = 0, n_all = 0;
  for (int c = 0; c < dm1; ++c) {
    const Matrix diff = means.beta[c] - truth.beta[c];
    if (diff.rows() != truth.p() || diff.cols() != truth.K())
      throw InputError("coefficient blocks differ in shape");
    for (int j = 0; j < truth.p(); ++j)
      for (int k = 0; k < truth.K(); ++k) {
        const double e2 = diff(j, k) * diff(j, k);
        all += e2;
        ++n_all;
        if (truth.graph(j, k)) {
          act += e2;
          ++n_act;
        }
      }
  }
  r.beta_active = n_act ? std::sqrt(act / n_act) : 0.0;
  r.beta_all = n_all ? std::sqrt(all / n_all) : 0.0;
  r.beta0 = rmse(means.beta0, truth.beta0);
  r.eta = rmse(permute_columns(means.eta, class_perm), truth.eta);
  return r;
}

std::vector<int> retain_columns(const PosteriorMeans& means, int keep) {
  const int K = static_cast<int>(means.sigma2.cols());
  if (keep > K) throw InputError("cannot retain more columns than the chain has");
  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 0);
  const Vector avg = means.sigma2.colwise().mean();
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return avg(a) > avg(b); });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

PosteriorMeans select_columns(const PosteriorMeans& means, const std::vector<int>& cols) {
  PosteriorMeans out;
  out.beta0 = means.beta0;
  out.tau = means.tau;
  for (const auto& b : means.beta) out.beta.push_back(permute_columns(b, cols));
  out.sigma2 = permute_columns(means.sigma2, cols);
  out.eta = permute_rows(means.eta, cols);
  out.G_freq = permute_columns(means.G_freq, cols);
  return out;
}

Permutation align_classes(const Matrix& eta_hat, const Matrix& eta_true) {
  if (eta_hat.rows() != eta_true.rows() || eta_hat.cols() != eta_true.cols())
    throw InputError("eta blocks differ in shape");
  Permutation perm(eta_true.cols());
  std::iota(perm.begin(), perm.end(), 0);
  Permutation best = perm;
  double best_err = rmse(eta_hat, eta_true);
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double e = rmse(permute_columns(eta_hat, perm), eta_true);
    if (e < best_err) {
      best_err = e;
      best = perm;
    }
  }
  return best;
}

EvalReport evaluate(const PosteriorDraws& draws, const TwoLayerParams& truth) {
  if (draws.p != truth.p()) throw InputError("draws and truth have different p");
  if (draws.d - 1 != static_cast<int>(truth.beta.size()))
    throw InputError("draws and truth have different category counts");
  if (draws.B != truth.B()) throw InputError("draws and truth have different B");
  const int K = truth.K();
  if (draws.K < K)
    throw InputError("chain has " + std::to_string(draws.K) + " columns, truth needs " +
                     std::to_string(K));
  EvalReport rep;
  PosteriorMeans means = posterior_means(draws);
  if (draws.K > K) {
    rep.retained = retain_columns(means, K);
  } else {
    rep.retained.resize(K);
    std::iota(rep.retained.begin(), rep.retained.end(), 0);
  }
  means = select_columns(means, rep.retained);
  const IntMatrix G_kept = threshold_half(means.G_freq);
  rep.permutation = align_columns(G_kept, truth.graph.entries);
  rep.G_hat = permute_columns(G_kept, rep.permutation);
  rep.g_error = recovery_errors(rep.G_hat, truth.graph.entries);

  PosteriorMeans aligned;
  aligned.beta0 = means.beta0;
  aligned.tau = means.tau;
  for (const auto& b : means.beta) aligned.beta.push_back(permute_columns(b, rep.permutation));
  aligned.sigma2 = permute_columns(means.sigma2, rep.permutation);
  aligned.eta = permute_rows(means.eta, rep.permutation);
  aligned.G_freq = permute_columns(means.G_freq, rep.permutation);
  rep.class_permutation = align_classes(aligned.eta, truth.eta);
  rep.rmse = rmse_blocks(aligned, truth, rep.class_permutation);
  if (!draws.csp_pi.empty()) {
    rep.k_star = estimate_k_star(draws);
    rep.k_star_indicator = estimate_k_star_indicator(draws);
  }
  return rep;
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw InputError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw InputError("quantile level must be in [0,1]");
  std::sort(xs.begin(), xs.end());
  const double h = (xs.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - lo) * (xs[hi] - xs[lo]);
}

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  s.median = quantile(xs, 0.5);
  s.q25 = quantile(xs, 0.25);
  s.q75 = quantile(xs, 0.75);
  s.min = *std::min_element(xs.begin(), xs.end());
  s.max = *std::max_element(xs.begin(), xs.end());
  return s;
}

}  // namespace pyramid
