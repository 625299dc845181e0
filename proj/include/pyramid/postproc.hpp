#pragma once

#include <optional>
#include <vector>

#include "pyramid/core.hpp"
#include "pyramid/gibbs.hpp"

namespace pyramid {

/// perm[k] is the estimate column placed at reference position k.
using Permutation = std::vector<int>;

/// Column permutation of `estimate` minimizing the Hamming distance to
/// `reference`. Exhaustive for K <= 8, assignment-based above; ties go to the
/// lexicographically smallest permutation either way.
Permutation align_columns(const IntMatrix& estimate, const IntMatrix& reference);
IntMatrix permute_columns(const IntMatrix& m, const Permutation& perm);
Matrix permute_columns(const Matrix& m, const Permutation& perm);
Matrix permute_rows(const Matrix& m, const Permutation& perm);

/// Minimum-cost assignment (rows to columns) of a square cost matrix.
std::vector<int> hungarian(const Matrix& cost);

/// 1{value > 1/2}; exactly 1/2 maps to 0.
IntMatrix threshold_half(const Matrix& freq);

struct ModeEstimates {
  IntMatrix G_hat;  // p x K
  IntMatrix A_hat;  // n x K
  IntMatrix Z_hat;  // n x B one-hot
};
ModeEstimates posterior_mode_estimates(const PosteriorDraws& draws);

struct RecoveryErrors {
  double matrix = 0.0;
  double row = 0.0;
  double entry = 0.0;
};
RecoveryErrors recovery_errors(const IntMatrix& G_hat, const IntMatrix& G_true);

struct PosteriorMeans {
  Matrix beta0;              // p x (d-1)
  std::vector<Matrix> beta;  // d-1 slices p x K
  Matrix sigma2;             // (d-1) x K
  Matrix eta;                // K x B
  Vector tau;                // B
  Matrix G_freq;             // p x K
};
PosteriorMeans posterior_means(const PosteriorDraws& draws);

double rmse(const Matrix& estimate, const Matrix& truth);
/// RMSE over entries where mask is nonzero; 0 when the mask is empty.
double rmse_masked(const Matrix& estimate, const Matrix& truth, const IntMatrix& mask);

struct RmseReport {
  double beta_active = 0.0;  // true edges only
  double beta_all = 0.0;
  double beta0 = 0.0;
  double eta = 0.0;
};
/// `means` must already be restricted and aligned to the truth's columns.
RmseReport rmse_blocks(const PosteriorMeans& means, const TwoLayerParams& truth,
                       const Permutation& class_perm);

/// Indices of the `keep` columns with the largest posterior-mean slab variance
/// averaged over categories, in increasing index order.
std::vector<int> retain_columns(const PosteriorMeans& means, int keep);
PosteriorMeans select_columns(const PosteriorMeans& means, const std::vector<int>& cols);

/// Deep-class permutation minimizing the RMSE between eta columns.
Permutation align_classes(const Matrix& eta_hat, const Matrix& eta_true);

struct EvalReport {
  RecoveryErrors g_error;
  RmseReport rmse;
  std::optional<double> k_star;
  std::optional<double> k_star_indicator;
  std::vector<int> retained;      // chain columns kept
  Permutation permutation;        // over the retained columns
  Permutation class_permutation;  // deep classes
  IntMatrix G_hat;                // retained and aligned
};
EvalReport evaluate(const PosteriorDraws& draws, const TwoLayerParams& truth);

/// Sample quantile with linear interpolation between order statistics
/// (the usual "type 7" definition).
double quantile(std::vector<double> xs, double q);

struct Summary {
  double mean = 0, median = 0, q25 = 0, q75 = 0, min = 0, max = 0;
};
Summary summarize(const std::vector<double>& xs);

}  // namespace pyramid
