#include "pyramid/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pyramid {

namespace {

void check_binary(const IntMatrix& m, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      if (m(r, c) != 0 && m(r, c) != 1) {
        std::ostringstream os;
        os << what << " entry (" << r + 1 << "," << c + 1 << ") is " << m(r, c)
           << ", expected 0 or 1";
        throw InputError(os.str());
      }
}

void check_cap(int K, int cap) {
  if (K > cap || K > 62)
    throw CapacityError("K=" + std::to_string(K) + " exceeds enumeration cap " +
                        std::to_string(cap));
}

}  // namespace

std::vector<int> binary_pattern(std::uint64_t index, int K) {
  std::vector<int> out(K);
  for (int k = 0; k < K; ++k) out[k] = static_cast<int>((index >> (K - 1 - k)) & 1u);
  return out;
}

std::uint64_t pattern_index(std::span<const int> pattern) {
  std::uint64_t idx = 0;
  for (int a : pattern) idx = (idx << 1) | static_cast<std::uint64_t>(a != 0);
  return idx;
}

Dataset Dataset::make(IntMatrix values, std::vector<int> cardinalities) {
  if (values.rows() < 1 || values.cols() < 1) throw InputError("dataset needs n >= 1 and p >= 1");
  if (static_cast<Eigen::Index>(cardinalities.size()) != values.cols())
    throw InputError("cardinality count does not match column count");
  for (std::size_t j = 0; j < cardinalities.size(); ++j)
    if (cardinalities[j] < 2)
      throw InputError("variable " + std::to_string(j + 1) + " has fewer than 2 categories");
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      const int v = values(i, j);
      if (v < 1 || v > cardinalities[j]) {
        std::ostringstream os;
        os << "row " << i + 1 << ", column " << j + 1 << ": value " << v << " outside 1.."
           << cardinalities[j];
        throw InputError(os.str());
      }
    }
  return Dataset{std::move(values), std::move(cardinalities)};
}

Dataset Dataset::infer(IntMatrix values) {
  std::vector<int> cards(values.cols(), 2);
  for (Eigen::Index j = 0; j < values.cols(); ++j)
    if (values.rows() > 0) cards[j] = std::max(2, values.col(j).maxCoeff());
  return make(std::move(values), std::move(cards));
}

GraphicalMatrix GraphicalMatrix::make(IntMatrix entries) {
  check_binary(entries, "graphical matrix");
  return GraphicalMatrix{std::move(entries)};
}

std::vector<int> GraphicalMatrix::empty_columns() const {
  std::vector<int> out;
  for (int k = 0; k < cols(); ++k)
    if (entries.col(k).sum() == 0) out.push_back(k);
  return out;
}

ConstraintMatrix ConstraintMatrix::make(IntMatrix entries) {
  check_binary(entries, "constraint matrix");
  return ConstraintMatrix{std::move(entries), std::nullopt};
}

int ConstraintMatrix::column_of(std::span<const int> label) const {
  if (!column_labels) throw InputError("constraint matrix has no column labels");
  for (std::size_t h = 0; h < column_labels->size(); ++h) {
    const auto& l = (*column_labels)[h];
    if (std::equal(l.begin(), l.end(), label.begin(), label.end())) return static_cast<int>(h);
  }
  throw InputError("no column with the requested label");
}

void validate(const LcmParams& params, bool require_inequality) {
  const int k = params.k();
  const int p = params.p();
  if (k < 1 || p < 1) throw InputError("LcmParams needs k >= 1 and p >= 1");
  if (params.constraint.rows() != p || params.constraint.cols() != k)
    throw InputError("constraint matrix must be p x k");
  if (std::abs(params.nu.sum() - 1.0) > kConstructionTol)
    throw InputError("mixture proportions must sum to one");
  if ((params.nu.array() <= 0.0).any()) throw InputError("mixture proportions must be positive");
  for (int j = 0; j < p; ++j) {
    const Matrix& lam = params.lambdas[j];
    if (lam.cols() != k || lam.rows() < 2)
      throw InputError("Lambda for variable " + std::to_string(j + 1) + " has wrong shape");
    if ((lam.array() < 0.0).any())
      throw InputError("negative probability in Lambda " + std::to_string(j + 1));
    for (int h = 0; h < k; ++h)
      if (std::abs(lam.col(h).sum() - 1.0) > kConstructionTol)
        throw InputError("column " + std::to_string(h + 1) + " of Lambda " +
                         std::to_string(j + 1) + " does not sum to one");
    int base = -1;
    for (int h = 0; h < k; ++h) {
      if (params.constraint.entries(j, h) != 0) continue;
      if (base < 0) {
        base = h;
      } else if ((lam.col(h) - lam.col(base)).cwiseAbs().maxCoeff() > kConstructionTol) {
        throw InputError("variable " + std::to_string(j + 1) +
                         ": baseline-tied columns are not equal");
      }
    }
  }
  if (require_inequality && !satisfies_inequality_constraint(params))
    throw InputError("a free column coincides with the baseline in some category");
}

bool satisfies_inequality_constraint(const LcmParams& params, double tol) {
  for (int j = 0; j < params.p(); ++j) {
    const Matrix& lam = params.lambdas[j];
    int base = -1;
    for (int h = 0; h < params.k(); ++h)
      if (params.constraint.entries(j, h) == 0) {
        base = h;
        break;
      }
    if (base < 0) continue;
    for (int h = 0; h < params.k(); ++h) {
      if (params.constraint.entries(j, h) == 0) continue;
      if (((lam.col(h) - lam.col(base)).array().abs() <= tol).any()) return false;
    }
  }
  return true;
}

int TwoLayerParams::max_categories() const {
  return cardinalities.empty() ? 0 : *std::max_element(cardinalities.begin(), cardinalities.end());
}

void validate(const TwoLayerParams& params) {
  const int p = params.p();
  const int K = params.K();
  const int dmax = params.max_categories();
  if (static_cast<int>(params.cardinalities.size()) != p)
    throw InputError("cardinalities must have one entry per variable");
  if (dmax < 2) throw InputError("every variable needs at least 2 categories");
  if (params.beta0.rows() != p || params.beta0.cols() != dmax - 1)
    throw InputError("beta0 must be p x (d-1)");
  if (static_cast<int>(params.beta.size()) != dmax - 1) throw InputError("beta needs d-1 slices");
  for (const auto& b : params.beta) {
    if (b.rows() != p || b.cols() != K) throw InputError("beta slices must be p x K");
    for (int j = 0; j < p; ++j)
      for (int k = 0; k < K; ++k)
        if (params.graph(j, k) == 0 && b(j, k) != 0.0)
          throw InputError("nonzero beta on an absent edge (" + std::to_string(j + 1) + "," +
                           std::to_string(k + 1) + ")");
  }
  if (params.tau.size() < 1 || std::abs(params.tau.sum() - 1.0) > kConstructionTol ||
      (params.tau.array() < 0.0).any())
    throw InputError("tau must be a probability vector");
  if (params.eta.rows() != K || params.eta.cols() != params.tau.size())
    throw InputError("eta must be K x B");
  if ((params.eta.array() < 0.0).any() || (params.eta.array() > 1.0).any())
    throw InputError("eta entries must lie in [0,1]");
}

double lcm_cell_probability(const LcmParams& params, std::span<const int> pattern) {
  if (static_cast<int>(pattern.size()) != params.p()) throw InputError("pattern length must be p");
  for (int j = 0; j < params.p(); ++j)
    if (pattern[j] < 1 || pattern[j] > params.lambdas[j].rows())
      throw InputError("category out of range for variable " + std::to_string(j + 1));
  double total = 0.0;
  for (int h = 0; h < params.k(); ++h) {
    double term = params.nu(h);
    for (int j = 0; j < params.p(); ++j) term *= params.lambdas[j](pattern[j] - 1, h);
    total += term;
  }
  return total;
}

ConstraintMatrix constraint_matrix_from_graph(const GraphicalMatrix& graph, int cap) {
  const int K = graph.cols();
  check_cap(K, cap);
  const std::uint64_t ncol = std::uint64_t{1} << K;
  ConstraintMatrix S;
  S.entries = IntMatrix::Zero(graph.rows(), static_cast<Eigen::Index>(ncol));
  std::vector<std::vector<int>> labels;
  labels.reserve(ncol);
  for (std::uint64_t a = 0; a < ncol; ++a) {
    labels.push_back(binary_pattern(a, K));
    const auto& alpha = labels.back();
    for (int j = 0; j < graph.rows(); ++j) {
      bool covers = true;
      for (int k = 0; k < K && covers; ++k) covers = alpha[k] >= graph(j, k);
      S.entries(j, static_cast<Eigen::Index>(a)) = covers ? 0 : 1;
    }
  }
  S.column_labels = std::move(labels);
  return S;
}

Vector softmax_with_baseline(const Vector& logits) {
  const double m = std::max(0.0, logits.size() ? logits.maxCoeff() : 0.0);
  Vector out(logits.size() + 1);
  for (Eigen::Index c = 0; c < logits.size(); ++c) out(c) = std::exp(logits(c) - m);
  out(logits.size()) = std::exp(-m);
  return out / out.sum();
}

Vector two_layer_conditional(const TwoLayerParams& params, int j, std::span<const int> alpha) {
  if (j < 0 || j >= params.p()) throw InputError("variable index out of range");
  if (static_cast<int>(alpha.size()) != params.K()) throw InputError("alpha must have length K");
  const int d = params.cardinalities[j];
  Vector logits(d - 1);
  for (int c = 0; c < d - 1; ++c) {
    double eta = params.beta0(j, c);
    for (int k = 0; k < params.K(); ++k)
      if (params.graph(j, k) && alpha[k]) eta += params.beta[c](j, k);
    logits(c) = eta;
  }
  return softmax_with_baseline(logits);
}

Vector attribute_distribution(const Vector& tau, const Matrix& eta, int cap) {
  const int K = static_cast<int>(eta.rows());
  check_cap(K, cap);
  const std::uint64_t ncol = std::uint64_t{1} << K;
  Vector out = Vector::Zero(static_cast<Eigen::Index>(ncol));
  for (std::uint64_t a = 0; a < ncol; ++a) {
    const auto alpha = binary_pattern(a, K);
    double total = 0.0;
    for (Eigen::Index b = 0; b < tau.size(); ++b) {
      double term = tau(b);
      for (int k = 0; k < K; ++k) term *= alpha[k] ? eta(k, b) : 1.0 - eta(k, b);
      total += term;
    }
    out(static_cast<Eigen::Index>(a)) = total;
  }
  return out;
}

double marginal_y_probability(const TwoLayerParams& params, std::span<const int> pattern,
                              int cap) {
  const int K = params.K();
  check_cap(K, cap);
  if (static_cast<int>(pattern.size()) != params.p()) throw InputError("pattern length must be p");
  for (int j = 0; j < params.p(); ++j)
    if (pattern[j] < 1 || pattern[j] > params.cardinalities[j])
      throw InputError("category out of range for variable " + std::to_string(j + 1));
  const Vector prior = attribute_distribution(params.tau, params.eta, cap);
  double total = 0.0;
  for (Eigen::Index a = 0; a < prior.size(); ++a) {
    const auto alpha = binary_pattern(static_cast<std::uint64_t>(a), K);
    double term = prior(a);
    for (int j = 0; j < params.p() && term > 0.0; ++j)
      term *= two_layer_conditional(params, j, alpha)(pattern[j] - 1);
    total += term;
  }
  return total;
}

LcmParams induced_lcm(const TwoLayerParams& params, int cap) {
  LcmParams out;
  out.constraint = constraint_matrix_from_graph(params.graph, cap);
  out.nu = attribute_distribution(params.tau, params.eta, cap);
  const int k = out.constraint.cols();
  out.lambdas.reserve(params.p());
  for (int j = 0; j < params.p(); ++j) {
    Matrix lam(params.cardinalities[j], k);
    for (int h = 0; h < k; ++h)
      lam.col(h) = two_layer_conditional(params, j, (*out.constraint.column_labels)[h]);
    out.lambdas.push_back(std::move(lam));
  }
  return out;
}

}  // namespace pyramid
