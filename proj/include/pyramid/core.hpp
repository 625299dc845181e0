#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pyramid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntMatrix = Eigen::MatrixXi;

// Error categories. The CLI maps them onto exit codes.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct CapacityError : std::length_error {
  using std::length_error::length_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

inline constexpr double kConstructionTol = 1e-12;
inline constexpr double kPropertyTol = 1e-10;
inline constexpr int kDefaultEnumerationCap = 20;

/// Binary pattern for column `index` of a 2^K enumeration. Lexicographic order,
/// all-zeros first, leftmost coordinate most significant.
std::vector<int> binary_pattern(std::uint64_t index, int K);
std::uint64_t pattern_index(std::span<const int> pattern);

/// n x p table of category codes, 1-based.
struct Dataset {
  IntMatrix values;
  std::vector<int> cardinalities;

  int n() const { return static_cast<int>(values.rows()); }
  int p() const { return static_cast<int>(values.cols()); }

  /// Validates ranges. Throws InputError naming the offending cell.
  static Dataset make(IntMatrix values, std::vector<int> cardinalities);
  /// Cardinalities inferred as column maxima (at least 2).
  static Dataset infer(IntMatrix values);
};

struct GraphicalMatrix {
  IntMatrix entries;

  int rows() const { return static_cast<int>(entries.rows()); }
  int cols() const { return static_cast<int>(entries.cols()); }
  int operator()(int r, int c) const { return entries(r, c); }

  static GraphicalMatrix make(IntMatrix entries);
  /// Latent columns with no children. Not an error, reported as warnings.
  std::vector<int> empty_columns() const;
};

struct ConstraintMatrix {
  IntMatrix entries;
  // Present when the columns index {0,1}^K configurations.
  std::optional<std::vector<std::vector<int>>> column_labels;

  int rows() const { return static_cast<int>(entries.rows()); }
  int cols() const { return static_cast<int>(entries.cols()); }

  static ConstraintMatrix make(IntMatrix entries);
  /// Column index carrying the given label; throws if absent or unlabeled.
  int column_of(std::span<const int> label) const;
};

struct LcmParams {
  Vector nu;
  std::vector<Matrix> lambdas;  // d_j x k, columns sum to one
  ConstraintMatrix constraint;

  int k() const { return static_cast<int>(nu.size()); }
  int p() const { return static_cast<int>(lambdas.size()); }
};

/// Checks normalization and the equality constraints tied to S. When
/// `require_inequality` is set, free columns must also differ entrywise from
/// the baseline column. Throws InputError.
void validate(const LcmParams& params, bool require_inequality = true);
bool satisfies_inequality_constraint(const LcmParams& params, double tol = kConstructionTol);

/// Two-layer pyramid: multinomial-logit bottom layer over binary traits, and a
/// B-class latent class model for the traits.
struct TwoLayerParams {
  GraphicalMatrix graph;            // p x K
  std::vector<int> cardinalities;   // d_j
  Matrix beta0;                     // p x (dmax - 1)
  std::vector<Matrix> beta;         // (dmax - 1) matrices, each p x K
  Vector tau;                       // B
  Matrix eta;                       // K x B

  int p() const { return graph.rows(); }
  int K() const { return graph.cols(); }
  int B() const { return static_cast<int>(tau.size()); }
  int max_categories() const;
};

/// Checks dimensions, sparsity of beta under the graph, tau and eta ranges.
void validate(const TwoLayerParams& params);

double lcm_cell_probability(const LcmParams& params, std::span<const int> pattern);

ConstraintMatrix constraint_matrix_from_graph(const GraphicalMatrix& graph,
                                              int cap = kDefaultEnumerationCap);

/// P(y_j = . | alpha); category d_j is the zero-logit baseline.
Vector two_layer_conditional(const TwoLayerParams& params, int j, std::span<const int> alpha);

/// Softmax with the last category as zero-logit baseline. `logits` holds the
/// d-1 non-baseline logits.
Vector softmax_with_baseline(const Vector& logits);

Vector attribute_distribution(const Vector& tau, const Matrix& eta,
                              int cap = kDefaultEnumerationCap);

double marginal_y_probability(const TwoLayerParams& params, std::span<const int> pattern,
                              int cap = kDefaultEnumerationCap);

/// The 2^K-class constrained latent class model obtained by marginalizing
/// the deep layer.
LcmParams induced_lcm(const TwoLayerParams& params, int cap = kDefaultEnumerationCap);

}  // namespace pyramid
