#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pyramid/core.hpp"
#include "pyramid/rng.hpp"

namespace pyramid {

enum class IdStatus { strict, generic, undetermined };

std::string to_string(IdStatus status);

/// Tri-partition of variable (row) indices, 0-based.
struct Partition {
  std::vector<int> a1, a2, a3;
};

/// A 1 -> 0 change applied to the constraint matrix, 0-based.
struct Flip {
  int row = 0;
  int col = 0;
  bool operator==(const Flip&) const = default;
};

/// Checkers never report "not identifiable": the conditions are sufficient
/// only, so failure to find a witness is `undetermined`.
struct IdVerdict {
  IdStatus status = IdStatus::undetermined;
  std::optional<Partition> witness;
  std::vector<Flip> flips;
  std::vector<std::string> diagnostics;
};

struct SearchBudget {
  int exhaustive_max_rows = 15;  // 3^p enumeration up to this many rows
  int restarts = 1000;           // greedy passes above it
  int max_flips = 3;             // per submatrix, generic search only
  std::uint64_t seed = 0;
};

Matrix khatri_rao(std::span<const Matrix> matrices);

/// SVD rank with threshold max(rows, cols) * eps * sigma_max.
int numerical_rank(const Matrix& m);

bool has_distinct_columns(const IntMatrix& m);

/// Random Lambda matrices satisfying the equality and inequality constraints
/// of S: free columns and the shared baseline are flat Dirichlet draws. With
/// `tie_duplicate_columns`, free columns whose S columns coincide also share
/// a draw.
std::vector<Matrix> random_constrained_lambdas(const ConstraintMatrix& S,
                                               std::span<const int> cardinalities, Rng& rng,
                                               bool tie_duplicate_columns = false);

enum class KrRankOutcome { always_full_rank, rank_deficient_found };

struct KrRankOptions {
  std::vector<int> cardinalities;  // empty: 2 categories per variable
  bool tie_duplicate_columns = false;
};

struct KrRankReport {
  KrRankOutcome outcome = KrRankOutcome::always_full_rank;
  std::vector<int> ranks;
  int k = 0;
};

inline constexpr int kKrMaxColumns = 1 << 12;

KrRankReport kr_rank_oracle(const ConstraintMatrix& S, int trials, std::uint64_t seed,
                            const KrRankOptions& options = {});

/// Tri-partition with every S_{A_i,:} having distinct columns.
IdVerdict check_strict_corollary(const ConstraintMatrix& S, const SearchBudget& budget = {});

/// A1, A2 as above; A3 only needs every pair of classes separated by some
/// Lambda entry. Throws InputError when `lambdas` violate the constraints of S.
IdVerdict check_strict_theorem1(const ConstraintMatrix& S, std::span<const Matrix> lambdas,
                                const SearchBudget& budget = {}, double tol = 1e-9);

/// A1 and A2 may become distinct after flipping up to `max_flips` ones to
/// zero each. A3 is required to separate every class pair generically, i.e.
/// for each pair some row of A3 is free in at least one of the two classes.
IdVerdict check_generic(const ConstraintMatrix& S, const SearchBudget& budget = {});

/// Each layer's graph must contain three disjoint copies of the identity
/// (after row permutation). Throws InputError on a broken dimension chain.
IdVerdict check_multilayer(std::span<const GraphicalMatrix> graphs);

/// Strict branch: three identity blocks (and, when `beta` is given, nonzero
/// coefficients on them). Generic branch: three disjoint row sets each with a
/// perfect matching onto the columns along g = 1. Both need
/// K >= 2 ceil(log2 B) + 1.
IdVerdict check_two_layer(const GraphicalMatrix& graph, int B,
                          std::optional<std::span<const Matrix>> beta = std::nullopt);

/// Rows assigned to three disjoint sets, one row per column each, along g = 1.
/// Empty when no such assignment exists.
std::optional<std::array<std::vector<int>, 3>> three_disjoint_matchings(const GraphicalMatrix& g);

}  // namespace pyramid
