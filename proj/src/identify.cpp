#include "pyramid/identify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include <Eigen/SVD>

namespace pyramid {

namespace {

// A set-system over rows: a row subset "covers" the family when it
// intersects every member. Distinct columns of S_{A,:} is exactly coverage of
// the family of per-pair difference sets, so all checkers share this shape.
struct HitFamily {
  std::vector<std::vector<int>> members;
  bool has_empty_member = false;
};

HitFamily make_family(std::vector<std::vector<int>> sets) {
  HitFamily f;
  for (auto& s : sets) std::sort(s.begin(), s.end());
  std::sort(sets.begin(), sets.end());
  sets.erase(std::unique(sets.begin(), sets.end()), sets.end());
  for (auto& s : sets) {
    if (s.empty()) f.has_empty_member = true;
    else f.members.push_back(std::move(s));
  }
  return f;
}

template <typename Separates>
HitFamily pair_family(int p, int k, Separates separates) {
  std::vector<std::vector<int>> sets;
  sets.reserve(static_cast<std::size_t>(k) * (k - 1) / 2);
  std::vector<int> rows;
  for (int h1 = 0; h1 < k; ++h1)
    for (int h2 = h1 + 1; h2 < k; ++h2) {
      rows.clear();
      for (int j = 0; j < p; ++j)
        if (separates(j, h1, h2)) rows.push_back(j);
      sets.push_back(rows);
    }
  return make_family(std::move(sets));
}

HitFamily distinctness_family(const IntMatrix& S) {
  return pair_family(static_cast<int>(S.rows()), static_cast<int>(S.cols()),
                     [&](int j, int a, int b) { return S(j, a) != S(j, b); });
}

std::vector<std::uint32_t> family_masks(const HitFamily& f) {
  std::vector<std::uint32_t> out;
  out.reserve(f.members.size());
  for (const auto& m : f.members) {
    std::uint32_t mask = 0;
    for (int r : m) mask |= std::uint32_t{1} << r;
    out.push_back(mask);
  }
  return out;
}

std::vector<char> coverage_table(const HitFamily& f, int p) {
  const std::uint32_t n = std::uint32_t{1} << p;
  std::vector<char> ok(n, 0);
  if (f.has_empty_member) return ok;
  const auto masks = family_masks(f);
  for (std::uint32_t a = 0; a < n; ++a) {
    bool all = true;
    for (auto m : masks)
      if (!(m & a)) {
        all = false;
        break;
      }
    ok[a] = all;
  }
  return ok;
}

std::vector<int> rows_of(std::uint32_t mask, int p) {
  std::vector<int> out;
  for (int j = 0; j < p; ++j)
    if (mask & (std::uint32_t{1} << j)) out.push_back(j);
  return out;
}

bool columns_distinct(const IntMatrix& S, const std::vector<int>& rows,
                      const std::vector<Flip>& flips) {
  const int k = static_cast<int>(S.cols());
  std::vector<std::vector<int>> cols(k, std::vector<int>(rows.size()));
  for (int h = 0; h < k; ++h)
    for (std::size_t r = 0; r < rows.size(); ++r) cols[h][r] = S(rows[r], h);
  for (const auto& f : flips) {
    auto it = std::find(rows.begin(), rows.end(), f.row);
    if (it != rows.end()) cols[f.col][it - rows.begin()] = 0;
  }
  std::sort(cols.begin(), cols.end());
  return std::adjacent_find(cols.begin(), cols.end()) == cols.end();
}

// Smallest set of 1 -> 0 flips (up to max_flips) making S_{rows,:} have
// distinct columns. Only entries in duplicated columns are candidates; a flip
// elsewhere cannot split a duplicate group.
std::optional<std::vector<Flip>> fix_with_flips(const IntMatrix& S, const std::vector<int>& rows,
                                                int max_flips) {
  const int k = static_cast<int>(S.cols());
  std::map<std::vector<int>, std::vector<int>> groups;
  for (int h = 0; h < k; ++h) {
    std::vector<int> key(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) key[r] = S(rows[r], h);
    groups[key].push_back(h);
  }
  if (static_cast<int>(groups.size()) == k) return std::vector<Flip>{};
  if (k - static_cast<int>(groups.size()) > max_flips) return std::nullopt;
  std::vector<Flip> candidates;
  for (const auto& [key, members] : groups) {
    if (members.size() < 2) continue;
    for (int h : members)
      for (std::size_t r = 0; r < rows.size(); ++r)
        if (key[r] == 1) candidates.push_back({rows[r], h});
  }
  const int nc = static_cast<int>(candidates.size());
  std::vector<Flip> chosen;
  std::function<bool(int, int)> search = [&](int start, int remaining) -> bool {
    if (remaining == 0) return columns_distinct(S, rows, chosen);
    for (int c = start; c < nc; ++c) {
      chosen.push_back(candidates[c]);
      if (search(c + 1, remaining - 1)) return true;
      chosen.pop_back();
    }
    return false;
  };
  for (int size = 1; size <= max_flips; ++size)
    if (search(0, size)) return chosen;
  return std::nullopt;
}

Partition to_partition(std::uint32_t a1, std::uint32_t a2, std::uint32_t a3, int p) {
  return Partition{rows_of(a1, p), rows_of(a2, p), rows_of(a3, p)};
}

// Exhaustive 3^p search over (A1, A2, A3) using per-part acceptance tables.
std::optional<std::array<std::uint32_t, 3>> exhaustive_partition(const std::vector<char>& ok1,
                                                                 const std::vector<char>& ok2,
                                                                 const std::vector<char>& ok3,
                                                                 int p) {
  const std::uint32_t full = (std::uint32_t{1} << p) - 1;
  for (std::uint32_t a1 = 1; a1 <= full; ++a1) {
    if (!ok1[a1]) continue;
    const std::uint32_t rest = full & ~a1;
    for (std::uint32_t a2 = rest; a2; a2 = (a2 - 1) & rest) {
      if (!ok2[a2]) continue;
      const std::uint32_t a3 = rest & ~a2;
      if (ok3[a3]) return std::array<std::uint32_t, 3>{a1, a2, a3};
    }
  }
  return std::nullopt;
}

struct GreedyResult {
  Partition partition;
  std::array<bool, 3> complete{};
};

// Random-restart greedy: rows are added one at a time to the part whose family
// gains the most newly hit members.
std::optional<Partition> greedy_partition(const std::array<const HitFamily*, 3>& fams, int p,
                                          const SearchBudget& budget,
                                          const std::function<bool(Partition&)>& accept) {
  std::array<std::vector<std::vector<int>>, 3> by_row;
  for (int i = 0; i < 3; ++i) {
    by_row[i].assign(p, {});
    for (std::size_t m = 0; m < fams[i]->members.size(); ++m)
      for (int r : fams[i]->members[m]) by_row[i][r].push_back(static_cast<int>(m));
  }
  std::vector<int> order(p);
  for (int r = 0; r < std::max(1, budget.restarts); ++r) {
    std::iota(order.begin(), order.end(), 0);
    if (r > 0) {
      Rng rng = make_stream(budget.seed, {0x9e1d, static_cast<std::uint64_t>(r)});
      std::shuffle(order.begin(), order.end(), rng);
    }
    std::array<std::vector<char>, 3> hit;
    std::array<std::size_t, 3> unhit{};
    for (int i = 0; i < 3; ++i) {
      hit[i].assign(fams[i]->members.size(), 0);
      unhit[i] = fams[i]->members.size();
    }
    Partition part;
    std::array<std::vector<int>*, 3> sets{&part.a1, &part.a2, &part.a3};
    for (int row : order) {
      int best = 0;
      long best_gain = -1;
      for (int i = 0; i < 3; ++i) {
        long gain = 0;
        for (int m : by_row[i][row]) gain += !hit[i][m];
        const bool better = gain > best_gain ||
                            (gain == best_gain && unhit[i] > unhit[best]) ||
                            (gain == best_gain && unhit[i] == unhit[best] &&
                             sets[i]->size() < sets[best]->size());
        if (better) {
          best = i;
          best_gain = gain;
        }
      }
      sets[best]->push_back(row);
      for (int m : by_row[best][row])
        if (!hit[best][m]) {
          hit[best][m] = 1;
          --unhit[best];
        }
    }
    for (auto* s : sets) std::sort(s->begin(), s->end());
    if (accept(part)) return part;
  }
  return std::nullopt;
}

bool covers(const HitFamily& f, const std::vector<int>& rows) {
  if (f.has_empty_member) return false;
  std::vector<char> in(rows.empty() ? 1 : *std::max_element(rows.begin(), rows.end()) + 1, 0);
  for (int r : rows) in[r] = 1;
  for (const auto& m : f.members) {
    bool any = false;
    for (int r : m)
      if (r < static_cast<int>(in.size()) && in[r]) {
        any = true;
        break;
      }
    if (!any) return false;
  }
  return true;
}

std::string describe(const Partition& w) {
  auto list = [](const std::vector<int>& v) {
    std::ostringstream os;
    os << "{";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i] + 1;
    os << "}";
    return os.str();
  };
  return "A1=" + list(w.a1) + " A2=" + list(w.a2) + " A3=" + list(w.a3);
}

// Strict search with families for the three parts.
IdVerdict strict_search(const IntMatrix& S, const HitFamily& f12, const HitFamily& f3,
                        const SearchBudget& budget, const char* label) {
  IdVerdict v;
  const int p = static_cast<int>(S.rows());
  if (f12.has_empty_member) {
    v.diagnostics.push_back("S has identical columns; no row subset separates them");
    return v;
  }
  if (f3.has_empty_member) {
    v.diagnostics.push_back("some class pair is not separated by any row");
    return v;
  }
  if (p < 3) {
    v.diagnostics.push_back("fewer than 3 rows");
    return v;
  }
  std::optional<Partition> found;
  if (p <= budget.exhaustive_max_rows) {
    const auto ok12 = coverage_table(f12, p);
    const auto ok3 = &f12 == &f3 ? ok12 : coverage_table(f3, p);
    if (auto m = exhaustive_partition(ok12, ok12, ok3, p))
      found = to_partition((*m)[0], (*m)[1], (*m)[2], p);
    else
      v.diagnostics.push_back("exhaustive search over all tri-partitions found no witness");
  } else {
    found = greedy_partition({&f12, &f12, &f3}, p, budget, [&](Partition& w) {
      return covers(f12, w.a1) && covers(f12, w.a2) && covers(f3, w.a3);
    });
    if (!found)
      v.diagnostics.push_back("greedy search with " + std::to_string(budget.restarts) +
                              " restarts found no witness");
  }
  if (found) {
    v.status = IdStatus::strict;
    v.diagnostics.push_back(std::string(label) + " witness " + describe(*found));
    v.witness = std::move(found);
  }
  return v;
}

}  // namespace

std::string to_string(IdStatus status) {
  switch (status) {
    case IdStatus::strict: return "strict";
    case IdStatus::generic: return "generic";
    case IdStatus::undetermined: return "undetermined";
  }
  return "undetermined";
}

Matrix khatri_rao(std::span<const Matrix> matrices) {
  if (matrices.empty()) throw InputError("khatri_rao needs at least one matrix");
  const Eigen::Index k = matrices[0].cols();
  for (const auto& m : matrices)
    if (m.cols() != k) throw InputError("khatri_rao inputs must share a column count");
  Matrix out = matrices[0];
  for (std::size_t t = 1; t < matrices.size(); ++t) {
    const Matrix& next = matrices[t];
    Matrix prod(out.rows() * next.rows(), k);
    for (Eigen::Index h = 0; h < k; ++h)
      for (Eigen::Index r = 0; r < out.rows(); ++r)
        prod.col(h).segment(r * next.rows(), next.rows()) = out(r, h) * next.col(h);
    out = std::move(prod);
  }
  return out;
}

int numerical_rank(const Matrix& m) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  const double thresh = static_cast<double>(std::max(m.rows(), m.cols())) *
                        std::numeric_limits<double>::epsilon() * smax;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) rank += s(i) > thresh;
  return rank;
}

bool has_distinct_columns(const IntMatrix& m) {
  std::vector<std::vector<int>> cols(m.cols(), std::vector<int>(m.rows()));
  for (Eigen::Index h = 0; h < m.cols(); ++h)
    for (Eigen::Index r = 0; r < m.rows(); ++r) cols[h][r] = m(r, h);
  std::sort(cols.begin(), cols.end());
  return std::adjacent_find(cols.begin(), cols.end()) == cols.end();
}

std::vector<Matrix> random_constrained_lambdas(const ConstraintMatrix& S,
                                               std::span<const int> cardinalities, Rng& rng,
                                               bool tie_duplicate_columns) {
  const int p = S.rows();
  const int k = S.cols();
  if (static_cast<int>(cardinalities.size()) != p)
    throw InputError("need one cardinality per row of S");
  // Column groups: identical S columns share a group id when tying.
  std::vector<int> group(k);
  std::iota(group.begin(), group.end(), 0);
  if (tie_duplicate_columns)
    for (int h = 0; h < k; ++h)
      for (int g = 0; g < h; ++g)
        if (S.entries.col(g) == S.entries.col(h)) {
          group[h] = group[g];
          break;
        }
  std::vector<Matrix> out;
  out.reserve(p);
  for (int j = 0; j < p; ++j) {
    const int d = cardinalities[j];
    const Vector flat = Vector::Ones(d);
    Matrix lam(d, k);
    for (int attempt = 0;; ++attempt) {
      const Vector baseline = dirichlet_draw(rng, flat);
      std::vector<Vector> free_draws(k);
      for (int h = 0; h < k; ++h) {
        if (S.entries(j, h) == 0) {
          lam.col(h) = baseline;
        } else {
          if (free_draws[group[h]].size() == 0) free_draws[group[h]] = dirichlet_draw(rng, flat);
          lam.col(h) = free_draws[group[h]];
        }
      }
      bool ok = true;
      for (int h = 0; h < k && ok; ++h)
        if (S.entries(j, h) == 1)
          ok = ((lam.col(h) - baseline).array().abs() > kConstructionTol).all();
      if (ok) break;
      if (attempt >= 100) throw NumericalError("could not draw Lambda satisfying the inequality");
    }
    out.push_back(std::move(lam));
  }
  return out;
}

KrRankReport kr_rank_oracle(const ConstraintMatrix& S, int trials, std::uint64_t seed,
                            const KrRankOptions& options) {
  if (S.cols() > kKrMaxColumns) throw CapacityError("too many columns for numeric rank");
  std::vector<int> cards = options.cardinalities;
  if (cards.empty()) cards.assign(S.rows(), 2);
  KrRankReport report;
  report.k = S.cols();
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_stream(seed, {static_cast<std::uint64_t>(t)});
    const auto lambdas = random_constrained_lambdas(S, cards, rng, options.tie_duplicate_columns);
    const int rank = numerical_rank(khatri_rao(lambdas));
    report.ranks.push_back(rank);
    if (rank < report.k) report.outcome = KrRankOutcome::rank_deficient_found;
  }
  return report;
}

IdVerdict check_strict_corollary(const ConstraintMatrix& S, const SearchBudget& budget) {
  const HitFamily f = distinctness_family(S.entries);
  return strict_search(S.entries, f, f, budget, "distinct-column");
}

IdVerdict check_strict_theorem1(const ConstraintMatrix& S, std::span<const Matrix> lambdas,
                                const SearchBudget& budget, double tol) {
  const int p = S.rows();
  const int k = S.cols();
  if (static_cast<int>(lambdas.size()) != p) throw InputError("need one Lambda per row of S");
  LcmParams probe{Vector::Constant(k, 1.0 / k), {lambdas.begin(), lambdas.end()}, S};
  validate(probe, true);

  const HitFamily f12 = distinctness_family(S.entries);
  const HitFamily f3 = pair_family(p, k, [&](int j, int a, int b) {
    return ((lambdas[j].col(a) - lambdas[j].col(b)).array().abs() > tol).any();
  });
  IdVerdict v = strict_search(S.entries, f12, f3, budget, "separation");
  int near = 0;
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) {
      double gap = 0.0;
      for (int j = 0; j < p; ++j)
        gap = std::max(gap, (lambdas[j].col(a) - lambdas[j].col(b)).cwiseAbs().maxCoeff());
      if (gap > tol && gap < 1e-6) ++near;
    }
  if (near > 0)
    v.diagnostics.push_back(std::to_string(near) +
                            " class pairs are separated only by gaps below 1e-6");
  return v;
}

IdVerdict check_generic(const ConstraintMatrix& S, const SearchBudget& budget) {
  IdVerdict strict = check_strict_corollary(S, budget);
  if (strict.status == IdStatus::strict) {
    strict.status = IdStatus::generic;
    strict.diagnostics.push_back("strict condition holds; no flips needed");
    return strict;
  }
  IdVerdict v;
  const IntMatrix& E = S.entries;
  const int p = S.rows();
  const int k = S.cols();
  const HitFamily f3 = pair_family(p, k, [&](int j, int a, int b) { return E(j, a) || E(j, b); });
  if (f3.has_empty_member || p < 3) {
    v.diagnostics.push_back("some class pair is baseline-tied in every row");
    return v;
  }
  v.diagnostics.push_back(
      "A3 separation assumed generic: every class pair is free in some A3 row");

  std::optional<Partition> found;
  std::vector<Flip> flips;
  if (p <= budget.exhaustive_max_rows) {
    const std::uint32_t n = std::uint32_t{1} << p;
    // best[mask]: index into flip_sets of the fewest flips found for that row
    // set, -1 if none. A subset's flips also work for a superset (extra rows
    // keep columns distinct), so each mask starts from its best one-row-smaller
    // subset and only searches for something strictly smaller.
    std::vector<int> best(n, -1);
    std::vector<std::vector<Flip>> flip_sets;
    for (std::uint32_t a = 1; a < n; ++a) {
      for (int j = 0; j < p; ++j) {
        const std::uint32_t bit = std::uint32_t{1} << j;
        const int sub = (a & bit) ? best[a & ~bit] : -1;
        if (sub >= 0 && (best[a] < 0 || flip_sets[sub].size() < flip_sets[best[a]].size()))
          best[a] = sub;
      }
      const int limit =
          best[a] >= 0 ? static_cast<int>(flip_sets[best[a]].size()) - 1 : budget.max_flips;
      if (limit < 0) continue;
      if (auto fx = fix_with_flips(E, rows_of(a, p), limit)) {
        best[a] = static_cast<int>(flip_sets.size());
        flip_sets.push_back(std::move(*fx));
      }
    }
    auto cost = [&](std::uint32_t a) {
      return best[a] < 0 ? -1 : static_cast<int>(flip_sets[best[a]].size());
    };
    const auto ok3 = coverage_table(f3, p);
    // Exhaustive over tri-partitions, keeping the fewest total flips.
    const std::uint32_t full = n - 1;
    int best_total = -1;
    std::array<std::uint32_t, 3> pick{};
    for (std::uint32_t a1 = 1; a1 <= full && best_total != 0; ++a1) {
      const int c1 = cost(a1);
      if (c1 < 0) continue;
      const std::uint32_t rest = full & ~a1;
      for (std::uint32_t a2 = rest; a2; a2 = (a2 - 1) & rest) {
        const int c2 = cost(a2);
        if (c2 < 0 || !ok3[rest & ~a2]) continue;
        if (best_total < 0 || c1 + c2 < best_total) {
          best_total = c1 + c2;
          pick = {a1, a2, rest & ~a2};
          if (best_total == 0) break;
        }
      }
    }
    if (best_total >= 0) {
      found = to_partition(pick[0], pick[1], pick[2], p);
      for (int part = 0; part < 2; ++part)
        for (const Flip& f : flip_sets[best[pick[part]]])
          if (pick[part] & (std::uint32_t{1} << f.row)) flips.push_back(f);
    }
  } else {
    const HitFamily f12 = distinctness_family(E);
    found = greedy_partition({&f12, &f12, &f3}, p, budget, [&](Partition& w) {
      if (!covers(f3, w.a3)) return false;
      auto x1 = fix_with_flips(E, w.a1, budget.max_flips);
      if (!x1) return false;
      auto x2 = fix_with_flips(E, w.a2, budget.max_flips);
      if (!x2) return false;
      flips = *x1;
      flips.insert(flips.end(), x2->begin(), x2->end());
      return true;
    });
  }
  if (!found) {
    v.diagnostics.push_back("no tri-partition admits distinct columns within " +
                            std::to_string(budget.max_flips) + " flips per part");
    return v;
  }
  v.status = IdStatus::generic;
  v.diagnostics.push_back("generic witness " + describe(*found) + " with " +
                          std::to_string(flips.size()) + " flips");
  v.witness = std::move(found);
  v.flips = std::move(flips);
  return v;
}

namespace {

// Rows equal to the standard basis vector e_k, for each k.
std::vector<std::vector<int>> pure_rows(const GraphicalMatrix& g) {
  std::vector<std::vector<int>> out(g.cols());
  for (int j = 0; j < g.rows(); ++j) {
    if (g.entries.row(j).sum() != 1) continue;
    for (int k = 0; k < g.cols(); ++k)
      if (g(j, k) == 1) out[k].push_back(j);
  }
  return out;
}

Partition identity_block_partition(const std::vector<std::vector<int>>& pure, int rows) {
  Partition w;
  std::vector<char> used(rows, 0);
  for (const auto& list : pure) {
    w.a1.push_back(list[0]);
    w.a2.push_back(list[1]);
    w.a3.push_back(list[2]);
    used[list[0]] = used[list[1]] = used[list[2]] = 1;
  }
  for (int j = 0; j < rows; ++j)
    if (!used[j]) w.a3.push_back(j);
  std::sort(w.a3.begin(), w.a3.end());
  return w;
}

int ceil_log2(int b) {
  int bits = 0;
  while ((1 << bits) < b) ++bits;
  return bits;
}

}  // namespace

IdVerdict check_multilayer(std::span<const GraphicalMatrix> graphs) {
  IdVerdict v;
  if (graphs.empty()) throw InputError("need at least one graphical matrix");
  for (std::size_t m = 1; m < graphs.size(); ++m)
    if (graphs[m].rows() != graphs[m - 1].cols())
      throw InputError("layer " + std::to_string(m + 1) + " has " +
                       std::to_string(graphs[m].rows()) + " rows but layer " +
                       std::to_string(m) + " has " + std::to_string(graphs[m - 1].cols()) +
                       " columns");
  bool pass = true;
  for (std::size_t m = 0; m < graphs.size(); ++m) {
    const auto& g = graphs[m];
    const auto pure = pure_rows(g);
    const std::string layer = "layer " + std::to_string(m + 1);
    for (int k = 0; k < g.cols(); ++k)
      if (pure[k].size() < 3) {
        pass = false;
        v.diagnostics.push_back(layer + ": latent " + std::to_string(k + 1) + " has " +
                                std::to_string(pure[k].size()) +
                                " single-parent children, need 3");
      }
    const bool size_ok = g.rows() >= 3 * g.cols();
    v.diagnostics.push_back(layer + ": rows " + std::to_string(g.rows()) +
                            (size_ok ? " >= " : " < ") + "3 x " + std::to_string(g.cols()));
    for (int k : g.empty_columns())
      v.diagnostics.push_back(layer + ": warning, latent " + std::to_string(k + 1) +
                              " has no children");
  }
  if (pass) {
    v.status = IdStatus::strict;
    v.witness = identity_block_partition(pure_rows(graphs[0]), graphs[0].rows());
  }
  return v;
}

std::optional<std::array<std::vector<int>, 3>> three_disjoint_matchings(const GraphicalMatrix& g) {
  // Bipartite matching between rows and three copies of every column.
  const int p = g.rows();
  const int K = g.cols();
  const int slots = 3 * K;
  std::vector<int> slot_row(slots, -1);
  std::vector<int> row_slot(p, -1);
  std::function<bool(int, std::vector<char>&)> augment = [&](int s, std::vector<char>& seen) {
    const int k = s % K;
    for (int j = 0; j < p; ++j) {
      if (!g(j, k) || seen[j]) continue;
      seen[j] = 1;
      if (row_slot[j] < 0 || augment(row_slot[j], seen)) {
        row_slot[j] = s;
        slot_row[s] = j;
        return true;
      }
    }
    return false;
  };
  for (int s = 0; s < slots; ++s) {
    std::vector<char> seen(p, 0);
    if (!augment(s, seen)) return std::nullopt;
  }
  std::array<std::vector<int>, 3> out;
  for (int s = 0; s < slots; ++s) out[s / K].push_back(slot_row[s]);
  return out;
}

IdVerdict check_two_layer(const GraphicalMatrix& graph, int B,
                          std::optional<std::span<const Matrix>> beta) {
  IdVerdict v;
  const int K = graph.cols();
  const int need = 2 * ceil_log2(std::max(B, 1)) + 1;
  const bool depth_ok = K >= need;
  v.diagnostics.push_back("depth condition K1=" + std::to_string(K) + (depth_ok ? " >= " : " < ") +
                          std::to_string(need) + " for B=" + std::to_string(B));

  const auto pure = pure_rows(graph);
  bool strict_ok = std::all_of(pure.begin(), pure.end(), [](auto& l) { return l.size() >= 3; });
  if (!strict_ok) v.diagnostics.push_back("strict branch: fewer than three identity blocks");
  if (strict_ok && beta) {
    for (int k = 0; k < K && strict_ok; ++k)
      for (int copy = 0; copy < 3 && strict_ok; ++copy)
        for (const Matrix& slice : *beta)
          if (slice(pure[k][copy], k) == 0.0) {
            strict_ok = false;
            v.diagnostics.push_back("strict branch: zero coefficient at row " +
                                    std::to_string(pure[k][copy] + 1) + ", latent " +
                                    std::to_string(k + 1));
            break;
          }
  }
  if (strict_ok) {
    v.diagnostics.push_back("strict branch: three identity blocks found");
    if (depth_ok) {
      v.status = IdStatus::strict;
      v.witness = identity_block_partition(pure, graph.rows());
      v.diagnostics.push_back("graph, beta and nu strictly identifiable; tau, eta generically");
      return v;
    }
  }
  const auto sdr = three_disjoint_matchings(graph);
  if (!sdr) {
    v.diagnostics.push_back("generic branch: no three disjoint perfect matchings");
    return v;
  }
  v.diagnostics.push_back("generic branch: three disjoint perfect matchings found");
  if (!depth_ok) return v;
  v.status = IdStatus::generic;
  Partition w{(*sdr)[0], (*sdr)[1], (*sdr)[2]};
  std::vector<char> used(graph.rows(), 0);
  for (const auto* s : {&w.a1, &w.a2, &w.a3})
    for (int j : *s) used[j] = 1;
  for (int j = 0; j < graph.rows(); ++j)
    if (!used[j]) w.a3.push_back(j);
  v.witness = std::move(w);
  return v;
}

}  // namespace pyramid
