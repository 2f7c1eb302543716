#pragma once

// Variable-group agglomeration and the cluster-distance update strategies:
// versatile linkage (generalized means), beta-flexible clustering, centroid
// and Ward.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "verlink/core.hpp"

namespace verlink::linkage {

/// One weighted summand of a mean over subcluster pairs.
struct Term {
  double weight;
  double distance;
};

namespace detail {

// Summation in a fixed order (by distance, then weight) so the result only
// depends on the multiset of terms, not on how clusters are enumerated.
inline void canonical_order(std::vector<Term>& terms) {
  std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.weight < b.weight);
  });
}

inline double weighted_sum(std::vector<Term> terms) {
  canonical_order(terms);
  double sum = 0.0;
  for (const auto& t : terms) sum += t.weight * t.distance;
  return sum;
}

inline void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw NumericOverflow(std::string(what) + ": non-finite result " + format_shortest(value));
  }
}

}  // namespace detail

/// Weighted generalized mean of the term distances; the weights must sum
/// to one. The limits select min / max, |p| < 1e-8 uses the log-domain
/// geometric mean. A zero distance forces 0 for p <= 0 (its infimum limit).
inline double power_mean(std::vector<Term> terms, PowerParam p) {
  if (terms.empty()) throw InvalidInput("power_mean: no terms");
  const auto by_distance = [](const Term& a, const Term& b) { return a.distance < b.distance; };
  switch (p.kind()) {
    case PowerParam::Kind::negative_infinity:
      return std::min_element(terms.begin(), terms.end(), by_distance)->distance;
    case PowerParam::Kind::positive_infinity:
      return std::max_element(terms.begin(), terms.end(), by_distance)->distance;
    case PowerParam::Kind::finite:
      break;
  }
  detail::canonical_order(terms);
  const double lo = terms.front().distance;
  const double hi = terms.back().distance;
  if (p.is_geometric()) {
    if (lo == 0.0) return 0.0;
    double log_sum = 0.0;
    double weight_sum = 0.0;
    for (const auto& t : terms) {
      log_sum += t.weight * std::log(t.distance);
      weight_sum += t.weight;
    }
    return std::exp(log_sum / weight_sum);
  }
  const double power = p.value();
  if (power == 1.0) return detail::weighted_sum(std::move(terms));
  if (power < 0.0 && lo == 0.0) return 0.0;
  if (power > 0.0 && hi == 0.0) return 0.0;
  // Factor out the extreme distance so every ratio raised to p is <= 1.
  const double scale = power > 0.0 ? hi : lo;
  double acc = 0.0;
  for (const auto& t : terms) acc += t.weight * std::pow(t.distance / scale, power);
  const double result = scale * std::pow(acc, 1.0 / power);
  detail::require_finite(result, "power_mean");
  return result;
}

// ---------------------------------------------------------------------------
// Subcluster-level formulas. `cross` is the |I| x |J| row-major matrix of
// D(X_i, X_j); `sizes_*` hold |X_i| and |X_j|.

inline double versatile_distance_unweighted(std::span<const std::size_t> sizes_I,
                                            std::span<const std::size_t> sizes_J,
                                            std::span<const double> cross, PowerParam p) {
  const double total_I = std::accumulate(sizes_I.begin(), sizes_I.end(), 0.0);
  const double total_J = std::accumulate(sizes_J.begin(), sizes_J.end(), 0.0);
  const double denom = total_I * total_J;
  std::vector<Term> terms;
  terms.reserve(cross.size());
  for (std::size_t i = 0; i < sizes_I.size(); ++i) {
    for (std::size_t j = 0; j < sizes_J.size(); ++j) {
      const double w = static_cast<double>(sizes_I[i] * sizes_J[j]) / denom;
      terms.push_back({w, cross[i * sizes_J.size() + j]});
    }
  }
  return power_mean(std::move(terms), p);
}

inline double versatile_distance_weighted(std::size_t count_I, std::size_t count_J,
                                          std::span<const double> cross, PowerParam p) {
  const double w = 1.0 / static_cast<double>(count_I * count_J);
  std::vector<Term> terms;
  terms.reserve(cross.size());
  for (double d : cross) terms.push_back({w, d});
  return power_mean(std::move(terms), p);
}

inline double sl_distance(std::span<const double> cross) {
  return *std::min_element(cross.begin(), cross.end());
}

inline double cl_distance(std::span<const double> cross) {
  return *std::max_element(cross.begin(), cross.end());
}

inline double geometric_distance(std::span<const std::size_t> sizes_I,
                                 std::span<const std::size_t> sizes_J,
                                 std::span<const double> cross, Weighting weighting) {
  const auto gl = PowerParam::finite(0.0);
  if (weighting == Weighting::weighted) {
    return versatile_distance_weighted(sizes_I.size(), sizes_J.size(), cross, gl);
  }
  return versatile_distance_unweighted(sizes_I, sizes_J, cross, gl);
}

/// Coefficients of the variable-group Lance-Williams formula for
/// beta-flexible clustering. `within_*` are |I| x |I| (resp. |J| x |J|)
/// row-major with only the i < i' entries used.
struct FlexibleCoefficients {
  std::vector<double> cross;
  std::vector<double> within_I;
  std::vector<double> within_J;

  [[nodiscard]] double total() const {
    return std::accumulate(cross.begin(), cross.end(), 0.0) +
           std::accumulate(within_I.begin(), within_I.end(), 0.0) +
           std::accumulate(within_J.begin(), within_J.end(), 0.0);
  }
};

inline FlexibleCoefficients flexible_coefficients(std::span<const std::size_t> sizes_I,
                                                  std::span<const std::size_t> sizes_J,
                                                  double beta, Weighting weighting) {
  if (!(beta >= -1.0 && beta <= 1.0)) {
    throw InvalidInput("beta must lie in [-1, +1], got " + format_shortest(beta));
  }
  const std::size_t ni = sizes_I.size();
  const std::size_t nj = sizes_J.size();
  FlexibleCoefficients c;
  c.cross.assign(ni * nj, 0.0);
  c.within_I.assign(ni * ni, 0.0);
  c.within_J.assign(nj * nj, 0.0);

  const auto pair_products = [](std::span<const std::size_t> sizes) {
    const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    std::size_t squares = 0;
    for (auto s : sizes) squares += s * s;
    return (total * total - squares) / 2;
  };

  if (weighting == Weighting::unweighted) {
    const std::size_t total_I = std::accumulate(sizes_I.begin(), sizes_I.end(), std::size_t{0});
    const std::size_t total_J = std::accumulate(sizes_J.begin(), sizes_J.end(), std::size_t{0});
    const double denom = static_cast<double>(total_I * total_J);
    for (std::size_t i = 0; i < ni; ++i) {
      for (std::size_t j = 0; j < nj; ++j) {
        c.cross[i * nj + j] =
            static_cast<double>(sizes_I[i] * sizes_J[j]) / denom * (1.0 - beta);
      }
    }
    const std::size_t sigma = pair_products(sizes_I) + pair_products(sizes_J);
    if (sigma > 0) {
      for (std::size_t i = 0; i < ni; ++i) {
        for (std::size_t k = i + 1; k < ni; ++k) {
          c.within_I[i * ni + k] =
              static_cast<double>(sizes_I[i] * sizes_I[k]) / static_cast<double>(sigma) * beta;
        }
      }
      for (std::size_t j = 0; j < nj; ++j) {
        for (std::size_t k = j + 1; k < nj; ++k) {
          c.within_J[j * nj + k] =
              static_cast<double>(sizes_J[j] * sizes_J[k]) / static_cast<double>(sigma) * beta;
        }
      }
    }
  } else {
    const double alpha = 1.0 / static_cast<double>(ni * nj) * (1.0 - beta);
    std::fill(c.cross.begin(), c.cross.end(), alpha);
    const std::size_t sigma = (ni * ni - ni) / 2 + (nj * nj - nj) / 2;
    if (sigma > 0) {
      const double b = beta / static_cast<double>(sigma);
      for (std::size_t i = 0; i < ni; ++i) {
        for (std::size_t k = i + 1; k < ni; ++k) c.within_I[i * ni + k] = b;
      }
      for (std::size_t j = 0; j < nj; ++j) {
        for (std::size_t k = j + 1; k < nj; ++k) c.within_J[j * nj + k] = b;
      }
    }
  }
  return c;
}

inline double flexible_distance(std::span<const std::size_t> sizes_I,
                                std::span<const std::size_t> sizes_J,
                                std::span<const double> cross,
                                std::span<const double> within_I,
                                std::span<const double> within_J, double beta,
                                Weighting weighting) {
  const auto coef = flexible_coefficients(sizes_I, sizes_J, beta, weighting);
  std::vector<Term> terms;
  terms.reserve(coef.cross.size() + coef.within_I.size() + coef.within_J.size());
  const auto add = [&terms](std::span<const double> weights, std::span<const double> values) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (weights[k] != 0.0) terms.push_back({weights[k], values[k]});
    }
  };
  add(coef.cross, cross);
  add(coef.within_I, within_I);
  add(coef.within_J, within_J);
  if (terms.empty()) return 0.0;
  return detail::weighted_sum(std::move(terms));
}

// ---------------------------------------------------------------------------
// Centroid and Ward, evaluated from the original matrix over member lists.

struct ClampedDistance {
  double value = 0.0;
  bool clamped = false;  // a negative radicand (non-Euclidean input) was set to 0
};

/// Sum of d^2 over x in I, y in J.
inline double sum_sq_cross(std::span<const std::size_t> members_I,
                           std::span<const std::size_t> members_J,
                           const DissimilarityMatrix& original) {
  double s = 0.0;
  for (auto x : members_I) {
    for (auto y : members_J) {
      const double d = original(x, y);
      s += d * d;
    }
  }
  return s;
}

/// Sum of d^2 over unordered pairs x < x' within the members.
inline double sum_sq_within(std::span<const std::size_t> members,
                            const DissimilarityMatrix& original) {
  double s = 0.0;
  for (std::size_t a = 0; a < members.size(); ++a) {
    for (std::size_t b = a + 1; b < members.size(); ++b) {
      const double d = original(members[a], members[b]);
      s += d * d;
    }
  }
  return s;
}

namespace detail {

inline ClampedDistance clamp_sqrt(double radicand) {
  if (radicand < 0.0) return {0.0, true};
  return {std::sqrt(radicand), false};
}

inline ClampedDistance centroid_from_sums(double cross, double within_I, double within_J,
                                          std::size_t n_I, std::size_t n_J) {
  const double a = static_cast<double>(n_I);
  const double b = static_cast<double>(n_J);
  return clamp_sqrt(cross / (a * b) - within_I / (a * a) - within_J / (b * b));
}

inline ClampedDistance ward_from_sums(double cross, double within_I, double within_J,
                                      std::size_t n_I, std::size_t n_J) {
  const double a = static_cast<double>(n_I);
  const double b = static_cast<double>(n_J);
  const double delta_sse = (within_I + within_J + cross) / (a + b) - within_I / a - within_J / b;
  return clamp_sqrt(2.0 * delta_sse);
}

}  // namespace detail

/// Distance between the centroids of I and J, sqrt(S_IJ/(n_I n_J) -
/// S_II/n_I^2 - S_JJ/n_J^2); exact for Euclidean input.
inline ClampedDistance centroid_distance(std::span<const std::size_t> members_I,
                                         std::span<const std::size_t> members_J,
                                         const DissimilarityMatrix& original) {
  return detail::centroid_from_sums(sum_sq_cross(members_I, members_J, original),
                                    sum_sq_within(members_I, original),
                                    sum_sq_within(members_J, original), members_I.size(),
                                    members_J.size());
}

/// Ward height sqrt(2 * (SSE(I u J) - SSE(I) - SSE(J))); two singletons
/// merge at their input distance.
inline ClampedDistance ward_distance(std::span<const std::size_t> members_I,
                                     std::span<const std::size_t> members_J,
                                     const DissimilarityMatrix& original) {
  return detail::ward_from_sums(sum_sq_cross(members_I, members_J, original),
                                sum_sq_within(members_I, original),
                                sum_sq_within(members_J, original), members_I.size(),
                                members_J.size());
}

// ---------------------------------------------------------------------------
// Tie grouping

/// Connected components (of size >= 2) of the graph joining a and b when
/// rounded(a, b) == delta. Each group is sorted; groups are ordered by
/// their first element.
inline std::vector<std::vector<std::size_t>> tie_groups(const TriangularMatrix<double>& rounded,
                                                        double delta) {
  const std::size_t m = rounded.size();
  std::vector<std::size_t> parent(m);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  const auto find = [&parent](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  std::vector<bool> touched(m, false);
  for (std::size_t i = 1; i < m; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (rounded(i, j) == delta) {
        touched[i] = touched[j] = true;
        const auto ri = find(i);
        const auto rj = find(j);
        if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
      }
    }
  }
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> slot(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!touched[i]) continue;
    const auto r = find(i);
    if (slot[r] == m) {
      slot[r] = groups.size();
      groups.emplace_back();
    }
    groups[slot[r]].push_back(i);
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Engine

struct ActiveCluster {
  std::size_t node = 0;               // id in the growing tree
  std::vector<std::size_t> members;   // sorted individuals
  double within_sq = 0.0;             // sum of d^2 over member pairs (centroid/Ward)

  [[nodiscard]] std::size_t size() const { return members.size(); }
};

/// Clusters still to be merged and the (unrounded) distances between them,
/// indexed by position in `clusters`.
struct ActiveClusterSet {
  std::vector<ActiveCluster> clusters;
  TriangularMatrix<double> distances;

  [[nodiscard]] std::size_t size() const { return clusters.size(); }
};

struct Band {
  double min = 0.0;
  double max = 0.0;
};

/// One iteration: every tie group merged at the rounded minimum `level`.
struct MergeStep {
  std::size_t iteration = 0;
  double level = 0.0;
  std::vector<std::vector<std::size_t>> groups;  // positions in the `before` set
  std::vector<std::size_t> new_nodes;            // tree ids, parallel to groups
  std::vector<Band> bands;
};

using StepObserver = std::function<void(const ActiveClusterSet& before, const MergeStep& step,
                                        const ActiveClusterSet& after)>;

namespace detail {

class Agglomerator {
 public:
  Agglomerator(const DissimilarityMatrix& input, const MethodSpec& method, Precision precision)
      : input_(input), method_(method), precision_(precision) {}

  Multidendrogram run(const StepObserver& observer) {
    method_.validate();
    const std::size_t n = input_.size();
    tree_.labels = input_.labels();
    tree_.method = method_;
    tree_.precision = precision_;
    tree_.nodes.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      tree_.nodes.push_back(TreeNode{i, {i}, {}, 0.0, 0.0});
    }

    active_.clusters.reserve(n);
    for (std::size_t i = 0; i < n; ++i) active_.clusters.push_back({i, {i}, 0.0});
    active_.distances = input_.values();
    rounded_ = TriangularMatrix<double>(n);
    for (std::size_t i = 1; i < n; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        rounded_.set(i, j, round_half_up(active_.distances(i, j), precision_));
      }
    }

    std::size_t iteration = 0;
    while (active_.size() > 1) {
      step(iteration++, observer);
    }
    tree_.root = tree_.nodes.size() - 1;
    tree_.inversion_count = count_inversions(tree_);
    if (clamped_) {
      tree_.warnings.push_back(
          "negative radicand clamped to 0 in " + to_string(method_.kind) +
          " update (input is not Euclidean)");
    }
    return std::move(tree_);
  }

 private:
  void step(std::size_t iteration, const StepObserver& observer) {
    const auto values = rounded_.condensed();
    const double delta = *std::min_element(values.begin(), values.end());

    MergeStep merge;
    merge.iteration = iteration;
    merge.level = delta;
    merge.groups = tie_groups(rounded_, delta);
    const auto first_member = [this](std::size_t pos) {
      return active_.clusters[pos].members.front();
    };
    for (auto& g : merge.groups) {
      std::sort(g.begin(), g.end(),
                [&](std::size_t a, std::size_t b) { return first_member(a) < first_member(b); });
    }
    std::sort(merge.groups.begin(), merge.groups.end(),
              [&](const auto& a, const auto& b) { return first_member(a[0]) < first_member(b[0]); });

    std::vector<bool> merged(active_.size(), false);
    ActiveClusterSet next;
    for (std::size_t pos = 0; pos < active_.size(); ++pos) {
      for (const auto& g : merge.groups) {
        if (std::find(g.begin(), g.end(), pos) != g.end()) merged[pos] = true;
      }
    }
    std::vector<std::size_t> survivors;
    for (std::size_t pos = 0; pos < active_.size(); ++pos) {
      if (!merged[pos]) {
        survivors.push_back(pos);
        next.clusters.push_back(active_.clusters[pos]);
      }
    }

    for (const auto& g : merge.groups) {
      Band band{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
      for (std::size_t a = 0; a < g.size(); ++a) {
        for (std::size_t b = a + 1; b < g.size(); ++b) {
          const double d = active_.distances(g[a], g[b]);
          band.min = std::min(band.min, d);
          band.max = std::max(band.max, d);
        }
      }
      TreeNode node;
      node.id = tree_.nodes.size();
      for (auto pos : g) {
        const auto& c = active_.clusters[pos];
        node.children.push_back(c.node);
        node.members.insert(node.members.end(), c.members.begin(), c.members.end());
      }
      std::sort(node.members.begin(), node.members.end());
      node.band_min = band.min;
      node.band_max = band.max;

      ActiveCluster cluster{node.id, node.members, 0.0};
      if (uses_original()) cluster.within_sq = sum_sq_within(cluster.members, input_);

      merge.new_nodes.push_back(node.id);
      merge.bands.push_back(band);
      tree_.nodes.push_back(std::move(node));
      next.clusters.push_back(std::move(cluster));
    }

    const std::size_t m = next.clusters.size();
    const std::size_t kept = survivors.size();
    next.distances = TriangularMatrix<double>(m);
    TriangularMatrix<double> next_rounded(m);
    for (std::size_t a = 1; a < kept; ++a) {
      for (std::size_t b = 0; b < a; ++b) {
        next.distances.set(a, b, active_.distances(survivors[a], survivors[b]));
        next_rounded.set(a, b, rounded_(survivors[a], survivors[b]));
      }
    }
    for (std::size_t a = kept; a < m; ++a) {
      const auto& group_a = merge.groups[a - kept];
      for (std::size_t b = 0; b < a; ++b) {
        double d = 0.0;
        if (b < kept) {
          const std::size_t single[1] = {survivors[b]};
          d = update(group_a, single, next.clusters[a], next.clusters[b]);
        } else {
          d = update(group_a, merge.groups[b - kept], next.clusters[a], next.clusters[b]);
        }
        if (!std::isfinite(d)) {
          throw NumericOverflow("merge step " + std::to_string(iteration) +
                                ": non-finite distance between new node " +
                                std::to_string(next.clusters[a].node) + " and node " +
                                std::to_string(next.clusters[b].node));
        }
        next.distances.set(a, b, d);
        next_rounded.set(a, b, round_half_up(d, precision_));
      }
    }

    if (observer) observer(active_, merge, next);
    active_ = std::move(next);
    rounded_ = std::move(next_rounded);
  }

  [[nodiscard]] bool uses_original() const {
    return method_.kind == MethodKind::centroid || method_.kind == MethodKind::ward;
  }

  // Distance between the union of subclusters I and the union of J, where
  // I and J are positions in the current (pre-merge) active set.
  double update(std::span<const std::size_t> I, std::span<const std::size_t> J,
                const ActiveCluster& union_I, const ActiveCluster& union_J) {
    if (uses_original()) {
      const double cross = sum_sq_cross(union_I.members, union_J.members, input_);
      const auto r = method_.kind == MethodKind::centroid
                         ? centroid_from_sums(cross, union_I.within_sq, union_J.within_sq,
                                              union_I.size(), union_J.size())
                         : ward_from_sums(cross, union_I.within_sq, union_J.within_sq,
                                          union_I.size(), union_J.size());
      clamped_ = clamped_ || r.clamped;
      return r.value;
    }

    std::vector<std::size_t> sizes_I;
    std::vector<std::size_t> sizes_J;
    for (auto i : I) sizes_I.push_back(active_.clusters[i].size());
    for (auto j : J) sizes_J.push_back(active_.clusters[j].size());
    std::vector<double> cross;
    cross.reserve(I.size() * J.size());
    for (auto i : I) {
      for (auto j : J) cross.push_back(active_.distances(i, j));
    }

    if (method_.kind == MethodKind::versatile) {
      if (method_.power.kind() == PowerParam::Kind::negative_infinity) return sl_distance(cross);
      if (method_.power.kind() == PowerParam::Kind::positive_infinity) return cl_distance(cross);
      if (method_.weighting == Weighting::weighted) {
        return versatile_distance_weighted(I.size(), J.size(), cross, method_.power);
      }
      return versatile_distance_unweighted(sizes_I, sizes_J, cross, method_.power);
    }

    const auto within = [this](std::span<const std::size_t> positions) {
      const std::size_t k = positions.size();
      std::vector<double> w(k * k, 0.0);
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
          w[a * k + b] = active_.distances(positions[a], positions[b]);
        }
      }
      return w;
    };
    return flexible_distance(sizes_I, sizes_J, cross, within(I), within(J), method_.beta,
                             method_.weighting);
  }

  const DissimilarityMatrix& input_;
  MethodSpec method_;
  Precision precision_;
  Multidendrogram tree_;
  ActiveClusterSet active_;
  TriangularMatrix<double> rounded_;
  bool clamped_ = false;
};

}  // namespace detail

/// Variable-group agglomerative clustering.
///
/// Each iteration rounds the active distances to `precision`, takes their
/// minimum, and merges every connected component of the "rounded distance
/// equals the minimum" graph into one node at once, so ties are grouped and
/// never broken. Internal distances stay unrounded. The observer, if any,
/// sees every iteration's before/after state.
inline Multidendrogram cluster(const DissimilarityMatrix& matrix, const MethodSpec& method,
                               Precision precision = Precision::exact(),
                               const StepObserver& observer = {}) {
  return detail::Agglomerator(matrix, method, precision).run(observer);
}

}  // namespace verlink::linkage
