#pragma once

// Independent oracles used to cross-check the variable-group engine: a
// classic pair-group agglomerator, a direct (non-combinatorial) p-mean over
// original pairs, and a coordinate-space centroid/SSE computation.
//
// Everything here is debug-grade: O(n^3) or worse.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "verlink/core.hpp"
#include "verlink/linkage.hpp"

namespace verlink::reference {

namespace detail {

// Plain p-mean in extended precision, no stabilization or canonical order.
inline long double naive_power_mean(std::span<const long double> values, PowerParam p) {
  if (p.kind() == PowerParam::Kind::negative_infinity) {
    return *std::min_element(values.begin(), values.end());
  }
  if (p.kind() == PowerParam::Kind::positive_infinity) {
    return *std::max_element(values.begin(), values.end());
  }
  const auto count = static_cast<long double>(values.size());
  const bool has_zero = std::find(values.begin(), values.end(), 0.0L) != values.end();
  if (p.is_geometric()) {
    if (has_zero) return 0.0L;
    long double logs = 0.0L;
    for (auto v : values) logs += std::log(v);
    return std::exp(logs / count);
  }
  const long double power = p.value();
  if (power < 0 && has_zero) return 0.0L;
  long double acc = 0.0L;
  for (auto v : values) acc += std::pow(v, power);
  return std::pow(acc / count, 1.0L / power);
}

}  // namespace detail

/// p-mean of d(x, y) over every x in I, y in J, from the original matrix.
inline double direct_versatile(std::span<const std::size_t> members_I,
                               std::span<const std::size_t> members_J,
                               const DissimilarityMatrix& original, PowerParam p) {
  std::vector<long double> values;
  values.reserve(members_I.size() * members_J.size());
  for (auto x : members_I) {
    for (auto y : members_J) values.push_back(original(x, y));
  }
  if (values.empty()) throw InvalidInput("direct_versatile: empty cluster");
  return static_cast<double>(detail::naive_power_mean(values, p));
}

// ---------------------------------------------------------------------------
// Pair-group agglomeration

namespace detail {

struct PairCluster {
  std::size_t node;
  std::vector<std::size_t> members;
};

// D(k, i u j) for a binary merge. Centroid and Ward values are squared
// (Lance-Williams on squared distances).
inline double binary_update(const MethodSpec& method, const DissimilarityMatrix& original,
                            const PairCluster& i, const PairCluster& j, const PairCluster& k,
                            const std::vector<std::size_t>& merged_members, double d_ik,
                            double d_jk, double d_ij) {
  const double ni = static_cast<double>(i.members.size());
  const double nj = static_cast<double>(j.members.size());
  const double nk = static_cast<double>(k.members.size());
  switch (method.kind) {
    case MethodKind::versatile: {
      if (method.weighting == Weighting::unweighted ||
          !method.power.is_finite()) {
        return direct_versatile(merged_members, k.members, original, method.power);
      }
      const long double pair[2] = {d_ik, d_jk};
      return static_cast<double>(naive_power_mean(pair, method.power));
    }
    case MethodKind::flexible: {
      const double b = method.beta;
      if (method.weighting == Weighting::unweighted) {
        return (1.0 - b) * (ni * d_ik + nj * d_jk) / (ni + nj) + b * d_ij;
      }
      return (1.0 - b) * (d_ik + d_jk) / 2.0 + b * d_ij;
    }
    case MethodKind::centroid: {
      const double n = ni + nj;
      return (ni * d_ik + nj * d_jk) / n - ni * nj * d_ij / (n * n);
    }
    case MethodKind::ward:
      return ((ni + nk) * d_ik + (nj + nk) * d_jk - nk * d_ij) / (ni + nj + nk);
  }
  return 0.0;
}

inline bool squared_scale(const MethodSpec& m) {
  return m.kind == MethodKind::centroid || m.kind == MethodKind::ward;
}

inline double height_of(const MethodSpec& m, double stored) {
  return squared_scale(m) ? std::sqrt(std::max(0.0, stored)) : stored;
}

}  // namespace detail

/// Classic binary agglomeration. Among the pairs at the minimum (rounded)
/// distance one is picked uniformly at random from `seed`.
inline Multidendrogram pair_group_cluster(const DissimilarityMatrix& matrix,
                                          const MethodSpec& method, std::uint64_t seed,
                                          Precision precision = Precision::exact()) {
  method.validate();
  const std::size_t n = matrix.size();
  Multidendrogram tree;
  tree.labels = matrix.labels();
  tree.method = method;
  tree.precision = precision;
  for (std::size_t i = 0; i < n; ++i) tree.nodes.push_back(TreeNode{i, {i}, {}, 0.0, 0.0});

  std::vector<detail::PairCluster> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters.push_back({i, {i}});
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = matrix(i, j);
      dist[i][j] = detail::squared_scale(method) ? d * d : d;
    }
  }
  std::vector<bool> alive(n, true);
  std::mt19937_64 rng(seed);

  for (std::size_t step = 0; step + 1 < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    for (std::size_t a = 0; a < n; ++a) {
      if (!alive[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!alive[b]) continue;
        const double r = round_half_up(detail::height_of(method, dist[a][b]), precision);
        if (r < best) {
          best = r;
          candidates.clear();
        }
        if (r == best) candidates.emplace_back(a, b);
      }
    }
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    const auto [a, b] = candidates[pick(rng)];

    std::vector<std::size_t> members = clusters[a].members;
    members.insert(members.end(), clusters[b].members.begin(), clusters[b].members.end());
    std::sort(members.begin(), members.end());

    TreeNode node;
    node.id = tree.nodes.size();
    const bool a_first = clusters[a].members.front() < clusters[b].members.front();
    node.children = a_first ? std::vector<std::size_t>{clusters[a].node, clusters[b].node}
                            : std::vector<std::size_t>{clusters[b].node, clusters[a].node};
    node.members = members;
    node.band_min = node.band_max = detail::height_of(method, dist[a][b]);
    tree.nodes.push_back(node);

    std::vector<double> updated(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      if (!alive[k] || k == a || k == b) continue;
      updated[k] = detail::binary_update(method, matrix, clusters[a], clusters[b], clusters[k],
                                         members, dist[a][k], dist[b][k], dist[a][b]);
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (!alive[k] || k == a || k == b) continue;
      dist[a][k] = dist[k][a] = updated[k];
    }
    clusters[a] = {node.id, std::move(members)};
    alive[b] = false;
  }
  tree.root = tree.nodes.size() - 1;
  tree.inversion_count = count_inversions(tree);
  return tree;
}

// ---------------------------------------------------------------------------
// Coordinate oracle

struct CoordinateOracleResult {
  double centroid_distance = 0.0;
  double delta_sse = 0.0;
};

/// Centroid distance and Ward's SSE increase computed from coordinates.
inline CoordinateOracleResult coordinate_oracle(const CoordinateDataset& data,
                                                std::span<const std::size_t> members_I,
                                                std::span<const std::size_t> members_J) {
  if (members_I.empty() || members_J.empty()) {
    throw InvalidInput("coordinate_oracle: clusters must be non-empty");
  }
  for (auto x : members_I) {
    if (std::find(members_J.begin(), members_J.end(), x) != members_J.end()) {
      throw InvalidInput("coordinate_oracle: clusters must be disjoint");
    }
  }
  const auto centroid = [&data](std::span<const std::size_t> members) {
    std::vector<long double> c(data.cols, 0.0L);
    for (auto r : members) {
      for (std::size_t f = 0; f < data.cols; ++f) c[f] += data(r, f);
    }
    for (auto& v : c) v /= static_cast<long double>(members.size());
    return c;
  };
  const auto sse = [&](std::span<const std::size_t> members) {
    const auto c = centroid(members);
    long double s = 0.0L;
    for (auto r : members) {
      for (std::size_t f = 0; f < data.cols; ++f) {
        const long double dv = data(r, f) - c[f];
        s += dv * dv;
      }
    }
    return s;
  };
  const auto ci = centroid(members_I);
  const auto cj = centroid(members_J);
  long double d2 = 0.0L;
  for (std::size_t f = 0; f < data.cols; ++f) d2 += (ci[f] - cj[f]) * (ci[f] - cj[f]);

  std::vector<std::size_t> both(members_I.begin(), members_I.end());
  both.insert(both.end(), members_J.begin(), members_J.end());
  return {static_cast<double>(std::sqrt(d2)),
          static_cast<double>(sse(both) - sse(members_I) - sse(members_J))};
}

// ---------------------------------------------------------------------------
// Tree comparison

struct NodeSignature {
  std::vector<std::size_t> members;
  double band_min;
  double band_max;
};

/// Internal nodes keyed by member set, sorted. Two trees over the same leaves
/// are isomorphic iff their member sets coincide.
inline std::vector<NodeSignature> hierarchy_signature(const Multidendrogram& tree) {
  std::vector<NodeSignature> sig;
  for (const auto& node : tree.nodes) {
    if (!node.is_leaf()) sig.push_back({node.members, node.band_min, node.band_max});
  }
  std::sort(sig.begin(), sig.end(),
            [](const auto& a, const auto& b) { return a.members < b.members; });
  return sig;
}

inline bool close(double a, double b, double tol) {
  return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

/// Same member-set hierarchy with bands equal within `tol` (relative).
inline bool trees_equivalent(const Multidendrogram& a, const Multidendrogram& b,
                             double tol = 1e-9) {
  if (a.leaf_count() != b.leaf_count()) return false;
  const auto sa = hierarchy_signature(a);
  const auto sb = hierarchy_signature(b);
  if (sa.size() != sb.size()) return false;
  for (std::size_t k = 0; k < sa.size(); ++k) {
    if (sa[k].members != sb[k].members || !close(sa[k].band_min, sb[k].band_min, tol) ||
        !close(sa[k].band_max, sb[k].band_max, tol)) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Run verification

struct VerifyReport {
  Multidendrogram tree;
  bool ties_present = false;
  /// Unweighted versatile (and SL/CL): engine distance vs direct p-mean.
  std::optional<double> max_combinatorial_deviation;
  /// Centroid/Ward: engine distance vs a variable-group recurrence on
  /// squared centroid distances.
  std::optional<double> max_identity_residual;
  /// Empty when skipped because of ties.
  std::optional<bool> pair_group_agrees;
  std::vector<std::string> notes;
  double tolerance = 1e-6;

  [[nodiscard]] bool passed() const {
    const auto ok = [this](const std::optional<double>& v) { return !v || *v <= tolerance; };
    return ok(max_combinatorial_deviation) && ok(max_identity_residual) &&
           pair_group_agrees.value_or(true);
  }
};

namespace detail {

inline double relative_deviation(double engine, double oracle, double scale) {
  const double denom = std::max({std::fabs(engine), std::fabs(oracle), scale * 1e-9});
  return denom == 0.0 ? 0.0 : std::fabs(engine - oracle) / denom;
}

}  // namespace detail

/// Runs the engine and every applicable oracle. Deviations above
/// `tolerance` (relative) fail the report.
inline VerifyReport verify_run(const DissimilarityMatrix& matrix, const MethodSpec& method,
                               Precision precision, std::uint64_t seed,
                               double tolerance = 1e-6) {
  VerifyReport report;
  report.tolerance = tolerance;
  const std::size_t n = matrix.size();
  const double scale = *std::max_element(matrix.values().condensed().begin(),
                                         matrix.values().condensed().end());

  const bool direct_applies =
      method.kind == MethodKind::versatile &&
      (method.weighting == Weighting::unweighted || !method.power.is_finite());
  const bool identity_applies =
      method.kind == MethodKind::centroid || method.kind == MethodKind::ward;
  if (direct_applies) report.max_combinatorial_deviation = 0.0;
  if (identity_applies) report.max_identity_residual = 0.0;

  // Squared centroid distances keyed by tree node ids.
  std::unordered_map<std::uint64_t, double> centroid_sq;
  const std::uint64_t stride = 2 * n;
  const auto key = [stride](std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    return static_cast<std::uint64_t>(a) * stride + b;
  };
  if (identity_applies) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) centroid_sq[key(i, j)] = matrix(i, j) * matrix(i, j);
    }
  }

  const auto observer = [&](const linkage::ActiveClusterSet& before, const linkage::MergeStep& step,
                            const linkage::ActiveClusterSet& after) {
    if (step.groups.size() != 1 || step.groups[0].size() != 2) report.ties_present = true;
    const std::size_t m = after.size();
    const std::size_t first_new = m - step.groups.size();

    if (identity_applies) {
      // Combined squared centroid distance between two sets of tree nodes.
      const auto size_of = [&](std::size_t pos) { return before.clusters[pos].size(); };
      const auto combine = [&](const std::vector<std::size_t>& I, const std::vector<std::size_t>& J) {
        double nI = 0.0, nJ = 0.0;
        for (auto i : I) nI += static_cast<double>(size_of(i));
        for (auto j : J) nJ += static_cast<double>(size_of(j));
        long double acc = 0.0L;
        for (auto i : I) {
          for (auto j : J) {
            acc += static_cast<long double>(size_of(i)) * size_of(j) / (nI * nJ) *
                   centroid_sq.at(key(before.clusters[i].node, before.clusters[j].node));
          }
        }
        const auto within = [&](const std::vector<std::size_t>& K, double nK) {
          long double w = 0.0L;
          for (std::size_t a = 0; a < K.size(); ++a) {
            for (std::size_t b = a + 1; b < K.size(); ++b) {
              w += static_cast<long double>(size_of(K[a])) * size_of(K[b]) / (nK * nK) *
                   centroid_sq.at(key(before.clusters[K[a]].node, before.clusters[K[b]].node));
            }
          }
          return w;
        };
        return static_cast<double>(acc - within(I, nI) - within(J, nJ));
      };
      std::vector<std::vector<std::size_t>> sets;  // before-positions per after-cluster
      for (std::size_t a = 0; a < m; ++a) {
        if (a >= first_new) {
          sets.push_back(step.groups[a - first_new]);
        } else {
          for (std::size_t pos = 0; pos < before.size(); ++pos) {
            if (before.clusters[pos].node == after.clusters[a].node) {
              sets.push_back({pos});
              break;
            }
          }
        }
      }
      for (std::size_t a = first_new; a < m; ++a) {
        for (std::size_t b = 0; b < a; ++b) {
          const double c2 = combine(sets[a], sets[b]);
          centroid_sq[key(after.clusters[a].node, after.clusters[b].node)] = c2;
          double oracle = 0.0;
          if (method.kind == MethodKind::centroid) {
            oracle = std::sqrt(std::max(0.0, c2));
          } else {
            const double na = static_cast<double>(after.clusters[a].size());
            const double nb = static_cast<double>(after.clusters[b].size());
            oracle = std::sqrt(std::max(0.0, 2.0 * na * nb / (na + nb) * c2));
          }
          const double dev = detail::relative_deviation(after.distances(a, b), oracle, scale);
          report.max_identity_residual = std::max(*report.max_identity_residual, dev);
        }
      }
    }

    if (direct_applies) {
      for (std::size_t a = first_new; a < m; ++a) {
        for (std::size_t b = 0; b < a; ++b) {
          const double oracle = direct_versatile(after.clusters[a].members,
                                                 after.clusters[b].members, matrix, method.power);
          const double dev = detail::relative_deviation(after.distances(a, b), oracle, scale);
          report.max_combinatorial_deviation = std::max(*report.max_combinatorial_deviation, dev);
        }
      }
    }
  };

  report.tree = linkage::cluster(matrix, method, precision, observer);
  if (!direct_applies && !identity_applies) {
    report.notes.push_back("no direct oracle for " + method.describe() +
                           "; relying on pair-group comparison");
  }
  if (report.ties_present) {
    report.notes.push_back("ties present: pair-group comparison skipped");
  } else {
    const auto pair = pair_group_cluster(matrix, method, seed, precision);
    report.pair_group_agrees = trees_equivalent(report.tree, pair, tolerance);
  }
  return report;
}

}  // namespace verlink::reference
