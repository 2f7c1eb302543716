#pragma once

// Cophenetic (ultrametric) matrix and tree descriptors: cophenetic
// correlation, normalized mean absolute error, space distortion ratio and
// normalized tree balance.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "verlink/core.hpp"

namespace verlink::measures {

/// u(i, j) = height at which i and j are first joined.
using UltrametricMatrix = TriangularMatrix<double>;

/// Heights are band_min of the lowest common ancestor.
inline UltrametricMatrix cophenetic_matrix(const Multidendrogram& tree) {
  const std::size_t n = tree.leaf_count();
  UltrametricMatrix u(n);
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) continue;
    for (std::size_t a = 0; a < node.children.size(); ++a) {
      for (std::size_t b = a + 1; b < node.children.size(); ++b) {
        for (auto x : tree.nodes[node.children[a]].members) {
          for (auto y : tree.nodes[node.children[b]].members) u.set(x, y, node.band_min);
        }
      }
    }
  }
  return u;
}

namespace detail {
inline void require_same_size(std::size_t a, std::size_t b) {
  if (a != b) {
    throw InvalidInput("matrix sizes differ: " + std::to_string(a) + " vs " + std::to_string(b));
  }
}
}  // namespace detail

/// Pearson correlation over the off-diagonal entries. Empty when either
/// side is constant (the coefficient is undefined there).
inline std::optional<double> ccc(const TriangularMatrix<double>& d, const UltrametricMatrix& u) {
  detail::require_same_size(d.size(), u.size());
  const auto x = d.condensed();
  const auto y = u.condensed();
  const double k = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= k;
  my /= k;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline std::optional<double> ccc(const DissimilarityMatrix& d, const UltrametricMatrix& u) {
  return ccc(d.values(), u);
}

/// sum |d - u| / sum d over i < j.
inline double nmae(const TriangularMatrix<double>& d, const UltrametricMatrix& u) {
  detail::require_same_size(d.size(), u.size());
  const auto x = d.condensed();
  const auto y = u.condensed();
  double err = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    err += std::fabs(x[i] - y[i]);
    total += x[i];
  }
  if (total <= 0.0) throw InvalidInput("nmae undefined: all original distances are zero");
  return err / total;
}

inline double nmae(const DissimilarityMatrix& d, const UltrametricMatrix& u) {
  return nmae(d.values(), u);
}

/// (max u - min u) / (max d - min d), extrema over i < j.
inline double sdr(const TriangularMatrix<double>& d, const UltrametricMatrix& u) {
  detail::require_same_size(d.size(), u.size());
  const auto [dlo, dhi] = std::minmax_element(d.condensed().begin(), d.condensed().end());
  const auto [ulo, uhi] = std::minmax_element(u.condensed().begin(), u.condensed().end());
  const double range = *dhi - *dlo;
  if (!(range > 0.0)) throw InvalidInput("sdr undefined: original distances are all equal");
  return (*uhi - *ulo) / range;
}

inline double sdr(const DissimilarityMatrix& d, const UltrametricMatrix& u) {
  return sdr(d.values(), u);
}

/// Entropy of the child-size proportions, logarithm base = child count.
inline double cluster_entropy(std::span<const std::size_t> child_sizes) {
  if (child_sizes.size() < 2) throw InvalidInput("cluster_entropy needs at least 2 children");
  double total = 0.0;
  for (auto s : child_sizes) {
    if (s == 0) throw InvalidInput("cluster_entropy: empty child");
    total += static_cast<double>(s);
  }
  const double base = std::log(static_cast<double>(child_sizes.size()));
  double h = 0.0;
  for (auto s : child_sizes) {
    const double p = static_cast<double>(s) / total;
    h -= p * std::log(p);
  }
  return h / base;
}

/// Mean cluster entropy over the internal nodes.
inline double tree_balance(const Multidendrogram& tree) {
  double sum = 0.0;
  std::size_t count = 0;
  std::vector<std::size_t> sizes;
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) continue;
    sizes.clear();
    for (auto c : node.children) sizes.push_back(tree.nodes[c].members.size());
    sum += cluster_entropy(sizes);
    ++count;
  }
  if (count == 0) throw InvalidInput("tree_balance: tree has no internal nodes");
  return sum / static_cast<double>(count);
}

/// Tree balance of the binary tree that chains individuals one at a time.
inline double min_tree_balance(std::size_t n) {
  if (n < 2) throw InvalidInput("min_tree_balance needs N >= 2");
  double acc = std::log2(static_cast<double>(n));
  for (std::size_t k = 2; k + 1 <= n; ++k) {
    acc += std::log2(static_cast<double>(k)) / static_cast<double>(k + 1);
  }
  return acc / static_cast<double>(n - 1);
}

/// (H - H_min) / (1 - H_min). Defined as 1 for two leaves, where every tree
/// is the same and the denominator vanishes.
inline double ntb(const Multidendrogram& tree) {
  const std::size_t n = tree.leaf_count();
  if (n < 2) throw InvalidInput("ntb needs at least 2 leaves");
  if (n == 2) return 1.0;
  const double h_min = min_tree_balance(n);
  return (tree_balance(tree) - h_min) / (1.0 - h_min);
}

struct DescriptorReport {
  std::optional<double> ccc;  // empty: undefined (constant matrix)
  double nmae = 0.0;
  double sdr = 0.0;
  double ntb = 0.0;
  double tree_balance = 0.0;
  std::size_t inversion_count = 0;
};

/// Every descriptor for `tree` against the matrix it was built from. Leaf i
/// of the tree must correspond to individual i of the matrix.
inline DescriptorReport describe(const DissimilarityMatrix& d, const Multidendrogram& tree) {
  detail::require_same_size(d.size(), tree.leaf_count());
  const auto u = cophenetic_matrix(tree);
  DescriptorReport r;
  r.ccc = ccc(d, u);
  r.nmae = nmae(d, u);
  r.sdr = sdr(d, u);
  r.tree_balance = tree_balance(tree);
  r.ntb = ntb(tree);
  r.inversion_count = tree.inversion_count;
  return r;
}

}  // namespace verlink::measures
