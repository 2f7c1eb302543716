#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "verlink/verlink.hpp"

namespace verlink::testing {

inline std::string data_path(const std::string& name) {
  return std::string(VERLINK_TEST_DATA) + "/" + name;
}

/// The four-individual toy: Alice, Bob, Carol, Dave on a line at 0, 7, 16, 28.
inline DissimilarityMatrix toy_matrix() {
  return DissimilarityMatrix::from_condensed({7, 16, 9, 28, 21, 12}, 4,
                                             {"Alice", "Bob", "Carol", "Dave"});
}

/// Continuous uniform distances; ties have probability zero.
inline DissimilarityMatrix random_matrix(std::mt19937_64& rng, std::size_t n, double lo = 1.0,
                                         double hi = 100.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> values(n * (n - 1) / 2);
  for (auto& v : values) v = dist(rng);
  return DissimilarityMatrix::from_condensed(std::move(values), n);
}

/// Small integer distances, so equal values are common.
inline DissimilarityMatrix tied_matrix(std::mt19937_64& rng, std::size_t n, int levels = 6) {
  std::uniform_int_distribution<int> dist(1, levels);
  std::vector<double> values(n * (n - 1) / 2);
  for (auto& v : values) v = dist(rng);
  return DissimilarityMatrix::from_condensed(std::move(values), n);
}

inline CoordinateDataset random_points(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> dist(0.0, 3.0);
  CoordinateDataset data;
  data.rows = rows;
  data.cols = cols;
  data.values.resize(rows * cols);
  for (auto& v : data.values) v = dist(rng);
  for (std::size_t r = 0; r < rows; ++r) data.labels.push_back(std::to_string(r));
  for (std::size_t c = 0; c < cols; ++c) data.feature_names.push_back("f" + std::to_string(c));
  return data;
}

inline Multidendrogram make_tree(std::size_t n) {
  Multidendrogram tree;
  for (std::size_t i = 0; i < n; ++i) {
    tree.nodes.push_back({i, {i}, {}, 0.0, 0.0});
    tree.labels.push_back("x" + std::to_string(i));
  }
  return tree;
}

/// Binary tree adding one individual at a time: ((((0,1),2),3),...).
inline Multidendrogram chain_tree(std::size_t n) {
  auto tree = make_tree(n);
  std::size_t prev = 0;
  for (std::size_t k = 1; k < n; ++k) {
    TreeNode node;
    node.id = tree.nodes.size();
    node.children = {prev, k};
    node.members = tree.nodes[prev].members;
    node.members.push_back(k);
    node.band_min = node.band_max = static_cast<double>(k);
    tree.nodes.push_back(node);
    prev = node.id;
  }
  tree.root = prev;
  return tree;
}

/// A single internal node joining every individual.
inline Multidendrogram flat_tree(std::size_t n) {
  auto tree = make_tree(n);
  TreeNode root;
  root.id = n;
  for (std::size_t i = 0; i < n; ++i) {
    root.children.push_back(i);
    root.members.push_back(i);
  }
  root.band_min = root.band_max = 1.0;
  tree.nodes.push_back(root);
  tree.root = n;
  return tree;
}

/// Relabels individuals by `perm` (new index k holds old individual perm[k]).
inline DissimilarityMatrix permute(const DissimilarityMatrix& m, const std::vector<std::size_t>& perm) {
  std::vector<double> values;
  std::vector<std::string> labels;
  for (auto p : perm) labels.push_back(m.label(p));
  for (std::size_t i = 1; i < perm.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) values.push_back(m(perm[i], perm[j]));
  }
  return DissimilarityMatrix::from_condensed(std::move(values), perm.size(), std::move(labels));
}

/// Maps a tree built on a permuted matrix back to the original indices.
inline Multidendrogram unpermute(Multidendrogram tree, const std::vector<std::size_t>& perm) {
  for (auto& node : tree.nodes) {
    for (auto& m : node.members) m = perm[m];
    std::sort(node.members.begin(), node.members.end());
  }
  return tree;
}

/// Heights of the internal nodes in merge order.
inline std::vector<double> merge_heights(const Multidendrogram& tree) {
  std::vector<double> h;
  for (const auto& node : tree.nodes) {
    if (!node.is_leaf()) h.push_back(node.band_min);
  }
  return h;
}

inline std::vector<PowerParam> power_grid() {
  std::vector<PowerParam> grid{PowerParam::negative_infinity()};
  for (double p : {-50.0, -8.0, -3.0, -1.0, -0.5, -0.001, 0.0, 0.001, 0.5, 1.0, 3.0, 8.0, 50.0}) {
    grid.push_back(PowerParam::finite(p));
  }
  grid.push_back(PowerParam::positive_infinity());
  return grid;
}

inline std::vector<double> beta_grid() { return {-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0}; }

}  // namespace verlink::testing
