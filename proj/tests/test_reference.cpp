#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "test_support.hpp"

namespace verlink {
namespace {

using reference::pair_group_cluster;
using testing::toy_matrix;

TEST(PairGroup, NoTiesMatchesVariableGroup) {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 40; ++trial) {
    const auto m = testing::random_matrix(rng, 3 + trial % 18);
    for (const auto& method :
         {MethodSpec::single_linkage(), MethodSpec::complete_linkage(),
          MethodSpec::arithmetic_linkage(), MethodSpec::harmonic_linkage(),
          MethodSpec::geometric_linkage(), MethodSpec::versatile(PowerParam::finite(3.0)),
          MethodSpec::arithmetic_linkage(Weighting::weighted),
          MethodSpec::harmonic_linkage(Weighting::weighted), MethodSpec::flexible(-0.25),
          MethodSpec::flexible(0.5, Weighting::weighted), MethodSpec::ward(),
          MethodSpec::centroid()}) {
      const auto engine = linkage::cluster(m, method);
      const auto pair = pair_group_cluster(m, method, 1);
      EXPECT_TRUE(reference::trees_equivalent(engine, pair, 1e-9))
          << method.describe() << " trial " << trial;
    }
  }
}

TEST(PairGroup, GeometricToyTieDependsOnSeed) {
  std::set<std::vector<std::size_t>> second_merges;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    const auto tree = pair_group_cluster(toy_matrix(), MethodSpec::geometric_linkage(), seed,
                                         Precision::decimals(2));
    ASSERT_EQ(tree.internal_count(), 3u);
    for (const auto& node : tree.nodes) EXPECT_LE(node.children.size(), 2u);
    second_merges.insert(tree.node(5).members);
  }
  const std::set<std::vector<std::size_t>> expected{{0, 1, 2}, {2, 3}};
  EXPECT_EQ(second_merges, expected);
}

TEST(PairGroup, TwoIndividualsSeedIndependent) {
  const auto m = matrix_from_condensed({5.0}, 2);
  const auto a = pair_group_cluster(m, MethodSpec::ward(), 1);
  const auto b = pair_group_cluster(m, MethodSpec::ward(), 99);
  EXPECT_EQ(a.nodes, b.nodes);
  EXPECT_EQ(a.node(2).band_min, 5.0);
}

TEST(DirectVersatile, Examples) {
  const auto m = toy_matrix();
  const std::size_t ab[] = {0, 1};
  const std::size_t cd[] = {2, 3};
  const std::size_t abc[] = {0, 1, 2};
  const std::size_t a[] = {0};
  const std::size_t b[] = {1};
  const std::size_t d[] = {3};
  EXPECT_NEAR(reference::direct_versatile(ab, cd, m, PowerParam::finite(1.0)), 18.5, 1e-12);
  EXPECT_NEAR(reference::direct_versatile(abc, d, m, PowerParam::finite(-1.0)), 18.0, 1e-12);
  for (const auto& p : testing::power_grid()) {
    EXPECT_NEAR(reference::direct_versatile(a, b, m, p), 7.0, 1e-12) << p.to_string();
  }
}

TEST(CoordinateOracle, ToyEmbedding) {
  CoordinateDataset line;
  line.rows = 4;
  line.cols = 1;
  line.values = {0, 7, 16, 28};
  const std::size_t ab[] = {0, 1};
  const std::size_t c[] = {2};
  const auto r = reference::coordinate_oracle(line, ab, c);
  EXPECT_NEAR(r.centroid_distance, 12.5, 1e-12);
  // (2 * 1 / 3) * 12.5^2
  EXPECT_NEAR(r.delta_sse, 2.0 / 3.0 * 156.25, 1e-12);
  EXPECT_THROW((void)reference::coordinate_oracle(line, ab, ab), InvalidInput);
  EXPECT_THROW((void)reference::coordinate_oracle(line, ab, {}), InvalidInput);
}

TEST(CoordinateOracle, MatchesMatrixIdentities) {
  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 30; ++trial) {
    const auto data = testing::random_points(rng, 20, 5);
    const auto m = io::euclidean_distances(data);
    std::vector<std::size_t> perm(20);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t ni = 1 + trial % 9;
    const std::size_t nj = 1 + (trial * 7) % 10;
    std::vector<std::size_t> I(perm.begin(), perm.begin() + ni);
    std::vector<std::size_t> J(perm.begin() + ni, perm.begin() + ni + nj);
    const auto oracle = reference::coordinate_oracle(data, I, J);
    const double c = linkage::centroid_distance(I, J, m).value;
    const double w = linkage::ward_distance(I, J, m).value;
    EXPECT_NEAR(c, oracle.centroid_distance, 1e-9 * oracle.centroid_distance);
    EXPECT_NEAR(w * w / 2, oracle.delta_sse, 1e-9 * oracle.delta_sse);
  }
}

TEST(TreesEquivalent, DetectsDifferences) {
  const auto sl = linkage::cluster(toy_matrix(), MethodSpec::single_linkage());
  const auto al = linkage::cluster(toy_matrix(), MethodSpec::arithmetic_linkage());
  EXPECT_TRUE(reference::trees_equivalent(sl, sl));
  EXPECT_FALSE(reference::trees_equivalent(sl, al));
  auto shifted = sl;
  shifted.nodes.back().band_min += 1e-6;
  EXPECT_FALSE(reference::trees_equivalent(sl, shifted));
}

TEST(VerifyRun, ToyArithmeticDeviation) {
  const auto r = reference::verify_run(toy_matrix(), MethodSpec::arithmetic_linkage(),
                                       Precision::exact(), 1);
  ASSERT_TRUE(r.max_combinatorial_deviation.has_value());
  EXPECT_LT(*r.max_combinatorial_deviation, 1e-12);
  EXPECT_TRUE(r.passed());
}

TEST(VerifyRun, RandomCompleteLinkagePairGroupAgrees) {
  std::mt19937_64 rng(97);
  const auto m = testing::random_matrix(rng, 30);
  const auto r =
      reference::verify_run(m, MethodSpec::complete_linkage(), Precision::exact(), 5);
  EXPECT_FALSE(r.ties_present);
  ASSERT_TRUE(r.pair_group_agrees.has_value());
  EXPECT_TRUE(*r.pair_group_agrees);
  EXPECT_TRUE(r.passed());
}

TEST(VerifyRun, GeometricToySkipsPairGroup) {
  const auto r = reference::verify_run(toy_matrix(), MethodSpec::geometric_linkage(),
                                       Precision::decimals(2), 1);
  EXPECT_TRUE(r.ties_present);
  EXPECT_FALSE(r.pair_group_agrees.has_value());
  EXPECT_TRUE(r.passed());
}

TEST(VerifyRun, CentroidAndWardIdentityResiduals) {
  std::mt19937_64 rng(101);
  const auto m = io::euclidean_distances(testing::random_points(rng, 25, 4));
  for (const auto& method : {MethodSpec::centroid(), MethodSpec::ward()}) {
    const auto r = reference::verify_run(m, method, Precision::exact(), 1);
    ASSERT_TRUE(r.max_identity_residual.has_value());
    EXPECT_LT(*r.max_identity_residual, 1e-9);
    EXPECT_TRUE(r.passed());
  }
}

}  // namespace
}  // namespace verlink
