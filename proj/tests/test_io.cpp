#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "test_support.hpp"

namespace verlink {
namespace {

using io::MatrixFormat;
using testing::toy_matrix;

const Precision kTwo = Precision::decimals(2);

std::size_t count_of(const std::string& haystack, const std::string& needle) {
  std::size_t count = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const InvalidInput& e) {
    return e.what();
  }
  return "";
}

// ---------------------------------------------------------------------------
// Distance matrices

TEST(ReadMatrix, UpperTriangularSquareCsv) {
  const auto r = io::parse_distance_matrix(
      ",Alice,Bob,Carol,Dave\n"
      "Alice,0,7,16,28\n"
      "Bob,,0,9,21\n"
      "Carol,,,0,12\n"
      "Dave,,,,0\n",
      MatrixFormat::square);
  EXPECT_EQ(r.matrix, toy_matrix());
  EXPECT_EQ(r.matrix(1, 2), 9.0);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(ReadMatrix, ToyFixtureFile) {
  const auto r = io::read_distance_matrix(testing::data_path("toy.csv"), MatrixFormat::square);
  EXPECT_EQ(r.matrix, toy_matrix());
}

TEST(ReadMatrix, WhitespaceWithoutLabels) {
  const auto r = io::parse_distance_matrix("0 7 16\n7 0 9\n16 9 0\n", MatrixFormat::square);
  EXPECT_EQ(r.matrix(0, 2), 16.0);
  EXPECT_EQ(r.matrix.label(2), "2");
}

TEST(ReadMatrix, OneByOneIsRejected) {
  const auto msg =
      error_of([] { (void)io::parse_distance_matrix("0\n", MatrixFormat::square); });
  EXPECT_NE(msg.find("n >= 2"), std::string::npos) << msg;
}

TEST(ReadMatrix, TinyAsymmetryIsAveragedWithWarning) {
  const auto r = io::parse_distance_matrix("0,5,1\n5.000000000001,0,2\n1,2,0\n",
                                           MatrixFormat::square);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NEAR(r.matrix(0, 1), 5.0000000000005, 1e-15);
}

TEST(ReadMatrix, LargeAsymmetryIsAnError) {
  EXPECT_THROW((void)io::parse_distance_matrix("0,5\n6,0\n", MatrixFormat::square), InvalidInput);
}

TEST(ReadMatrix, RaggedAndNonNumericErrorsCarryLocation) {
  const auto ragged =
      error_of([] { (void)io::parse_distance_matrix("0,1,2\n1,0\n2,1,0\n", MatrixFormat::square); });
  EXPECT_NE(ragged.find("line 2"), std::string::npos) << ragged;
  const auto text =
      error_of([] { (void)io::parse_distance_matrix("0,1,2\n1,0,x\n2,1,0\n", MatrixFormat::square); });
  EXPECT_NE(text.find("line 2"), std::string::npos) << text;
  EXPECT_NE(text.find("column 3"), std::string::npos) << text;
}

TEST(ReadMatrix, NonZeroDiagonalIsAnError) {
  EXPECT_THROW((void)io::parse_distance_matrix("1,2\n2,0\n", MatrixFormat::square), InvalidInput);
}

TEST(ReadMatrix, LowerTriangularWithAndWithoutDiagonal) {
  const auto strict = io::parse_distance_matrix("7\n16 9\n28 21 12\n", MatrixFormat::lower_triangular);
  EXPECT_EQ(strict.matrix.values(), toy_matrix().values());
  const auto diag =
      io::parse_distance_matrix("0\n7 0\n16 9 0\n28 21 12 0\n", MatrixFormat::lower_triangular);
  EXPECT_EQ(diag.matrix.values(), toy_matrix().values());
}

TEST(ReadMatrix, CondensedList) {
  const auto r = io::parse_distance_matrix(
      "Alice,Bob,7\nAlice,Carol,16\nBob,Carol,9\nAlice,Dave,28\nBob,Dave,21\nCarol,Dave,12\n",
      MatrixFormat::condensed_list);
  EXPECT_EQ(r.matrix, toy_matrix());
  EXPECT_THROW((void)io::parse_distance_matrix("a,b,1\na,c,2\n", MatrixFormat::condensed_list),
               InvalidInput);
}

TEST(ReadMatrix, EmitReadRoundTrip) {
  std::mt19937_64 rng(3);
  const auto m = testing::random_matrix(rng, 9);
  for (auto f : {MatrixFormat::square, MatrixFormat::lower_triangular, MatrixFormat::condensed_list}) {
    const auto back = io::parse_distance_matrix(io::emit_distance_matrix(m, f), f);
    EXPECT_EQ(back.matrix, m);
  }
  const auto toy = io::parse_distance_matrix(io::emit_distance_matrix(toy_matrix(), MatrixFormat::square),
                                             MatrixFormat::square);
  EXPECT_EQ(toy.matrix, toy_matrix());
}

TEST(ReadMatrix, MissingFile) {
  EXPECT_THROW((void)io::read_distance_matrix("/nonexistent/m.csv", MatrixFormat::square),
               InvalidInput);
}

// ---------------------------------------------------------------------------
// Feature tables

TEST(FeatureCsv, Iris) {
  io::FeatureCsvOptions opts;
  opts.label_column = "class";
  const auto data = io::read_feature_csv(testing::data_path("iris.csv"), opts);
  EXPECT_EQ(data.rows, 150u);
  EXPECT_EQ(data.cols, 4u);
  EXPECT_EQ(data.labels.front(), "Iris-setosa");
  EXPECT_DOUBLE_EQ(data(0, 0), 5.1);
}

TEST(FeatureCsv, IrisDropColumns) {
  io::FeatureCsvOptions opts;
  opts.drop_columns = {"class"};
  const auto data = io::read_feature_csv(testing::data_path("iris.csv"), opts);
  EXPECT_EQ(data.cols, 4u);
  EXPECT_EQ(data.labels[149], "149");
}

TEST(FeatureCsv, Wine) {
  io::FeatureCsvOptions opts;
  opts.drop_columns = {"0"};
  const auto data = io::read_feature_csv(testing::data_path("wine.csv"), opts);
  EXPECT_EQ(data.rows, 178u);
  EXPECT_EQ(data.cols, 13u);
  EXPECT_EQ(data.feature_names.front(), "alcohol");
}

TEST(FeatureCsv, NonNumericCellNamesRowAndColumn) {
  const auto msg = error_of([] { (void)io::parse_feature_csv("a,b\n1,2\n3,oops\n"); });
  EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("'b'"), std::string::npos) << msg;
}

TEST(FeatureCsv, MissingValuesListRows) {
  const auto msg = error_of([] { (void)io::parse_feature_csv("a,b\n1,2\n3,?\nNA,4\n5,6\n"); });
  EXPECT_NE(msg.find("rows 2, 3"), std::string::npos) << msg;
}

TEST(FeatureCsv, NoFeatureColumns) {
  io::FeatureCsvOptions opts;
  opts.drop_columns = {"a"};
  EXPECT_THROW((void)io::parse_feature_csv("a\n1\n2\n", opts), InvalidInput);
}

TEST(Standardize, Examples) {
  auto data = io::parse_feature_csv("x,c\n1,5\n2,5\n3,5\n");
  std::vector<std::string> warnings;
  data = io::standardize(std::move(data), &warnings);
  EXPECT_NEAR(data(0, 0), -1.0, 1e-15);
  EXPECT_NEAR(data(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(data(2, 0), 1.0, 1e-15);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(data(r, 1), 0.0);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("'c'"), std::string::npos);
}

TEST(Standardize, IrisMoments) {
  io::FeatureCsvOptions opts;
  opts.label_column = "class";
  const auto data = io::standardize(io::read_feature_csv(testing::data_path("iris.csv"), opts));
  for (std::size_t c = 0; c < data.cols; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < data.rows; ++r) mean += data(r, c);
    mean /= static_cast<double>(data.rows);
    double ss = 0.0;
    for (std::size_t r = 0; r < data.rows; ++r) ss += (data(r, c) - mean) * (data(r, c) - mean);
    EXPECT_LT(std::fabs(mean), 1e-12);
    EXPECT_NEAR(std::sqrt(ss / static_cast<double>(data.rows - 1)), 1.0, 1e-12);
  }
}

TEST(ScaleMinMax, UnitRange) {
  const auto data = io::scale_min_max(io::parse_feature_csv("x\n2\n4\n10\n"));
  EXPECT_EQ(data(0, 0), 0.0);
  EXPECT_EQ(data(1, 0), 0.25);
  EXPECT_EQ(data(2, 0), 1.0);
}

TEST(Euclidean, LineEmbeddingGivesToy) {
  const auto data = io::parse_feature_csv("name,x\nAlice,0\nBob,7\nCarol,16\nDave,28\n",
                                          io::FeatureCsvOptions{"name", {}});
  EXPECT_EQ(io::euclidean_distances(data), toy_matrix());
}

TEST(Euclidean, DuplicateRowsAndTriangleInequality) {
  const auto dup = io::euclidean_distances(io::parse_feature_csv("x,y\n1,2\n1,2\n3,4\n"));
  EXPECT_EQ(dup(0, 1), 0.0);
  std::mt19937_64 rng(5);
  const auto m = io::euclidean_distances(testing::random_points(rng, 25, 3));
  for (std::size_t i = 0; i < 25; ++i) {
    for (std::size_t j = 0; j < 25; ++j) {
      for (std::size_t k = 0; k < 25; ++k) {
        EXPECT_LE(m(i, k), m(i, j) + m(j, k) + 1e-12);
      }
    }
  }
}

TEST(Euclidean, FeaturePermutationInvariance) {
  std::mt19937_64 rng(8);
  auto data = testing::random_points(rng, 15, 4);
  auto swapped = data;
  for (std::size_t r = 0; r < data.rows; ++r) {
    swapped(r, 0) = data(r, 3);
    swapped(r, 3) = data(r, 0);
  }
  const auto a = linkage::cluster(io::euclidean_distances(data), MethodSpec::ward());
  const auto b = linkage::cluster(io::euclidean_distances(swapped), MethodSpec::ward());
  EXPECT_TRUE(reference::trees_equivalent(a, b, 1e-12));
}

// ---------------------------------------------------------------------------
// Tree documents

TEST(TreeJson, GeometricToyDocument) {
  const auto tree = linkage::cluster(toy_matrix(), MethodSpec::geometric_linkage(), kTwo);
  const auto doc = nlohmann::json::parse(io::emit_tree_json(tree));
  EXPECT_EQ(doc["schema_version"], 1);
  EXPECT_EQ(doc["precision"], 2);
  EXPECT_EQ(doc["method"]["kind"], "versatile");
  EXPECT_EQ(doc["method"]["parameter"], 0.0);
  const auto& root = doc["nodes"][doc["root"].get<std::size_t>()];
  EXPECT_EQ(root["children"].size(), 3u);
  EXPECT_NEAR(root["band_min"].get<double>(), 12.0, 1e-12);
  EXPECT_EQ(root["band_max"].get<double>(), std::sqrt(588.0));
  EXPECT_EQ(doc["nodes"][0]["label"], "Alice");
}

TEST(TreeJson, RoundTripIsLossless) {
  std::mt19937_64 rng(12);
  for (const auto& method : {MethodSpec::single_linkage(), MethodSpec::complete_linkage(Weighting::weighted),
                             MethodSpec::versatile(PowerParam::finite(-2.5)), MethodSpec::flexible(-0.25),
                             MethodSpec::centroid(), MethodSpec::ward()}) {
    const auto m = testing::tied_matrix(rng, 10);
    const auto tree = linkage::cluster(m, method, Precision::decimals(3));
    const auto text = io::emit_tree_json(tree);
    const auto back = io::parse_tree_json(text);
    EXPECT_EQ(back, tree) << method.describe();
    EXPECT_EQ(io::emit_tree_json(back), text);
  }
}

TEST(TreeJson, UnknownSchemaVersion) {
  auto doc = nlohmann::json::parse(
      io::emit_tree_json(linkage::cluster(toy_matrix(), MethodSpec::ward())));
  doc["schema_version"] = 99;
  const auto msg = error_of([&] { (void)io::parse_tree_json(doc.dump()); });
  EXPECT_NE(msg.find("schema_version 99"), std::string::npos) << msg;
}

TEST(TreeJson, MalformedDocuments) {
  EXPECT_THROW((void)io::parse_tree_json("{"), InvalidInput);
  EXPECT_THROW((void)io::parse_tree_json("{\"nodes\": []}"), InvalidInput);
  auto doc = nlohmann::json::parse(
      io::emit_tree_json(linkage::cluster(toy_matrix(), MethodSpec::ward())));
  doc["nodes"][5]["members"] = {0, 1};
  EXPECT_THROW((void)io::parse_tree_json(doc.dump()), InvalidInput);
}

TEST(Newick, GeometricToy) {
  const auto tree = linkage::cluster(toy_matrix(), MethodSpec::geometric_linkage(), kTwo);
  EXPECT_EQ(io::emit_newick(tree, kTwo), "((Alice:7,Bob:7):5,Carol:12,Dave:12)[max=24.25];");
}

TEST(Newick, SingleLinkageToy) {
  const auto tree = linkage::cluster(toy_matrix(), MethodSpec::single_linkage(), kTwo);
  EXPECT_EQ(io::emit_newick(tree, kTwo), "(((Alice:7,Bob:7):2,Carol:9):3,Dave:12);");
}

TEST(Newick, TwoLeaves) {
  const auto m = matrix_from_condensed({5.0}, 2, {"A", "B"});
  EXPECT_EQ(io::emit_newick(linkage::cluster(m, MethodSpec::arithmetic_linkage()), Precision::exact()),
            "(A:5,B:5);");
}

TEST(Newick, QuotesAwkwardLabels) {
  const auto m = matrix_from_condensed({5.0}, 2, {"it's", "a b"});
  EXPECT_EQ(io::emit_newick(linkage::cluster(m, MethodSpec::ward()), Precision::exact()),
            "('it''s':5,'a b':5);");
}

TEST(Newick, CentroidInversionWarns) {
  const auto m = matrix_from_condensed({1.0, 1.01, 1.02}, 3);
  std::vector<std::string> warnings;
  const auto text =
      io::emit_newick(linkage::cluster(m, MethodSpec::centroid()), Precision::decimals(3), &warnings);
  EXPECT_NE(text.find(":-"), std::string::npos) << text;
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Svg, BandRectangles) {
  io::SvgOptions options;
  options.precision = kTwo;
  const auto gl = io::emit_svg(linkage::cluster(toy_matrix(), MethodSpec::geometric_linkage(), kTwo),
                               options);
  EXPECT_EQ(count_of(gl, "class=\"band\""), 1u);
  EXPECT_NE(gl.find("<svg"), std::string::npos);
  EXPECT_NE(gl.find(">Carol<"), std::string::npos);
  const auto sl = io::emit_svg(linkage::cluster(toy_matrix(), MethodSpec::single_linkage(), kTwo),
                               options);
  EXPECT_EQ(count_of(sl, "class=\"band\""), 0u);
}

TEST(Svg, Deterministic) {
  const auto tree = linkage::cluster(toy_matrix(), MethodSpec::geometric_linkage(), kTwo);
  EXPECT_EQ(io::emit_svg(tree), io::emit_svg(tree));
  EXPECT_EQ(io::emit_svg(tree),
            io::emit_svg(linkage::cluster(toy_matrix(), MethodSpec::geometric_linkage(), kTwo)));
}

}  // namespace
}  // namespace verlink
