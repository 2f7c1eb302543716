#pragma once

// Shared domain types: triangular matrices, dissimilarity input, method
// selection, tie precision and the multidendrogram tree.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

namespace verlink {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejected input: malformed files, violated preconditions, bad flags.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A distance update produced a non-finite value.
class NumericOverflow : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Number formatting

/// Shortest decimal text that round-trips to the same double.
inline std::string format_shortest(double value) {
  if (value == 0.0) return "0";
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw Error("format_shortest: to_chars failed");
  return std::string(buf.data(), ptr);
}

inline std::string format_fixed(double value, int digits) {
  std::array<char, 512> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value,
                                 std::chars_format::fixed, digits);
  if (ec != std::errc{}) throw Error("format_fixed: to_chars failed");
  return std::string(buf.data(), ptr);
}

namespace detail {
// Shortest round-trip digits, never in exponent notation.
inline std::string shortest_fixed(double value) {
  std::array<char, 512> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value,
                                 std::chars_format::fixed);
  if (ec != std::errc{}) throw Error("format: to_chars failed");
  return std::string(buf.data(), ptr);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Precision

/// Decimal places used when comparing distances for ties, or exact.
class Precision {
 public:
  static constexpr int kMaxDigits = 15;

  constexpr Precision() = default;

  static constexpr Precision exact() { return Precision{}; }

  static Precision decimals(int digits) {
    if (digits < 0 || digits > kMaxDigits) {
      throw InvalidInput("precision must be between 0 and " +
                         std::to_string(kMaxDigits) + " decimal digits, got " +
                         std::to_string(digits));
    }
    Precision p;
    p.digits_ = digits;
    return p;
  }

  [[nodiscard]] constexpr bool is_exact() const { return !digits_.has_value(); }
  [[nodiscard]] constexpr std::optional<int> digits() const { return digits_; }

  friend constexpr bool operator==(const Precision&, const Precision&) = default;

  [[nodiscard]] std::string to_string() const {
    return digits_ ? std::to_string(*digits_) : std::string("exact");
  }

 private:
  std::optional<int> digits_;
};

/// Rounds to `precision` decimal places, halves away from zero.
///
/// Halves are decided on the shortest decimal representation of the input,
/// so 11.515 (stored as 11.514999...) rounds to 11.52 as written.
inline double round_half_up(double value, Precision precision) {
  if (precision.is_exact() || !std::isfinite(value)) return value;
  const int digits = *precision.digits();
  const double scale = std::pow(10.0, digits);
  const bool negative = value < 0.0;
  const double magnitude = std::fabs(value);
  const double scaled = magnitude * scale;
  const double floor_part = std::floor(scaled);
  const double frac = scaled - floor_part;
  bool up = frac >= 0.5;
  if (std::fabs(frac - 0.5) < 1e-6) {
    const std::string text = detail::shortest_fixed(magnitude);
    const auto dot = text.find('.');
    up = false;
    if (dot != std::string::npos) {
      const auto pos = dot + 1 + static_cast<std::size_t>(digits);
      up = pos < text.size() && text[pos] >= '5';
    }
  }
  const double rounded = (up ? floor_part + 1.0 : floor_part) / scale;
  return negative ? -rounded : rounded;
}

/// Text for a height at the given precision: fixed decimals, or shortest.
inline std::string format_height(double value, Precision precision) {
  if (precision.is_exact()) return format_shortest(value);
  return format_fixed(round_half_up(value, precision), *precision.digits());
}

// ---------------------------------------------------------------------------
// Triangular storage

/// Symmetric n x n matrix with an implicit zero diagonal; stores i > j only,
/// row-major: (1,0), (2,0), (2,1), (3,0), ...
template <typename T>
class TriangularMatrix {
 public:
  TriangularMatrix() = default;
  explicit TriangularMatrix(std::size_t n, T fill = T{})
      : n_(n), data_(n < 2 ? 0 : n * (n - 1) / 2, fill) {}
  TriangularMatrix(std::size_t n, std::vector<T> condensed)
      : n_(n), data_(std::move(condensed)) {
    if (data_.size() != (n < 2 ? 0 : n * (n - 1) / 2)) {
      throw InvalidInput("triangular matrix: expected " +
                         std::to_string(n * (n - 1) / 2) + " values, got " +
                         std::to_string(data_.size()));
    }
  }

  static constexpr std::size_t index(std::size_t i, std::size_t j) {
    if (i < j) std::swap(i, j);
    return i * (i - 1) / 2 + j;
  }

  [[nodiscard]] std::size_t size() const { return n_; }

  [[nodiscard]] T operator()(std::size_t i, std::size_t j) const {
    return i == j ? T{} : data_[index(i, j)];
  }

  void set(std::size_t i, std::size_t j, T value) { data_[index(i, j)] = value; }

  [[nodiscard]] std::span<const T> condensed() const { return data_; }

  friend bool operator==(const TriangularMatrix&, const TriangularMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<T> data_;
};

// ---------------------------------------------------------------------------
// Dissimilarity matrix

class DissimilarityMatrix {
 public:
  /// Validates and wraps lower-triangular values (see TriangularMatrix for
  /// the layout). Missing labels default to "0", "1", ...
  static DissimilarityMatrix from_condensed(std::vector<double> values,
                                            std::size_t n,
                                            std::vector<std::string> labels = {}) {
    if (n < 2) throw InvalidInput("n >= 2 required, got " + std::to_string(n));
    const std::size_t expected = n * (n - 1) / 2;
    if (values.size() != expected) {
      throw InvalidInput("condensed matrix for n=" + std::to_string(n) +
                         " needs " + std::to_string(expected) + " values, got " +
                         std::to_string(values.size()));
    }
    for (std::size_t i = 1, k = 0; i < n; ++i) {
      for (std::size_t j = 0; j < i; ++j, ++k) {
        const double v = values[k];
        if (!std::isfinite(v) || v < 0.0) {
          throw InvalidInput("invalid distance " + format_shortest(v) +
                             " between individuals " + std::to_string(j) +
                             " and " + std::to_string(i) +
                             " (must be finite and >= 0)");
        }
      }
    }
    if (labels.empty()) {
      labels.reserve(n);
      for (std::size_t i = 0; i < n; ++i) labels.push_back(std::to_string(i));
    } else if (labels.size() != n) {
      throw InvalidInput("expected " + std::to_string(n) + " labels, got " +
                         std::to_string(labels.size()));
    }
    DissimilarityMatrix m;
    m.values_ = TriangularMatrix<double>(n, std::move(values));
    m.labels_ = std::move(labels);
    return m;
  }

  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] double operator()(std::size_t i, std::size_t j) const {
    return values_(i, j);
  }
  [[nodiscard]] const TriangularMatrix<double>& values() const { return values_; }
  [[nodiscard]] const std::vector<std::string>& labels() const { return labels_; }
  [[nodiscard]] const std::string& label(std::size_t i) const { return labels_[i]; }

  friend bool operator==(const DissimilarityMatrix&, const DissimilarityMatrix&) = default;

 private:
  DissimilarityMatrix() = default;
  TriangularMatrix<double> values_;
  std::vector<std::string> labels_;
};

inline DissimilarityMatrix matrix_from_condensed(std::vector<double> values,
                                                 std::size_t n,
                                                 std::vector<std::string> labels = {}) {
  return DissimilarityMatrix::from_condensed(std::move(values), n, std::move(labels));
}

/// Points in feature space, row-major n x m.
struct CoordinateDataset {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<std::string> labels;
  std::vector<std::string> feature_names;

  [[nodiscard]] double operator()(std::size_t r, std::size_t c) const {
    return values[r * cols + c];
  }
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

// ---------------------------------------------------------------------------
// Method selection

/// Exponent of the generalized mean. The limits p -> -inf / +inf are tags,
/// never floating-point infinities.
class PowerParam {
 public:
  enum class Kind { negative_infinity, finite, positive_infinity };

  /// |p| below this is evaluated as the geometric mean.
  static constexpr double kGeometricThreshold = 1e-8;

  static constexpr PowerParam negative_infinity() {
    return PowerParam(Kind::negative_infinity, 0.0);
  }
  static constexpr PowerParam positive_infinity() {
    return PowerParam(Kind::positive_infinity, 0.0);
  }
  static PowerParam finite(double p) {
    if (std::isnan(p)) throw InvalidInput("power p must not be NaN");
    if (std::isinf(p)) return p < 0 ? negative_infinity() : positive_infinity();
    return PowerParam(Kind::finite, p);
  }

  [[nodiscard]] constexpr Kind kind() const { return kind_; }
  [[nodiscard]] constexpr bool is_finite() const { return kind_ == Kind::finite; }
  [[nodiscard]] constexpr double value() const { return value_; }
  [[nodiscard]] bool is_geometric() const {
    return is_finite() && std::fabs(value_) < kGeometricThreshold;
  }

  /// "-inf", "inf" or the shortest decimal text of p.
  [[nodiscard]] std::string to_string() const {
    switch (kind_) {
      case Kind::negative_infinity: return "-inf";
      case Kind::positive_infinity: return "inf";
      case Kind::finite: break;
    }
    return format_shortest(value_);
  }

  static PowerParam parse(std::string_view text) {
    if (text == "-inf" || text == "-Inf" || text == "-infinity") return negative_infinity();
    if (text == "inf" || text == "+inf" || text == "Inf" || text == "infinity") {
      return positive_infinity();
    }
    double v = 0.0;
    const auto* first = text.data();
    if (!text.empty() && text.front() == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
      throw InvalidInput("not a power value: '" + std::string(text) + "'");
    }
    return finite(v);
  }

  /// Ordering on the extended real line.
  friend bool operator<(const PowerParam& a, const PowerParam& b) {
    const auto rank = [](const PowerParam& x) {
      return x.kind_ == Kind::negative_infinity ? 0 : x.kind_ == Kind::finite ? 1 : 2;
    };
    if (rank(a) != rank(b)) return rank(a) < rank(b);
    return a.is_finite() && a.value_ < b.value_;
  }
  friend constexpr bool operator==(const PowerParam&, const PowerParam&) = default;

 private:
  constexpr PowerParam(Kind kind, double value) : kind_(kind), value_(value) {}
  Kind kind_ = Kind::finite;
  double value_ = 1.0;
};

/// Maps the normalized parameter s in [-1, +1] onto the exponent p.
///
/// Anchors: -1 -> SL, -0.1 -> HL (p=-1), 0 -> GL, +0.1 -> AL (p=+1),
/// +1 -> CL. Linear (p = 10 s) on |s| <= 0.1, then p = 0.9 / (1 - s) above
/// and p = -0.9 / (1 + s) below; continuous and strictly increasing.
inline PowerParam sigmoid_param_to_power(double s) {
  if (!(s >= -1.0 && s <= 1.0)) {
    throw InvalidInput("normalized parameter s must lie in [-1, +1], got " +
                       format_shortest(s));
  }
  if (s == -1.0) return PowerParam::negative_infinity();
  if (s == 1.0) return PowerParam::positive_infinity();
  if (std::fabs(s) <= 0.1) return PowerParam::finite(10.0 * s);
  if (s > 0.0) return PowerParam::finite(0.9 / (1.0 - s));
  return PowerParam::finite(-0.9 / (1.0 + s));
}

enum class MethodKind { versatile, flexible, centroid, ward };
enum class Weighting { unweighted, weighted };

inline std::string to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::versatile: return "versatile";
    case MethodKind::flexible: return "flexible";
    case MethodKind::centroid: return "centroid";
    case MethodKind::ward: return "ward";
  }
  return "?";
}

inline std::string to_string(Weighting w) {
  return w == Weighting::weighted ? "weighted" : "unweighted";
}

struct MethodSpec {
  MethodKind kind = MethodKind::versatile;
  PowerParam power = PowerParam::finite(1.0);
  double beta = 0.0;
  Weighting weighting = Weighting::unweighted;

  static MethodSpec versatile(PowerParam p, Weighting w = Weighting::unweighted) {
    MethodSpec m;
    m.kind = MethodKind::versatile;
    m.power = p;
    m.weighting = w;
    return m;
  }
  static MethodSpec flexible(double beta, Weighting w = Weighting::unweighted) {
    if (!(beta >= -1.0 && beta <= 1.0)) {
      throw InvalidInput("beta must lie in [-1, +1], got " + format_shortest(beta));
    }
    MethodSpec m;
    m.kind = MethodKind::flexible;
    m.beta = beta;
    m.weighting = w;
    return m;
  }
  static MethodSpec centroid() {
    MethodSpec m;
    m.kind = MethodKind::centroid;
    return m;
  }
  static MethodSpec ward() {
    MethodSpec m;
    m.kind = MethodKind::ward;
    return m;
  }

  static MethodSpec single_linkage(Weighting w = Weighting::unweighted) {
    return versatile(PowerParam::negative_infinity(), w);
  }
  static MethodSpec harmonic_linkage(Weighting w = Weighting::unweighted) {
    return versatile(PowerParam::finite(-1.0), w);
  }
  static MethodSpec geometric_linkage(Weighting w = Weighting::unweighted) {
    return versatile(PowerParam::finite(0.0), w);
  }
  static MethodSpec arithmetic_linkage(Weighting w = Weighting::unweighted) {
    return versatile(PowerParam::finite(1.0), w);
  }
  static MethodSpec complete_linkage(Weighting w = Weighting::unweighted) {
    return versatile(PowerParam::positive_infinity(), w);
  }

  /// Named shortcuts: sl, hl, gl, al, cl, centroid, ward.
  static std::optional<MethodSpec> named(std::string_view name,
                                         Weighting w = Weighting::unweighted) {
    if (name == "sl") return single_linkage(w);
    if (name == "hl") return harmonic_linkage(w);
    if (name == "gl") return geometric_linkage(w);
    if (name == "al") return arithmetic_linkage(w);
    if (name == "cl") return complete_linkage(w);
    if (name == "centroid") return centroid();
    if (name == "ward") return ward();
    return std::nullopt;
  }

  void validate() const {
    if (kind == MethodKind::flexible && !(beta >= -1.0 && beta <= 1.0)) {
      throw InvalidInput("beta must lie in [-1, +1], got " + format_shortest(beta));
    }
  }

  /// Short label such as "versatile(p=-1,unweighted)" or "ward".
  [[nodiscard]] std::string describe() const {
    switch (kind) {
      case MethodKind::versatile:
        return "versatile(p=" + power.to_string() + "," + to_string(weighting) + ")";
      case MethodKind::flexible:
        return "flexible(beta=" + format_shortest(beta) + "," + to_string(weighting) + ")";
      case MethodKind::centroid: return "centroid";
      case MethodKind::ward: return "ward";
    }
    return "?";
  }

  friend bool operator==(const MethodSpec&, const MethodSpec&) = default;
};

// ---------------------------------------------------------------------------
// Multidendrogram

struct TreeNode {
  std::size_t id = 0;
  std::vector<std::size_t> members;   // sorted individual indices
  std::vector<std::size_t> children;  // node ids, empty for leaves
  double band_min = 0.0;
  double band_max = 0.0;

  [[nodiscard]] bool is_leaf() const { return children.empty(); }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Rooted tree over n individuals. Nodes 0..n-1 are the leaves in input
/// order; internal nodes follow in merge order. Internal nodes may have more
/// than two children; [band_min, band_max] spans the distances among the
/// subclusters merged into the node.
struct Multidendrogram {
  std::vector<TreeNode> nodes;
  std::size_t root = 0;
  std::vector<std::string> labels;
  MethodSpec method;
  Precision precision;
  std::size_t inversion_count = 0;
  std::vector<std::string> warnings;

  [[nodiscard]] std::size_t leaf_count() const { return labels.size(); }
  [[nodiscard]] const TreeNode& node(std::size_t id) const { return nodes.at(id); }
  [[nodiscard]] std::size_t internal_count() const { return nodes.size() - leaf_count(); }

  friend bool operator==(const Multidendrogram&, const Multidendrogram&) = default;
};

/// Number of internal nodes whose band_min lies below a child's band_min.
inline std::size_t count_inversions(const Multidendrogram& tree) {
  std::size_t count = 0;
  for (const auto& node : tree.nodes) {
    for (auto child : node.children) {
      if (tree.nodes[child].band_min > node.band_min) {
        ++count;
        break;
      }
    }
  }
  return count;
}

/// Checks the structural invariants; throws InvalidInput on the first breach.
inline void validate_tree(const Multidendrogram& tree) {
  const std::size_t n = tree.leaf_count();
  if (n < 2) throw InvalidInput("tree must have at least 2 leaves");
  if (tree.nodes.size() < n + 1) throw InvalidInput("tree has no internal nodes");
  std::vector<int> parent_count(tree.nodes.size(), 0);
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    const auto& node = tree.nodes[id];
    const auto where = "node " + std::to_string(id) + ": ";
    if (node.id != id) throw InvalidInput(where + "id mismatch");
    if (!(node.band_min <= node.band_max)) throw InvalidInput(where + "band_min > band_max");
    if (id < n) {
      if (!node.is_leaf() || node.members != std::vector<std::size_t>{id} ||
          node.band_min != 0.0 || node.band_max != 0.0) {
        throw InvalidInput(where + "malformed leaf");
      }
      continue;
    }
    if (node.children.size() < 2) throw InvalidInput(where + "fewer than 2 children");
    std::vector<std::size_t> united;
    for (auto c : node.children) {
      if (c >= id) throw InvalidInput(where + "child id must precede parent");
      ++parent_count[c];
      const auto& cm = tree.nodes[c].members;
      united.insert(united.end(), cm.begin(), cm.end());
    }
    std::sort(united.begin(), united.end());
    if (std::adjacent_find(united.begin(), united.end()) != united.end() ||
        united != node.members) {
      throw InvalidInput(where + "members are not the disjoint union of its children");
    }
  }
  if (tree.root != tree.nodes.size() - 1) throw InvalidInput("root must be the last node");
  if (tree.nodes[tree.root].members.size() != n) {
    throw InvalidInput("root does not contain every individual");
  }
  for (std::size_t id = 0; id + 1 < tree.nodes.size(); ++id) {
    if (parent_count[id] != 1) {
      throw InvalidInput("node " + std::to_string(id) + " has " +
                         std::to_string(parent_count[id]) + " parents");
    }
  }
}

}  // namespace verlink
