#pragma once

// Dataset ingestion, preprocessing and serialization of matrices and trees.
//
// Text is UTF-8; numbers are parsed and printed with '.' as the decimal
// point whatever the process locale.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "verlink/core.hpp"

namespace verlink::io {

enum class MatrixFormat { square, lower_triangular, condensed_list };

inline MatrixFormat parse_matrix_format(std::string_view name) {
  if (name == "square") return MatrixFormat::square;
  if (name == "lower" || name == "lower-triangular") return MatrixFormat::lower_triangular;
  if (name == "list" || name == "condensed-list") return MatrixFormat::condensed_list;
  throw InvalidInput("unknown matrix format '" + std::string(name) +
                     "' (expected square, lower-triangular or condensed-list)");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << text;
  if (!out) throw InvalidInput("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Delimited text

namespace detail {

struct Row {
  std::size_t line = 0;  // 1-based
  std::vector<std::string> cells;
};

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Comma-separated when the line holds a comma (quoted cells allowed,
// empty cells kept), whitespace-separated otherwise.
inline std::vector<std::string> split_cells(std::string_view line, std::size_t line_no) {
  std::vector<std::string> cells;
  if (line.find(',') == std::string_view::npos && line.find('"') == std::string_view::npos) {
    std::istringstream ss{std::string(line)};
    std::string cell;
    while (ss >> cell) cells.push_back(cell);
    return cells;
  }
  std::string current;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char ch = line[k];
    if (quoted) {
      if (ch == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          current.push_back('"');
          ++k;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
      was_quoted = true;
    } else if (ch == ',') {
      cells.push_back(was_quoted ? current : trim(current));
      current.clear();
      was_quoted = false;
    } else {
      current.push_back(ch);
    }
  }
  if (quoted) throw InvalidInput("line " + std::to_string(line_no) + ": unterminated quote");
  cells.push_back(was_quoted ? current : trim(current));
  return cells;
}

// Non-blank lines not starting with '#'.
inline std::vector<Row> split_rows(std::string_view text) {
  std::vector<Row> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    const auto line = text.substr(pos, end == std::string_view::npos ? text.npos : end - pos);
    ++line_no;
    const auto t = trim(line);
    if (!t.empty() && t.front() != '#') {
      // A UTF-8 byte-order mark on the first line is dropped.
      std::string_view body = line;
      if (line_no == 1 && body.substr(0, 3) == "\xEF\xBB\xBF") body.remove_prefix(3);
      rows.push_back({line_no, split_cells(body, line_no)});
    }
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return rows;
}

inline std::optional<double> parse_number(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) return std::nullopt;
  return v;
}

inline bool is_number(std::string_view cell) { return parse_number(cell).has_value(); }

inline std::string where(std::size_t line, std::size_t column) {
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\" \t\n") == std::string::npos && !s.empty()) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

// Row of cells that are all non-numeric (an empty first cell allowed).
inline bool is_header(const Row& row) {
  for (std::size_t k = 0; k < row.cells.size(); ++k) {
    if (k == 0 && row.cells[k].empty()) continue;
    if (row.cells[k].empty() || is_number(row.cells[k])) return false;
  }
  return true;
}

// Header written with an empty corner cell above the data columns; the
// labels themselves may look numeric.
inline bool has_header(const std::vector<Row>& rows) {
  if (rows.empty()) return false;
  if (is_header(rows[0])) return true;
  const auto& cells = rows[0].cells;
  if (cells.size() != rows.size() || !cells.front().empty()) return false;
  return std::none_of(cells.begin() + 1, cells.end(), [](const std::string& c) { return c.empty(); });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Distance matrices

struct MatrixReadResult {
  DissimilarityMatrix matrix;
  std::vector<std::string> warnings;
};

namespace detail {

inline MatrixReadResult parse_square(const std::vector<Row>& rows) {
  std::size_t start = 0;
  std::vector<std::string> header;
  if (has_header(rows)) {
    header = rows[0].cells;
    start = 1;
  }
  const std::size_t n = rows.size() - start;
  if (n < 2) throw InvalidInput("n >= 2 required (matrix has " + std::to_string(n) + " rows)");

  bool row_labels = true;
  for (std::size_t r = start; r < rows.size(); ++r) {
    const auto& first = rows[r].cells.front();
    if (first.empty() || is_number(first)) row_labels = false;
  }
  if (row_labels && !header.empty() && header.size() == n + 1) header.erase(header.begin());
  if (!header.empty() && header.size() == n + 1 && header.front().empty()) {
    header.erase(header.begin());
  }
  if (!header.empty() && header.size() != n) {
    throw InvalidInput("header has " + std::to_string(header.size()) + " labels for " +
                       std::to_string(n) + " rows");
  }

  const std::size_t offset = row_labels ? 1 : 0;
  std::vector<std::vector<std::optional<double>>> cells(n, std::vector<std::optional<double>>(n));
  std::vector<std::string> labels = header;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = rows[start + r];
    if (row.cells.size() != n + offset) {
      throw InvalidInput("line " + std::to_string(row.line) + ": ragged row (" +
                         std::to_string(row.cells.size() - offset) + " values, expected " +
                         std::to_string(n) + ")");
    }
    if (row_labels && header.empty()) labels.push_back(row.cells[0]);
    for (std::size_t c = 0; c < n; ++c) {
      const auto& cell = row.cells[c + offset];
      if (cell.empty()) continue;
      const auto v = parse_number(cell);
      if (!v) {
        throw InvalidInput(where(row.line, c + offset + 1) + ": not a number '" + cell + "'");
      }
      cells[r][c] = v;
    }
  }

  std::vector<double> values;
  values.reserve(n * (n - 1) / 2);
  std::size_t symmetrized = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (cells[i][i] && *cells[i][i] != 0.0) {
      throw InvalidInput("diagonal entry " + std::to_string(i) + " is " +
                         format_shortest(*cells[i][i]) + ", expected 0");
    }
    for (std::size_t j = 0; j < i; ++j) {
      const auto& lower = cells[i][j];
      const auto& upper = cells[j][i];
      if (!lower && !upper) {
        throw InvalidInput("missing distance between rows " + std::to_string(j) + " and " +
                           std::to_string(i));
      }
      double v = lower ? *lower : *upper;
      if (lower && upper && *lower != *upper) {
        if (std::fabs(*lower - *upper) > 1e-9) {
          throw InvalidInput("asymmetric matrix: d(" + std::to_string(i) + "," +
                             std::to_string(j) + ")=" + format_shortest(*lower) + " but d(" +
                             std::to_string(j) + "," + std::to_string(i) +
                             ")=" + format_shortest(*upper));
        }
        v = 0.5 * (*lower + *upper);
        ++symmetrized;
      }
      values.push_back(v);
    }
  }
  MatrixReadResult result{DissimilarityMatrix::from_condensed(std::move(values), n, labels), {}};
  if (symmetrized > 0) {
    result.warnings.push_back("symmetrized " + std::to_string(symmetrized) +
                              " entries differing by at most 1e-9");
  }
  return result;
}

inline MatrixReadResult parse_lower(const std::vector<Row>& rows) {
  std::size_t start = 0;
  std::vector<std::string> header;
  if (has_header(rows)) {
    header = rows[0].cells;
    start = 1;
  }
  const std::size_t count = rows.size() - start;
  bool row_labels = count > 0;
  for (std::size_t r = start; r < rows.size(); ++r) {
    const auto& first = rows[r].cells.front();
    if (first.empty() || is_number(first)) row_labels = false;
  }
  const std::size_t offset = row_labels ? 1 : 0;
  std::vector<std::vector<double>> parsed;
  bool diagonal = true;
  for (std::size_t r = 0; r < count; ++r) {
    const auto& row = rows[start + r];
    if (row.cells.size() != r + 1 + offset) {
      throw InvalidInput("line " + std::to_string(row.line) + ": ragged row (" +
                         std::to_string(row.cells.size() - offset) + " values, expected " +
                         std::to_string(r + 1) + ")");
    }
    std::vector<double> vals;
    for (std::size_t c = offset; c < row.cells.size(); ++c) {
      const auto v = parse_number(row.cells[c]);
      if (!v) {
        throw InvalidInput(where(row.line, c + 1) + ": not a number '" + row.cells[c] + "'");
      }
      vals.push_back(*v);
    }
    if (vals.back() != 0.0) diagonal = false;
    parsed.push_back(std::move(vals));
  }
  // With the diagonal, row r holds d(r, 0..r); without, d(r+1, 0..r).
  const std::size_t n = diagonal ? count : count + 1;
  if (n < 2) throw InvalidInput("n >= 2 required (matrix has " + std::to_string(n) + " rows)");
  std::vector<double> values;
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t take = diagonal ? r : r + 1;
    values.insert(values.end(), parsed[r].begin(), parsed[r].begin() + static_cast<long>(take));
  }
  if (header.size() == n + 1 && header.front().empty()) header.erase(header.begin());
  if (!header.empty() && header.size() != n) {
    throw InvalidInput("header has " + std::to_string(header.size()) + " labels for " +
                       std::to_string(n) + " individuals");
  }
  std::vector<std::string> labels = header;
  if (labels.empty() && row_labels) {
    if (!diagonal) throw InvalidInput("row labels need the diagonal; use a header row instead");
    for (std::size_t r = start; r < rows.size(); ++r) labels.push_back(rows[r].cells[0]);
  }
  return {DissimilarityMatrix::from_condensed(std::move(values), n, labels), {}};
}

inline MatrixReadResult parse_list(const std::vector<Row>& rows) {
  std::map<std::string, std::size_t> index;
  std::vector<std::string> labels;
  struct Entry {
    std::size_t a, b;
    double d;
    std::size_t line;
  };
  std::vector<Entry> entries;
  const auto id = [&](const std::string& name) {
    auto [it, inserted] = index.emplace(name, labels.size());
    if (inserted) labels.push_back(name);
    return it->second;
  };
  for (const auto& row : rows) {
    if (row.cells.size() != 3) {
      throw InvalidInput("line " + std::to_string(row.line) +
                         ": expected 'label_a label_b distance'");
    }
    const auto v = parse_number(row.cells[2]);
    if (!v) throw InvalidInput(where(row.line, 3) + ": not a number '" + row.cells[2] + "'");
    entries.push_back({id(row.cells[0]), id(row.cells[1]), *v, row.line});
  }
  const std::size_t n = labels.size();
  if (n < 2) throw InvalidInput("n >= 2 required (list names " + std::to_string(n) + " individuals)");
  std::vector<std::optional<double>> values(n * (n - 1) / 2);
  for (const auto& e : entries) {
    if (e.a == e.b) {
      if (e.d != 0.0) throw InvalidInput("line " + std::to_string(e.line) + ": nonzero self-distance");
      continue;
    }
    auto& slot = values[TriangularMatrix<double>::index(e.a, e.b)];
    if (slot && std::fabs(*slot - e.d) > 1e-9) {
      throw InvalidInput("line " + std::to_string(e.line) + ": conflicting distance for " +
                         labels[e.a] + "-" + labels[e.b]);
    }
    if (!slot) slot = e.d;
  }
  std::vector<double> flat;
  flat.reserve(values.size());
  for (std::size_t i = 1, k = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j, ++k) {
      if (!values[k]) {
        throw InvalidInput("missing distance between '" + labels[j] + "' and '" + labels[i] + "'");
      }
      flat.push_back(*values[k]);
    }
  }
  return {DissimilarityMatrix::from_condensed(std::move(flat), n, std::move(labels)), {}};
}

}  // namespace detail

/// Parses a distance matrix. `square` accepts either triangle left blank
/// and an optional header row / label column; `lower_triangular` rows may
/// include the zero diagonal; `condensed_list` is one "a,b,d" per line.
inline MatrixReadResult parse_distance_matrix(std::string_view text, MatrixFormat format) {
  const auto rows = detail::split_rows(text);
  if (rows.empty()) throw InvalidInput("empty distance matrix");
  switch (format) {
    case MatrixFormat::square: return detail::parse_square(rows);
    case MatrixFormat::lower_triangular: return detail::parse_lower(rows);
    case MatrixFormat::condensed_list: return detail::parse_list(rows);
  }
  throw InvalidInput("unknown matrix format");
}

inline MatrixReadResult read_distance_matrix(const std::string& path, MatrixFormat format) {
  return parse_distance_matrix(read_text_file(path), format);
}

inline std::string emit_distance_matrix(const DissimilarityMatrix& m, MatrixFormat format) {
  const std::size_t n = m.size();
  std::string out;
  const auto header = [&] {
    for (std::size_t i = 0; i < n; ++i) out += ',' + detail::csv_cell(m.label(i));
    out += '\n';
  };
  switch (format) {
    case MatrixFormat::square:
      header();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (j) out += ',';
          out += format_shortest(m(i, j));
        }
        out += '\n';
      }
      break;
    case MatrixFormat::lower_triangular:
      header();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
          if (j) out += ',';
          out += format_shortest(m(i, j));
        }
        out += '\n';
      }
      break;
    case MatrixFormat::condensed_list:
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          out += detail::csv_cell(m.label(i)) + ',' + detail::csv_cell(m.label(j)) + ',' +
                 format_shortest(m(i, j)) + '\n';
        }
      }
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature tables

struct FeatureCsvOptions {
  /// Column whose values become the row labels (name, or 0-based index).
  std::optional<std::string> label_column;
  /// Columns excluded from the features (names or 0-based indices).
  std::vector<std::string> drop_columns;
};

namespace detail {

inline std::optional<std::size_t> resolve_column(const std::vector<std::string>& header,
                                                 const std::string& selector) {
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == selector) return c;
  }
  std::size_t idx = 0;
  auto [ptr, ec] = std::from_chars(selector.data(), selector.data() + selector.size(), idx);
  if (ec == std::errc{} && ptr == selector.data() + selector.size() && idx < header.size()) {
    return idx;
  }
  return std::nullopt;
}

inline bool is_missing(std::string_view cell) {
  return cell.empty() || cell == "?" || cell == "NA" || cell == "NaN" || cell == "nan" ||
         cell == "null";
}

}  // namespace detail

/// Header row plus one row per individual. Every column not excluded must
/// be numeric; rows with missing values are rejected.
inline CoordinateDataset parse_feature_csv(std::string_view text,
                                           const FeatureCsvOptions& options = {}) {
  const auto rows = detail::split_rows(text);
  if (rows.size() < 2) throw InvalidInput("feature table needs a header row and data rows");
  const auto& header = rows[0].cells;

  std::vector<bool> excluded(header.size(), false);
  std::optional<std::size_t> label_col;
  if (options.label_column) {
    label_col = detail::resolve_column(header, *options.label_column);
    if (!label_col) throw InvalidInput("unknown label column '" + *options.label_column + "'");
    excluded[*label_col] = true;
  }
  for (const auto& name : options.drop_columns) {
    const auto c = detail::resolve_column(header, name);
    if (!c) throw InvalidInput("unknown column '" + name + "'");
    excluded[*c] = true;
  }

  CoordinateDataset data;
  std::vector<std::size_t> features;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!excluded[c]) {
      features.push_back(c);
      data.feature_names.push_back(header[c]);
    }
  }
  if (features.empty()) throw InvalidInput("no numeric feature columns");
  data.cols = features.size();

  std::vector<std::size_t> missing_rows;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.cells.size() != header.size()) {
      throw InvalidInput("line " + std::to_string(row.line) + ": expected " +
                         std::to_string(header.size()) + " cells, got " +
                         std::to_string(row.cells.size()));
    }
    bool missing = false;
    std::vector<double> vals;
    for (auto c : features) {
      const auto& cell = row.cells[c];
      if (detail::is_missing(cell)) {
        missing = true;
        continue;
      }
      const auto v = detail::parse_number(cell);
      if (!v || !std::isfinite(*v)) {
        throw InvalidInput("row " + std::to_string(r) + " (line " + std::to_string(row.line) +
                           "), column '" + header[c] + "': not a number '" + cell + "'");
      }
      vals.push_back(*v);
    }
    if (missing) {
      missing_rows.push_back(r);
      continue;
    }
    data.values.insert(data.values.end(), vals.begin(), vals.end());
    data.labels.push_back(label_col ? row.cells[*label_col] : std::to_string(data.rows));
    ++data.rows;
  }
  if (!missing_rows.empty()) {
    std::string list;
    for (auto r : missing_rows) list += (list.empty() ? "" : ", ") + std::to_string(r);
    throw InvalidInput("missing values in data rows " + list);
  }
  return data;
}

inline CoordinateDataset read_feature_csv(const std::string& path,
                                          const FeatureCsvOptions& options = {}) {
  return parse_feature_csv(read_text_file(path), options);
}

/// Each column to mean 0 and sample standard deviation 1 (denominator n-1).
/// Constant columns become 0 and add a warning.
inline CoordinateDataset standardize(CoordinateDataset data,
                                     std::vector<std::string>* warnings = nullptr) {
  if (data.rows < 2) throw InvalidInput("standardize needs at least 2 rows");
  for (std::size_t c = 0; c < data.cols; ++c) {
    long double mean = 0.0L;
    for (std::size_t r = 0; r < data.rows; ++r) mean += data(r, c);
    mean /= static_cast<long double>(data.rows);
    long double ss = 0.0L;
    for (std::size_t r = 0; r < data.rows; ++r) {
      const long double dv = data(r, c) - mean;
      ss += dv * dv;
    }
    const long double sd = std::sqrt(ss / static_cast<long double>(data.rows - 1));
    for (std::size_t r = 0; r < data.rows; ++r) {
      data(r, c) = sd > 0 ? static_cast<double>((data(r, c) - mean) / sd) : 0.0;
    }
    if (!(sd > 0) && warnings) {
      const auto name = c < data.feature_names.size() ? data.feature_names[c] : std::to_string(c);
      warnings->push_back("constant column '" + name + "' set to 0");
    }
  }
  return data;
}

/// Each column to [0, 1]; constant columns become 0 with a warning.
inline CoordinateDataset scale_min_max(CoordinateDataset data,
                                       std::vector<std::string>* warnings = nullptr) {
  for (std::size_t c = 0; c < data.cols; ++c) {
    double lo = data(0, c);
    double hi = data(0, c);
    for (std::size_t r = 1; r < data.rows; ++r) {
      lo = std::min(lo, data(r, c));
      hi = std::max(hi, data(r, c));
    }
    for (std::size_t r = 0; r < data.rows; ++r) {
      data(r, c) = hi > lo ? (data(r, c) - lo) / (hi - lo) : 0.0;
    }
    if (!(hi > lo) && warnings) {
      const auto name = c < data.feature_names.size() ? data.feature_names[c] : std::to_string(c);
      warnings->push_back("constant column '" + name + "' set to 0");
    }
  }
  return data;
}

inline DissimilarityMatrix euclidean_distances(const CoordinateDataset& data) {
  const std::size_t n = data.rows;
  std::vector<double> values;
  values.reserve(n < 2 ? 0 : n * (n - 1) / 2);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double s = 0.0;
      for (std::size_t f = 0; f < data.cols; ++f) {
        const double dv = data(i, f) - data(j, f);
        s += dv * dv;
      }
      values.push_back(std::sqrt(s));
    }
  }
  return DissimilarityMatrix::from_condensed(std::move(values), n, data.labels);
}

// ---------------------------------------------------------------------------
// Tree documents

inline constexpr int kTreeSchemaVersion = 1;

inline std::string emit_tree_json(const Multidendrogram& tree) {
  using nlohmann::json;
  json method;
  method["kind"] = to_string(tree.method.kind);
  switch (tree.method.kind) {
    case MethodKind::versatile:
      if (tree.method.power.is_finite()) {
        method["parameter"] = tree.method.power.value();
      } else {
        method["parameter"] = tree.method.power.to_string();
      }
      break;
    case MethodKind::flexible: method["parameter"] = tree.method.beta; break;
    default: method["parameter"] = nullptr; break;
  }
  method["weighting"] = to_string(tree.method.weighting);

  json nodes = json::array();
  for (const auto& node : tree.nodes) {
    json j;
    j["id"] = node.id;
    if (node.is_leaf() && node.id < tree.labels.size()) j["label"] = tree.labels[node.id];
    j["members"] = node.members;
    j["children"] = node.children;
    j["band_min"] = node.band_min;
    j["band_max"] = node.band_max;
    nodes.push_back(std::move(j));
  }

  json doc;
  doc["schema_version"] = kTreeSchemaVersion;
  doc["method"] = std::move(method);
  if (tree.precision.is_exact()) {
    doc["precision"] = "exact";
  } else {
    doc["precision"] = *tree.precision.digits();
  }
  doc["labels"] = tree.labels;
  doc["nodes"] = std::move(nodes);
  doc["root"] = tree.root;
  doc["inversion_count"] = tree.inversion_count;
  doc["warnings"] = tree.warnings;
  return doc.dump(2) + "\n";
}

inline Multidendrogram parse_tree_json(std::string_view text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("tree document is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.is_object() || !doc.contains("schema_version")) {
      throw InvalidInput("tree document lacks schema_version");
    }
    const int version = doc.at("schema_version").get<int>();
    if (version != kTreeSchemaVersion) {
      throw InvalidInput("unsupported tree schema_version " + std::to_string(version) +
                         " (this build reads version " + std::to_string(kTreeSchemaVersion) + ")");
    }
    Multidendrogram tree;
    const auto& m = doc.at("method");
    const auto kind = m.at("kind").get<std::string>();
    const auto weighting = m.at("weighting").get<std::string>() == "weighted"
                               ? Weighting::weighted
                               : Weighting::unweighted;
    if (kind == "versatile") {
      const auto& p = m.at("parameter");
      tree.method = MethodSpec::versatile(
          p.is_string() ? PowerParam::parse(p.get<std::string>()) : PowerParam::finite(p.get<double>()),
          weighting);
    } else if (kind == "flexible") {
      tree.method = MethodSpec::flexible(m.at("parameter").get<double>(), weighting);
    } else if (kind == "centroid") {
      tree.method = MethodSpec::centroid();
    } else if (kind == "ward") {
      tree.method = MethodSpec::ward();
    } else {
      throw InvalidInput("unknown method kind '" + kind + "'");
    }
    tree.method.weighting = weighting;

    const auto& prec = doc.at("precision");
    if (prec.is_string()) {
      if (prec.get<std::string>() != "exact") {
        throw InvalidInput("bad precision '" + prec.get<std::string>() + "'");
      }
      tree.precision = Precision::exact();
    } else {
      tree.precision = Precision::decimals(prec.get<int>());
    }
    tree.labels = doc.at("labels").get<std::vector<std::string>>();
    for (const auto& j : doc.at("nodes")) {
      TreeNode node;
      node.id = j.at("id").get<std::size_t>();
      node.members = j.at("members").get<std::vector<std::size_t>>();
      node.children = j.at("children").get<std::vector<std::size_t>>();
      node.band_min = j.at("band_min").get<double>();
      node.band_max = j.at("band_max").get<double>();
      tree.nodes.push_back(std::move(node));
    }
    tree.root = doc.at("root").get<std::size_t>();
    tree.inversion_count = doc.at("inversion_count").get<std::size_t>();
    tree.warnings = doc.value("warnings", std::vector<std::string>{});
    validate_tree(tree);
    return tree;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed tree document: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Newick

namespace detail {

inline std::string newick_label(const std::string& label) {
  if (!label.empty() && label.find_first_of(" \t\n()[]':;,") == std::string::npos) return label;
  std::string out = "'";
  for (char ch : label) {
    if (ch == '\'') out.push_back('\'');
    out.push_back(ch);
  }
  out.push_back('\'');
  return out;
}

inline std::string newick_number(double value, Precision precision) {
  const double v = round_half_up(value, precision);
  return format_shortest(v == 0.0 ? 0.0 : v);
}

inline void write_newick(const Multidendrogram& tree, std::size_t id, Precision precision,
                         std::string& out, std::vector<std::string>* warnings) {
  const auto& node = tree.nodes[id];
  if (node.is_leaf()) {
    out += newick_label(tree.labels.at(id));
    return;
  }
  out += '(';
  const double height = round_half_up(node.band_min, precision);
  for (std::size_t k = 0; k < node.children.size(); ++k) {
    if (k) out += ',';
    const auto child = node.children[k];
    write_newick(tree, child, precision, out, warnings);
    const double length = height - round_half_up(tree.nodes[child].band_min, precision);
    if (length < 0.0 && warnings) {
      warnings->push_back("negative branch length above node " + std::to_string(child));
    }
    out += ':' + newick_number(length, precision);
  }
  out += ')';
  if (round_half_up(node.band_max, precision) > height) {
    out += "[max=" + newick_number(node.band_max, precision) + "]";
  }
}

}  // namespace detail

/// Newick text. A child's branch length is the parent's height minus its
/// own, both rounded to `precision`; a band wider than zero rides in a
/// "[max=...]" comment after the node.
inline std::string emit_newick(const Multidendrogram& tree, Precision precision,
                               std::vector<std::string>* warnings = nullptr) {
  std::string out;
  detail::write_newick(tree, tree.root, precision, out, warnings);
  out += ";";
  return out;
}

// ---------------------------------------------------------------------------
// SVG

struct SvgOptions {
  double width = 640.0;
  double height = 400.0;
  double margin = 40.0;
  double label_space = 60.0;
  Precision precision = Precision::exact();
};

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

inline std::string num(double v) { return format_fixed(v, 2); }

}  // namespace detail

/// Rectangular dendrogram. Leaves are laid out by recursive child order
/// with children sorted by smallest member; each band with band_max above
/// band_min is drawn as a shaded rect of class "band".
inline std::string emit_svg(const Multidendrogram& tree, const SvgOptions& options = {}) {
  const std::size_t n = tree.leaf_count();
  std::vector<std::vector<std::size_t>> children(tree.nodes.size());
  for (const auto& node : tree.nodes) {
    children[node.id] = node.children;
    std::sort(children[node.id].begin(), children[node.id].end(),
              [&](std::size_t a, std::size_t b) {
                return tree.nodes[a].members.front() < tree.nodes[b].members.front();
              });
  }

  double top = 0.0;
  for (const auto& node : tree.nodes) top = std::max({top, node.band_max, node.band_min});
  if (!(top > 0.0)) top = 1.0;
  const double plot_bottom = options.height - options.margin - options.label_space;
  const double plot_height = plot_bottom - options.margin;
  const auto y_of = [&](double h) { return plot_bottom - h / top * plot_height; };
  const double step = n > 1 ? (options.width - 2 * options.margin) / static_cast<double>(n - 1) : 0;

  std::vector<double> x(tree.nodes.size(), 0.0);
  std::vector<std::size_t> order;
  // Iterative post-order so deep chains do not recurse.
  std::vector<std::pair<std::size_t, bool>> stack{{tree.root, false}};
  while (!stack.empty()) {
    auto [id, expanded] = stack.back();
    stack.pop_back();
    if (children[id].empty()) {
      x[id] = options.margin + step * static_cast<double>(order.size());
      order.push_back(id);
      continue;
    }
    if (expanded) {
      x[id] = 0.5 * (x[children[id].front()] + x[children[id].back()]);
      continue;
    }
    stack.push_back({id, true});
    for (auto it = children[id].rbegin(); it != children[id].rend(); ++it) stack.push_back({*it, false});
  }

  std::string bands;
  std::string lines;
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) continue;
    const auto& ch = children[node.id];
    const double y = y_of(node.band_min);
    const double x0 = x[ch.front()];
    const double x1 = x[ch.back()];
    if (round_half_up(node.band_max, options.precision) >
        round_half_up(node.band_min, options.precision)) {
      bands += "  <rect class=\"band\" x=\"" + detail::num(x0) + "\" y=\"" +
               detail::num(y_of(node.band_max)) + "\" width=\"" + detail::num(x1 - x0) +
               "\" height=\"" + detail::num(y - y_of(node.band_max)) +
               "\" fill=\"#c8c8c8\" stroke=\"none\"/>\n";
    }
    lines += "  <line x1=\"" + detail::num(x0) + "\" y1=\"" + detail::num(y) + "\" x2=\"" +
             detail::num(x1) + "\" y2=\"" + detail::num(y) + "\"/>\n";
    for (auto c : ch) {
      lines += "  <line x1=\"" + detail::num(x[c]) + "\" y1=\"" +
               detail::num(y_of(tree.nodes[c].band_min)) + "\" x2=\"" + detail::num(x[c]) +
               "\" y2=\"" + detail::num(y) + "\"/>\n";
    }
  }

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(options.width) +
         "\" height=\"" + detail::num(options.height) + "\" viewBox=\"0 0 " +
         detail::num(options.width) + " " + detail::num(options.height) + "\">\n";
  out += bands;
  out += " <g stroke=\"black\" stroke-width=\"1.5\" fill=\"none\">\n" + lines + " </g>\n";
  out += " <g font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">\n";
  for (auto leaf : order) {
    out += "  <text x=\"" + detail::num(x[leaf]) + "\" y=\"" + detail::num(plot_bottom + 16) +
           "\">" + detail::xml_escape(tree.labels.at(leaf)) + "</text>\n";
  }
  out += " </g>\n";
  out += " <g font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">\n";
  for (int k = 0; k <= 4; ++k) {
    const double h = top * k / 4.0;
    out += "  <text x=\"" + detail::num(options.margin - 6) + "\" y=\"" + detail::num(y_of(h) + 3) +
           "\">" + format_height(h, options.precision.is_exact() ? Precision::decimals(2)
                                                                 : options.precision) +
           "</text>\n";
  }
  out += " </g>\n</svg>\n";
  return out;
}

}  // namespace verlink::io
