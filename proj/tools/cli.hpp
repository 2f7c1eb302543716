#pragma once

// Command-line front end: distances, cluster, measure, sweep, verify.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or input error.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "verlink/verlink.hpp"

namespace verlink::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitUsage = 2;

/// Flags selecting a clustering method.
struct MethodFlags {
  std::string method;
  std::optional<std::string> p;
  std::optional<double> s;
  std::optional<double> beta;
  bool weighted = false;
  bool unweighted = false;
};

inline Weighting resolve_weighting(const MethodFlags& f) {
  if (f.weighted && f.unweighted) throw InvalidInput("--weighted and --unweighted are exclusive");
  return f.weighted ? Weighting::weighted : Weighting::unweighted;
}

inline MethodSpec resolve_method(const MethodFlags& f) {
  const Weighting w = resolve_weighting(f);
  const int power_flags = (f.p ? 1 : 0) + (f.s ? 1 : 0);
  if (power_flags > 1) throw InvalidInput("give only one of --p and --s");
  if (f.beta && power_flags > 0) throw InvalidInput("--beta cannot be combined with --p or --s");

  std::string name = f.method;
  if (name.empty()) {
    if (f.beta) name = "flexible";
    else if (power_flags) name = "versatile";
    else throw InvalidInput("no method given (use --method, --p, --s or --beta)");
  }
  if (name == "versatile") {
    if (f.beta) throw InvalidInput("--beta applies to --method flexible only");
    if (power_flags == 0) throw InvalidInput("--method versatile needs --p or --s");
    return MethodSpec::versatile(f.p ? PowerParam::parse(*f.p) : sigmoid_param_to_power(*f.s), w);
  }
  if (name == "flexible") {
    if (power_flags) throw InvalidInput("--p/--s apply to versatile linkage only");
    if (!f.beta) throw InvalidInput("--method flexible needs --beta");
    return MethodSpec::flexible(*f.beta, w);
  }
  if (power_flags || f.beta) {
    throw InvalidInput("--method " + name + " takes no --p, --s or --beta");
  }
  if (auto m = MethodSpec::named(name, w)) return *m;
  throw InvalidInput("unknown method '" + name +
                     "' (sl, hl, gl, al, cl, versatile, flexible, centroid, ward)");
}

inline Precision parse_precision(const std::optional<std::string>& text) {
  if (!text || *text == "exact") return Precision::exact();
  int digits = -1;
  auto [ptr, ec] = std::from_chars(text->data(), text->data() + text->size(), digits);
  if (ec != std::errc{} || ptr != text->data() + text->size()) {
    throw InvalidInput("--precision expects a digit count or 'exact', got '" + *text + "'");
  }
  return Precision::decimals(digits);
}

/// "lo:hi:step" or a comma-separated list; every value must lie in [-1, 1].
inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> values;
  const auto number = [](const std::string& cell) {
    const auto v = io::detail::parse_number(io::detail::trim(cell));
    if (!v) throw InvalidInput("bad grid value '" + cell + "'");
    return *v;
  };
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ':')) parts.push_back(part);
    if (parts.size() != 3) throw InvalidInput("--grid expects lo:hi:step");
    const double lo = number(parts[0]);
    const double hi = number(parts[1]);
    const double step = number(parts[2]);
    if (!(step > 0.0)) throw InvalidInput("--grid step must be positive");
    if (hi < lo) throw InvalidInput("--grid bounds must satisfy lo <= hi");
    for (std::size_t k = 0;; ++k) {
      double v = lo + static_cast<double>(k) * step;
      if (v > hi + 1e-9 * step) break;
      v = std::round(v * 1e12) / 1e12;
      values.push_back(std::min(v, hi));
    }
  } else {
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (!io::detail::trim(cell).empty()) values.push_back(number(cell));
    }
  }
  if (values.empty()) throw InvalidInput("empty parameter grid");
  for (double v : values) {
    if (v < -1.0 || v > 1.0) {
      throw InvalidInput("grid value " + format_shortest(v) + " outside [-1, +1]");
    }
  }
  return values;
}

inline io::MatrixReadResult load_matrix(const std::string& path, const std::string& format,
                                        std::ostream& err) {
  auto result = io::read_distance_matrix(path, io::parse_matrix_format(format));
  for (const auto& w : result.warnings) err << "warning: " << w << "\n";
  return result;
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepConfig {
  std::string label;
  std::string parameter;
  MethodSpec method;
  std::string weighting;
};

struct SweepRow {
  SweepConfig config;
  measures::DescriptorReport report;
};

/// The method roster used for the descriptive comparison: flexible +0.9,
/// SL, centroid, HL, GL, AL, CL, Ward, flexible -1, each weighted and
/// unweighted where weighting applies.
inline std::vector<SweepConfig> roster_configs() {
  std::vector<SweepConfig> configs;
  const auto both = [&configs](const std::string& label, const std::string& param, auto make) {
    for (auto w : {Weighting::weighted, Weighting::unweighted}) {
      configs.push_back({label, param, make(w), to_string(w)});
    }
  };
  both("flexible", "0.9", [](Weighting w) { return MethodSpec::flexible(0.9, w); });
  both("SL", "-inf", [](Weighting w) { return MethodSpec::single_linkage(w); });
  configs.push_back({"centroid", "", MethodSpec::centroid(), "none"});
  both("HL", "-1", [](Weighting w) { return MethodSpec::harmonic_linkage(w); });
  both("GL", "0", [](Weighting w) { return MethodSpec::geometric_linkage(w); });
  both("AL", "1", [](Weighting w) { return MethodSpec::arithmetic_linkage(w); });
  both("CL", "inf", [](Weighting w) { return MethodSpec::complete_linkage(w); });
  configs.push_back({"ward", "", MethodSpec::ward(), "none"});
  both("flexible", "-1", [](Weighting w) { return MethodSpec::flexible(-1.0, w); });
  return configs;
}

inline std::size_t sweep_threads(std::size_t jobs) {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("VERLINK_THREADS")) {
    const auto v = std::strtol(env, nullptr, 10);
    if (v > 0) cap = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(cap, jobs));
}

/// Runs every configuration (in parallel) over the shared matrix; rows come
/// back in configuration order.
inline std::vector<SweepRow> run_sweep(const DissimilarityMatrix& matrix,
                                       const std::vector<SweepConfig>& configs,
                                       Precision precision) {
  std::vector<SweepRow> rows(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k = next++; k < configs.size(); k = next++) {
      try {
        const auto tree = linkage::cluster(matrix, configs[k].method, precision);
        rows[k] = {configs[k], measures::describe(matrix, tree)};
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t threads = sweep_threads(configs.size());
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "method,parameter,weighting,CCC,NMAE,SDR,NTB\n";
  for (const auto& r : rows) {
    out += r.config.label + "," + r.config.parameter + "," + r.config.weighting + "," +
           (r.report.ccc ? format_shortest(*r.report.ccc) : std::string("NA")) + "," +
           format_shortest(r.report.nmae) + "," + format_shortest(r.report.sdr) + "," +
           format_shortest(r.report.ntb) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands

namespace detail {

inline void emit(const std::optional<std::string>& path, const std::string& text,
                 std::ostream& out) {
  if (path) {
    io::write_text_file(*path, text);
  } else {
    out << text;
  }
}

inline std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (!part.empty()) out.push_back(part);
    }
  }
  return out;
}

inline std::string render_tree(const Multidendrogram& tree, const std::string& format,
                               std::ostream& err) {
  if (format == "json") return io::emit_tree_json(tree);
  if (format == "newick") {
    std::vector<std::string> warnings;
    auto text = io::emit_newick(tree, tree.precision, &warnings) + "\n";
    for (const auto& w : warnings) err << "warning: " << w << "\n";
    return text;
  }
  if (format == "svg") {
    io::SvgOptions options;
    options.precision = tree.precision;
    return io::emit_svg(tree, options);
  }
  throw InvalidInput("unknown output format '" + format + "' (json, newick, svg)");
}

inline void print_verify(const reference::VerifyReport& r, std::ostream& out) {
  out << "method: " << r.tree.method.describe() << "\n";
  if (r.max_combinatorial_deviation) {
    out << "combinatorial vs direct max relative deviation: "
        << format_shortest(*r.max_combinatorial_deviation) << "\n";
  }
  if (r.max_identity_residual) {
    out << "centroid/ward identity max relative residual: "
        << format_shortest(*r.max_identity_residual) << "\n";
  }
  if (r.pair_group_agrees) {
    out << "pair-group agreement: " << (*r.pair_group_agrees ? "yes" : "NO") << "\n";
  } else {
    out << "pair-group agreement: skipped (ties present)\n";
  }
  for (const auto& note : r.notes) out << "note: " << note << "\n";
  out << "tolerance: " << format_shortest(r.tolerance) << "\n";
  out << "result: " << (r.passed() ? "PASS" : "FAIL") << "\n";
}

// Tree leaves matched to matrix rows by label; returns the matrix reordered
// into leaf order.
inline DissimilarityMatrix align_to_tree(const DissimilarityMatrix& m, const Multidendrogram& tree) {
  if (m.size() != tree.leaf_count()) {
    throw InvalidInput("tree has " + std::to_string(tree.leaf_count()) + " leaves but matrix has " +
                       std::to_string(m.size()) + " individuals");
  }
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!row_of.emplace(m.label(i), i).second) {
      throw InvalidInput("duplicate matrix label '" + m.label(i) + "'");
    }
  }
  std::vector<std::size_t> perm;
  for (const auto& label : tree.labels) {
    const auto it = row_of.find(label);
    if (it == row_of.end()) throw InvalidInput("tree leaf '" + label + "' is not in the matrix");
    perm.push_back(it->second);
  }
  std::vector<double> values;
  for (std::size_t i = 1; i < perm.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) values.push_back(m(perm[i], perm[j]));
  }
  return DissimilarityMatrix::from_condensed(std::move(values), perm.size(), tree.labels);
}

inline void add_method_flags(CLI::App* cmd, MethodFlags& f) {
  cmd->add_option("--method", f.method, "sl|hl|gl|al|cl|versatile|flexible|centroid|ward");
  cmd->add_option("--p", f.p, "versatile exponent (number, -inf or inf)");
  cmd->add_option("--s", f.s, "versatile exponent on the normalized [-1, 1] scale");
  cmd->add_option("--beta", f.beta, "flexible beta in [-1, 1]");
  cmd->add_flag("--weighted", f.weighted, "weighted (WPGMA-style) variant");
  cmd->add_flag("--unweighted", f.unweighted, "unweighted (UPGMA-style) variant (default)");
}

}  // namespace detail

/// Entry point; `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"verlink: versatile linkage and beta-flexible hierarchical clustering"};
  app.name("verlink");
  app.require_subcommand(1);

  // distances
  std::string features_path;
  std::vector<std::string> drop_columns;
  std::optional<std::string> label_column;
  bool no_scale = false;
  bool min_max = false;
  std::optional<std::string> output;
  std::string matrix_format = "square";
  auto* distances = app.add_subcommand("distances", "feature CSV -> Euclidean distance matrix");
  distances->add_option("features", features_path, "feature CSV with a header row")->required();
  distances->add_option("--drop-columns", drop_columns, "columns to exclude (names or 0-based indices)")
      ->delimiter(',');
  distances->add_option("--label-column", label_column, "column holding row labels");
  distances->add_flag("--no-scale", no_scale, "skip standardization");
  distances->add_flag("--min-max", min_max, "scale columns to [0, 1] instead of standardizing");
  distances->add_option("--output", output, "output path (default stdout)");
  distances->add_option("--matrix-format", matrix_format, "square|lower-triangular|condensed-list");

  // cluster
  std::string matrix_path;
  std::string input_format = "square";
  MethodFlags method_flags;
  std::optional<std::string> precision_text;
  std::vector<std::string> formats;
  bool verify_flag = false;
  std::uint64_t seed = 1;
  auto* cluster = app.add_subcommand("cluster", "cluster a distance matrix");
  cluster->add_option("matrix", matrix_path, "distance matrix file")->required();
  cluster->add_option("--input-format", input_format, "square|lower-triangular|condensed-list");
  detail::add_method_flags(cluster, method_flags);
  cluster->add_option("--precision", precision_text, "decimal digits for ties, or 'exact'");
  cluster->add_option("--format", formats, "json,newick,svg (default json)")->delimiter(',');
  cluster->add_option("--output", output, "output path; with several formats, a stem");
  cluster->add_flag("--verify", verify_flag, "cross-check the run against reference oracles");
  cluster->add_option("--seed", seed, "seed for pair-group tie breaking in --verify");

  // measure
  std::string tree_path;
  std::optional<std::string> csv_path;
  auto* measure = app.add_subcommand("measure", "descriptors of a tree against its matrix");
  measure->add_option("matrix", matrix_path, "distance matrix file")->required();
  measure->add_option("tree", tree_path, "tree JSON document")->required();
  measure->add_option("--input-format", input_format, "square|lower-triangular|condensed-list");
  measure->add_option("--csv", csv_path, "also write a CSV row here");

  // sweep
  std::string family = "versatile";
  std::optional<std::string> grid_text;
  bool both = false;
  auto* sweep = app.add_subcommand("sweep", "descriptors across a parameter grid");
  sweep->add_option("matrix", matrix_path, "distance matrix file")->required();
  sweep->add_option("--input-format", input_format, "square|lower-triangular|condensed-list");
  sweep->add_option("--family", family, "versatile (grid over s) | flexible (grid over beta) | roster");
  sweep->add_option("--grid", grid_text, "lo:hi:step or a comma list (default -1:1:0.25)");
  sweep->add_flag("--weighted", method_flags.weighted, "weighted variants only");
  sweep->add_flag("--unweighted", method_flags.unweighted, "unweighted variants only (default)");
  sweep->add_flag("--both", both, "weighted and unweighted variants");
  sweep->add_option("--precision", precision_text, "decimal digits for ties, or 'exact'");
  sweep->add_option("--output", output, "CSV output path (default stdout)");

  // verify
  auto* verify = app.add_subcommand("verify", "run the engine against reference oracles");
  verify->add_option("matrix", matrix_path, "distance matrix file")->required();
  verify->add_option("--input-format", input_format, "square|lower-triangular|condensed-list");
  detail::add_method_flags(verify, method_flags);
  verify->add_option("--precision", precision_text, "decimal digits for ties, or 'exact'");
  verify->add_option("--seed", seed, "seed for pair-group tie breaking");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*distances) {
      io::FeatureCsvOptions options;
      options.label_column = label_column;
      options.drop_columns = drop_columns;
      if (no_scale && min_max) throw InvalidInput("--no-scale and --min-max are exclusive");
      auto data = io::read_feature_csv(features_path, options);
      std::vector<std::string> warnings;
      if (min_max) {
        data = io::scale_min_max(std::move(data), &warnings);
      } else if (!no_scale) {
        data = io::standardize(std::move(data), &warnings);
      }
      for (const auto& w : warnings) err << "warning: " << w << "\n";
      const auto matrix = io::euclidean_distances(data);
      detail::emit(output,
                   io::emit_distance_matrix(matrix, io::parse_matrix_format(matrix_format)), out);
      if (output) {
        out << "wrote " << matrix.size() << "x" << matrix.size() << " distance matrix ("
            << data.cols << " features) to " << *output << "\n";
      }
      return kExitOk;
    }

    if (*cluster) {
      const auto method = resolve_method(method_flags);
      const auto precision = parse_precision(precision_text);
      const auto input = load_matrix(matrix_path, input_format, err);
      auto fmts = detail::split_list(formats);
      if (fmts.empty()) fmts.push_back("json");
      if (fmts.size() > 1 && !output) {
        throw InvalidInput("several --format values need --output as a file stem");
      }
      int code = kExitOk;
      Multidendrogram tree;
      std::optional<reference::VerifyReport> report;
      if (verify_flag) {
        report = reference::verify_run(input.matrix, method, precision, seed);
        tree = report->tree;
        if (!report->passed()) code = kExitVerifyFailed;
      } else {
        tree = linkage::cluster(input.matrix, method, precision);
      }
      for (const auto& w : tree.warnings) err << "warning: " << w << "\n";
      for (const auto& fmt : fmts) {
        const auto text = detail::render_tree(tree, fmt, err);
        if (!output) {
          out << text;
        } else {
          io::write_text_file(fmts.size() == 1 ? *output : *output + "." + fmt, text);
        }
      }
      std::ostream& summary = output ? out : err;
      summary << "n=" << tree.leaf_count() << " method=" << method.describe()
              << " precision=" << precision.to_string() << " merges=" << tree.internal_count()
              << " inversions=" << tree.inversion_count << "\n";
      if (report) detail::print_verify(*report, summary);
      return code;
    }

    if (*measure) {
      const auto input = load_matrix(matrix_path, input_format, err);
      const auto tree = io::parse_tree_json(io::read_text_file(tree_path));
      const auto aligned = detail::align_to_tree(input.matrix, tree);
      const auto r = measures::describe(aligned, tree);
      const auto ccc_text = r.ccc ? format_fixed(*r.ccc, 6) : std::string("undefined (constant matrix)");
      out << "CCC         " << ccc_text << "\n"
          << "NMAE        " << format_fixed(r.nmae, 6) << "\n"
          << "SDR         " << format_fixed(r.sdr, 6) << "\n"
          << "NTB         " << format_fixed(r.ntb, 6) << "\n"
          << "inversions  " << r.inversion_count << "\n";
      if (csv_path) {
        io::write_text_file(*csv_path,
                            "CCC,NMAE,SDR,NTB,inversions\n" +
                                (r.ccc ? format_shortest(*r.ccc) : std::string("NA")) + "," +
                                format_shortest(r.nmae) + "," + format_shortest(r.sdr) + "," +
                                format_shortest(r.ntb) + "," + std::to_string(r.inversion_count) +
                                "\n");
      }
      return kExitOk;
    }

    if (*sweep) {
      const auto precision = parse_precision(precision_text);
      const auto input = load_matrix(matrix_path, input_format, err);
      std::vector<SweepConfig> configs;
      if (family == "roster") {
        if (grid_text) throw InvalidInput("--grid does not apply to --family roster");
        configs = roster_configs();
      } else if (family == "versatile" || family == "flexible") {
        if (both && (method_flags.weighted || method_flags.unweighted)) {
          throw InvalidInput("--both excludes --weighted/--unweighted");
        }
        std::vector<Weighting> weightings;
        if (both) {
          weightings = {Weighting::unweighted, Weighting::weighted};
        } else {
          weightings = {resolve_weighting(method_flags)};
        }
        auto grid = parse_grid(grid_text.value_or("-1:1:0.25"));
        std::stable_sort(grid.begin(), grid.end());
        for (double g : grid) {
          for (auto w : weightings) {
            if (family == "versatile") {
              const auto p = sigmoid_param_to_power(g);
              configs.push_back({"versatile", p.to_string(), MethodSpec::versatile(p, w), to_string(w)});
            } else {
              configs.push_back({"flexible", format_shortest(g), MethodSpec::flexible(g, w), to_string(w)});
            }
          }
        }
      } else {
        throw InvalidInput("unknown --family '" + family + "' (versatile, flexible, roster)");
      }
      const auto rows = run_sweep(input.matrix, configs, precision);
      detail::emit(output, sweep_csv(rows), out);
      if (output) out << "wrote " << rows.size() << " rows to " << *output << "\n";
      return kExitOk;
    }

    if (*verify) {
      const auto method = resolve_method(method_flags);
      const auto precision = parse_precision(precision_text);
      const auto input = load_matrix(matrix_path, input_format, err);
      const auto report = reference::verify_run(input.matrix, method, precision, seed);
      detail::print_verify(report, out);
      return report.passed() ? kExitOk : kExitVerifyFailed;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace verlink::cli
