#pragma once

// The gen / pca / compare commands as library calls. Argument parsing lives
// in tools/; everything here takes already-validated option structs.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sppca/dense_matrix.hpp"
#include "sppca/error.hpp"
#include "sppca/file_stream.hpp"
#include "sppca/metrics.hpp"
#include "sppca/parallel.hpp"
#include "sppca/rqb.hpp"
#include "sppca/sketch.hpp"
#include "sppca/synth.hpp"

namespace sppca::cli {

namespace fs = std::filesystem;

enum class Algorithm { single_pass, basic, legacy };

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "single-pass") return Algorithm::single_pass;
  if (s == "basic") return Algorithm::basic;
  if (s == "legacy") return Algorithm::legacy;
  throw ConfigError("unknown algorithm '" + s + "' (expected single-pass, basic or legacy)");
}

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::single_pass: return "single-pass";
    case Algorithm::basic: return "basic";
    case Algorithm::legacy: return "legacy";
  }
  return "?";
}

/// Flat key=value run record, one entry per line, in insertion order.
class Manifest {
 public:
  template <typename T>
  void set(const std::string& key, const T& value) {
    std::ostringstream os;
    os << std::setprecision(17) << value;
    entries_.emplace_back(key, os.str());
  }

  std::optional<std::string> get(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return v;
    return std::nullopt;
  }

  std::string str() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
      std::string flat = v;
      std::replace(flat.begin(), flat.end(), '\n', ' ');
      out += k + "=" + flat + "\n";
    }
    return out;
  }

  void write(const fs::path& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError(path.string() + ": cannot open manifest for writing");
    f << str();
    if (!f) throw IoError(path.string() + ": manifest write failed");
  }

  static Manifest read(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError(path.string() + ": cannot open manifest");
    Manifest m;
    std::string line;
    while (std::getline(f, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      m.entries_.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return m;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline void write_values_csv(const fs::path& path, const std::vector<double>& values) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError(path.string() + ": cannot open for writing");
  f << std::setprecision(17);
  for (std::size_t i = 0; i < values.size(); ++i) f << (i + 1) << ',' << values[i] << '\n';
  if (!f) throw IoError(path.string() + ": write failed");
}

inline fs::path with_suffix(const fs::path& prefix, const std::string& suffix) {
  return fs::path(prefix.string() + suffix);
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace detail

/// "i,value" lines, as written by gen (truth) and pca (S).
inline std::vector<double> read_values_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError(path.string() + ": cannot open");
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    try {
      out.push_back(std::stod(comma == std::string::npos ? line : line.substr(comma + 1)));
    } catch (...) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not a number");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

/// Where the rows come from: a matrix file or an on-the-fly synthetic matrix.
struct InputSpec {
  std::optional<fs::path> file;
  FileLayout layout;
  std::optional<SpectrumSpec> synth;
  std::size_t synth_rows = 0;
  std::size_t synth_cols = 0;
  std::uint64_t synth_seed = 0;

  void check() const {
    if (file.has_value() == synth.has_value()) throw ConfigError("give exactly one of an input file or --synth");
    if (synth && (synth_rows == 0 || synth_cols == 0)) throw ConfigError("--synth needs --rows and --cols");
    if (file && layout.header == HeaderKind::raw && layout.cols == 0) {
      throw ConfigError("a headerless input needs --cols (and --rows unless it can be inferred)");
    }
  }

  std::unique_ptr<RowStream> open(std::size_t block_rows) const {
    check();
    if (file) return file_row_stream(*file, resolved_layout(), block_rows);
    return synth_stream(*synth, synth_rows, synth_cols, synth_seed, block_rows);
  }

  /// Layout with rows filled in: from the header, or from the file size when
  /// a raw file is given without --rows.
  FileLayout resolved_layout() const {
    FileLayout l = layout;
    if (l.header == HeaderKind::raw && l.rows == 0 && l.cols > 0) {
      std::error_code ec;
      const auto size = fs::file_size(*file, ec);
      if (ec) throw IoError(file->string() + ": " + ec.message());
      const std::size_t row_bytes = l.cols * dtype_width(l.dtype);
      if (size == 0 || size % row_bytes != 0) {
        throw FormatError(file->string() + ": size " + std::to_string(size) + " is not a whole number of " +
                          std::to_string(l.cols) + "-column rows");
      }
      l.rows = size / row_bytes;
    }
    return resolve_layout(*file, l);
  }

  void describe(Manifest& m) const {
    if (file) {
      const FileLayout l = resolved_layout();
      m.set("input.path", file->string());
      m.set("input.rows", l.rows);
      m.set("input.cols", l.cols);
      m.set("input.dtype", to_string(l.dtype));
      m.set("input.layout", to_string(l.header));
    } else {
      m.set("input.synth", synth->name());
      if (synth->kind == SpectrumSpec::Kind::custom) {
        std::ostringstream os;
        os << std::setprecision(17);
        for (std::size_t i = 0; i < synth->values.size(); ++i) os << (i ? "," : "") << synth->values[i];
        m.set("input.synth_values", os.str());
      }
      m.set("input.rows", synth_rows);
      m.set("input.cols", synth_cols);
      m.set("input.synth_seed", synth_seed);
    }
  }
};

// ---------------------------------------------------------------------------

struct GenOptions {
  SpectrumSpec spec;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::uint64_t seed = 0;
  fs::path out;
  DType dtype = DType::f32;
  HeaderKind header = HeaderKind::raw;
  std::string command_line;
};

struct GenResult {
  fs::path matrix;
  fs::path truth;
  fs::path manifest;
};

/// Writes the matrix payload, a truth CSV with the min(m, n) singular values
/// ("i,value" lines), and <out>.manifest.
inline GenResult cmd_gen(const GenOptions& o) {
  if (o.rows == 0 || o.cols == 0) throw ConfigError("gen: rows and cols must be positive");
  const GenResult paths{o.out, detail::with_suffix(o.out, ".truth.csv"), detail::with_suffix(o.out, ".manifest")};
  const std::string started = detail::utc_timestamp();
  const SyntheticGenerator gen(o.spec, o.rows, o.cols, o.seed);
  MatrixFileWriter w(o.out, o.rows, o.cols, o.dtype, o.header);
  constexpr std::size_t chunk = 256;
  for (std::size_t first = 0; first < o.rows; first += chunk) {
    const DenseMatrix rows = gen.a_rows(first, std::min(chunk, o.rows - first));
    for (std::size_t i = 0; i < rows.rows(); ++i) w.write_row(rows.row(i));
  }
  w.close();
  detail::write_values_csv(paths.truth, gen.sigma());

  Manifest m;
  m.set("command", "gen");
  m.set("command_line", o.command_line);
  m.set("spectrum", o.spec.name());
  m.set("rows", o.rows);
  m.set("cols", o.cols);
  m.set("seed", o.seed);
  m.set("dtype", to_string(o.dtype));
  m.set("layout", to_string(o.header));
  m.set("output.matrix", paths.matrix.string());
  m.set("output.truth", paths.truth.string());
  m.set("started", started);
  m.set("finished", detail::utc_timestamp());
  m.write(paths.manifest);
  return paths;
}

// ---------------------------------------------------------------------------

struct PcaOptions {
  InputSpec input;
  PcaConfig config;
  Algorithm algorithm = Algorithm::single_pass;
  std::size_t block_rows = 0;  ///< rows per read; 0 means l
  bool normalize_rows = false;
  unsigned threads = 1;
  fs::path out_prefix;
  std::string command_line;
};

struct PcaRun {
  TruncatedSvd svd;
  RunStats stats;
  std::size_t passes = 0;
  std::size_t partial_passes = 0;
  std::size_t rows_read = 0;
};

/// Runs one algorithm over a stream, counting passes.
inline PcaRun run_algorithm(RowStream& source, const PcaConfig& cfg, Algorithm algo, bool normalize) {
  PcaRun run;
  PassCounter counter(source);
  std::unique_ptr<NormalizingStream> norm;
  RowStream* s = &counter;
  if (normalize) {
    norm = std::make_unique<NormalizingStream>(counter);
    s = norm.get();
  }
  switch (algo) {
    case Algorithm::single_pass: run.svd = single_pass_pca(*s, cfg, &run.stats); break;
    case Algorithm::basic: run.svd = basic_rand_svd(*s, cfg, &run.stats); break;
    case Algorithm::legacy: run.svd = legacy_single_pass(*s, cfg, nullptr, &run.stats); break;
  }
  run.passes = counter.passes_completed();
  run.partial_passes = counter.partial_passes();
  run.rows_read = counter.rows_read();
  return run;
}

struct PcaResult {
  PcaRun run;
  fs::path u, s, v, s_csv, manifest;
};

inline void record_config(Manifest& m, const PcaConfig& c) {
  m.set("config.k", c.k);
  m.set("config.oversample", c.oversample);
  m.set("config.block", c.block);
  m.set("config.width", c.width());
  m.set("config.power", c.power);
  m.set("config.seed", c.seed);
  m.set("config.center", c.center ? 1 : 0);
  m.set("config.reorthogonalize", c.reorthogonalize ? 1 : 0);
  m.set("config.replace_deficient", c.replace_deficient ? 1 : 0);
  m.set("config.compensated_col_sums", c.sketch.compensated_col_sums ? 1 : 0);
}

/// Writes <prefix>.U.bin, .S.bin, .V.bin (spca1, f64), <prefix>.S.csv and
/// <prefix>.manifest.
inline PcaResult cmd_pca(const PcaOptions& o) {
  o.config.validate();
  if (o.algorithm != Algorithm::single_pass && o.config.power != 0) {
    throw ConfigError("--power applies to the single-pass algorithm only");
  }
  o.input.check();
  set_threads(o.threads);
  const std::string started = detail::utc_timestamp();
  const std::size_t block_rows = o.block_rows ? o.block_rows : o.config.width();
  auto stream = o.input.open(block_rows);

  PcaResult out;
  out.run = run_algorithm(*stream, o.config, o.algorithm, o.normalize_rows);
  const TruncatedSvd& svd = out.run.svd;

  out.u = detail::with_suffix(o.out_prefix, ".U.bin");
  out.s = detail::with_suffix(o.out_prefix, ".S.bin");
  out.v = detail::with_suffix(o.out_prefix, ".V.bin");
  out.s_csv = detail::with_suffix(o.out_prefix, ".S.csv");
  out.manifest = detail::with_suffix(o.out_prefix, ".manifest");
  write_matrix_file(out.u, svd.u, DType::f64, HeaderKind::spca1);
  write_matrix_file(out.s, DenseMatrix(svd.s.size(), 1, svd.s), DType::f64, HeaderKind::spca1);
  write_matrix_file(out.v, svd.v, DType::f64, HeaderKind::spca1);
  detail::write_values_csv(out.s_csv, svd.s);

  const auto& st = out.run.stats;
  Manifest m;
  m.set("command", "pca");
  m.set("command_line", o.command_line);
  m.set("algorithm", to_string(o.algorithm));
  record_config(m, o.config);
  o.input.describe(m);
  m.set("block_rows", block_rows);
  m.set("normalize_rows", o.normalize_rows ? 1 : 0);
  m.set("threads", o.threads);
  m.set("passes", out.run.passes);
  m.set("partial_passes", out.run.partial_passes);
  m.set("rows_read", out.run.rows_read);
  m.set("retained_floats", st.memory.peak());
  m.set("workspace_floats", st.memory.peak_workspace());
  m.set("time.read_seconds", st.timing.read_seconds);
  m.set("time.compute_seconds", st.timing.compute_seconds);
  m.set("time.factor_seconds", st.factor_seconds);
  m.set("result.s_first", svd.s.front());
  m.set("result.s_last", svd.s.back());
  m.set("result.warnings", svd.warnings.size());
  for (std::size_t i = 0; i < svd.warnings.size(); ++i) m.set("warning." + std::to_string(i + 1), svd.warnings[i]);
  m.set("output.u", out.u.string());
  m.set("output.s", out.s.string());
  m.set("output.v", out.v.string());
  m.set("output.s_csv", out.s_csv.string());
  m.set("started", started);
  m.set("finished", detail::utc_timestamp());
  m.write(out.manifest);
  return out;
}

/// Options of the pca run that wrote `m`. Feeding them back to cmd_pca
/// repeats the run; with threads = 1 the numeric outputs are byte-identical.
inline PcaOptions pca_options_from(const Manifest& m) {
  auto need = [&](const std::string& key) {
    auto v = m.get(key);
    if (!v) throw FormatError("manifest has no '" + key + "' entry");
    return *v;
  };
  auto num = [&](const std::string& key) { return static_cast<std::size_t>(std::stoull(need(key))); };
  if (need("command") != "pca") throw FormatError("manifest is not from a pca run");

  PcaOptions o;
  if (auto path = m.get("input.path")) {
    o.input.file = *path;
    o.input.layout = FileLayout{num("input.rows"), num("input.cols"), parse_dtype(need("input.dtype")),
                                parse_header_kind(need("input.layout"))};
  } else {
    const std::string name = need("input.synth");
    o.input.synth = name == "custom" ? SpectrumSpec::parse("custom:" + need("input.synth_values"))
                                     : SpectrumSpec::parse(name);
    o.input.synth_rows = num("input.rows");
    o.input.synth_cols = num("input.cols");
    o.input.synth_seed = std::stoull(need("input.synth_seed"));
  }
  PcaConfig& c = o.config;
  c.k = num("config.k");
  c.oversample = num("config.oversample");
  c.block = num("config.block");
  c.power = static_cast<unsigned>(num("config.power"));
  c.seed = std::stoull(need("config.seed"));
  c.center = num("config.center") != 0;
  c.reorthogonalize = num("config.reorthogonalize") != 0;
  c.replace_deficient = num("config.replace_deficient") != 0;
  c.sketch.compensated_col_sums = num("config.compensated_col_sums") != 0;
  o.algorithm = parse_algorithm(need("algorithm"));
  o.block_rows = num("block_rows");
  o.normalize_rows = num("normalize_rows") != 0;
  o.threads = static_cast<unsigned>(num("threads"));
  o.command_line = need("command_line");
  return o;
}

// ---------------------------------------------------------------------------

struct CompareOptions {
  InputSpec input;
  PcaConfig config;  ///< seed is replaced by each entry of `seeds`
  std::vector<std::uint64_t> seeds{0};
  std::vector<Algorithm> algorithms{Algorithm::single_pass};
  std::optional<fs::path> reference;  ///< prefix of an earlier pca run
  bool timing = false;
  unsigned threads = 1;
  fs::path out_csv;
  std::string command_line;
};

struct CompareRow {
  Algorithm algorithm;
  std::uint64_t seed;
  MetricsReport metrics;
};

/// Truncated reference loaded from the output files of a pca run.
inline TruncatedSvd load_reference(const fs::path& prefix, std::size_t k) {
  const FileLayout any{0, 0, DType::f64, HeaderKind::spca1};
  TruncatedSvd ref;
  const DenseMatrix s = read_matrix_file(detail::with_suffix(prefix, ".S.bin"), any);
  const DenseMatrix v = read_matrix_file(detail::with_suffix(prefix, ".V.bin"), any);
  if (s.rows() < k || v.cols() < k) {
    throw DimensionError("reference " + prefix.string() + " has rank " + std::to_string(s.rows()) + " < k = " +
                         std::to_string(k));
  }
  ref.s.assign(s.data().begin(), s.data().begin() + static_cast<std::ptrdiff_t>(k));
  ref.v = column_block(v, 0, k);
  return ref;
}

/// One CSV row per (algorithm, seed), then a "# summary" block of medians per
/// algorithm. Timing columns are present only with `timing`, so the default
/// report is byte-identical across reruns.
inline std::vector<CompareRow> cmd_compare(const CompareOptions& o) {
  o.config.validate();
  o.input.check();
  if (o.seeds.empty()) throw ConfigError("compare: at least one seed is required");
  if (o.algorithms.empty()) throw ConfigError("compare: at least one algorithm is required");
  set_threads(o.threads);
  const std::size_t k = o.config.k;
  const std::size_t l = o.config.width();

  // Desk-scale inputs are materialized once, for the exact oracle and the
  // residual; otherwise every run streams the input and a reference is needed.
  std::shared_ptr<const DenseMatrix> a;
  TruncatedSvd reference;
  {
    auto probe = o.input.open(l);
    const std::size_t m = probe->rows().value_or(0);
    const std::size_t n = probe->cols();
    const bool fits = m * n <= kExactSvdMaxEntries;
    if (!o.reference && !fits) {
      throw ScaleError("compare: " + std::to_string(m) + "x" + std::to_string(n) +
                       " is too large for the exact oracle; pass --reference with the prefix of a precomputed pca run");
    }
    if (fits) {
      auto mat = std::make_shared<DenseMatrix>(0, n);
      mat->reserve_rows(m);
      while (auto b = probe->next()) mat->append_rows(b->values.data());
      a = std::move(mat);
    }
    reference = o.reference ? load_reference(*o.reference, k) : exact_truncated_svd(*a, k);
  }

  std::vector<CompareRow> rows;
  for (const Algorithm algo : o.algorithms) {
    for (const std::uint64_t seed : o.seeds) {
      PcaConfig cfg = o.config;
      cfg.seed = seed;
      if (algo != Algorithm::single_pass) cfg.power = 0;
      std::unique_ptr<RowStream> stream =
          a ? std::unique_ptr<RowStream>(std::make_unique<MatrixRowStream>(a, l)) : o.input.open(l);
      PcaRun run = run_algorithm(*stream, cfg, algo, false);
      MetricsReport rep = a ? compare(run.svd, reference, *a) : compare(run.svd, reference);
      rep.passes = run.passes;
      rep.retained_floats = run.stats.memory.peak();
      rep.wall_times["read"] = run.stats.timing.read_seconds;
      rep.wall_times["compute"] = run.stats.timing.compute_seconds;
      rep.wall_times["factor"] = run.stats.factor_seconds;
      rows.push_back({algo, seed, std::move(rep)});
    }
  }

  std::ofstream f(o.out_csv, std::ios::trunc);
  if (!f) throw IoError(o.out_csv.string() + ": cannot open for writing");
  f << std::setprecision(17);
  f << "algorithm,seed,k,l,power," << metrics_csv_header(k);
  if (o.timing) f << ",read_seconds,compute_seconds,factor_seconds";
  f << '\n';
  for (const auto& r : rows) {
    f << to_string(r.algorithm) << ',' << r.seed << ',' << k << ',' << l << ','
      << (r.algorithm == Algorithm::single_pass ? o.config.power : 0u) << ',' << metrics_csv_row(r.metrics);
    if (o.timing) {
      f << ',' << r.metrics.wall_times.at("read") << ',' << r.metrics.wall_times.at("compute") << ','
        << r.metrics.wall_times.at("factor");
    }
    f << '\n';
  }
  f << "# summary\n";
  f << "algorithm,runs,median_max_err,median_residual_rel,median_corr_1,median_min_corr\n";
  for (const Algorithm algo : o.algorithms) {
    std::vector<double> err, res, c1, cmin;
    for (const auto& r : rows) {
      if (r.algorithm != algo) continue;
      err.push_back(r.metrics.max_singval_abs_err);
      if (r.metrics.frobenius_residual_rel) res.push_back(*r.metrics.frobenius_residual_rel);
      c1.push_back(r.metrics.per_component_correlation.front());
      cmin.push_back(*std::min_element(r.metrics.per_component_correlation.begin(),
                                       r.metrics.per_component_correlation.end()));
    }
    f << to_string(algo) << ',' << err.size() << ',' << detail::median(err) << ',';
    if (!res.empty()) f << detail::median(res);
    f << ',' << detail::median(c1) << ',' << detail::median(cmin) << '\n';
  }
  if (!f) throw IoError(o.out_csv.string() + ": write failed");
  return rows;
}

}  // namespace sppca::cli
