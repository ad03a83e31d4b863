#pragma once

// Argument parsing for the sppca tool. run() is separate from main() so the
// tests can drive it in-process.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sppca/cli.hpp"

namespace sppca::app {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kUsageError = 2 };

namespace detail {

struct InputFlags {
  std::string file;
  std::string synth;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string dtype = "f32";
  std::string layout = "raw";
  std::uint64_t synth_seed = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("input", file, "matrix file (raw or spca1)");
    cmd->add_option("--synth", synth, "stream a synthetic matrix instead: type1..type5 or custom:v1,v2,...");
    cmd->add_option("--rows", rows, "rows m (raw files: inferred from the size when omitted)");
    cmd->add_option("--cols", cols, "columns n");
    cmd->add_option("--dtype", dtype, "f32 or f64")->capture_default_str();
    cmd->add_option("--layout", layout, "raw or spca1")->capture_default_str();
    cmd->add_option("--synth-seed", synth_seed, "seed of the synthetic matrix")->capture_default_str();
  }

  cli::InputSpec spec() const {
    cli::InputSpec in;
    if (!file.empty()) {
      in.file = file;
      in.layout = FileLayout{rows, cols, parse_dtype(dtype), parse_header_kind(layout)};
    }
    if (!synth.empty()) {
      in.synth = SpectrumSpec::parse(synth);
      in.synth_rows = rows;
      in.synth_cols = cols;
      in.synth_seed = synth_seed;
    }
    in.check();
    return in;
  }
};

struct ConfigFlags {
  PcaConfig cfg;
  bool no_reorth = false;

  void add_to(CLI::App* cmd, bool with_seed) {
    cmd->add_option("-k,--rank", cfg.k, "target rank k")->required();
    cmd->add_option("-s,--oversample", cfg.oversample, "oversampling s")->capture_default_str();
    cmd->add_option("-b,--block", cfg.block, "block size b")->capture_default_str();
    cmd->add_option("-P,--power", cfg.power, "power parameter P (0 or 1)")->capture_default_str();
    if (with_seed) cmd->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
    cmd->add_flag("--center", cfg.center, "PCA of the column-centered matrix");
    cmd->add_flag("--replace-deficient", cfg.replace_deficient,
                  "replace rank-deficient sample columns instead of failing");
    cmd->add_flag("--compensated-sums", cfg.sketch.compensated_col_sums, "Kahan-summed column means");
    cmd->add_flag("--no-reorth", no_reorth, "skip block re-orthogonalization (diagnostics only)");
  }

  PcaConfig get() const {
    PcaConfig c = cfg;
    c.reorthogonalize = !no_reorth;
    return c;
  }
};

inline std::string join(const std::vector<std::string>& args) {
  std::string out;
  for (const auto& a : args) {
    if (!out.empty()) out += ' ';
    out += a.find_first_of(" \t\"'") == std::string::npos ? a : "\"" + a + "\"";
  }
  return out;
}

}  // namespace detail

/// Parses and runs one command. Exit codes: 0 success, 1 runtime or data
/// error, 2 usage or configuration error.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Single-pass randomized PCA of large row-streamed matrices", "sppca"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every command");
  unsigned threads = threads_from_env(1);
  app.add_option("--threads", threads, "worker threads (env SPPCA_THREADS; 1 is fully deterministic)");

  // gen
  auto* gen = app.add_subcommand("gen", "write a synthetic matrix file with a known spectrum");
  std::string gen_spec, gen_out, gen_dtype = "f32", gen_layout = "raw";
  std::size_t gen_m = 0, gen_n = 0;
  std::uint64_t gen_seed = 0;
  gen->add_option("spectrum", gen_spec, "type1..type5 or custom:v1,v2,...")->required();
  gen->add_option("rows", gen_m, "rows m")->required();
  gen->add_option("cols", gen_n, "columns n")->required();
  gen->add_option("-o,--out", gen_out, "output matrix path")->required();
  gen->add_option("--seed", gen_seed, "seed")->capture_default_str();
  gen->add_option("--dtype", gen_dtype, "f32 or f64")->capture_default_str();
  gen->add_option("--layout", gen_layout, "raw or spca1")->capture_default_str();

  // pca
  auto* pca = app.add_subcommand("pca", "run PCA / truncated SVD over a matrix file");
  detail::InputFlags pca_in;
  detail::ConfigFlags pca_cfg;
  std::string pca_algo = "single-pass", pca_out;
  std::size_t pca_block_rows = 0;
  bool pca_normalize = false;
  pca_in.add_to(pca);
  pca_cfg.add_to(pca, true);
  pca->add_option("-a,--algorithm", pca_algo, "single-pass, basic or legacy")->capture_default_str();
  pca->add_option("--block-rows", pca_block_rows, "rows per read (default l)");
  pca->add_flag("--normalize-rows", pca_normalize, "center and scale every row to unit norm first");
  pca->add_option("-o,--out", pca_out, "output prefix")->required();

  // compare
  auto* cmp = app.add_subcommand("compare", "compare algorithms against the exact SVD or a reference run");
  detail::InputFlags cmp_in;
  detail::ConfigFlags cmp_cfg;
  std::vector<std::string> cmp_algos{"single-pass"};
  std::vector<std::uint64_t> cmp_seed_list;
  std::size_t cmp_seeds = 1;
  std::uint64_t cmp_first_seed = 0;
  std::string cmp_out, cmp_ref;
  bool cmp_timing = false;
  cmp_in.add_to(cmp);
  cmp_cfg.add_to(cmp, false);
  cmp->add_option("-a,--algorithms", cmp_algos, "algorithms to run")->delimiter(',')->capture_default_str();
  cmp->add_option("--seeds", cmp_seeds, "number of seeds, first-seed .. first-seed + seeds - 1")
      ->capture_default_str();
  cmp->add_option("--first-seed", cmp_first_seed, "first seed")->capture_default_str();
  cmp->add_option("--seed-list", cmp_seed_list, "explicit seeds (overrides --seeds)")->delimiter(',');
  cmp->add_option("--reference", cmp_ref, "prefix of a pca run to use instead of the exact oracle");
  cmp->add_flag("--timing", cmp_timing, "add wall-clock columns (makes the CSV non-reproducible)");
  cmp->add_option("-o,--out", cmp_out, "output CSV path")->required();

  std::vector<std::string> argv_store{"sppca"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  const std::string command_line = detail::join(argv_store);

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "sppca: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    if (gen->parsed()) {
      cli::GenOptions o;
      o.spec = SpectrumSpec::parse(gen_spec);
      o.rows = gen_m;
      o.cols = gen_n;
      o.seed = gen_seed;
      o.out = gen_out;
      o.dtype = parse_dtype(gen_dtype);
      o.header = parse_header_kind(gen_layout);
      o.command_line = command_line;
      const auto r = cli::cmd_gen(o);
      out << "wrote " << r.matrix.string() << ", " << r.truth.string() << "\n";
    } else if (pca->parsed()) {
      cli::PcaOptions o;
      o.input = pca_in.spec();
      o.config = pca_cfg.get();
      o.algorithm = cli::parse_algorithm(pca_algo);
      o.block_rows = pca_block_rows;
      o.normalize_rows = pca_normalize;
      o.threads = threads;
      o.out_prefix = pca_out;
      o.command_line = command_line;
      const auto r = cli::cmd_pca(o);
      out << "passes=" << r.run.passes << " retained_floats=" << r.run.stats.memory.peak() << " s1=" << r.run.svd.s[0]
          << "\n";
      for (const auto& w : r.run.svd.warnings) err << "warning: " << w << "\n";
    } else if (cmp->parsed()) {
      cli::CompareOptions o;
      o.input = cmp_in.spec();
      o.config = cmp_cfg.get();
      o.algorithms.clear();
      for (const auto& a : cmp_algos) o.algorithms.push_back(cli::parse_algorithm(a));
      if (!cmp_seed_list.empty()) {
        o.seeds = cmp_seed_list;
      } else {
        o.seeds.clear();
        for (std::size_t i = 0; i < cmp_seeds; ++i) o.seeds.push_back(cmp_first_seed + i);
      }
      if (!cmp_ref.empty()) o.reference = cmp_ref;
      o.timing = cmp_timing;
      o.threads = threads;
      o.out_csv = cmp_out;
      o.command_line = command_line;
      const auto rows = cli::cmd_compare(o);
      out << "wrote " << rows.size() << " rows to " << cmp_out << "\n";
    }
  } catch (const ConfigError& e) {
    err << "sppca: " << e.what() << "\n";
    return kUsageError;
  } catch (const DomainError& e) {
    err << "sppca: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "sppca: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace sppca::app
