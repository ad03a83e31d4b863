#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "sppca_app.hpp"
#include "test_support.hpp"

namespace sppca {
namespace {

namespace fs = std::filesystem;
using testing::bit_identical;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("sppca_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return app::run(args, out_, err_);
  }

  static std::string slurp(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
  }

  static std::size_t line_count(const std::string& p) {
    std::ifstream f(p);
    std::size_t n = 0;
    for (std::string line; std::getline(f, line);) ++n;
    return n;
  }

  static cli::Manifest manifest(const std::string& prefix) { return cli::Manifest::read(prefix + ".manifest"); }

  fs::path dir_;
  std::ostringstream out_, err_;
};

// --- gen -------------------------------------------------------------------

TEST_F(CliTest, GenWritesExactByteCountAndTruth) {
  ASSERT_EQ(run({"gen", "type5", "100", "80", "-o", path("a.f32")}), 0) << err_.str();
  EXPECT_EQ(fs::file_size(path("a.f32")), 100u * 80u * 4u);
  EXPECT_EQ(line_count(path("a.f32.truth.csv")), 80u);
  const auto truth = cli::read_values_csv(path("a.f32.truth.csv"));
  EXPECT_DOUBLE_EQ(truth[9], 0.1);
  EXPECT_EQ(manifest(path("a.f32")).get("spectrum"), "type5");
}

TEST_F(CliTest, GenIsDeterministic) {
  ASSERT_EQ(run({"gen", "type1", "50", "40", "--seed", "3", "-o", path("a.bin")}), 0);
  ASSERT_EQ(run({"gen", "type1", "50", "40", "--seed", "3", "-o", path("b.bin")}), 0);
  ASSERT_EQ(run({"gen", "type1", "50", "40", "--seed", "4", "-o", path("c.bin")}), 0);
  EXPECT_EQ(slurp(path("a.bin")), slurp(path("b.bin")));
  EXPECT_NE(slurp(path("a.bin")), slurp(path("c.bin")));
}

TEST_F(CliTest, GenFileRoundTripsThroughTheFileStream) {
  ASSERT_EQ(run({"gen", "type2", "64", "30", "--seed", "8", "--dtype", "f64", "--layout", "spca1", "-o",
                 path("a.spca")}),
            0);
  const auto back = read_matrix_file(path("a.spca"), FileLayout{0, 0, DType::f64, HeaderKind::spca1});
  EXPECT_TRUE(bit_identical(back, synth_matrix(SpectrumSpec::type(2), 64, 30, 8).a));
}

TEST_F(CliTest, GenBadSpectrumIsAUsageError) {
  EXPECT_EQ(run({"gen", "type7", "10", "10", "-o", path("x")}), app::kUsageError);
  EXPECT_EQ(run({"gen", "type1", "0", "10", "-o", path("x")}), app::kUsageError);
  EXPECT_EQ(run({"gen", "type1", "10", "-o", path("x")}), app::kUsageError);
}

// --- pca -------------------------------------------------------------------

TEST_F(CliTest, PassCountsInTheManifest) {
  ASSERT_EQ(run({"gen", "type2", "120", "60", "-o", path("a.f32")}), 0);
  const std::vector<std::string> base{"pca", path("a.f32"), "--cols", "60", "-k", "5"};
  auto with = [&](std::vector<std::string> extra, const std::string& prefix) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    args.push_back("-o");
    args.push_back(path(prefix));
    return run(args);
  };
  ASSERT_EQ(with({}, "sp"), 0) << err_.str();
  ASSERT_EQ(with({"-a", "basic"}, "basic"), 0) << err_.str();
  ASSERT_EQ(with({"-P", "1"}, "power"), 0) << err_.str();
  ASSERT_EQ(with({"-a", "legacy"}, "legacy"), 0) << err_.str();
  EXPECT_EQ(manifest(path("sp")).get("passes"), "1");
  EXPECT_EQ(manifest(path("basic")).get("passes"), "2");
  EXPECT_EQ(manifest(path("power")).get("passes"), "2");
  EXPECT_EQ(manifest(path("legacy")).get("passes"), "1");
  EXPECT_EQ(manifest(path("sp")).get("partial_passes"), "0");
  EXPECT_EQ(manifest(path("sp")).get("input.rows"), "120");
}

TEST_F(CliTest, PcaWritesFactorsAndSingularValues) {
  ASSERT_EQ(run({"pca", "--synth", "type3", "--rows", "90", "--cols", "50", "-k", "6", "-o", path("r")}), 0)
      << err_.str();
  const FileLayout any{0, 0, DType::f64, HeaderKind::spca1};
  const auto u = read_matrix_file(path("r.U.bin"), any);
  const auto s = read_matrix_file(path("r.S.bin"), any);
  const auto v = read_matrix_file(path("r.V.bin"), any);
  EXPECT_EQ(u.rows(), 90u);
  EXPECT_EQ(u.cols(), 6u);
  EXPECT_EQ(v.rows(), 50u);
  EXPECT_EQ(v.cols(), 6u);
  const auto csv = cli::read_values_csv(path("r.S.csv"));
  ASSERT_EQ(csv.size(), 6u);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(csv[j], s(j, 0));
}

TEST_F(CliTest, RankAboveMinDimensionIsAUsageError) {
  ASSERT_EQ(run({"gen", "type1", "30", "20", "-o", path("a.f32")}), 0);
  EXPECT_EQ(run({"pca", path("a.f32"), "--cols", "20", "-k", "21", "-o", path("r")}), app::kUsageError);
  EXPECT_NE(err_.str().find("exceeds min(m, n)"), std::string::npos) << err_.str();
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}), app::kUsageError);
  EXPECT_EQ(run({"pca", "-k", "3", "-o", path("r")}), app::kUsageError);  // no input
  EXPECT_EQ(run({"pca", "--synth", "type1", "--rows", "40", "--cols", "30", "-k", "3", "-P", "2", "-o", path("r")}),
            app::kUsageError);
  EXPECT_EQ(run({"pca", "--synth", "type1", "--rows", "40", "--cols", "30", "-k", "3", "-a", "fast", "-o",
                 path("r")}),
            app::kUsageError);
  EXPECT_EQ(run({"pca", "--synth", "type1", "--rows", "40", "--cols", "30", "-k", "3", "-a", "basic", "-P", "1",
                 "-o", path("r")}),
            app::kUsageError);
}

TEST_F(CliTest, TruncatedFileIsARuntimeError) {
  ASSERT_EQ(run({"gen", "type1", "30", "20", "-o", path("a.f32")}), 0);
  fs::resize_file(path("a.f32"), 30 * 20 * 4 - 8);
  EXPECT_EQ(run({"pca", path("a.f32"), "--rows", "30", "--cols", "20", "-k", "3", "-o", path("r")}),
            app::kRuntimeError);
}

TEST_F(CliTest, Type4TruthIsRecoveredWithEnoughOversampling) {
  // With the default s = 10 the sketch width is 30 and sigma_31 / sigma_20 is
  // only e^(-11/7), far from 1e-8 agreement; l = 80 pushes the tail below it.
  ASSERT_EQ(run({"gen", "type4", "300", "300", "--seed", "2", "--dtype", "f64", "-o", path("t4.f64")}), 0);
  ASSERT_EQ(run({"pca", path("t4.f64"), "--cols", "300", "--dtype", "f64", "-k", "20", "-s", "60", "-o",
                 path("r")}),
            0)
      << err_.str();
  const auto truth = cli::read_values_csv(path("t4.f64.truth.csv"));
  const auto got = cli::read_values_csv(path("r.S.csv"));
  ASSERT_EQ(got.size(), 20u);
  for (std::size_t j = 0; j < 20; ++j) EXPECT_NEAR(got[j], truth[j], 1e-8) << j;
}

TEST_F(CliTest, Type4DefaultOversamplingMatchesTheTwoPassAlgorithm) {
  ASSERT_EQ(run({"gen", "type4", "300", "300", "--seed", "2", "--dtype", "f64", "-o", path("t4.f64")}), 0);
  const std::vector<std::string> base{"pca", path("t4.f64"), "--cols", "300", "--dtype", "f64", "-k", "20"};
  auto sp = base, basic = base;
  sp.insert(sp.end(), {"-o", path("sp")});
  basic.insert(basic.end(), {"-a", "basic", "-o", path("basic")});
  ASSERT_EQ(run(sp), 0);
  ASSERT_EQ(run(basic), 0);
  const auto a = cli::read_values_csv(path("sp.S.csv"));
  const auto b = cli::read_values_csv(path("basic.S.csv"));
  for (std::size_t j = 0; j < 20; ++j) EXPECT_NEAR(a[j], b[j], 1e-9) << j;
}

TEST_F(CliTest, FileAndSynthInputsGiveIdenticalResults) {
  ASSERT_EQ(run({"gen", "type2", "150", "70", "--seed", "5", "--dtype", "f64", "-o", path("a.f64")}), 0);
  ASSERT_EQ(run({"pca", path("a.f64"), "--cols", "70", "--dtype", "f64", "-k", "8", "--seed", "1", "--block-rows",
                 "13", "-o", path("file")}),
            0);
  ASSERT_EQ(run({"pca", "--synth", "type2", "--rows", "150", "--cols", "70", "--synth-seed", "5", "-k", "8",
                 "--seed", "1", "--block-rows", "13", "-o", path("synth")}),
            0);
  for (const char* part : {".U.bin", ".S.bin", ".V.bin", ".S.csv"})
    EXPECT_EQ(slurp(path("file") + part), slurp(path("synth") + part)) << part;
}

TEST_F(CliTest, ManifestRecordsTheMemoryBound) {
  ASSERT_EQ(run({"pca", "--synth", "type1", "--rows", "400", "--cols", "150", "-k", "10", "-s", "10", "-o",
                 path("r")}),
            0);
  const auto m = manifest(path("r"));
  const std::size_t l = 20, rows = 400, cols = 150;
  const auto retained = std::stoull(*m.get("retained_floats"));
  EXPECT_LE(retained, (rows + 2 * cols) * l + cols);
  EXPECT_EQ(m.get("config.width"), "20");
}

TEST_F(CliTest, RerunFromManifestIsByteIdentical) {
  ASSERT_EQ(run({"gen", "type1", "120", "80", "-o", path("a.f32")}), 0);
  ASSERT_EQ(run({"pca", path("a.f32"), "--cols", "80", "-k", "7", "-s", "5", "-b", "4", "--seed", "9", "--center",
                 "-o", path("first")}),
            0);
  auto o = cli::pca_options_from(manifest(path("first")));
  o.out_prefix = path("again");
  cli::cmd_pca(o);
  for (const char* part : {".U.bin", ".S.bin", ".V.bin", ".S.csv"})
    EXPECT_EQ(slurp(path("first") + part), slurp(path("again") + part)) << part;

  ASSERT_EQ(run({"pca", "--synth", "custom:5,4,3,2,1", "--rows", "60", "--cols", "40", "-k", "3", "-s", "2", "-b", "5",
                 "-o", path("custom")}),
            0)
      << err_.str();
  auto oc = cli::pca_options_from(manifest(path("custom")));
  oc.out_prefix = path("custom2");
  cli::cmd_pca(oc);
  EXPECT_EQ(slurp(path("custom.S.bin")), slurp(path("custom2.S.bin")));
}

TEST_F(CliTest, ManifestFromAnotherCommandIsRejected) {
  ASSERT_EQ(run({"gen", "type1", "20", "10", "-o", path("a.f32")}), 0);
  EXPECT_THROW(cli::pca_options_from(manifest(path("a.f32"))), FormatError);
}

// --- compare ---------------------------------------------------------------

TEST_F(CliTest, CompareSingleRunHasOneRowAndASummary) {
  ASSERT_EQ(run({"compare", "--synth", "type2", "--rows", "100", "--cols", "60", "-k", "5", "-o", path("c.csv")}),
            0)
      << err_.str();
  std::ifstream f(path("c.csv"));
  std::vector<std::string> lines;
  for (std::string line; std::getline(f, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "algorithm,seed,k,l,power,max_err,residual_rel,passes,retained_floats,corr_1,corr_2,corr_3,"
                      "corr_4,corr_5");
  EXPECT_EQ(lines[1].rfind("single-pass,0,5,20,0,", 0), 0u) << lines[1];
  EXPECT_EQ(lines[2], "# summary");
  EXPECT_EQ(lines[3], "algorithm,runs,median_max_err,median_residual_rel,median_corr_1,median_min_corr");
  EXPECT_EQ(lines[4].rfind("single-pass,1,", 0), 0u);
}

TEST_F(CliTest, CompareIsDeterministic) {
  const std::vector<std::string> args{"compare", "--synth", "type1", "--rows", "80", "--cols", "60", "-k", "5",
                                      "-a", "single-pass,basic,legacy", "--seeds", "2"};
  auto a = args, b = args;
  a.insert(a.end(), {"-o", path("a.csv")});
  b.insert(b.end(), {"-o", path("b.csv")});
  ASSERT_EQ(run(a), 0) << err_.str();
  ASSERT_EQ(run(b), 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(line_count(path("a.csv")), 1u + 6u + 2u + 3u);
}

TEST_F(CliTest, CompareTimingAddsColumns) {
  ASSERT_EQ(run({"compare", "--synth", "type2", "--rows", "60", "--cols", "40", "-k", "3", "--timing", "-o",
                 path("c.csv")}),
            0);
  std::ifstream f(path("c.csv"));
  std::string header;
  std::getline(f, header);
  EXPECT_NE(header.find(",read_seconds,compute_seconds,factor_seconds"), std::string::npos);
}

TEST_F(CliTest, CompareAgainstAReferenceRun) {
  ASSERT_EQ(run({"pca", "--synth", "type2", "--rows", "100", "--cols", "60", "-k", "5", "-s", "40", "-P", "1", "-o",
                 path("ref")}),
            0);
  ASSERT_EQ(run({"compare", "--synth", "type2", "--rows", "100", "--cols", "60", "-k", "5", "--reference",
                 path("ref"), "-o", path("c.csv")}),
            0)
      << err_.str();
  EXPECT_EQ(line_count(path("c.csv")), 5u);
}

TEST_F(CliTest, LegacyIsAnOrderOfMagnitudeWorseOnSlowDecay) {
  ASSERT_EQ(run({"compare", "--synth", "type1", "--rows", "300", "--cols", "300", "--synth-seed", "7", "-k", "50",
                 "-a", "single-pass,legacy", "--seeds", "5", "-o", path("c.csv")}),
            0)
      << err_.str();
  std::ifstream f(path("c.csv"));
  std::string line;
  double sp = 0.0, legacy = 0.0;
  bool summary = false;
  while (std::getline(f, line)) {
    if (line == "# summary") summary = true;
    if (!summary) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const auto c3 = line.find(',', c2 + 1);
    if (line.rfind("single-pass,", 0) == 0) sp = std::stod(line.substr(c2 + 1, c3 - c2 - 1));
    if (line.rfind("legacy,", 0) == 0) legacy = std::stod(line.substr(c2 + 1, c3 - c2 - 1));
  }
  ASSERT_GT(sp, 0.0);
  EXPECT_GE(legacy / sp, 10.0) << "legacy " << legacy << " single-pass " << sp;
}

// --- the installed binary --------------------------------------------------

#ifdef SPPCA_CLI_PATH
int exit_code(const std::string& args) {
  const std::string cmd = std::string(SPPCA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(CliTest, BinaryExitCodes) {
  EXPECT_EQ(exit_code("--help"), 0);
  EXPECT_EQ(exit_code("gen type5 100 80 -o " + path("a.f32")), 0);
  EXPECT_EQ(exit_code("pca " + path("a.f32") + " --cols 80 -k 81 -o " + path("r")), 2);
  EXPECT_EQ(exit_code("pca " + path("missing.f32") + " --rows 5 --cols 80 -k 2 -o " + path("r")), 1);
  EXPECT_EQ(exit_code("pca " + path("a.f32") + " --cols 80 -k 4 -o " + path("r")), 0);
}
#endif

}  // namespace
}  // namespace sppca
