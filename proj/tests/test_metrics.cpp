#include <gtest/gtest.h>

#include <cmath>

#include "sppca/metrics.hpp"
#include "sppca/synth.hpp"
#include "test_support.hpp"

namespace sppca {
namespace {

using testing::random_matrix;
using testing::random_vector;
using testing::to_eigen;

// Textbook Pearson correlation through Eigen, as an independent oracle.
double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const Eigen::Map<const Eigen::VectorXd> ex(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::Map<const Eigen::VectorXd> ey(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::VectorXd dx = ex.array() - ex.mean();
  const Eigen::VectorXd dy = ey.array() - ey.mean();
  return dx.dot(dy) / (dx.norm() * dy.norm());
}

TruncatedSvd svd_of(const DenseMatrix& a, std::size_t k) { return exact_truncated_svd(a, k); }

TEST(AlignedCorrelation, MatchesPearsonOracle) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto x = random_vector(40, seed);
    auto y = random_vector(40, seed + 100);
    for (std::size_t i = 0; i < 40; ++i) y[i] += 0.5 * x[i];
    double dot = 0.0;
    for (std::size_t i = 0; i < 40; ++i) dot += x[i] * y[i];
    std::vector<double> aligned = y;
    if (dot < 0.0)
      for (double& v : aligned) v = -v;
    EXPECT_NEAR(detail::aligned_correlation(x, y), pearson(x, aligned), 1e-14) << seed;
  }
}

TEST(AlignedCorrelation, SignFlipIsIgnored) {
  const auto x = random_vector(30, 1);
  std::vector<double> neg(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
  EXPECT_NEAR(detail::aligned_correlation(x, x), 1.0, 1e-15);
  EXPECT_NEAR(detail::aligned_correlation(x, neg), 1.0, 1e-15);
}

TEST(AlignedCorrelation, KnownValue) {
  // x . y > 0, so no flip; sxy = 5.5, sxx = 5, syy = 8.75.
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{1, 3, 2, 5};
  EXPECT_NEAR(detail::aligned_correlation(x, y), pearson(x, y), 1e-15);
  EXPECT_NEAR(pearson(x, y), 5.5 / std::sqrt(5.0 * 8.75), 1e-15);
}

TEST(Compare, SelfComparisonIsPerfect) {
  const auto a = random_matrix(30, 20, 3);
  const auto t = svd_of(a, 5);
  const auto r = compare(t, t, a);
  EXPECT_EQ(r.max_singval_abs_err, 0.0);
  ASSERT_EQ(r.per_component_correlation.size(), 5u);
  for (double c : r.per_component_correlation) EXPECT_NEAR(c, 1.0, 1e-15);
  ASSERT_TRUE(r.frobenius_residual_rel.has_value());
}

TEST(Compare, NegatedVectorsStillCorrelatePerfectly) {
  const auto a = random_matrix(30, 20, 4);
  const auto t = svd_of(a, 4);
  auto flipped = t;
  for (std::size_t i = 0; i < flipped.v.rows(); ++i) flipped.v(i, 2) = -flipped.v(i, 2);
  const auto r = compare(flipped, t);
  EXPECT_NEAR(r.per_component_correlation[2], 1.0, 1e-15);
  EXPECT_FALSE(r.frobenius_residual_rel.has_value());
}

TEST(Compare, SingularValueErrorIsTheMaxAbsoluteDifference) {
  const auto a = random_matrix(25, 15, 5);
  const auto t = svd_of(a, 3);
  auto off = t;
  off.s[0] += 1e-3;
  off.s[2] -= 5e-3;
  EXPECT_NEAR(compare(off, t).max_singval_abs_err, 5e-3, 1e-15);
}

TEST(Compare, ShapeMismatchesAreRejected) {
  const auto a = random_matrix(20, 10, 6);
  EXPECT_THROW(compare(svd_of(a, 3), svd_of(a, 4)), DimensionError);
  const auto b = random_matrix(20, 12, 7);
  EXPECT_THROW(compare(svd_of(a, 3), svd_of(b, 3)), DimensionError);
}

TEST(Residual, MatchesEigenOracle) {
  const auto a = random_matrix(40, 25, 8);
  const auto t = svd_of(a, 6);
  Eigen::MatrixXd us = to_eigen(t.u);
  for (std::size_t j = 0; j < 6; ++j) us.col(static_cast<Eigen::Index>(j)) *= t.s[j];
  const Eigen::MatrixXd ea = to_eigen(a);
  const double oracle = (ea - us * to_eigen(t.v).transpose()).norm() / ea.norm();
  EXPECT_NEAR(residual_frobenius_rel(a, t), oracle, 1e-13);
}

TEST(Residual, FullRankTruncationIsExact) {
  const auto a = random_matrix(12, 8, 9);
  EXPECT_LE(residual_frobenius_rel(a, svd_of(a, 8)), 1e-13);
}

TEST(Compare, Type1CorrelationsStayHighForLeadingComponents) {
  const auto sm = synth_matrix(SpectrumSpec::type(1), 300, 300, 7);
  PcaConfig cfg;
  cfg.k = 50;
  cfg.oversample = 10;
  cfg.block = 10;
  cfg.seed = 11;
  MatrixRowStream s(sm.a, 60);
  const auto got = single_pass_pca(s, cfg);
  const auto r = compare(got, svd_of(sm.a, 50), sm.a);
  for (std::size_t j = 0; j < 10; ++j) EXPECT_GE(r.per_component_correlation[j], 0.99) << j;
}

TEST(Output, CsvLayout) {
  MetricsReport r;
  r.max_singval_abs_err = 0.25;
  r.frobenius_residual_rel = 0.5;
  r.passes = 1;
  r.retained_floats = 1234;
  r.per_component_correlation = {1.0, 0.75};
  EXPECT_EQ(metrics_csv_header(2), "max_err,residual_rel,passes,retained_floats,corr_1,corr_2");
  EXPECT_EQ(metrics_csv_row(r), "0.25,0.5,1,1234,1,0.75");
  EXPECT_EQ(to_csv(r), metrics_csv_header(2) + "\n" + metrics_csv_row(r) + "\n");
  r.frobenius_residual_rel.reset();
  EXPECT_EQ(metrics_csv_row(r), "0.25,,1,1234,1,0.75");
}

TEST(Output, TextSummarizesLongCorrelationLists) {
  MetricsReport r;
  r.per_component_correlation.assign(12, 1.0);
  r.per_component_correlation[11] = 0.5;
  r.wall_times["read"] = 0.1;
  const auto text = to_text(r);
  EXPECT_NE(text.find("correlation v_10"), std::string::npos);
  EXPECT_EQ(text.find("correlation v_11"), std::string::npos);
  EXPECT_NE(text.find("min correlation (all k)  : 0.5"), std::string::npos);
  EXPECT_NE(text.find("time read"), std::string::npos);
}

}  // namespace
}  // namespace sppca
