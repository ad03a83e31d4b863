#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "sppca/matcore.hpp"
#include "sppca/parallel.hpp"
#include "sppca/sketch.hpp"
#include "test_support.hpp"

namespace sppca {
namespace {

using testing::bit_identical;
using testing::random_matrix;
using testing::rel_frobenius;

SketchState sketch_of(const DenseMatrix& a, const DenseMatrix& omega, std::size_t block_rows) {
  MatrixRowStream s(a, block_rows);
  return sketch_pass(s, omega);
}

// A stream whose blocks are built by hand, for malformed-input cases.
class ScriptedStream final : public RowStream {
 public:
  ScriptedStream(std::size_t cols, std::vector<RowBlock> blocks) : cols_(cols), blocks_(std::move(blocks)) {}
  std::size_t cols() const override { return cols_; }
  std::optional<std::size_t> rows() const override { return std::nullopt; }
  bool resettable() const override { return true; }
  void reset() override { pos_ = 0; }
  std::optional<RowBlock> next() override {
    if (pos_ == blocks_.size()) return std::nullopt;
    return blocks_[pos_++];
  }

 private:
  std::size_t cols_;
  std::vector<RowBlock> blocks_;
  std::size_t pos_ = 0;
};

// --- streams and pass counting ---------------------------------------------

TEST(MatrixRowStream, YieldsContiguousBlocks) {
  MatrixRowStream s(random_matrix(10, 3, 1), 4);
  std::vector<std::size_t> firsts, sizes;
  while (auto b = s.next()) {
    firsts.push_back(b->first_row);
    sizes.push_back(b->values.rows());
    EXPECT_EQ(b->values.cols(), 3u);
  }
  EXPECT_EQ(firsts, (std::vector<std::size_t>{0, 4, 8}));
  EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 2}));
}

TEST(PassCounter, CountsCompletedAndPartialPasses) {
  MatrixRowStream inner(random_matrix(10, 3, 1), 4);
  PassCounter s(inner);
  while (s.next()) {
  }
  EXPECT_EQ(s.passes_completed(), 1u);
  EXPECT_EQ(s.rows_read(), 10u);
  s.reset();
  s.next();
  EXPECT_TRUE(s.in_partial_pass());
  s.reset();
  EXPECT_EQ(s.partial_passes(), 1u);
  while (s.next()) {
  }
  EXPECT_EQ(s.passes_completed(), 2u);
  EXPECT_EQ(s.rows_read(), 24u);
}

TEST(PassCounter, SketchPassReadsExactlyOnce) {
  const auto a = random_matrix(23, 6, 2);
  MatrixRowStream inner(a, 5);
  PassCounter s(inner);
  sketch_pass(s, gaussian_matrix(6, 4, 3));
  EXPECT_EQ(s.passes_completed(), 1u);
  EXPECT_EQ(s.rows_read(), 23u);
  EXPECT_EQ(s.partial_passes(), 0u);
}

// --- sketch_pass -----------------------------------------------------------

TEST(SketchPass, IdentityMatrix) {
  const auto omega = gaussian_matrix(5, 3, 9);
  const auto st = sketch_of(DenseMatrix::identity(5), omega, 2);
  EXPECT_EQ(st.g, omega);
  EXPECT_EQ(st.h, omega);
  EXPECT_EQ(st.rows_seen, 5u);
  for (double c : st.col_sums) EXPECT_EQ(c, 1.0);
}

TEST(SketchPass, ZeroMatrix) {
  const auto st = sketch_of(DenseMatrix(6, 4), gaussian_matrix(4, 2, 1), 4);
  EXPECT_EQ(max_abs(st.g), 0.0);
  EXPECT_EQ(max_abs(st.h), 0.0);
  for (double c : st.col_sums) EXPECT_EQ(c, 0.0);
}

TEST(SketchPass, MatchesInMemoryProducts) {
  const auto a = random_matrix(40, 30, 4);
  const auto omega = gaussian_matrix(30, 8, 5);
  const auto st = sketch_of(a, omega, 7);
  const auto g = multiply(a, omega);
  EXPECT_LE(rel_frobenius(st.g, g), 1e-12);
  EXPECT_LE(rel_frobenius(st.h, multiply_at_b(a, g)), 1e-12);
  for (std::size_t j = 0; j < 30; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 40; ++i) s += a(i, j);
    EXPECT_NEAR(st.col_sums[j], s, 1e-12);
  }
  EXPECT_EQ(st.retained_floats(), 40u * 8 + 30u * 8 + 30u);
}

TEST(SketchPass, BlockPartitionDoesNotChangeBits) {
  const auto a = random_matrix(53, 17, 6);
  const auto omega = gaussian_matrix(17, 6, 7);
  const auto ref = sketch_of(a, omega, 53);
  for (std::size_t b : {1u, 2u, 5u, 16u, 37u, 100u}) {
    const auto st = sketch_of(a, omega, b);
    EXPECT_TRUE(bit_identical(st.g, ref.g)) << b;
    EXPECT_TRUE(bit_identical(st.h, ref.h)) << b;
    EXPECT_EQ(st.col_sums, ref.col_sums) << b;
  }
}

TEST(SketchPass, ThreadCountDoesNotChangeBits) {
  const auto a = random_matrix(80, 64, 8);
  const auto omega = gaussian_matrix(64, 10, 9);
  set_threads(1);
  const auto one = sketch_of(a, omega, 9);
  set_threads(3);
  const auto three = sketch_of(a, omega, 9);
  set_threads(1);
  EXPECT_TRUE(bit_identical(one.g, three.g));
  EXPECT_TRUE(bit_identical(one.h, three.h));
}

TEST(SketchPass, OmegaTransposeHIsSymmetric) {
  const auto a = random_matrix(60, 25, 10);
  const auto omega = gaussian_matrix(25, 12, 11);
  const auto st = sketch_of(a, omega, 8);
  const auto s = multiply_at_b(omega, st.h);
  EXPECT_LE(frobenius_norm(subtract(s, transpose(s))) / frobenius_norm(s), 1e-10);
}

TEST(SketchPass, CompensatedSumsAgree) {
  const auto a = random_matrix(200, 5, 12);
  MatrixRowStream s1(a, 13), s2(a, 13);
  const auto plain = sketch_pass(s1, gaussian_matrix(5, 2, 1));
  const auto comp = sketch_pass(s2, gaussian_matrix(5, 2, 1), SketchOptions{true});
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(plain.col_sums[j], comp.col_sums[j], 1e-12);
}

TEST(SketchPass, WrongColumnCountIsAFormatError) {
  std::vector<RowBlock> blocks{{0, DenseMatrix(2, 3, 1.0)}, {2, DenseMatrix(1, 4, 1.0)}};
  ScriptedStream s(3, blocks);
  EXPECT_THROW(sketch_pass(s, gaussian_matrix(3, 2, 1)), StreamFormatError);
}

TEST(SketchPass, OutOfOrderBlockIsAFormatError) {
  std::vector<RowBlock> blocks{{0, DenseMatrix(2, 3, 1.0)}, {5, DenseMatrix(1, 3, 1.0)}};
  ScriptedStream s(3, blocks);
  EXPECT_THROW(sketch_pass(s, gaussian_matrix(3, 2, 1)), StreamFormatError);
}

TEST(SketchPass, NonFiniteValueReportsGlobalRow) {
  DenseMatrix bad(3, 3, 1.0);
  bad(2, 1) = std::numeric_limits<double>::quiet_NaN();
  std::vector<RowBlock> blocks{{0, DenseMatrix(4, 3, 1.0)}, {4, bad}};
  ScriptedStream s(3, blocks);
  try {
    sketch_pass(s, gaussian_matrix(3, 2, 1));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(e.row(), 6u);
  }
}

TEST(SketchPass, OmegaShapeMismatch) {
  MatrixRowStream s(random_matrix(4, 3, 1), 2);
  EXPECT_THROW(sketch_pass(s, gaussian_matrix(4, 2, 1)), DimensionError);
}

// --- centering -------------------------------------------------------------

DenseMatrix centered(const DenseMatrix& a) {
  DenseMatrix c = a;
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) mu += a(i, j);
    mu /= static_cast<double>(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) c(i, j) -= mu;
  }
  return c;
}

TEST(CenterCorrect, MatchesExplicitCentering) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto a = random_matrix(30, 20, 100 + seed);
    for (std::size_t i = 0; i < 30; ++i)
      for (std::size_t j = 0; j < 20; ++j) a(i, j) += 3.0 + static_cast<double>(j % 5);
    const auto omega = gaussian_matrix(20, 6, seed);
    const auto corrected = center_correct(sketch_of(a, omega, 7), omega);
    const auto oracle = sketch_of(centered(a), omega, 7);
    EXPECT_LE(rel_frobenius(corrected.g, oracle.g), 1e-10) << seed;
    EXPECT_LE(rel_frobenius(corrected.h, oracle.h), 1e-10) << seed;
  }
}

TEST(CenterCorrect, AlreadyCenteredIsUnchanged) {
  const auto a = centered(random_matrix(25, 10, 3));
  const auto omega = gaussian_matrix(10, 4, 4);
  const auto st = sketch_of(a, omega, 6);
  const auto c = center_correct(st, omega);
  EXPECT_LE(rel_frobenius(c.g, st.g), 1e-12);
  EXPECT_LE(rel_frobenius(c.h, st.h), 1e-12);
}

TEST(CenterCorrect, IdenticalRowsAreAnnihilated) {
  DenseMatrix a(12, 5);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 5; ++j) a(i, j) = 1.0 + static_cast<double>(j);
  const auto omega = gaussian_matrix(5, 3, 2);
  const auto st = sketch_of(a, omega, 5);
  const auto c = center_correct(st, omega);
  EXPECT_LE(max_abs(c.g), 1e-12 * max_abs(st.g));
  EXPECT_LE(max_abs(c.h), 1e-12 * max_abs(st.h));
}

TEST(CenterCorrect, FirstRowShiftGivesTheSameCenteredSketch) {
  auto a = random_matrix(40, 12, 9);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 12; ++j) a(i, j) += 1e4 * (1.0 + static_cast<double>(j));
  const auto omega = gaussian_matrix(12, 5, 3);
  const auto oracle = sketch_of(centered(a), omega, 7);
  SketchOptions opts;
  opts.shift_by_first_row = true;
  MatrixRowStream s(a, 7);
  auto shifted = sketch_pass(s, omega, opts);
  EXPECT_EQ(shifted.shift.size(), 12u);
  EXPECT_EQ(shifted.retained_floats(), shifted.g.size() + shifted.h.size() + 24u);
  center_correct_in_place(shifted, omega);
  EXPECT_TRUE(shifted.shift.empty());
  const auto plain = center_correct(sketch_of(a, omega, 7), omega);
  // Both are right; the shifted one loses far less to cancellation.
  const double err_shifted = rel_frobenius(shifted.h, oracle.h);
  EXPECT_LE(err_shifted, 1e-10);
  EXPECT_LE(err_shifted, rel_frobenius(plain.h, oracle.h));
  EXPECT_LE(rel_frobenius(shifted.g, oracle.g), 1e-10);
}

TEST(CenterCorrect, EmptyStateThrows) {
  ScriptedStream s(3, {});
  const auto omega = gaussian_matrix(3, 2, 1);
  EXPECT_THROW(center_correct(sketch_pass(s, omega), omega), EmptyStreamError);
}

// --- row normalization -----------------------------------------------------

TEST(NormalizeRows, AnalyticRow) {
  const auto out = normalize_rows(RowBlock{0, DenseMatrix::from_rows({{1, 2, 3}})});
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(out.values(0, 0), -r, 1e-15);
  EXPECT_NEAR(out.values(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(out.values(0, 2), r, 1e-15);
}

TEST(NormalizeRows, ConstantRowBecomesZero) {
  const auto out = normalize_rows(RowBlock{0, DenseMatrix::from_rows({{5, 5, 5}, {0.1, 0.1, 0.1}})});
  EXPECT_EQ(max_abs(out.values), 0.0);
}

TEST(NormalizeRows, RandomRowsHaveZeroMeanUnitNorm) {
  auto a = random_matrix(50, 40, 7);
  for (auto& x : a.data()) x = 10.0 + 3.0 * x;
  const auto out = normalize_rows(RowBlock{0, a});
  for (std::size_t i = 0; i < 50; ++i) {
    const auto r = out.values.row(i);
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / 40.0;
    const double norm = std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
    EXPECT_LE(std::abs(mean), 1e-14);
    EXPECT_LE(std::abs(norm - 1.0), 1e-14);
  }
}

TEST(NormalizingStream, WrapsEveryBlock) {
  MatrixRowStream inner(random_matrix(9, 6, 8), 4);
  NormalizingStream s(inner);
  std::size_t rows = 0;
  while (auto b = s.next()) {
    for (std::size_t i = 0; i < b->values.rows(); ++i) {
      const auto r = b->values.row(i);
      EXPECT_NEAR(std::inner_product(r.begin(), r.end(), r.begin(), 0.0), 1.0, 1e-14);
    }
    rows += b->values.rows();
  }
  EXPECT_EQ(rows, 9u);
}

}  // namespace
}  // namespace sppca
