#pragma once

// Streaming data model: row-block sources, pass accounting, the one-pass
// accumulation of G = A * Omega and H = A^T * G, and centering/normalization.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sppca/dense_matrix.hpp"
#include "sppca/error.hpp"
#include "sppca/matcore.hpp"
#include "sppca/parallel.hpp"

namespace sppca {

struct RowBlock {
  std::size_t first_row = 0;
  DenseMatrix values;  ///< block_rows x n
};

/// Sequential source of consecutive row blocks of a conceptual matrix A.
/// Single consumer. A pass ends when next() returns std::nullopt.
class RowStream {
 public:
  virtual ~RowStream() = default;

  virtual std::size_t cols() const = 0;
  /// Total row count, if known before the stream is exhausted.
  virtual std::optional<std::size_t> rows() const = 0;
  virtual std::optional<RowBlock> next() = 0;
  virtual bool resettable() const = 0;
  /// Rewinds to the first row. Throws CapabilityError when not resettable.
  virtual void reset() = 0;
};

/// Streams an in-memory matrix in fixed-size row blocks.
class MatrixRowStream final : public RowStream {
 public:
  MatrixRowStream(DenseMatrix a, std::size_t block_rows)
      : a_(std::make_shared<const DenseMatrix>(std::move(a))), block_rows_(block_rows) {
    if (block_rows_ == 0) throw DimensionError("MatrixRowStream: block_rows must be positive");
  }
  MatrixRowStream(std::shared_ptr<const DenseMatrix> a, std::size_t block_rows)
      : a_(std::move(a)), block_rows_(block_rows) {
    if (block_rows_ == 0) throw DimensionError("MatrixRowStream: block_rows must be positive");
  }

  std::size_t cols() const override { return a_->cols(); }
  std::optional<std::size_t> rows() const override { return a_->rows(); }
  bool resettable() const override { return true; }
  void reset() override { pos_ = 0; }

  std::optional<RowBlock> next() override {
    if (pos_ >= a_->rows()) return std::nullopt;
    const std::size_t count = std::min(block_rows_, a_->rows() - pos_);
    const auto src = a_->data().subspan(pos_ * a_->cols(), count * a_->cols());
    RowBlock block{pos_, DenseMatrix(count, a_->cols(), std::vector<double>(src.begin(), src.end()))};
    pos_ += count;
    return block;
  }

 private:
  std::shared_ptr<const DenseMatrix> a_;
  std::size_t block_rows_;
  std::size_t pos_ = 0;
};

/// Wraps a stream and counts completed traversals. A pass is complete when the
/// wrapped stream reports end-of-stream; a reset in the middle of a traversal
/// is recorded as a partial pass.
class PassCounter final : public RowStream {
 public:
  explicit PassCounter(RowStream& wrapped) : wrapped_(&wrapped) {}

  std::size_t cols() const override { return wrapped_->cols(); }
  std::optional<std::size_t> rows() const override { return wrapped_->rows(); }
  bool resettable() const override { return wrapped_->resettable(); }

  std::optional<RowBlock> next() override {
    if (at_end_) return std::nullopt;
    auto block = wrapped_->next();
    if (!block) {
      at_end_ = true;
      ++passes_completed_;
      rows_in_current_pass_ = 0;
      return std::nullopt;
    }
    rows_read_ += block->values.rows();
    rows_in_current_pass_ += block->values.rows();
    return block;
  }

  void reset() override {
    wrapped_->reset();
    if (rows_in_current_pass_ > 0) ++partial_passes_;
    rows_in_current_pass_ = 0;
    at_end_ = false;
  }

  std::size_t passes_completed() const noexcept { return passes_completed_; }
  std::size_t rows_read() const noexcept { return rows_read_; }
  std::size_t partial_passes() const noexcept { return partial_passes_; }
  /// True while a traversal has started but not reached end-of-stream.
  bool in_partial_pass() const noexcept { return rows_in_current_pass_ > 0; }

 private:
  RowStream* wrapped_;
  std::size_t passes_completed_ = 0;
  std::size_t rows_read_ = 0;
  std::size_t rows_in_current_pass_ = 0;
  std::size_t partial_passes_ = 0;
  bool at_end_ = false;
};

// ---------------------------------------------------------------------------

/// Accumulators of one pass: G = A * Omega (m x l), H = A^T * G (n x l), the
/// column sums of A and the number of rows seen.
struct SketchState {
  DenseMatrix g;
  DenseMatrix h;
  std::vector<double> col_sums;
  std::size_t rows_seen = 0;
  /// Row c subtracted from every streamed row when SketchOptions::shift_by_first_row
  /// is set. G, H and col_sums then describe A - 1 c^T, which has the same
  /// centered form as A.
  std::vector<double> shift;

  /// Floats retained by the sketch itself (Omega is owned by the caller).
  std::size_t retained_floats() const noexcept {
    return g.size() + h.size() + col_sums.size() + shift.size();
  }
};

struct SketchOptions {
  /// Kahan-compensated column sums, for very tall inputs.
  bool compensated_col_sums = false;
  /// Subtract the first row from every row before accumulating. Only useful
  /// when the sketch is centered afterwards: centering H costs a subtraction
  /// of two nearly equal terms when the column means dwarf the spread, and
  /// the shift removes most of that cancellation.
  bool shift_by_first_row = false;
};

/// Wall time split of a streaming pass.
struct PassTiming {
  double read_seconds = 0.0;
  double compute_seconds = 0.0;
};

namespace detail {

inline void check_block(const RowBlock& block, std::size_t expected_first, std::size_t n) {
  if (block.values.cols() != n) {
    throw StreamFormatError("stream block at row " + std::to_string(block.first_row) + " has " +
                            std::to_string(block.values.cols()) + " columns, expected " + std::to_string(n));
  }
  if (block.first_row != expected_first) {
    throw StreamFormatError("stream block starts at row " + std::to_string(block.first_row) + ", expected " +
                            std::to_string(expected_first));
  }
  for (std::size_t r = 0; r < block.values.rows(); ++r) {
    if (!all_finite(block.values.row(r))) {
      throw DataError(block.first_row + r,
                      "non-finite value in row " + std::to_string(block.first_row + r));
    }
  }
}

// out(j, :) += a(r, j) * y(r, :) for every row r of the block, rows ascending.
// Each output entry sees the rows in stream order, so the result does not
// depend on how the stream is partitioned into blocks.
inline void accumulate_at_y(DenseMatrix& out, const DenseMatrix& a, const DenseMatrix& y) {
  const std::size_t n = a.cols();
  const std::size_t l = y.cols();
  parallel_for(0, n, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const auto ar = a.row(r);
      const auto yr = y.row(r);
      for (std::size_t j = lo; j < hi; ++j) {
        const double f = ar[j];
        if (f == 0.0) continue;
        auto oj = out.row(j);
        for (std::size_t c = 0; c < l; ++c) oj[c] += f * yr[c];
      }
    }
  }, 16);
}

class ColumnSums {
 public:
  ColumnSums(std::size_t n, bool compensated) : sums_(n, 0.0), comp_(compensated ? n : 0, 0.0) {}

  void add(const DenseMatrix& a) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const auto ar = a.row(r);
      if (comp_.empty()) {
        for (std::size_t j = 0; j < ar.size(); ++j) sums_[j] += ar[j];
      } else {
        for (std::size_t j = 0; j < ar.size(); ++j) {
          const double y = ar[j] - comp_[j];
          const double t = sums_[j] + y;
          comp_[j] = (t - sums_[j]) - y;
          sums_[j] = t;
        }
      }
    }
  }

  std::vector<double> take() { return std::move(sums_); }

 private:
  std::vector<double> sums_;
  std::vector<double> comp_;
};

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace detail

/// One pass over `stream` accumulating G = A * Omega, H = A^T * G and the
/// column sums of A. Apart from G, H and Omega, only the current row block is
/// held in memory. The stream must be positioned at its first row.
inline SketchState sketch_pass(RowStream& stream, const DenseMatrix& omega, const SketchOptions& opts = {},
                               PassTiming* timing = nullptr) {
  const std::size_t n = stream.cols();
  const std::size_t l = omega.cols();
  if (omega.rows() != n) {
    throw DimensionError("sketch_pass: stream has " + std::to_string(n) + " columns but omega has " +
                         std::to_string(omega.rows()) + " rows");
  }
  SketchState state;
  state.g = DenseMatrix(0, l);
  if (auto m = stream.rows()) state.g.reserve_rows(*m);
  state.h = DenseMatrix(n, l);
  detail::ColumnSums sums(n, opts.compensated_col_sums);

  for (;;) {
    auto t0 = detail::Clock::now();
    auto block = stream.next();
    if (timing) timing->read_seconds += detail::seconds_since(t0);
    if (!block) break;
    t0 = detail::Clock::now();
    detail::check_block(*block, state.rows_seen, n);
    if (opts.shift_by_first_row) {
      if (state.shift.empty() && block->values.rows() > 0) {
        const auto r0 = block->values.row(0);
        state.shift.assign(r0.begin(), r0.end());
      }
      for (std::size_t r = 0; r < block->values.rows(); ++r) {
        auto row = block->values.row(r);
        for (std::size_t j = 0; j < n; ++j) row[j] -= state.shift[j];
      }
    }
    const DenseMatrix g = multiply(block->values, omega);
    state.g.append_rows(g.data());
    detail::accumulate_at_y(state.h, block->values, g);
    sums.add(block->values);
    state.rows_seen += block->values.rows();
    if (timing) timing->compute_seconds += detail::seconds_since(t0);
  }
  state.col_sums = sums.take();
  return state;
}

/// In-place form of center_correct.
inline void center_correct_in_place(SketchState& state, const DenseMatrix& omega) {
  if (state.rows_seen == 0) throw EmptyStreamError("center_correct: no rows were streamed");
  const std::size_t n = state.h.rows();
  const std::size_t l = state.h.cols();
  if (omega.rows() != n || omega.cols() != l) throw DimensionError("center_correct: omega shape mismatch");
  const double m = static_cast<double>(state.rows_seen);

  // t = mu^T Omega, with mu = col_sums / m.
  std::vector<double> t(l, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double mu = state.col_sums[j] / m;
    const auto oj = omega.row(j);
    for (std::size_t c = 0; c < l; ++c) t[c] += mu * oj[c];
  }
  // G_c = G - 1 t^T.
  for (std::size_t r = 0; r < state.g.rows(); ++r) {
    auto gr = state.g.row(r);
    for (std::size_t c = 0; c < l; ++c) gr[c] -= t[c];
  }
  // H_c = A_c^T G_c = H - mu (1^T G) = H - col_sums t^T.
  for (std::size_t j = 0; j < n; ++j) {
    const double sj = state.col_sums[j];
    auto hj = state.h.row(j);
    for (std::size_t c = 0; c < l; ++c) hj[c] -= sj * t[c];
  }
  std::fill(state.col_sums.begin(), state.col_sums.end(), 0.0);
  state.shift.clear();
  state.shift.shrink_to_fit();
}

/// Turns the sketch of A into the sketch of the column-centered matrix
/// A - 1 mu^T without another pass. The returned column sums are zero.
inline SketchState center_correct(SketchState state, const DenseMatrix& omega) {
  center_correct_in_place(state, omega);
  return state;
}

/// Subtracts each row's mean and scales it to unit Euclidean norm. Rows that
/// are constant (residual norm at round-off level) become zero rows.
inline RowBlock normalize_rows(RowBlock block) {
  const std::size_t n = block.values.cols();
  if (n == 0) return block;
  for (std::size_t r = 0; r < block.values.rows(); ++r) {
    auto row = block.values.row(r);
    double mean = 0.0, scale = 0.0;
    for (double v : row) {
      mean += v;
      scale += v * v;
    }
    mean /= static_cast<double>(n);
    double norm2 = 0.0;
    for (double& v : row) {
      v -= mean;
      norm2 += v * v;
    }
    const double norm = std::sqrt(norm2);
    if (!(norm > 1e-13 * std::sqrt(scale))) {
      std::fill(row.begin(), row.end(), 0.0);
      continue;
    }
    for (double& v : row) v /= norm;
  }
  return block;
}

/// Applies normalize_rows to every block of a wrapped stream.
class NormalizingStream final : public RowStream {
 public:
  explicit NormalizingStream(RowStream& wrapped) : wrapped_(&wrapped) {}
  std::size_t cols() const override { return wrapped_->cols(); }
  std::optional<std::size_t> rows() const override { return wrapped_->rows(); }
  bool resettable() const override { return wrapped_->resettable(); }
  void reset() override { wrapped_->reset(); }
  std::optional<RowBlock> next() override {
    auto block = wrapped_->next();
    if (!block) return block;
    return normalize_rows(std::move(*block));
  }

 private:
  RowStream* wrapped_;
};

}  // namespace sppca
