#pragma once

// Dense kernels shared by every factorization: seeded Gaussian matrices,
// products, unpivoted Householder QR, one-sided Jacobi SVD, triangular solves
// and orthogonal projection. All kernels are pure functions. Where they run in
// parallel, work is split over independent output rows, so results do not
// depend on the thread count.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sppca/dense_matrix.hpp"
#include "sppca/error.hpp"
#include "sppca/parallel.hpp"
#include "sppca/random.hpp"

namespace sppca {

struct QrPair {
  DenseMatrix q;  ///< m x b, orthonormal columns
  DenseMatrix r;  ///< b x b, upper triangular with nonnegative diagonal
};

struct SvdTriple {
  DenseMatrix u;
  std::vector<double> s;  ///< descending, nonnegative
  DenseMatrix v;
};

/// Columns with |r_jj| below this fraction of the largest input column norm
/// are treated as linearly dependent.
inline constexpr double kRankTolerance = 1e-12;

// ---------------------------------------------------------------------------
// Generators and basic products

/// rows x cols matrix of i.i.d. N(0, 1) entries; entry (i, j) is
/// standard_normal(seed, i * cols + j).
inline DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (rows == 0 || cols == 0) {
    throw DimensionError("gaussian_matrix: dimensions must be positive, got " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  DenseMatrix m(rows, cols);
  parallel_for(0, rows, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      auto r = m.row(i);
      for (std::size_t j = 0; j < cols; ++j) r[j] = standard_normal(seed, i * cols + j);
    }
  });
  return m;
}

/// Row i of a Gaussian matrix with `cols` columns, without building the rest.
inline void gaussian_row(std::uint64_t seed, std::size_t i, std::span<double> out) {
  const std::size_t cols = out.size();
  for (std::size_t j = 0; j < cols; ++j) out[j] = standard_normal(seed, i * cols + j);
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// A * B.
inline DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("multiply: inner dimensions differ");
  DenseMatrix c(a.rows(), b.cols());
  parallel_for(0, a.rows(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      auto out = c.row(i);
      const auto ai = a.row(i);
      for (std::size_t p = 0; p < a.cols(); ++p) {
        const double f = ai[p];
        if (f == 0.0) continue;
        const auto bp = b.row(p);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += f * bp[j];
      }
    }
  });
  return c;
}

/// A^T * B, accumulated over the rows of A and B in ascending order.
inline DenseMatrix multiply_at_b(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) throw DimensionError("multiply_at_b: row counts differ");
  DenseMatrix c(a.cols(), b.cols());
  parallel_for(0, a.cols(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const auto ar = a.row(r);
      const auto br = b.row(r);
      for (std::size_t j = lo; j < hi; ++j) {
        const double f = ar[j];
        if (f == 0.0) continue;
        auto out = c.row(j);
        for (std::size_t p = 0; p < br.size(); ++p) out[p] += f * br[p];
      }
    }
  }, 4);
  return c;
}

/// A * B^T.
inline DenseMatrix multiply_a_bt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("multiply_a_bt: column counts differ");
  DenseMatrix c(a.rows(), b.rows());
  parallel_for(0, a.rows(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto ai = a.row(i);
      for (std::size_t j = 0; j < b.rows(); ++j) {
        const auto bj = b.row(j);
        double acc = 0.0;
        for (std::size_t p = 0; p < ai.size(); ++p) acc += ai[p] * bj[p];
        c(i, j) = acc;
      }
    }
  });
  return c;
}

inline DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("subtract: shapes differ");
  DenseMatrix c = a;
  auto cd = c.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] -= bd[i];
  return c;
}

/// Copy of columns [first, last).
inline DenseMatrix column_block(const DenseMatrix& a, std::size_t first, std::size_t last) {
  if (first > last || last > a.cols()) throw DimensionError("column_block: range out of bounds");
  DenseMatrix out(a.rows(), last - first);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto src = a.row(i).subspan(first, last - first);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

/// Copy of rows [first, first + count).
inline DenseMatrix row_block(const DenseMatrix& a, std::size_t first, std::size_t count) {
  if (first + count > a.rows()) throw DimensionError("row_block: range out of bounds");
  const auto src = a.data().subspan(first * a.cols(), count * a.cols());
  return DenseMatrix(count, a.cols(), std::vector<double>(src.begin(), src.end()));
}

inline double frobenius_norm(const DenseMatrix& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  return std::sqrt(acc);
}

inline double max_abs(const DenseMatrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

/// max |Q^T Q - I|.
inline double orthonormality_error(const DenseMatrix& q) {
  const DenseMatrix g = multiply_at_b(q, q);
  double err = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) err = std::max(err, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
  return err;
}

inline DenseMatrix diagonal_matrix(std::span<const double> d, std::size_t rows, std::size_t cols) {
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < std::min({d.size(), rows, cols}); ++i) m(i, i) = d[i];
  return m;
}

// ---------------------------------------------------------------------------
// Householder QR

namespace detail {

// Overwrites `a` (m x n, m >= n) with R in the upper triangle and the
// reflector vectors (unit leading entry implied) below the diagonal.
inline std::vector<double> householder_in_place(DenseMatrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<double> tau(n, 0.0);
  std::vector<double> w(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double norm2 = 0.0;
    for (std::size_t i = j; i < m; ++i) norm2 += a(i, j) * a(i, j);
    const double norm = std::sqrt(norm2);
    const double alpha = a(j, j);
    if (norm == 0.0) continue;
    const double beta = alpha >= 0.0 ? -norm : norm;
    const double inv = 1.0 / (alpha - beta);
    for (std::size_t i = j + 1; i < m; ++i) a(i, j) *= inv;
    tau[j] = (beta - alpha) / beta;
    a(j, j) = beta;
    if (j + 1 == n) continue;

    const double t = tau[j];
    parallel_for(j + 1, n, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t c = lo; c < hi; ++c) w[c] = a(j, c);
      for (std::size_t i = j + 1; i < m; ++i) {
        const double vi = a(i, j);
        if (vi == 0.0) continue;
        const auto row = a.row(i);
        for (std::size_t c = lo; c < hi; ++c) w[c] += vi * row[c];
      }
      for (std::size_t c = lo; c < hi; ++c) {
        w[c] *= t;
        a(j, c) -= w[c];
      }
    }, 64);
    parallel_for(j + 1, m, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        const double vi = a(i, j);
        if (vi == 0.0) continue;
        auto row = a.row(i);
        for (std::size_t c = j + 1; c < n; ++c) row[c] -= vi * w[c];
      }
    }, 256);
  }
  return tau;
}

inline DenseMatrix extract_r(const DenseMatrix& packed) {
  const std::size_t n = packed.cols();
  DenseMatrix r(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) r(i, j) = packed(i, j);
  return r;
}

// Thin Q (m x n) from the packed reflectors, by backward accumulation.
inline DenseMatrix form_q(const DenseMatrix& packed, const std::vector<double>& tau) {
  const std::size_t m = packed.rows();
  const std::size_t n = packed.cols();
  DenseMatrix q(m, n);
  for (std::size_t i = 0; i < n; ++i) q(i, i) = 1.0;
  std::vector<double> w(n, 0.0);
  for (std::size_t jj = n; jj-- > 0;) {
    const double t = tau[jj];
    if (t == 0.0) continue;
    for (std::size_t c = jj; c < n; ++c) w[c] = q(jj, c);
    for (std::size_t i = jj + 1; i < m; ++i) {
      const double vi = packed(i, jj);
      if (vi == 0.0) continue;
      const auto row = q.row(i);
      for (std::size_t c = jj; c < n; ++c) w[c] += vi * row[c];
    }
    for (std::size_t c = jj; c < n; ++c) {
      w[c] *= t;
      q(jj, c) -= w[c];
    }
    parallel_for(jj + 1, m, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        const double vi = packed(i, jj);
        if (vi == 0.0) continue;
        auto row = q.row(i);
        for (std::size_t c = jj; c < n; ++c) row[c] -= vi * w[c];
      }
    }, 256);
  }
  return q;
}

// Flip signs so that diag(R) >= 0.
inline void normalize_signs(QrPair& f) {
  for (std::size_t j = 0; j < f.r.rows(); ++j) {
    if (f.r(j, j) >= 0.0) continue;
    for (std::size_t c = j; c < f.r.cols(); ++c) f.r(j, c) = -f.r(j, c);
    for (std::size_t i = 0; i < f.q.rows(); ++i) f.q(i, j) = -f.q(i, j);
  }
}

inline double max_column_norm(const DenseMatrix& y) {
  std::vector<double> sq(y.cols(), 0.0);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const auto r = y.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) sq[j] += r[j] * r[j];
  }
  double best = 0.0;
  for (double v : sq) best = std::max(best, v);
  return std::sqrt(best);
}

}  // namespace detail

/// Householder QR without the rank check. Q always has orthonormal columns,
/// even for rank-deficient input. Takes its argument by value so callers can
/// hand over a buffer they no longer need.
inline QrPair householder_qr(DenseMatrix y) {
  if (y.rows() < y.cols() || y.cols() == 0) {
    throw DimensionError("householder_qr: need rows >= cols >= 1, got " + std::to_string(y.rows()) + "x" +
                         std::to_string(y.cols()));
  }
  const auto tau = detail::householder_in_place(y);
  QrPair f{detail::form_q(y, tau), detail::extract_r(y)};
  detail::normalize_signs(f);
  return f;
}

/// Unpivoted QR, y = q r, with diag(r) >= 0. Throws RankDeficiencyError for
/// the first column whose |r_jj| falls below kRankTolerance times the largest
/// column norm of y.
inline QrPair qr_unpivoted(const DenseMatrix& y) {
  if (y.rows() < y.cols() || y.cols() == 0) {
    throw DimensionError("qr_unpivoted: need rows >= cols >= 1, got " + std::to_string(y.rows()) + "x" +
                         std::to_string(y.cols()));
  }
  const double scale = detail::max_column_norm(y);
  QrPair f = householder_qr(y);
  const double tol = kRankTolerance * scale;
  for (std::size_t j = 0; j < f.r.rows(); ++j) {
    if (!(f.r(j, j) > tol)) {
      throw RankDeficiencyError(j, "qr_unpivoted: column " + std::to_string(j) + " is numerically dependent");
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Triangular solves

namespace detail {

inline void check_triangular_system(const DenseMatrix& r, std::size_t rhs_rows, const char* who) {
  if (r.rows() != r.cols()) throw DimensionError(std::string(who) + ": r must be square");
  if (rhs_rows != r.rows()) throw DimensionError(std::string(who) + ": right-hand side row count mismatch");
  double scale = 0.0;
  for (std::size_t j = 0; j < r.rows(); ++j) scale = std::max(scale, std::abs(r(j, j)));
  for (std::size_t j = 0; j < r.rows(); ++j) {
    if (!(std::abs(r(j, j)) > 1e-14 * scale)) {
      throw SingularityError(std::string(who) + ": diagonal entry " + std::to_string(j) + " is (near) zero");
    }
  }
}

// Solves x R = z in place for one row vector (equivalently R^T x^T = z^T).
// Indices flagged in `skip` have no pivot; their unknowns are set to zero.
inline void forward_subst_row(const DenseMatrix& r, std::span<double> z, const std::vector<char>* skip = nullptr) {
  const std::size_t b = r.rows();
  for (std::size_t j = 0; j < b; ++j) {
    if (skip != nullptr && (*skip)[j]) {
      z[j] = 0.0;
      continue;
    }
    double acc = z[j];
    for (std::size_t p = 0; p < j; ++p) acc -= r(p, j) * z[p];
    z[j] = acc / r(j, j);
  }
}

}  // namespace detail

/// R^{-T} M by forward substitution (R upper triangular, b x b; M b x n).
inline DenseMatrix solve_rt(const DenseMatrix& r, const DenseMatrix& m) {
  detail::check_triangular_system(r, m.rows(), "solve_rt");
  const std::size_t b = r.rows();
  DenseMatrix x = m;
  for (std::size_t j = 0; j < b; ++j) {
    auto xj = x.row(j);
    for (std::size_t p = 0; p < j; ++p) {
      const double f = r(p, j);
      if (f == 0.0) continue;
      const auto xp = x.row(p);
      for (std::size_t c = 0; c < xj.size(); ++c) xj[c] -= f * xp[c];
    }
    const double inv = 1.0 / r(j, j);
    for (double& v : xj) v *= inv;
  }
  return x;
}

/// R^{-1} M by back substitution.
inline DenseMatrix solve_r(const DenseMatrix& r, const DenseMatrix& m) {
  detail::check_triangular_system(r, m.rows(), "solve_r");
  const std::size_t b = r.rows();
  DenseMatrix x = m;
  for (std::size_t jj = b; jj-- > 0;) {
    auto xj = x.row(jj);
    for (std::size_t p = jj + 1; p < b; ++p) {
      const double f = r(jj, p);
      if (f == 0.0) continue;
      const auto xp = x.row(p);
      for (std::size_t c = 0; c < xj.size(); ++c) xj[c] -= f * xp[c];
    }
    const double inv = 1.0 / r(jj, jj);
    for (double& v : xj) v *= inv;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Projection

/// q (q^T x): orthogonal projection of x onto range(q).
inline std::vector<double> projector_apply(const DenseMatrix& q, std::span<const double> x) {
  if (x.size() != q.rows()) {
    throw DimensionError("projector_apply: vector length " + std::to_string(x.size()) + " does not match " +
                         std::to_string(q.rows()) + " rows");
  }
  std::vector<double> coeff(q.cols(), 0.0);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto qi = q.row(i);
    for (std::size_t j = 0; j < coeff.size(); ++j) coeff[j] += qi[j] * x[i];
  }
  std::vector<double> out(q.rows(), 0.0);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto qi = q.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < coeff.size(); ++j) acc += qi[j] * coeff[j];
    out[i] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVD

namespace detail {

struct JacobiResult {
  DenseMatrix ut;  // rows are left singular vectors (unsorted)
  DenseMatrix vt;  // rows are right singular vectors (unsorted)
  std::vector<double> s;
};

// One-sided (Hestenes) Jacobi on the columns of a square matrix. Works on
// x = a^T so each column is a contiguous row.
inline JacobiResult jacobi_square(const DenseMatrix& a) {
  const std::size_t c = a.rows();
  DenseMatrix x = transpose(a);
  DenseMatrix v = DenseMatrix::identity(c);
  const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(std::max<std::size_t>(c, 1));
  for (int sweep = 0; sweep < 80; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < c; ++p) {
      for (std::size_t q = p + 1; q < c; ++q) {
        auto xp = x.row(p);
        auto xq = x.row(q);
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
          alpha += xp[i] * xp[i];
          beta += xq[i] * xq[i];
          gamma += xp[i] * xq[i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (std::size_t i = 0; i < c; ++i) {
          const double a1 = xp[i], a2 = xq[i];
          xp[i] = cs * a1 - sn * a2;
          xq[i] = sn * a1 + cs * a2;
        }
        auto vp = v.row(p);
        auto vq = v.row(q);
        for (std::size_t i = 0; i < c; ++i) {
          const double a1 = vp[i], a2 = vq[i];
          vp[i] = cs * a1 - sn * a2;
          vq[i] = sn * a1 + cs * a2;
        }
      }
    }
    if (!rotated) break;
  }

  JacobiResult out{DenseMatrix(c, c), std::move(v), std::vector<double>(c, 0.0)};
  std::vector<char> zero(c, 0);
  for (std::size_t p = 0; p < c; ++p) {
    const auto xp = x.row(p);
    double n2 = 0.0;
    for (double e : xp) n2 += e * e;
    const double sigma = std::sqrt(n2);
    out.s[p] = sigma;
    if (!(sigma > std::numeric_limits<double>::min())) {
      zero[p] = 1;
      out.s[p] = 0.0;
      continue;
    }
    auto up = out.ut.row(p);
    for (std::size_t i = 0; i < c; ++i) up[i] = xp[i] / sigma;
  }
  // Complete left vectors for exactly zero singular values.
  for (std::size_t p = 0; p < c; ++p) {
    if (!zero[p]) continue;
    for (std::size_t e = 0; e < c; ++e) {
      std::vector<double> cand(c, 0.0);
      cand[e] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t o = 0; o < c; ++o) {
          if (o == p || zero[o]) continue;
          const auto uo = out.ut.row(o);
          double d = 0.0;
          for (std::size_t i = 0; i < c; ++i) d += uo[i] * cand[i];
          for (std::size_t i = 0; i < c; ++i) cand[i] -= d * uo[i];
        }
      }
      double n2 = 0.0;
      for (double val : cand) n2 += val * val;
      if (n2 > 0.25) {
        const double inv = 1.0 / std::sqrt(n2);
        auto up = out.ut.row(p);
        for (std::size_t i = 0; i < c; ++i) up[i] = cand[i] * inv;
        zero[p] = 0;  // now part of the basis
        break;
      }
    }
  }
  return out;
}

}  // namespace detail

/// SVD of a tall matrix (rows >= cols): Householder QR followed by one-sided
/// Jacobi on the triangular factor. Consumes its argument; the returned u has
/// the same shape as the input, v is cols x cols.
inline SvdTriple dense_svd_tall(DenseMatrix a) {
  if (a.rows() < a.cols() || a.cols() == 0) throw DimensionError("dense_svd_tall: need rows >= cols >= 1");
  if (!all_finite(a)) throw InputError("dense_svd: input contains non-finite entries");
  const std::size_t n = a.cols();
  const auto tau = detail::householder_in_place(a);
  const DenseMatrix r = detail::extract_r(a);
  DenseMatrix q = detail::form_q(a, tau);
  a.release();

  const auto jac = detail::jacobi_square(r);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return jac.s[x] > jac.s[y]; });

  // Sorted small factors: ur(:, k) = jac.ut(order[k], :), v likewise.
  DenseMatrix ur(n, n), v(n, n);
  std::vector<double> s(n);
  for (std::size_t k = 0; k < n; ++k) {
    s[k] = jac.s[order[k]];
    for (std::size_t i = 0; i < n; ++i) {
      ur(i, k) = jac.ut(order[k], i);
      v(i, k) = jac.vt(order[k], i);
    }
  }
  // u = q * ur, row by row in place.
  parallel_for(0, q.rows(), [&](std::size_t lo, std::size_t hi) {
    std::vector<double> t(n);
    for (std::size_t i = lo; i < hi; ++i) {
      auto qi = q.row(i);
      std::fill(t.begin(), t.end(), 0.0);
      for (std::size_t p = 0; p < n; ++p) {
        const double f = qi[p];
        if (f == 0.0) continue;
        const auto urp = ur.row(p);
        for (std::size_t k = 0; k < n; ++k) t[k] += f * urp[k];
      }
      std::copy(t.begin(), t.end(), qi.begin());
    }
  });
  return SvdTriple{std::move(q), std::move(s), std::move(v)};
}

/// Thin SVD of any l x n matrix; returns min(l, n) singular triples.
inline SvdTriple dense_svd(const DenseMatrix& b) {
  if (b.rows() == 0 || b.cols() == 0) throw DimensionError("dense_svd: empty matrix");
  if (!all_finite(b)) throw InputError("dense_svd: input contains non-finite entries");
  if (b.rows() >= b.cols()) return dense_svd_tall(b);
  SvdTriple t = dense_svd_tall(transpose(b));
  return SvdTriple{std::move(t.v), std::move(t.s), std::move(t.u)};
}

}  // namespace sppca
