#pragma once

// Randomized QB factorizations and the truncated SVD / PCA drivers built on
// them:
//
//   blocked_qb          pass-free blocked QB from a one-pass sketch (G, H),
//                       with re-orthogonalization of every new block
//   single_pass_pca     sketch_pass -> [center] -> blocked_qb -> svd(B)
//   power_refine        one extra pass with Omega' = orth(H)
//   basic_rand_svd      two-pass Q = orth(A Omega), B = Q^T A
//   legacy_single_pass  one-pass scheme solving Omega~^T Q B = Y~^T Q~

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sppca/dense_matrix.hpp"
#include "sppca/error.hpp"
#include "sppca/matcore.hpp"
#include "sppca/memory_ledger.hpp"
#include "sppca/random.hpp"
#include "sppca/sketch.hpp"

namespace sppca {

struct PcaConfig {
  std::size_t k = 1;           ///< target rank
  std::size_t oversample = 10;  ///< s
  std::size_t block = 10;       ///< b
  unsigned power = 0;           ///< P, 0 or 1
  std::uint64_t seed = 0;
  bool center = false;
  /// Second QR of each new block against the accumulated basis. Turning it
  /// off reproduces the plain blocked recurrence, for diagnostics only.
  bool reorthogonalize = true;
  /// Replace numerically dependent sample columns by random directions
  /// orthogonal to the current basis instead of failing.
  bool replace_deficient = false;
  SketchOptions sketch;

  /// Sketch width l: the smallest multiple of `block` that is >= k + s.
  std::size_t width() const noexcept {
    if (block == 0) return 0;
    return (k + oversample + block - 1) / block * block;
  }

  void validate() const {
    if (k == 0) throw ConfigError("k must be at least 1");
    if (block == 0) throw ConfigError("block size must be at least 1");
    if (power > 1) throw ConfigError("power must be 0 or 1, got " + std::to_string(power));
  }

  void validate_for(std::size_t m, std::size_t n) const {
    validate();
    const std::size_t lim = std::min(m, n);
    if (k > lim) {
      throw ConfigError("k = " + std::to_string(k) + " exceeds min(m, n) = " + std::to_string(lim));
    }
    if (width() > lim) {
      throw ConfigError("sketch width l = " + std::to_string(width()) + " exceeds min(m, n) = " +
                        std::to_string(lim) + "; reduce oversampling or block size");
    }
  }
};

/// Rank-k truncated SVD, A ~ U diag(s) V^T. Each column pair is signed so that
/// the largest-magnitude entry of v_j is positive.
struct TruncatedSvd {
  DenseMatrix u;  ///< m x k
  std::vector<double> s;
  DenseMatrix v;  ///< n x k
  std::vector<std::string> warnings;

  std::size_t rank() const noexcept { return s.size(); }
};

/// Growing QB factorization. B is kept transposed (n x width) so that it can
/// share storage with H during the block loop.
struct QbFactor {
  DenseMatrix q;   ///< m x width, orthonormal columns
  DenseMatrix bt;  ///< n x width, B^T
  /// Columns that were filled with random directions (replacement mode).
  std::vector<char> replaced;

  std::size_t width() const noexcept { return q.cols(); }
  DenseMatrix b() const { return transpose(bt); }
};

struct QbOptions {
  bool reorthogonalize = true;
  bool replace_deficient = false;
  std::uint64_t replacement_seed = 0;
  /// Called after every block with the factorization built so far.
  std::function<void(std::size_t block, const QbFactor&)> on_block;
  MemoryLedger* ledger = nullptr;
};

/// Phase timings and memory accounting of one driver run.
struct RunStats {
  MemoryLedger memory;
  PassTiming timing;
  double factor_seconds = 0.0;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

namespace detail {

struct BlockQr {
  DenseMatrix q;
  DenseMatrix r;
  std::vector<char> replaced;
};

// Column-wise Gram-Schmidt (two passes) that defers dependent columns: they
// are filled at the end with random unit vectors orthogonal to the first
// `prior_cols` columns of `prior` and to every accepted column, and get a
// zero row in R.
inline BlockQr gram_schmidt_replacing(const DenseMatrix& y, double tol, const DenseMatrix* prior,
                                      std::size_t prior_cols, std::uint64_t seed) {
  const std::size_t m = y.rows();
  const std::size_t b = y.cols();
  BlockQr out{DenseMatrix(m, b), DenseMatrix(b, b), std::vector<char>(b, 0)};
  std::vector<double> v(m);

  auto project_out = [&](std::vector<double>& x, std::size_t upto, bool record, std::size_t col) {
    for (std::size_t d = 0; d < upto; ++d) {
      if (out.replaced[d]) continue;
      double c = 0.0;
      for (std::size_t i = 0; i < m; ++i) c += out.q(i, d) * x[i];
      for (std::size_t i = 0; i < m; ++i) x[i] -= c * out.q(i, d);
      if (record) out.r(d, col) += c;
    }
  };
  auto norm = [&](const std::vector<double>& x) {
    double acc = 0.0;
    for (double e : x) acc += e * e;
    return std::sqrt(acc);
  };

  for (std::size_t c = 0; c < b; ++c) {
    for (std::size_t i = 0; i < m; ++i) v[i] = y(i, c);
    project_out(v, c, true, c);
    project_out(v, c, true, c);
    const double nv = norm(v);
    if (!(nv > tol)) {
      out.replaced[c] = 1;
      for (std::size_t d = 0; d < c; ++d) out.r(d, c) = 0.0;
      continue;
    }
    out.r(c, c) = nv;
    for (std::size_t i = 0; i < m; ++i) out.q(i, c) = v[i] / nv;
  }

  for (std::size_t c = 0; c < b; ++c) {
    if (!out.replaced[c]) continue;
    for (std::uint64_t attempt = 0;; ++attempt) {
      const std::uint64_t s = derive_seed(seed, (static_cast<std::uint64_t>(c) << 16) + attempt);
      for (std::size_t i = 0; i < m; ++i) v[i] = standard_normal(s, i);
      for (int pass = 0; pass < 2; ++pass) {
        if (prior != nullptr) {
          for (std::size_t d = 0; d < prior_cols; ++d) {
            double dot = 0.0;
            for (std::size_t i = 0; i < m; ++i) dot += (*prior)(i, d) * v[i];
            for (std::size_t i = 0; i < m; ++i) v[i] -= dot * (*prior)(i, d);
          }
        }
        for (std::size_t d = 0; d < b; ++d) {
          if (d == c || (out.replaced[d] && d > c)) continue;
          double dot = 0.0;
          for (std::size_t i = 0; i < m; ++i) dot += out.q(i, d) * v[i];
          for (std::size_t i = 0; i < m; ++i) v[i] -= dot * out.q(i, d);
        }
      }
      const double nv = norm(v);
      if (nv > 0.1) {
        for (std::size_t i = 0; i < m; ++i) out.q(i, c) = v[i] / nv;
        break;
      }
      if (attempt > 8) throw RankDeficiencyError(c, "could not find a replacement direction");
    }
  }
  return out;
}

// QR of one sample block. `scale` sets the dependence threshold
// (kRankTolerance * scale on |r_jj|).
inline BlockQr qr_block(DenseMatrix y, double scale, bool replace, std::uint64_t seed, const DenseMatrix* prior,
                        std::size_t prior_cols) {
  const double tol = kRankTolerance * scale;
  const DenseMatrix keep = replace ? y : DenseMatrix();
  QrPair f = householder_qr(std::move(y));
  std::size_t bad = f.r.rows();
  for (std::size_t j = 0; j < f.r.rows(); ++j) {
    if (!(f.r(j, j) > tol)) {
      bad = j;
      break;
    }
  }
  if (bad == f.r.rows()) return BlockQr{std::move(f.q), std::move(f.r), std::vector<char>(f.r.rows(), 0)};
  if (!replace) {
    throw RankDeficiencyError(bad, "sample column " + std::to_string(bad) + " is numerically dependent");
  }
  return gram_schmidt_replacing(keep, tol, prior, prior_cols, seed);
}

// First `w` columns of a row-major buffer viewed as a matrix.
inline std::span<const double> leading(const DenseMatrix& a, std::size_t r, std::size_t w) {
  return a.row(r).subspan(0, w);
}

inline void apply_sign_convention(TruncatedSvd& t) {
  for (std::size_t j = 0; j < t.v.cols(); ++j) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < t.v.rows(); ++i) {
      if (std::abs(t.v(i, j)) > best) {
        best = std::abs(t.v(i, j));
        arg = i;
      }
    }
    if (t.v.rows() == 0 || t.v(arg, j) >= 0.0) continue;
    for (std::size_t i = 0; i < t.v.rows(); ++i) t.v(i, j) = -t.v(i, j);
    for (std::size_t i = 0; i < t.u.rows(); ++i) t.u(i, j) = -t.u(i, j);
  }
}

// Truncated SVD from Q (m x w) and B^T (n x w). With B^T = Ub S Vb^T we have
// B = Vb S Ub^T, so U = Q Vb and V = Ub.
inline TruncatedSvd svd_from_qb(QbFactor&& qb, std::size_t k, MemoryLedger* ledger) {
  const std::size_t m = qb.q.rows();
  const std::size_t n = qb.bt.rows();
  const std::size_t w = qb.width();
  if (ledger) {
    ledger->acquire("svd.q", n * w);
    ledger->note_workspace(5 * w * w);
  }
  SvdTriple t = dense_svd_tall(std::move(qb.bt));
  if (ledger) ledger->release("h");

  TruncatedSvd out;
  out.s.assign(t.s.begin(), t.s.begin() + static_cast<std::ptrdiff_t>(k));
  out.u = DenseMatrix(m, k);
  parallel_for(0, m, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto qi = qb.q.row(i);
      auto ui = out.u.row(i);
      for (std::size_t p = 0; p < w; ++p) {
        const double f = qi[p];
        if (f == 0.0) continue;
        const auto vp = t.v.row(p);
        for (std::size_t c = 0; c < k; ++c) ui[c] += f * vp[c];
      }
    }
  });
  qb.q.release();
  if (ledger) ledger->release("g");
  out.v = column_block(t.u, 0, k);
  if (ledger) ledger->release("svd.q");
  apply_sign_convention(out);
  return out;
}

}  // namespace detail

/// Blocked QB from the one-pass sketch G = A Omega, H = A^T G, without
/// touching A. For block i (width b) with current Q, B:
///
///   Y_i       = G_i - Q (B Omega_i)
///   Q_i R_i   = qr(Y_i)
///   Q_i R~_i  = qr(Q_i - Q (Q^T Q_i)),   R_i <- R~_i R_i
///   B_i       = R_i^{-T} (H_i^T - Y_i^T Q B - Omega_i^T B^T B)
///
/// On the first block Q and B are empty and the correction terms vanish. Q is
/// written into G's storage and B^T into H's storage, block by block, so the
/// factorization needs no memory beyond the sketch and O((m + n) b) scratch.
///
/// Throws ConfigError if l is not a multiple of b, and BlockDeficiencyError if
/// a Y_i is numerically rank deficient (|r_jj| < 1e-12 times the largest
/// column norm of G_i) unless replacement is enabled.
inline QbFactor blocked_qb(DenseMatrix g, DenseMatrix h, const DenseMatrix& omega, std::size_t block,
                           const QbOptions& opts = {}) {
  const std::size_t m = g.rows();
  const std::size_t n = h.rows();
  const std::size_t l = g.cols();
  if (block == 0 || l == 0 || l % block != 0) {
    throw ConfigError("blocked_qb: sketch width " + std::to_string(l) + " is not a positive multiple of block size " +
                      std::to_string(block));
  }
  if (h.cols() != l || omega.rows() != n || omega.cols() != l) throw DimensionError("blocked_qb: sketch shapes differ");
  if (m < l || n < l) throw DimensionError("blocked_qb: sketch width exceeds matrix dimensions");
  const std::size_t b = block;
  const std::size_t t = l / b;
  std::vector<char> replaced(l, 0);
  if (opts.ledger) opts.ledger->note_workspace(3 * m * b + 2 * l * b + b * b + n * b);

  for (std::size_t i = 0; i < t; ++i) {
    const std::size_t w = i * b;   // width of Q and B so far
    const std::size_t c0 = w;      // first column of this block

    // W1 = B Omega_i (w x b); B^T lives in h(:, 0:w).
    DenseMatrix w1(w, b);
    for (std::size_t j = 0; j < n; ++j) {
      const auto bj = detail::leading(h, j, w);
      const auto oj = omega.row(j).subspan(c0, b);
      for (std::size_t p = 0; p < w; ++p) {
        const double f = bj[p];
        if (f == 0.0) continue;
        auto wp = w1.row(p);
        for (std::size_t c = 0; c < b; ++c) wp[c] += f * oj[c];
      }
    }

    // Y_i = G_i - Q W1, and the scale of the undeflated sample G_i.
    DenseMatrix y(m, b);
    std::vector<double> gnorm2(b, 0.0);
    parallel_for(0, m, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t r = lo; r < hi; ++r) {
        const auto gr = g.row(r);
        const auto qr = detail::leading(g, r, w);
        auto yr = y.row(r);
        for (std::size_t c = 0; c < b; ++c) yr[c] = gr[c0 + c];
        for (std::size_t p = 0; p < w; ++p) {
          const double f = qr[p];
          if (f == 0.0) continue;
          const auto wp = w1.row(p);
          for (std::size_t c = 0; c < b; ++c) yr[c] -= f * wp[c];
        }
      }
    });
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < b; ++c) gnorm2[c] += g(r, c0 + c) * g(r, c0 + c);
    const double scale = std::sqrt(*std::max_element(gnorm2.begin(), gnorm2.end()));

    // Q^T Y_i (w x b), used by the re-orthogonalized B_i formula.
    DenseMatrix qty(w, b);
    if (w > 0 && opts.reorthogonalize) {
      for (std::size_t r = 0; r < m; ++r) {
        const auto qr = detail::leading(g, r, w);
        const auto yr = y.row(r);
        for (std::size_t p = 0; p < w; ++p) {
          const double f = qr[p];
          if (f == 0.0) continue;
          auto out = qty.row(p);
          for (std::size_t c = 0; c < b; ++c) out[c] += f * yr[c];
        }
      }
    }

    detail::BlockQr f;
    try {
      // The Q columns of earlier blocks are the leading w columns of g.
      const DenseMatrix prior = opts.replace_deficient && w > 0 ? column_block(g, 0, w) : DenseMatrix();
      f = detail::qr_block(y, scale, opts.replace_deficient, derive_seed(opts.replacement_seed, i), &prior, w);
    } catch (const RankDeficiencyError& e) {
      throw BlockDeficiencyError(i, e.column(),
                                 "blocked_qb: block " + std::to_string(i) + ", column " + std::to_string(e.column()) +
                                     ": residual sample is numerically rank deficient"
                                     " (the matrix may have rank below the sketch width; enable replace_deficient"
                                     " to continue with random directions)");
    }

    if (opts.reorthogonalize && w > 0) {
      // P = Q_i - Q (Q^T Q_i); [Q_i, R~] = qr(P); R_i <- R~ R_i.
      DenseMatrix qtqi(w, b);
      for (std::size_t r = 0; r < m; ++r) {
        const auto qr = detail::leading(g, r, w);
        const auto qir = f.q.row(r);
        for (std::size_t p = 0; p < w; ++p) {
          const double v = qr[p];
          if (v == 0.0) continue;
          auto out = qtqi.row(p);
          for (std::size_t c = 0; c < b; ++c) out[c] += v * qir[c];
        }
      }
      DenseMatrix proj = f.q;
      for (std::size_t r = 0; r < m; ++r) {
        const auto qr = detail::leading(g, r, w);
        auto pr = proj.row(r);
        for (std::size_t p = 0; p < w; ++p) {
          const double v = qr[p];
          if (v == 0.0) continue;
          const auto cp = qtqi.row(p);
          for (std::size_t c = 0; c < b; ++c) pr[c] -= v * cp[c];
        }
      }
      QrPair second = householder_qr(std::move(proj));
      f.q = std::move(second.q);
      f.r = multiply(second.r, f.r);
    }

    // Z^T = H_i - B^T (Q^T Y_i + B Omega_i), then B_i^T = Z^T R_i^{-1}, row by
    // row in place of H_i.
    DenseMatrix wsum = w1;
    if (opts.reorthogonalize && w > 0) {
      auto ws = wsum.data();
      const auto qd = qty.data();
      for (std::size_t e = 0; e < ws.size(); ++e) ws[e] += qd[e];
    }
    parallel_for(0, n, [&](std::size_t lo, std::size_t hi) {
      std::vector<double> z(b);
      for (std::size_t j = lo; j < hi; ++j) {
        auto hj = h.row(j);
        for (std::size_t c = 0; c < b; ++c) z[c] = hj[c0 + c];
        for (std::size_t p = 0; p < w; ++p) {
          const double f0 = hj[p];
          if (f0 == 0.0) continue;
          const auto wp = wsum.row(p);
          for (std::size_t c = 0; c < b; ++c) z[c] -= f0 * wp[c];
        }
        detail::forward_subst_row(f.r, z, &f.replaced);
        for (std::size_t c = 0; c < b; ++c) hj[c0 + c] = z[c];
      }
    });

    for (std::size_t r = 0; r < m; ++r) {
      const auto qir = f.q.row(r);
      auto gr = g.row(r);
      for (std::size_t c = 0; c < b; ++c) gr[c0 + c] = qir[c];
    }
    for (std::size_t c = 0; c < b; ++c) replaced[c0 + c] = f.replaced[c];

    if (opts.on_block) {
      QbFactor snap{column_block(g, 0, w + b), column_block(h, 0, w + b),
                    std::vector<char>(replaced.begin(), replaced.begin() + static_cast<std::ptrdiff_t>(w + b))};
      opts.on_block(i, snap);
    }
  }
  return QbFactor{std::move(g), std::move(h), std::move(replaced)};
}

// ---------------------------------------------------------------------------
// Drivers

namespace detail {

inline QbOptions qb_options(const PcaConfig& cfg, MemoryLedger* ledger) {
  QbOptions o;
  o.reorthogonalize = cfg.reorthogonalize;
  o.replace_deficient = cfg.replace_deficient;
  o.replacement_seed = derive_seed(cfg.seed, 0x51);
  o.ledger = ledger;
  return o;
}

inline void check_known_shape(const RowStream& stream, const PcaConfig& cfg) {
  cfg.validate();
  if (auto m = stream.rows()) {
    if (*m == 0) throw EmptyStreamError("stream has no rows");
    cfg.validate_for(*m, stream.cols());
  } else if (cfg.width() > stream.cols()) {
    cfg.validate_for(cfg.width(), stream.cols());
  }
}

inline DenseMatrix orth(DenseMatrix y, const PcaConfig& cfg, std::uint64_t tag) {
  const double scale = max_column_norm(y);
  return qr_block(std::move(y), scale, cfg.replace_deficient, derive_seed(cfg.seed, tag), nullptr, 0).q;
}

}  // namespace detail

/// Single-pass randomized PCA of a row stream (P = 0), or the two-pass power
/// refinement when cfg.power == 1. With P = 0 the stream is read exactly once
/// and need not be resettable. Passing `stats` records timings and memory.
inline TruncatedSvd single_pass_pca(RowStream& stream, const PcaConfig& cfg, RunStats* stats = nullptr) {
  detail::check_known_shape(stream, cfg);
  if (cfg.power == 1 && !stream.resettable()) {
    throw CapabilityError("power refinement needs a resettable stream (two passes)");
  }
  RunStats local;
  RunStats& st = stats ? *stats : local;
  MemoryLedger* ledger = &st.memory;
  const std::size_t n = stream.cols();
  const std::size_t l = cfg.width();

  SketchOptions sketch_opts = cfg.sketch;
  if (cfg.center) sketch_opts.shift_by_first_row = true;

  DenseMatrix omega = gaussian_matrix(n, l, cfg.seed);
  ledger->acquire("omega", omega.size());
  SketchState state = sketch_pass(stream, omega, sketch_opts, &st.timing);
  if (state.rows_seen == 0) throw EmptyStreamError("single_pass_pca: stream yielded no rows");
  const std::size_t m = state.rows_seen;
  st.rows = m;
  st.cols = n;
  ledger->acquire("g", state.g.size());
  ledger->acquire("h", state.h.size());
  ledger->acquire("col_sums", state.col_sums.size());
  ledger->acquire("shift", state.shift.size());
  cfg.validate_for(m, n);

  const auto t0 = detail::Clock::now();
  if (cfg.center) center_correct_in_place(state, omega);
  ledger->release("shift");

  if (cfg.power == 1) {
    // Omega' = orth(H), then sketch the stream again with it.
    state.g.release();
    ledger->release("g");
    omega.release();
    ledger->release("omega");
    omega = detail::orth(std::move(state.h), cfg, 0x7031);
    ledger->acquire("omega", omega.size());
    ledger->release("h");
    stream.reset();
    st.factor_seconds += detail::seconds_since(t0);
    state = sketch_pass(stream, omega, sketch_opts, &st.timing);
    if (state.rows_seen != m) throw StreamFormatError("second pass saw a different number of rows");
    ledger->acquire("g", state.g.size());
    ledger->acquire("h", state.h.size());
    ledger->acquire("shift", state.shift.size());
    if (cfg.center) center_correct_in_place(state, omega);
    ledger->release("shift");
  }

  std::vector<double>().swap(state.col_sums);
  ledger->release("col_sums");

  const auto t1 = detail::Clock::now();
  QbFactor qb = blocked_qb(std::move(state.g), std::move(state.h), omega, cfg.block, detail::qb_options(cfg, ledger));
  omega.release();
  ledger->release("omega");
  TruncatedSvd out = detail::svd_from_qb(std::move(qb), cfg.k, ledger);
  st.factor_seconds += detail::seconds_since(t1);
  return out;
}

/// Power-scheme refinement (P = 1): two passes over a resettable stream.
inline TruncatedSvd power_refine(RowStream& stream, PcaConfig cfg, RunStats* stats = nullptr) {
  cfg.power = 1;
  return single_pass_pca(stream, cfg, stats);
}

/// Basic two-pass randomized SVD: Q = orth(A Omega) in pass one, B = Q^T A in
/// pass two, then the SVD of B.
inline TruncatedSvd basic_rand_svd(RowStream& stream, const PcaConfig& cfg, RunStats* stats = nullptr) {
  if (!stream.resettable()) throw CapabilityError("basic_rand_svd needs a resettable stream (two passes)");
  detail::check_known_shape(stream, cfg);
  if (cfg.power != 0) throw ConfigError("basic_rand_svd does not take a power parameter");
  RunStats local;
  RunStats& st = stats ? *stats : local;
  const std::size_t n = stream.cols();
  const std::size_t l = cfg.width();

  const DenseMatrix omega = gaussian_matrix(n, l, cfg.seed);
  st.memory.acquire("omega", omega.size());
  DenseMatrix g(0, l);
  if (auto m = stream.rows()) g.reserve_rows(*m);
  detail::ColumnSums sums(n, cfg.sketch.compensated_col_sums);
  std::size_t m = 0;
  for (;;) {
    auto t0 = detail::Clock::now();
    auto block = stream.next();
    st.timing.read_seconds += detail::seconds_since(t0);
    if (!block) break;
    t0 = detail::Clock::now();
    detail::check_block(*block, m, n);
    g.append_rows(multiply(block->values, omega).data());
    sums.add(block->values);
    m += block->values.rows();
    st.timing.compute_seconds += detail::seconds_since(t0);
  }
  if (m == 0) throw EmptyStreamError("basic_rand_svd: stream yielded no rows");
  cfg.validate_for(m, n);
  st.rows = m;
  st.cols = n;
  st.memory.acquire("g", g.size());
  const std::vector<double> col_sums = sums.take();

  auto tf = detail::Clock::now();
  std::vector<double> mu(n, 0.0);
  if (cfg.center) {
    for (std::size_t j = 0; j < n; ++j) mu[j] = col_sums[j] / static_cast<double>(m);
    std::vector<double> t(l, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < l; ++c) t[c] += mu[j] * omega(j, c);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < l; ++c) g(r, c) -= t[c];
  }
  DenseMatrix q = detail::orth(std::move(g), cfg, 0xB1);
  st.factor_seconds += detail::seconds_since(tf);

  // Pass two: B^T = A^T Q.
  stream.reset();
  DenseMatrix bt(n, l);
  st.memory.acquire("h", bt.size());
  std::size_t seen = 0;
  for (;;) {
    auto t0 = detail::Clock::now();
    auto block = stream.next();
    st.timing.read_seconds += detail::seconds_since(t0);
    if (!block) break;
    t0 = detail::Clock::now();
    detail::check_block(*block, seen, n);
    const std::size_t rows = block->values.rows();
    if (seen + rows > m) throw StreamFormatError("second pass saw more rows than the first");
    detail::accumulate_at_y(bt, block->values, row_block(q, seen, rows));
    seen += rows;
    st.timing.compute_seconds += detail::seconds_since(t0);
  }
  if (seen != m) throw StreamFormatError("second pass saw a different number of rows");

  tf = detail::Clock::now();
  if (cfg.center) {
    // B_c^T = B^T - mu (1^T Q).
    std::vector<double> qsum(l, 0.0);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < l; ++c) qsum[c] += q(r, c);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < l; ++c) bt(j, c) -= mu[j] * qsum[c];
  }
  TruncatedSvd out = detail::svd_from_qb(QbFactor{std::move(q), std::move(bt), {}}, cfg.k, &st.memory);
  st.factor_seconds += detail::seconds_since(tf);
  return out;
}

/// Diagnostics of the small linear solve in legacy_single_pass.
struct LegacyDiagnostics {
  double condition = 0.0;     ///< 2-norm condition number of Omega~^T Q
  double solve_residual = 0.0;  ///< ||Omega~^T Q B - Y~^T Q~||_F / ||Y~^T Q~||_F
};

inline constexpr double kLegacyConditionLimit = 1e12;

/// One-pass baseline: Y = A Omega and Y~ = A^T Omega~ in a single pass,
/// Q = orth(Y), Q~ = orth(Y~), B solves Omega~^T Q B = Y~^T Q~ in the least
/// squares sense, and U = Q U_B, V = Q~ V_B. Both random matrices have l
/// columns. Omega~ (m x l) is regenerated row by row from its seed.
inline TruncatedSvd legacy_single_pass(RowStream& stream, const PcaConfig& cfg, LegacyDiagnostics* diag = nullptr,
                                       RunStats* stats = nullptr) {
  detail::check_known_shape(stream, cfg);
  if (cfg.power != 0) throw ConfigError("legacy_single_pass does not take a power parameter");
  RunStats local;
  RunStats& st = stats ? *stats : local;
  const std::size_t n = stream.cols();
  const std::size_t l = cfg.width();
  const std::uint64_t seed_left = derive_seed(cfg.seed, 0x1E6A);

  const DenseMatrix omega = gaussian_matrix(n, l, cfg.seed);
  st.memory.acquire("omega", omega.size());
  DenseMatrix y(0, l);
  if (auto m = stream.rows()) y.reserve_rows(*m);
  DenseMatrix yt(n, l);
  st.memory.acquire("h", yt.size());
  std::vector<double> omega_left_sum(l, 0.0);
  detail::ColumnSums sums(n, cfg.sketch.compensated_col_sums);
  std::size_t m = 0;
  for (;;) {
    auto t0 = detail::Clock::now();
    auto block = stream.next();
    st.timing.read_seconds += detail::seconds_since(t0);
    if (!block) break;
    t0 = detail::Clock::now();
    detail::check_block(*block, m, n);
    const std::size_t rows = block->values.rows();
    y.append_rows(multiply(block->values, omega).data());
    DenseMatrix left(rows, l);
    for (std::size_t r = 0; r < rows; ++r) {
      gaussian_row(seed_left, m + r, left.row(r));
      for (std::size_t c = 0; c < l; ++c) omega_left_sum[c] += left(r, c);
    }
    detail::accumulate_at_y(yt, block->values, left);
    sums.add(block->values);
    m += rows;
    st.timing.compute_seconds += detail::seconds_since(t0);
  }
  if (m == 0) throw EmptyStreamError("legacy_single_pass: stream yielded no rows");
  cfg.validate_for(m, n);
  st.rows = m;
  st.cols = n;
  st.memory.acquire("g", y.size());
  const auto tf = detail::Clock::now();

  if (cfg.center) {
    const std::vector<double> col_sums = sums.take();
    std::vector<double> mu(n), t(l, 0.0);
    for (std::size_t j = 0; j < n; ++j) mu[j] = col_sums[j] / static_cast<double>(m);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < l; ++c) t[c] += mu[j] * omega(j, c);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < l; ++c) y(r, c) -= t[c];
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < l; ++c) yt(j, c) -= mu[j] * omega_left_sum[c];
  }

  DenseMatrix q = detail::orth(std::move(y), cfg, 0x1E61);
  DenseMatrix qt = detail::orth(yt, cfg, 0x1E62);

  // M = Omega~^T Q (l x l), regenerating Omega~ one row at a time.
  DenseMatrix mat(l, l);
  std::vector<double> wrow(l);
  for (std::size_t r = 0; r < m; ++r) {
    gaussian_row(seed_left, r, wrow);
    const auto qr = q.row(r);
    for (std::size_t p = 0; p < l; ++p) {
      auto mp = mat.row(p);
      for (std::size_t c = 0; c < l; ++c) mp[c] += wrow[p] * qr[c];
    }
  }
  const DenseMatrix rhs = multiply_at_b(yt, qt);  // Y~^T Q~

  const SvdTriple msvd = dense_svd(mat);
  const double cond = msvd.s.back() > 0.0 ? msvd.s.front() / msvd.s.back() : std::numeric_limits<double>::infinity();
  const QrPair mqr = householder_qr(mat);
  const DenseMatrix bsmall = solve_r(mqr.r, multiply_at_b(mqr.q, rhs));
  const double residual = frobenius_norm(subtract(multiply(mat, bsmall), rhs)) / frobenius_norm(rhs);
  if (diag) {
    diag->condition = cond;
    diag->solve_residual = residual;
  }

  const SvdTriple bs = dense_svd(bsmall);
  TruncatedSvd out;
  out.s.assign(bs.s.begin(), bs.s.begin() + static_cast<std::ptrdiff_t>(cfg.k));
  out.u = multiply(q, column_block(bs.u, 0, cfg.k));
  out.v = multiply(qt, column_block(bs.v, 0, cfg.k));
  if (cond > kLegacyConditionLimit) {
    out.warnings.push_back("Omega~^T Q is ill-conditioned (condition estimate " + std::to_string(cond) +
                           "); B may be inaccurate");
  }
  detail::apply_sign_convention(out);
  st.factor_seconds += detail::seconds_since(tf);
  return out;
}

/// Right singular vectors in order; component 1 is v_1.
inline std::vector<std::vector<double>> principal_components(const TruncatedSvd& svd) {
  std::vector<std::vector<double>> out(svd.v.cols(), std::vector<double>(svd.v.rows()));
  for (std::size_t j = 0; j < svd.v.cols(); ++j)
    for (std::size_t i = 0; i < svd.v.rows(); ++i) out[j][i] = svd.v(i, j);
  return out;
}

/// Expected-error magnification of rank-k randomized QB with oversampling s:
/// sqrt(1 + k / (s - 1)).
inline double error_bound_factor(std::size_t k, std::size_t s) {
  if (s < 2) throw DomainError("error_bound_factor: oversampling must be at least 2, got " + std::to_string(s));
  return std::sqrt(1.0 + static_cast<double>(k) / static_cast<double>(s - 1));
}

}  // namespace sppca
