#pragma once

// Ground-truth test matrices A = U diag(sigma) V^T with prescribed singular
// spectra, a resettable row stream that regenerates them on the fly, and an
// exact SVD oracle for desk-scale comparisons.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sppca/dense_matrix.hpp"
#include "sppca/error.hpp"
#include "sppca/matcore.hpp"
#include "sppca/random.hpp"
#include "sppca/rqb.hpp"
#include "sppca/sketch.hpp"

namespace sppca {

/// Singular value profiles sigma_i, i = 1, 2, ...
///   type1: 10^(-4(i-1)/19) for i <= 20, then 1e-4 / (i-20)^(1/10)
///   type2: i^-2      type3: i^-3
///   type4: e^(-i/7)  type5: 10^(-i/10)
///   custom: an explicit list
struct SpectrumSpec {
  enum class Kind { type1, type2, type3, type4, type5, custom };
  Kind kind = Kind::type1;
  std::vector<double> values;  ///< custom only

  static SpectrumSpec type(int t) {
    if (t < 1 || t > 5) throw DomainError("spectrum type must be 1..5, got " + std::to_string(t));
    return SpectrumSpec{static_cast<Kind>(t - 1), {}};
  }
  static SpectrumSpec custom(std::vector<double> v) { return SpectrumSpec{Kind::custom, std::move(v)}; }

  /// "type1".."type5" (or "1".."5"), or "custom:3,2,1".
  static SpectrumSpec parse(const std::string& text) {
    if (text.rfind("custom:", 0) == 0) {
      std::vector<double> v;
      std::stringstream ss(text.substr(7));
      std::string item;
      while (std::getline(ss, item, ',')) {
        try {
          v.push_back(std::stod(item));
        } catch (...) {
          throw ConfigError("bad custom spectrum entry '" + item + "'");
        }
      }
      if (v.empty()) throw ConfigError("custom spectrum is empty");
      return custom(std::move(v));
    }
    std::string t = text;
    if (t.rfind("type", 0) == 0) t = t.substr(4);
    if (t.size() == 1 && t[0] >= '1' && t[0] <= '5') return type(t[0] - '0');
    throw ConfigError("unknown spectrum '" + text + "' (expected type1..type5 or custom:v1,v2,...)");
  }

  std::string name() const {
    if (kind == Kind::custom) return "custom";
    return "type" + std::to_string(static_cast<int>(kind) + 1);
  }
};

inline double spectrum_value(const SpectrumSpec& spec, std::size_t i) {
  if (i < 1) throw DomainError("spectrum_value: index must be >= 1");
  const double x = static_cast<double>(i);
  switch (spec.kind) {
    case SpectrumSpec::Kind::type1:
      if (i <= 20) return std::pow(10.0, -4.0 * (x - 1.0) / 19.0);
      return 1e-4 / std::pow(x - 20.0, 0.1);
    case SpectrumSpec::Kind::type2:
      return 1.0 / (x * x);
    case SpectrumSpec::Kind::type3:
      return 1.0 / (x * x * x);
    case SpectrumSpec::Kind::type4:
      return std::exp(-x / 7.0);
    case SpectrumSpec::Kind::type5:
      return std::pow(10.0, -x / 10.0);
    case SpectrumSpec::Kind::custom:
      if (i > spec.values.size()) {
        throw DomainError("spectrum_value: custom spectrum has only " + std::to_string(spec.values.size()) +
                          " values");
      }
      return spec.values[i - 1];
  }
  return 0.0;
}

/// The first `count` values; a custom spectrum shorter than `count` is padded
/// with zeros.
inline std::vector<double> spectrum_values(const SpectrumSpec& spec, std::size_t count) {
  std::vector<double> out(count, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    if (spec.kind == SpectrumSpec::Kind::custom && i >= spec.values.size()) break;
    out[i] = spectrum_value(spec, i + 1);
  }
  return out;
}

struct SyntheticMatrix {
  DenseMatrix a;                ///< m x n
  std::vector<double> true_s;   ///< min(m, n) values
  DenseMatrix true_u;           ///< m x min(m, n)
  DenseMatrix true_v;           ///< n x min(m, n)
};

/// Row generator for A = U diag(sigma) V^T.
///
/// V is the Q factor of an n x r Gaussian matrix (r = min(m, n)). U is the
/// orthonormal factor of an m x r Gaussian matrix G_u, written as G_u R^{-1}
/// where R is the triangular QR factor of G_u. Row i of U is therefore the
/// forward-substitution solution of R^T u_i^T = g_i^T, and g_i is
/// regenerated from the counter-based RNG, so only R (r x r) and
/// diag(sigma) V^T (r x n) are kept.
class SyntheticGenerator {
 public:
  SyntheticGenerator(SpectrumSpec spec, std::size_t m, std::size_t n, std::uint64_t seed)
      : m_(m), n_(n), r_(std::min(m, n)), seed_u_(derive_seed(seed, 0x55)), seed_v_(derive_seed(seed, 0x56)) {
    if (m == 0 || n == 0) throw DimensionError("synthetic matrix dimensions must be positive");
    sigma_ = spectrum_values(spec, r_);
    // R of the Gaussian G_u; the m x r scratch is dropped after construction.
    ru_ = householder_qr(gaussian_matrix(m_, r_, seed_u_)).r;
    v_ = householder_qr(gaussian_matrix(n_, r_, seed_v_)).q;
    svt_ = DenseMatrix(r_, n_);
    for (std::size_t k = 0; k < r_; ++k)
      for (std::size_t j = 0; j < n_; ++j) svt_(k, j) = sigma_[k] * v_(j, k);
  }

  std::size_t rows() const noexcept { return m_; }
  std::size_t cols() const noexcept { return n_; }
  const std::vector<double>& sigma() const noexcept { return sigma_; }
  const DenseMatrix& v() const noexcept { return v_; }

  /// Row i of U.
  void u_row(std::size_t i, std::span<double> out) const {
    gaussian_row(seed_u_, i, out);
    detail::forward_subst_row(ru_, out);
  }

  /// Row i of A.
  void a_row(std::size_t i, std::span<double> out, std::vector<double>& scratch) const {
    scratch.resize(r_);
    u_row(i, scratch);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < r_; ++k) {
      const double f = scratch[k];
      if (f == 0.0) continue;
      const auto sk = svt_.row(k);
      for (std::size_t j = 0; j < n_; ++j) out[j] += f * sk[j];
    }
  }

  /// Rows [first, first + count) of A.
  DenseMatrix a_rows(std::size_t first, std::size_t count) const {
    DenseMatrix out(count, n_);
    parallel_for(0, count, [&](std::size_t lo, std::size_t hi) {
      std::vector<double> scratch;
      for (std::size_t i = lo; i < hi; ++i) a_row(first + i, out.row(i), scratch);
    }, 4);
    return out;
  }

 private:
  std::size_t m_, n_, r_;
  std::uint64_t seed_u_, seed_v_;
  std::vector<double> sigma_;
  DenseMatrix ru_;
  DenseMatrix v_;
  DenseMatrix svt_;
};

inline SyntheticMatrix synth_matrix(const SpectrumSpec& spec, std::size_t m, std::size_t n, std::uint64_t seed) {
  const SyntheticGenerator gen(spec, m, n, seed);
  const std::size_t r = std::min(m, n);
  SyntheticMatrix out{gen.a_rows(0, m), gen.sigma(), DenseMatrix(m, r), gen.v()};
  for (std::size_t i = 0; i < m; ++i) gen.u_row(i, out.true_u.row(i));
  return out;
}

/// Resettable stream producing exactly the rows synth_matrix would.
class SynthRowStream final : public RowStream {
 public:
  SynthRowStream(std::shared_ptr<const SyntheticGenerator> gen, std::size_t block_rows)
      : gen_(std::move(gen)), block_rows_(block_rows) {
    if (block_rows_ == 0) throw DimensionError("SynthRowStream: block_rows must be positive");
  }

  std::size_t cols() const override { return gen_->cols(); }
  std::optional<std::size_t> rows() const override { return gen_->rows(); }
  bool resettable() const override { return true; }
  void reset() override { pos_ = 0; }

  std::optional<RowBlock> next() override {
    if (pos_ >= gen_->rows()) return std::nullopt;
    const std::size_t count = std::min(block_rows_, gen_->rows() - pos_);
    RowBlock block{pos_, gen_->a_rows(pos_, count)};
    pos_ += count;
    return block;
  }

  const SyntheticGenerator& generator() const noexcept { return *gen_; }

 private:
  std::shared_ptr<const SyntheticGenerator> gen_;
  std::size_t block_rows_;
  std::size_t pos_ = 0;
};

inline std::unique_ptr<SynthRowStream> synth_stream(const SpectrumSpec& spec, std::size_t m, std::size_t n,
                                                    std::uint64_t seed, std::size_t block_rows) {
  return std::make_unique<SynthRowStream>(std::make_shared<const SyntheticGenerator>(spec, m, n, seed), block_rows);
}

// ---------------------------------------------------------------------------

inline constexpr std::size_t kExactSvdMaxEntries = 10'000'000;

/// First k singular triples from a full-accuracy SVD (Eigen's divide and
/// conquer). Deliberately limited to m * n <= 1e7.
inline TruncatedSvd exact_truncated_svd(const DenseMatrix& a, std::size_t k) {
  if (a.rows() * a.cols() > kExactSvdMaxEntries) {
    throw ScaleError("exact_truncated_svd: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " exceeds the desk-scale oracle limit of 1e7 entries");
  }
  if (k == 0 || k > std::min(a.rows(), a.cols())) throw DimensionError("exact_truncated_svd: invalid k");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> view(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                                        static_cast<Eigen::Index>(a.cols()));
  const Eigen::MatrixXd dense = view;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(dense, Eigen::ComputeThinU | Eigen::ComputeThinV);
  TruncatedSvd out;
  out.s.resize(k);
  out.u = DenseMatrix(a.rows(), k);
  out.v = DenseMatrix(a.cols(), k);
  for (std::size_t j = 0; j < k; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    out.s[j] = svd.singularValues()(jj);
    for (std::size_t i = 0; i < a.rows(); ++i) out.u(i, j) = svd.matrixU()(static_cast<Eigen::Index>(i), jj);
    for (std::size_t i = 0; i < a.cols(); ++i) out.v(i, j) = svd.matrixV()(static_cast<Eigen::Index>(i), jj);
  }
  detail::apply_sign_convention(out);
  return out;
}

}  // namespace sppca
