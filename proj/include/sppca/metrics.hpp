#pragma once

// Accuracy metrics of a truncated SVD against a reference one.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sppca/dense_matrix.hpp"
#include "sppca/error.hpp"
#include "sppca/matcore.hpp"
#include "sppca/rqb.hpp"

namespace sppca {

struct MetricsReport {
  double max_singval_abs_err = 0.0;
  std::vector<double> per_component_correlation;
  std::optional<double> frobenius_residual_rel;  ///< ||A - U S V^T||_F / ||A||_F
  std::map<std::string, double> wall_times;
  std::size_t passes = 0;
  std::size_t retained_floats = 0;
};

namespace detail {

// Pearson correlation of x and y, with y's sign flipped first when x . y < 0.
inline double aligned_correlation(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot += x[i] * y[i];
  const double sign = dot < 0.0 ? -1.0 : 1.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += sign * y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = sign * y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return sxx == syy ? 1.0 : 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline std::vector<double> column(const DenseMatrix& a, std::size_t j) {
  std::vector<double> out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = a(i, j);
  return out;
}

}  // namespace detail

inline double residual_frobenius_rel(const DenseMatrix& a, const TruncatedSvd& t) {
  if (t.u.rows() != a.rows() || t.v.rows() != a.cols()) throw DimensionError("residual: factor shape mismatch");
  DenseMatrix us = t.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= t.s[j];
  const double na = frobenius_norm(a);
  const double r = frobenius_norm(subtract(a, multiply_a_bt(us, t.v)));
  return na == 0.0 ? r : r / na;
}

/// Compares `result` with `reference`: max |s_j - s_ref_j|, Pearson
/// correlation of each sign-aligned v_j pair, and the relative residual of
/// `result` on `a` when given.
inline MetricsReport compare(const TruncatedSvd& result, const TruncatedSvd& reference,
                             const std::optional<DenseMatrix>& a = std::nullopt) {
  const std::size_t k = result.s.size();
  if (reference.s.size() != k) {
    throw DimensionError("compare: k mismatch (" + std::to_string(k) + " vs " + std::to_string(reference.s.size()) +
                         ")");
  }
  if (result.v.cols() != k || reference.v.cols() != k || result.v.rows() != reference.v.rows()) {
    throw DimensionError("compare: right singular vector shapes differ");
  }
  MetricsReport out;
  for (std::size_t j = 0; j < k; ++j) {
    out.max_singval_abs_err = std::max(out.max_singval_abs_err, std::abs(result.s[j] - reference.s[j]));
    const auto x = detail::column(result.v, j);
    const auto y = detail::column(reference.v, j);
    out.per_component_correlation.push_back(detail::aligned_correlation(x, y));
  }
  if (a) out.frobenius_residual_rel = residual_frobenius_rel(*a, result);
  return out;
}

/// CSV header matching metrics_csv_row; correlations are listed as corr_1..corr_k.
inline std::string metrics_csv_header(std::size_t k) {
  std::ostringstream os;
  os << "max_err,residual_rel,passes,retained_floats";
  for (std::size_t j = 1; j <= k; ++j) os << ",corr_" << j;
  return os.str();
}

inline std::string metrics_csv_row(const MetricsReport& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << r.max_singval_abs_err << ',';
  if (r.frobenius_residual_rel) os << *r.frobenius_residual_rel;
  os << ',' << r.passes << ',' << r.retained_floats;
  for (double c : r.per_component_correlation) os << ',' << c;
  return os.str();
}

inline std::string to_csv(const MetricsReport& r) {
  return metrics_csv_header(r.per_component_correlation.size()) + "\n" + metrics_csv_row(r) + "\n";
}

inline std::string to_text(const MetricsReport& r) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "max singular value error : " << r.max_singval_abs_err << '\n';
  if (r.frobenius_residual_rel) os << "relative residual        : " << *r.frobenius_residual_rel << '\n';
  os << "passes                   : " << r.passes << '\n';
  os << "retained floats          : " << r.retained_floats << '\n';
  const std::size_t shown = std::min<std::size_t>(r.per_component_correlation.size(), 10);
  for (std::size_t j = 0; j < shown; ++j) {
    os << "correlation v_" << (j + 1) << (j + 1 < 10 ? "           : " : "          : ")
       << r.per_component_correlation[j] << '\n';
  }
  if (r.per_component_correlation.size() > shown) {
    double lo = 1.0;
    for (double c : r.per_component_correlation) lo = std::min(lo, c);
    os << "min correlation (all k)  : " << lo << '\n';
  }
  for (const auto& [phase, secs] : r.wall_times) os << "time " << phase << " : " << secs << " s\n";
  return os.str();
}

}  // namespace sppca
