#pragma once

// Log prior densities used by the model family, with the partials the
// gradient assembly needs. Scale parameters declared with Cauchy or normal
// priors are read as half-distributions on the positive axis.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hmirt/math.hpp"

namespace hmirt {

inline double normal_lpdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * kLn2Pi;
}

inline double normal_lpdf_d_x(double x, double mu, double sigma) { return -(x - mu) / (sigma * sigma); }

inline double normal_lpdf_d_mu(double x, double mu, double sigma) { return (x - mu) / (sigma * sigma); }

inline double normal_lpdf_d_sigma(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return (z * z - 1.0) / sigma;
}

// Half-Cauchy on (0, inf): log 2/(pi * scale * (1 + (x/scale)^2)).
inline double half_cauchy_log_prior(double x, double scale) {
  if (!(x > 0.0)) throw std::domain_error("half_cauchy_log_prior: x must be positive");
  if (!(scale > 0.0)) throw std::domain_error("half_cauchy_log_prior: scale must be positive");
  const double r = x / scale;
  return std::log(2.0 / (kPi * scale)) - std::log1p(r * r);
}

inline double half_cauchy_d_x(double x, double scale) { return -2.0 * x / (scale * scale + x * x); }

// Half-normal on (0, inf) with scale parameter.
inline double half_normal_log_prior(double x, double scale) {
  if (!(x > 0.0)) throw std::domain_error("half_normal_log_prior: x must be positive");
  return std::log(2.0) + normal_lpdf(x, 0.0, scale);
}

inline double half_normal_d_x(double x, double scale) { return -x / (scale * scale); }

// Cholesky factor of a correlation matrix plus per-dimension scales.
struct CorrelationFactor {
  int K = 0;
  std::vector<double> L;       // row-major lower triangle of a K x K matrix (full storage)
  std::vector<double> scales;  // K positive entries

  double& at(int r, int c) { return L[static_cast<std::size_t>(r) * K + c]; }
  double at(int r, int c) const { return L[static_cast<std::size_t>(r) * K + c]; }
};

inline void validate_correlation_factor(const CorrelationFactor& f) {
  if (f.K < 1 || static_cast<int>(f.L.size()) != f.K * f.K) {
    throw std::domain_error("CorrelationFactor: bad shape");
  }
  for (int r = 0; r < f.K; ++r) {
    double row_sq = 0.0;
    for (int c = 0; c <= r; ++c) row_sq += f.at(r, c) * f.at(r, c);
    if (std::fabs(row_sq - 1.0) > 1e-8) throw std::domain_error("CorrelationFactor: rows must have unit norm");
    if (!(f.at(r, r) > 0.0)) throw std::domain_error("CorrelationFactor: diagonal must be positive");
    for (int c = r + 1; c < f.K; ++c) {
      if (f.at(r, c) != 0.0) throw std::domain_error("CorrelationFactor: upper triangle must be zero");
    }
  }
  for (double s : f.scales) {
    if (!(s > 0.0)) throw std::domain_error("CorrelationFactor: scales must be positive");
  }
}

// LKJ density over the Cholesky factor, up to a constant:
//   sum_{k=2..K} (K - k + 2*eta - 2) * log L_kk   (1-based k).
inline double lkj_cholesky_log_prior(const CorrelationFactor& f, double eta) {
  if (!(eta > 0.0)) throw std::domain_error("lkj_cholesky_log_prior: eta must be positive");
  validate_correlation_factor(f);
  double lp = 0.0;
  for (int r = 1; r < f.K; ++r) {
    const double coeff = static_cast<double>(f.K - (r + 1)) + 2.0 * eta - 2.0;
    lp += coeff * std::log(f.at(r, r));
  }
  return lp;
}

// Same kernel on a raw lower-triangular matrix, no validation; used inside
// density evaluation where the factor is constructed by the transform and
// is valid by construction. Returns the coefficient applied to log L_rr so
// the gradient code can reuse it.
inline double lkj_diag_coeff(int K, int row_zero_based, double eta) {
  return static_cast<double>(K - (row_zero_based + 1)) + 2.0 * eta - 2.0;
}

}  // namespace hmirt
