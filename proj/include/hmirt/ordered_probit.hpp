#pragma once

// Ordered-probit observation model on a latent success probability.
// A score x in {0..C-1} falls in the bin delimited by equally spaced
// interior edges v_k = k/C, with Gaussian noise of scale sigma:
//   P(x = c) = Phi((v_{c+1} - p)/sigma) - Phi((v_c - p)/sigma),
// where v_0 = -inf and v_C = +inf.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hmirt/math.hpp"

namespace hmirt {

struct CutpointLadder {
  std::vector<double> edges;  // C-1 interior edges, strictly increasing, in (0,1)
  int category_count = 0;
};

inline CutpointLadder make_cutpoints(int category_count) {
  if (category_count < 2) throw std::invalid_argument("make_cutpoints: need at least 2 categories");
  CutpointLadder ladder;
  ladder.category_count = category_count;
  ladder.edges.resize(category_count - 1);
  for (int k = 1; k < category_count; ++k) {
    ladder.edges[k - 1] = static_cast<double>(k) / category_count;
  }
  return ladder;
}

// Probabilities below double range floor the log-pmf here rather than
// propagating -inf through samplers and scorers.
inline constexpr double kLogPmfFloor = -745.0;

namespace detail {

// Phi(zhi) - Phi(zlo), evaluated from the side whose erfc arguments stay in
// the accurate tail.
inline double phi_interval(double zlo, double zhi) {
  if (zlo + zhi > 0.0) {
    return 0.5 * (std::erfc(zlo * kInvSqrt2) - std::erfc(zhi * kInvSqrt2));
  }
  return 0.5 * (std::erfc(-zhi * kInvSqrt2) - std::erfc(-zlo * kInvSqrt2));
}

inline double cell_prob(double p, const CutpointLadder& v, double sigma, int x) {
  const int c_max = v.category_count - 1;
  if (x == 0) return normal_cdf((v.edges.front() - p) / sigma);
  if (x == c_max) return normal_cdf(-(v.edges.back() - p) / sigma);
  const double zlo = (v.edges[x - 1] - p) / sigma;
  const double zhi = (v.edges[x] - p) / sigma;
  return phi_interval(zlo, zhi);
}

inline void check_pmf_inputs(double p, const CutpointLadder& v, double sigma) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("ordered_probit: p outside (0,1)");
  if (!(sigma > 0.0)) throw std::domain_error("ordered_probit: sigma must be positive");
  if (v.category_count < 2 || static_cast<int>(v.edges.size()) != v.category_count - 1) {
    throw std::domain_error("ordered_probit: malformed cutpoint ladder");
  }
}

}  // namespace detail

inline std::vector<double> ordered_probit_pmf(double p, const CutpointLadder& v, double sigma) {
  detail::check_pmf_inputs(p, v, sigma);
  std::vector<double> pmf(v.category_count);
  for (int c = 0; c < v.category_count; ++c) {
    pmf[c] = std::max(0.0, detail::cell_prob(p, v, sigma, c));
  }
  return pmf;
}

inline double ordered_probit_log_pmf(double p, const CutpointLadder& v, double sigma, int x) {
  detail::check_pmf_inputs(p, v, sigma);
  if (x < 0 || x >= v.category_count) throw std::domain_error("ordered_probit_log_pmf: category out of range");
  const double prob = detail::cell_prob(p, v, sigma, x);
  const double ll = std::log(prob);
  return std::isfinite(ll) ? std::max(ll, kLogPmfFloor) : kLogPmfFloor;
}

struct OrderedProbitGrad {
  double d_p = 0.0;
  double d_sigma = 0.0;
};

// Log-pmf and its partials wrt p and sigma. In the floored region the
// partials are zero, matching the flat floor.
inline double ordered_probit_log_pmf_grad(double p, const CutpointLadder& v, double sigma, int x,
                                          OrderedProbitGrad& grad) {
  detail::check_pmf_inputs(p, v, sigma);
  if (x < 0 || x >= v.category_count) throw std::domain_error("ordered_probit_log_pmf_grad: category out of range");
  const double prob = detail::cell_prob(p, v, sigma, x);
  grad.d_p = 0.0;
  grad.d_sigma = 0.0;
  const double ll = std::log(prob);
  if (!std::isfinite(ll) || ll < kLogPmfFloor) return kLogPmfFloor;

  const int c_max = v.category_count - 1;
  double phi_lo = 0.0, z_phi_lo = 0.0, phi_hi = 0.0, z_phi_hi = 0.0;
  if (x > 0) {
    const double zlo = (v.edges[x - 1] - p) / sigma;
    phi_lo = normal_pdf(zlo);
    z_phi_lo = zlo * phi_lo;
  }
  if (x < c_max) {
    const double zhi = (v.edges[x] - p) / sigma;
    phi_hi = normal_pdf(zhi);
    z_phi_hi = zhi * phi_hi;
  }
  grad.d_p = (phi_lo - phi_hi) / (sigma * prob);
  grad.d_sigma = (z_phi_lo - z_phi_hi) / (sigma * prob);
  return ll;
}

}  // namespace hmirt
