#pragma once

// Convergence diagnostics over retained draws: split-chain potential scale
// reduction and rank-normalized bulk effective sample size, replacing the
// visual chain inspection the run settings were originally tuned with.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "hmirt/math.hpp"
#include "hmirt/sampler.hpp"

namespace hmirt {

namespace detail {

// Splits each chain in half; returns sequences of equal length.
inline std::vector<std::vector<double>> split_chains(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    if (half == 0) {
      out.push_back(c);
      continue;
    }
    out.emplace_back(c.begin(), c.begin() + half);
    out.emplace_back(c.begin() + half, c.begin() + 2 * half);
  }
  return out;
}

inline double rhat_from_sequences(const std::vector<std::vector<double>>& seqs) {
  const int m = static_cast<int>(seqs.size());
  const int n = static_cast<int>(seqs[0].size());
  if (n < 2) return 1.0;
  std::vector<double> means(m), vars(m);
  for (int c = 0; c < m; ++c) {
    means[c] = mean(seqs[c]);
    vars[c] = variance(seqs[c]);
  }
  const double w = mean(vars);
  if (!(w > 0.0)) return 1.0;  // zero-variance parameter, by convention
  const double b = n * variance(means);
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

// Average-rank normal scores of the pooled draws, written back per sequence.
inline std::vector<std::vector<double>> rank_normalize(const std::vector<std::vector<double>>& seqs) {
  struct Entry {
    double v;
    int seq;
    int pos;
  };
  std::vector<Entry> pool;
  for (int c = 0; c < static_cast<int>(seqs.size()); ++c) {
    for (int i = 0; i < static_cast<int>(seqs[c].size()); ++i) pool.push_back({seqs[c][i], c, i});
  }
  std::sort(pool.begin(), pool.end(), [](const Entry& a, const Entry& b) { return a.v < b.v; });
  const double total = static_cast<double>(pool.size());
  std::vector<std::vector<double>> out(seqs.size());
  for (std::size_t c = 0; c < seqs.size(); ++c) out[c].resize(seqs[c].size());
  std::size_t i = 0;
  while (i < pool.size()) {
    std::size_t j = i;
    while (j + 1 < pool.size() && pool[j + 1].v == pool[i].v) ++j;
    const double avg_rank = 0.5 * (i + j) + 1.0;  // average of 1-based ranks
    const double z = inv_normal_cdf((avg_rank - 0.375) / (total + 0.25));
    for (std::size_t k = i; k <= j; ++k) out[pool[k].seq][pool[k].pos] = z;
    i = j + 1;
  }
  return out;
}

inline double autocovariance(const std::vector<double>& x, double m, int lag) {
  const int n = static_cast<int>(x.size());
  double s = 0.0;
  for (int i = 0; i + lag < n; ++i) s += (x[i] - m) * (x[i + lag] - m);
  return s / n;
}

// Effective sample size via Geyer's initial monotone sequence over the
// combined-chain autocorrelations.
inline double ess_from_sequences(const std::vector<std::vector<double>>& seqs) {
  const int m = static_cast<int>(seqs.size());
  const int n = static_cast<int>(seqs[0].size());
  if (n < 4) return static_cast<double>(m * n);
  std::vector<double> means(m), vars(m);
  for (int c = 0; c < m; ++c) {
    means[c] = mean(seqs[c]);
    vars[c] = variance(seqs[c]);
  }
  const double w = mean(vars);
  if (!(w > 0.0)) return static_cast<double>(m * n);
  const double b = m > 1 ? n * variance(means) : 0.0;
  const double var_plus = (n - 1.0) / n * w + (m > 1 ? b / n : 0.0);

  auto rho = [&](int t) {
    double acov = 0.0;
    for (int c = 0; c < m; ++c) acov += autocovariance(seqs[c], means[c], t);
    acov /= m;
    return 1.0 - (w - acov) / var_plus;
  };

  // Geyer pairs: accumulate while rho_{2k} + rho_{2k+1} stays positive,
  // enforcing monotone non-increase.
  double tau = 1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  double rho_odd = rho(1);
  tau += 2.0 * rho_odd;  // the t=0 term is 1 and pairs start at (1,2)
  for (int k = 1; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(m * n) + 10.0));
  double ess = m * n / tau;
  return std::min(ess, static_cast<double>(m * n));
}

inline std::vector<std::vector<double>> chains_of_parameter(const PosteriorDraws& d, int p) {
  std::vector<std::vector<double>> chains(d.chains);
  for (int c = 0; c < d.chains; ++c) {
    chains[c].resize(d.iters);
    for (int i = 0; i < d.iters; ++i) chains[c][i] = d.value(c, i, p);
  }
  return chains;
}

}  // namespace detail

inline double split_rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.empty() || chains[0].empty()) return 1.0;
  return detail::rhat_from_sequences(detail::split_chains(chains));
}

inline double ess_bulk(const std::vector<std::vector<double>>& chains) {
  if (chains.empty() || chains[0].empty()) return 0.0;
  const auto split = detail::split_chains(chains);
  return detail::ess_from_sequences(detail::rank_normalize(split));
}

struct Diagnostics {
  std::vector<double> rhat;
  std::vector<double> ess;
  double divergence_fraction = 0.0;

  double max_rhat() const {
    double m = 1.0;
    for (double r : rhat) m = std::max(m, r);
    return m;
  }
  double min_ess() const {
    double m = std::numeric_limits<double>::infinity();
    for (double e : ess) m = std::min(m, e);
    return rhat.empty() ? 0.0 : m;
  }
  // convergence gate: R-hat <= 1.01 and ESS >= 100 per parameter
  bool converged(double rhat_max = 1.01, double ess_min = 100.0) const {
    return max_rhat() <= rhat_max && min_ess() >= ess_min;
  }
};

inline Diagnostics compute_diagnostics(const PosteriorDraws& d) {
  Diagnostics diag;
  diag.rhat.resize(d.dim);
  diag.ess.resize(d.dim);
  for (int p = 0; p < d.dim; ++p) {
    const auto chains = detail::chains_of_parameter(d, p);
    diag.rhat[p] = split_rhat(chains);
    diag.ess[p] = ess_bulk(chains);
  }
  diag.divergence_fraction = d.total_draws() > 0
                                 ? static_cast<double>(d.total_divergences()) / d.total_draws()
                                 : 0.0;
  return diag;
}

}  // namespace hmirt
