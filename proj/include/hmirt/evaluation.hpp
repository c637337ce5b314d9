#pragma once

// Scoring machinery on the log-score scale (higher is better): discrete
// uniform baseline, held-out expected log predictive density over posterior
// draws, WAIC, PSIS-LOO with generalized-Pareto tail smoothing, and the
// descriptive statistics over raw assessment differences.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hmirt/data.hpp"
#include "hmirt/density.hpp"
#include "hmirt/math.hpp"
#include "hmirt/sampler.hpp"

namespace hmirt {

// Pointwise log-likelihood records: S draws by N observations, plus the
// observation metadata reports group by.
struct PointwiseLogLik {
  int S = 0;
  int N = 0;
  std::vector<double> ll;  // S x N, draw-major
  std::vector<std::string> participant;  // per observation (may be empty)
  std::vector<int> set, round;

  double at(int s, int n) const { return ll[static_cast<std::size_t>(s) * N + n]; }
};

struct ScoreReport {
  std::string method;
  double total = 0.0;
  double per_obs = 0.0;
  double se = std::numeric_limits<double>::quiet_NaN();
  int n_obs = 0;
  std::vector<double> pointwise;                          // per-observation contributions
  std::vector<std::pair<std::string, double>> per_participant;  // average per participant
  std::vector<double> pareto_k;                           // PSIS only
  std::vector<std::string> notes;
};

namespace detail {

inline void fill_per_participant(ScoreReport& rep, const PointwiseLogLik& pw) {
  if (pw.participant.empty()) return;
  std::map<std::string, std::pair<double, int>> acc;
  for (int n = 0; n < pw.N; ++n) {
    auto& a = acc[pw.participant[n]];
    a.first += rep.pointwise[n];
    a.second += 1;
  }
  for (const auto& [id, a] : acc) rep.per_participant.emplace_back(id, a.first / a.second);
}

}  // namespace detail

// Discrete uniform baseline on the score support: log(1/C) per observation.
// No standard error: nothing is learned.
inline ScoreReport baseline_log_score(int n_observations, int category_count = 13) {
  if (n_observations < 0) throw ConfigError("baseline_log_score: negative observation count");
  ScoreReport rep;
  rep.method = "baseline";
  rep.n_obs = n_observations;
  rep.per_obs = -std::log(static_cast<double>(category_count));
  rep.total = n_observations * rep.per_obs;
  rep.pointwise.assign(n_observations, rep.per_obs);
  if (n_observations == 0) {
    rep.total = 0.0;
    rep.per_obs = 0.0;
  }
  return rep;
}

// Pointwise log-likelihood matrix of `data` under every retained draw.
inline PointwiseLogLik compute_pointwise(const ModelSpec& spec, const PosteriorDraws& draws,
                                         const IndexedData& data,
                                         const std::vector<std::string>* participant_labels = nullptr) {
  PointwiseLogLik pw;
  pw.S = draws.total_draws();
  pw.N = data.n_obs;
  pw.ll.resize(static_cast<std::size_t>(pw.S) * pw.N);
  int s = 0;
  std::vector<double> row(pw.N);
  for (int c = 0; c < draws.chains; ++c) {
    for (int i = 0; i < draws.iters; ++i, ++s) {
      pointwise_loglik(spec, data, draws.draw(c, i), row);
      std::copy(row.begin(), row.end(), pw.ll.begin() + static_cast<std::size_t>(s) * pw.N);
    }
  }
  pw.set = data.set;
  pw.round = data.round;
  if (participant_labels) {
    pw.participant.reserve(data.n_obs);
    for (int n = 0; n < data.n_obs; ++n) pw.participant.push_back((*participant_labels)[data.participant[n]]);
  }
  return pw;
}

// Expected log predictive density per observation: log of the posterior-mean
// likelihood, log-sum-exp over draws.
inline ScoreReport heldout_elpd(const PointwiseLogLik& pw, std::string method = "heldout") {
  ScoreReport rep;
  rep.method = std::move(method);
  rep.n_obs = pw.N;
  rep.pointwise.resize(pw.N);
  const double log_s = std::log(static_cast<double>(pw.S));
  std::vector<double> col(pw.S);
  for (int n = 0; n < pw.N; ++n) {
    for (int s = 0; s < pw.S; ++s) col[s] = pw.at(s, n);
    rep.pointwise[n] = log_sum_exp(col) - log_s;
    rep.total += rep.pointwise[n];
  }
  rep.per_obs = pw.N > 0 ? rep.total / pw.N : 0.0;
  detail::fill_per_participant(rep, pw);
  return rep;
}

// Held-out scoring of `heldout` rows under a fitted model's draws.
inline ScoreReport heldout_log_lik(const PosteriorDraws& draws, const ModelSpec& spec,
                                   const IndexedData& heldout,
                                   const std::vector<std::string>* labels = nullptr) {
  return heldout_elpd(compute_pointwise(spec, draws, heldout, labels));
}

// WAIC: per observation, log mean likelihood minus the posterior variance of
// the log-likelihood (sample variance, denominator S-1). Standard error is
// sqrt(N * var of the pointwise contributions).
inline ScoreReport waic(const PointwiseLogLik& pw) {
  ScoreReport rep;
  rep.method = "waic";
  rep.n_obs = pw.N;
  rep.pointwise.resize(pw.N);
  if (pw.S == 1) rep.notes.push_back("single draw: variance penalty is zero");
  const double log_s = std::log(static_cast<double>(pw.S));
  std::vector<double> col(pw.S);
  for (int n = 0; n < pw.N; ++n) {
    for (int s = 0; s < pw.S; ++s) col[s] = pw.at(s, n);
    const double lpd = log_sum_exp(col) - log_s;
    const double penalty = pw.S > 1 ? variance(col) : 0.0;
    rep.pointwise[n] = lpd - penalty;
    rep.total += rep.pointwise[n];
  }
  rep.per_obs = pw.N > 0 ? rep.total / pw.N : 0.0;
  if (pw.N > 1) rep.se = std::sqrt(pw.N * variance(rep.pointwise));
  detail::fill_per_participant(rep, pw);
  return rep;
}

// ---------------------------------------------------------------------------
// PSIS-LOO.

struct GpdFit {
  double k = 0.0;
  double sigma = 0.0;
};

// Generalized Pareto fit to exceedances, profile posterior-mean method over
// a quantile-spaced grid (Zhang & Stephens 2009) with the weak prior
// adjustment toward k = 0.5.
inline GpdFit gpd_fit(std::vector<double> x) {
  const int n = static_cast<int>(x.size());
  if (n < 2) throw ConfigError("gpd_fit: need at least 2 exceedances");
  std::sort(x.begin(), x.end());
  const int m = 30 + static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
  const int quart_idx = std::max(0, static_cast<int>(std::floor(n / 4.0 + 0.5)) - 1);
  const double quart = x[quart_idx];
  const double prior = 3.0;
  std::vector<double> theta(m), prof(m);
  for (int j = 0; j < m; ++j) {
    theta[j] = 1.0 / x[n - 1] + (1.0 - std::sqrt(static_cast<double>(m) / (j + 0.5))) / (prior * quart);
    double mean_log = 0.0;
    for (double v : x) mean_log += std::log1p(-theta[j] * v);
    mean_log /= n;
    prof[j] = n * (std::log(-theta[j] / mean_log) - mean_log - 1.0);
  }
  const double lse = log_sum_exp(prof);
  double theta_hat = 0.0;
  for (int j = 0; j < m; ++j) theta_hat += theta[j] * std::exp(prof[j] - lse);
  double k = 0.0;
  for (double v : x) k += std::log1p(-theta_hat * v);
  k /= n;
  GpdFit fit;
  fit.sigma = -k / theta_hat;
  fit.k = k * n / (n + 10.0) + 10.0 * 0.5 / (n + 10.0);
  return fit;
}

inline double gpd_quantile(const GpdFit& fit, double p) {
  if (std::fabs(fit.k) < 1e-12) return -fit.sigma * std::log1p(-p);
  return fit.sigma / fit.k * (std::pow(1.0 - p, -fit.k) - 1.0);
}

// PSIS-LOO over the pointwise matrix. Per observation: raw importance log
// ratios -ll; the largest ceil(0.2 S) ratios (at least 5) are replaced by
// expected order statistics of a fitted generalized Pareto, truncated at the
// raw maximum. Reports the Pareto k diagnostic per observation.
inline ScoreReport psis_loo(const PointwiseLogLik& pw) {
  ScoreReport rep;
  rep.method = "psis-loo";
  rep.n_obs = pw.N;
  rep.pointwise.resize(pw.N);
  rep.pareto_k.assign(pw.N, 0.0);
  const int S = pw.S;
  if (S < 100) rep.notes.push_back("fewer than 100 draws: importance sampling may be unstable");
  const int tail = std::max(5, static_cast<int>(std::ceil(0.2 * S)));

  std::vector<double> lw(S), ll(S);
  std::vector<int> order(S);
  for (int n = 0; n < pw.N; ++n) {
    double max_lw = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < S; ++s) {
      ll[s] = pw.at(s, n);
      lw[s] = -ll[s];
      max_lw = std::max(max_lw, lw[s]);
    }
    for (int s = 0; s < S; ++s) lw[s] -= max_lw;  // max raw log weight is 0

    if (S > 2 * tail) {
      for (int s = 0; s < S; ++s) order[s] = s;
      std::sort(order.begin(), order.end(), [&](int a, int b) { return lw[a] < lw[b]; });
      const double cutoff = lw[order[S - tail - 1]];
      std::vector<double> exceed;
      exceed.reserve(tail);
      const double u = std::exp(cutoff);
      for (int t = S - tail; t < S; ++t) exceed.push_back(std::exp(lw[order[t]]) - u);
      const double spread = *std::max_element(exceed.begin(), exceed.end());
      if (spread > 1e-12) {  // degenerate (all-equal) tails keep exact weights
        const GpdFit fit = gpd_fit(exceed);
        rep.pareto_k[n] = fit.k;
        if (std::isfinite(fit.k) && fit.sigma > 0.0) {
          for (int t = 0; t < tail; ++t) {
            const double p = (t + 0.5) / tail;
            const double w = std::min(u + gpd_quantile(fit, p), 1.0);  // truncate at raw max
            lw[order[S - tail + t]] = std::log(w);
          }
        }
      }
    }

    // elpd_i = log( sum_s w_s lik_s / sum_s w_s )
    std::vector<double> num(S);
    for (int s = 0; s < S; ++s) num[s] = lw[s] + ll[s];
    rep.pointwise[n] = log_sum_exp(num) - log_sum_exp(lw);
    rep.total += rep.pointwise[n];
  }
  rep.per_obs = pw.N > 0 ? rep.total / pw.N : 0.0;
  if (pw.N > 1) rep.se = std::sqrt(pw.N * variance(rep.pointwise));
  detail::fill_per_participant(rep, pw);
  return rep;
}

// ---------------------------------------------------------------------------
// Descriptive statistics over raw assessments.

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // one-tailed
  bool reject = false;
};

// One-sample one-tailed t-test of mean > 0.
inline TTestResult t_test_mean_positive(std::span<const double> xs, double alpha = 0.01) {
  TTestResult r;
  const int n = static_cast<int>(xs.size());
  if (n < 2) return r;
  const double m = mean(xs);
  const double sd = std::sqrt(variance(xs));
  if (!(sd > 0.0)) {
    r.t = m > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    r.p = m > 0.0 ? 0.0 : 1.0;
    r.df = n - 1;
    r.reject = r.p < alpha;
    return r;
  }
  r.t = m / (sd / std::sqrt(static_cast<double>(n)));
  r.df = n - 1;
  r.p = 1.0 - student_t_cdf(r.t, r.df);
  r.reject = r.p < alpha;
  return r;
}

// Two-sample one-tailed Welch t-test of mean(x) > mean(y).
inline TTestResult t_test_greater(std::span<const double> xs, std::span<const double> ys,
                                  double alpha = 0.01) {
  TTestResult r;
  const int n1 = static_cast<int>(xs.size()), n2 = static_cast<int>(ys.size());
  if (n1 < 2 || n2 < 2) return r;
  const double m1 = mean(xs), m2 = mean(ys);
  const double v1 = variance(xs) / n1, v2 = variance(ys) / n2;
  if (!(v1 + v2 > 0.0)) return r;
  r.t = (m1 - m2) / std::sqrt(v1 + v2);
  r.df = (v1 + v2) * (v1 + v2) / (v1 * v1 / (n1 - 1) + v2 * v2 / (n2 - 1));
  r.p = 1.0 - student_t_cdf(r.t, r.df);
  r.reject = r.p < alpha;
  return r;
}

// Centered moving average, window 3, truncated at the ends.
inline std::vector<double> moving_average3(std::span<const double> xs) {
  const int n = static_cast<int>(xs.size());
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    double s = xs[i];
    int cnt = 1;
    if (i > 0) {
      s += xs[i - 1];
      ++cnt;
    }
    if (i + 1 < n) {
      s += xs[i + 1];
      ++cnt;
    }
    out[i] = s / cnt;
  }
  return out;
}

struct ConditionKey {
  Counterpart counterpart = Counterpart::none;
  bool feedback = false;
  auto operator<=>(const ConditionKey&) const = default;
};

struct ConditionSummary {
  ConditionKey key;
  int n_pairs = 0;
  double mean_diff = 0.0;                // mean of (other - self)
  std::map<int, int> diff_histogram;     // difference -> count
  TTestResult mean_positive;             // H1: mean > 0
  std::vector<double> self_curve;        // smoothed mean self assessment per position
  std::vector<double> other_curve;       // smoothed mean other assessment per position
};

struct EmpiricalSummary {
  std::vector<ConditionSummary> conditions;
  std::map<bool, TTestResult> ai_above_human;  // per feedback stratum: H1 mean(ai) > mean(human)
  std::vector<std::string> notices;
  double alpha = 0.01;
};

// Per-condition mean and histogram of (other - self), the one- and
// two-sample one-tailed t-tests at alpha = 0.01, and window-3 smoothed
// per-position assessment curves. Position within a round follows row order
// per participant (the simulator emits rows chronologically).
inline EmpiricalSummary empirical_summary(const ResponseTable& table, double alpha = 0.01) {
  const auto kinds = kinds_present(table);
  if (!kinds.count(ScoreKind::self_score) || !kinds.count(ScoreKind::other_score)) {
    throw ConfigError("empirical_summary: needs self and other score kinds");
  }
  EmpiricalSummary out;
  out.alpha = alpha;

  struct PairCell {
    std::optional<int> self, other;
    ConditionKey key;
    int order = 0;
  };
  std::map<std::pair<std::string, std::string>, PairCell> cells;
  std::map<std::string, int> seen_sets;  // per participant, chronological position counter
  for (const auto& r : table.rows) {
    if (r.kind != ScoreKind::self_score && r.kind != ScoreKind::other_score) continue;
    auto& cell = cells[{r.participant, r.problem_set}];
    cell.key = {r.counterpart, r.feedback};
    if (r.kind == ScoreKind::self_score) {
      if (!cell.self) cell.order = seen_sets[r.participant]++;
      cell.self = r.score;
    } else {
      cell.other = r.score;
    }
  }

  std::map<ConditionKey, std::vector<double>> diffs;
  std::map<ConditionKey, std::map<int, std::pair<std::vector<double>, std::vector<double>>>> curves;
  for (const auto& [id, cell] : cells) {
    if (!cell.self || !cell.other) continue;
    diffs[cell.key].push_back(static_cast<double>(*cell.other - *cell.self));
    auto& c = curves[cell.key][cell.order];
    c.first.push_back(static_cast<double>(*cell.self));
    c.second.push_back(static_cast<double>(*cell.other));
  }
  if (diffs.empty()) throw ConfigError("empirical_summary: no paired self/other assessments");

  for (auto& [key, xs] : diffs) {
    ConditionSummary cs;
    cs.key = key;
    cs.n_pairs = static_cast<int>(xs.size());
    cs.mean_diff = mean(xs);
    for (double d : xs) cs.diff_histogram[static_cast<int>(d)]++;
    cs.mean_positive = t_test_mean_positive(xs, alpha);
    std::vector<double> self_means, other_means;
    for (auto& [pos, c] : curves[key]) {
      self_means.push_back(mean(c.first));
      other_means.push_back(mean(c.second));
    }
    cs.self_curve = moving_average3(self_means);
    cs.other_curve = moving_average3(other_means);
    out.conditions.push_back(std::move(cs));
  }

  for (bool fb : {false, true}) {
    const ConditionKey ai{Counterpart::ai, fb}, hu{Counterpart::human, fb};
    if (diffs.count(ai) && diffs.count(hu)) {
      out.ai_above_human[fb] = t_test_greater(diffs[ai], diffs[hu], alpha);
    } else if (diffs.count(ai) || diffs.count(hu)) {
      out.notices.push_back(std::string("feedback=") + (fb ? "yes" : "no") +
                            ": only one counterpart kind present; two-sample test omitted");
    }
  }
  return out;
}

}  // namespace hmirt
