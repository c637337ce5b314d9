#pragma once

// Model-comparison drivers: held-out final-round scoring of the
// dimensionality candidates, and next-round scoring of the three
// other-assessment structures trained on rounds 1..t-1.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hmirt/evaluation.hpp"
#include "hmirt/pipeline.hpp"

namespace hmirt {

// ---------------------------------------------------------------------------
// Held-out scoring of an underlying-structure fit (baseline / 1D / MD),
// training on all rounds before the held-out block.

struct HeldoutComparison {
  ScoreReport baseline;
  ScoreReport one_dim;
  ScoreReport multi_dim;
  FitRecord one_dim_fit;
  FitRecord multi_dim_fit;
};

// Fits 1D and MD underlying-structure models to `kind` rows with the final
// `heldout_rounds` rounds held out, scoring each on the held-out block.
inline HeldoutComparison compare_dimensionality(const ResponseTable& table, const StudyFrame& frame,
                                                ScoreKind kind, int heldout_rounds,
                                                SamplerConfig cfg, std::uint64_t seed) {
  if (frame.max_round <= heldout_rounds) throw ConfigError("compare_dimensionality: nothing left to train on");
  const int split = frame.max_round - heldout_rounds;
  RowFilter train_f, test_f;
  train_f.kind = kind;
  train_f.max_round = split;
  test_f.kind = kind;
  test_f.min_round = split + 1;
  const IndexedData train = select_observations(table, frame, train_f);
  const IndexedData test = select_observations(table, frame, test_f);
  if (train.n_obs == 0 || test.n_obs == 0) throw ConfigError("compare_dimensionality: empty train or test slice");

  HeldoutComparison out;
  out.baseline = baseline_log_score(test.n_obs, frame.category_count);
  cfg.seed = split_seed(seed, 1);
  out.one_dim_fit = run_fit(build_underlying(Dims::one, frame, kind), train, cfg, "heldout/1d", cfg.seed);
  cfg.seed = split_seed(seed, 2);
  out.multi_dim_fit = run_fit(build_underlying(Dims::multi, frame, kind), train, cfg, "heldout/md", cfg.seed);
  out.one_dim = heldout_log_lik(out.one_dim_fit.draws, out.one_dim_fit.spec, test, &frame.participants);
  out.one_dim.method = "one-dimensional";
  out.multi_dim = heldout_log_lik(out.multi_dim_fit.draws, out.multi_dim_fit.spec, test, &frame.participants);
  out.multi_dim.method = "multidimensional";
  return out;
}

// ---------------------------------------------------------------------------
// Next-round scoring of the other-assessment structures.

struct NextRoundOptions {
  Dims dims = Dims::multi;
  std::vector<OtherVariant> variants = {OtherVariant::undifferentiated,
                                        OtherVariant::differentiated_by_ability,
                                        OtherVariant::fully_differentiated};
  SamplerConfig underlying_cfg = SamplerConfig::underlying_defaults();
  SamplerConfig participant_cfg = SamplerConfig::participant_defaults();
  std::uint64_t seed = 1;
  int threads = 1;
  // Refit the underlying and self tiers on each training slice. When false,
  // tiers 1-2 are fit once on all rounds before the last and reused, which
  // is cheaper but lets early-round scores see later self-assessment data.
  bool refit_upstream = true;
  // Score round 1 under the prior predictive (no training data) instead of
  // starting at round 2.
  bool include_round1_prior = false;
  int prior_predictive_draws = 400;
};

struct NextRoundScores {
  // per variant: averaged per-observation elpd across rounds and
  // participants, plus per-round reports
  std::map<OtherVariant, double> per_obs;
  std::map<OtherVariant, double> total;
  std::map<OtherVariant, int> n_obs;
  std::map<OtherVariant, std::map<int, ScoreReport>> per_round;
  ScoreReport baseline;
};

namespace detail {

// Draws one full hierarchy parameter set from the priors and evaluates the
// per-observation likelihood of `data` under the chosen variant. Used only
// for the optional round-1 prior-predictive score.
inline void prior_predictive_loglik(const StudyFrame& frame, Dims dims, OtherVariant variant,
                                    const IndexedData& data, Rng& rng, std::span<double> out) {
  const int K = dims == Dims::multi ? frame.n_topics() : 1;
  const int J = frame.n_sets();
  auto half_cauchy_draw = [&](double scale) {
    return std::fabs(scale * std::tan(kPi * (rng.uniform01() - 0.5)));
  };
  // underlying tier
  std::vector<double> a(K), d(J);
  const double mu_d = 2.0 * rng.normal();
  const double sigma_d = half_cauchy_draw(family::kDifficultyCauchyScale);
  for (auto& v : d) v = mu_d + sigma_d * rng.normal();
  if (dims == Dims::multi) {
    // correlated ability draw: scales ~ |N(0,2.5)|, correlation from a
    // random Cholesky factor of the unconstrained prior pushed through tanh
    std::vector<double> y(K * (K - 1) / 2);
    for (auto& v : y) v = rng.normal();
    std::vector<double> L(static_cast<std::size_t>(K) * K);
    hmirt::detail::cholesky_corr_constrain(y, K, L.data(), nullptr);
    std::vector<double> z(K);
    for (auto& v : z) v = rng.normal();
    for (int r = 0; r < K; ++r) {
      const double scale = std::fabs(family::kCholScaleSd * rng.normal());
      double s = 0.0;
      for (int c = 0; c <= r; ++c) s += L[r * K + c] * z[c];
      a[r] = scale * s;
    }
  } else {
    for (auto& v : a) v = rng.normal();
  }
  // self tier
  const double gamma = rng.normal(), lambda = rng.normal();
  const double sigma_d_i = half_cauchy_draw(family::kNoiseCauchyScale);
  const double sigma_a_i = half_cauchy_draw(family::kNoiseCauchyScale);
  const double sigma_s = half_cauchy_draw(family::kNoiseCauchyScale);
  std::vector<double> a_s(K), d_s(J);
  for (int k = 0; k < K; ++k) a_s[k] = a[k] + sigma_a_i * rng.normal();
  for (int j = 0; j < J; ++j) d_s[j] = gamma * d[j] + lambda + sigma_d_i * rng.normal();
  // other tier
  std::vector<double> a_o = a_s, d_o = d_s;
  switch (variant) {
    case OtherVariant::undifferentiated:
      break;
    case OtherVariant::differentiated_by_ability: {
      if (dims == Dims::multi) {
        for (int k = 0; k < K; ++k) a_o[k] += rng.normal();
      } else {
        const double mu_delta = rng.normal();
        const double sigma_delta = half_cauchy_draw(family::kNoiseCauchyScale);
        a_o[0] += mu_delta + sigma_delta * rng.normal();
      }
      break;
    }
    case OtherVariant::fully_differentiated: {
      const double mu_o = 2.0 * rng.normal();
      const double sd_o = half_cauchy_draw(family::kDifficultyCauchyScale);
      for (int k = 0; k < K; ++k) a_o[k] = rng.normal();
      for (int j = 0; j < J; ++j) d_o[j] = mu_o + sd_o * rng.normal();
      break;
    }
    case OtherVariant::none:
      throw ConfigError("prior_predictive_loglik: variant not set");
  }
  const CutpointLadder ladder = make_cutpoints(frame.category_count);
  for (int n = 0; n < data.n_obs; ++n) {
    const int topic = dims == Dims::multi ? frame.set_topic[data.set[n]] : 0;
    const double theta = a_o[topic] - d_o[data.set[n]];
    out[n] = ordered_probit_log_pmf(logistic(theta), ladder, sigma_s, data.score[n]);
  }
}

}  // namespace detail

// For t in 2..R (and optionally t = 1 under the prior predictive), fit the
// hierarchy on rounds 1..t-1 and score round t's other-assessment rows.
inline NextRoundScores next_round_log_lik(const ResponseTable& table, const StudyFrame& frame,
                                          NextRoundOptions opt) {
  if (frame.max_round < 2) throw ConfigError("next_round_log_lik: need at least 2 rounds");
  for (const auto& r : table.rows) {
    if (r.round < 1 || r.round > frame.max_round) {
      throw ConfigError("next_round_log_lik: round labels must lie in 1..max_round");
    }
  }
  NextRoundScores out;
  int baseline_n = 0;

  std::optional<StageResult> reused;
  for (int t = opt.include_round1_prior ? 1 : 2; t <= frame.max_round; ++t) {
    RowFilter test_f;
    test_f.kind = ScoreKind::other_score;
    test_f.min_round = t;
    test_f.max_round = t;

    if (t == 1) {
      // prior predictive: no training data
      const IndexedData round1 = select_observations(table, frame, test_f);
      baseline_n += round1.n_obs;
      for (OtherVariant v : opt.variants) {
        const IndexedData& all_test = round1;
        PointwiseLogLik pw;
        pw.S = opt.prior_predictive_draws;
        pw.N = all_test.n_obs;
        pw.ll.resize(static_cast<std::size_t>(pw.S) * pw.N);
        Rng rng(split_seed(opt.seed, 7700 + static_cast<int>(v)));
        std::vector<double> row(pw.N);
        for (int s = 0; s < pw.S; ++s) {
          detail::prior_predictive_loglik(frame, opt.dims, v, all_test, rng, row);
          std::copy(row.begin(), row.end(), pw.ll.begin() + static_cast<std::size_t>(s) * pw.N);
        }
        ScoreReport rep = heldout_elpd(pw, "prior-predictive");
        out.per_round[v][1] = rep;
        out.total[v] += rep.total;
        out.n_obs[v] += rep.n_obs;
      }
      continue;
    }

    ResponseTable train;
    train.max_score = table.max_score;
    for (const auto& r : table.rows) {
      if (r.round <= t - 1) train.rows.push_back(r);
    }

    StageResult local;
    if (opt.refit_upstream) {
      // full hierarchy on rounds 1..t-1
      StageConfig scfg;
      scfg.dims = opt.dims;
      scfg.variants = opt.variants;
      scfg.underlying_cfg = opt.underlying_cfg;
      scfg.participant_cfg = opt.participant_cfg;
      scfg.master_seed = split_seed(opt.seed, 100 + t);
      scfg.threads = opt.threads;
      local = run_stage_plan(stage_hierarchy(train, frame, scfg), train, frame);
    } else {
      if (!reused) {
        // tiers 1-2 once, on every round before the last
        ResponseTable upstream;
        upstream.max_score = table.max_score;
        for (const auto& r : table.rows) {
          if (r.round < frame.max_round) upstream.rows.push_back(r);
        }
        StageConfig scfg;
        scfg.dims = opt.dims;
        // only tiers 1-2 are kept; the parameter-free variant makes the
        // third wave a no-cost direct evaluation
        scfg.variants = {OtherVariant::undifferentiated};
        scfg.underlying_cfg = opt.underlying_cfg;
        scfg.participant_cfg = opt.participant_cfg;
        scfg.master_seed = split_seed(opt.seed, 99);
        scfg.threads = opt.threads;
        reused = run_stage_plan(stage_hierarchy(upstream, frame, scfg), upstream, frame);
      }
      // refit only the other tier on rounds 1..t-1
      local = *reused;
      const std::uint64_t slice_seed = split_seed(opt.seed, 100 + t);
      int idx = 0;
      for (const auto& p : frame.participants) {
        const TierSummary self_summary = summarize_self(local.self_fits.at(p));
        RowFilter f;
        f.kind = ScoreKind::other_score;
        f.participant = p;
        f.max_round = t - 1;
        const IndexedData data = select_observations(table, frame, f, true);
        for (OtherVariant v : opt.variants) {
          const ModelSpec spec = build_other(v, opt.dims, self_summary, frame, p);
          local.other_fits[p][v] =
              run_fit(spec, data, opt.participant_cfg, "other/" + std::string(to_string(v)) + "/" + p,
                      split_seed(slice_seed, idx++));
        }
      }
    }
    const StageResult* stage = &local;

    // score round t per participant under each variant
    for (OtherVariant v : opt.variants) {
      double round_total = 0.0;
      int round_n = 0;
      ScoreReport round_rep;
      round_rep.method = to_string(v);
      for (const auto& p : frame.participants) {
        RowFilter f = test_f;
        f.participant = p;
        const IndexedData test = select_observations(table, frame, f, true);
        if (test.n_obs == 0) continue;
        const FitRecord& fit = stage->other_fits.at(p).at(v);
        std::vector<std::string> label{p};
        const ScoreReport rep = heldout_log_lik(fit.draws, fit.spec, test, &label);
        round_total += rep.total;
        round_n += rep.n_obs;
        round_rep.pointwise.insert(round_rep.pointwise.end(), rep.pointwise.begin(), rep.pointwise.end());
        for (const auto& pp : rep.per_participant) round_rep.per_participant.push_back(pp);
      }
      round_rep.total = round_total;
      round_rep.n_obs = round_n;
      round_rep.per_obs = round_n > 0 ? round_total / round_n : 0.0;
      out.per_round[v][t] = round_rep;
      out.total[v] += round_total;
      out.n_obs[v] += round_n;
      if (v == opt.variants.front()) baseline_n += round_n;
    }
  }

  for (OtherVariant v : opt.variants) {
    out.per_obs[v] = out.n_obs[v] > 0 ? out.total[v] / out.n_obs[v] : 0.0;
  }
  out.baseline = baseline_log_score(baseline_n, frame.category_count);
  return out;
}

}  // namespace hmirt
