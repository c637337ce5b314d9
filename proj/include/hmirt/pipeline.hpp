#pragma once

// Hierarchical staging: fit the underlying model jointly, then per
// participant the self-assessment model with the underlying posterior means
// as fixed inputs, then each other-assessment variant with the self
// posterior means as fixed inputs. Also the next-round training/scoring
// orchestration built on top of the staged fits.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hmirt/data.hpp"
#include "hmirt/density.hpp"
#include "hmirt/diagnostics.hpp"
#include "hmirt/sampler.hpp"
#include "hmirt/spec.hpp"

namespace hmirt {

// Posterior means of the constrained parameters, block by block.
inline NamedParams posterior_means(const ModelSpec& spec, const PosteriorDraws& draws) {
  const auto layout = make_layout(spec);
  NamedParams acc;
  for (const auto& b : layout.blocks) {
    acc[b.name] = std::vector<double>(b.tf == Transform::cholesky_corr ? b.K * b.K : b.size, 0.0);
  }
  const double inv = 1.0 / draws.total_draws();
  for (int c = 0; c < draws.chains; ++c) {
    for (int i = 0; i < draws.iters; ++i) {
      const NamedParams one = constrain(spec, draws.draw(c, i));
      for (auto& [name, sum] : acc.blocks) {
        const auto& v = one.at(name);
        for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += inv * v[k];
      }
    }
  }
  return acc;
}

struct FitRecord {
  std::string id;
  ModelSpec spec;
  PosteriorDraws draws;
  Diagnostics diag;
  NamedParams means;
  std::uint64_t seed = 0;
  bool sampled = true;  // false for the parameter-free pseudo-fit
};

// The undifferentiated model has no free parameters: its "fit" is a single
// pseudo-draw whose pointwise log-likelihood is evaluated at the fixed
// inputs.
inline FitRecord pseudo_fit(const ModelSpec& spec, const IndexedData& data, const std::string& id) {
  FitRecord rec;
  rec.id = id;
  rec.spec = spec;
  rec.sampled = false;
  rec.draws.chains = 1;
  rec.draws.iters = 1;
  rec.draws.dim = 0;
  rec.draws.n_obs = data.n_obs;
  rec.draws.pointwise.resize(data.n_obs);
  pointwise_loglik(spec, data, {}, rec.draws.pointwise);
  rec.draws.divergences = {0};
  rec.draws.step_sizes = {0.0};
  rec.draws.mean_accept = {1.0};
  return rec;
}

inline FitRecord run_fit(const ModelSpec& spec, const IndexedData& data, SamplerConfig cfg,
                         const std::string& id, std::uint64_t seed) {
  FitRecord rec;
  rec.id = id;
  rec.spec = spec;
  rec.seed = seed;
  cfg.seed = seed;
  if (make_layout(spec).dim == 0) return pseudo_fit(spec, data, id);
  rec.draws = sample(spec, data, cfg);
  rec.diag = compute_diagnostics(rec.draws);
  rec.means = posterior_means(spec, rec.draws);
  return rec;
}

inline TierSummary summarize_underlying(const FitRecord& fit, const StudyFrame& frame) {
  TierSummary s;
  s.ability = fit.means.at("ability");
  s.ability_rows = fit.spec.n_participants;
  s.K = fit.spec.n_topics;
  s.difficulty = fit.means.at("difficulty");
  s.participants = frame.participants;
  s.provenance = fit.id;
  return s;
}

inline TierSummary summarize_self(const FitRecord& fit) {
  TierSummary s;
  s.ability = fit.means.at("ability");
  s.ability_rows = 1;
  s.K = fit.spec.n_topics;
  s.difficulty = fit.means.at("difficulty");
  s.sigma = fit.means.at("sigma")[0];
  s.participants = {fit.spec.participant};
  s.provenance = fit.id;
  return s;
}

struct StageConfig {
  Dims dims = Dims::multi;
  std::vector<OtherVariant> variants = {OtherVariant::undifferentiated,
                                        OtherVariant::differentiated_by_ability,
                                        OtherVariant::fully_differentiated};
  SamplerConfig underlying_cfg = SamplerConfig::underlying_defaults();
  SamplerConfig participant_cfg = SamplerConfig::participant_defaults();
  std::uint64_t master_seed = 1;
  int threads = 1;
  ScoreKind underlying_kind = ScoreKind::true_score;
};

struct StagePlan {
  struct Item {
    std::string id;
    int wave = 0;  // 0 underlying, 1 self, 2 other
    std::string participant;
    OtherVariant variant = OtherVariant::none;
    std::uint64_t seed = 0;
  };
  std::vector<Item> items;
  StageConfig cfg;

  int total_fits() const { return static_cast<int>(items.size()); }
};

// Ordered fit plan: underlying jointly, then per-participant self fits, then
// per-participant other fits for every requested variant. Seeds are split
// from the master seed by item index, so any fit is reproducible alone.
inline StagePlan stage_hierarchy(const ResponseTable& table, const StudyFrame& frame, StageConfig cfg) {
  const auto kinds = kinds_present(table);
  for (ScoreKind k : {ScoreKind::true_score, ScoreKind::self_score, ScoreKind::other_score}) {
    if (!kinds.count(k)) {
      throw ConfigError(std::string("stage_hierarchy: data lacks score kind '") + to_string(k) + "'");
    }
  }
  if (cfg.variants.empty()) throw ConfigError("stage_hierarchy: no other-assessment variants requested");
  StagePlan plan;
  plan.cfg = cfg;
  std::uint64_t idx = 0;
  plan.items.push_back({"underlying", 0, "", OtherVariant::none, split_seed(cfg.master_seed, idx++)});
  for (const auto& p : frame.participants) {
    plan.items.push_back({"self/" + p, 1, p, OtherVariant::none, split_seed(cfg.master_seed, idx++)});
  }
  for (const auto& p : frame.participants) {
    for (OtherVariant v : cfg.variants) {
      plan.items.push_back(
          {std::string("other/") + to_string(v) + "/" + p, 2, p, v, split_seed(cfg.master_seed, idx++)});
    }
  }
  return plan;
}

struct StageResult {
  FitRecord underlying;
  std::map<std::string, FitRecord> self_fits;                          // by participant
  std::map<std::string, std::map<OtherVariant, FitRecord>> other_fits;  // by participant, variant
};

namespace detail {

template <typename Fn>
void parallel_tasks(int n_tasks, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, n_tasks));
  if (threads <= 1) {
    for (int i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(n_tasks);
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n_tasks; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

inline StageResult run_stage_plan(const StagePlan& plan, const ResponseTable& table,
                                  const StudyFrame& frame) {
  const StageConfig& cfg = plan.cfg;
  StageResult result;

  // wave 0: underlying, joint across participants
  const StagePlan::Item* underlying_item = nullptr;
  std::vector<const StagePlan::Item*> self_items, other_items;
  for (const auto& item : plan.items) {
    if (item.wave == 0) underlying_item = &item;
    if (item.wave == 1) self_items.push_back(&item);
    if (item.wave == 2) other_items.push_back(&item);
  }
  if (!underlying_item) throw ConfigError("run_stage_plan: plan lacks the underlying fit");

  {
    RowFilter f;
    f.kind = cfg.underlying_kind;
    const IndexedData data = select_observations(table, frame, f);
    ModelSpec spec = build_underlying(cfg.dims, frame, cfg.underlying_kind);
    SamplerConfig scfg = cfg.underlying_cfg;
    scfg.threads = cfg.threads;
    result.underlying = run_fit(spec, data, scfg, underlying_item->id, underlying_item->seed);
  }
  const TierSummary underlying_summary = summarize_underlying(result.underlying, frame);

  // wave 1: self fits, independent across participants
  std::vector<FitRecord> self_out(self_items.size());
  detail::parallel_tasks(static_cast<int>(self_items.size()), cfg.threads, [&](int i) {
    const auto& item = *self_items[i];
    RowFilter f;
    f.kind = ScoreKind::self_score;
    f.participant = item.participant;
    const IndexedData data = select_observations(table, frame, f, /*single_participant=*/true);
    const ModelSpec spec = build_self(cfg.dims, underlying_summary, frame, item.participant);
    self_out[i] = run_fit(spec, data, cfg.participant_cfg, item.id, item.seed);
  });
  for (std::size_t i = 0; i < self_items.size(); ++i) {
    result.self_fits.emplace(self_items[i]->participant, std::move(self_out[i]));
  }

  // wave 2: other fits, independent across (participant, variant)
  std::vector<FitRecord> other_out(other_items.size());
  detail::parallel_tasks(static_cast<int>(other_items.size()), cfg.threads, [&](int i) {
    const auto& item = *other_items[i];
    const TierSummary self_summary = summarize_self(result.self_fits.at(item.participant));
    RowFilter f;
    f.kind = ScoreKind::other_score;
    f.participant = item.participant;
    const IndexedData data = select_observations(table, frame, f, /*single_participant=*/true);
    const ModelSpec spec = build_other(item.variant, cfg.dims, self_summary, frame, item.participant);
    other_out[i] = run_fit(spec, data, cfg.participant_cfg, item.id, item.seed);
  });
  for (std::size_t i = 0; i < other_items.size(); ++i) {
    result.other_fits[other_items[i]->participant].emplace(other_items[i]->variant,
                                                           std::move(other_out[i]));
  }
  return result;
}

}  // namespace hmirt
