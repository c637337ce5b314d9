// Command-line surface: simulate / fit / evaluate / compare / recover /
// plot-data over the long-format score table. Every run writes a bundle
// directory with a config echo; numbers in emitted tables come from bundle
// artifacts (draws or data), never from constants.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hmirt/evaluation.hpp"
#include "hmirt/experiments.hpp"
#include "hmirt/io.hpp"
#include "hmirt/pipeline.hpp"
#include "hmirt/simulator.hpp"
#include "hmirt/summaries.hpp"
#include "hmirt/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hmirt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitParse = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNonConverged = 4;

int default_threads() {
  if (const char* env = std::getenv("HMIRT_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

Dims parse_dims(const std::string& s) {
  if (s == "1" || s == "one") return Dims::one;
  if (s == "multi" || s == "md") return Dims::multi;
  throw CLI::ValidationError("--dims must be 1 or multi");
}

OtherVariant parse_variant(const std::string& s) {
  if (s == "undifferentiated" || s == "undiff") return OtherVariant::undifferentiated;
  if (s == "differentiated_by_ability" || s == "ability") return OtherVariant::differentiated_by_ability;
  if (s == "fully_differentiated" || s == "full") return OtherVariant::fully_differentiated;
  throw CLI::ValidationError("unknown variant: " + s);
}

std::vector<OtherVariant> parse_variants(const std::string& csv) {
  std::vector<OtherVariant> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_variant(item));
  }
  if (out.empty()) throw CLI::ValidationError("--variants is empty");
  return out;
}

ScoreKind parse_kind(const std::string& s) {
  if (s == "true") return ScoreKind::true_score;
  if (s == "self") return ScoreKind::self_score;
  if (s == "other") return ScoreKind::other_score;
  throw CLI::ValidationError("--kind must be true|self|other");
}

void write_json(const json& j, const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path.string());
  out << j.dump(2) << "\n";
}

void write_text(const std::string& text, const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path.string());
  out << text;
}

json score_report_json(const ScoreReport& rep) {
  json j;
  j["method"] = rep.method;
  j["total"] = rep.total;
  j["per_obs"] = rep.per_obs;
  j["n_obs"] = rep.n_obs;
  if (std::isfinite(rep.se)) j["se"] = rep.se;
  if (!rep.per_participant.empty()) {
    json pp;
    for (const auto& [id, v] : rep.per_participant) pp[id] = v;
    j["per_participant"] = pp;
  }
  if (!rep.notes.empty()) j["notes"] = rep.notes;
  return j;
}

struct CommonArgs {
  std::string input;
  std::string out;
  std::uint64_t seed = 1;
  std::string dims = "multi";
  int warmup = -1;
  int samples = -1;
  int chains = -1;
  int threads = default_threads();
  std::string gate = "strict";
};

SamplerConfig apply_overrides(SamplerConfig cfg, const CommonArgs& a) {
  if (a.warmup >= 0) cfg.warmup = a.warmup;
  if (a.samples > 0) cfg.samples = a.samples;
  if (a.chains > 0) cfg.chains = a.chains;
  return cfg;
}

json config_echo(const std::string& command, const CommonArgs& a, const json& extra = {}) {
  json j;
  j["command"] = command;
  j["library_version"] = kVersion;
  j["input"] = a.input;
  j["out"] = a.out;
  j["seed"] = a.seed;
  j["dims"] = a.dims;
  j["warmup"] = a.warmup;
  j["samples"] = a.samples;
  j["chains"] = a.chains;
  j["threads"] = a.threads;
  j["gate"] = a.gate;
  if (!extra.is_null()) j["extra"] = extra;
  return j;
}

// Writes one staged-fit bundle; returns whether every sampled fit converged.
bool write_stage_bundle(const StageResult& result, const StageConfig& cfg, const fs::path& out) {
  bool ok = true;
  write_fit(result.underlying, cfg.underlying_cfg, out / "underlying");
  ok &= !result.underlying.sampled || result.underlying.diag.converged();
  for (const auto& [p, fit] : result.self_fits) {
    write_fit(fit, cfg.participant_cfg, out / "self" / p);
    ok &= fit.diag.converged();
  }
  for (const auto& [p, by_variant] : result.other_fits) {
    for (const auto& [v, fit] : by_variant) {
      write_fit(fit, cfg.participant_cfg, out / "other" / to_string(v) / p);
      ok &= !fit.sampled || fit.diag.converged();
    }
  }
  return ok;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const CommonArgs& a, int participants, const std::string& structure,
                 const std::string& delta_csv, double correlation, const std::string& counterpart,
                 const std::string& feedback) {
  ExperimentDesign design;
  design.participant_count = participants;
  design.master_seed = a.seed;
  std::vector<ExperimentDesign::Condition> conds;
  const std::vector<Counterpart> cps = counterpart == "mixed"
                                           ? std::vector<Counterpart>{Counterpart::ai, Counterpart::human}
                                           : std::vector<Counterpart>{counterpart == "ai" ? Counterpart::ai
                                                                                          : Counterpart::human};
  const std::vector<bool> fbs = feedback == "mixed" ? std::vector<bool>{true, false}
                                                    : std::vector<bool>{feedback == "yes"};
  for (Counterpart cp : cps) {
    for (bool fb : fbs) conds.push_back({cp, AccuracyTier::high, fb});
  }
  design.conditions = conds;

  SimParams params;
  params.dims = parse_dims(a.dims);
  params.variant = parse_variant(structure);
  if (!delta_csv.empty()) {
    std::stringstream ss(delta_csv);
    std::string item;
    while (std::getline(ss, item, ',')) params.delta_mean.push_back(std::stod(item));
  }
  if (correlation != 0.0) {
    const int K = design.n_topics();
    params.correlation.assign(static_cast<std::size_t>(K) * K, correlation);
    for (int k = 0; k < K; ++k) params.correlation[k * K + k] = 1.0;
  }

  const auto sim = simulate_experiment(design, params);
  const fs::path out(a.out);
  fs::create_directories(out);
  emit(sim.table, (out / "data.csv").string());
  write_json(ground_truth_json(sim.truth), out / "truth.json");
  write_json(config_echo("simulate", a,
                         json{{"participants", participants},
                              {"structure", structure},
                              {"delta", delta_csv},
                              {"correlation", correlation}}),
             out / "config.json");
  std::cout << "simulated " << sim.table.rows.size() << " rows for " << participants
            << " participants -> " << (out / "data.csv").string() << "\n";
  return kExitOk;
}

int cmd_fit(const CommonArgs& a, const std::string& variants_csv, const std::string& tiers) {
  const auto table = ingest(a.input);
  const auto frame = build_frame(table);
  const fs::path out(a.out);
  fs::create_directories(out);
  emit(table, (out / "data.csv").string());

  StageConfig cfg;
  cfg.dims = parse_dims(a.dims);
  cfg.variants = parse_variants(variants_csv);
  cfg.underlying_cfg = apply_overrides(SamplerConfig::underlying_defaults(), a);
  cfg.participant_cfg = apply_overrides(SamplerConfig::participant_defaults(), a);
  cfg.master_seed = a.seed;
  cfg.threads = a.threads;

  bool converged = true;
  json status;
  if (tiers == "underlying") {
    RowFilter f;
    f.kind = ScoreKind::true_score;
    const IndexedData data = select_observations(table, frame, f);
    SamplerConfig scfg = cfg.underlying_cfg;
    scfg.threads = a.threads;
    const FitRecord fit = run_fit(build_underlying(cfg.dims, frame), data, scfg, "underlying",
                                  split_seed(cfg.master_seed, 0));
    write_fit(fit, scfg, out / "underlying");
    converged = fit.diag.converged();
    status["fits"] = 1;
  } else {
    const StagePlan plan = stage_hierarchy(table, frame, cfg);
    const StageResult result = run_stage_plan(plan, table, frame);
    converged = write_stage_bundle(result, cfg, out);
    status["fits"] = plan.total_fits();
  }
  status["converged"] = converged;
  status["gate"] = a.gate;
  write_json(status, out / "status.json");
  write_json(config_echo("fit", a, json{{"variants", variants_csv}, {"tiers", tiers}}), out / "config.json");

  if (!converged && a.gate == "strict") {
    std::cerr << "convergence gate failed (R-hat > 1.01 or ESS < 100); partial outputs kept in " << a.out
              << "\n";
    return kExitNonConverged;
  }
  std::cout << "fit bundle written to " << a.out << (converged ? "" : " (non-converged, gate off)") << "\n";
  return kExitOk;
}

int cmd_evaluate(const CommonArgs& a, const std::string& methods_csv, int rounds_heldout,
                 bool round1_prior, const std::string& kind_s) {
  const auto table = ingest(a.input);
  const auto frame = build_frame(table);
  const fs::path out(a.out);
  fs::create_directories(out / "reports");
  emit(table, (out / "data.csv").string());

  std::set<std::string> methods;
  {
    std::stringstream ss(methods_csv);
    std::string item;
    while (std::getline(ss, item, ',')) methods.insert(item);
  }
  const ScoreKind kind = parse_kind(kind_s);
  json reports;
  bool converged = true;

  if (methods.count("baseline")) {
    RowFilter f;
    f.kind = kind;
    const auto data = select_observations(table, frame, f);
    const auto rep = baseline_log_score(data.n_obs, frame.category_count);
    reports["baseline"] = score_report_json(rep);
    std::ostringstream csv;
    csv << "method,n_obs,total,per_obs\nbaseline," << rep.n_obs << ',' << rep.total << ',' << rep.per_obs
        << "\n";
    write_text(csv.str(), out / "reports" / "baseline.csv");
  }

  const bool need_heldout = methods.count("heldout") > 0;
  const bool need_ic = methods.count("waic") + methods.count("loo") > 0;
  if (need_heldout || need_ic) {
    SamplerConfig cfg = apply_overrides(SamplerConfig::underlying_defaults(), a);
    cfg.threads = a.threads;
    if (need_heldout) {
      const auto cmp = compare_dimensionality(table, frame, kind, rounds_heldout, cfg, a.seed);
      converged &= cmp.one_dim_fit.diag.converged() && cmp.multi_dim_fit.diag.converged();
      write_fit(cmp.one_dim_fit, cfg, out / "heldout" / "one_dim");
      write_fit(cmp.multi_dim_fit, cfg, out / "heldout" / "multi_dim");
      reports["heldout"] = {{"baseline", score_report_json(cmp.baseline)},
                            {"one_dim", score_report_json(cmp.one_dim)},
                            {"multi_dim", score_report_json(cmp.multi_dim)}};
      std::ostringstream csv;
      csv << "model,n_obs,total,per_obs\n";
      csv << "baseline," << cmp.baseline.n_obs << ',' << cmp.baseline.total << ',' << cmp.baseline.per_obs << "\n";
      csv << "one-dimensional," << cmp.one_dim.n_obs << ',' << cmp.one_dim.total << ',' << cmp.one_dim.per_obs << "\n";
      csv << "multidimensional," << cmp.multi_dim.n_obs << ',' << cmp.multi_dim.total << ',' << cmp.multi_dim.per_obs << "\n";
      write_text(csv.str(), out / "reports" / "heldout.csv");
    }
    if (need_ic) {
      RowFilter f;
      f.kind = kind;
      const auto data = select_observations(table, frame, f);
      const auto spec = build_underlying(parse_dims(a.dims), frame, kind);
      cfg.seed = split_seed(a.seed, 17);
      const FitRecord fit = run_fit(spec, data, cfg, "ic", cfg.seed);
      converged &= fit.diag.converged();
      write_fit(fit, cfg, out / "ic" / (a.dims == "1" ? "one_dim" : "multi_dim"));
      const auto pw = compute_pointwise(spec, fit.draws, data, &frame.participants);
      std::ostringstream csv;
      csv << "method,n_obs,total,per_obs,se\n";
      if (methods.count("waic")) {
        const auto rep = waic(pw);
        reports["waic"] = score_report_json(rep);
        csv << "waic," << rep.n_obs << ',' << rep.total << ',' << rep.per_obs << ',' << rep.se << "\n";
      }
      if (methods.count("loo")) {
        const auto rep = psis_loo(pw);
        reports["loo"] = score_report_json(rep);
        csv << "psis-loo," << rep.n_obs << ',' << rep.total << ',' << rep.per_obs << ',' << rep.se << "\n";
        int high_k = 0;
        for (double k : rep.pareto_k) high_k += k > 0.7;
        reports["loo"]["high_pareto_k"] = high_k;
      }
      write_text(csv.str(), out / "reports" / "information_criteria.csv");
    }
  }

  if (methods.count("next-round")) {
    NextRoundOptions opt;
    opt.dims = parse_dims(a.dims);
    opt.underlying_cfg = apply_overrides(SamplerConfig::underlying_defaults(), a);
    opt.participant_cfg = apply_overrides(SamplerConfig::participant_defaults(), a);
    opt.seed = a.seed;
    opt.threads = a.threads;
    opt.include_round1_prior = round1_prior;
    const auto scores = next_round_log_lik(table, frame, opt);
    json j;
    std::ostringstream csv;
    csv << "model,n_obs,total,per_obs\n";
    csv << "baseline," << scores.baseline.n_obs << ',' << scores.baseline.total << ','
        << scores.baseline.per_obs << "\n";
    for (const auto& [v, per_obs] : scores.per_obs) {
      j[to_string(v)] = {{"per_obs", per_obs}, {"total", scores.total.at(v)}, {"n_obs", scores.n_obs.at(v)}};
      csv << to_string(v) << ',' << scores.n_obs.at(v) << ',' << scores.total.at(v) << ',' << per_obs << "\n";
    }
    j["baseline"] = score_report_json(scores.baseline);
    reports["next_round"] = j;
    write_text(csv.str(), out / "reports" / "next_round.csv");
  }

  if (methods.count("empirical")) {
    const auto summary = empirical_summary(table);
    json j;
    std::ostringstream csv;
    csv << "counterpart,feedback,n_pairs,mean_diff,t,p,reject\n";
    for (const auto& c : summary.conditions) {
      json cj;
      cj["counterpart"] = to_string(c.key.counterpart);
      cj["feedback"] = c.key.feedback;
      cj["n_pairs"] = c.n_pairs;
      cj["mean_diff"] = c.mean_diff;
      cj["t"] = c.mean_positive.t;
      cj["p"] = c.mean_positive.p;
      cj["reject_mean_positive"] = c.mean_positive.reject;
      j["conditions"].push_back(cj);
      csv << to_string(c.key.counterpart) << ',' << (c.key.feedback ? "yes" : "no") << ',' << c.n_pairs
          << ',' << c.mean_diff << ',' << c.mean_positive.t << ',' << c.mean_positive.p << ','
          << (c.mean_positive.reject ? 1 : 0) << "\n";
    }
    for (const auto& [fb, tt] : summary.ai_above_human) {
      j["ai_above_human"][fb ? "feedback" : "no_feedback"] = {{"t", tt.t}, {"df", tt.df}, {"p", tt.p},
                                                              {"reject", tt.reject}};
    }
    for (const auto& n : summary.notices) j["notices"].push_back(n);
    reports["empirical"] = j;
    write_text(csv.str(), out / "reports" / "empirical.csv");
  }

  write_json(reports, out / "reports" / "reports.json");
  write_json(config_echo("evaluate", a,
                         json{{"methods", methods_csv},
                              {"rounds_heldout", rounds_heldout},
                              {"round1_prior", round1_prior},
                              {"kind", kind_s}}),
             out / "config.json");
  std::cout << "evaluation reports written to " << (out / "reports").string() << "\n";
  if (!converged && a.gate == "strict") {
    std::cerr << "convergence gate failed; reports kept\n";
    return kExitNonConverged;
  }
  return kExitOk;
}

int cmd_compare(const CommonArgs& a, const std::string& mode, int rounds_heldout, bool by_counterpart) {
  const auto table = ingest(a.input);
  const fs::path out(a.out);
  fs::create_directories(out / "reports");
  emit(table, (out / "data.csv").string());

  std::vector<std::pair<std::string, Counterpart>> groups;
  if (by_counterpart) {
    groups = {{"humans", Counterpart::human}, {"ai", Counterpart::ai}};
  } else {
    groups = {{"all", Counterpart::none}};
  }

  bool converged = true;
  json reports;

  if (mode == "dims") {
    // held-out final-round comparison of baseline / 1D / MD on
    // other-assessment data, per counterpart group
    std::ostringstream csv;
    csv << "model";
    for (const auto& [label, cp] : groups) csv << ',' << label;
    csv << "\n";
    std::map<std::string, std::map<std::string, double>> cells;
    for (const auto& [label, cp] : groups) {
      ResponseTable slice;
      slice.max_score = table.max_score;
      for (const auto& r : table.rows) {
        if (cp == Counterpart::none || r.counterpart == cp) slice.rows.push_back(r);
      }
      if (slice.rows.empty()) continue;
      const auto frame = build_frame(slice);
      SamplerConfig cfg = apply_overrides(SamplerConfig::underlying_defaults(), a);
      cfg.threads = a.threads;
      const auto cmp = compare_dimensionality(slice, frame, ScoreKind::other_score, rounds_heldout, cfg,
                                              split_seed(a.seed, std::hash<std::string>{}(label)));
      converged &= cmp.one_dim_fit.diag.converged() && cmp.multi_dim_fit.diag.converged();
      write_fit(cmp.one_dim_fit, cfg, out / label / "one_dim");
      write_fit(cmp.multi_dim_fit, cfg, out / label / "multi_dim");
      cells["baseline"][label] = cmp.baseline.per_obs;
      cells["one-dimensional"][label] = cmp.one_dim.per_obs;
      cells["multidimensional"][label] = cmp.multi_dim.per_obs;
      // WAIC / LOO on the training fit, per the appendix-style tables
      RowFilter f;
      f.kind = ScoreKind::other_score;
      f.max_round = frame.max_round - rounds_heldout;
      const auto train = select_observations(slice, frame, f);
      const auto pw_md = compute_pointwise(cmp.multi_dim_fit.spec, cmp.multi_dim_fit.draws, train,
                                           &frame.participants);
      const auto pw_1d = compute_pointwise(cmp.one_dim_fit.spec, cmp.one_dim_fit.draws, train,
                                           &frame.participants);
      reports[label] = {{"heldout",
                         {{"baseline", score_report_json(cmp.baseline)},
                          {"one_dim", score_report_json(cmp.one_dim)},
                          {"multi_dim", score_report_json(cmp.multi_dim)}}},
                        {"waic",
                         {{"one_dim", score_report_json(waic(pw_1d))},
                          {"multi_dim", score_report_json(waic(pw_md))},
                          {"baseline_total", baseline_log_score(train.n_obs, frame.category_count).total}}},
                        {"loo",
                         {{"one_dim", score_report_json(psis_loo(pw_1d))},
                          {"multi_dim", score_report_json(psis_loo(pw_md))}}}};
    }
    for (const auto& model : {"baseline", "one-dimensional", "multidimensional"}) {
      csv << model;
      for (const auto& [label, cp] : groups) {
        csv << ',';
        if (cells[model].count(label)) csv << cells[model][label];
      }
      csv << "\n";
    }
    write_text(csv.str(), out / "reports" / "compare_dims.csv");
  } else if (mode == "structures") {
    // next-round log-likelihood of the three structures, per group, plus
    // the per-topic differential table
    std::ostringstream csv;
    csv << "model";
    for (const auto& [label, cp] : groups) csv << ',' << label;
    csv << "\n";
    std::map<std::string, std::map<std::string, double>> cells;
    std::map<std::string, std::vector<double>> delta_by_group;
    for (const auto& [label, cp] : groups) {
      ResponseTable slice;
      slice.max_score = table.max_score;
      for (const auto& r : table.rows) {
        if (cp == Counterpart::none || r.counterpart == cp) slice.rows.push_back(r);
      }
      if (slice.rows.empty()) continue;
      const auto frame = build_frame(slice);
      NextRoundOptions opt;
      opt.dims = parse_dims(a.dims);
      opt.underlying_cfg = apply_overrides(SamplerConfig::underlying_defaults(), a);
      opt.participant_cfg = apply_overrides(SamplerConfig::participant_defaults(), a);
      opt.seed = split_seed(a.seed, std::hash<std::string>{}(label));
      opt.threads = a.threads;
      const auto scores = next_round_log_lik(slice, frame, opt);
      cells["baseline"][label] = scores.baseline.per_obs;
      for (const auto& [v, per_obs] : scores.per_obs) cells[to_string(v)][label] = per_obs;

      // per-topic differential averaged over participants (full-data staged fit)
      StageConfig scfg;
      scfg.dims = opt.dims;
      scfg.variants = {OtherVariant::differentiated_by_ability};
      scfg.underlying_cfg = opt.underlying_cfg;
      scfg.participant_cfg = opt.participant_cfg;
      scfg.master_seed = split_seed(opt.seed, 91);
      scfg.threads = a.threads;
      const auto stage = run_stage_plan(stage_hierarchy(slice, frame, scfg), slice, frame);
      std::vector<double> delta_mean(frame.n_topics(), 0.0);
      for (const auto& [p, fits] : stage.other_fits) {
        const auto& fit = fits.at(OtherVariant::differentiated_by_ability);
        const auto ds = delta_summary(fit.draws, fit.spec);
        for (int k = 0; k < frame.n_topics(); ++k) delta_mean[k] += ds.mean[k] / stage.other_fits.size();
        converged &= fit.diag.converged();
      }
      delta_by_group[label] = delta_mean;
      json dj;
      for (int k = 0; k < frame.n_topics(); ++k) dj[frame.topics[k]] = delta_mean[k];
      reports[label] = {{"next_round", json::object()}, {"delta", dj}};
      reports[label]["next_round"]["baseline"] = scores.baseline.per_obs;
      for (const auto& [v, per_obs] : scores.per_obs) reports[label]["next_round"][to_string(v)] = per_obs;
    }
    for (const auto& model :
         {"baseline", "undifferentiated", "differentiated_by_ability", "fully_differentiated"}) {
      csv << model;
      for (const auto& [label, cp] : groups) {
        csv << ',';
        if (cells.count(model) && cells[model].count(label)) csv << cells[model][label];
      }
      csv << "\n";
    }
    write_text(csv.str(), out / "reports" / "compare_structures.csv");
    if (!delta_by_group.empty()) {
      std::ostringstream dcsv;
      dcsv << "topic";
      for (const auto& [label, d] : delta_by_group) dcsv << ',' << label;
      dcsv << "\n";
      const auto frame = build_frame(table);
      for (int k = 0; k < frame.n_topics(); ++k) {
        dcsv << frame.topics[k];
        for (const auto& [label, d] : delta_by_group) dcsv << ',' << d[k];
        dcsv << "\n";
      }
      write_text(dcsv.str(), out / "reports" / "deltas.csv");
    }
  } else {
    throw CLI::ValidationError("--mode must be dims or structures");
  }

  write_json(reports, out / "reports" / "compare.json");
  write_json(config_echo("compare", a, json{{"mode", mode}, {"by_counterpart", by_counterpart}}),
             out / "config.json");
  std::cout << "comparison written to " << (out / "reports").string() << "\n";
  if (!converged && a.gate == "strict") {
    std::cerr << "convergence gate failed; reports kept\n";
    return kExitNonConverged;
  }
  return kExitOk;
}

int cmd_recover(const CommonArgs& a, const std::string& structure, int participants, double corr,
                const std::string& delta_csv) {
  ExperimentDesign design;
  design.participant_count = participants;
  design.master_seed = a.seed;
  SimParams params;
  params.dims = parse_dims(a.dims);
  params.variant = parse_variant(structure);
  if (!delta_csv.empty()) {
    std::stringstream ss(delta_csv);
    std::string item;
    while (std::getline(ss, item, ',')) params.delta_mean.push_back(std::stod(item));
  } else if (params.variant == OtherVariant::differentiated_by_ability) {
    params.delta_mean.assign(design.n_topics(), 1.0);
  }
  if (corr != 0.0) {
    const int K = design.n_topics();
    params.correlation.assign(static_cast<std::size_t>(K) * K, corr);
    for (int k = 0; k < K; ++k) params.correlation[k * K + k] = 1.0;
  }
  const auto sim = simulate_experiment(design, params);
  const auto frame = build_frame(sim.table);
  const auto truth = reorder_truth_to_frame(sim.truth, design, frame);
  const fs::path out(a.out);
  fs::create_directories(out);
  emit(sim.table, (out / "data.csv").string());
  write_json(ground_truth_json(sim.truth), out / "truth.json");

  StageConfig cfg;
  cfg.dims = params.dims;
  cfg.underlying_cfg = apply_overrides(SamplerConfig::underlying_defaults(), a);
  cfg.participant_cfg = apply_overrides(SamplerConfig::participant_defaults(), a);
  cfg.master_seed = split_seed(a.seed, 1000);
  cfg.threads = a.threads;
  const auto stage = run_stage_plan(stage_hierarchy(sim.table, frame, cfg), sim.table, frame);
  const bool converged = write_stage_bundle(stage, cfg, out);

  json rec;
  // ability recovery: correlation between posterior means and truth,
  // compared in the frame's topic order
  {
    const auto& est = stage.underlying.means.at("ability");
    const auto& tru = truth.ability;
    const int n = static_cast<int>(est.size());
    double me = mean(est), mt = mean(tru);
    double se = 0, st = 0, sc = 0;
    for (int i = 0; i < n; ++i) {
      se += (est[i] - me) * (est[i] - me);
      st += (tru[i] - mt) * (tru[i] - mt);
      sc += (est[i] - me) * (tru[i] - mt);
    }
    rec["ability_correlation"] = sc / std::sqrt(se * st);
  }
  if (cfg.dims == Dims::multi) {
    const auto cs = extract_correlations(stage.underlying.draws, stage.underlying.spec);
    double max_err = 0.0;
    for (int r = 0; r < cs.K; ++r) {
      for (int c = 0; c < cs.K; ++c) {
        max_err = std::max(max_err, std::fabs(cs.at(r, c) - truth.correlation[r * cs.K + c]));
      }
    }
    rec["correlation_max_error"] = max_err;
    rec["correlation_estimate"] = cs.R;
  }
  if (params.variant == OtherVariant::differentiated_by_ability) {
    std::vector<double> est(frame.n_topics(), 0.0), truth_mean(frame.n_topics(), 0.0);
    for (const auto& [p, fits] : stage.other_fits) {
      const auto& fit = fits.at(OtherVariant::differentiated_by_ability);
      const auto ds = delta_summary(fit.draws, fit.spec);
      const int row = frame.participant_of(p);
      for (int k = 0; k < frame.n_topics(); ++k) {
        est[k] += ds.mean[k] / frame.n_participants();
        truth_mean[k] += truth.delta[static_cast<std::size_t>(row) * frame.n_topics() + k] /
                         frame.n_participants();
      }
    }
    double max_err = 0.0;
    for (int k = 0; k < frame.n_topics(); ++k) max_err = std::max(max_err, std::fabs(est[k] - truth_mean[k]));
    rec["delta_estimate"] = est;
    rec["delta_truth_mean"] = truth_mean;
    rec["delta_max_error"] = max_err;
  }
  rec["converged"] = converged;
  write_json(rec, out / "recovery.json");
  write_json(config_echo("recover", a,
                         json{{"structure", structure}, {"participants", participants}, {"correlation", corr}}),
             out / "config.json");
  std::cout << "recovery summary written to " << (out / "recovery.json").string() << "\n";
  if (!converged && a.gate == "strict") return kExitNonConverged;
  return kExitOk;
}

int cmd_plot_data(const std::string& bundle, const std::string& kind, const std::string& out_file) {
  const fs::path b(bundle);
  std::ostringstream csv;
  if (kind == "fig4") {
    const auto table = ingest((b / "data.csv").string());
    const auto summary = empirical_summary(table);
    csv << "counterpart,feedback,difference,count\n";
    for (const auto& c : summary.conditions) {
      for (const auto& [d, n] : c.diff_histogram) {
        csv << to_string(c.key.counterpart) << ',' << (c.key.feedback ? "yes" : "no") << ',' << d << ','
            << n << "\n";
      }
    }
  } else if (kind == "fig5") {
    const auto table = ingest((b / "data.csv").string());
    const auto summary = empirical_summary(table);
    csv << "counterpart,feedback,position,self_smoothed,other_smoothed\n";
    for (const auto& c : summary.conditions) {
      for (std::size_t i = 0; i < c.self_curve.size(); ++i) {
        csv << to_string(c.key.counterpart) << ',' << (c.key.feedback ? "yes" : "no") << ',' << i + 1 << ','
            << c.self_curve[i] << ',' << c.other_curve[i] << "\n";
      }
    }
  } else if (kind == "fig6") {
    // correlation matrix from a multidimensional fit in the bundle
    fs::path fit_dir;
    for (const auto& cand :
         {b / "underlying", b / "ai" / "multi_dim", b / "humans" / "multi_dim", b / "heldout" / "multi_dim"}) {
      if (fs::exists(cand / "draws.csv")) {
        fit_dir = cand;
        break;
      }
    }
    if (fit_dir.empty()) throw ConfigError("fig6: no multidimensional fit found in bundle");
    std::ifstream meta_in(fit_dir / "meta.json");
    if (!meta_in) throw ConfigError("fig6: missing meta.json in " + fit_dir.string());
    json meta;
    meta_in >> meta;
    ModelSpec spec;
    spec.tier = Tier::underlying;
    spec.dims = Dims::multi;
    spec.n_participants = meta["spec"]["participants"];
    spec.n_sets = meta["spec"]["sets"];
    spec.n_topics = meta["spec"]["topics"];
    spec.set_topic = meta["spec"]["set_topic"].get<std::vector<int>>();
    spec.category_count = meta["spec"]["categories"];
    const auto layout = make_layout(spec);
    const auto [names, rows] = read_draws_csv((fit_dir / "draws.csv").string());
    if (static_cast<int>(names.size()) != static_cast<int>(constrained_column_names(spec).size())) {
      throw ConfigError("fig6: draws file does not match the spec in meta.json");
    }
    // rebuild unconstrained draws from the constrained rows
    PosteriorDraws draws;
    draws.chains = 1;
    draws.iters = static_cast<int>(rows.size());
    draws.dim = layout.dim;
    draws.draws.resize(static_cast<std::size_t>(rows.size()) * layout.dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      NamedParams named;
      std::size_t col = 0;
      for (const auto& blk : layout.blocks) {
        if (blk.tf == Transform::cholesky_corr) {
          std::vector<double> L(static_cast<std::size_t>(blk.K) * blk.K, 0.0);
          for (int r = 0; r < blk.K; ++r) {
            for (int c = 0; c <= r; ++c) L[r * blk.K + c] = rows[i][col++];
          }
          named[blk.name] = L;
        } else {
          std::vector<double> v(blk.size);
          for (int k = 0; k < blk.size; ++k) v[k] = rows[i][col++];
          named[blk.name] = v;
        }
      }
      const auto q = unconstrain(spec, named);
      std::copy(q.begin(), q.end(), draws.draws.begin() + i * layout.dim);
    }
    const auto cs = extract_correlations(draws, spec);
    csv << "row,col,correlation\n";
    for (int r = 0; r < cs.K; ++r) {
      for (int c = 0; c < cs.K; ++c) csv << r << ',' << c << ',' << cs.at(r, c) << "\n";
    }
  } else if (kind == "fig7") {
    // per-round, per-topic mean other-assessment
    const auto table = ingest((b / "data.csv").string());
    const auto frame = build_frame(table);
    std::map<std::pair<int, std::string>, std::pair<double, int>> acc;
    for (const auto& r : table.rows) {
      if (r.kind != ScoreKind::other_score) continue;
      auto& a = acc[{r.round, r.topic}];
      a.first += r.score;
      a.second += 1;
    }
    csv << "round,topic,mean_other_assessment,n\n";
    for (const auto& [key, a] : acc) {
      csv << key.first << ',' << key.second << ',' << a.first / a.second << ',' << a.second << "\n";
    }
  } else {
    throw CLI::ValidationError("--kind must be fig4|fig5|fig6|fig7");
  }
  write_text(csv.str(), out_file);
  std::cout << "plot data written to " << out_file << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical Bayesian IRT engine for self/other assessment data"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonArgs a;
  int participants = 8;
  std::string structure = "differentiated_by_ability";
  std::string delta_csv;
  double correlation = 0.0;
  std::string counterpart = "ai";
  std::string feedback = "yes";
  std::string variants_csv = "undifferentiated,differentiated_by_ability,fully_differentiated";
  std::string tiers = "hierarchy";
  std::string methods = "baseline";
  std::string kind_s = "other";
  int rounds_heldout = 1;
  bool round1_prior = false;
  bool by_counterpart = false;
  std::string mode = "dims";
  std::string bundle, fig_kind, out_file;

  auto add_common = [&](CLI::App* cmd, bool needs_input) {
    if (needs_input) cmd->add_option("--input", a.input, "input table (csv)")->required();
    cmd->add_option("--out", a.out, "output bundle directory")->required();
    cmd->add_option("--seed", a.seed, "master seed (required for fits)")->required();
    cmd->add_option("--dims", a.dims, "dimensionality: 1 or multi");
    cmd->add_option("--warmup", a.warmup, "warmup iterations override");
    cmd->add_option("--samples", a.samples, "retained samples override");
    cmd->add_option("--chains", a.chains, "chain count override");
    cmd->add_option("--threads", a.threads, "worker threads (default HMIRT_THREADS or hardware)");
    cmd->add_option("--gate", a.gate, "convergence gate: strict or off")
        ->check(CLI::IsMember({"strict", "off"}));
  };

  auto* sim = app.add_subcommand("simulate", "generate a synthetic experiment with a ground-truth manifest");
  add_common(sim, false);
  sim->add_option("--participants", participants, "number of participants");
  sim->add_option("--structure", structure, "other-assessment structure");
  sim->add_option("--delta", delta_csv, "per-topic differential means, comma separated");
  sim->add_option("--correlation", correlation, "off-diagonal ability correlation");
  sim->add_option("--counterpart", counterpart, "ai, human, or mixed")
      ->check(CLI::IsMember({"ai", "human", "mixed"}));
  sim->add_option("--feedback", feedback, "yes, no, or mixed")->check(CLI::IsMember({"yes", "no", "mixed"}));

  auto* fit = app.add_subcommand("fit", "staged hierarchical fits");
  add_common(fit, true);
  fit->add_option("--variants", variants_csv, "other-assessment variants, comma separated");
  fit->add_option("--tiers", tiers, "hierarchy (all tiers) or underlying only")
      ->check(CLI::IsMember({"hierarchy", "underlying"}));

  auto* eva = app.add_subcommand("evaluate", "scoring reports");
  add_common(eva, true);
  eva->add_option("--methods", methods, "baseline,heldout,waic,loo,next-round,empirical");
  eva->add_option("--rounds-heldout", rounds_heldout, "final rounds held out");
  eva->add_flag("--round1-prior", round1_prior, "score round 1 under the prior predictive");
  eva->add_option("--kind", kind_s, "score kind to model: true|self|other");

  auto* cmp = app.add_subcommand("compare", "side-by-side model tables");
  add_common(cmp, true);
  cmp->add_option("--mode", mode, "dims or structures")->check(CLI::IsMember({"dims", "structures"}));
  cmp->add_option("--rounds-heldout", rounds_heldout, "final rounds held out (dims mode)");
  cmp->add_flag("--by-counterpart", by_counterpart, "split columns by counterpart kind");

  auto* rec = app.add_subcommand("recover", "simulate, refit, and compare against the ground truth");
  add_common(rec, false);
  rec->add_option("--structure", structure, "generative other-assessment structure");
  rec->add_option("--participants", participants, "number of participants");
  rec->add_option("--correlation", correlation, "off-diagonal ability correlation");
  rec->add_option("--delta", delta_csv, "per-topic differential means");

  auto* plot = app.add_subcommand("plot-data", "emit figure series from a bundle");
  plot->add_option("--bundle", bundle, "bundle directory")->required();
  plot->add_option("--kind", fig_kind, "fig4|fig5|fig6|fig7")->required();
  plot->add_option("--out", out_file, "output csv path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(a, participants, structure, delta_csv, correlation, counterpart, feedback);
    if (fit->parsed()) return cmd_fit(a, variants_csv, tiers);
    if (eva->parsed()) return cmd_evaluate(a, methods, rounds_heldout, round1_prior, kind_s);
    if (cmp->parsed()) return cmd_compare(a, mode, rounds_heldout, by_counterpart);
    if (rec->parsed()) return cmd_recover(a, structure, participants, correlation, delta_csv);
    if (plot->parsed()) return cmd_plot_data(bundle, fig_kind, out_file);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
