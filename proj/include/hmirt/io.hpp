#pragma once

// File formats: the long-format observation table (comma-separated, fixed
// header), posterior draw files (one row per retained draw, constrained
// values at full precision), and the JSON sidecar describing a fit. Field
// values must not contain commas; ids are plain tokens.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "hmirt/data.hpp"
#include "hmirt/diagnostics.hpp"
#include "hmirt/pipeline.hpp"
#include "hmirt/simulator.hpp"
#include "hmirt/spec.hpp"
#include "hmirt/version.hpp"

namespace hmirt {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kTableHeader =
    "participant_id,problem_set_id,topic,round,score_kind,score,counterpart_kind,accuracy_tier,feedback";

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline int parse_int(const std::string& s, int line_no, const char* column) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("row " + std::to_string(line_no) + ": column '" + column + "' is not an integer: '" + s + "'");
  }
  return v;
}

inline ScoreKind parse_kind(const std::string& s, int line_no) {
  if (s == "true") return ScoreKind::true_score;
  if (s == "self") return ScoreKind::self_score;
  if (s == "other") return ScoreKind::other_score;
  throw ParseError("row " + std::to_string(line_no) + ": column 'score_kind' must be true|self|other, got '" + s + "'");
}

inline Counterpart parse_counterpart(const std::string& s, int line_no) {
  if (s == "human") return Counterpart::human;
  if (s == "ai") return Counterpart::ai;
  if (s == "none" || s.empty()) return Counterpart::none;
  throw ParseError("row " + std::to_string(line_no) + ": column 'counterpart_kind' must be human|ai|none, got '" + s + "'");
}

inline AccuracyTier parse_tier(const std::string& s, int line_no) {
  if (s == "high") return AccuracyTier::high;
  if (s == "low") return AccuracyTier::low;
  if (s == "none" || s.empty()) return AccuracyTier::none;
  throw ParseError("row " + std::to_string(line_no) + ": column 'accuracy_tier' must be high|low|none, got '" + s + "'");
}

inline bool parse_feedback(const std::string& s, int line_no) {
  if (s == "yes") return true;
  if (s == "no") return false;
  throw ParseError("row " + std::to_string(line_no) + ": column 'feedback' must be yes|no, got '" + s + "'");
}

inline std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline ResponseTable ingest_stream(std::istream& in, int max_score = 12) {
  ResponseTable table;
  table.max_score = max_score;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty input: missing header");
  {
    const auto cols = detail::split_csv(line);
    const auto expect = detail::split_csv(kTableHeader);
    if (cols != expect) throw ParseError("bad header: expected '" + std::string(kTableHeader) + "'");
  }
  std::set<std::tuple<std::string, std::string, ScoreKind>> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 9) {
      throw ParseError("row " + std::to_string(line_no) + ": expected 9 columns, got " + std::to_string(f.size()));
    }
    ResponseRow row;
    row.participant = f[0];
    row.problem_set = f[1];
    row.topic = f[2];
    row.round = detail::parse_int(f[3], line_no, "round");
    row.kind = detail::parse_kind(f[4], line_no);
    row.score = detail::parse_int(f[5], line_no, "score");
    row.counterpart = detail::parse_counterpart(f[6], line_no);
    row.tier = detail::parse_tier(f[7], line_no);
    row.feedback = detail::parse_feedback(f[8], line_no);
    if (row.participant.empty() || row.problem_set.empty() || row.topic.empty()) {
      throw ParseError("row " + std::to_string(line_no) + ": empty id field");
    }
    if (row.score < 0 || row.score > table.max_score) {
      throw ValidationError("row " + std::to_string(line_no) + ": score " + std::to_string(row.score) +
                            " outside [0, " + std::to_string(table.max_score) + "]");
    }
    if (row.round < 1) {
      throw ValidationError("row " + std::to_string(line_no) + ": round must be >= 1");
    }
    if (!seen.insert({row.participant, row.problem_set, row.kind}).second) {
      throw ValidationError("row " + std::to_string(line_no) + ": duplicate (participant, problem set, score kind)");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline ResponseTable ingest(const std::string& path, int max_score = 12) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open input file: " + path);
  return ingest_stream(in, max_score);
}

inline void emit_stream(const ResponseTable& table, std::ostream& out) {
  out << kTableHeader << "\n";
  for (const auto& r : table.rows) {
    out << r.participant << ',' << r.problem_set << ',' << r.topic << ',' << r.round << ','
        << to_string(r.kind) << ',' << r.score << ',' << to_string(r.counterpart) << ','
        << to_string(r.tier) << ',' << (r.feedback ? "yes" : "no") << "\n";
  }
}

inline void emit(const ResponseTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  emit_stream(table, out);
}

// ---------------------------------------------------------------------------
// Fit persistence: draws.csv + meta.json per fit.

inline void write_draws_csv(const FitRecord& fit, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  const auto names = constrained_column_names(fit.spec);
  out << "chain,iter";
  for (const auto& n : names) out << ',' << n;
  out << "\n";
  for (int c = 0; c < fit.draws.chains; ++c) {
    for (int i = 0; i < fit.draws.iters; ++i) {
      out << c << ',' << i;
      if (fit.draws.dim > 0) {
        const auto row = constrained_row(fit.spec, fit.draws.draw(c, i));
        for (double v : row) out << ',' << detail::format_full(v);
      }
      out << "\n";
    }
  }
}

inline nlohmann::json spec_to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["tier"] = to_string(spec.tier);
  j["dims"] = to_string(spec.dims);
  if (spec.tier == Tier::other_assessment) j["variant"] = to_string(spec.variant);
  j["modeled_kind"] = to_string(spec.modeled_kind);
  j["participants"] = spec.n_participants;
  j["sets"] = spec.n_sets;
  j["topics"] = spec.n_topics;
  j["set_topic"] = spec.set_topic;
  j["categories"] = spec.category_count;
  if (!spec.participant.empty()) j["participant"] = spec.participant;
  if (!spec.fixed.ability.empty() || spec.fixed.sigma > 0.0) {
    nlohmann::json fx;
    if (!spec.fixed.ability.empty()) fx["ability"] = spec.fixed.ability;
    if (!spec.fixed.difficulty.empty()) fx["difficulty"] = spec.fixed.difficulty;
    if (spec.fixed.sigma > 0.0) fx["sigma"] = spec.fixed.sigma;
    fx["provenance"] = spec.fixed.provenance;
    j["fixed_inputs"] = fx;
  }
  return j;
}

inline nlohmann::json fit_meta_json(const FitRecord& fit, const SamplerConfig& cfg) {
  nlohmann::json j;
  j["id"] = fit.id;
  j["library_version"] = kVersion;
  j["spec"] = spec_to_json(fit.spec);
  j["seed"] = fit.seed;
  j["sampled"] = fit.sampled;
  j["config"] = {{"warmup", cfg.warmup},
                 {"samples", cfg.samples},
                 {"chains", cfg.chains},
                 {"target_acceptance", cfg.target_acceptance},
                 {"max_tree_depth", cfg.max_tree_depth}};
  j["columns"] = constrained_column_names(fit.spec);
  {
    nlohmann::json tf = nlohmann::json::array();
    for (const auto& b : make_layout(fit.spec).blocks) {
      const char* kind = b.tf == Transform::identity ? "identity"
                         : b.tf == Transform::log_positive ? "log" : "cholesky_corr";
      tf.push_back({{"block", b.name}, {"size", b.size}, {"transform", kind}});
    }
    j["transforms"] = tf;
  }
  j["step_sizes"] = fit.draws.step_sizes;
  j["mass_diag"] = fit.draws.mass_diag;
  j["divergences"] = fit.draws.divergences;
  j["mean_accept"] = fit.draws.mean_accept;
  if (fit.sampled) {
    j["diagnostics"] = {{"max_rhat", fit.diag.max_rhat()},
                        {"min_ess", fit.diag.min_ess()},
                        {"divergence_fraction", fit.diag.divergence_fraction},
                        {"converged", fit.diag.converged()}};
    nlohmann::json means;
    for (const auto& [name, v] : fit.means.blocks) means[name] = v;
    j["posterior_means"] = means;
  }
  return j;
}

inline void write_fit(const FitRecord& fit, const SamplerConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_draws_csv(fit, (dir / "draws.csv").string());
  std::ofstream meta(dir / "meta.json");
  if (!meta) throw ConfigError("cannot open output file: " + (dir / "meta.json").string());
  meta << fit_meta_json(fit, cfg).dump(2) << "\n";
}

// Reads a draws.csv back into (column names, row-major values).
inline std::pair<std::vector<std::string>, std::vector<std::vector<double>>> read_draws_csv(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open draws file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty draws file: " + path);
  auto names = detail::split_csv(line);
  if (names.size() < 2 || names[0] != "chain" || names[1] != "iter") {
    throw ParseError("bad draws header in " + path);
  }
  names.erase(names.begin(), names.begin() + 2);
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != names.size() + 2) throw ParseError("row " + std::to_string(line_no) + ": bad column count");
    std::vector<double> vals(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
      try {
        vals[i] = std::stod(f[i + 2]);
      } catch (const std::exception&) {
        throw ParseError("row " + std::to_string(line_no) + ": bad number '" + f[i + 2] + "'");
      }
    }
    rows.push_back(std::move(vals));
  }
  return {names, rows};
}

inline nlohmann::json ground_truth_json(const GroundTruth& truth) {
  nlohmann::json j;
  j["dims"] = to_string(truth.dims);
  j["variant"] = to_string(truth.variant);
  j["K"] = truth.K;
  j["J"] = truth.J;
  j["N"] = truth.N;
  j["ability"] = truth.ability;
  j["difficulty"] = truth.difficulty;
  j["sigma"] = truth.sigma;
  j["correlation"] = truth.correlation;
  j["ability_scale"] = truth.ability_scale;
  j["self_ability"] = truth.self_ability;
  j["self_difficulty"] = truth.self_difficulty;
  j["self_sigma"] = truth.self_sigma;
  if (!truth.delta.empty()) j["delta"] = truth.delta;
  j["other_ability"] = truth.other_ability;
  j["other_difficulty"] = truth.other_difficulty;
  return j;
}

}  // namespace hmirt
