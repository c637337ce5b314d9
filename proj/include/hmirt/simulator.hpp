#pragma once

// Forward generator of synthetic experiments: randomized schedules under the
// design's constraints (one set per topic per round, topic order drawn once
// per participant), true scores from the underlying model, and self/other
// assessments from a chosen hierarchical structure. Emits a ground-truth
// manifest sufficient to recompute every simulated score distribution.

#include <cmath>
#include <string>
#include <vector>

#include "hmirt/data.hpp"
#include "hmirt/ordered_probit.hpp"
#include "hmirt/rng.hpp"
#include "hmirt/spec.hpp"

namespace hmirt {

struct ExperimentDesign {
  std::vector<std::string> topics = {"History of Art", "Video Games", "Cities", "Math"};
  int rounds = 4;
  int sets_per_topic = 4;
  int questions_per_set = 12;  // V; scores in [0, V]
  int participant_count = 1;
  struct Condition {
    Counterpart counterpart = Counterpart::ai;
    AccuracyTier tier = AccuracyTier::high;
    bool feedback = true;
  };
  std::vector<Condition> conditions;  // per participant, cycled when shorter
  std::uint64_t master_seed = 1;

  int n_topics() const { return static_cast<int>(topics.size()); }
  int n_sets() const { return n_topics() * sets_per_topic; }
  int category_count() const { return questions_per_set + 1; }

  void validate() const {
    if (topics.empty() || rounds < 1 || questions_per_set < 1 || participant_count < 1) {
      throw ConfigError("ExperimentDesign: counts must be positive");
    }
    if (sets_per_topic != rounds) {
      throw ConfigError("ExperimentDesign: each round takes one set per topic, so sets_per_topic must equal rounds");
    }
  }

  Condition condition_of(int participant) const {
    if (conditions.empty()) return Condition{};
    return conditions[participant % conditions.size()];
  }

  std::string participant_id(int i) const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%03d", i);
    return buf;
  }
  // canonical set index: topic t, copy k -> t * sets_per_topic + k;
  // zero-padded so lexicographic order matches the canonical order
  std::string set_id(int topic, int k) const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ps%02d_%02d", topic, k);
    return buf;
  }
};

struct ScheduleEntry {
  int round = 0;     // 1-based
  int position = 0;  // 0-based within round
  int topic = 0;
  int set = 0;  // canonical set index
};

// Per-participant randomization: topic order drawn once and held constant
// across rounds; each topic's sets permuted across rounds.
inline std::vector<ScheduleEntry> randomize_schedule(const ExperimentDesign& design, int participant) {
  design.validate();
  Rng rng(split_seed(design.master_seed, 0x5EED0000ull + participant));
  const int K = design.n_topics();
  std::vector<int> topic_order(K);
  for (int k = 0; k < K; ++k) topic_order[k] = k;
  rng.shuffle(std::span<int>(topic_order));
  std::vector<std::vector<int>> set_order(K);
  for (int t = 0; t < K; ++t) {
    set_order[t].resize(design.rounds);
    for (int r = 0; r < design.rounds; ++r) set_order[t][r] = r;
    rng.shuffle(std::span<int>(set_order[t]));
  }
  std::vector<ScheduleEntry> schedule;
  schedule.reserve(design.rounds * K);
  for (int r = 0; r < design.rounds; ++r) {
    for (int pos = 0; pos < K; ++pos) {
      const int topic = topic_order[pos];
      schedule.push_back({r + 1, pos, topic, topic * design.sets_per_topic + set_order[topic][r]});
    }
  }
  return schedule;
}

// Every generative parameter used, keyed the way the fits name them.
struct GroundTruth {
  int K = 1, J = 0, N = 0;
  Dims dims = Dims::multi;
  OtherVariant variant = OtherVariant::none;
  std::vector<double> ability;          // N x K
  std::vector<double> difficulty;       // J
  double sigma = 0.15;
  std::vector<double> correlation;      // K x K used for ability draws
  std::vector<double> ability_scale;    // K
  std::vector<double> self_ability;     // N x K
  std::vector<double> self_difficulty;  // N x J
  std::vector<double> self_sigma;       // N
  std::vector<double> delta;            // N x K (differentiated_by_ability)
  std::vector<double> other_ability;    // N x K
  std::vector<double> other_difficulty; // N x J
};

struct SimParams {
  Dims dims = Dims::multi;
  OtherVariant variant = OtherVariant::differentiated_by_ability;
  // underlying population
  std::vector<double> correlation;    // K x K; identity when empty
  std::vector<double> ability_scale;  // per topic; 1.0 when empty
  double difficulty_mean = 0.0;
  double difficulty_sd = 0.8;
  double sigma = 0.15;
  // self tier
  double self_ability_sd = 0.15;  // a^s ~ N(a, sd)
  double gamma = 1.0;
  double lambda = 0.0;
  double self_difficulty_sd = 0.15;
  double self_sigma = 0.15;
  // other tier
  std::vector<double> delta_mean;  // per topic; zeros when empty
  double delta_sd = 0.0;           // exact plant at delta_mean when 0
  double other_ability_sd = 1.0;       // fully differentiated
  double other_difficulty_mean = 0.0;  // fully differentiated
  double other_difficulty_sd = 0.8;    // fully differentiated
};

namespace detail {

// Cholesky factor of a small SPD matrix, row-major.
inline std::vector<double> cholesky(const std::vector<double>& A, int K) {
  std::vector<double> L(static_cast<std::size_t>(K) * K, 0.0);
  for (int r = 0; r < K; ++r) {
    for (int c = 0; c <= r; ++c) {
      double s = A[r * K + c];
      for (int t = 0; t < c; ++t) s -= L[r * K + t] * L[c * K + t];
      if (r == c) {
        if (!(s > 0.0)) throw ConfigError("cholesky: matrix is not positive definite");
        L[r * K + r] = std::sqrt(s);
      } else {
        L[r * K + c] = s / L[c * K + c];
      }
    }
  }
  return L;
}

inline int draw_score(double theta, double sigma, const CutpointLadder& ladder, Rng& rng) {
  const auto pmf = ordered_probit_pmf(logistic(theta), ladder, sigma);
  return rng.categorical(pmf);
}

}  // namespace detail

// Draws the full set of generative parameters for a design.
inline GroundTruth draw_ground_truth(const ExperimentDesign& design, const SimParams& params) {
  design.validate();
  Rng rng(split_seed(design.master_seed, 0x6E4071ull));
  GroundTruth truth;
  truth.dims = params.dims;
  truth.variant = params.variant;
  truth.K = params.dims == Dims::multi ? design.n_topics() : 1;
  truth.J = design.n_sets();
  truth.N = design.participant_count;
  const int K = truth.K, J = truth.J, N = truth.N;

  truth.correlation = params.correlation;
  if (truth.correlation.empty()) {
    truth.correlation.assign(static_cast<std::size_t>(K) * K, 0.0);
    for (int k = 0; k < K; ++k) truth.correlation[k * K + k] = 1.0;
  }
  truth.ability_scale = params.ability_scale;
  if (truth.ability_scale.empty()) truth.ability_scale.assign(K, 1.0);
  const auto chol = detail::cholesky(truth.correlation, K);

  truth.ability.resize(static_cast<std::size_t>(N) * K);
  std::vector<double> z(K);
  for (int i = 0; i < N; ++i) {
    for (auto& v : z) v = rng.normal();
    for (int r = 0; r < K; ++r) {
      double s = 0.0;
      for (int c = 0; c <= r; ++c) s += chol[r * K + c] * z[c];
      truth.ability[static_cast<std::size_t>(i) * K + r] = truth.ability_scale[r] * s;
    }
  }
  truth.difficulty.resize(J);
  for (auto& v : truth.difficulty) v = params.difficulty_mean + params.difficulty_sd * rng.normal();
  truth.sigma = params.sigma;

  truth.self_ability.resize(static_cast<std::size_t>(N) * K);
  truth.self_difficulty.resize(static_cast<std::size_t>(N) * J);
  truth.self_sigma.assign(N, params.self_sigma);
  for (int i = 0; i < N; ++i) {
    for (int k = 0; k < K; ++k) {
      truth.self_ability[static_cast<std::size_t>(i) * K + k] =
          truth.ability[static_cast<std::size_t>(i) * K + k] + params.self_ability_sd * rng.normal();
    }
    for (int j = 0; j < J; ++j) {
      truth.self_difficulty[static_cast<std::size_t>(i) * J + j] =
          params.gamma * truth.difficulty[j] + params.lambda + params.self_difficulty_sd * rng.normal();
    }
  }

  truth.other_ability = truth.self_ability;
  truth.other_difficulty = truth.self_difficulty;
  switch (params.variant) {
    case OtherVariant::undifferentiated:
      break;
    case OtherVariant::differentiated_by_ability: {
      truth.delta.resize(static_cast<std::size_t>(N) * K);
      for (int i = 0; i < N; ++i) {
        for (int k = 0; k < K; ++k) {
          const double mu = params.delta_mean.empty() ? 0.0 : params.delta_mean[k % params.delta_mean.size()];
          const double d = mu + params.delta_sd * rng.normal();
          truth.delta[static_cast<std::size_t>(i) * K + k] = d;
          truth.other_ability[static_cast<std::size_t>(i) * K + k] += d;
        }
      }
      break;
    }
    case OtherVariant::fully_differentiated: {
      for (auto& v : truth.other_ability) v = params.other_ability_sd * rng.normal();
      for (int i = 0; i < N; ++i) {
        for (int j = 0; j < J; ++j) {
          truth.other_difficulty[static_cast<std::size_t>(i) * J + j] =
              params.other_difficulty_mean + params.other_difficulty_sd * rng.normal();
        }
      }
      break;
    }
    case OtherVariant::none:
      throw ConfigError("draw_ground_truth: variant not set");
  }
  return truth;
}

// True-performance rows, in schedule order.
inline ResponseTable simulate_true_scores(const ExperimentDesign& design, const GroundTruth& truth) {
  design.validate();
  const CutpointLadder ladder = make_cutpoints(design.category_count());
  ResponseTable table;
  table.max_score = design.questions_per_set;
  for (int i = 0; i < design.participant_count; ++i) {
    Rng rng(split_seed(design.master_seed, 0x7EA10000ull + i));
    const auto cond = design.condition_of(i);
    for (const auto& entry : randomize_schedule(design, i)) {
      const int k = truth.dims == Dims::multi ? entry.topic : 0;
      const double theta =
          truth.ability[static_cast<std::size_t>(i) * truth.K + k] - truth.difficulty[entry.set];
      ResponseRow row;
      row.participant = design.participant_id(i);
      row.problem_set = design.set_id(entry.topic, entry.set % design.sets_per_topic);
      row.topic = design.topics[entry.topic];
      row.round = entry.round;
      row.kind = ScoreKind::true_score;
      row.score = detail::draw_score(theta, truth.sigma, ladder, rng);
      row.counterpart = cond.counterpart;
      row.tier = cond.tier;
      row.feedback = cond.feedback;
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

// Self- and other-assessment rows under the chosen structure, in schedule
// order, interleaved self then other per problem set.
inline ResponseTable simulate_assessments(const ExperimentDesign& design, const GroundTruth& truth) {
  design.validate();
  if (truth.variant == OtherVariant::none) throw ConfigError("simulate_assessments: variant not set");
  if (truth.variant == OtherVariant::differentiated_by_ability && truth.delta.empty()) {
    throw ConfigError("simulate_assessments: differentiated_by_ability requires delta values");
  }
  const CutpointLadder ladder = make_cutpoints(design.category_count());
  ResponseTable table;
  table.max_score = design.questions_per_set;
  const int K = truth.K, J = truth.J;
  for (int i = 0; i < design.participant_count; ++i) {
    Rng rng(split_seed(design.master_seed, 0xA55E5500ull + i));
    const auto cond = design.condition_of(i);
    for (const auto& entry : randomize_schedule(design, i)) {
      const int k = truth.dims == Dims::multi ? entry.topic : 0;
      ResponseRow row;
      row.participant = design.participant_id(i);
      row.problem_set = design.set_id(entry.topic, entry.set % design.sets_per_topic);
      row.topic = design.topics[entry.topic];
      row.round = entry.round;
      row.counterpart = cond.counterpart;
      row.tier = cond.tier;
      row.feedback = cond.feedback;

      const double theta_self = truth.self_ability[static_cast<std::size_t>(i) * K + k] -
                                truth.self_difficulty[static_cast<std::size_t>(i) * J + entry.set];
      row.kind = ScoreKind::self_score;
      row.score = detail::draw_score(theta_self, truth.self_sigma[i], ladder, rng);
      table.rows.push_back(row);

      const double theta_other = truth.other_ability[static_cast<std::size_t>(i) * K + k] -
                                 truth.other_difficulty[static_cast<std::size_t>(i) * J + entry.set];
      row.kind = ScoreKind::other_score;
      row.score = detail::draw_score(theta_other, truth.self_sigma[i], ladder, rng);
      table.rows.push_back(row);
    }
  }
  return table;
}

// Maps simulator topic indices (design order) to a frame's topic indices
// (frames order topics lexicographically by name).
inline std::vector<int> topic_permutation(const ExperimentDesign& design, const StudyFrame& frame) {
  std::vector<int> perm(design.n_topics());
  for (int t = 0; t < design.n_topics(); ++t) perm[t] = frame.topic_index.at(design.topics[t]);
  return perm;
}

// Ground truth with topic-indexed quantities permuted into a frame's topic
// order, so fitted blocks compare directly against truth entries.
inline GroundTruth reorder_truth_to_frame(const GroundTruth& truth, const ExperimentDesign& design,
                                          const StudyFrame& frame) {
  if (truth.dims == Dims::one) return truth;
  const auto perm = topic_permutation(design, frame);
  const int K = truth.K, N = truth.N;
  GroundTruth out = truth;
  auto permute_rows = [&](const std::vector<double>& src, std::vector<double>& dst) {
    for (int i = 0; i < N; ++i) {
      for (int k = 0; k < K; ++k) {
        dst[static_cast<std::size_t>(i) * K + perm[k]] = src[static_cast<std::size_t>(i) * K + k];
      }
    }
  };
  permute_rows(truth.ability, out.ability);
  permute_rows(truth.self_ability, out.self_ability);
  permute_rows(truth.other_ability, out.other_ability);
  if (!truth.delta.empty()) permute_rows(truth.delta, out.delta);
  for (int r = 0; r < K; ++r) {
    out.ability_scale[perm[r]] = truth.ability_scale[r];
    for (int c = 0; c < K; ++c) {
      out.correlation[static_cast<std::size_t>(perm[r]) * K + perm[c]] =
          truth.correlation[static_cast<std::size_t>(r) * K + c];
    }
  }
  return out;
}

struct SimulatedExperiment {
  ResponseTable table;  // true + self + other rows
  GroundTruth truth;
};

inline SimulatedExperiment simulate_experiment(const ExperimentDesign& design, const SimParams& params) {
  SimulatedExperiment out;
  out.truth = draw_ground_truth(design, params);
  out.table = simulate_true_scores(design, out.truth);
  ResponseTable assessments = simulate_assessments(design, out.truth);
  out.table.rows.insert(out.table.rows.end(), assessments.rows.begin(), assessments.rows.end());
  out.table.max_score = design.questions_per_set;
  return out;
}

}  // namespace hmirt
