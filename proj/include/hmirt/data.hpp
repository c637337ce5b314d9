#pragma once

// Long-format observation table and the compiled index views the models
// consume. One row per (participant, problem set, score kind).

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmirt {

enum class ScoreKind { true_score, self_score, other_score };
enum class Counterpart { none, human, ai };
enum class AccuracyTier { none, high, low };

inline const char* to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::true_score: return "true";
    case ScoreKind::self_score: return "self";
    case ScoreKind::other_score: return "other";
  }
  return "?";
}

inline const char* to_string(Counterpart c) {
  switch (c) {
    case Counterpart::none: return "none";
    case Counterpart::human: return "human";
    case Counterpart::ai: return "ai";
  }
  return "?";
}

inline const char* to_string(AccuracyTier t) {
  switch (t) {
    case AccuracyTier::none: return "none";
    case AccuracyTier::high: return "high";
    case AccuracyTier::low: return "low";
  }
  return "?";
}

struct ResponseRow {
  std::string participant;
  std::string problem_set;
  std::string topic;
  int round = 0;
  ScoreKind kind = ScoreKind::true_score;
  int score = 0;
  Counterpart counterpart = Counterpart::none;
  AccuracyTier tier = AccuracyTier::none;
  bool feedback = false;

  bool operator==(const ResponseRow&) const = default;
};

struct ResponseTable {
  std::vector<ResponseRow> rows;
  int max_score = 12;  // V; scores live in [0, V]

  int category_count() const { return max_score + 1; }
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shared index space of one dataset: participants, problem sets, topics, and
// the set -> topic association. Built once and reused by every tier.
struct StudyFrame {
  std::vector<std::string> participants;
  std::vector<std::string> sets;
  std::vector<std::string> topics;
  std::vector<int> set_topic;  // per set index
  int category_count = 13;
  int max_round = 0;

  std::map<std::string, int> participant_index;
  std::map<std::string, int> set_index;
  std::map<std::string, int> topic_index;

  int n_participants() const { return static_cast<int>(participants.size()); }
  int n_sets() const { return static_cast<int>(sets.size()); }
  int n_topics() const { return static_cast<int>(topics.size()); }

  int participant_of(const std::string& id) const {
    auto it = participant_index.find(id);
    if (it == participant_index.end()) throw ConfigError("unknown participant id: " + id);
    return it->second;
  }
};

inline StudyFrame build_frame(const ResponseTable& table) {
  StudyFrame f;
  f.category_count = table.category_count();
  std::map<std::string, std::string> set_to_topic;
  for (const auto& r : table.rows) {
    if (f.participant_index.emplace(r.participant, 0).second) f.participants.push_back(r.participant);
    if (f.set_index.emplace(r.problem_set, 0).second) f.sets.push_back(r.problem_set);
    if (f.topic_index.emplace(r.topic, 0).second) f.topics.push_back(r.topic);
    auto [it, inserted] = set_to_topic.emplace(r.problem_set, r.topic);
    if (!inserted && it->second != r.topic) {
      throw ValidationError("problem set '" + r.problem_set + "' mapped to two topics");
    }
    f.max_round = std::max(f.max_round, r.round);
  }
  std::sort(f.participants.begin(), f.participants.end());
  std::sort(f.sets.begin(), f.sets.end());
  std::sort(f.topics.begin(), f.topics.end());
  for (int i = 0; i < f.n_participants(); ++i) f.participant_index[f.participants[i]] = i;
  for (int i = 0; i < f.n_sets(); ++i) f.set_index[f.sets[i]] = i;
  for (int i = 0; i < f.n_topics(); ++i) f.topic_index[f.topics[i]] = i;
  f.set_topic.resize(f.sets.size());
  for (int j = 0; j < f.n_sets(); ++j) f.set_topic[j] = f.topic_index.at(set_to_topic.at(f.sets[j]));
  return f;
}

// Row filter for selecting the slice a fit or a scorer sees.
struct RowFilter {
  std::optional<ScoreKind> kind;
  std::optional<std::string> participant;
  std::optional<Counterpart> counterpart;
  int min_round = 0;                 // inclusive; 0 = no bound
  int max_round = 0;                 // inclusive; 0 = no bound
  std::optional<bool> feedback;

  bool matches(const ResponseRow& r) const {
    if (kind && r.kind != *kind) return false;
    if (participant && r.participant != *participant) return false;
    if (counterpart && r.counterpart != *counterpart) return false;
    if (min_round > 0 && r.round < min_round) return false;
    if (max_round > 0 && r.round > max_round) return false;
    if (feedback && r.feedback != *feedback) return false;
    return true;
  }
};

// Flat observation arrays in frame index space. `participant` entries are
// frame indices unless remapped by a single-participant selection.
struct IndexedData {
  std::vector<int> participant;
  std::vector<int> set;
  std::vector<int> score;
  std::vector<int> round;
  int n_obs = 0;
};

inline IndexedData select_observations(const ResponseTable& table, const StudyFrame& frame,
                                       const RowFilter& filter, bool single_participant = false) {
  IndexedData d;
  for (const auto& r : table.rows) {
    if (!filter.matches(r)) continue;
    d.participant.push_back(single_participant ? 0 : frame.participant_index.at(r.participant));
    d.set.push_back(frame.set_index.at(r.problem_set));
    d.score.push_back(r.score);
    d.round.push_back(r.round);
  }
  d.n_obs = static_cast<int>(d.score.size());
  return d;
}

inline std::set<ScoreKind> kinds_present(const ResponseTable& table) {
  std::set<ScoreKind> kinds;
  for (const auto& r : table.rows) kinds.insert(r.kind);
  return kinds;
}

}  // namespace hmirt
