#pragma once

// Shared fixtures for the unit suite: tiny model specs of every variant,
// synthetic observation tables, and a central-difference gradient check.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hmirt/data.hpp"
#include "hmirt/density.hpp"
#include "hmirt/rng.hpp"
#include "hmirt/spec.hpp"

namespace hmirt::testing {

inline std::vector<int> cyclic_topics(int sets, int topics) {
  std::vector<int> m(sets);
  for (int j = 0; j < sets; ++j) m[j] = j % topics;
  return m;
}

inline ModelSpec underlying_spec(Dims dims, int participants, int sets, int topics) {
  ModelSpec s;
  s.tier = Tier::underlying;
  s.dims = dims;
  s.n_participants = participants;
  s.n_sets = sets;
  s.n_topics = dims == Dims::multi ? topics : 1;
  s.set_topic = dims == Dims::multi ? cyclic_topics(sets, topics) : std::vector<int>(sets, 0);
  return s;
}

inline ModelSpec self_spec(Dims dims, int sets, int topics, Rng& rng) {
  ModelSpec s;
  s.tier = Tier::self_assessment;
  s.dims = dims;
  s.n_participants = 1;
  s.n_sets = sets;
  s.n_topics = dims == Dims::multi ? topics : 1;
  s.set_topic = dims == Dims::multi ? cyclic_topics(sets, topics) : std::vector<int>(sets, 0);
  s.fixed.ability.resize(s.n_topics);
  for (auto& v : s.fixed.ability) v = rng.uniform(-1.0, 1.0);
  s.fixed.difficulty.resize(sets);
  for (auto& v : s.fixed.difficulty) v = rng.uniform(-1.0, 1.0);
  return s;
}

inline ModelSpec other_spec(OtherVariant variant, Dims dims, int sets, int topics, Rng& rng) {
  ModelSpec s;
  s.tier = Tier::other_assessment;
  s.variant = variant;
  s.dims = dims;
  s.n_participants = 1;
  s.n_sets = sets;
  s.n_topics = dims == Dims::multi ? topics : 1;
  s.set_topic = dims == Dims::multi ? cyclic_topics(sets, topics) : std::vector<int>(sets, 0);
  s.fixed.sigma = 0.2;
  if (variant != OtherVariant::fully_differentiated) {
    s.fixed.ability.resize(s.n_topics);
    for (auto& v : s.fixed.ability) v = rng.uniform(-1.0, 1.0);
    s.fixed.difficulty.resize(sets);
    for (auto& v : s.fixed.difficulty) v = rng.uniform(-1.0, 1.0);
  }
  return s;
}

inline IndexedData synthetic_data(const ModelSpec& spec, Rng& rng, int obs_per_cell = 1) {
  IndexedData d;
  for (int i = 0; i < spec.n_participants; ++i) {
    for (int j = 0; j < spec.n_sets; ++j) {
      for (int r = 0; r < obs_per_cell; ++r) {
        d.participant.push_back(i);
        d.set.push_back(j);
        d.score.push_back(static_cast<int>(rng.next_u64() % spec.category_count));
        d.round.push_back(1 + j % 4);
      }
    }
  }
  d.n_obs = static_cast<int>(d.score.size());
  return d;
}

// Max combined abs/rel error between the analytic gradient and central
// finite differences with step h.
inline double max_grad_fd_error(const ModelSpec& spec, const IndexedData& data,
                                std::span<const double> q, double h = 1e-5) {
  std::vector<double> grad;
  joint_log_density(spec, data, q, &grad);
  double worst = 0.0;
  std::vector<double> qp(q.begin(), q.end()), qm(q.begin(), q.end());
  for (std::size_t i = 0; i < q.size(); ++i) {
    qp[i] = q[i] + h;
    qm[i] = q[i] - h;
    const double fd = (joint_log_density(spec, data, qp) - joint_log_density(spec, data, qm)) / (2 * h);
    qp[i] = q[i];
    qm[i] = q[i];
    const double err = std::fabs(grad[i] - fd) / std::max(1.0, std::fabs(fd));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace hmirt::testing
