#pragma once

// Declarative description of one model structure in the family: which tier
// of the hierarchy it sits on (underlying performance, self-assessment,
// other-assessment), its dimensionality, the differentiation variant for
// other-assessment, and the fixed inputs inherited from earlier tiers.
// Also owns the packing between the unconstrained sampling vector and named
// constrained parameters.

#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hmirt/data.hpp"
#include "hmirt/priors.hpp"

namespace hmirt {

enum class Tier { underlying, self_assessment, other_assessment };
enum class Dims { one, multi };
enum class OtherVariant { none, undifferentiated, differentiated_by_ability, fully_differentiated };

inline const char* to_string(Tier t) {
  switch (t) {
    case Tier::underlying: return "underlying";
    case Tier::self_assessment: return "self";
    case Tier::other_assessment: return "other";
  }
  return "?";
}

inline const char* to_string(Dims d) { return d == Dims::one ? "1" : "multi"; }

inline const char* to_string(OtherVariant v) {
  switch (v) {
    case OtherVariant::none: return "none";
    case OtherVariant::undifferentiated: return "undifferentiated";
    case OtherVariant::differentiated_by_ability: return "differentiated_by_ability";
    case OtherVariant::fully_differentiated: return "fully_differentiated";
  }
  return "?";
}

// Prior scales of the model family.
namespace family {
inline constexpr double kNoiseCauchyScale = 2.0;       // sigma, sigma^s ~ halfCauchy(0,2)
inline constexpr double kDifficultyCauchyScale = 5.0;  // sigma_d, sigma_d^o ~ halfCauchy(0,5)
inline constexpr double kDifficultyMeanSd = 2.0;       // mu_d, mu_d^o ~ N(0,2)
inline constexpr double kCholScaleSd = 2.5;            // L_std ~ halfN(0,2.5)
inline constexpr double kUnitSd = 1.0;                 // gamma, Lambda, delta, mu_delta, a^o ~ N(0,1)
inline constexpr double kLkjEta = 1.0;
}  // namespace family

// Posterior point values handed down from an earlier tier.
struct FixedInputs {
  std::vector<double> ability;     // self tier: this participant's underlying a (K);
                                   // other tier: a^s (K)
  std::vector<double> difficulty;  // self tier: underlying d (J); other tier: d^s (J)
  double sigma = std::numeric_limits<double>::quiet_NaN();  // other tier: sigma^s
  std::string provenance;
};

struct ModelSpec {
  Tier tier = Tier::underlying;
  Dims dims = Dims::multi;
  OtherVariant variant = OtherVariant::none;
  ScoreKind modeled_kind = ScoreKind::true_score;
  int n_participants = 1;      // ability rows (1 for per-participant tiers)
  int n_sets = 0;              // J
  int n_topics = 1;            // K (1 when dims == one)
  std::vector<int> set_topic;  // J entries, all zero when dims == one
  int category_count = 13;
  FixedInputs fixed;
  std::string participant;  // frame id, per-participant tiers only

  int ability_dim() const { return n_topics; }
};

enum class Transform { identity, log_positive, cholesky_corr };

struct BlockDesc {
  std::string name;
  int offset = 0;
  int size = 0;  // unconstrained size
  Transform tf = Transform::identity;
  int K = 0;  // cholesky_corr only
};

struct ParamLayout {
  std::vector<BlockDesc> blocks;
  int dim = 0;

  bool has(std::string_view name) const {
    for (const auto& b : blocks) {
      if (b.name == name) return true;
    }
    return false;
  }
  const BlockDesc& block(std::string_view name) const {
    for (const auto& b : blocks) {
      if (b.name == name) return b;
    }
    throw ConfigError("no parameter block named '" + std::string(name) + "'");
  }
};

inline ParamLayout make_layout(const ModelSpec& spec) {
  ParamLayout layout;
  auto add = [&](std::string name, int size, Transform tf, int K = 0) {
    layout.blocks.push_back({std::move(name), layout.dim, size, tf, K});
    layout.dim += size;
  };
  const int K = spec.n_topics;
  const int J = spec.n_sets;
  switch (spec.tier) {
    case Tier::underlying:
      add("ability", spec.n_participants * K, Transform::identity);
      add("difficulty", J, Transform::identity);
      add("sigma", 1, Transform::log_positive);
      add("mu_d", 1, Transform::identity);
      add("sigma_d", 1, Transform::log_positive);
      if (spec.dims == Dims::multi) {
        add("chol_scale", K, Transform::log_positive);
        add("chol_corr", K * (K - 1) / 2, Transform::cholesky_corr, K);
      }
      break;
    case Tier::self_assessment:
      add("ability", K, Transform::identity);
      add("difficulty", J, Transform::identity);
      add("sigma", 1, Transform::log_positive);
      add("gamma", 1, Transform::identity);
      add("lambda", 1, Transform::identity);
      add("sigma_d_i", 1, Transform::log_positive);
      add("sigma_a_i", 1, Transform::log_positive);
      break;
    case Tier::other_assessment:
      switch (spec.variant) {
        case OtherVariant::undifferentiated:
          break;  // no free parameters
        case OtherVariant::differentiated_by_ability:
          add("delta", K, Transform::identity);
          if (spec.dims == Dims::one) {
            add("mu_delta", 1, Transform::identity);
            add("sigma_delta", 1, Transform::log_positive);
          }
          break;
        case OtherVariant::fully_differentiated:
          add("ability", K, Transform::identity);
          add("difficulty", J, Transform::identity);
          add("mu_d_o", 1, Transform::identity);
          add("sigma_d_o", 1, Transform::log_positive);
          break;
        case OtherVariant::none:
          throw ConfigError("other-assessment spec requires a variant");
      }
      break;
  }
  return layout;
}

// ---------------------------------------------------------------------------
// Constrained <-> unconstrained transforms.

namespace detail {

// y -> lower-triangular Cholesky factor of a correlation matrix (full K x K
// row-major storage). Optionally accumulates the log-Jacobian.
inline void cholesky_corr_constrain(std::span<const double> y, int K, double* L, double* log_jac) {
  for (int i = 0; i < K * K; ++i) L[i] = 0.0;
  L[0] = 1.0;
  int idx = 0;
  for (int r = 1; r < K; ++r) {
    double sum_sqs = 0.0;
    for (int c = 0; c < r; ++c) {
      const double z = std::tanh(y[idx++]);
      const double w = std::sqrt(1.0 - sum_sqs);
      const double l = z * w;
      L[r * K + c] = l;
      if (log_jac) *log_jac += 0.5 * std::log1p(-sum_sqs) + std::log1p(-z * z);
      sum_sqs += l * l;
    }
    L[r * K + r] = std::sqrt(1.0 - sum_sqs);
  }
}

inline void cholesky_corr_unconstrain(const double* L, int K, std::span<double> y) {
  int idx = 0;
  for (int r = 1; r < K; ++r) {
    double sum_sqs = 0.0;
    for (int c = 0; c < r; ++c) {
      const double w = std::sqrt(1.0 - sum_sqs);
      const double z = L[r * K + c] / w;
      if (!(z > -1.0 && z < 1.0)) throw std::domain_error("cholesky_corr_unconstrain: invalid factor");
      y[idx++] = std::atanh(z);
      sum_sqs += L[r * K + c] * L[r * K + c];
    }
  }
}

// Reverse sweep for the constrain transform. `gL` holds dF/dL for a target F
// that already includes the transform's log-Jacobian terms; adds dF/dy into
// `gy`. Needs the same y that produced L.
inline void cholesky_corr_backprop(std::span<const double> y, int K, const double* L,
                                   const double* gL, std::span<double> gy) {
  int idx_row_start = 0;
  for (int r = 1; r < K; ++r) {
    // replay forward quantities for this row
    std::vector<double> z(r), w(r), s(r + 1);
    s[0] = 0.0;
    for (int c = 0; c < r; ++c) {
      z[c] = std::tanh(y[idx_row_start + c]);
      w[c] = std::sqrt(1.0 - s[c]);
      s[c + 1] = s[c] + L[r * K + c] * L[r * K + c];
    }
    double gs_next = -gL[r * K + r] / (2.0 * L[r * K + r]);
    for (int c = r - 1; c >= 0; --c) {
      const double l = L[r * K + c];
      const double gl_total = gL[r * K + c] + gs_next * 2.0 * l;
      double gz = gl_total * w[c] - 2.0 * z[c] / (1.0 - z[c] * z[c]);
      const double gw = gl_total * z[c];
      double gs = gs_next - 0.5 / (1.0 - s[c]) - gw * 0.5 / w[c];
      gy[idx_row_start + c] += gz * (1.0 - z[c] * z[c]);
      gs_next = gs;
    }
    idx_row_start += r;
  }
}

}  // namespace detail

// Named constrained parameter values. Identity and log blocks hold their
// natural values; "chol_corr" holds the full K x K factor row-major.
struct NamedParams {
  std::map<std::string, std::vector<double>> blocks;

  std::vector<double>& operator[](const std::string& name) { return blocks[name]; }
  const std::vector<double>& at(const std::string& name) const {
    auto it = blocks.find(name);
    if (it == blocks.end()) throw ConfigError("missing parameter block '" + name + "'");
    return it->second;
  }
};

inline NamedParams constrain(const ModelSpec& spec, std::span<const double> q) {
  const ParamLayout layout = make_layout(spec);
  if (static_cast<int>(q.size()) != layout.dim) throw ConfigError("constrain: dimension mismatch");
  NamedParams out;
  for (const auto& b : layout.blocks) {
    std::vector<double> v;
    switch (b.tf) {
      case Transform::identity:
        v.assign(q.begin() + b.offset, q.begin() + b.offset + b.size);
        break;
      case Transform::log_positive:
        v.resize(b.size);
        for (int i = 0; i < b.size; ++i) v[i] = std::exp(q[b.offset + i]);
        break;
      case Transform::cholesky_corr:
        v.resize(static_cast<std::size_t>(b.K) * b.K);
        detail::cholesky_corr_constrain(q.subspan(b.offset, b.size), b.K, v.data(), nullptr);
        break;
    }
    out.blocks.emplace(b.name, std::move(v));
  }
  return out;
}

inline std::vector<double> unconstrain(const ModelSpec& spec, const NamedParams& named) {
  const ParamLayout layout = make_layout(spec);
  std::vector<double> q(layout.dim);
  for (const auto& b : layout.blocks) {
    const auto& v = named.at(b.name);
    switch (b.tf) {
      case Transform::identity:
        if (static_cast<int>(v.size()) != b.size) throw ConfigError("unconstrain: size mismatch for " + b.name);
        std::copy(v.begin(), v.end(), q.begin() + b.offset);
        break;
      case Transform::log_positive:
        if (static_cast<int>(v.size()) != b.size) throw ConfigError("unconstrain: size mismatch for " + b.name);
        for (int i = 0; i < b.size; ++i) {
          if (!(v[i] > 0.0)) throw std::domain_error("unconstrain: positive parameter required for " + b.name);
          q[b.offset + i] = std::log(v[i]);
        }
        break;
      case Transform::cholesky_corr:
        if (static_cast<int>(v.size()) != b.K * b.K) throw ConfigError("unconstrain: size mismatch for " + b.name);
        detail::cholesky_corr_unconstrain(v.data(), b.K, std::span<double>(q).subspan(b.offset, b.size));
        break;
    }
  }
  return q;
}

// Column labels for persisted draws, in unconstrained-vector order but
// describing the constrained view.
inline std::vector<std::string> constrained_column_names(const ModelSpec& spec) {
  const ParamLayout layout = make_layout(spec);
  std::vector<std::string> names;
  for (const auto& b : layout.blocks) {
    if (b.tf == Transform::cholesky_corr) {
      for (int r = 0; r < b.K; ++r) {
        for (int c = 0; c <= r; ++c) {
          names.push_back(b.name + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
        }
      }
    } else if (b.size == 1) {
      names.push_back(b.name);
    } else {
      for (int i = 0; i < b.size; ++i) names.push_back(b.name + "[" + std::to_string(i) + "]");
    }
  }
  return names;
}

// Constrained row for one draw, matching constrained_column_names order.
inline std::vector<double> constrained_row(const ModelSpec& spec, std::span<const double> q) {
  const ParamLayout layout = make_layout(spec);
  const NamedParams named = constrain(spec, q);
  std::vector<double> row;
  for (const auto& b : layout.blocks) {
    const auto& v = named.at(b.name);
    if (b.tf == Transform::cholesky_corr) {
      for (int r = 0; r < b.K; ++r) {
        for (int c = 0; c <= r; ++c) row.push_back(v[r * b.K + c]);
      }
    } else {
      row.insert(row.end(), v.begin(), v.end());
    }
  }
  return row;
}

// ---------------------------------------------------------------------------
// Builders. Fixed inputs are posterior means of the earlier tier's retained
// draws; their provenance string names the fit they came from.

struct TierSummary {
  // underlying tier: ability is n_participants x K row-major, difficulty J.
  // self tier: ability K, difficulty J, sigma set.
  std::vector<double> ability;
  int ability_rows = 0;
  int K = 1;
  std::vector<double> difficulty;
  double sigma = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> participants;  // row labels for the underlying tier
  std::string provenance;
};

inline ModelSpec build_underlying(Dims dims, const StudyFrame& frame,
                                  ScoreKind kind = ScoreKind::true_score) {
  if (frame.n_sets() == 0) throw ConfigError("build_underlying: frame has no problem sets");
  for (int j = 0; j < frame.n_sets(); ++j) {
    if (frame.set_topic[j] < 0 || frame.set_topic[j] >= frame.n_topics()) {
      throw ConfigError("build_underlying: problem set '" + frame.sets[j] + "' has no topic mapping");
    }
  }
  ModelSpec spec;
  spec.tier = Tier::underlying;
  spec.dims = dims;
  spec.modeled_kind = kind;
  spec.n_participants = frame.n_participants();
  spec.n_sets = frame.n_sets();
  spec.category_count = frame.category_count;
  if (dims == Dims::multi) {
    spec.n_topics = frame.n_topics();
    spec.set_topic = frame.set_topic;
  } else {
    spec.n_topics = 1;
    spec.set_topic.assign(frame.n_sets(), 0);
  }
  return spec;
}

inline ModelSpec build_self(Dims dims, const TierSummary& underlying, const StudyFrame& frame,
                            const std::string& participant) {
  ModelSpec spec;
  spec.tier = Tier::self_assessment;
  spec.dims = dims;
  spec.modeled_kind = ScoreKind::self_score;
  spec.n_participants = 1;
  spec.n_sets = frame.n_sets();
  spec.category_count = frame.category_count;
  spec.participant = participant;
  if (dims == Dims::multi) {
    spec.n_topics = frame.n_topics();
    spec.set_topic = frame.set_topic;
  } else {
    spec.n_topics = 1;
    spec.set_topic.assign(frame.n_sets(), 0);
  }
  int row = -1;
  for (std::size_t i = 0; i < underlying.participants.size(); ++i) {
    if (underlying.participants[i] == participant) row = static_cast<int>(i);
  }
  if (row < 0) throw ConfigError("build_self: participant '" + participant + "' missing from underlying summary");
  if (underlying.K != spec.n_topics || static_cast<int>(underlying.difficulty.size()) != spec.n_sets) {
    throw ConfigError("build_self: underlying summary shape does not match frame");
  }
  spec.fixed.ability.assign(underlying.ability.begin() + static_cast<std::size_t>(row) * underlying.K,
                            underlying.ability.begin() + static_cast<std::size_t>(row + 1) * underlying.K);
  spec.fixed.difficulty = underlying.difficulty;
  spec.fixed.provenance = underlying.provenance;
  return spec;
}

inline ModelSpec build_other(OtherVariant variant, Dims dims, const TierSummary& self_summary,
                             const StudyFrame& frame, const std::string& participant) {
  if (variant == OtherVariant::none) throw ConfigError("build_other: a concrete variant is required");
  ModelSpec spec;
  spec.tier = Tier::other_assessment;
  spec.variant = variant;
  spec.dims = dims;
  spec.modeled_kind = ScoreKind::other_score;
  spec.n_participants = 1;
  spec.n_sets = frame.n_sets();
  spec.category_count = frame.category_count;
  spec.participant = participant;
  if (dims == Dims::multi) {
    spec.n_topics = frame.n_topics();
    spec.set_topic = frame.set_topic;
  } else {
    spec.n_topics = 1;
    spec.set_topic.assign(frame.n_sets(), 0);
  }
  if (!(self_summary.sigma > 0.0)) throw ConfigError("build_other: self summary lacks a positive sigma");
  spec.fixed.sigma = self_summary.sigma;
  spec.fixed.provenance = self_summary.provenance;
  if (variant != OtherVariant::fully_differentiated) {
    if (self_summary.K != spec.n_topics || static_cast<int>(self_summary.difficulty.size()) != spec.n_sets) {
      throw ConfigError("build_other: self summary shape does not match frame");
    }
    spec.fixed.ability = self_summary.ability;
    spec.fixed.difficulty = self_summary.difficulty;
  }
  return spec;
}

}  // namespace hmirt
