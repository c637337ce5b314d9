#pragma once

// Joint log density of each model structure over the unconstrained
// parameter vector (priors + ordered-probit likelihood + transform
// Jacobians) with exact analytic gradients, plus the pointwise
// log-likelihood records the scorers consume.
//
// Latent score for observation (i, j): theta = a[i, topic(j)] - d[j]; the
// between-items loading selects exactly one ability dimension per set.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "hmirt/data.hpp"
#include "hmirt/ordered_probit.hpp"
#include "hmirt/priors.hpp"
#include "hmirt/spec.hpp"

namespace hmirt {

namespace detail {

struct SigmaAcc {
  double d_sigma = 0.0;  // gradient wrt the constrained scale
};

// Ordered-probit likelihood summed over observations. theta_fn(obs) yields
// the latent score; scatter_fn(obs, d_theta) receives its gradient.
template <typename ThetaFn, typename ScatterFn>
double likelihood_sum(const IndexedData& data, const CutpointLadder& ladder, double sigma,
                      ThetaFn&& theta_fn, ScatterFn&& scatter_fn, bool want_grad, SigmaAcc* sig) {
  double lp = 0.0;
  for (int n = 0; n < data.n_obs; ++n) {
    const double theta = theta_fn(n);
    const double p = logistic(theta);
    if (want_grad) {
      OrderedProbitGrad g;
      lp += ordered_probit_log_pmf_grad(p, ladder, sigma, data.score[n], g);
      const double d_theta = g.d_p * p * (1.0 - p);
      scatter_fn(n, d_theta);
      if (sig) sig->d_sigma += g.d_sigma;
    } else {
      lp += ordered_probit_log_pmf(p, ladder, sigma, data.score[n]);
    }
  }
  return lp;
}

// Multivariate normal prior N(0, L L^T) on the rows of `a` where
// L = diag(scale) * Lcorr. Accumulates lp, gradients wrt a, scale, and the
// correlation factor entries (gLcorr is K x K row-major, lower triangle).
inline double mvn_chol_prior(std::span<const double> a, int rows, int K, const double* scale,
                             const double* Lcorr, double* g_a, double* g_scale, double* gLcorr) {
  std::vector<double> Lfull(static_cast<std::size_t>(K) * K, 0.0);
  for (int r = 0; r < K; ++r) {
    for (int c = 0; c <= r; ++c) Lfull[r * K + c] = scale[r] * Lcorr[r * K + c];
  }
  double lp = 0.0;
  std::vector<double> u(K), M(static_cast<std::size_t>(K) * K, 0.0);
  for (int i = 0; i < rows; ++i) {
    const double* ai = a.data() + static_cast<std::size_t>(i) * K;
    // forward solve L u = a_i
    for (int r = 0; r < K; ++r) {
      double s = ai[r];
      for (int c = 0; c < r; ++c) s -= Lfull[r * K + c] * u[c];
      u[r] = s / Lfull[r * K + r];
    }
    for (int r = 0; r < K; ++r) lp -= 0.5 * u[r] * u[r];
    if (g_a) {
      // g_a_i = -L^{-T} u (backward solve), M += u u^T
      std::vector<double> v(K);
      for (int r = K - 1; r >= 0; --r) {
        double s = u[r];
        for (int c = r + 1; c < K; ++c) s -= Lfull[c * K + r] * v[c];
        v[r] = s / Lfull[r * K + r];
      }
      for (int r = 0; r < K; ++r) g_a[static_cast<std::size_t>(i) * K + r] -= v[r];
      for (int r = 0; r < K; ++r) {
        for (int c = 0; c < K; ++c) M[r * K + c] += u[r] * u[c];
      }
    }
  }
  for (int r = 0; r < K; ++r) lp -= rows * std::log(Lfull[r * K + r]);
  lp -= 0.5 * rows * K * kLn2Pi;
  if (g_a) {
    // G = L^{-T} M restricted to the lower triangle, minus rows/L_rr on the
    // diagonal; then split between scale and Lcorr by the product rule.
    std::vector<double> G(static_cast<std::size_t>(K) * K, 0.0);
    for (int col = 0; col < K; ++col) {
      for (int r = K - 1; r >= 0; --r) {
        double s = M[r * K + col];
        for (int c = r + 1; c < K; ++c) s -= Lfull[c * K + r] * G[c * K + col];
        G[r * K + col] = s / Lfull[r * K + r];
      }
    }
    for (int r = 0; r < K; ++r) G[r * K + r] -= rows / Lfull[r * K + r];
    for (int r = 0; r < K; ++r) {
      for (int c = 0; c <= r; ++c) {
        g_scale[r] += G[r * K + c] * Lcorr[r * K + c];
        gLcorr[r * K + c] += G[r * K + c] * scale[r];
      }
    }
  }
  return lp;
}

}  // namespace detail

// Joint log density wrt the unconstrained vector. If `grad` is non-null it
// must have layout.dim entries; it is overwritten.
inline double joint_log_density(const ModelSpec& spec, const IndexedData& data,
                                std::span<const double> q, std::vector<double>* grad = nullptr) {
  const ParamLayout layout = make_layout(spec);
  if (static_cast<int>(q.size()) != layout.dim) {
    throw ConfigError("joint_log_density: parameter dimension mismatch");
  }
  for (int n = 0; n < data.n_obs; ++n) {
    if (data.set[n] < 0 || data.set[n] >= spec.n_sets || data.participant[n] < 0 ||
        data.participant[n] >= spec.n_participants) {
      throw ConfigError("joint_log_density: observation index out of range");
    }
  }
  const bool want_grad = grad != nullptr;
  if (want_grad) grad->assign(layout.dim, 0.0);
  double* g = want_grad ? grad->data() : nullptr;

  // positive-constrained coordinates can under- or overflow the exp
  // transform far out in the tails; such points get density -inf and are
  // rejected by the sampler rather than raising
  for (const auto& b : layout.blocks) {
    if (b.tf != Transform::log_positive) continue;
    for (int i = 0; i < b.size; ++i) {
      const double v = std::exp(q[b.offset + i]);
      if (!(v > 0.0) || !std::isfinite(v)) return -std::numeric_limits<double>::infinity();
    }
  }

  const CutpointLadder ladder = make_cutpoints(spec.category_count);
  const int K = spec.n_topics;
  const int J = spec.n_sets;
  double lp = 0.0;

  switch (spec.tier) {
    case Tier::underlying: {
      const auto& ab = layout.block("ability");
      const auto& db = layout.block("difficulty");
      const auto& sb = layout.block("sigma");
      const auto& mb = layout.block("mu_d");
      const auto& sdb = layout.block("sigma_d");
      const double* a = q.data() + ab.offset;
      const double* d = q.data() + db.offset;
      const double sigma = std::exp(q[sb.offset]);
      const double mu_d = q[mb.offset];
      const double sigma_d = std::exp(q[sdb.offset]);

      detail::SigmaAcc sig;
      lp += detail::likelihood_sum(
          data, ladder, sigma,
          [&](int n) { return a[data.participant[n] * K + spec.set_topic[data.set[n]]] - d[data.set[n]]; },
          [&](int n, double dt) {
            g[ab.offset + data.participant[n] * K + spec.set_topic[data.set[n]]] += dt;
            g[db.offset + data.set[n]] -= dt;
          },
          want_grad, want_grad ? &sig : nullptr);

      // d_j ~ N(mu_d, sigma_d); hyperpriors mu_d ~ N(0,2), sigma_d ~ halfCauchy(0,5)
      double d_mu = 0.0, d_sigma_d = 0.0;
      for (int j = 0; j < J; ++j) {
        lp += normal_lpdf(d[j], mu_d, sigma_d);
        if (want_grad) {
          g[db.offset + j] += normal_lpdf_d_x(d[j], mu_d, sigma_d);
          d_mu += normal_lpdf_d_mu(d[j], mu_d, sigma_d);
          d_sigma_d += normal_lpdf_d_sigma(d[j], mu_d, sigma_d);
        }
      }
      lp += normal_lpdf(mu_d, 0.0, family::kDifficultyMeanSd);
      lp += half_cauchy_log_prior(sigma_d, family::kDifficultyCauchyScale);
      lp += half_cauchy_log_prior(sigma, family::kNoiseCauchyScale);
      if (want_grad) {
        g[mb.offset] += d_mu + normal_lpdf_d_x(mu_d, 0.0, family::kDifficultyMeanSd);
        d_sigma_d += half_cauchy_d_x(sigma_d, family::kDifficultyCauchyScale);
        sig.d_sigma += half_cauchy_d_x(sigma, family::kNoiseCauchyScale);
        // chain through the log transforms, plus their Jacobian gradients
        g[sdb.offset] += d_sigma_d * sigma_d + 1.0;
        g[sb.offset] += sig.d_sigma * sigma + 1.0;
      }
      lp += q[sb.offset] + q[sdb.offset];  // log-Jacobians of the log transforms

      if (spec.dims == Dims::multi) {
        const auto& scb = layout.block("chol_scale");
        const auto& ccb = layout.block("chol_corr");
        std::vector<double> scale(K);
        for (int k = 0; k < K; ++k) scale[k] = std::exp(q[scb.offset + k]);
        std::vector<double> Lcorr(static_cast<std::size_t>(K) * K);
        double chol_jac = 0.0;
        detail::cholesky_corr_constrain(q.subspan(ccb.offset, ccb.size), K, Lcorr.data(), &chol_jac);
        for (int k = 0; k < K; ++k) {
          // tanh saturation can zero the diagonal far out in the tails
          if (!(Lcorr[k * K + k] > 1e-150)) return -std::numeric_limits<double>::infinity();
        }
        lp += chol_jac;

        std::vector<double> g_scale(K, 0.0), gLcorr(static_cast<std::size_t>(K) * K, 0.0);
        lp += detail::mvn_chol_prior(q.subspan(ab.offset, ab.size), spec.n_participants, K, scale.data(),
                                     Lcorr.data(), want_grad ? g + ab.offset : nullptr, g_scale.data(),
                                     gLcorr.data());
        // LKJ prior on the correlation factor; scale ~ halfN(0, 2.5)
        for (int r = 1; r < K; ++r) {
          lp += lkj_diag_coeff(K, r, family::kLkjEta) * std::log(Lcorr[r * K + r]);
          if (want_grad) gLcorr[r * K + r] += lkj_diag_coeff(K, r, family::kLkjEta) / Lcorr[r * K + r];
        }
        for (int k = 0; k < K; ++k) {
          lp += half_normal_log_prior(scale[k], family::kCholScaleSd);
          lp += q[scb.offset + k];
          if (want_grad) {
            g_scale[k] += half_normal_d_x(scale[k], family::kCholScaleSd);
            g[scb.offset + k] += g_scale[k] * scale[k] + 1.0;
          }
        }
        if (want_grad) {
          detail::cholesky_corr_backprop(q.subspan(ccb.offset, ccb.size), K, Lcorr.data(), gLcorr.data(),
                                         std::span<double>(g + ccb.offset, ccb.size));
        }
      } else {
        // a_i ~ N(0,1)
        for (int i = 0; i < ab.size; ++i) {
          lp += normal_lpdf(a[i], 0.0, 1.0);
          if (want_grad) g[ab.offset + i] += normal_lpdf_d_x(a[i], 0.0, 1.0);
        }
      }
      break;
    }

    case Tier::self_assessment: {
      if (static_cast<int>(spec.fixed.ability.size()) != K ||
          static_cast<int>(spec.fixed.difficulty.size()) != J) {
        throw ConfigError("self model: fixed inputs missing or mis-shaped");
      }
      const auto& ab = layout.block("ability");
      const auto& db = layout.block("difficulty");
      const auto& sb = layout.block("sigma");
      const auto& gb = layout.block("gamma");
      const auto& lb = layout.block("lambda");
      const auto& sdb = layout.block("sigma_d_i");
      const auto& sab = layout.block("sigma_a_i");
      const double* a = q.data() + ab.offset;
      const double* d = q.data() + db.offset;
      const double sigma = std::exp(q[sb.offset]);
      const double gamma = q[gb.offset];
      const double lambda = q[lb.offset];
      const double sigma_d_i = std::exp(q[sdb.offset]);
      const double sigma_a_i = std::exp(q[sab.offset]);

      detail::SigmaAcc sig;
      lp += detail::likelihood_sum(
          data, ladder, sigma,
          [&](int n) { return a[spec.set_topic[data.set[n]]] - d[data.set[n]]; },
          [&](int n, double dt) {
            g[ab.offset + spec.set_topic[data.set[n]]] += dt;
            g[db.offset + data.set[n]] -= dt;
          },
          want_grad, want_grad ? &sig : nullptr);

      // d^s_j ~ N(gamma * d_j + lambda, sigma_d_i)
      double d_gamma = 0.0, d_lambda = 0.0, d_sdi = 0.0, d_sai = 0.0;
      for (int j = 0; j < J; ++j) {
        const double mu = gamma * spec.fixed.difficulty[j] + lambda;
        lp += normal_lpdf(d[j], mu, sigma_d_i);
        if (want_grad) {
          g[db.offset + j] += normal_lpdf_d_x(d[j], mu, sigma_d_i);
          const double dmu = normal_lpdf_d_mu(d[j], mu, sigma_d_i);
          d_gamma += dmu * spec.fixed.difficulty[j];
          d_lambda += dmu;
          d_sdi += normal_lpdf_d_sigma(d[j], mu, sigma_d_i);
        }
      }
      // a^s_k ~ N(a_k, sigma_a_i)
      for (int k = 0; k < K; ++k) {
        lp += normal_lpdf(a[k], spec.fixed.ability[k], sigma_a_i);
        if (want_grad) {
          g[ab.offset + k] += normal_lpdf_d_x(a[k], spec.fixed.ability[k], sigma_a_i);
          d_sai += normal_lpdf_d_sigma(a[k], spec.fixed.ability[k], sigma_a_i);
        }
      }
      lp += normal_lpdf(gamma, 0.0, family::kUnitSd);
      lp += normal_lpdf(lambda, 0.0, family::kUnitSd);
      lp += half_cauchy_log_prior(sigma, family::kNoiseCauchyScale);
      lp += half_cauchy_log_prior(sigma_d_i, family::kNoiseCauchyScale);
      lp += half_cauchy_log_prior(sigma_a_i, family::kNoiseCauchyScale);
      lp += q[sb.offset] + q[sdb.offset] + q[sab.offset];
      if (want_grad) {
        g[gb.offset] += d_gamma + normal_lpdf_d_x(gamma, 0.0, family::kUnitSd);
        g[lb.offset] += d_lambda + normal_lpdf_d_x(lambda, 0.0, family::kUnitSd);
        sig.d_sigma += half_cauchy_d_x(sigma, family::kNoiseCauchyScale);
        d_sdi += half_cauchy_d_x(sigma_d_i, family::kNoiseCauchyScale);
        d_sai += half_cauchy_d_x(sigma_a_i, family::kNoiseCauchyScale);
        g[sb.offset] += sig.d_sigma * sigma + 1.0;
        g[sdb.offset] += d_sdi * sigma_d_i + 1.0;
        g[sab.offset] += d_sai * sigma_a_i + 1.0;
      }
      break;
    }

    case Tier::other_assessment: {
      if (!(spec.fixed.sigma > 0.0)) throw ConfigError("other model: fixed sigma^s missing");
      const double sigma = spec.fixed.sigma;
      switch (spec.variant) {
        case OtherVariant::undifferentiated: {
          // No free parameters: likelihood evaluated at the fixed inputs.
          if (static_cast<int>(spec.fixed.ability.size()) != K ||
              static_cast<int>(spec.fixed.difficulty.size()) != J) {
            throw ConfigError("undifferentiated model: fixed inputs missing");
          }
          lp += detail::likelihood_sum(
              data, ladder, sigma,
              [&](int n) {
                return spec.fixed.ability[spec.set_topic[data.set[n]]] - spec.fixed.difficulty[data.set[n]];
              },
              [](int, double) {}, false, nullptr);
          break;
        }
        case OtherVariant::differentiated_by_ability: {
          if (static_cast<int>(spec.fixed.ability.size()) != K ||
              static_cast<int>(spec.fixed.difficulty.size()) != J) {
            throw ConfigError("differentiated model: fixed inputs missing");
          }
          const auto& deltab = layout.block("delta");
          const double* delta = q.data() + deltab.offset;
          if (spec.dims == Dims::multi) {
            lp += detail::likelihood_sum(
                data, ladder, sigma,
                [&](int n) {
                  const int k = spec.set_topic[data.set[n]];
                  return spec.fixed.ability[k] + delta[k] - spec.fixed.difficulty[data.set[n]];
                },
                [&](int n, double dt) { g[deltab.offset + spec.set_topic[data.set[n]]] += dt; }, want_grad,
                nullptr);
            for (int k = 0; k < K; ++k) {
              lp += normal_lpdf(delta[k], 0.0, family::kUnitSd);
              if (want_grad) g[deltab.offset + k] += normal_lpdf_d_x(delta[k], 0.0, family::kUnitSd);
            }
          } else {
            const auto& mdb = layout.block("mu_delta");
            const auto& sdb = layout.block("sigma_delta");
            const double mu_delta = q[mdb.offset];
            const double sigma_delta = std::exp(q[sdb.offset]);
            lp += detail::likelihood_sum(
                data, ladder, sigma,
                [&](int n) {
                  return spec.fixed.ability[0] + delta[0] - spec.fixed.difficulty[data.set[n]];
                },
                [&](int n, double dt) {
                  (void)n;
                  g[deltab.offset] += dt;
                },
                want_grad, nullptr);
            lp += normal_lpdf(delta[0], mu_delta, sigma_delta);
            lp += normal_lpdf(mu_delta, 0.0, family::kUnitSd);
            lp += half_cauchy_log_prior(sigma_delta, family::kNoiseCauchyScale);
            lp += q[sdb.offset];
            if (want_grad) {
              g[deltab.offset] += normal_lpdf_d_x(delta[0], mu_delta, sigma_delta);
              g[mdb.offset] += normal_lpdf_d_mu(delta[0], mu_delta, sigma_delta) +
                               normal_lpdf_d_x(mu_delta, 0.0, family::kUnitSd);
              const double ds = normal_lpdf_d_sigma(delta[0], mu_delta, sigma_delta) +
                                half_cauchy_d_x(sigma_delta, family::kNoiseCauchyScale);
              g[sdb.offset] += ds * sigma_delta + 1.0;
            }
          }
          break;
        }
        case OtherVariant::fully_differentiated: {
          const auto& ab = layout.block("ability");
          const auto& db = layout.block("difficulty");
          const auto& mb = layout.block("mu_d_o");
          const auto& sdb = layout.block("sigma_d_o");
          const double* a = q.data() + ab.offset;
          const double* d = q.data() + db.offset;
          const double mu_d_o = q[mb.offset];
          const double sigma_d_o = std::exp(q[sdb.offset]);
          double d_mu = 0.0, d_sd = 0.0;
          lp += detail::likelihood_sum(
              data, ladder, sigma,
              [&](int n) { return a[spec.set_topic[data.set[n]]] - d[data.set[n]]; },
              [&](int n, double dt) {
                g[ab.offset + spec.set_topic[data.set[n]]] += dt;
                g[db.offset + data.set[n]] -= dt;
              },
              want_grad, nullptr);
          for (int j = 0; j < J; ++j) {
            lp += normal_lpdf(d[j], mu_d_o, sigma_d_o);
            if (want_grad) {
              g[db.offset + j] += normal_lpdf_d_x(d[j], mu_d_o, sigma_d_o);
              d_mu += normal_lpdf_d_mu(d[j], mu_d_o, sigma_d_o);
              d_sd += normal_lpdf_d_sigma(d[j], mu_d_o, sigma_d_o);
            }
          }
          for (int k = 0; k < K; ++k) {
            lp += normal_lpdf(a[k], 0.0, family::kUnitSd);
            if (want_grad) g[ab.offset + k] += normal_lpdf_d_x(a[k], 0.0, family::kUnitSd);
          }
          lp += normal_lpdf(mu_d_o, 0.0, family::kDifficultyMeanSd);
          lp += half_cauchy_log_prior(sigma_d_o, family::kDifficultyCauchyScale);
          lp += q[sdb.offset];
          if (want_grad) {
            g[mb.offset] += d_mu + normal_lpdf_d_x(mu_d_o, 0.0, family::kDifficultyMeanSd);
            d_sd += half_cauchy_d_x(sigma_d_o, family::kDifficultyCauchyScale);
            g[sdb.offset] += d_sd * sigma_d_o + 1.0;
          }
          break;
        }
        case OtherVariant::none:
          throw ConfigError("other model: variant not set");
      }
      break;
    }
  }
  return lp;
}

inline std::vector<double> grad_log_density(const ModelSpec& spec, const IndexedData& data,
                                            std::span<const double> q) {
  std::vector<double> grad;
  joint_log_density(spec, data, q, &grad);
  return grad;
}

// Per-observation log-likelihood at one unconstrained draw (no priors).
// Evaluates through the constrained view, so reparameterized blocks carry
// their natural values.
inline void pointwise_loglik(const ModelSpec& spec, const IndexedData& data,
                             std::span<const double> q, std::span<double> out) {
  if (static_cast<int>(out.size()) != data.n_obs) throw ConfigError("pointwise_loglik: bad output size");
  const ParamLayout layout = make_layout(spec);
  if (static_cast<int>(q.size()) != layout.dim) throw ConfigError("pointwise_loglik: dimension mismatch");
  const CutpointLadder ladder = make_cutpoints(spec.category_count);
  const int K = spec.n_topics;
  const NamedParams named = layout.dim > 0 ? constrain(spec, q) : NamedParams{};

  const std::vector<double>* ability = nullptr;
  const std::vector<double>* difficulty = nullptr;
  const std::vector<double>* delta = nullptr;
  double sigma = 0.0;
  bool per_participant_ability = false;
  switch (spec.tier) {
    case Tier::underlying:
      ability = &named.at("ability");
      difficulty = &named.at("difficulty");
      sigma = named.at("sigma")[0];
      per_participant_ability = true;
      break;
    case Tier::self_assessment:
      ability = &named.at("ability");
      difficulty = &named.at("difficulty");
      sigma = named.at("sigma")[0];
      break;
    case Tier::other_assessment:
      sigma = spec.fixed.sigma;
      switch (spec.variant) {
        case OtherVariant::undifferentiated:
          ability = &spec.fixed.ability;
          difficulty = &spec.fixed.difficulty;
          break;
        case OtherVariant::differentiated_by_ability:
          ability = &spec.fixed.ability;
          difficulty = &spec.fixed.difficulty;
          delta = &named.at("delta");
          break;
        case OtherVariant::fully_differentiated:
          ability = &named.at("ability");
          difficulty = &named.at("difficulty");
          break;
        case OtherVariant::none:
          throw ConfigError("pointwise_loglik: variant not set");
      }
      break;
  }

  for (int n = 0; n < data.n_obs; ++n) {
    const int k = spec.set_topic[data.set[n]];
    double theta = (*ability)[per_participant_ability ? data.participant[n] * K + k : k] -
                   (*difficulty)[data.set[n]];
    if (delta) theta += (*delta)[spec.dims == Dims::multi ? k : 0];
    out[n] = ordered_probit_log_pmf(logistic(theta), ladder, sigma, data.score[n]);
  }
}

// Likelihood-only total (sum of pointwise terms) at one unconstrained draw.
inline double data_log_lik(const ModelSpec& spec, const IndexedData& data, std::span<const double> q) {
  std::vector<double> pw(data.n_obs);
  pointwise_loglik(spec, data, q, pw);
  double s = 0.0;
  for (double v : pw) s += v;
  return s;
}

}  // namespace hmirt
