#pragma once

// Gradient-based MCMC: dynamic-trajectory HMC (doubling with a U-turn
// criterion, multinomial state selection), dual-averaging step-size
// adaptation, and a diagonal metric estimated from the second half of
// warmup. Chains are independent and deterministic given (seed, target).

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "hmirt/data.hpp"
#include "hmirt/density.hpp"
#include "hmirt/rng.hpp"

namespace hmirt {

class InitializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Minimal sampling interface: log density with gradient over an
// unconstrained vector, plus optional per-observation log-likelihood.
struct Target {
  int dim = 0;
  int n_obs = 0;
  std::function<double(std::span<const double>, std::vector<double>*)> logp_grad;
  std::function<void(std::span<const double>, std::span<double>)> pointwise;
};

inline Target make_target(const ModelSpec& spec, const IndexedData& data) {
  auto held = std::make_shared<std::pair<ModelSpec, IndexedData>>(spec, data);
  Target t;
  t.dim = make_layout(spec).dim;
  t.n_obs = data.n_obs;
  t.logp_grad = [held](std::span<const double> q, std::vector<double>* grad) {
    return joint_log_density(held->first, held->second, q, grad);
  };
  t.pointwise = [held](std::span<const double> q, std::span<double> out) {
    pointwise_loglik(held->first, held->second, q, out);
  };
  return t;
}

struct SamplerConfig {
  int warmup = 800;
  int samples = 1500;
  int chains = 3;
  double target_acceptance = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 1;
  double init_radius = 2.0;
  int threads = 1;

  // run settings used for the joint underlying fits
  static SamplerConfig underlying_defaults() { return SamplerConfig{}; }
  // run settings used for the per-participant self/other fits
  static SamplerConfig participant_defaults() {
    SamplerConfig c;
    c.warmup = 600;
    c.samples = 1000;
    c.chains = 2;
    return c;
  }
};

struct PosteriorDraws {
  int chains = 0;
  int iters = 0;  // retained per chain
  int dim = 0;
  int n_obs = 0;
  std::vector<double> draws;      // [chain][iter][dim], unconstrained
  std::vector<double> pointwise;  // [chain][iter][n_obs]
  std::vector<int> divergences;   // per chain, over retained iterations
  std::vector<double> step_sizes; // per chain, post-adaptation
  std::vector<double> mass_diag;  // [chain][dim], estimated posterior variances
  std::vector<double> mean_accept;  // per chain
  bool divergence_flagged = false;  // divergence fraction above 10%

  int total_draws() const { return chains * iters; }

  std::span<const double> draw(int c, int i) const {
    return {draws.data() + (static_cast<std::size_t>(c) * iters + i) * dim, static_cast<std::size_t>(dim)};
  }
  std::span<const double> pointwise_row(int c, int i) const {
    return {pointwise.data() + (static_cast<std::size_t>(c) * iters + i) * n_obs,
            static_cast<std::size_t>(n_obs)};
  }
  double value(int c, int i, int p) const { return draws[(static_cast<std::size_t>(c) * iters + i) * dim + p]; }

  double parameter_mean(int p) const {
    double s = 0.0;
    for (int c = 0; c < chains; ++c) {
      for (int i = 0; i < iters; ++i) s += value(c, i, p);
    }
    return s / total_draws();
  }

  int total_divergences() const {
    int s = 0;
    for (int d : divergences) s += d;
    return s;
  }
};

namespace detail {

struct PhasePoint {
  std::vector<double> q, r, grad;
  double logp = 0.0;
};

struct NutsContext {
  const Target* target;
  std::span<const double> inv_mass;  // estimated variances (diagonal metric)
  double h0 = 0.0;
  int n_leapfrog = 0;
  double sum_accept = 0.0;
  bool divergent = false;
  Rng* rng;
};

inline double kinetic(const NutsContext& ctx, std::span<const double> r) {
  double k = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) k += r[i] * r[i] * ctx.inv_mass[i];
  return 0.5 * k;
}

inline void leapfrog(const NutsContext& ctx, PhasePoint& z, double eps_signed) {
  const int n = static_cast<int>(z.q.size());
  for (int i = 0; i < n; ++i) z.r[i] += 0.5 * eps_signed * z.grad[i];
  for (int i = 0; i < n; ++i) z.q[i] += eps_signed * ctx.inv_mass[i] * z.r[i];
  z.logp = ctx.target->logp_grad(z.q, &z.grad);
  for (int i = 0; i < n; ++i) z.r[i] += 0.5 * eps_signed * z.grad[i];
}

inline bool uturn(const NutsContext& ctx, const PhasePoint& back, const PhasePoint& front) {
  double dot_back = 0.0, dot_front = 0.0;
  for (std::size_t i = 0; i < back.q.size(); ++i) {
    const double dq = front.q[i] - back.q[i];
    dot_back += dq * ctx.inv_mass[i] * back.r[i];
    dot_front += dq * ctx.inv_mass[i] * front.r[i];
  }
  return dot_back < 0.0 || dot_front < 0.0;
}

struct Subtree {
  bool valid = false;
  double log_sum_w = -std::numeric_limits<double>::infinity();
  std::vector<double> q_prop;
  PhasePoint begin, end;  // endpoints in integration order
};

// Builds a subtree of 2^depth states starting one step past `z`; `z` is
// advanced to the subtree's far end.
inline Subtree build_tree(NutsContext& ctx, int depth, PhasePoint& z, double eps_signed) {
  Subtree t;
  if (depth == 0) {
    leapfrog(ctx, z, eps_signed);
    ctx.n_leapfrog++;
    const double h = std::isfinite(z.logp) ? -z.logp + kinetic(ctx, z.r)
                                           : std::numeric_limits<double>::infinity();
    const double dh = h - ctx.h0;
    ctx.sum_accept += dh < 0.0 ? 1.0 : std::exp(-dh);
    if (!(dh < 1000.0)) {
      ctx.divergent = true;
      t.valid = false;
      return t;
    }
    t.valid = true;
    t.log_sum_w = -dh;  // weight relative to the initial state
    t.q_prop = z.q;
    t.begin = z;
    t.end = z;
    return t;
  }
  Subtree first = build_tree(ctx, depth - 1, z, eps_signed);
  if (!first.valid) return first;
  Subtree second = build_tree(ctx, depth - 1, z, eps_signed);
  if (!second.valid) {
    second.begin = first.begin;
    return second;
  }
  Subtree merged;
  merged.log_sum_w = first.log_sum_w > second.log_sum_w
                         ? first.log_sum_w + std::log1p(std::exp(second.log_sum_w - first.log_sum_w))
                         : second.log_sum_w + std::log1p(std::exp(first.log_sum_w - second.log_sum_w));
  const double p_second = std::exp(second.log_sum_w - merged.log_sum_w);
  merged.q_prop = ctx.rng->uniform01() < p_second ? std::move(second.q_prop) : std::move(first.q_prop);
  merged.begin = std::move(first.begin);
  merged.end = std::move(second.end);
  merged.valid = !uturn(ctx, merged.begin, merged.end);
  return merged;
}

struct TransitionResult {
  bool divergent = false;
  double accept_stat = 0.0;
  int n_leapfrog = 0;
};

// One NUTS transition; updates z in place.
inline TransitionResult nuts_transition(const Target& target, PhasePoint& z, double eps,
                                        std::span<const double> inv_mass, int max_depth, Rng& rng) {
  NutsContext ctx;
  ctx.target = &target;
  ctx.inv_mass = inv_mass;
  ctx.rng = &rng;

  const int n = target.dim;
  z.r.resize(n);
  for (int i = 0; i < n; ++i) z.r[i] = rng.normal() / std::sqrt(inv_mass[i]);
  ctx.h0 = -z.logp + kinetic(ctx, z.r);

  PhasePoint z_minus = z, z_plus = z;
  std::vector<double> q_sample = z.q;
  double log_sum_w = 0.0;  // initial state weight exp(0)

  for (int depth = 0; depth < max_depth; ++depth) {
    const bool forward = rng.bernoulli(0.5);
    Subtree subtree;
    if (forward) {
      subtree = build_tree(ctx, depth, z_plus, eps);
    } else {
      subtree = build_tree(ctx, depth, z_minus, -eps);
    }
    if (!subtree.valid) break;
    // biased progressive sampling toward the new subtree
    const double accept_p = std::exp(std::min(0.0, subtree.log_sum_w - log_sum_w));
    if (rng.uniform01() < accept_p) q_sample = subtree.q_prop;
    log_sum_w = log_sum_w > subtree.log_sum_w
                    ? log_sum_w + std::log1p(std::exp(subtree.log_sum_w - log_sum_w))
                    : subtree.log_sum_w + std::log1p(std::exp(log_sum_w - subtree.log_sum_w));
    if (uturn(ctx, z_minus, z_plus)) break;
  }

  z.q = q_sample;
  z.logp = target.logp_grad(z.q, &z.grad);

  TransitionResult res;
  res.divergent = ctx.divergent;
  res.n_leapfrog = ctx.n_leapfrog;
  res.accept_stat = ctx.n_leapfrog > 0 ? ctx.sum_accept / ctx.n_leapfrog : 1.0;
  return res;
}

// Hoffman & Gelman heuristic for an initial step size.
inline double find_initial_step(const Target& target, const PhasePoint& z0,
                                std::span<const double> inv_mass, Rng& rng) {
  NutsContext ctx;
  ctx.target = &target;
  ctx.inv_mass = inv_mass;
  double eps = 1.0;
  PhasePoint z = z0;
  z.r.resize(target.dim);
  for (int i = 0; i < target.dim; ++i) z.r[i] = rng.normal() / std::sqrt(inv_mass[i]);
  const double h0 = -z.logp + kinetic(ctx, z.r);

  auto delta_h = [&](double e) {
    PhasePoint trial = z;
    leapfrog(ctx, trial, e);
    const double h = std::isfinite(trial.logp) ? -trial.logp + kinetic(ctx, trial.r)
                                               : std::numeric_limits<double>::infinity();
    return h - h0;
  };
  double dh = delta_h(eps);
  while (!std::isfinite(dh) && eps > 1e-10) {
    eps *= 0.5;
    dh = delta_h(eps);
  }
  const double dir = -dh > std::log(0.5) ? 1.0 : -1.0;
  for (int iter = 0; iter < 60; ++iter) {
    const double ratio = -delta_h(eps);
    if (dir > 0.0 ? ratio <= std::log(0.5) : ratio >= std::log(0.5)) break;
    eps *= dir > 0.0 ? 2.0 : 0.5;
    if (eps > 1e7 || eps < 1e-10) break;
  }
  return eps;
}

struct DualAveraging {
  double mu = 0.0, log_eps = 0.0, log_eps_bar = 0.0, h_bar = 0.0;
  double gamma = 0.05, t0 = 10.0, kappa = 0.75;
  int t = 0;

  void restart(double eps0) {
    mu = std::log(10.0 * eps0);
    log_eps = std::log(eps0);
    log_eps_bar = std::log(eps0);
    h_bar = 0.0;
    t = 0;
  }
  double update(double delta, double accept_stat) {
    ++t;
    h_bar = (1.0 - 1.0 / (t + t0)) * h_bar + (delta - accept_stat) / (t + t0);
    log_eps = mu - std::sqrt(static_cast<double>(t)) / gamma * h_bar;
    const double eta = std::pow(static_cast<double>(t), -kappa);
    log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar;
    return std::exp(log_eps);
  }
  double final_eps() const { return std::exp(log_eps_bar); }
};

struct ChainOutput {
  std::vector<double> draws;      // iters x dim
  std::vector<double> pointwise;  // iters x n_obs
  int divergences = 0;
  double step_size = 0.0;
  std::vector<double> mass_diag;
  double mean_accept = 0.0;
};

inline ChainOutput run_chain(const Target& target, const SamplerConfig& cfg, std::uint64_t chain_seed) {
  Rng rng(chain_seed);
  const int n = target.dim;

  PhasePoint z;
  z.q.resize(n);
  z.grad.resize(n);
  bool initialized = false;
  for (int attempt = 0; attempt < 100 && !initialized; ++attempt) {
    for (int i = 0; i < n; ++i) z.q[i] = rng.uniform(-cfg.init_radius, cfg.init_radius);
    z.logp = target.logp_grad(z.q, &z.grad);
    initialized = std::isfinite(z.logp);
    for (int i = 0; i < n && initialized; ++i) initialized = std::isfinite(z.grad[i]);
  }
  if (!initialized) {
    throw InitializationError("sampler: no finite initial density after 100 jittered draws");
  }

  std::vector<double> inv_mass(n, 1.0);
  double eps = find_initial_step(target, z, inv_mass, rng);
  DualAveraging da;
  da.restart(eps);

  // Diagonal metric from the variance of draws in the second half of
  // warmup ([0.5W, 0.9W)); the final tenth re-tunes the step size under
  // the new metric.
  const int warmup = cfg.warmup;
  const int mass_begin = warmup / 2;
  const int mass_end = std::max(mass_begin + 10, (warmup * 9) / 10);
  const bool adapt_mass = warmup >= 40;
  std::vector<double> window;  // draws collected for the metric estimate

  for (int it = 0; it < warmup; ++it) {
    const auto res = nuts_transition(target, z, eps, inv_mass, cfg.max_tree_depth, rng);
    eps = da.update(cfg.target_acceptance, res.accept_stat);
    if (adapt_mass && it >= mass_begin && it < mass_end) {
      window.insert(window.end(), z.q.begin(), z.q.end());
    }
    if (adapt_mass && it + 1 == mass_end) {
      const int m = static_cast<int>(window.size()) / n;
      for (int i = 0; i < n; ++i) {
        double s = 0.0, ss = 0.0;
        for (int k = 0; k < m; ++k) s += window[static_cast<std::size_t>(k) * n + i];
        const double mn = s / m;
        for (int k = 0; k < m; ++k) {
          const double d = window[static_cast<std::size_t>(k) * n + i] - mn;
          ss += d * d;
        }
        const double var = ss / std::max(1, m - 1);
        inv_mass[i] = (m / (m + 5.0)) * var + 1e-3 * (5.0 / (m + 5.0));
      }
      eps = find_initial_step(target, z, inv_mass, rng);
      da.restart(eps);
    }
  }
  eps = warmup > 0 ? da.final_eps() : eps;

  ChainOutput out;
  out.step_size = eps;
  out.mass_diag = inv_mass;
  out.draws.resize(static_cast<std::size_t>(cfg.samples) * n);
  if (target.pointwise) out.pointwise.resize(static_cast<std::size_t>(cfg.samples) * target.n_obs);
  double accept_total = 0.0;
  for (int it = 0; it < cfg.samples; ++it) {
    const auto res = nuts_transition(target, z, eps, inv_mass, cfg.max_tree_depth, rng);
    if (res.divergent) out.divergences++;
    accept_total += res.accept_stat;
    std::copy(z.q.begin(), z.q.end(), out.draws.begin() + static_cast<std::size_t>(it) * n);
    if (target.pointwise) {
      target.pointwise(z.q, std::span<double>(out.pointwise.data() + static_cast<std::size_t>(it) * target.n_obs,
                                              target.n_obs));
    }
  }
  out.mean_accept = cfg.samples > 0 ? accept_total / cfg.samples : 0.0;
  return out;
}

}  // namespace detail

inline PosteriorDraws sample(const Target& target, const SamplerConfig& cfg) {
  if (target.dim < 1) throw ConfigError("sample: target has no free parameters");
  if (cfg.warmup < 0 || cfg.samples < 1 || cfg.chains < 1) throw ConfigError("sample: bad config counts");

  std::vector<detail::ChainOutput> outs(cfg.chains);
  const int threads = std::max(1, std::min(cfg.threads, cfg.chains));
  if (threads == 1) {
    for (int c = 0; c < cfg.chains; ++c) outs[c] = detail::run_chain(target, cfg, split_seed(cfg.seed, c));
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(cfg.chains);
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int c = next.fetch_add(1); c < cfg.chains; c = next.fetch_add(1)) {
          try {
            outs[c] = detail::run_chain(target, cfg, split_seed(cfg.seed, c));
          } catch (...) {
            errors[c] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  PosteriorDraws d;
  d.chains = cfg.chains;
  d.iters = cfg.samples;
  d.dim = target.dim;
  d.n_obs = target.pointwise ? target.n_obs : 0;
  d.draws.resize(static_cast<std::size_t>(cfg.chains) * cfg.samples * target.dim);
  if (d.n_obs > 0) d.pointwise.resize(static_cast<std::size_t>(cfg.chains) * cfg.samples * d.n_obs);
  for (int c = 0; c < cfg.chains; ++c) {
    std::copy(outs[c].draws.begin(), outs[c].draws.end(),
              d.draws.begin() + static_cast<std::size_t>(c) * cfg.samples * target.dim);
    if (d.n_obs > 0) {
      std::copy(outs[c].pointwise.begin(), outs[c].pointwise.end(),
                d.pointwise.begin() + static_cast<std::size_t>(c) * cfg.samples * d.n_obs);
    }
    d.divergences.push_back(outs[c].divergences);
    d.step_sizes.push_back(outs[c].step_size);
    d.mass_diag.insert(d.mass_diag.end(), outs[c].mass_diag.begin(), outs[c].mass_diag.end());
    d.mean_accept.push_back(outs[c].mean_accept);
  }
  d.divergence_flagged = d.total_divergences() > 0.1 * d.total_draws();
  return d;
}

inline PosteriorDraws sample(const ModelSpec& spec, const IndexedData& data, const SamplerConfig& cfg) {
  return sample(make_target(spec, data), cfg);
}

}  // namespace hmirt
