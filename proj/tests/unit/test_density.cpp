#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "hmirt/density.hpp"

using namespace hmirt;
using namespace hmirt::testing;
using Catch::Matchers::WithinAbs;

TEST_CASE("empty data yields a prior-only density") {
  Rng rng(11);
  const ModelSpec spec = underlying_spec(Dims::one, 2, 3, 1);
  IndexedData empty;
  const ParamLayout layout = make_layout(spec);
  std::vector<double> q(layout.dim, 0.3);

  // assemble the prior sum by hand for the 1D underlying model
  const double sigma = std::exp(0.3), mu_d = 0.3, sigma_d = std::exp(0.3);
  double expected = 0.0;
  for (int i = 0; i < 2; ++i) expected += normal_lpdf(0.3, 0.0, 1.0);
  for (int j = 0; j < 3; ++j) expected += normal_lpdf(0.3, mu_d, sigma_d);
  expected += normal_lpdf(mu_d, 0.0, 2.0);
  expected += half_cauchy_log_prior(sigma_d, 5.0) + half_cauchy_log_prior(sigma, 2.0);
  expected += 0.3 + 0.3;  // log-Jacobians of the two log transforms

  CHECK_THAT(joint_log_density(spec, empty, q), WithinAbs(expected, 1e-12));
}

TEST_CASE("one observation adds exactly one likelihood term") {
  Rng rng(12);
  const ModelSpec spec = underlying_spec(Dims::one, 2, 3, 1);
  const ParamLayout layout = make_layout(spec);
  std::vector<double> q(layout.dim);
  for (auto& v : q) v = rng.uniform(-0.8, 0.8);

  IndexedData empty;
  IndexedData one;
  one.participant = {1};
  one.set = {2};
  one.score = {7};
  one.round = {1};
  one.n_obs = 1;

  const double a = q[layout.block("ability").offset + 1];
  const double d = q[layout.block("difficulty").offset + 2];
  const double sigma = std::exp(q[layout.block("sigma").offset]);
  const double ll = ordered_probit_log_pmf(logistic(a - d), make_cutpoints(13), sigma, 7);
  CHECK_THAT(joint_log_density(spec, one, q),
             WithinAbs(joint_log_density(spec, empty, q) + ll, 1e-12));
}

TEST_CASE("duplicating an observation doubles its likelihood contribution") {
  Rng rng(13);
  const ModelSpec spec = underlying_spec(Dims::multi, 2, 4, 2);
  IndexedData data = synthetic_data(spec, rng);
  std::vector<double> q(make_layout(spec).dim);
  for (auto& v : q) v = rng.uniform(-0.8, 0.8);

  const double base = joint_log_density(spec, data, q);
  IndexedData dup = data;
  dup.participant.push_back(data.participant[0]);
  dup.set.push_back(data.set[0]);
  dup.score.push_back(data.score[0]);
  dup.round.push_back(data.round[0]);
  dup.n_obs++;

  IndexedData only_first;
  only_first.participant = {data.participant[0]};
  only_first.set = {data.set[0]};
  only_first.score = {data.score[0]};
  only_first.round = {data.round[0]};
  only_first.n_obs = 1;
  IndexedData empty;
  const double term = joint_log_density(spec, only_first, q) - joint_log_density(spec, empty, q);

  CHECK_THAT(joint_log_density(spec, dup, q), WithinAbs(base + term, 1e-10));
}

TEST_CASE("identical rows make the likelihood N times a single row term") {
  Rng rng(14);
  const ModelSpec spec = underlying_spec(Dims::one, 1, 1, 1);
  std::vector<double> q(make_layout(spec).dim);
  for (auto& v : q) v = rng.uniform(-0.5, 0.5);
  IndexedData empty;
  const double prior = joint_log_density(spec, empty, q);
  for (int n : {1, 4, 9}) {
    IndexedData rep;
    rep.participant.assign(n, 0);
    rep.set.assign(n, 0);
    rep.score.assign(n, 5);
    rep.round.assign(n, 1);
    rep.n_obs = n;
    IndexedData one = rep;
    one.participant.resize(1);
    one.set.resize(1);
    one.score.resize(1);
    one.round.resize(1);
    one.n_obs = 1;
    const double per_row = joint_log_density(spec, one, q) - prior;
    CHECK_THAT(joint_log_density(spec, rep, q), WithinAbs(prior + n * per_row, 1e-10));
  }
}

TEST_CASE("gradient of independent blocks concatenates block gradients") {
  // two disjoint single-participant 1D problems evaluated jointly vs alone
  Rng rng(15);
  const ModelSpec joint = underlying_spec(Dims::one, 2, 2, 1);
  const ParamLayout layout = make_layout(joint);
  std::vector<double> q(layout.dim);
  for (auto& v : q) v = rng.uniform(-0.7, 0.7);

  IndexedData d0;
  d0.participant = {0};
  d0.set = {0};
  d0.score = {4};
  d0.round = {1};
  d0.n_obs = 1;
  IndexedData d1 = d0;
  d1.participant = {1};
  d1.set = {1};
  d1.score = {9};

  IndexedData both = d0;
  both.participant.push_back(1);
  both.set.push_back(1);
  both.score.push_back(9);
  both.round.push_back(1);
  both.n_obs = 2;

  std::vector<double> g_both, g0, g1, g_prior;
  joint_log_density(joint, both, q, &g_both);
  joint_log_density(joint, d0, q, &g0);
  joint_log_density(joint, d1, q, &g1);
  IndexedData empty;
  joint_log_density(joint, empty, q, &g_prior);
  const int ao = layout.block("ability").offset;
  // ability of participant 0 only sees d0's likelihood term
  CHECK_THAT(g_both[ao + 0], WithinAbs(g0[ao + 0], 1e-12));
  CHECK_THAT(g_both[ao + 1], WithinAbs(g1[ao + 1], 1e-12));
  CHECK_THAT(g0[ao + 1], WithinAbs(g_prior[ao + 1], 1e-12));
}

TEST_CASE("prior-only standard-normal blocks have zero gradient at the origin") {
  // 1D underlying abilities carry N(0,1) priors; at a = 0 their gradient vanishes
  const ModelSpec spec = underlying_spec(Dims::one, 3, 2, 1);
  const ParamLayout layout = make_layout(spec);
  std::vector<double> q(layout.dim, 0.0);
  IndexedData empty;
  std::vector<double> g;
  joint_log_density(spec, empty, q, &g);
  const auto& ab = layout.block("ability");
  for (int i = 0; i < ab.size; ++i) CHECK_THAT(g[ab.offset + i], WithinAbs(0.0, 1e-14));
  CHECK_THAT(g[layout.block("mu_d").offset], WithinAbs(0.0, 1e-14));
}

TEST_CASE("gradient matches finite differences for every model variant") {
  Rng rng(16);
  std::vector<std::pair<std::string, ModelSpec>> specs;
  specs.emplace_back("underlying md", underlying_spec(Dims::multi, 3, 6, 3));
  specs.emplace_back("underlying 1d", underlying_spec(Dims::one, 3, 6, 3));
  specs.emplace_back("self md", self_spec(Dims::multi, 6, 3, rng));
  specs.emplace_back("self 1d", self_spec(Dims::one, 6, 3, rng));
  specs.emplace_back("other dba md", other_spec(OtherVariant::differentiated_by_ability, Dims::multi, 6, 3, rng));
  specs.emplace_back("other dba 1d", other_spec(OtherVariant::differentiated_by_ability, Dims::one, 6, 3, rng));
  specs.emplace_back("other fd md", other_spec(OtherVariant::fully_differentiated, Dims::multi, 6, 3, rng));
  specs.emplace_back("other fd 1d", other_spec(OtherVariant::fully_differentiated, Dims::one, 6, 3, rng));

  for (auto& [label, spec] : specs) {
    INFO(label);
    const IndexedData data = synthetic_data(spec, rng);
    const int dim = make_layout(spec).dim;
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> q(dim);
      for (auto& v : q) v = rng.uniform(-1.0, 1.0);
      worst = std::max(worst, max_grad_fd_error(spec, data, q));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("undifferentiated variant has an empty layout and fixed likelihood") {
  Rng rng(17);
  ModelSpec spec = other_spec(OtherVariant::undifferentiated, Dims::multi, 4, 2, rng);
  CHECK(make_layout(spec).dim == 0);
  const IndexedData data = synthetic_data(spec, rng);
  const double lp = joint_log_density(spec, data, std::vector<double>{});
  CHECK(std::isfinite(lp));
  // equals the differentiated-by-ability likelihood at delta = 0
  ModelSpec dba = spec;
  dba.variant = OtherVariant::differentiated_by_ability;
  std::vector<double> q(make_layout(dba).dim, 0.0);
  CHECK_THAT(data_log_lik(dba, data, q), WithinAbs(lp, 1e-12));
}

TEST_CASE("1D spec matches a K=1 multi spec where the priors coincide") {
  Rng rng(18);
  ModelSpec one = underlying_spec(Dims::one, 3, 4, 1);
  ModelSpec multi = underlying_spec(Dims::multi, 3, 4, 1);
  const ParamLayout l1 = make_layout(one);
  const ParamLayout lm = make_layout(multi);
  REQUIRE(lm.dim == l1.dim + 1);  // extra chol_scale; K=1 has no correlation entries

  const IndexedData data = synthetic_data(one, rng);
  auto lift = [&](const std::vector<double>& q1) {
    // same values, chol_scale pinned at log(1) = 0 so MVN(0, 1*1) = N(0,1)
    std::vector<double> qm(lm.dim, 0.0);
    std::copy(q1.begin(), q1.end(), qm.begin());
    return qm;
  };
  std::vector<double> qa(l1.dim), qb(l1.dim);
  for (auto& v : qa) v = rng.uniform(-0.9, 0.9);
  for (auto& v : qb) v = rng.uniform(-0.9, 0.9);
  // density differences agree (the scale prior contributes an equal constant)
  const double diff_one = joint_log_density(one, data, qa) - joint_log_density(one, data, qb);
  const double diff_multi = joint_log_density(multi, data, lift(qa)) - joint_log_density(multi, data, lift(qb));
  CHECK_THAT(diff_multi, WithinAbs(diff_one, 1e-10));
}

TEST_CASE("density flags dimension mismatches") {
  Rng rng(19);
  const ModelSpec spec = underlying_spec(Dims::one, 2, 2, 1);
  const IndexedData data = synthetic_data(spec, rng);
  CHECK_THROWS_AS(joint_log_density(spec, data, std::vector<double>(3, 0.0)), ConfigError);
}

TEST_CASE("pointwise log-likelihood rows match the joint likelihood") {
  Rng rng(20);
  for (Dims dims : {Dims::one, Dims::multi}) {
    const ModelSpec spec = underlying_spec(dims, 3, 4, 2);
    const IndexedData data = synthetic_data(spec, rng);
    std::vector<double> q(make_layout(spec).dim);
    for (auto& v : q) v = rng.uniform(-0.8, 0.8);
    std::vector<double> pw(data.n_obs);
    pointwise_loglik(spec, data, q, pw);
    IndexedData empty;
    const double lik = joint_log_density(spec, data, q) - joint_log_density(spec, empty, q);
    double s = 0.0;
    for (double v : pw) s += v;
    CHECK_THAT(s, WithinAbs(lik, 1e-10));
  }
}
