#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "sure_eb/estimators.hpp"

using namespace sure_eb;

namespace {

Dataset make_data(std::vector<double> z, std::vector<double> s2) {
  Dataset d;
  d.z = Eigen::Map<ArrayXd>(z.data(), static_cast<Index>(z.size()));
  d.sigma2 = Eigen::Map<ArrayXd>(s2.data(), static_cast<Index>(s2.size()));
  d.X.resize(static_cast<Index>(z.size()), 0);
  return d;
}

Dataset random_dataset(Index n, Index dim, std::mt19937_64& gen,
                    double zsd = 2.0) {
  std::normal_distribution<double> nd(0.0, zsd);
  std::uniform_real_distribution<double> sd(0.5, 2.0);
  std::uniform_real_distribution<double> xd(-1.0, 1.0);
  Dataset d;
  d.z.resize(n);
  d.sigma2.resize(n);
  d.X.resize(n, dim);
  for (Index i = 0; i < n; ++i) {
    d.z[i] = nd(gen);
    d.sigma2[i] = sd(gen);
    for (Index c = 0; c < dim; ++c) d.X(i, c) = xd(gen);
  }
  return d;
}

// mirrors the canonical ordering the estimators sort by
std::vector<Index> sorted_order(const Dataset& d) {
  std::vector<Index> idx(static_cast<size_t>(d.n()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::sort(idx.begin(), idx.end(), [&d](Index a, Index b) {
    if (d.z[a] != d.z[b]) return d.z[a] < d.z[b];
    if (d.sigma2[a] != d.sigma2[b]) return d.sigma2[a] < d.sigma2[b];
    for (Index c = 0; c < d.X.cols(); ++c)
      if (d.X(a, c) != d.X(b, c)) return d.X(a, c) < d.X(b, c);
    return false;
  });
  return idx;
}

Dataset pick(const Dataset& d, const std::vector<Index>& idx) {
  Dataset out;
  const Index m = static_cast<Index>(idx.size());
  out.z.resize(m);
  out.sigma2.resize(m);
  out.X.resize(m, d.X.cols());
  for (Index k = 0; k < m; ++k) {
    out.z[k] = d.z[idx[static_cast<size_t>(k)]];
    out.sigma2[k] = d.sigma2[idx[static_cast<size_t>(k)]];
    if (d.X.cols() > 0) out.X.row(k) = d.X.row(idx[static_cast<size_t>(k)]);
  }
  return out;
}

double linear_rule_sure(const ArrayXd& z, const ArrayXd& s2,
                        const ArrayXd& centers, double A) {
  const ArrayXd denom = s2 + A;
  return (s2.square() * (z - centers).square() / denom.square() + s2 -
          2.0 * s2.square() / denom)
      .mean();
}

// dense grid over t = log(1+A), same bracket the estimators use
double grid_min_sure(const ArrayXd& z, const ArrayXd& s2,
                     const ArrayXd& centers, double bracket_var,
                     int points = 20001) {
  const double hi = std::log1p(std::max(10.0 * bracket_var, 1e-12));
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < points; ++k) {
    const double t = hi * static_cast<double>(k) / (points - 1);
    best = std::min(best, linear_rule_sure(z, s2, centers, std::expm1(t)));
  }
  return best;
}

double sample_variance(const ArrayXd& z) {
  if (z.size() < 2) return 0.0;
  const double m = z.mean();
  return (z - m).square().sum() / static_cast<double>(z.size() - 1);
}

bool traces_close(const std::vector<double>& a, const std::vector<double>& b,
                  double rel) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) >
        rel * std::max({std::abs(a[i]), std::abs(b[i]), 1.0}))
      return false;
  return true;
}

}  // namespace

TEST_CASE("npmle with a single observation returns it unchanged") {
  const auto fit = fit_npmle(make_data({3.5}, {2.0}), FitConfig{});
  REQUIRE(fit.prior.has_value());
  REQUIRE(fit.prior->size() == 1);
  CHECK(fit.prior->atoms[0] == 3.5);
  CHECK(fit.prior->weights[0] == 1.0);
  CHECK(fit.estimates[0] == doctest::Approx(3.5).epsilon(1e-14));
  CHECK(fit.post_var[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::isfinite(fit.final_loss));
}

TEST_CASE("npmle em never increases the negative log likelihood") {
  std::mt19937_64 gen(101);
  const Dataset d = random_dataset(80, 0, gen);
  FitConfig cfg;
  cfg.K = 50;
  cfg.iters = 500;
  const auto fit = fit_npmle(d, cfg);
  REQUIRE(!fit.loss_trace.empty());
  for (size_t t = 1; t < fit.loss_trace.size(); ++t)
    CHECK(fit.loss_trace[t] <= fit.loss_trace[t - 1] + 1e-12);
  CHECK(fit.loss_trace.back() == fit.final_loss);
  CHECK(fit.iterations_run <= 500);

  REQUIRE(fit.prior.has_value());
  CHECK(fit.prior->size() == 50);
  CHECK(fit.prior->weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.prior->atoms.minCoeff() == doctest::Approx(d.z.minCoeff()));
  CHECK(fit.prior->atoms.maxCoeff() == doctest::Approx(d.z.maxCoeff()));
}

TEST_CASE("npmle grid degenerates to one atom when asked or forced") {
  const auto forced = fit_npmle(make_data({2, 2, 2}, {1, 1, 1}), FitConfig{});
  REQUIRE(forced.prior->size() == 1);
  CHECK(forced.prior->atoms[0] == 2.0);

  FitConfig cfg;
  cfg.K = 1;
  const auto single = fit_npmle(make_data({0, 1, 4}, {1, 1, 1}), cfg);
  REQUIRE(single.prior->size() == 1);
  CHECK(single.prior->atoms[0] == 0.0);
  CHECK((single.estimates == 0.0).all());
}

TEST_CASE("loss traces end at the reported final loss and improve") {
  std::mt19937_64 gen(55);
  const Dataset d = random_dataset(40, 1, gen);
  FitConfig cfg;
  cfg.K = 5;
  cfg.iters = 120;
  for (const char* method : {"sure-pm", "sure-ls", "sure-thing", "npmle"}) {
    const auto fit = fit_method(method, d, cfg);
    INFO("method ", std::string(method));
    REQUIRE(!fit.loss_trace.empty());
    for (double v : fit.loss_trace) CHECK(std::isfinite(v));
    CHECK(fit.loss_trace.back() == fit.final_loss);
    CHECK(fit.loss_trace.back() <= fit.loss_trace.front() + 1e-12);
    CHECK(fit.iterations_run >= 1);
  }
  for (const char* method : {"grandmean", "mle"}) {
    const auto fit = fit_method(method, d, cfg);
    REQUIRE(fit.loss_trace.size() == 1);
    CHECK(fit.loss_trace[0] == fit.final_loss);
  }
}

TEST_CASE("grandmean shrinkage is as good as a dense grid search") {
  std::mt19937_64 gen(7);
  const Dataset d = random_dataset(30, 0, gen);
  const auto fit = fit_grandmean(d, FitConfig{});
  REQUIRE(fit.A.has_value());
  CHECK(*fit.A >= 0.0);
  CHECK(fit.center == doctest::Approx(pick(d, sorted_order(d)).z.mean())
                          .epsilon(1e-15));

  const ArrayXd centers = ArrayXd::Constant(d.n(), fit.center);
  const double lib = linear_rule_sure(d.z, d.sigma2, centers, *fit.A);
  const double grid =
      grid_min_sure(d.z, d.sigma2, centers, sample_variance(d.z));
  CHECK(lib <= grid + 1e-9 * (1.0 + std::abs(grid)));
  CHECK(fit.final_loss == doctest::Approx(lib).epsilon(1e-12));

  // estimates follow the closed-form posterior of a N(center, A) prior
  for (Index i = 0; i < d.n(); ++i) {
    const double want =
        (d.sigma2[i] * fit.center + *fit.A * d.z[i]) / (d.sigma2[i] + *fit.A);
    CHECK(fit.estimates[i] == doctest::Approx(want).epsilon(1e-12));
    const double pv = d.sigma2[i] * *fit.A / (d.sigma2[i] + *fit.A);
    CHECK(fit.post_var[i] == doctest::Approx(pv).epsilon(1e-12));
  }
  REQUIRE(fit.rule.has_value());
  CHECK((fit.rule->apply(d.z) == fit.estimates).all());
}

TEST_CASE("grandmean limits: constant data and spread-out data") {
  const auto flat = fit_grandmean(make_data({5, 5, 5, 5}, {1, 2, 1, 2}),
                                  FitConfig{});
  CHECK(*flat.A <= 1e-10);
  for (Index i = 0; i < 4; ++i)
    CHECK(flat.estimates[i] == doctest::Approx(5.0).epsilon(1e-12));

  const Dataset dw = make_data({-300, -200, -100, 100, 200, 300},
                               {1, 1, 1, 1, 1, 1});
  const auto wide = fit_grandmean(dw, FitConfig{});
  for (Index i = 0; i < 6; ++i)
    CHECK(std::abs(wide.estimates[i] - dw.z[i]) <= 1e-3 * std::abs(dw.z[i]));
  CHECK(wide.final_loss == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("ebcf estimates decompose through its folds") {
  std::mt19937_64 gen(303);
  const Dataset d = random_dataset(60, 2, gen);
  FitConfig cfg;
  cfg.iters = 80;
  cfg.seed = 11;
  const auto fit = fit_ebcf(d, cfg);

  REQUIRE(fit.folds.size() == 5);
  REQUIRE(fit.fold_nets.size() == 5);
  REQUIRE(fit.fold_A.size() == 5);

  // folds partition the observation indices
  std::vector<int> seen(60, 0);
  for (const auto& f : fit.folds)
    for (Index i : f) ++seen[static_cast<size_t>(i)];
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));

  const MatrixXd inputs = net_inputs(d, false);
  ArrayXd terms(d.n());
  for (size_t f = 0; f < fit.folds.size(); ++f) {
    CHECK(fit.fold_A[static_cast<Index>(f)] >= 0.0);
    for (Index i : fit.folds[f]) {
      const VectorXd x = inputs.row(i).transpose();
      const double m = mlp_forward(fit.fold_nets[f], x)[0];
      const double A = fit.fold_A[static_cast<Index>(f)];
      const double lam = d.sigma2[i] / (d.sigma2[i] + A);
      const double est = lam * m + (1.0 - lam) * d.z[i];
      CHECK(std::abs(fit.estimates[i] - est) <=
            1e-10 * (1.0 + std::abs(est)));
      const double pv = d.sigma2[i] * A / (d.sigma2[i] + A);
      CHECK(std::abs(fit.post_var[i] - pv) <= 1e-10 * (1.0 + pv));
      const double den = d.sigma2[i] + A;
      terms[i] = d.sigma2[i] * d.sigma2[i] * (d.z[i] - m) * (d.z[i] - m) /
                     (den * den) +
                 d.sigma2[i] - 2.0 * d.sigma2[i] * d.sigma2[i] / den;
    }
  }
  CHECK(fit.final_loss ==
        doctest::Approx(terms.mean()).epsilon(1e-9));

  // each fold's A matches a dense grid search on its own holdout SURE
  const double bracket = sample_variance(d.z);
  for (size_t f = 0; f < fit.folds.size(); ++f) {
    const auto& hold = fit.folds[f];
    const Index nh = static_cast<Index>(hold.size());
    ArrayXd zh(nh), s2h(nh), mh(nh);
    for (Index k = 0; k < nh; ++k) {
      const Index i = hold[static_cast<size_t>(k)];
      zh[k] = d.z[i];
      s2h[k] = d.sigma2[i];
      mh[k] = mlp_forward(fit.fold_nets[f], VectorXd(inputs.row(i)))[0];
    }
    const double lib =
        linear_rule_sure(zh, s2h, mh, fit.fold_A[static_cast<Index>(f)]);
    const double grid = grid_min_sure(zh, s2h, mh, bracket);
    CHECK(lib <= grid + 1e-8 * (1.0 + std::abs(grid)));
  }
}

TEST_CASE("conditional gaussian head recovers its closed forms") {
  std::mt19937_64 gen(88);
  std::uniform_real_distribution<double> md(-2.0, 2.0);
  std::uniform_real_distribution<double> ad(-3.0, 3.0);
  std::uniform_real_distribution<double> zd(-4.0, 4.0);
  std::uniform_real_distribution<double> sd(0.4, 2.5);
  for (int t = 0; t < 50; ++t) {
    const double m = md(gen), at = ad(gen), z = zd(gen), s2 = sd(gen);
    double gm, gat;
    const double T = ls_term_value_and_grad(m, at, z, s2, gm, gat);
    // shrinkage form of the same risk estimate
    const long double A = expl(static_cast<long double>(at));
    const long double lam = s2 / (s2 + A);
    const long double alt = s2 + lam * lam * (z - m) * (z - m) -
                            2.0L * s2 * lam;
    CHECK(T == doctest::Approx(static_cast<double>(alt)).epsilon(1e-12));
    // gradients against central differences
    double g1, g2;
    const double h = 1e-6;
    const double fdm = (ls_term_value_and_grad(m + h, at, z, s2, g1, g2) -
                        ls_term_value_and_grad(m - h, at, z, s2, g1, g2)) /
                       (2 * h);
    const double fda = (ls_term_value_and_grad(m, at + h, z, s2, g1, g2) -
                        ls_term_value_and_grad(m, at - h, z, s2, g1, g2)) /
                       (2 * h);
    CHECK(std::abs(gm - fdm) <=
          1e-5 * std::max({std::abs(fdm), std::abs(gm), 1e-6}));
    CHECK(std::abs(gat - fda) <=
          1e-5 * std::max({std::abs(fda), std::abs(gat), 1e-6}));
  }

  // clamped log-variance freezes A and kills its gradient
  double gm, gat;
  const double lo = ls_term_value_and_grad(0.0, -40.0, 1.0, 1.0, gm, gat);
  CHECK(gat == 0.0);
  CHECK(ls_term_value_and_grad(0.0, -55.0, 1.0, 1.0, gm, gat) == lo);
  CHECK(gat == 0.0);
  // A -> 0 gives the unbiased risk of the MLE of a point mass at m
  CHECK(lo == doctest::Approx(1.0 * 1.0 - 1.0).epsilon(1e-10));
  const double hi = ls_term_value_and_grad(0.0, 40.0, 1.0, 1.0, gm, gat);
  CHECK(hi == doctest::Approx(1.0).epsilon(1e-10));  // A -> inf keeps z
}

TEST_CASE("linear shrinkage terms via a hand-built fit") {
  FitResult fit;
  fit.method = "sure-ls";
  MlpParams net(1, 2);
  net.b3() << 0.0, -40.0;  // m = 0, A = exp(-40) ~ 0
  fit.net = net;
  const Dataset d = make_data({1.5, -2.0, 0.3}, {0.6, 1.1, 0.9});
  const ArrayXd t0 = sure_terms_at(fit, d);
  for (Index i = 0; i < 3; ++i)
    CHECK(t0[i] ==
          doctest::Approx(d.z[i] * d.z[i] - d.sigma2[i]).epsilon(1e-10));

  net.b3() << 0.0, 40.0;  // A = exp(40), rule keeps z
  fit.net = net;
  const ArrayXd t1 = sure_terms_at(fit, d);
  for (Index i = 0; i < 3; ++i)
    CHECK(t1[i] == doctest::Approx(d.sigma2[i]).epsilon(1e-10));
}

TEST_CASE("holdout sure terms average to the training loss") {
  std::mt19937_64 gen(404);
  const Dataset d = random_dataset(40, 1, gen);
  FitConfig cfg;
  cfg.K = 5;
  cfg.iters = 120;
  for (const char* method :
       {"sure-pm", "sure-ls", "sure-thing", "npmle", "grandmean"}) {
    const auto fit = fit_method(method, d, cfg);
    const double mean_terms = sure_terms_at(fit, d).mean();
    INFO("method ", std::string(method));
    if (std::string(method) == "npmle") {
      CHECK(std::isfinite(mean_terms));  // npmle trains on likelihood instead
    } else {
      CHECK(mean_terms == doctest::Approx(fit.final_loss).epsilon(1e-9));
    }
  }
  const auto mle = fit_mle(d, cfg);
  CHECK_THROWS_AS(sure_terms_at(mle, d), usage_error);
}

TEST_CASE("network head reduces to particles when only its bias is live") {
  std::mt19937_64 gen(606);
  const Dataset d = random_dataset(30, 0, gen);
  FitConfig cfg;
  cfg.K = 5;
  cfg.iters = 25;
  const ParticleParams p0 = init_particles(d, 5);

  MlpParams net0(1, 10);
  net0.b3() = p0.pack();
  const auto pm = fit_sure_pm_from(p0, d, cfg);
  const auto thing = fit_sure_thing_from(net0, p0.m, d, cfg);

  CHECK(traces_close(pm.loss_trace, thing.loss_trace, 1e-8));
  REQUIRE(pm.estimates.size() == thing.estimates.size());
  for (Index i = 0; i < d.n(); ++i) {
    CHECK(std::abs(pm.estimates[i] - thing.estimates[i]) <=
          1e-6 * (1.0 + std::abs(pm.estimates[i])));
    CHECK(std::abs(pm.post_var[i] - thing.post_var[i]) <=
          1e-6 * (1.0 + pm.post_var[i]));
  }

  // every gradient upstream of the output bias is exactly zero
  REQUIRE(thing.net.has_value());
  CHECK((thing.net->W1().array() == 0.0).all());
  CHECK((thing.net->b1().array() == 0.0).all());
  CHECK((thing.net->W2().array() == 0.0).all());
  CHECK((thing.net->b2().array() == 0.0).all());
  CHECK((thing.net->W3().array() == 0.0).all());
  CHECK((thing.net->b3().array() != net0.b3().array()).any());
}

TEST_CASE("estimators are exactly permutation equivariant") {
  std::mt19937_64 gen(909);
  const Dataset d = random_dataset(40, 2, gen);
  std::vector<Index> perm(40);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), gen);
  const Dataset dp = pick(d, perm);

  FitConfig cfg;
  cfg.K = 8;
  cfg.iters = 40;
  cfg.seed = 3;
  for (const char* method : {"sure-pm", "sure-ls", "sure-thing", "npmle",
                             "grandmean", "ebcf", "mle"}) {
    INFO("method ", std::string(method));
    const auto a = fit_method(method, d, cfg);
    const auto b = fit_method(method, dp, cfg);
    CHECK(a.final_loss == b.final_loss);
    for (Index i = 0; i < 40; ++i) {
      CHECK(a.estimates[perm[static_cast<size_t>(i)]] == b.estimates[i]);
      if (a.post_var.size() > 0)
        CHECK(a.post_var[perm[static_cast<size_t>(i)]] == b.post_var[i]);
    }
  }
}

TEST_CASE("shifting the data shifts the particle estimates") {
  std::mt19937_64 gen(1212);
  const Dataset d = random_dataset(50, 0, gen);
  Dataset ds = d;
  ds.z += 4.0;
  FitConfig cfg;
  cfg.K = 10;
  cfg.iters = 100;
  const auto a = fit_sure_pm(d, cfg);
  const auto b = fit_sure_pm(ds, cfg);
  for (Index i = 0; i < d.n(); ++i)
    CHECK(std::abs(b.estimates[i] - (a.estimates[i] + 4.0)) <= 1e-6);
}

TEST_CASE("cross-validated sure picks the dominating grid point") {
  std::mt19937_64 gen(1515);
  const Dataset d = random_dataset(40, 0, gen, 3.0);
  FitConfig bad;
  bad.K = 1;  // one atom pinned at the sample minimum
  bad.iters = 300;
  FitConfig good = bad;
  good.K = 25;

  const auto res = cv_sure(d, "npmle", {bad, good}, 4);
  REQUIRE(res.grid.size() == 2);
  REQUIRE(res.fold_scores.rows() == 2);
  REQUIRE(res.fold_scores.cols() == 4);
  for (Index f = 0; f < 4; ++f)
    CHECK(res.fold_scores(1, f) < res.fold_scores(0, f));
  CHECK(res.mean_scores[0] ==
        doctest::Approx(res.fold_scores.row(0).mean()).epsilon(1e-15));
  CHECK(res.chosen == 1);
  CHECK(res.chosen_config().K == 25);

  // reproduce one table entry end to end
  const Dataset sorted = pick(d, sorted_order(d));
  const auto folds = make_folds(40, 4, bad.seed, bad.replicate);
  std::vector<Index> comp;
  for (size_t h = 0; h < folds.size(); ++h)
    if (h != 2) comp.insert(comp.end(), folds[h].begin(), folds[h].end());
  std::sort(comp.begin(), comp.end());
  const auto refit = fit_npmle(pick(sorted, comp), good);
  const double score = sure_terms_at(refit, pick(sorted, folds[2])).mean();
  CHECK(score == res.fold_scores(1, 2));

  const auto solo = cv_sure(d, "npmle", {good}, 4);
  CHECK(solo.chosen == 0);
}

TEST_CASE("fold construction is balanced and validated") {
  const auto folds = make_folds(23, 5, 9, 2);
  REQUIRE(folds.size() == 5);
  std::vector<int> seen(23, 0);
  for (const auto& f : folds) {
    CHECK(f.size() >= 4);
    CHECK(f.size() <= 5);
    CHECK(std::is_sorted(f.begin(), f.end()));
    for (Index i : f) ++seen[static_cast<size_t>(i)];
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  // deterministic in the key, different across replicates
  CHECK(make_folds(23, 5, 9, 2) == folds);
  CHECK(make_folds(23, 5, 9, 3) != folds);
  CHECK_THROWS_AS(make_folds(23, 1, 0, 0), usage_error);
  CHECK_THROWS_AS(make_folds(8, 5, 0, 0), data_error);
}

TEST_CASE("net inputs append the noise scale") {
  const Dataset d = make_data({1.0, 2.0, 3.0}, {4.0, 9.0, 16.0});
  const MatrixXd raw = net_inputs(d, false);
  REQUIRE(raw.cols() == 1);
  CHECK(raw(0, 0) == 2.0);
  CHECK(raw(1, 0) == 3.0);
  CHECK(raw(2, 0) == 4.0);

  std::mt19937_64 gen(33);
  const Dataset r = random_dataset(50, 3, gen);
  const MatrixXd sc = net_inputs(r, true);
  REQUIRE(sc.cols() == 4);
  for (Index c = 0; c < 4; ++c) {
    CHECK(std::abs(sc.col(c).mean()) <= 1e-12);
    const double sd = std::sqrt(sc.col(c).array().square().sum() / 49.0);
    CHECK(sd == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("estimator input validation") {
  FitConfig cfg;
  const Dataset tiny = make_data({1.0}, {1.0});
  CHECK_THROWS_AS(fit_method("bogus", tiny, cfg), usage_error);
  CHECK_THROWS_AS(fit_sure_pm(tiny, cfg), data_error);
  CHECK_THROWS_AS(fit_sure_pm(make_data({2, 2, 2}, {1, 1, 1}), cfg),
                  data_error);
  CHECK_THROWS_AS(fit_ebcf(make_data({1, 2, 3, 4}, {1, 1, 1, 1}), cfg),
                  data_error);
  Dataset empty;
  empty.X.resize(0, 0);
  CHECK_THROWS_AS(fit_npmle(empty, cfg), data_error);
  CHECK_THROWS_AS(fit_mle(empty, cfg), data_error);

  const Dataset d = make_data({1, 2, 3, 4, 5, 6, 7, 8},
                              {1, 1, 1, 1, 1, 1, 1, 1});
  CHECK_THROWS_AS(cv_sure(d, "mle", {cfg}, 2), usage_error);
  CHECK_THROWS_AS(cv_sure(d, "npmle", {}, 2), usage_error);
}
