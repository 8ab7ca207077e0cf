#include "sure_eb/simgen.hpp"

#include <cmath>
#include <map>

#include "sure_eb/rng.hpp"

namespace sure_eb {

namespace {

const std::map<std::string, Setting>& name_map() {
  static const std::map<std::string, Setting> m = {
      {"uniform_prior", Setting::uniform_prior},
      {"inv_chisq_prior", Setting::inv_chisq_prior},
      {"bimodal_twopoint_var", Setting::bimodal_twopoint_var},
      {"uniform_likelihood", Setting::uniform_likelihood},
      {"twopoint_prior", Setting::twopoint_prior},
      {"poisson_prior", Setting::poisson_prior},
      {"multi_covariate", Setting::multi_covariate},
      {"hetero_one_covariate", Setting::hetero_one_covariate},
      {"homosc_normal", Setting::homosc_normal},
      {"compound_twopoint", Setting::compound_twopoint},
  };
  return m;
}

// Posterior mean under a two-point prior w1 d_{u1} + w2 d_{u2}, stable in the
// log domain.
double twopoint_posterior_mean(double u1, double u2, double w1, double w2,
                               double z, double sigma2) {
  const double g1 = std::log(w1) - (z - u1) * (z - u1) / (2.0 * sigma2);
  const double g2 = std::log(w2) - (z - u2) * (z - u2) / (2.0 * sigma2);
  const double m = std::max(g1, g2);
  const double e1 = std::exp(g1 - m), e2 = std::exp(g2 - m);
  return (e1 * u1 + e2 * u2) / (e1 + e2);
}

double normal_posterior_mean(double prior_mean, double prior_var, double z,
                             double sigma2) {
  return (prior_var * z + sigma2 * prior_mean) / (prior_var + sigma2);
}

double multi_covariate_center(const Eigen::Ref<const VectorXd>& x) {
  return std::numbers::pi * x[0] * x[1] +
         20.0 * (x[2] - 0.5) * (x[2] - 0.5) + 5.0 * x[3];
}

double poisson_posterior_mean(double lambda, double z, double sigma2) {
  // support truncated where the Poisson tail is below 1e-12
  const Index kmax = static_cast<Index>(
      std::ceil(lambda + 12.0 * std::sqrt(lambda) + 30.0));
  double m = -std::numeric_limits<double>::infinity();
  std::vector<double> logw(static_cast<size_t>(kmax) + 1);
  double log_pk = -lambda;  // log P(K=0)
  for (Index k = 0; k <= kmax; ++k) {
    if (k > 0) log_pk += std::log(lambda) - std::log(static_cast<double>(k));
    const double d = z - static_cast<double>(k);
    logw[static_cast<size_t>(k)] = log_pk - d * d / (2.0 * sigma2);
    m = std::max(m, logw[static_cast<size_t>(k)]);
  }
  double num = 0, den = 0;
  for (Index k = 0; k <= kmax; ++k) {
    const double e = std::exp(logw[static_cast<size_t>(k)] - m);
    num += e * static_cast<double>(k);
    den += e;
  }
  return num / den;
}

}  // namespace

std::string setting_name(Setting s) {
  for (const auto& [name, val] : name_map())
    if (val == s) return name;
  throw usage_error("unknown setting enum value");
}

Setting setting_from_name(const std::string& name) {
  const auto it = name_map().find(name);
  if (it == name_map().end()) {
    std::string valid;
    for (const auto& [n, v] : name_map()) valid += (valid.empty() ? "" : ", ") + n;
    throw usage_error("unknown setting: " + name + " (valid: " + valid + ")");
  }
  return it->second;
}

void DgpSpec::validate() const {
  if (n < 1) throw usage_error("need n >= 1");
  if (setting == Setting::homosc_normal) {
    if (!(a_star == 0.1 || a_star == 1.0 || a_star == 5.0))
      throw usage_error("homosc_normal supports a_star in {0.1, 1, 5}");
  }
  if (setting == Setting::compound_twopoint) {
    if (!(m_star == 3 || m_star == 4 || m_star == 5 || m_star == 7))
      throw usage_error("compound_twopoint supports m_star in {3, 4, 5, 7}");
    if (!(k_star == 5 || k_star == 50 || k_star == 500))
      throw usage_error("compound_twopoint supports k_star in {5, 50, 500}");
    if (k_star > n) throw usage_error("compound_twopoint needs k_star <= n");
  }
}

SimDraw generate(const DgpSpec& spec) {
  spec.validate();
  const Index n = spec.n;
  SimDraw draw;
  draw.mu.resize(n);
  draw.data.z.resize(n);
  draw.data.sigma2.resize(n);
  Index d = 0;
  if (spec.setting == Setting::multi_covariate) d = 5;
  if (spec.setting == Setting::hetero_one_covariate) d = 1;
  draw.data.X.resize(n, d);

  Rng rng(spec.seed, spec.replicate, Stream::dgp);
  for (Index i = 0; i < n; ++i) {
    double s2 = 1.0, mu = 0.0, z = 0.0;
    switch (spec.setting) {
      case Setting::uniform_prior:
        s2 = rng.uniform(0.1, 1.0);
        mu = s2;
        z = rng.normal(mu, std::sqrt(s2));
        break;
      case Setting::inv_chisq_prior:
        s2 = 1.0 / rng.chi2_even_df(10);
        mu = s2;
        z = rng.normal(mu, std::sqrt(s2));
        break;
      case Setting::bimodal_twopoint_var:
        s2 = rng.bernoulli(0.5) ? 0.1 : 0.5;
        mu = s2 == 0.1 ? rng.normal(2.0, std::sqrt(0.1))
                       : rng.normal(0.0, std::sqrt(0.5));
        z = rng.normal(mu, std::sqrt(s2));
        break;
      case Setting::uniform_likelihood:
        s2 = rng.uniform(0.1, 1.0);
        mu = s2;
        z = rng.uniform(mu - std::sqrt(3.0 * s2), mu + std::sqrt(3.0 * s2));
        break;
      case Setting::twopoint_prior:
        s2 = rng.uniform(0.1, 0.5);
        mu = rng.bernoulli(0.5) ? s2 : 10.0 * s2;
        z = rng.normal(mu, std::sqrt(s2));
        break;
      case Setting::poisson_prior:
        s2 = rng.uniform(0.1, 1.0);
        mu = static_cast<double>(rng.poisson(2.0 * s2));
        z = rng.normal(mu, std::sqrt(s2));
        break;
      case Setting::multi_covariate: {
        s2 = rng.uniform(1.5, 2.5);
        for (Index c = 0; c < 5; ++c) draw.data.X(i, c) = rng.uniform01();
        mu = rng.normal(multi_covariate_center(draw.data.X.row(i).transpose()),
                        2.0);
        z = rng.normal(mu, std::sqrt(s2));
        break;
      }
      case Setting::hetero_one_covariate: {
        const double x = rng.uniform01();
        draw.data.X(i, 0) = x;
        s2 = 2.0 * x * x + 5.0 * x + 1.0;
        mu = rng.normal(2.0 * s2 + 0.5, 0.5 * std::sqrt(s2));
        z = rng.normal(mu, std::sqrt(s2));
        break;
      }
      case Setting::homosc_normal:
        s2 = 1.0;
        mu = rng.normal(10.0, std::sqrt(spec.a_star));
        z = rng.normal(mu, 1.0);
        break;
      case Setting::compound_twopoint:
        s2 = 1.0;
        mu = i < spec.k_star ? spec.m_star : 0.0;
        z = rng.normal(mu, 1.0);
        break;
    }
    draw.data.sigma2[i] = s2;
    draw.mu[i] = mu;
    draw.data.z[i] = z;
  }

  ArrayXd oracle(n);
  for (Index i = 0; i < n; ++i) {
    Observation obs;
    obs.z = draw.data.z[i];
    obs.sigma2 = draw.data.sigma2[i];
    obs.covariates = d > 0 ? VectorXd(draw.data.X.row(i).transpose())
                           : VectorXd(0);
    oracle[i] = oracle_estimate(spec, obs);
  }
  draw.oracle_estimates = oracle;
  return draw;
}

double oracle_estimate(const DgpSpec& spec, const Observation& obs) {
  const double z = obs.z, s2 = obs.sigma2;
  switch (spec.setting) {
    case Setting::uniform_prior:
    case Setting::inv_chisq_prior:
    case Setting::uniform_likelihood:
      return s2;  // mu = sigma2 deterministically
    case Setting::bimodal_twopoint_var:
      return s2 == 0.1 ? normal_posterior_mean(2.0, 0.1, z, s2)
                       : normal_posterior_mean(0.0, 0.5, z, s2);
    case Setting::twopoint_prior:
      return twopoint_posterior_mean(s2, 10.0 * s2, 0.5, 0.5, z, s2);
    case Setting::poisson_prior:
      return poisson_posterior_mean(2.0 * s2, z, s2);
    case Setting::multi_covariate:
      if (obs.covariates.size() != 5)
        throw data_error("multi_covariate oracle needs 5 covariates");
      return normal_posterior_mean(multi_covariate_center(obs.covariates),
                                   4.0, z, s2);
    case Setting::hetero_one_covariate:
      return normal_posterior_mean(2.0 * s2 + 0.5, 0.25 * s2, z, s2);
    case Setting::homosc_normal:
      return normal_posterior_mean(10.0, spec.a_star, z, s2);
    case Setting::compound_twopoint: {
      // best simple separable rule: Bayes under the empirical two-point prior
      const double w1 =
          static_cast<double>(spec.n - spec.k_star) / static_cast<double>(spec.n);
      if (w1 == 0.0) return spec.m_star;
      if (w1 == 1.0) return 0.0;
      return twopoint_posterior_mean(0.0, spec.m_star, w1, 1.0 - w1, z, s2);
    }
  }
  throw usage_error("no oracle for this setting");
}

}  // namespace sure_eb
