#include "sure_eb/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>

#include "sure_eb/quadrature.hpp"
#include "sure_eb/rng.hpp"
#include "sure_eb/threads.hpp"

namespace sure_eb {

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  const double B = static_cast<double>(v.size());
  return std::sqrt(ss / (B - 1.0) / B);
}

}  // namespace

const MseReport::MethodRow& MseReport::row(const std::string& method) const {
  for (const auto& r : rows)
    if (r.method == method) return r;
  throw data_error("no such method row: " + method);
}

const FissionReport::MethodRow& FissionReport::row(
    const std::string& method) const {
  for (const auto& r : rows)
    if (r.method == method) return r;
  throw data_error("no such method row: " + method);
}

double insample_mse(const ArrayXd& mu, const ArrayXd& estimates) {
  if (mu.size() != estimates.size())
    throw data_error("insample_mse length mismatch");
  if (mu.size() == 0) throw data_error("empty vectors");
  return (mu - estimates).square().mean();
}

double regret_quadrature(const ParticlePrior& g_star,
                         const ParticlePrior& g_hat, double sigma2,
                         double abs_tol) {
  g_star.validate();
  g_hat.validate();
  if (!(sigma2 > 0)) throw data_error("sigma2 must be positive");
  const double sigma = std::sqrt(sigma2);
  const double lo = std::min(g_star.atoms.minCoeff(), g_hat.atoms.minCoeff()) -
                    10.0 * sigma;
  const double hi = std::max(g_star.atoms.maxCoeff(), g_hat.atoms.maxCoeff()) +
                    10.0 * sigma;
  auto integrand = [&](double z) {
    Observation obs;
    obs.z = z;
    obs.sigma2 = sigma2;
    const double m_star = posterior_summary(g_star, obs).mean;
    const double m_hat = posterior_summary(g_hat, obs).mean;
    const double f_star = std::exp(log_marginal(g_star, z, sigma2));
    const double d = m_hat - m_star;
    return d * d * f_star;
  };
  return integrate_adaptive(integrand, lo, hi, abs_tol).value;
}

std::pair<Dataset, Dataset> fission_split(const Dataset& data,
                                          const ArrayXd& eps) {
  data.validate();
  if (eps.size() != data.n()) throw data_error("eps length mismatch");
  Dataset f1 = data, f2 = data;
  f1.z = data.z + eps;
  f2.z = data.z - eps;
  f1.sigma2 = 2.0 * data.sigma2;
  f2.sigma2 = 2.0 * data.sigma2;
  return {f1, f2};
}

std::pair<Dataset, Dataset> fission_split(const Dataset& data,
                                          std::uint64_t seed,
                                          std::uint64_t replicate) {
  Rng rng(seed, replicate, Stream::fission);
  ArrayXd eps(data.n());
  for (Index i = 0; i < data.n(); ++i)
    eps[i] = rng.normal(0.0, std::sqrt(data.sigma2[i]));
  return fission_split(data, eps);
}

FissionReport fission_evaluate(const Dataset& data,
                               const std::vector<std::string>& methods, int B,
                               std::uint64_t seed, const FitConfig& config) {
  data.validate();
  if (B < 2) throw usage_error("fission needs B >= 2");

  // npmle anchors the RI denominator; mle is the RI zero point
  std::vector<std::string> all = methods;
  for (const char* forced : {"npmle", "mle"})
    if (std::find(all.begin(), all.end(), forced) == all.end())
      all.emplace_back(forced);
  for (const auto& m : all)
    if (!is_known_method(m)) throw usage_error("unknown method: " + m);

  const size_t M = all.size();
  std::vector<std::vector<double>> fmse(M, std::vector<double>(B, 0.0));
  std::vector<std::vector<double>> ri(M, std::vector<double>(B, 0.0));

  parallel_for(B, [&](Index b) {
    FitConfig cfg = config;
    cfg.replicate = static_cast<std::uint64_t>(b);
    const auto [f1, f2] =
        fission_split(data, seed, static_cast<std::uint64_t>(b));
    std::vector<double> fm(M);
    for (size_t m = 0; m < M; ++m) {
      const FitResult fit = fit_method(all[m], f1, cfg);
      fm[m] = (fit.estimates - f2.z).square().mean();
      fmse[m][static_cast<size_t>(b)] = fm[m];
    }
    const double mle_fmse =
        fm[static_cast<size_t>(std::find(all.begin(), all.end(), "mle") -
                               all.begin())];
    const double npmle_fmse =
        fm[static_cast<size_t>(std::find(all.begin(), all.end(), "npmle") -
                               all.begin())];
    if (mle_fmse == npmle_fmse)
      throw numeric_error("degenerate denominator: FMSE_mle == FMSE_npmle");
    for (size_t m = 0; m < M; ++m)
      ri[m][static_cast<size_t>(b)] =
          (mle_fmse - fm[m]) / (mle_fmse - npmle_fmse);
  });

  FissionReport report;
  report.B = B;
  report.seed = seed;
  for (size_t m = 0; m < M; ++m) {
    FissionReport::MethodRow row;
    row.method = all[m];
    row.fmse_mean = mean_of(fmse[m]);
    row.ri_mean = mean_of(ri[m]);
    row.se_ri = se_of(ri[m]);
    row.replicate_ri = ri[m];
    report.rows.push_back(std::move(row));
  }
  return report;
}

MseReport run_mse_study(const DgpSpec& spec,
                        const std::vector<std::string>& methods, int B,
                        const FitConfig& config, bool timing) {
  spec.validate();
  if (B < 1) throw usage_error("need B >= 1 replicates");
  for (const auto& m : methods)
    if (m != "oracle" && !is_known_method(m))
      throw usage_error("unknown method: " + m);

  const size_t M = methods.size();
  std::vector<std::vector<double>> mse(M, std::vector<double>(B, 0.0));
  std::vector<double> runtime(M, 0.0);
  std::mutex runtime_mutex;

  parallel_for(B, [&](Index b) {
    DgpSpec rep = spec;
    rep.replicate = static_cast<std::uint64_t>(b);
    const SimDraw draw = generate(rep);
    FitConfig cfg = config;
    cfg.replicate = static_cast<std::uint64_t>(b);
    std::vector<double> local_rt(M, 0.0);
    for (size_t m = 0; m < M; ++m) {
      const auto t0 = std::chrono::steady_clock::now();
      ArrayXd est;
      if (methods[m] == "oracle") {
        est = *draw.oracle_estimates;
      } else {
        est = fit_method(methods[m], draw.data, cfg).estimates;
      }
      const auto t1 = std::chrono::steady_clock::now();
      local_rt[m] = std::chrono::duration<double>(t1 - t0).count();
      mse[m][static_cast<size_t>(b)] = insample_mse(draw.mu, est);
    }
    if (timing) {
      std::lock_guard<std::mutex> lock(runtime_mutex);
      for (size_t m = 0; m < M; ++m) runtime[m] += local_rt[m];
    }
  });

  MseReport report;
  report.setting = setting_name(spec.setting);
  report.n = spec.n;
  report.B = B;
  report.seed = spec.seed;
  for (size_t m = 0; m < M; ++m) {
    MseReport::MethodRow row;
    row.method = methods[m];
    row.mse_mean = mean_of(mse[m]);
    row.mse_se = se_of(mse[m]);
    row.runtime_s = timing ? runtime[m] / static_cast<double>(B) : 0.0;
    row.replicate_mse = mse[m];
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace sure_eb
