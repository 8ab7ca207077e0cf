#pragma once
#include <string>
#include <utility>
#include <vector>

#include "sure_eb/estimators.hpp"
#include "sure_eb/mixture.hpp"
#include "sure_eb/simgen.hpp"
#include "sure_eb/types.hpp"

namespace sure_eb {

struct MseReport {
  std::string setting;
  Index n = 0;
  int B = 0;
  std::uint64_t seed = 0;
  struct MethodRow {
    std::string method;
    double mse_mean = 0;
    double mse_se = 0;
    double runtime_s = 0;
    std::vector<double> replicate_mse;
  };
  std::vector<MethodRow> rows;

  const MethodRow& row(const std::string& method) const;
};

double insample_mse(const ArrayXd& mu, const ArrayXd& estimates);

// Integrated squared difference of posterior means weighted by the true
// marginal: int (E_ghat[mu|z] - E_gstar[mu|z])^2 f_gstar(z) dz over the atom
// range widened by 10 sigma.  At sigma2 = 1 this equals the Fisher divergence
// between the marginals.
double regret_quadrature(const ParticlePrior& g_star,
                         const ParticlePrior& g_hat, double sigma2,
                         double abs_tol = 1e-9);

// Data fission: eps_i ~ N(0, sigma2_i); folds carry z +- eps with noise
// variance 2 sigma2_i and the original covariates.
std::pair<Dataset, Dataset> fission_split(const Dataset& data,
                                          const ArrayXd& eps);
std::pair<Dataset, Dataset> fission_split(const Dataset& data,
                                          std::uint64_t seed,
                                          std::uint64_t replicate = 0);

struct FissionReport {
  int B = 0;
  std::uint64_t seed = 0;
  struct MethodRow {
    std::string method;
    double fmse_mean = 0;
    double ri_mean = 0;   // relative improvement vs MLE, NPMLE = 1
    double se_ri = 0;
    std::vector<double> replicate_ri;
  };
  std::vector<MethodRow> rows;

  const MethodRow& row(const std::string& method) const;
};

// Repeats the fission protocol B times: split, fit every method on fold 1,
// score squared error against fold 2.  NPMLE and MLE are always evaluated
// since RI = (FMSE_mle - FMSE) / (FMSE_mle - FMSE_npmle).
FissionReport fission_evaluate(const Dataset& data,
                               const std::vector<std::string>& methods, int B,
                               std::uint64_t seed, const FitConfig& config);

// Replicated simulation study: generate, fit each method, score against mu.
// "oracle" and "mle" are accepted alongside fitted methods.
MseReport run_mse_study(const DgpSpec& spec,
                        const std::vector<std::string>& methods, int B,
                        const FitConfig& config, bool timing = false);

}  // namespace sure_eb
