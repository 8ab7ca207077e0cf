#pragma once
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sure_eb/mixture.hpp"
#include "sure_eb/mlp.hpp"
#include "sure_eb/particles.hpp"
#include "sure_eb/types.hpp"

namespace sure_eb {

// Conditional-Gaussian head (m, A_tilde) with prior variance A = exp(A_tilde);
// A_tilde is clamped to +-40 so A stays finite, with zero gradient outside.
// Returns the per-observation SURE term
//   sigma2 + sigma2^2 (z-m)^2 / (sigma2+A)^2 - 2 sigma2^2 / (sigma2+A)
// and writes its gradient in (m, A_tilde).
inline constexpr double kLsLogClip = 40.0;

inline double ls_term_value_and_grad(double m, double A_tilde, double z,
                                     double sigma2, double& gm, double& gAt) {
  const bool interior = std::abs(A_tilde) < kLsLogClip;
  const double A = std::exp(std::clamp(A_tilde, -kLsLogClip, kLsLogClip));
  const double v = sigma2 * sigma2;
  const double denom = sigma2 + A;
  const double r = z - m;
  gm = -2.0 * v * r / (denom * denom);
  const double dA = -2.0 * v * r * r / (denom * denom * denom) +
                    2.0 * v / (denom * denom);
  gAt = interior ? dA * A : 0.0;
  return sigma2 + v * r * r / (denom * denom) - 2.0 * v / denom;
}

struct FitConfig {
  Index K = 100;            // particle / grid atom count
  long iters = 2000;        // full-batch Adam budget (also NPMLE EM cap)
  double lr = 0.01;
  int folds = 5;
  std::uint64_t seed = 1;
  std::uint64_t replicate = 0;  // substream key for init/fold randomness
  double early_stop_tol = 1e-9;
  int early_stop_window = 50;
  bool standardize = false;     // optional covariate standardization
};

// Per-observation linear denoiser mu_hat_i = b_i + (1 - lambda_i) z_i.
struct ShrinkageRule {
  ArrayXd lambda;
  ArrayXd b;

  ArrayXd apply(const ArrayXd& z) const { return b + (1.0 - lambda) * z; }
  void validate() const {
    if (lambda.size() != b.size()) throw data_error("shrinkage size mismatch");
    if ((lambda < 0).any() || (lambda > 1).any())
      throw data_error("lambda outside [0,1]");
  }
};

struct FitResult {
  std::string method;
  ArrayXd estimates;
  ArrayXd post_var;              // empty when the method defines none
  double final_loss = 0;
  std::vector<double> loss_trace;
  std::uint64_t seed = 0;
  long iterations_run = 0;

  // fitted parameter snapshot, populated per method
  std::optional<ParticlePrior> prior;       // sure-pm, npmle
  std::optional<MlpParams> net;             // sure-ls, sure-thing
  VectorXd in_mean, in_scale;               // input standardization, if on
  double m_offset = 0;                      // shared offset of sure-thing
  std::optional<double> A;                  // grandmean
  double center = 0;                        // grandmean z-bar
  std::vector<MlpParams> fold_nets;         // ebcf
  ArrayXd fold_A;                           // ebcf
  std::vector<std::vector<Index>> folds;    // ebcf fold membership
  std::optional<ShrinkageRule> rule;        // linear methods
};

FitResult fit_sure_pm(const Dataset& data, const FitConfig& config);
FitResult fit_sure_ls(const Dataset& data, const FitConfig& config);
FitResult fit_sure_thing(const Dataset& data, const FitConfig& config);
FitResult fit_npmle(const Dataset& data, const FitConfig& config);
FitResult fit_grandmean(const Dataset& data, const FitConfig& config);
FitResult fit_ebcf(const Dataset& data, const FitConfig& config);
FitResult fit_mle(const Dataset& data, const FitConfig& config);

// Dispatch by method name: sure-pm, sure-ls, sure-thing, npmle, grandmean,
// ebcf, mle.
FitResult fit_method(const std::string& method, const Dataset& data,
                     const FitConfig& config);
bool is_known_method(const std::string& method);

// Entry points that resume from explicit initial parameters, used to compare
// optimizer trajectories across parameterizations.
FitResult fit_sure_pm_from(const ParticleParams& p0, const Dataset& data,
                           const FitConfig& config);
FitResult fit_sure_thing_from(const MlpParams& net0, double m_offset,
                              const Dataset& data, const FitConfig& config);

// Per-observation SURE terms of new observations under a fitted model
// (methods with a marginal score: sure-pm, sure-thing, sure-ls, npmle,
// grandmean).
ArrayXd sure_terms_at(const FitResult& fit, const Dataset& data);

struct CvResult {
  std::vector<FitConfig> grid;
  MatrixXd fold_scores;            // grid size x folds
  VectorXd mean_scores;
  Index chosen = 0;

  const FitConfig& chosen_config() const { return grid[chosen]; }
};

// K-fold cross-validated SURE over a hyperparameter grid; picks the config
// minimizing the across-fold mean of holdout SURE.
CvResult cv_sure(const Dataset& data, const std::string& method,
                 const std::vector<FitConfig>& hyper_grid, int folds);

// Seeded shuffle of [0, n), split into `folds` contiguous blocks.
std::vector<std::vector<Index>> make_folds(Index n, int folds,
                                           std::uint64_t seed,
                                           std::uint64_t replicate);

// Network input matrix: covariates with sigma (standard deviation) appended.
MatrixXd net_inputs(const Dataset& data, bool standardize);

}  // namespace sure_eb
