#pragma once
#include <optional>
#include <string>

#include "sure_eb/types.hpp"

namespace sure_eb {

enum class Setting {
  uniform_prior,
  inv_chisq_prior,
  bimodal_twopoint_var,
  uniform_likelihood,
  twopoint_prior,
  poisson_prior,
  multi_covariate,
  hetero_one_covariate,
  homosc_normal,
  compound_twopoint,
};

std::string setting_name(Setting s);
Setting setting_from_name(const std::string& name);

struct DgpSpec {
  Setting setting = Setting::uniform_prior;
  Index n = 100;
  std::uint64_t seed = 1;
  std::uint64_t replicate = 0;
  double a_star = 1;    // homosc_normal prior variance
  double m_star = 5;    // compound_twopoint signal size
  Index k_star = 50;    // compound_twopoint signal count

  void validate() const;
};

struct SimDraw {
  ArrayXd mu;
  Dataset data;
  std::optional<ArrayXd> oracle_estimates;
};

// Draws one replicate of the requested setting.  All randomness comes from
// the (seed, replicate) substream, so replicates are independent and
// reproducible; the compound setting's mu vector is deterministic, which
// makes "fixed mu, fresh noise per replicate" automatic.
SimDraw generate(const DgpSpec& spec);

// Bayes posterior mean of one observation under the setting's true prior.
double oracle_estimate(const DgpSpec& spec, const Observation& obs);

}  // namespace sure_eb
