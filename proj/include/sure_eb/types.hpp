#pragma once
#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <vector>

namespace sure_eb {

using Eigen::ArrayXd;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
struct ObservationT {
  Scalar z = 0;
  Scalar sigma2 = 1;
  Eigen::Vector<Scalar, Eigen::Dynamic> covariates;
};
using Observation = ObservationT<double>;

// Column-wise storage of n observations: z, sigma2, and an n x d covariate
// block (d may be 0).  sigma2 holds variances; CSV input uses standard
// deviations and is squared on load.
struct Dataset {
  ArrayXd z;
  ArrayXd sigma2;
  MatrixXd X;

  Index n() const { return z.size(); }
  Index dim() const { return X.cols(); }

  void validate() const {
    if (z.size() != sigma2.size())
      throw data_error("z and sigma2 length mismatch");
    if (X.size() > 0 && X.rows() != z.size())
      throw data_error("covariate row count mismatch");
    if (!z.isFinite().all()) throw data_error("non-finite z");
    if (!sigma2.isFinite().all() || (sigma2 <= 0).any())
      throw data_error("sigma2 must be positive and finite");
    if (X.size() > 0 && !X.array().isFinite().all())
      throw data_error("non-finite covariate");
  }
};

inline Dataset make_dataset(const std::vector<Observation>& obs) {
  Dataset d;
  const Index n = static_cast<Index>(obs.size());
  const Index p = n > 0 ? obs[0].covariates.size() : 0;
  d.z.resize(n);
  d.sigma2.resize(n);
  d.X.resize(n, p);
  for (Index i = 0; i < n; ++i) {
    if (obs[i].covariates.size() != p)
      throw data_error("ragged covariate vectors");
    d.z[i] = obs[i].z;
    d.sigma2[i] = obs[i].sigma2;
    if (p > 0) d.X.row(i) = obs[i].covariates.transpose();
  }
  return d;
}

inline std::vector<Observation> to_observations(const Dataset& d) {
  std::vector<Observation> obs(static_cast<size_t>(d.n()));
  for (Index i = 0; i < d.n(); ++i) {
    obs[i].z = d.z[i];
    obs[i].sigma2 = d.sigma2[i];
    obs[i].covariates = d.X.cols() > 0 ? VectorXd(d.X.row(i).transpose())
                                       : VectorXd(0);
  }
  return obs;
}

}  // namespace sure_eb
