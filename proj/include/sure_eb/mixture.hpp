#pragma once
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

#include "sure_eb/types.hpp"

namespace sure_eb {

// Discrete prior G = sum_j pi_j * delta(u_j).  All marginal computations stay
// in the log domain: atoms far from an observation underflow linearly but are
// harmless under log-sum-exp.  Atoms with pi_j = 0 are skipped outright.
template <typename Scalar>
struct ParticlePriorT {
  Eigen::Vector<Scalar, Eigen::Dynamic> atoms;
  Eigen::Vector<Scalar, Eigen::Dynamic> weights;

  Index size() const { return atoms.size(); }

  void validate() const {
    if (atoms.size() < 1 || atoms.size() != weights.size())
      throw data_error("prior needs K >= 1 atoms with matching weights");
    if (!atoms.array().isFinite().all())
      throw data_error("non-finite atom");
    for (Index j = 1; j < atoms.size(); ++j)
      if (!(atoms[j] > atoms[j - 1]))
        throw data_error("atoms must be strictly increasing");
    if ((weights.array() < 0).any() || !weights.array().isFinite().all())
      throw data_error("weights must be non-negative and finite");
    const Scalar total = weights.sum();
    if (total == 0) throw data_error("degenerate prior: all weights zero");
    using std::abs;
    if (abs(total - Scalar(1)) > Scalar(1e-12))
      throw data_error("weights must sum to 1");
  }
};
using ParticlePrior = ParticlePriorT<double>;

template <typename Scalar>
struct PosteriorSummaryT {
  Scalar mean = 0;
  Scalar variance = 0;
  Scalar score = 0;
  Scalar score_deriv = 0;
  Scalar log_marginal = 0;
};
using PosteriorSummary = PosteriorSummaryT<double>;

namespace detail {

// Posterior atom weights w_j = softmax_j(log pi_j - (z-u_j)^2 / (2 sigma2)),
// the single primitive behind density, score, and posterior moments.
// Returns log of the unnormalized mixture sum for the marginal density.
template <typename Scalar>
Scalar posterior_atom_weights(const ParticlePriorT<Scalar>& prior, Scalar z,
                              Scalar sigma2,
                              Eigen::Vector<Scalar, Eigen::Dynamic>& w) {
  if (!(sigma2 > 0) || !std::isfinite(static_cast<double>(sigma2)))
    throw data_error("sigma2 must be positive and finite");
  const Index K = prior.size();
  w.resize(K);
  Scalar m = -std::numeric_limits<Scalar>::infinity();
  for (Index j = 0; j < K; ++j) {
    if (prior.weights[j] == 0) {
      w[j] = -std::numeric_limits<Scalar>::infinity();
      continue;
    }
    const Scalar d = z - prior.atoms[j];
    w[j] = std::log(prior.weights[j]) - d * d / (2 * sigma2);
    if (w[j] > m) m = w[j];
  }
  if (!std::isfinite(static_cast<double>(m)))
    throw data_error("degenerate prior: all weights zero");
  Scalar total = 0;
  for (Index j = 0; j < K; ++j) {
    w[j] = prior.weights[j] == 0 ? Scalar(0) : std::exp(w[j] - m);
    total += w[j];
  }
  w /= total;
  return m + std::log(total);
}

template <typename Scalar>
constexpr Scalar log_2pi() {
  return std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
}

}  // namespace detail

template <typename Scalar>
Scalar log_marginal(const ParticlePriorT<Scalar>& prior, Scalar z,
                    Scalar sigma2) {
  Eigen::Vector<Scalar, Eigen::Dynamic> w;
  const Scalar lse = detail::posterior_atom_weights(prior, z, sigma2, w);
  return lse - Scalar(0.5) * (detail::log_2pi<Scalar>() + std::log(sigma2));
}

// Score s = f'/f and its z-derivative f''/f - (f'/f)^2, via posterior weights.
template <typename Scalar>
std::pair<Scalar, Scalar> score_and_deriv(const ParticlePriorT<Scalar>& prior,
                                          Scalar z, Scalar sigma2) {
  Eigen::Vector<Scalar, Eigen::Dynamic> w;
  detail::posterior_atom_weights(prior, z, sigma2, w);
  Scalar s = 0, q = 0;
  for (Index j = 0; j < prior.size(); ++j) {
    const Scalar a = (prior.atoms[j] - z) / sigma2;
    s += w[j] * a;
    q += w[j] * a * a;
  }
  return {s, q - 1 / sigma2 - s * s};
}

template <typename Scalar>
PosteriorSummaryT<Scalar> posterior_summary(const ParticlePriorT<Scalar>& prior,
                                            const ObservationT<Scalar>& obs) {
  Eigen::Vector<Scalar, Eigen::Dynamic> w;
  const Scalar lse =
      detail::posterior_atom_weights(prior, obs.z, obs.sigma2, w);
  PosteriorSummaryT<Scalar> out;
  out.log_marginal =
      lse - Scalar(0.5) * (detail::log_2pi<Scalar>() + std::log(obs.sigma2));
  Scalar s = 0, q = 0, m1 = 0, m2 = 0;
  for (Index j = 0; j < prior.size(); ++j) {
    const Scalar a = (prior.atoms[j] - obs.z) / obs.sigma2;
    s += w[j] * a;
    q += w[j] * a * a;
    m1 += w[j] * prior.atoms[j];
    m2 += w[j] * prior.atoms[j] * prior.atoms[j];
  }
  out.score = s;
  out.score_deriv = q - 1 / obs.sigma2 - s * s;
  out.mean = obs.z + obs.sigma2 * s;
  out.variance = std::max(
      Scalar(0), obs.sigma2 + obs.sigma2 * obs.sigma2 * out.score_deriv);
#ifndef NDEBUG
  {
    using std::abs;
    const Scalar var_atoms = m2 - m1 * m1;
    const Scalar ms = std::max({Scalar(1), abs(out.mean), abs(m1)});
    const Scalar vs = std::max({Scalar(1), out.variance, abs(var_atoms)});
    if (abs(out.mean - m1) > Scalar(1e-8) * ms ||
        abs(out.variance - var_atoms) > Scalar(1e-8) * vs)
      throw numeric_error("posterior moment cross-check failed");
  }
#endif
  return out;
}

// Batch evaluation over a dataset against one shared prior.  E holds the
// shifted exponentials exp(g_ij - M_i) with g_ij = log pi_j - (z_i-u_j)^2 /
// (2 sigma2_i); posterior weights are E.row(i) / S_i.  E is retained so that
// EM responsibilities and SURE gradients reuse the same pass.
struct MarginalBatch {
  MatrixXd E;
  ArrayXd M, S;
  ArrayXd logf, score, score_deriv;

  void eval(const VectorXd& atoms, const VectorXd& log_weights,
            const ArrayXd& z, const ArrayXd& sigma2) {
    const Index n = z.size(), K = atoms.size();
    E.resize(n, K);
    for (Index j = 0; j < K; ++j)
      E.col(j) =
          (log_weights[j] - (z - atoms[j]).square() / (2.0 * sigma2)).matrix();
    M = E.rowwise().maxCoeff().array();
    if (!M.isFinite().all())
      throw data_error("degenerate prior: all weights zero");
    E = (E.array().colwise() - M).exp().matrix();
    S = E.rowwise().sum().array();
    logf = M + S.log() - 0.5 * (std::log(2.0 * std::numbers::pi) +
                                sigma2.log());
    const ArrayXd m1 = (E * atoms).array() / S;
    const ArrayXd m2 = (E * atoms.cwiseAbs2()).array() / S;
    score = (m1 - z) / sigma2;
    score_deriv = (m2 - 2.0 * z * m1 + z.square()) / sigma2.square() -
                  1.0 / sigma2 - score.square();
  }
};

inline VectorXd log_weights_of(const ParticlePrior& prior) {
  VectorXd lw(prior.size());
  for (Index j = 0; j < prior.size(); ++j)
    lw[j] = prior.weights[j] == 0
                ? -std::numeric_limits<double>::infinity()
                : std::log(prior.weights[j]);
  return lw;
}

// Per-observation SURE terms sigma2_i + sigma2_i^2 (s_i^2 + 2 s_i').
inline ArrayXd sure_terms(const ParticlePrior& prior, const Dataset& data) {
  prior.validate();
  data.validate();
  if (data.n() == 0) throw data_error("empty data");
  MarginalBatch batch;
  batch.eval(prior.atoms, log_weights_of(prior), data.z, data.sigma2);
  return data.sigma2 + data.sigma2.square() *
                           (batch.score.square() + 2.0 * batch.score_deriv);
}

inline double sure_loss(const ParticlePrior& prior, const Dataset& data) {
  return sure_terms(prior, data).mean();
}

inline double weighted_loss(const ParticlePrior& prior, const Dataset& data,
                            const ArrayXd& weights) {
  prior.validate();
  data.validate();
  if (data.n() == 0) throw data_error("empty data");
  if (weights.size() != data.n())
    throw data_error("weights length mismatch");
  if ((weights < 0).any()) throw data_error("weights must be non-negative");
  MarginalBatch batch;
  batch.eval(prior.atoms, log_weights_of(prior), data.z, data.sigma2);
  return (weights * (batch.score.square() + 2.0 * batch.score_deriv)).mean();
}

inline double sm_loss(const ParticlePrior& prior, const Dataset& data) {
  return weighted_loss(prior, data, ArrayXd::Ones(data.n()));
}

inline double sure_loss(const ParticlePrior& prior,
                        const std::vector<Observation>& obs) {
  return sure_loss(prior, make_dataset(obs));
}
inline double sm_loss(const ParticlePrior& prior,
                      const std::vector<Observation>& obs) {
  return sm_loss(prior, make_dataset(obs));
}
inline double weighted_loss(const ParticlePrior& prior,
                            const std::vector<Observation>& obs,
                            const ArrayXd& weights) {
  return weighted_loss(prior, make_dataset(obs), weights);
}

// Posterior means for every observation under one shared prior.
inline ArrayXd posterior_mean_batch(const ParticlePrior& prior,
                                    const Dataset& data) {
  MarginalBatch batch;
  batch.eval(prior.atoms, log_weights_of(prior), data.z, data.sigma2);
  return data.z + data.sigma2 * batch.score;
}

inline ArrayXd posterior_var_batch(const ParticlePrior& prior,
                                   const Dataset& data) {
  MarginalBatch batch;
  batch.eval(prior.atoms, log_weights_of(prior), data.z, data.sigma2);
  return (data.sigma2 + data.sigma2.square() * batch.score_deriv).max(0.0);
}

}  // namespace sure_eb
