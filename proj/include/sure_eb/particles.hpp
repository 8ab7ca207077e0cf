#pragma once
#include <algorithm>
#include <cmath>
#include <sstream>

#include "sure_eb/mixture.hpp"
#include "sure_eb/types.hpp"

namespace sure_eb {

// Unconstrained particle-prior parameterization:
//   pi_j = softmax(pi_tilde)_j
//   u_j  = (sum_{k<j} softmax(u_tilde)_k - 1/2) * e^s + m
// The cumulative softmax keeps atoms ordered (no label switching); m is a
// fixed location offset that the optimizer never touches.
struct ParticleParams {
  VectorXd pi_tilde;  // K logits
  VectorXd u_tilde;   // K-1 spacing logits
  double s = 0;       // log scale of the atom spread
  double m = 0;       // fixed offset, excluded from gradients

  Index K() const { return pi_tilde.size(); }

  // Optimizable block, laid out as [pi_tilde | u_tilde | s]; the same layout
  // the covariate-dependent variant uses for its network output head.
  VectorXd pack() const {
    VectorXd v(2 * K());
    v.head(K()) = pi_tilde;
    v.segment(K(), K() - 1) = u_tilde;
    v[2 * K() - 1] = s;
    return v;
  }
  void unpack(const VectorXd& v) {
    const Index K2 = v.size();
    if (K2 != 2 * K()) throw data_error("packed parameter size mismatch");
    pi_tilde = v.head(K() );
    u_tilde = v.segment(K(), K() - 1);
    s = v[2 * K() - 1];
  }
};

namespace detail {

inline VectorXd softmax(const VectorXd& x) {
  const double m = x.maxCoeff();
  VectorXd e = (x.array() - m).exp();
  return e / e.sum();
}

}  // namespace detail

// Decodes a head vector [pi_tilde (K) | u_tilde (K-1) | s (1)] with offset m.
inline ParticlePrior decode_head(const Eigen::Ref<const VectorXd>& head,
                                 double m) {
  const Index K = head.size() / 2;
  if (K < 2 || head.size() != 2 * K)
    throw data_error("decode needs an even head of size 2K with K >= 2");
  ParticlePrior prior;
  prior.weights = detail::softmax(head.head(K));
  const VectorXd q = detail::softmax(head.segment(K, K - 1));
  const double scale = std::exp(head[2 * K - 1]);
  prior.atoms.resize(K);
  double c = 0;
  for (Index j = 0; j < K; ++j) {
    prior.atoms[j] = (c - 0.5) * scale + m;
    if (j < K - 1) c += q[j];
  }
  return prior;
}

inline ParticlePrior decode_particles(const ParticleParams& p) {
  if (p.K() < 2) throw data_error("particle decode needs K >= 2");
  if (p.u_tilde.size() != p.K() - 1)
    throw data_error("u_tilde must have K-1 entries");
  return decode_head(p.pack(), p.m);
}

// Type-7 quantile (linear interpolation between order statistics).
inline double quantile_type7(ArrayXd x, double p) {
  if (x.size() == 0) throw data_error("quantile of empty vector");
  std::sort(x.begin(), x.end());
  const double h = static_cast<double>(x.size() - 1) * p;
  const Index lo = static_cast<Index>(std::floor(h));
  if (lo + 1 >= x.size()) return x[x.size() - 1];
  return x[lo] + (h - static_cast<double>(lo)) * (x[lo + 1] - x[lo]);
}

inline double median(const ArrayXd& x) { return quantile_type7(x, 0.5); }

// m = median(z), s = log of the 95% interquantile range, flat logits.
inline ParticleParams init_particles(const Dataset& data, Index K) {
  if (data.n() < 2) throw data_error("need at least 2 observations");
  if (K < 2) throw data_error("need K >= 2 particles");
  const double iqr =
      quantile_type7(data.z, 0.975) - quantile_type7(data.z, 0.025);
  if (!(iqr > 0)) throw data_error("degenerate data: zero interquantile range");
  ParticleParams p;
  p.pi_tilde = VectorXd::Ones(K);
  p.u_tilde = VectorXd::Ones(K - 1);
  p.s = std::log(iqr);
  p.m = median(data.z);
  return p;
}

inline ParticleParams init_particles(const std::vector<Observation>& obs,
                                     Index K) {
  return init_particles(make_dataset(obs), K);
}

struct ParticleGrad {
  VectorXd pi_tilde;
  VectorXd u_tilde;
  double s = 0;

  VectorXd pack() const {
    VectorXd v(pi_tilde.size() + u_tilde.size() + 1);
    v.head(pi_tilde.size()) = pi_tilde;
    v.segment(pi_tilde.size(), u_tilde.size()) = u_tilde;
    v[v.size() - 1] = s;
    return v;
  }
};

// SURE loss of the decoded prior over the dataset, with its exact gradient in
// the unconstrained parameters (m excluded).  Per observation i with posterior
// weights w_ij, a_ij = (u_j - z_i)/sigma2_i, s_i = sum_j w_ij a_ij and
// B_i = sum_j w_ij (a_ij^2 - 1/sigma2_i):
//   T_i = sigma2_i + sigma2_i^2 (2 B_i - s_i^2)
//   dT_i/d g_ij       = 2 sigma2_i^2 w_ij ((b_ij - B_i) - s_i (a_ij - s_i))
//   dT_i/d u_j direct = 2 sigma2_i w_ij (2 a_ij - s_i)
// and g_ij depends on u_j with d g_ij / d u_j = -a_ij.
inline double sure_value_and_grad(const ParticleParams& p, const Dataset& data,
                                  MarginalBatch& batch, ParticleGrad& grad) {
  if (data.n() == 0) throw data_error("empty data");
  const Index n = data.n(), K = p.K();
  const ParticlePrior prior = decode_particles(p);
  batch.eval(prior.atoms, prior.weights.array().log().matrix(), data.z,
             data.sigma2);

  // B_i = sum_j w_ij a_ij^2 - 1/sigma2_i, recovered from score_deriv = B - s^2.
  const ArrayXd Bi = batch.score_deriv + batch.score.square();
  const ArrayXd v = data.sigma2.square();
  const double loss =
      (data.sigma2 + v * (batch.score.square() + 2.0 * batch.score_deriv))
          .mean();

  VectorXd gG = VectorXd::Zero(K), gU = VectorXd::Zero(K);
  ArrayXd w(n), a(n), term(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Index j = 0; j < K; ++j) {
    w = batch.E.col(j).array() / batch.S;
    a = (prior.atoms[j] - data.z) / data.sigma2;
    term = (a.square() - 1.0 / data.sigma2 - Bi) -
           batch.score * (a - batch.score);
    const ArrayXd dg = 2.0 * v * w * term;
    gG[j] = inv_n * dg.sum();
    gU[j] = inv_n * (2.0 * data.sigma2 * w * (2.0 * a - batch.score) -
                     dg * a)
                        .sum();
  }

  const VectorXd q = detail::softmax(p.u_tilde);
  const double scale = std::exp(p.s);
  grad.pi_tilde = gG.array() - prior.weights.array() * gG.sum();
  grad.u_tilde.resize(K - 1);
  double tail = 0, dot = 0;
  VectorXd dq(K - 1);
  for (Index k = K - 2; k >= 0; --k) {
    tail += gU[k + 1];
    dq[k] = scale * tail;
    dot += q[k] * dq[k];
  }
  for (Index k = 0; k < K - 1; ++k)
    grad.u_tilde[k] = q[k] * (dq[k] - dot);
  grad.s = gU.dot(prior.atoms - VectorXd::Constant(K, p.m));
  return loss;
}

inline ParticleGrad grad_sure_particles(const ParticleParams& p,
                                        const Dataset& data) {
  MarginalBatch batch;
  ParticleGrad grad;
  const double loss = sure_value_and_grad(p, data, batch, grad);
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "non-finite SURE loss at K=" << p.K() << " s=" << p.s
        << " m=" << p.m;
    throw numeric_error(msg.str());
  }
  return grad;
}

inline ParticleGrad grad_sure_particles(const ParticleParams& p,
                                        const std::vector<Observation>& obs) {
  return grad_sure_particles(p, make_dataset(obs));
}

// Per-observation variant for covariate-dependent heads: evaluates the SURE
// term T_i of one observation under its own decoded prior and writes dT_i
// w.r.t. the head entries.  Workspace avoids per-call allocation.
struct HeadWork {
  VectorXd pi, q, u, w, a, gG, gU, dq;
  void resize(Index K) {
    pi.resize(K);
    q.resize(K - 1);
    u.resize(K);
    w.resize(K);
    a.resize(K);
    gG.resize(K);
    gU.resize(K);
    dq.resize(K - 1);
  }
};

inline double sure_head_value_and_grad(const Eigen::Ref<const VectorXd>& head,
                                       double m, double z, double sigma2,
                                       HeadWork& wk,
                                       Eigen::Ref<VectorXd> ghead) {
  const Index K = head.size() / 2;
  // softmax(pi_tilde)
  double mx = head.head(K).maxCoeff();
  wk.pi = (head.head(K).array() - mx).exp();
  wk.pi /= wk.pi.sum();
  // softmax(u_tilde)
  mx = head.segment(K, K - 1).maxCoeff();
  wk.q = (head.segment(K, K - 1).array() - mx).exp();
  wk.q /= wk.q.sum();
  const double scale = std::exp(head[2 * K - 1]);
  double c = 0;
  for (Index j = 0; j < K; ++j) {
    wk.u[j] = (c - 0.5) * scale + m;
    if (j < K - 1) c += wk.q[j];
  }
  // posterior atom weights
  wk.a = (wk.u.array() - z) / sigma2;
  wk.w = head.head(K).array() - (z - wk.u.array()).square() / (2.0 * sigma2);
  mx = wk.w.maxCoeff();
  wk.w = (wk.w.array() - mx).exp();
  wk.w /= wk.w.sum();

  const double s = wk.w.dot(wk.a);
  const double q2 = wk.w.dot(wk.a.cwiseAbs2());
  const double B = q2 - 1.0 / sigma2;
  const double v = sigma2 * sigma2;
  const double T = sigma2 + v * (2.0 * B - s * s);

  // dT/dg_j and dT/du_j
  wk.gG = (2.0 * v) * wk.w.array() *
          ((wk.a.array().square() - 1.0 / sigma2 - B) -
           s * (wk.a.array() - s));
  wk.gU = (2.0 * sigma2) * wk.w.array() * (2.0 * wk.a.array() - s);
  wk.gU.array() -= wk.gG.array() * wk.a.array();

  ghead.head(K) = wk.gG.array() - wk.pi.array() * wk.gG.sum();
  double tail = 0, dot = 0;
  for (Index k = K - 2; k >= 0; --k) {
    tail += wk.gU[k + 1];
    wk.dq[k] = scale * tail;
    dot += wk.q[k] * wk.dq[k];
  }
  for (Index k = 0; k < K - 1; ++k)
    ghead[K + k] = wk.q[k] * (wk.dq[k] - dot);
  ghead[2 * K - 1] = wk.gU.dot(wk.u) - m * wk.gU.sum();
  return T;
}

}  // namespace sure_eb
