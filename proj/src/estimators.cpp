#include "sure_eb/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "sure_eb/adam.hpp"
#include "sure_eb/rng.hpp"

namespace sure_eb {

namespace {

// Estimators are made exactly permutation-equivariant by computing every
// order-sensitive reduction (optimizer path, means, fold shuffles) on a
// canonical ordering of the observations, then evaluating the fitted rule
// per observation in the caller's order.
std::vector<Index> canonical_order(const Dataset& d) {
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

Dataset select(const Dataset& d, const std::vector<Index>& idx) {
  Dataset out;
  const Index m = static_cast<Index>(idx.size());
  out.z.resize(m);
  out.sigma2.resize(m);
  out.X.resize(m, d.X.cols());
  for (Index k = 0; k < m; ++k) {
    const Index i = idx[static_cast<size_t>(k)];
    out.z[k] = d.z[i];
    out.sigma2[k] = d.sigma2[i];
    if (d.X.cols() > 0) out.X.row(k) = d.X.row(i);
  }
  return out;
}

ArrayXd scatter_back(const ArrayXd& sorted_vals,
                     const std::vector<Index>& order) {
  ArrayXd out(sorted_vals.size());
  for (Index k = 0; k < sorted_vals.size(); ++k)
    out[order[static_cast<size_t>(k)]] = sorted_vals[k];
  return out;
}

double sample_var(const ArrayXd& z) {
  if (z.size() < 2) return 0.0;
  const double mean = z.mean();
  return (z - mean).square().sum() / static_cast<double>(z.size() - 1);
}

double golden_min(double lo, double hi, double tol,
                  const std::function<double(double)>& f) {
  constexpr double invphi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - invphi * (b - a), x2 = a + invphi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

// SURE of the linear rule shrinking z toward per-observation centers m,
// minimized over the prior variance A >= 0.  Golden section runs on
// t = log(1 + A); the bracket covers A in [0, 10 var(z)].
double minimize_sure_A(const ArrayXd& z, const ArrayXd& sigma2,
                       const ArrayXd& centers, double bracket_var) {
  auto sure_at = [&](double t) {
    const double A = std::expm1(t);
    const ArrayXd denom = sigma2 + A;
    return (sigma2.square() * (z - centers).square() / denom.square() +
            sigma2 - 2.0 * sigma2.square() / denom)
        .mean();
  };
  const double hi = std::log1p(std::max(10.0 * bracket_var, 1e-12));
  const double t = golden_min(0.0, hi, 1e-10, sure_at);
  return std::expm1(t);
}

// Full-batch Adam with plateau early stopping: stop once the best loss seen
// has not improved by more than tol for `window` consecutive iterations.
long optimize(VectorXd& theta, const FitConfig& cfg,
              std::vector<double>& trace,
              const std::function<double(const VectorXd&, VectorXd&)>&
                  loss_and_grad) {
  AdamState st(theta.size(), cfg.lr);
  VectorXd g(theta.size());
  double best = std::numeric_limits<double>::infinity();
  int stall = 0;
  long steps = 0;
  for (long t = 0; t < cfg.iters; ++t) {
    const double loss = loss_and_grad(theta, g);
    if (!std::isfinite(loss))
      throw numeric_error("non-finite loss during optimization");
    trace.push_back(loss);
    if (loss < best - cfg.early_stop_tol) {
      best = loss;
      stall = 0;
    } else if (++stall >= cfg.early_stop_window) {
      break;
    }
    adam_step(st, theta, g);
    ++steps;
  }
  return steps;
}

MatrixXd raw_inputs(const Dataset& d) {
  MatrixXd X(d.n(), d.dim() + 1);
  if (d.dim() > 0) X.leftCols(d.dim()) = d.X;
  X.col(d.dim()) = d.sigma2.sqrt().matrix();
  return X;
}

// Standardization statistics from the canonical ordering; applying them is
// elementwise, so scaled inputs stay permutation-exact.
void input_stats(const MatrixXd& Xsorted, VectorXd& mean, VectorXd& scale) {
  mean.resize(Xsorted.cols());
  scale.resize(Xsorted.cols());
  for (Index c = 0; c < Xsorted.cols(); ++c) {
    mean[c] = Xsorted.col(c).mean();
    const double sd =
        std::sqrt((Xsorted.col(c).array() - mean[c]).square().sum() /
                  std::max<Index>(1, Xsorted.rows() - 1));
    scale[c] = sd > 0 ? sd : 1.0;
  }
}

MatrixXd scaled_inputs(const Dataset& d, const VectorXd& mean,
                       const VectorXd& scale) {
  MatrixXd X = raw_inputs(d);
  if (mean.size() > 0) {
    X.rowwise() -= mean.transpose();
    X.array().rowwise() /= scale.transpose().array();
  }
  return X;
}

struct NetInputs {
  MatrixXd sorted;   // rows follow the canonical order
  VectorXd mean, scale;  // empty when standardization is off
};

NetInputs prepare_inputs(const Dataset& sorted_data, bool standardize) {
  NetInputs in;
  in.sorted = raw_inputs(sorted_data);
  if (standardize) {
    input_stats(in.sorted, in.mean, in.scale);
    in.sorted.rowwise() -= in.mean.transpose();
    in.sorted.array().rowwise() /= in.scale.transpose().array();
  }
  return in;
}

}  // namespace

MatrixXd net_inputs(const Dataset& data, bool standardize) {
  if (!standardize) return raw_inputs(data);
  const auto order = canonical_order(data);
  const NetInputs in = prepare_inputs(select(data, order), true);
  return scaled_inputs(data, in.mean, in.scale);
}

std::vector<std::vector<Index>> make_folds(Index n, int folds,
                                           std::uint64_t seed,
                                           std::uint64_t replicate) {
  if (folds < 2) throw usage_error("need at least 2 folds");
  if (n < 2 * folds) throw data_error("fold too small: need >= 2 per fold");
  std::vector<Index> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng(seed, replicate, Stream::folds);
  shuffle_indices(idx, rng);
  std::vector<std::vector<Index>> out(static_cast<size_t>(folds));
  const Index base = n / folds, extra = n % folds;
  Index pos = 0;
  for (int k = 0; k < folds; ++k) {
    const Index len = base + (k < extra ? 1 : 0);
    out[static_cast<size_t>(k)].assign(idx.begin() + pos,
                                       idx.begin() + pos + len);
    std::sort(out[static_cast<size_t>(k)].begin(),
              out[static_cast<size_t>(k)].end());
    pos += len;
  }
  return out;
}

FitResult fit_sure_pm_from(const ParticleParams& p0, const Dataset& data,
                           const FitConfig& config) {
  data.validate();
  if (data.n() < 2) throw data_error("need at least 2 observations");
  const Dataset ds = select(data, canonical_order(data));

  ParticleParams p = p0;
  VectorXd theta = p.pack();
  MarginalBatch batch;
  ParticleGrad grad;
  FitResult fit;
  fit.method = "sure-pm";
  fit.seed = config.seed;
  auto f = [&](const VectorXd& th, VectorXd& g) {
    p.unpack(th);
    const double loss = sure_value_and_grad(p, ds, batch, grad);
    g = grad.pack();
    return loss;
  };
  fit.iterations_run = optimize(theta, config, fit.loss_trace, f);
  p.unpack(theta);
  VectorXd gdummy(theta.size());
  fit.final_loss = f(theta, gdummy);
  fit.loss_trace.push_back(fit.final_loss);

  fit.prior = decode_particles(p);
  fit.estimates = posterior_mean_batch(*fit.prior, data);
  fit.post_var = posterior_var_batch(*fit.prior, data);
  return fit;
}

FitResult fit_sure_pm(const Dataset& data, const FitConfig& config) {
  return fit_sure_pm_from(init_particles(data, config.K), data, config);
}

FitResult fit_npmle(const Dataset& data, const FitConfig& config) {
  data.validate();
  if (data.n() < 1) throw data_error("empty data");
  const Dataset ds = select(data, canonical_order(data));
  const Index n = ds.n();
  const double zmin = ds.z.minCoeff(), zmax = ds.z.maxCoeff();

  ParticlePrior prior;
  if (n == 1 || zmin == zmax || config.K == 1) {
    prior.atoms = VectorXd::Constant(1, zmin);
    prior.weights = VectorXd::Constant(1, 1.0);
  } else {
    prior.atoms = VectorXd::LinSpaced(config.K, zmin, zmax);
    prior.weights =
        VectorXd::Constant(config.K, 1.0 / static_cast<double>(config.K));
  }
  const Index K = prior.size();

  FitResult fit;
  fit.method = "npmle";
  fit.seed = config.seed;

  // log phi up to the per-row Gaussian constant, fixed across EM iterations
  MatrixXd P(n, K);
  for (Index j = 0; j < K; ++j)
    P.col(j) =
        (-(ds.z - prior.atoms[j]).square() / (2.0 * ds.sigma2)).matrix();
  const double log_const =
      -0.5 * ((2.0 * std::numbers::pi * ds.sigma2).log()).sum();

  MatrixXd F(n, K);
  ArrayXd M(n), S(n);
  VectorXd logpi = prior.weights.array().log().matrix();
  auto refresh = [&]() -> long double {
    F = P;
    F.rowwise() += logpi.transpose();
    M = F.rowwise().maxCoeff().array();
    F = (F.array().colwise() - M).exp().matrix();
    S = F.rowwise().sum().array();
    long double ll = 0.0L;
    for (Index i = 0; i < n; ++i)
      ll += static_cast<long double>(M[i]) +
            static_cast<long double>(std::log(S[i]));
    return ll + static_cast<long double>(log_const);
  };

  long double prev_ll = -std::numeric_limits<long double>::infinity();
  long iters = 0;
  for (long t = 0; t < config.iters; ++t) {
    const long double ll = refresh();
    fit.loss_trace.push_back(-static_cast<double>(ll) /
                             static_cast<double>(n));
    if (t > 0 && ll - prev_ll < 1e-9L) break;
    prev_ll = ll;
    prior.weights =
        (F.transpose() * (1.0 / S).matrix()) / static_cast<double>(n);
    prior.weights /= prior.weights.sum();
    for (Index j = 0; j < K; ++j)
      logpi[j] = prior.weights[j] == 0
                     ? -std::numeric_limits<double>::infinity()
                     : std::log(prior.weights[j]);
    ++iters;
  }
  if (fit.loss_trace.empty() ||
      static_cast<long>(fit.loss_trace.size()) == iters) {
    const long double ll = refresh();
    fit.loss_trace.push_back(-static_cast<double>(ll) /
                             static_cast<double>(n));
  }
  fit.iterations_run = iters;
  fit.final_loss = fit.loss_trace.back();
  fit.prior = prior;
  fit.estimates = posterior_mean_batch(prior, data);
  fit.post_var = posterior_var_batch(prior, data);
  return fit;
}

FitResult fit_grandmean(const Dataset& data, const FitConfig& config) {
  data.validate();
  if (data.n() < 2) throw data_error("need at least 2 observations");
  const Dataset ds = select(data, canonical_order(data));
  const double zbar = ds.z.mean();
  const ArrayXd centers = ArrayXd::Constant(ds.n(), zbar);
  const double A = minimize_sure_A(ds.z, ds.sigma2, centers, sample_var(ds.z));
  FitResult fit;
  fit.method = "grandmean";
  fit.seed = config.seed;
  fit.A = A;
  fit.center = zbar;
  ShrinkageRule rule;
  rule.lambda = data.sigma2 / (data.sigma2 + A);
  rule.b = rule.lambda * zbar;
  rule.validate();
  fit.estimates = rule.apply(data.z);
  fit.post_var = data.sigma2 * A / (data.sigma2 + A);
  fit.rule = rule;
  const ArrayXd denom = ds.sigma2 + A;
  fit.final_loss =
      (ds.sigma2.square() * (ds.z - zbar).square() / denom.square() +
       ds.sigma2 - 2.0 * ds.sigma2.square() / denom)
          .mean();
  fit.loss_trace.push_back(fit.final_loss);
  return fit;
}

FitResult fit_ebcf(const Dataset& data, const FitConfig& config) {
  data.validate();
  if (data.n() < 10) throw data_error("fold too small: ebcf needs n >= 10");
  const auto order = canonical_order(data);
  const Dataset ds = select(data, order);
  const Index n = ds.n();
  const auto folds = make_folds(n, config.folds, config.seed,
                                config.replicate);
  const NetInputs in = prepare_inputs(ds, config.standardize);
  const double bracket_var = sample_var(ds.z);

  FitResult fit;
  fit.method = "ebcf";
  fit.seed = config.seed;
  fit.fold_A.resize(static_cast<Index>(folds.size()));
  ArrayXd est(n), pvar(n), lam(n), off(n), terms(n);
  Rng init_rng(config.seed, config.replicate, Stream::mlp_init);

  for (size_t f = 0; f < folds.size(); ++f) {
    std::vector<Index> comp;
    comp.reserve(static_cast<size_t>(n));
    for (size_t g = 0; g < folds.size(); ++g)
      if (g != f) comp.insert(comp.end(), folds[g].begin(), folds[g].end());
    std::sort(comp.begin(), comp.end());

    MatrixXd Xc(static_cast<Index>(comp.size()), in.sorted.cols());
    VectorXd zc(static_cast<Index>(comp.size()));
    for (size_t k = 0; k < comp.size(); ++k) {
      Xc.row(static_cast<Index>(k)) = in.sorted.row(comp[k]);
      zc[static_cast<Index>(k)] = ds.z[comp[k]];
    }
    MlpParams net = init_mlp(in.sorted.cols(), 1, init_rng);
    MlpWork wk;
    VectorXd theta = net.theta;
    MatrixXd dOut;
    const double inv_nc = 1.0 / static_cast<double>(comp.size());
    auto loss_fn = [&](const VectorXd& th, VectorXd& g) {
      net.theta = th;
      mlp_forward(net, Xc, wk);
      const VectorXd r = wk.Out.col(0) - zc;
      dOut = (2.0 * inv_nc) * r;
      mlp_backward(net, Xc, wk, dOut, g);
      return r.squaredNorm() * inv_nc;
    };
    fit.iterations_run += optimize(theta, config, fit.loss_trace, loss_fn);
    net.theta = theta;
    fit.fold_nets.push_back(net);

    // holdout centers, then the fold's own SURE-minimizing A
    const auto& hold = folds[f];
    const Index nh = static_cast<Index>(hold.size());
    MatrixXd Xh(nh, in.sorted.cols());
    ArrayXd zh(nh), s2h(nh);
    for (Index k = 0; k < nh; ++k) {
      Xh.row(k) = in.sorted.row(hold[static_cast<size_t>(k)]);
      zh[k] = ds.z[hold[static_cast<size_t>(k)]];
      s2h[k] = ds.sigma2[hold[static_cast<size_t>(k)]];
    }
    mlp_forward(net, Xh, wk);
    const ArrayXd mh = wk.Out.col(0).array();
    const double A = minimize_sure_A(zh, s2h, mh, bracket_var);
    fit.fold_A[static_cast<Index>(f)] = A;
    for (Index k = 0; k < nh; ++k) {
      const Index i = hold[static_cast<size_t>(k)];
      const double s2 = s2h[k];
      const double l = s2 / (s2 + A);
      est[i] = l * mh[k] + (1.0 - l) * zh[k];
      pvar[i] = s2 * A / (s2 + A);
      lam[i] = l;
      off[i] = l * mh[k];
      const double d = s2 + A;
      terms[i] =
          s2 * s2 * (zh[k] - mh[k]) * (zh[k] - mh[k]) / (d * d) + s2 -
          2.0 * s2 * s2 / d;
    }
  }

  fit.folds.resize(folds.size());
  for (size_t f = 0; f < folds.size(); ++f) {
    for (Index i : folds[f])
      fit.folds[f].push_back(order[static_cast<size_t>(i)]);
    std::sort(fit.folds[f].begin(), fit.folds[f].end());
  }

  fit.estimates = scatter_back(est, order);
  fit.post_var = scatter_back(pvar, order);
  ShrinkageRule rule;
  rule.lambda = scatter_back(lam, order);
  rule.b = scatter_back(off, order);
  rule.validate();
  fit.rule = rule;
  fit.final_loss = terms.mean();
  fit.loss_trace.push_back(fit.final_loss);
  return fit;
}

FitResult fit_sure_ls(const Dataset& data, const FitConfig& config) {
  data.validate();
  if (data.n() < 2) throw data_error("need at least 2 observations");
  const auto order = canonical_order(data);
  const Dataset ds = select(data, order);
  const Index n = ds.n();
  const NetInputs in = prepare_inputs(ds, config.standardize);
  Rng init_rng(config.seed, config.replicate, Stream::mlp_init);
  MlpParams net = init_mlp(in.sorted.cols(), 2, init_rng);
  MlpWork wk;
  MatrixXd dOut(n, 2);
  const double inv_n = 1.0 / static_cast<double>(n);

  VectorXd theta = net.theta;
  FitResult fit;
  fit.method = "sure-ls";
  fit.seed = config.seed;
  auto loss_fn = [&](const VectorXd& th, VectorXd& g) {
    net.theta = th;
    mlp_forward(net, in.sorted, wk);
    double loss = 0, gm = 0, gAt = 0;
    for (Index i = 0; i < n; ++i) {
      loss += ls_term_value_and_grad(wk.Out(i, 0), wk.Out(i, 1), ds.z[i],
                                     ds.sigma2[i], gm, gAt);
      dOut(i, 0) = inv_n * gm;
      dOut(i, 1) = inv_n * gAt;
    }
    mlp_backward(net, in.sorted, wk, dOut, g);
    return loss * inv_n;
  };
  fit.iterations_run = optimize(theta, config, fit.loss_trace, loss_fn);
  net.theta = theta;
  VectorXd gdummy(theta.size());
  fit.final_loss = loss_fn(theta, gdummy);
  fit.loss_trace.push_back(fit.final_loss);
  fit.net = net;
  fit.in_mean = in.mean;
  fit.in_scale = in.scale;

  // evaluate the fitted rule per observation in the caller's order
  mlp_forward(net, scaled_inputs(data, in.mean, in.scale), wk);
  const ArrayXd m = wk.Out.col(0).array();
  const ArrayXd A = wk.Out.col(1).array().min(kLsLogClip).max(-kLsLogClip).exp();
  const ArrayXd denom = data.sigma2 + A;
  ShrinkageRule rule;
  rule.lambda = data.sigma2 / denom;
  rule.b = rule.lambda * m;
  rule.validate();
  fit.estimates = rule.apply(data.z);
  fit.post_var = data.sigma2 * A / denom;
  fit.rule = rule;
  return fit;
}

FitResult fit_sure_thing_from(const MlpParams& net0, double m_offset,
                              const Dataset& data, const FitConfig& config) {
  data.validate();
  if (data.n() < 2) throw data_error("need at least 2 observations");
  const Dataset ds = select(data, canonical_order(data));
  const Index n = ds.n();
  const NetInputs in = prepare_inputs(ds, config.standardize);
  if (net0.in != in.sorted.cols())
    throw data_error("network input width does not match covariates");
  const Index K = net0.out / 2;
  if (K < 2 || net0.out != 2 * K)
    throw data_error("network output must have width 2K, K >= 2");

  MlpParams net = net0;
  MlpWork wk;
  HeadWork hw;
  hw.resize(K);
  MatrixXd dOut(n, 2 * K);
  VectorXd ghead(2 * K), head(2 * K);
  const double inv_n = 1.0 / static_cast<double>(n);

  VectorXd theta = net.theta;
  FitResult fit;
  fit.method = "sure-thing";
  fit.seed = config.seed;
  fit.m_offset = m_offset;
  auto loss_fn = [&](const VectorXd& th, VectorXd& g) {
    net.theta = th;
    mlp_forward(net, in.sorted, wk);
    double loss = 0;
    for (Index i = 0; i < n; ++i) {
      head = wk.Out.row(i).transpose();
      loss += sure_head_value_and_grad(head, m_offset, ds.z[i], ds.sigma2[i],
                                       hw, ghead);
      dOut.row(i) = inv_n * ghead.transpose();
    }
    mlp_backward(net, in.sorted, wk, dOut, g);
    return loss * inv_n;
  };
  fit.iterations_run = optimize(theta, config, fit.loss_trace, loss_fn);
  net.theta = theta;
  VectorXd gdummy(theta.size());
  fit.final_loss = loss_fn(theta, gdummy);
  fit.loss_trace.push_back(fit.final_loss);
  fit.net = net;
  fit.in_mean = in.mean;
  fit.in_scale = in.scale;

  mlp_forward(net, scaled_inputs(data, in.mean, in.scale), wk);
  ArrayXd est(data.n()), pvar(data.n());
  for (Index i = 0; i < data.n(); ++i) {
    const ParticlePrior prior_i =
        decode_head(wk.Out.row(i).transpose(), m_offset);
    Observation obs;
    obs.z = data.z[i];
    obs.sigma2 = data.sigma2[i];
    const PosteriorSummary ps = posterior_summary(prior_i, obs);
    est[i] = ps.mean;
    pvar[i] = ps.variance;
  }
  fit.estimates = est;
  fit.post_var = pvar;
  return fit;
}

FitResult fit_sure_thing(const Dataset& data, const FitConfig& config) {
  data.validate();
  if (data.n() < 2) throw data_error("need at least 2 observations");
  Rng init_rng(config.seed, config.replicate, Stream::mlp_init);
  const MlpParams net0 = init_mlp(data.dim() + 1, 2 * config.K, init_rng);
  const Dataset ds = select(data, canonical_order(data));
  return fit_sure_thing_from(net0, median(ds.z), data, config);
}

FitResult fit_mle(const Dataset& data, const FitConfig& config) {
  data.validate();
  if (data.n() < 1) throw data_error("empty data");
  FitResult fit;
  fit.method = "mle";
  fit.seed = config.seed;
  fit.estimates = data.z;
  fit.final_loss = select(data, canonical_order(data)).sigma2.mean();
  fit.loss_trace.push_back(fit.final_loss);
  return fit;
}

bool is_known_method(const std::string& method) {
  return method == "sure-pm" || method == "sure-ls" ||
         method == "sure-thing" || method == "npmle" ||
         method == "grandmean" || method == "ebcf" || method == "mle";
}

FitResult fit_method(const std::string& method, const Dataset& data,
                     const FitConfig& config) {
  if (method == "sure-pm") return fit_sure_pm(data, config);
  if (method == "sure-ls") return fit_sure_ls(data, config);
  if (method == "sure-thing") return fit_sure_thing(data, config);
  if (method == "npmle") return fit_npmle(data, config);
  if (method == "grandmean") return fit_grandmean(data, config);
  if (method == "ebcf") return fit_ebcf(data, config);
  if (method == "mle") return fit_mle(data, config);
  throw usage_error("unknown method: " + method +
                    " (valid: sure-pm, sure-ls, sure-thing, npmle, "
                    "grandmean, ebcf, mle)");
}

ArrayXd sure_terms_at(const FitResult& fit, const Dataset& data) {
  data.validate();
  if (fit.method == "sure-pm" || fit.method == "npmle") {
    if (!fit.prior) throw data_error("fit carries no prior");
    return sure_terms(*fit.prior, data);
  }
  if (fit.method == "grandmean") {
    if (!fit.A) throw data_error("fit carries no A");
    const ArrayXd denom = data.sigma2 + *fit.A;
    const ArrayXd s = (fit.center - data.z) / denom;
    return data.sigma2 + data.sigma2.square() * (s.square() - 2.0 / denom);
  }
  if (fit.method == "sure-ls") {
    if (!fit.net) throw data_error("fit carries no network");
    MlpWork wk;
    mlp_forward(*fit.net, scaled_inputs(data, fit.in_mean, fit.in_scale), wk);
    const ArrayXd m = wk.Out.col(0).array();
    const ArrayXd A = wk.Out.col(1).array().min(kLsLogClip).max(-kLsLogClip).exp();
    const ArrayXd denom = data.sigma2 + A;
    const ArrayXd s = (m - data.z) / denom;
    return data.sigma2 + data.sigma2.square() * (s.square() - 2.0 / denom);
  }
  if (fit.method == "sure-thing") {
    if (!fit.net) throw data_error("fit carries no network");
    MlpWork wk;
    mlp_forward(*fit.net, scaled_inputs(data, fit.in_mean, fit.in_scale), wk);
    ArrayXd terms(data.n());
    for (Index i = 0; i < data.n(); ++i) {
      const ParticlePrior prior_i =
          decode_head(wk.Out.row(i).transpose(), fit.m_offset);
      const auto [s, d] = score_and_deriv(prior_i, data.z[i], data.sigma2[i]);
      terms[i] = data.sigma2[i] +
                 data.sigma2[i] * data.sigma2[i] * (s * s + 2.0 * d);
    }
    return terms;
  }
  throw usage_error("method " + fit.method + " has no marginal score");
}

CvResult cv_sure(const Dataset& data, const std::string& method,
                 const std::vector<FitConfig>& hyper_grid, int folds) {
  if (hyper_grid.empty()) throw usage_error("empty hyperparameter grid");
  if (!(method == "sure-pm" || method == "sure-ls" ||
        method == "sure-thing" || method == "npmle" ||
        method == "grandmean"))
    throw usage_error("cv_sure needs a method with a marginal score");
  data.validate();
  const Dataset ds = select(data, canonical_order(data));
  const auto fold_idx =
      make_folds(ds.n(), folds, hyper_grid[0].seed, hyper_grid[0].replicate);

  CvResult res;
  res.grid = hyper_grid;
  res.fold_scores.resize(static_cast<Index>(hyper_grid.size()),
                         static_cast<Index>(folds));
  for (size_t g = 0; g < hyper_grid.size(); ++g) {
    for (size_t f = 0; f < fold_idx.size(); ++f) {
      std::vector<Index> comp;
      for (size_t h = 0; h < fold_idx.size(); ++h)
        if (h != f)
          comp.insert(comp.end(), fold_idx[h].begin(), fold_idx[h].end());
      std::sort(comp.begin(), comp.end());
      const Dataset train = select(ds, comp);
      const Dataset hold = select(ds, fold_idx[f]);
      const FitResult fit = fit_method(method, train, hyper_grid[g]);
      res.fold_scores(static_cast<Index>(g), static_cast<Index>(f)) =
          sure_terms_at(fit, hold).mean();
    }
  }
  res.mean_scores = res.fold_scores.rowwise().mean();
  res.mean_scores.minCoeff(&res.chosen);
  return res;
}

}  // namespace sure_eb
