#pragma once
#include <cmath>

#include "sure_eb/rng.hpp"
#include "sure_eb/types.hpp"

namespace sure_eb {

// Feedforward network with two ReLU hidden layers of 8 units and a linear
// output head.  Parameters live in one flat vector so the optimizer treats
// the network like any other parameter block; the W*/b* accessors are views.
struct MlpParams {
  static constexpr Index hidden = 8;
  Index in = 0;
  Index out = 0;
  VectorXd theta;

  MlpParams() = default;
  MlpParams(Index in_dim, Index out_dim) : in(in_dim), out(out_dim) {
    theta = VectorXd::Zero(size());
  }

  Index size() const {
    return in * hidden + hidden + hidden * hidden + hidden + hidden * out + out;
  }

  using MapM = Eigen::Map<MatrixXd>;
  using MapV = Eigen::Map<VectorXd>;
  using CMapM = Eigen::Map<const MatrixXd>;
  using CMapV = Eigen::Map<const VectorXd>;

  MapM W1() { return {theta.data(), in, hidden}; }
  MapV b1() { return {theta.data() + in * hidden, hidden}; }
  MapM W2() { return {theta.data() + in * hidden + hidden, hidden, hidden}; }
  MapV b2() {
    return {theta.data() + in * hidden + hidden + hidden * hidden, hidden};
  }
  MapM W3() {
    return {theta.data() + in * hidden + 2 * hidden + hidden * hidden, hidden,
            out};
  }
  MapV b3() {
    return {theta.data() + in * hidden + 2 * hidden + hidden * hidden +
                hidden * out,
            out};
  }
  CMapM W1() const { return {theta.data(), in, hidden}; }
  CMapV b1() const { return {theta.data() + in * hidden, hidden}; }
  CMapM W2() const {
    return {theta.data() + in * hidden + hidden, hidden, hidden};
  }
  CMapV b2() const {
    return {theta.data() + in * hidden + hidden + hidden * hidden, hidden};
  }
  CMapM W3() const {
    return {theta.data() + in * hidden + 2 * hidden + hidden * hidden, hidden,
            out};
  }
  CMapV b3() const {
    return {theta.data() + in * hidden + 2 * hidden + hidden * hidden +
                hidden * out,
            out};
  }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) on each layer's weights and biases.
inline MlpParams init_mlp(Index in_dim, Index out_dim, Rng& rng) {
  if (in_dim < 1 || out_dim < 1) throw data_error("mlp needs in, out >= 1");
  MlpParams p(in_dim, out_dim);
  auto fill = [&rng](auto block, Index fan_in) {
    const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Index i = 0; i < block.size(); ++i)
      block.data()[i] = rng.uniform(-b, b);
  };
  fill(p.W1(), in_dim);
  fill(p.b1(), in_dim);
  fill(p.W2(), MlpParams::hidden);
  fill(p.b2(), MlpParams::hidden);
  fill(p.W3(), MlpParams::hidden);
  fill(p.b3(), MlpParams::hidden);
  return p;
}

// Forward/backward activations for a whole batch, reused across iterations.
struct MlpWork {
  MatrixXd A1, H1, A2, H2, Out;   // pre-activations and ReLU outputs
  MatrixXd dH2, dH1;              // backward scratch
};

inline void mlp_forward(const MlpParams& p, const MatrixXd& X, MlpWork& wk) {
  if (X.cols() != p.in) throw data_error("mlp input dimension mismatch");
  wk.A1.noalias() = X * p.W1();
  wk.A1.rowwise() += p.b1().transpose();
  wk.H1 = wk.A1.cwiseMax(0.0);
  wk.A2.noalias() = wk.H1 * p.W2();
  wk.A2.rowwise() += p.b2().transpose();
  wk.H2 = wk.A2.cwiseMax(0.0);
  wk.Out.noalias() = wk.H2 * p.W3();
  wk.Out.rowwise() += p.b3().transpose();
}

inline VectorXd mlp_forward(const MlpParams& p, const VectorXd& x) {
  MlpWork wk;
  mlp_forward(p, MatrixXd(x.transpose()), wk);
  return wk.Out.row(0).transpose();
}

// Accumulates d(sum of per-row losses)/d(theta) given dOut = dL/dOut.
// Requires the activations of the forward pass that produced Out.
inline void mlp_backward(const MlpParams& p, const MatrixXd& X, MlpWork& wk,
                         const MatrixXd& dOut, VectorXd& gtheta) {
  MlpParams g(p.in, p.out);
  g.W3().noalias() = wk.H2.transpose() * dOut;
  g.b3() = dOut.colwise().sum();
  wk.dH2.noalias() = dOut * p.W3().transpose();
  wk.dH2 = (wk.A2.array() > 0).select(wk.dH2, 0.0);
  g.W2().noalias() = wk.H1.transpose() * wk.dH2;
  g.b2() = wk.dH2.colwise().sum();
  wk.dH1.noalias() = wk.dH2 * p.W2().transpose();
  wk.dH1 = (wk.A1.array() > 0).select(wk.dH1, 0.0);
  g.W1().noalias() = X.transpose() * wk.dH1;
  g.b1() = wk.dH1.colwise().sum();
  gtheta = g.theta;
}

}  // namespace sure_eb
