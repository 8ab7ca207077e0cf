#pragma once
#include "sure_eb/types.hpp"

namespace sure_eb {

template <typename Scalar>
struct AdamStateT {
  Scalar learning_rate = Scalar(0.01);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
  long step = 0;
  Eigen::Vector<Scalar, Eigen::Dynamic> m, v;

  explicit AdamStateT(Index size = 0, Scalar lr = Scalar(0.01))
      : learning_rate(lr) {
    reset(size);
  }
  void reset(Index size) {
    step = 0;
    m = Eigen::Vector<Scalar, Eigen::Dynamic>::Zero(size);
    v = Eigen::Vector<Scalar, Eigen::Dynamic>::Zero(size);
  }
};
using AdamState = AdamStateT<double>;

// One bias-corrected Adam update, in place.
template <typename Scalar>
void adam_step(AdamStateT<Scalar>& state,
               Eigen::Vector<Scalar, Eigen::Dynamic>& params,
               const Eigen::Vector<Scalar, Eigen::Dynamic>& grad) {
  if (params.size() != grad.size() || params.size() != state.m.size())
    throw data_error("adam_step shape mismatch");
  if (!grad.array().isFinite().all())
    throw numeric_error("non-finite gradient in adam_step");
  ++state.step;
  state.m = state.beta1 * state.m + (1 - state.beta1) * grad;
  state.v.array() = state.beta2 * state.v.array() +
                    (1 - state.beta2) * grad.array().square();
  const Scalar c1 = 1 - std::pow(state.beta1, Scalar(state.step));
  const Scalar c2 = 1 - std::pow(state.beta2, Scalar(state.step));
  params.array() -= state.learning_rate * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + state.epsilon);
}

}  // namespace sure_eb
