#include "fedsvm/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fedsvm/error.hpp"

namespace fedsvm {

std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Sgd:
      return "sgd";
    case OptimizerKind::Adam:
      return "adam";
    case OptimizerKind::AmsGrad:
      return "amsgrad";
  }
  return "unknown";
}

OptimizerKind optimizer_kind_from_string(std::string_view name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "amsgrad") return OptimizerKind::AmsGrad;
  throw ConfigError(fmt::format(
      "unknown optimizer '{}' (expected sgd, adam or amsgrad)", name));
}

OptimizerState OptimizerState::sgd(double lr) {
  OptimizerState s;
  s.kind = OptimizerKind::Sgd;
  s.learning_rate = lr;
  return s;
}

OptimizerState OptimizerState::adam(double lr, double beta1, double beta2,
                                    double epsilon) {
  OptimizerState s;
  s.kind = OptimizerKind::Adam;
  s.learning_rate = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  return s;
}

OptimizerState OptimizerState::amsgrad(double lr, double beta1, double beta2,
                                       double epsilon) {
  auto s = adam(lr, beta1, beta2, epsilon);
  s.kind = OptimizerKind::AmsGrad;
  return s;
}

void OptimizerState::reset() {
  step_count = 0;
  first_moment = Tensor();
  second_moment = Tensor();
  max_second_moment = Tensor();
}

Tensor sgd_step(const Tensor& params, const Tensor& grad, OptimizerState& state) {
  if (state.kind != OptimizerKind::Sgd) {
    throw Error("sgd_step called with a non-SGD optimizer state");
  }
  require_same_shape(params, grad, "sgd_step");
  require_finite(grad, "sgd_step gradient");
  Tensor out = params;
  out.add_scaled(grad, -state.learning_rate);
  require_finite(out, "sgd_step result");
  ++state.step_count;
  return out;
}

Tensor adam_step(const Tensor& params, const Tensor& grad, OptimizerState& state) {
  if (state.kind == OptimizerKind::Sgd) {
    throw Error("adam_step called with an SGD optimizer state");
  }
  require_same_shape(params, grad, "adam_step");
  require_finite(grad, "adam_step gradient");

  const bool ams = state.kind == OptimizerKind::AmsGrad;
  if (state.step_count == 0 || state.first_moment.empty()) {
    state.first_moment = Tensor::zeros_like(params);
    state.second_moment = Tensor::zeros_like(params);
    state.max_second_moment = ams ? Tensor::zeros_like(params) : Tensor();
  }
  require_same_shape(state.first_moment, params, "adam_step moments");

  const auto step = static_cast<double>(state.step_count + 1);
  const double bc1 = 1.0 - std::pow(state.beta1, step);
  const double bc2 = 1.0 - std::pow(state.beta2, step);

  Tensor out = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    const double m_hat = m / bc1;
    double v_hat = v / bc2;
    if (ams) {
      double& v_max = state.max_second_moment[i];
      v_max = std::max(v_max, v_hat);
      v_hat = v_max;
    }
    out[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
  require_finite(out, "adam_step result");
  ++state.step_count;
  return out;
}

Tensor optimizer_step(const Tensor& params, const Tensor& grad,
                      OptimizerState& state) {
  return state.kind == OptimizerKind::Sgd ? sgd_step(params, grad, state)
                                          : adam_step(params, grad, state);
}

}  // namespace fedsvm
