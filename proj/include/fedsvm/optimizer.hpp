#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "fedsvm/tensor.hpp"

namespace fedsvm {

enum class OptimizerKind { Sgd, Adam, AmsGrad };

std::string_view to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(std::string_view name);

/// Hyperparameters and running moments of a first-order optimizer.
///
/// Moment tensors are sized lazily on the first step and must keep the same
/// shape afterwards. SGD never allocates moments.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Sgd;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step_count = 0;
  Tensor first_moment;
  Tensor second_moment;
  Tensor max_second_moment;  // AMSGrad only: running max of bias-corrected v

  static OptimizerState sgd(double lr);
  static OptimizerState adam(double lr, double beta1 = 0.9,
                             double beta2 = 0.999, double epsilon = 1e-8);
  static OptimizerState amsgrad(double lr, double beta1 = 0.9,
                                double beta2 = 0.999, double epsilon = 1e-8);

  /// Clears moments and the step counter, keeping hyperparameters.
  void reset();
};

/// params - lr * grad
Tensor sgd_step(const Tensor& params, const Tensor& grad, OptimizerState& state);

/// Bias-corrected Adam step; AMSGrad when state.kind == AmsGrad.
Tensor adam_step(const Tensor& params, const Tensor& grad, OptimizerState& state);

/// Dispatches on state.kind.
Tensor optimizer_step(const Tensor& params, const Tensor& grad,
                      OptimizerState& state);

}  // namespace fedsvm
