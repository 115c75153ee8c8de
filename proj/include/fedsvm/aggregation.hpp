#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "fedsvm/model.hpp"
#include "fedsvm/optimizer.hpp"
#include "fedsvm/svm.hpp"

namespace fedsvm {

/// Weighted mean of equally shaped tensors, computed as
/// x_0 + sum_i w_i (x_i - x_0) with w_i = weights_i / sum(weights). The
/// anchored form makes the mean of identical inputs reproduce them exactly.
Tensor weighted_mean(std::span<const Tensor* const> values,
                     std::span<const double> weights);

/// Parameter-wise mean weighted by |D_n| / sum |D_m| over the given models.
Model fedavg_aggregate(const std::vector<Model>& models,
                       const std::vector<double>& dataset_sizes);

/// flatten(aggregated) - flatten(global)
Tensor pseudo_gradient(const Model& global_model, const Model& aggregated);

/// theta_G + delta, the FedAvg update expressed on the pseudo-gradient.
Model apply_delta(const Model& global_model, const Tensor& delta);

/// One server-optimizer step on theta_G with gradient -delta.
Model fedopt_step(const Model& global_model, const Tensor& delta,
                  OptimizerState& server_state);

/// sum_{k<k'} max(0, cos(w_k, w_k'))^2. Zero rows throw NumericError.
double fedaws_loss(const Tensor& logit_matrix, Tensor* grad = nullptr);

/// One server-optimizer step on the FedAwS penalty.
Tensor fedaws_regularize(const Tensor& logit_matrix, OptimizerState& server_state);

enum class LambdaShape { Decreasing, Increasing, Constant };

std::string_view to_string(LambdaShape shape);
LambdaShape lambda_shape_from_string(std::string_view name);

struct LambdaSchedule {
  double initial = 1.0;
  double floor = 0.01;
  std::size_t total_rounds = 1;
  LambdaShape shape = LambdaShape::Decreasing;

  void validate() const;
};

/// Decreasing: max(floor, initial (1 - t/T)). Increasing mirrors it in time:
/// max(floor, initial (t + 1)/T). Constant: initial.
double lambda_value(const LambdaSchedule& schedule, std::size_t t);

/// Row k = |D_m|-weighted mean of the support vectors of class k.
Tensor turbosvm_selective_aggregate(const OvoSvm& svm);

/// Per-pair fixed normals h_{k,k'}, indexed by pair_index.
std::vector<Tensor> pair_normals(const OvoSvm& svm);

/// sum_{k<k'} exp(-((w_k - w_k').h)^2 / (2 |h|^2)) with h held constant.
double spread_out_loss(const Tensor& logit_matrix, const std::vector<Tensor>& normals,
                       Tensor* grad = nullptr);

/// reg_steps server-optimizer steps descending the spread-out loss.
/// If `losses` is non-null it receives the loss before each step and after
/// the last one.
Tensor turbosvm_maxmargin_regularize(const Tensor& logit_matrix, const OvoSvm& svm,
                                     OptimizerState& server_state,
                                     std::size_t reg_steps,
                                     std::vector<double>* losses = nullptr);

/// Installs a sink for non-fatal warnings (default: stderr). nullptr silences.
using WarningSink = void (*)(std::string_view);
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

}  // namespace fedsvm
