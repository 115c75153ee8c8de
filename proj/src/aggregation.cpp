#include "fedsvm/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include <fmt/format.h>

#include "fedsvm/client.hpp"
#include "fedsvm/error.hpp"

namespace fedsvm {

namespace {

void stderr_sink(std::string_view message) {
  std::cerr << "warning: " << message << '\n';
}

WarningSink g_warning_sink = &stderr_sink;

}  // namespace

void set_warning_sink(WarningSink sink) { g_warning_sink = sink; }

void warn(std::string_view message) {
  if (g_warning_sink) g_warning_sink(message);
}

Tensor weighted_mean(std::span<const Tensor* const> values,
                     std::span<const double> weights) {
  if (values.empty()) throw Error("weighted mean of an empty set");
  if (values.size() != weights.size()) {
    throw ShapeError(fmt::format("weighted mean got {} values and {} weights",
                                 values.size(), weights.size()));
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw Error(fmt::format("aggregation weights must be positive, got {}", w));
    }
    total += w;
  }
  const Tensor& anchor = *values.front();
  Tensor out = anchor;
  for (std::size_t i = 1; i < values.size(); ++i) {
    const Tensor& x = *values[i];
    require_same_shape(anchor, x, "weighted mean");
    const double w = weights[i] / total;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * (x[j] - anchor[j]);
  }
  return out;
}

Model fedavg_aggregate(const std::vector<Model>& models,
                       const std::vector<double>& dataset_sizes) {
  if (models.empty()) throw Error("fedavg_aggregate needs at least one model");
  if (models.size() != dataset_sizes.size()) {
    throw ShapeError(fmt::format("fedavg_aggregate got {} models and {} sizes",
                                 models.size(), dataset_sizes.size()));
  }
  for (std::size_t i = 1; i < models.size(); ++i) {
    require_compatible(models.front(), models[i], "fedavg_aggregate");
  }
  std::vector<const Tensor*> slot(models.size());
  auto mean_of = [&](auto get) {
    for (std::size_t i = 0; i < models.size(); ++i) slot[i] = &get(models[i]);
    return weighted_mean(slot, dataset_sizes);
  };
  Model out;
  out.encoder.resize(models.front().encoder.size());
  for (std::size_t l = 0; l < out.encoder.size(); ++l) {
    out.encoder[l].weights =
        mean_of([l](const Model& m) -> const Tensor& { return m.encoder[l].weights; });
    out.encoder[l].bias =
        mean_of([l](const Model& m) -> const Tensor& { return m.encoder[l].bias; });
  }
  out.logit_matrix =
      mean_of([](const Model& m) -> const Tensor& { return m.logit_matrix; });
  return out;
}

Tensor pseudo_gradient(const Model& global_model, const Model& aggregated) {
  require_compatible(global_model, aggregated, "pseudo_gradient");
  return flatten_params(aggregated) - flatten_params(global_model);
}

Model apply_delta(const Model& global_model, const Tensor& delta) {
  Tensor flat = flatten_params(global_model);
  require_same_shape(flat, delta, "pseudo-gradient");
  flat += delta;
  require_finite(flat, "aggregated model");
  return unflatten_params(global_model, flat);
}

Model fedopt_step(const Model& global_model, const Tensor& delta,
                  OptimizerState& server_state) {
  const Tensor flat = flatten_params(global_model);
  require_same_shape(flat, delta, "pseudo-gradient");
  if (server_state.kind == OptimizerKind::Sgd && server_state.step_count == 0) {
    warn("FedOpt with an SGD server optimizer degenerates to scaled FedAvg");
  }
  Tensor neg = delta;
  neg *= -1.0;
  return unflatten_params(global_model, optimizer_step(flat, neg, server_state));
}

double fedaws_loss(const Tensor& logit_matrix, Tensor* grad) {
  if (logit_matrix.rank() != 2 || logit_matrix.rows() < 2) {
    throw ShapeError("FedAwS penalty needs a K x d logit matrix with K >= 2");
  }
  const std::size_t k = logit_matrix.rows();
  for (std::size_t r = 0; r < k; ++r) {
    if (norm(logit_matrix.row(r)) == 0.0) {
      throw NumericError(fmt::format("class embedding {} has zero norm", r));
    }
  }
  if (grad) *grad = Tensor::zeros_like(logit_matrix);
  double loss = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const double c = cosine(logit_matrix.row(a), logit_matrix.row(b));
      if (c <= 0.0) continue;
      loss += c * c;
      if (grad) {
        add_cosine_gradient(logit_matrix.row(a), logit_matrix.row(b), 2.0 * c,
                            grad->row(a));
        add_cosine_gradient(logit_matrix.row(b), logit_matrix.row(a), 2.0 * c,
                            grad->row(b));
      }
    }
  }
  return loss;
}

Tensor fedaws_regularize(const Tensor& logit_matrix, OptimizerState& server_state) {
  Tensor grad;
  fedaws_loss(logit_matrix, &grad);
  return optimizer_step(logit_matrix, grad, server_state);
}

std::string_view to_string(LambdaShape shape) {
  switch (shape) {
    case LambdaShape::Decreasing: return "decreasing";
    case LambdaShape::Increasing: return "increasing";
    case LambdaShape::Constant: return "constant";
  }
  return "?";
}

LambdaShape lambda_shape_from_string(std::string_view name) {
  if (name == "decreasing") return LambdaShape::Decreasing;
  if (name == "increasing") return LambdaShape::Increasing;
  if (name == "constant") return LambdaShape::Constant;
  throw ConfigError(fmt::format(
      "unknown lambda schedule '{}' (expected decreasing, increasing or constant)",
      name));
}

void LambdaSchedule::validate() const {
  if (!(initial > 0.0)) throw ConfigError("strategy.lambda_initial must be positive");
  if (!(floor > 0.0)) throw ConfigError("strategy.lambda_floor must be positive");
  if (total_rounds == 0) throw ConfigError("lambda schedule needs T >= 1");
}

double lambda_value(const LambdaSchedule& schedule, std::size_t t) {
  schedule.validate();
  if (t >= schedule.total_rounds) {
    throw Error(fmt::format("round {} outside the lambda schedule [0, {})", t,
                            schedule.total_rounds));
  }
  const double frac =
      static_cast<double>(t) / static_cast<double>(schedule.total_rounds);
  switch (schedule.shape) {
    case LambdaShape::Decreasing:
      return std::max(schedule.floor, schedule.initial * (1.0 - frac));
    case LambdaShape::Increasing:
      return std::max(schedule.floor,
                      schedule.initial * static_cast<double>(t + 1) /
                          static_cast<double>(schedule.total_rounds));
    case LambdaShape::Constant:
      return schedule.initial;
  }
  return schedule.initial;
}

Tensor turbosvm_selective_aggregate(const OvoSvm& svm) {
  if (!svm.fitted()) throw Error("selective aggregation needs a fitted OVO SVM");
  const std::size_t k = svm.num_classes;
  const std::size_t d = svm.class_members.front().front().embedding.size();
  Tensor out(Shape{k, d});
  for (std::size_t c = 0; c < k; ++c) {
    const auto svs = support_vectors_of_class(svm, c);
    if (svs.empty()) {
      throw Error(fmt::format("class {} has no support vectors", c));
    }
    std::vector<const Tensor*> values;
    std::vector<double> weights;
    for (const auto& sv : svs) {
      values.push_back(&sv.embedding);
      weights.push_back(sv.weight);
    }
    const Tensor row = weighted_mean(values, weights);
    std::copy(row.values().begin(), row.values().end(), out.row(c).begin());
  }
  return out;
}

std::vector<Tensor> pair_normals(const OvoSvm& svm) {
  if (!svm.fitted()) throw Error("pair normals need a fitted OVO SVM");
  std::vector<Tensor> normals;
  normals.reserve(svm.pairs.size());
  for (const auto& p : svm.pairs) normals.push_back(p.model.normal);
  return normals;
}

double spread_out_loss(const Tensor& logit_matrix, const std::vector<Tensor>& normals,
                       Tensor* grad) {
  if (logit_matrix.rank() != 2) throw ShapeError("logit matrix must be K x d");
  const std::size_t k = logit_matrix.rows();
  const std::size_t d = logit_matrix.cols();
  if (normals.size() != k * (k - 1) / 2) {
    throw ShapeError(fmt::format("{} classes need {} hyperplane normals, got {}", k,
                                 k * (k - 1) / 2, normals.size()));
  }
  if (grad) *grad = Tensor::zeros_like(logit_matrix);
  double loss = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const Tensor& h = normals[pair_index(a, b, k)];
      if (h.size() != d) throw ShapeError("hyperplane normal width differs from d");
      const double hh = squared_norm(h.values());
      if (!(hh > 0.0)) {
        throw NumericError(fmt::format("hyperplane ({}, {}) has zero norm", a, b));
      }
      const double u = dot(logit_matrix.row(a), h.values()) -
                       dot(logit_matrix.row(b), h.values());
      const double term = std::exp(-u * u / (2.0 * hh));
      loss += term;
      if (grad) {
        const double s = -term * u / hh;
        auto ga = grad->row(a);
        auto gb = grad->row(b);
        for (std::size_t j = 0; j < d; ++j) {
          ga[j] += s * h[j];
          gb[j] -= s * h[j];
        }
      }
    }
  }
  return loss;
}

Tensor turbosvm_maxmargin_regularize(const Tensor& logit_matrix, const OvoSvm& svm,
                                     OptimizerState& server_state,
                                     std::size_t reg_steps,
                                     std::vector<double>* losses) {
  const auto normals = pair_normals(svm);
  if (logit_matrix.rows() != svm.num_classes) {
    throw ShapeError(fmt::format("logit matrix has {} rows, SVM covers {} classes",
                                 logit_matrix.rows(), svm.num_classes));
  }
  Tensor w = logit_matrix;
  Tensor grad;
  for (std::size_t s = 0; s < reg_steps; ++s) {
    const double loss = spread_out_loss(w, normals, &grad);
    if (losses) losses->push_back(loss);
    w = optimizer_step(w, grad, server_state);
  }
  if (losses) losses->push_back(spread_out_loss(w, normals));
  return w;
}

}  // namespace fedsvm
