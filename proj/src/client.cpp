#include "fedsvm/client.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "fedsvm/error.hpp"

namespace fedsvm {

namespace {

constexpr double kCosineEps = 1e-8;

// Visits every (param, other) tensor pair of two same-layout models.
template <typename A, typename B, typename F>
void for_each_tensor(A& a, B& b, F&& f) {
  for (std::size_t l = 0; l < a.encoder.size(); ++l) {
    f(a.encoder[l].weights, b.encoder[l].weights);
    f(a.encoder[l].bias, b.encoder[l].bias);
  }
  f(a.logit_matrix, b.logit_matrix);
}

Batch gather(const ClientData& data, std::span<const std::size_t> idx) {
  const std::size_t p = data.features.cols();
  Batch batch{Tensor(Shape{idx.size(), p}), {}};
  batch.labels.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto src = data.features.row(idx[i]);
    std::copy(src.begin(), src.end(), batch.inputs.row(i).begin());
    batch.labels.push_back(data.labels[idx[i]]);
  }
  return batch;
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void ClientConfig::validate() const {
  if (epochs == 0) throw ConfigError("client.epochs must be positive");
  if (batch_size == 0) throw ConfigError("client.batch_size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("client.learning_rate must be finite and nonnegative");
  }
  if (const auto* p = std::get_if<Prox>(&variant); p && !(p->mu >= 0.0)) {
    throw ConfigError("client.mu must be nonnegative");
  }
  if (const auto* m = std::get_if<Moon>(&variant)) {
    if (!(m->coeff >= 0.0)) throw ConfigError("client.moon_coeff must be nonnegative");
    if (!(m->temperature > 0.0)) {
      throw ConfigError("client.moon_temperature must be positive");
    }
  }
}

Tensor prox_gradient(const Tensor& params, const Tensor& global_params, double mu) {
  require_same_shape(params, global_params, "prox gradient");
  Tensor g = params - global_params;
  g *= mu;
  return g;
}

double prox_loss(const Tensor& params, const Tensor& global_params, double mu) {
  require_same_shape(params, global_params, "prox loss");
  const Tensor diff = params - global_params;
  return 0.5 * mu * squared_norm(diff.values());
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double denom = norm(a) * norm(b);
  if (denom < kCosineEps) return 0.0;
  return dot(a, b) / denom;
}

void add_cosine_gradient(std::span<const double> a, std::span<const double> b,
                         double scale, std::span<double> out) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na * nb < kCosineEps) return;
  const double c = dot(a, b) / (na * nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] += scale * (b[i] / (na * nb) - c * a[i] / (na * na));
  }
}

double moon_contrastive_loss(const Tensor& z, const Tensor& z_global,
                             const Tensor& z_previous, double temperature,
                             Tensor* grad) {
  require_same_shape(z, z_global, "MOON global embeddings");
  require_same_shape(z, z_previous, "MOON previous embeddings");
  if (!(temperature > 0.0)) throw Error("MOON temperature must be positive");
  const std::size_t b = z.rows();
  if (grad) *grad = Tensor::zeros_like(z);
  double total = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    const double sg = cosine(z.row(r), z_global.row(r));
    const double sp = cosine(z.row(r), z_previous.row(r));
    // -log(e^{sg/t} / (e^{sg/t} + e^{sp/t})) = softplus((sp - sg) / t)
    const double u = (sp - sg) / temperature;
    total += softplus(u);
    if (grad) {
      const double s = sigmoid(u) / temperature / static_cast<double>(b);
      add_cosine_gradient(z.row(r), z_previous.row(r), s, grad->row(r));
      add_cosine_gradient(z.row(r), z_global.row(r), -s, grad->row(r));
    }
  }
  return total / static_cast<double>(b);
}

LossAndGradient client_objective(const Model& model, const Batch& batch,
                                 const ClientConfig& config,
                                 const Model& global_model,
                                 const Model& previous_model) {
  const ForwardPass pass = forward(model, batch.inputs);
  Tensor logit_grad;
  LossAndGradient out;
  out.loss = cross_entropy(pass.logits, batch.labels, &logit_grad);

  Tensor embedding_grad;
  if (const auto* moon = std::get_if<Moon>(&config.variant)) {
    const Tensor zg = encode(global_model, batch.inputs);
    const Tensor zp = encode(previous_model, batch.inputs);
    out.loss += moon->coeff * moon_contrastive_loss(pass.embeddings(), zg, zp,
                                                    moon->temperature,
                                                    &embedding_grad);
    embedding_grad *= moon->coeff;
  }
  out.grad = backward(model, pass, logit_grad, embedding_grad);

  if (const auto* prox = std::get_if<Prox>(&config.variant)) {
    const double mu = prox->mu;
    auto add = [&](Tensor& g, const Tensor& theta, const Tensor& theta_g) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = theta[i] - theta_g[i];
        g[i] += mu * d;
        out.loss += 0.5 * mu * d * d;
      }
    };
    for (std::size_t l = 0; l < model.encoder.size(); ++l) {
      add(out.grad.encoder[l].weights, model.encoder[l].weights,
          global_model.encoder[l].weights);
      add(out.grad.encoder[l].bias, model.encoder[l].bias, global_model.encoder[l].bias);
    }
    add(out.grad.logit_matrix, model.logit_matrix, global_model.logit_matrix);
  }
  require_finite(out.loss, "client objective");
  return out;
}

ClientResult client_update(const Model& global_model, const ClientData& data,
                           const ClientConfig& config, Rng& rng,
                           const Model* previous_model) {
  config.validate();
  if (data.empty()) throw Error("client dataset is empty");
  if (data.features.cols() != global_model.input_dim()) {
    throw ShapeError(fmt::format("client features have width {}, model expects {}",
                                 data.features.cols(), global_model.input_dim()));
  }
  const Model& previous = previous_model ? *previous_model : global_model;
  require_compatible(global_model, previous, "previous client model");

  ClientResult result{global_model, 0.0, 0};
  std::vector<std::size_t> order(data.size());
  double loss_sum = 0.0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      const Batch batch = gather(data, std::span(order).subspan(start, len));
      auto step = client_objective(result.model, batch, config, global_model, previous);
      for_each_tensor(result.model, step.grad, [&](Tensor& p, const Tensor& g) {
        p.add_scaled(g, -config.learning_rate);
        require_finite(p, "client parameters");
      });
      loss_sum += step.loss;
      ++result.steps;
    }
  }
  result.mean_loss = loss_sum / static_cast<double>(result.steps);
  return result;
}

}  // namespace fedsvm
