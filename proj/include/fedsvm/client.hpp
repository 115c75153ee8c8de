#pragma once

#include <cstddef>
#include <variant>

#include "fedsvm/dataset.hpp"
#include "fedsvm/model.hpp"

namespace fedsvm {

struct Vanilla {};

/// FedProx: adds mu/2 |theta - theta_G|^2 to the local objective.
struct Prox {
  double mu = 0.01;
};

/// MOON model-contrastive term with weight `coeff` and temperature.
struct Moon {
  double coeff = 1.0;
  double temperature = 0.5;
};

using ClientVariant = std::variant<Vanilla, Prox, Moon>;

struct ClientConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 64;
  double learning_rate = 0.1;
  ClientVariant variant = Vanilla{};

  void validate() const;
};

struct ClientResult {
  Model model;
  double mean_loss = 0.0;  // mean batch objective over all local steps
  std::size_t steps = 0;
};

/// Local mini-batch SGD starting from `global_model`. Batches come from a
/// per-epoch shuffle drawn from `rng`; the last partial batch is kept.
/// `previous_model` is the client's model from the last round it took part
/// in (MOON only); nullptr falls back to the global model.
ClientResult client_update(const Model& global_model, const ClientData& data,
                           const ClientConfig& config, Rng& rng,
                           const Model* previous_model = nullptr);

/// mu * (theta - theta_G), flattened.
Tensor prox_gradient(const Tensor& params, const Tensor& global_params, double mu);
double prox_loss(const Tensor& params, const Tensor& global_params, double mu);

/// Cosine similarity with a zero-norm guard: if |a||b| < 1e-8 the similarity
/// and its gradient are taken as 0.
double cosine(std::span<const double> a, std::span<const double> b);

/// d cos(a, b) / d a, accumulated as out += scale * gradient.
void add_cosine_gradient(std::span<const double> a, std::span<const double> b,
                         double scale, std::span<double> out);

/// Mean over rows of -log(e^{cos(z,z_g)/tau} / (e^{cos(z,z_g)/tau} + e^{cos(z,z_p)/tau})).
/// If `grad` is non-null it receives d(loss)/dz (same shape as z).
double moon_contrastive_loss(const Tensor& z, const Tensor& z_global,
                             const Tensor& z_previous, double temperature,
                             Tensor* grad);

/// Full local objective on one batch, including the variant's extra term.
/// Exposed so the combined gradient can be checked numerically.
LossAndGradient client_objective(const Model& model, const Batch& batch,
                                 const ClientConfig& config,
                                 const Model& global_model,
                                 const Model& previous_model);

}  // namespace fedsvm
