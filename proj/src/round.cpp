#include "fedsvm/round.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

#include <fmt/format.h>

#include "fedsvm/error.hpp"

namespace fedsvm {

std::string_view to_string(ServerKind kind) {
  switch (kind) {
    case ServerKind::FedAvg: return "fedavg";
    case ServerKind::FedOpt: return "fedopt";
    case ServerKind::FedAwS: return "fedaws";
    case ServerKind::TurboSvm: return "turbosvm";
  }
  return "?";
}

ServerKind server_kind_from_string(std::string_view name) {
  if (name == "fedavg") return ServerKind::FedAvg;
  if (name == "fedopt") return ServerKind::FedOpt;
  if (name == "fedaws") return ServerKind::FedAwS;
  if (name == "turbosvm") return ServerKind::TurboSvm;
  throw ConfigError(fmt::format("unknown server strategy '{}'", name));
}

void ServerStrategy::validate() const {
  if (kind == ServerKind::FedAvg) return;
  if (!(server_lr > 0.0) || !std::isfinite(server_lr)) {
    throw ConfigError("strategy.server_lr must be positive");
  }
  if (kind == ServerKind::TurboSvm) lambda.validate();
}

OptimizerState ServerStrategy::make_optimizer() const {
  switch (optimizer) {
    case OptimizerKind::Sgd: return OptimizerState::sgd(server_lr);
    case OptimizerKind::Adam: return OptimizerState::adam(server_lr);
    case OptimizerKind::AmsGrad: return OptimizerState::amsgrad(server_lr);
  }
  return OptimizerState::adam(server_lr);
}

ServerState make_server_state(const ServerStrategy& strategy, std::size_t num_clients) {
  ServerState state;
  state.optimizer = strategy.make_optimizer();
  state.previous_local.resize(num_clients);
  return state;
}

std::vector<std::size_t> sample_clients(const std::vector<std::size_t>& pool,
                                        std::size_t count, Rng& rng) {
  if (count == 0 || count > pool.size()) {
    throw Error(fmt::format("cannot sample {} clients from {}", count, pool.size()));
  }
  std::vector<std::size_t> out;
  out.reserve(count);
  std::sample(pool.begin(), pool.end(), std::back_inserter(out), count, rng);
  std::sort(out.begin(), out.end());
  return out;
}

RoundResult run_round(std::size_t t, const Model& global_model,
                      const FederatedDataset& dataset, std::size_t clients_per_round,
                      const ServerStrategy& strategy, const ClientConfig& client,
                      ServerState& state, Rng& rng) {
  RoundResult result;
  result.record.round = t + 1;
  const auto ctx = [t](std::string_view what, const std::exception& e) {
    return fmt::format("round {}: {}: {}", t + 1, what, e.what());
  };

  const auto participants = sample_clients(dataset.train_clients, clients_per_round, rng);
  result.record.participants = participants;

  std::vector<Model> models;
  std::vector<double> sizes;
  models.reserve(participants.size());
  double loss_sum = 0.0;
  const bool moon = std::holds_alternative<Moon>(client.variant);
  if (moon && state.previous_local.size() < dataset.num_clients()) {
    state.previous_local.resize(dataset.num_clients());
  }
  for (std::size_t n : participants) {
    Rng client_rng(rng());
    try {
      const Model* previous =
          moon && state.previous_local[n] ? &*state.previous_local[n] : nullptr;
      auto trained = client_update(global_model, dataset.clients[n], client,
                                   client_rng, previous);
      loss_sum += trained.mean_loss;
      if (moon) state.previous_local[n] = trained.model;
      models.push_back(std::move(trained.model));
      sizes.push_back(static_cast<double>(dataset.clients[n].size()));
    } catch (const Error& e) {
      throw Error(ctx(fmt::format("client {}", n), e));
    }
  }
  result.record.loss = loss_sum / static_cast<double>(participants.size());

  try {
    Model aggregated = fedavg_aggregate(models, sizes);
    switch (strategy.kind) {
      case ServerKind::FedAvg:
        result.model = apply_delta(global_model, pseudo_gradient(global_model, aggregated));
        break;
      case ServerKind::FedOpt:
        result.model = fedopt_step(global_model, pseudo_gradient(global_model, aggregated),
                                   state.optimizer);
        break;
      case ServerKind::FedAwS:
        aggregated.logit_matrix = fedaws_regularize(aggregated.logit_matrix, state.optimizer);
        result.model = apply_delta(global_model, pseudo_gradient(global_model, aggregated));
        break;
      case ServerKind::TurboSvm: {
        const std::size_t k = global_model.num_classes();
        std::vector<std::vector<WeightedEmbedding>> members(k);
        for (std::size_t c = 0; c < k; ++c) {
          for (std::size_t i = 0; i < models.size(); ++i) {
            const auto row = models[i].logit_matrix.row(c);
            members[c].push_back({participants[i],
                                  Tensor::vector({row.begin(), row.end()}), sizes[i]});
          }
        }
        const double lambda = lambda_value(strategy.lambda, t);
        result.record.lambda = lambda;
        OvoSvm svm = fit_ovo(std::move(members), lambda, strategy.svm);
        for (const auto& p : svm.pairs) {
          if (!p.model.converged) {
            warn(fmt::format("round {}: SVM pair ({}, {}) stopped at gap {:.3g}", t + 1,
                             p.positive_class, p.negative_class, p.model.duality_gap()));
          }
        }
        for (std::size_t c = 0; c < k; ++c) {
          result.record.sv_counts.push_back(support_vectors_of_class(svm, c).size());
        }
        Tensor w = turbosvm_selective_aggregate(svm);
        if (strategy.reset_reg_state) state.optimizer.reset();
        std::vector<double> losses;
        w = turbosvm_maxmargin_regularize(w, svm, state.optimizer, strategy.reg_steps,
                                          &losses);
        for (std::size_t s = 1; s < losses.size(); ++s) {
          if (!(losses[s] < losses[s - 1])) {
            warn(fmt::format("round {}: spread-out loss rose at step {} ({} -> {})",
                             t + 1, s, losses[s - 1], losses[s]));
            break;
          }
        }
        aggregated.logit_matrix = std::move(w);
        result.model = apply_delta(global_model, pseudo_gradient(global_model, aggregated));
        result.svm = std::move(svm);
        break;
      }
    }
  } catch (const Error& e) {
    throw Error(ctx(to_string(strategy.kind), e));
  }
  return result;
}

}  // namespace fedsvm
