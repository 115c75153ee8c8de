#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedsvm/aggregation.hpp"
#include "fedsvm/client.hpp"
#include "fedsvm/dataset.hpp"
#include "fedsvm/model.hpp"
#include "fedsvm/optimizer.hpp"

namespace fedsvm {

enum class ServerKind { FedAvg, FedOpt, FedAwS, TurboSvm };

std::string_view to_string(ServerKind kind);
ServerKind server_kind_from_string(std::string_view name);

struct ServerStrategy {
  ServerKind kind = ServerKind::FedAvg;
  OptimizerKind optimizer = OptimizerKind::Adam;  // unused by FedAvg
  double server_lr = 1e-2;
  LambdaSchedule lambda;       // TurboSvm only
  std::size_t reg_steps = 1;   // TurboSvm only
  bool reset_reg_state = false;  // fresh optimizer moments every round
  SvmOptions svm;

  void validate() const;
  OptimizerState make_optimizer() const;
};

/// State carried by the round loop across rounds.
struct ServerState {
  OptimizerState optimizer;
  std::vector<std::optional<Model>> previous_local;  // MOON, per client
};

ServerState make_server_state(const ServerStrategy& strategy, std::size_t num_clients);

struct RoundRecord {
  std::uint64_t seed = 0;
  std::size_t round = 0;  // 1-based
  std::string strategy;
  double loss = 0.0;      // mean local objective over participating clients
  double accuracy = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
  std::optional<double> lambda;
  std::vector<std::size_t> sv_counts;
  std::optional<double> ms;
  std::vector<std::size_t> participants;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

/// C training clients drawn uniformly without replacement, ascending.
std::vector<std::size_t> sample_clients(const std::vector<std::size_t>& pool,
                                        std::size_t count, Rng& rng);

struct RoundResult {
  Model model;
  RoundRecord record;
  std::optional<OvoSvm> svm;  // TurboSvm only
};

/// One aggregation round (t is 0-based). Samples clients from
/// dataset.train_clients, trains them in ascending index order, then applies
/// the server strategy. Aggregating strategies update the global model as
/// theta_G + pseudo_gradient, which keeps FedAvg and FedOpt(SGD, lr 1)
/// bitwise identical. Metrics fields of the record are left for the caller.
RoundResult run_round(std::size_t t, const Model& global_model,
                      const FederatedDataset& dataset, std::size_t clients_per_round,
                      const ServerStrategy& strategy, const ClientConfig& client,
                      ServerState& state, Rng& rng);

}  // namespace fedsvm
