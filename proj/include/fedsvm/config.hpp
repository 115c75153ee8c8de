#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedsvm/client.hpp"
#include "fedsvm/dataset.hpp"
#include "fedsvm/round.hpp"

namespace fedsvm {

enum class DatasetKind { Synthetic, Idx, File };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::Synthetic;
  SyntheticSpec synthetic;
  bool seed_from_run = true;  // dataset.seed absent: follow the run seed
  std::filesystem::path images;  // Idx
  std::filesystem::path labels;  // Idx
  std::filesystem::path file;    // File (FSDS container)

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct ModelConfig {
  std::size_t embedding_dim = 64;
  std::vector<std::size_t> hidden_widths{64};

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct RunConfig {
  DatasetConfig dataset;
  ModelConfig model;
  ClientConfig client;
  std::string strategy_name = "fedavg";  // fedavg, fedprox, moon, fedadam, ...
  std::string label;                     // display name; defaults to strategy_name
  ServerStrategy strategy;
  std::size_t rounds = 100;
  std::size_t clients_per_round = 8;
  double target_accuracy = 0.8;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output_dir = "out";
  std::size_t eval_stride = 1;
  bool record_wall_clock = false;
  std::optional<std::size_t> sv_round;  // sweep checkpoint; default min(T, 200)

  const std::string& display_name() const {
    return label.empty() ? strategy_name : label;
  }
  /// Number of clients available for training under the dataset config.
  std::size_t training_clients() const;
  void validate() const;
};

/// Sets strategy/client variant from a named preset and default server lr.
void apply_strategy_preset(RunConfig& config, const std::string& name);

/// INI with sections [dataset] [model] [client] [strategy] [experiment].
/// Unknown sections or keys are rejected. Throws ConfigError with the
/// offending "section.key" in the message.
RunConfig parse_config(std::istream& in);
RunConfig parse_config_file(const std::filesystem::path& path);
RunConfig parse_config_string(const std::string& text);

}  // namespace fedsvm
