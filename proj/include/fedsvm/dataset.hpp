#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "fedsvm/tensor.hpp"

namespace fedsvm {

/// Samples held by one client: features is n x P, one label per row.
struct ClientData {
  Tensor features;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  friend bool operator==(const ClientData&, const ClientData&) = default;
};

struct LabeledSample {
  std::vector<double> features;
  std::size_t label = 0;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct FederatedDataset {
  std::vector<ClientData> clients;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<std::size_t> train_clients;    // ascending
  std::vector<std::size_t> heldout_clients;  // ascending

  std::size_t num_clients() const { return clients.size(); }

  /// Checks the partition, label range, feature width and that every
  /// training client is nonempty.
  void validate() const;

  /// Pooled held-out samples. Throws if the pool is empty.
  ClientData heldout_pool() const;

  friend bool operator==(const FederatedDataset&, const FederatedDataset&) = default;
};

struct SyntheticSpec {
  std::size_t num_clients = 40;
  std::size_t num_classes = 8;
  std::size_t feature_dim = 32;
  double samples_mean = 100.0;
  double samples_spread = 20.0;
  double dirichlet_alpha = 0.1;
  double class_separation = 4.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

/// Gaussian class clusters with centers on a sphere, Dirichlet label skew
/// per client and a seeded 90/10 client-level train/held-out split.
FederatedDataset generate_synthetic(const SyntheticSpec& spec);

/// Seeded client-level split. The held-out share is round(0.1 N) clamped to
/// [1, N - 1]; a single client is kept for training.
void split_clients(FederatedDataset& dataset, std::uint64_t seed);

/// Label-skewed partition of a flat sample list with per-class Dirichlet
/// proportions. Clients left empty take one sample from the largest client.
FederatedDataset partition_by_client(const std::vector<LabeledSample>& samples,
                                     std::size_t num_clients,
                                     double dirichlet_alpha, std::uint64_t seed);

/// Binary container "FSDS": version, spec echo, then per-client blocks of
/// little-endian f64 features and u32 labels.
void write_dataset(std::ostream& out, const FederatedDataset& dataset,
                   const SyntheticSpec& spec);
FederatedDataset read_dataset(std::istream& in, SyntheticSpec* spec = nullptr);
void save_dataset(const std::filesystem::path& path, const FederatedDataset& dataset,
                  const SyntheticSpec& spec);
FederatedDataset load_dataset(const std::filesystem::path& path,
                              SyntheticSpec* spec = nullptr);

/// IDX images (magic 00 00 08 03) and labels (00 00 08 01), big-endian.
/// Pixels are scaled to [0, 1].
std::vector<LabeledSample> read_idx(std::istream& images, std::istream& labels);
std::vector<LabeledSample> load_idx(const std::filesystem::path& images_path,
                                    const std::filesystem::path& labels_path);

}  // namespace fedsvm
