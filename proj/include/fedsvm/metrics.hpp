#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedsvm/dataset.hpp"
#include "fedsvm/model.hpp"

namespace fedsvm {

/// counts[true * K + predicted]
struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(std::size_t k = 0) : num_classes(k), counts(k * k, 0) {}
  static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows);

  std::uint64_t& at(std::size_t truth, std::size_t predicted) {
    return counts[truth * num_classes + predicted];
  }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const {
    return counts[truth * num_classes + predicted];
  }
  std::uint64_t total() const;
  void add(std::size_t truth, std::size_t predicted);
};

ConfusionMatrix confusion(const std::vector<std::size_t>& truth,
                          const std::vector<std::size_t>& predicted,
                          std::size_t num_classes);

/// Predictions over the pooled held-out clients.
ConfusionMatrix confusion(const Model& model, const FederatedDataset& dataset);

double accuracy(const ConfusionMatrix& cm);
/// Unweighted mean of per-class F1; a class never true nor predicted scores 0.
double macro_f1(const ConfusionMatrix& cm);
/// Multiclass MCC (covariance form); 0 when the denominator vanishes.
double mcc(const ConfusionMatrix& cm);

/// 1-based first round with accuracy >= target, or nullopt if never.
std::optional<std::size_t> rounds_to_target(const std::vector<double>& accuracy_series,
                                            double target);

/// "3", or ">T" when not reached.
std::string format_rounds(std::optional<std::size_t> rounds, std::size_t total_rounds);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population (ddof = 0)
};

MeanStd mean_std(const std::vector<double>& values);

}  // namespace fedsvm
