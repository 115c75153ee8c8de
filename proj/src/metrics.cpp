#include "fedsvm/metrics.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "fedsvm/error.hpp"

namespace fedsvm {

ConfusionMatrix ConfusionMatrix::from_rows(
    const std::vector<std::vector<std::uint64_t>>& rows) {
  ConfusionMatrix cm(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.size()) throw ShapeError("confusion matrix must be square");
    for (std::size_t c = 0; c < rows.size(); ++c) cm.at(r, c) = rows[r][c];
  }
  return cm;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= num_classes || predicted >= num_classes) {
    throw Error(fmt::format("class index ({}, {}) outside confusion matrix of size {}",
                            truth, predicted, num_classes));
  }
  ++at(truth, predicted);
}

ConfusionMatrix confusion(const std::vector<std::size_t>& truth,
                          const std::vector<std::size_t>& predicted,
                          std::size_t num_classes) {
  if (truth.size() != predicted.size()) {
    throw ShapeError(fmt::format("{} labels but {} predictions", truth.size(),
                                 predicted.size()));
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

ConfusionMatrix confusion(const Model& model, const FederatedDataset& dataset) {
  const ClientData pool = dataset.heldout_pool();
  return confusion(pool.labels, predict(model, pool.features), dataset.num_classes);
}

namespace {

void require_nonempty(const ConfusionMatrix& cm) {
  if (cm.num_classes == 0 || cm.total() == 0) throw Error("empty confusion matrix");
}

}  // namespace

double accuracy(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  std::uint64_t diag = 0;
  for (std::size_t k = 0; k < cm.num_classes; ++k) diag += cm.at(k, k);
  return static_cast<double>(diag) / static_cast<double>(cm.total());
}

double macro_f1(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  const std::size_t k = cm.num_classes;
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t predicted = 0, actual = 0;
    for (std::size_t j = 0; j < k; ++j) {
      predicted += cm.at(j, c);
      actual += cm.at(c, j);
    }
    const std::uint64_t tp = cm.at(c, c);
    // 2PR/(P+R) == 2 tp / (predicted + actual)
    if (predicted + actual > 0) {
      sum += 2.0 * static_cast<double>(tp) / static_cast<double>(predicted + actual);
    }
  }
  return sum / static_cast<double>(k);
}

double mcc(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  const std::size_t k = cm.num_classes;
  const double s = static_cast<double>(cm.total());
  double c = 0.0, pt = 0.0, pp = 0.0, tt = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double p = 0.0, t = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p += static_cast<double>(cm.at(j, i));
      t += static_cast<double>(cm.at(i, j));
    }
    c += static_cast<double>(cm.at(i, i));
    pt += p * t;
    pp += p * p;
    tt += t * t;
  }
  const double denom = (s * s - pp) * (s * s - tt);
  if (denom <= 0.0) return 0.0;
  return (c * s - pt) / std::sqrt(denom);
}

std::optional<std::size_t> rounds_to_target(const std::vector<double>& accuracy_series,
                                            double target) {
  if (accuracy_series.empty()) throw Error("rounds_to_target on an empty series");
  if (!(target > 0.0 && target < 1.0)) {
    throw Error(fmt::format("target accuracy {} outside (0, 1)", target));
  }
  for (std::size_t i = 0; i < accuracy_series.size(); ++i) {
    if (accuracy_series[i] >= target) return i + 1;
  }
  return std::nullopt;
}

std::string format_rounds(std::optional<std::size_t> rounds, std::size_t total_rounds) {
  return rounds ? std::to_string(*rounds) : fmt::format(">{}", total_rounds);
}

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) throw Error("mean of an empty set");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

}  // namespace fedsvm
