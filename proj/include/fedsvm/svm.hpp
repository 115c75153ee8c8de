#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedsvm/tensor.hpp"

namespace fedsvm {

inline constexpr double kAlphaTolerance = 1e-8;
inline constexpr double kSlackTolerance = 1e-6;

/// Soft-margin binary problem: min 1/2 |w|^2 + lambda * sum(zeta_i).
struct SvmProblem {
  Tensor samples;                     // M x d
  std::vector<int> labels;            // +1 / -1
  std::vector<double> sample_weights; // carried for aggregation, not fitting
  double lambda = 1.0;

  std::size_t size() const { return labels.size(); }
  void validate() const;
};

struct SvmOptions {
  std::size_t max_sweeps = 0;  // 0 selects 10 * M
  double tolerance = 1e-6;     // relative duality gap
  bool fit_intercept = true;
  bool record_trace = false;   // keep the dual objective after every sweep
};

struct BinarySvmModel {
  Tensor normal;
  double bias = 0.0;
  double lambda = 0.0;
  bool fit_intercept = true;
  std::vector<double> alphas;
  std::vector<std::size_t> support_indices;  // alpha_i > kAlphaTolerance
  std::vector<double> slacks;
  double primal_value = 0.0;
  double dual_value = 0.0;
  bool converged = false;
  std::size_t sweeps = 0;
  std::vector<double> dual_trace;

  double decision(std::span<const double> x) const;
  /// (primal - dual) / max(1, |primal|)
  double duality_gap() const;
};

/// Dual coordinate ascent with a fixed cyclic sweep order. With an
/// intercept the equality constraint sum(alpha_i y_i) = 0 couples the
/// variables, so each step moves a pair (i, j) along the constraint;
/// without one, single coordinates are updated.
///
/// Non-convergence within max_sweeps is reported through `converged` and
/// the achieved gap; identical samples throw.
BinarySvmModel fit_binary(const SvmProblem& problem, const SvmOptions& options = {});

struct KktReport {
  double max_link_error = 0.0;      // |normal - sum alpha y x|_inf
  double max_slack_error = 0.0;     // |zeta - max(0, 1 - y f(x))|
  double max_box_violation = 0.0;
  double max_complementary_slack = 0.0;  // max zeta over alpha < lambda - tol
  double duality_gap = 0.0;

  bool ok(double gap_tolerance = 1e-6) const;
  std::string describe() const;
};

KktReport check_kkt(const BinarySvmModel& model, const SvmProblem& problem);

/// Primal objective 1/2 |w|^2 + lambda * sum max(0, 1 - y (w.x + b)).
double primal_objective(const SvmProblem& problem, std::span<const double> normal,
                        double bias);

struct WeightedEmbedding {
  std::size_t client = 0;
  Tensor embedding;
  double weight = 1.0;
};

struct OvoPair {
  std::size_t positive_class = 0;  // the smaller class index, labelled +1
  std::size_t negative_class = 0;
  std::size_t positive_count = 0;  // samples [0, positive_count) are positive
  BinarySvmModel model;
};

/// One binary SVM per unordered class pair, in lexicographic pair order.
struct OvoSvm {
  std::size_t num_classes = 0;
  std::vector<std::vector<WeightedEmbedding>> class_members;
  std::vector<OvoPair> pairs;

  bool fitted() const { return !pairs.empty(); }
  const OvoPair& pair(std::size_t k, std::size_t k2) const;
};

std::size_t pair_index(std::size_t k, std::size_t k2, std::size_t num_classes);

OvoSvm fit_ovo(std::vector<std::vector<WeightedEmbedding>> class_embeddings,
               double lambda, const SvmOptions& options = {});

/// Class-k samples with alpha > kAlphaTolerance in any pair involving k,
/// de-duplicated by client and ordered by client index.
std::vector<WeightedEmbedding> support_vectors_of_class(const OvoSvm& svm,
                                                        std::size_t k);

struct Hyperplane {
  Tensor normal;
  double bias = 0.0;
};

/// Oriented so that class k is on the positive side.
Hyperplane hyperplane(const OvoSvm& svm, std::size_t k, std::size_t k2);

/// Text table: pair, #SV, duality gap, |normal|.
std::string format_svm_diagnostics(const OvoSvm& svm);

struct LogitBound {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

/// Compares the projected logit difference of a positive test embedding with
/// its lower bound [2N - sum(zeta+ + zeta-)] (1 - zeta*) / (N |h|^2).
///
/// Requires a bias-free fit on [pos..., neg...] where every sample is a
/// support vector, equal client weights, all slacks <= 1 and a "good" test
/// sample (h.x* >= 1 - zeta*, zeta* <= 1). Violations throw Error naming the
/// assumption.
LogitBound verify_logit_bound(const BinarySvmModel& svm,
                              const std::vector<Tensor>& pos_embeddings,
                              const std::vector<Tensor>& neg_embeddings,
                              const std::vector<double>& weights,
                              const Tensor& test_embedding);

}  // namespace fedsvm
