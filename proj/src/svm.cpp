#include "fedsvm/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "fedsvm/error.hpp"

namespace fedsvm {

namespace {

struct Solution {
  Tensor normal;
  double bias = 0.0;
  std::vector<double> slacks;
  double primal = 0.0;
  double dual = 0.0;
};

Tensor weighted_sum(const SvmProblem& p, const std::vector<double>& alphas) {
  const std::size_t d = p.samples.cols();
  Tensor w(Shape{d});
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (alphas[i] == 0.0) continue;
    const double c = alphas[i] * p.labels[i];
    const auto x = p.samples.row(i);
    for (std::size_t j = 0; j < d; ++j) w[j] += c * x[j];
  }
  return w;
}

// Bias from the KKT conditions: the mean of y_i - w.x_i over free support
// vectors, else the midpoint of the interval allowed by the bound ones.
double recover_bias(const SvmProblem& p, const std::vector<double>& alphas,
                    const std::vector<double>& wx) {
  const double lambda = p.lambda;
  double free_sum = 0.0;
  std::size_t free_count = 0;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double y = p.labels[i];
    const double a = alphas[i];
    if (a > kAlphaTolerance && a < lambda - kAlphaTolerance) {
      free_sum += y - wx[i];
      ++free_count;
      continue;
    }
    // y (wx + b) >= 1 when alpha = 0, <= 1 when alpha = lambda.
    const double edge = y - wx[i];
    const bool at_zero = a <= kAlphaTolerance;
    if ((y > 0) == at_zero) {
      lo = std::max(lo, edge);
    } else {
      hi = std::min(hi, edge);
    }
  }
  if (free_count > 0) return free_sum / static_cast<double>(free_count);
  if (std::isfinite(lo) && std::isfinite(hi)) return 0.5 * (lo + hi);
  if (std::isfinite(lo)) return lo;
  if (std::isfinite(hi)) return hi;
  return 0.0;
}

Solution evaluate(const SvmProblem& p, const std::vector<double>& alphas,
                  bool fit_intercept) {
  Solution s;
  s.normal = weighted_sum(p, alphas);
  std::vector<double> wx(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    wx[i] = dot(s.normal.values(), p.samples.row(i));
  }
  s.bias = fit_intercept ? recover_bias(p, alphas, wx) : 0.0;
  const double half_w2 = 0.5 * squared_norm(s.normal.values());
  double slack_sum = 0.0;
  double alpha_sum = 0.0;
  s.slacks.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    s.slacks[i] = std::max(0.0, 1.0 - p.labels[i] * (wx[i] + s.bias));
    slack_sum += s.slacks[i];
    alpha_sum += alphas[i];
  }
  s.primal = half_w2 + p.lambda * slack_sum;
  s.dual = alpha_sum - half_w2;
  return s;
}

bool complementary_slackness_ok(const std::vector<double>& alphas,
                                const std::vector<double>& slacks, double lambda) {
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (alphas[i] < lambda - kAlphaTolerance && slacks[i] >= kSlackTolerance) {
      return false;
    }
  }
  return true;
}

double relative_gap(double primal, double dual) {
  return (primal - dual) / std::max(1.0, std::abs(primal));
}

}  // namespace

void SvmProblem::validate() const {
  if (samples.rank() != 2) throw ShapeError("SVM samples must be an M x d matrix");
  const std::size_t m = samples.rows();
  if (m < 2) throw Error("SVM problem needs at least 2 samples");
  if (labels.size() != m) {
    throw ShapeError(fmt::format("SVM problem has {} samples but {} labels", m,
                                 labels.size()));
  }
  if (sample_weights.size() != m) {
    throw ShapeError(fmt::format("SVM problem has {} samples but {} weights", m,
                                 sample_weights.size()));
  }
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw Error(fmt::format("SVM lambda must be positive, got {}", lambda));
  }
  bool has_pos = false;
  bool has_neg = false;
  for (auto y : labels) {
    if (y == 1) {
      has_pos = true;
    } else if (y == -1) {
      has_neg = true;
    } else {
      throw Error(fmt::format("SVM labels must be +1 or -1, got {}", y));
    }
  }
  if (!has_pos || !has_neg) throw Error("SVM problem needs both labels present");
  for (auto w : sample_weights) {
    if (!(w > 0.0)) throw Error("SVM sample weights must be positive");
  }
  require_finite(samples, "SVM samples");
}

double BinarySvmModel::decision(std::span<const double> x) const {
  return dot(normal.values(), x) + bias;
}

double BinarySvmModel::duality_gap() const {
  return relative_gap(primal_value, dual_value);
}

BinarySvmModel fit_binary(const SvmProblem& problem, const SvmOptions& options) {
  problem.validate();
  const std::size_t m = problem.size();
  {
    bool all_same = true;
    const auto first = problem.samples.row(0);
    for (std::size_t i = 1; i < m && all_same; ++i) {
      all_same = std::equal(first.begin(), first.end(),
                            problem.samples.row(i).begin());
    }
    if (all_same) throw Error("degenerate SVM problem: all samples are identical");
  }

  std::vector<double> gram(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      const double v = dot(problem.samples.row(i), problem.samples.row(j));
      gram[i * m + j] = v;
      gram[j * m + i] = v;
    }
  }
  auto kernel = [&](std::size_t i, std::size_t j) { return gram[i * m + j]; };

  const double lambda = problem.lambda;
  const auto& y = problem.labels;
  std::vector<double> alphas(m, 0.0);
  std::vector<double> grad(m, 1.0);  // 1 - (Q alpha)_i

  auto refresh_gradient = [&] {
    for (std::size_t i = 0; i < m; ++i) {
      double q = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        if (alphas[j] != 0.0) q += alphas[j] * y[j] * kernel(i, j);
      }
      grad[i] = 1.0 - y[i] * q;
    }
  };

  auto pair_step = [&](std::size_t i, std::size_t j) {
    // alpha_i += y_i t, alpha_j -= y_j t keeps sum(alpha y) fixed.
    const double slope = y[i] * grad[i] - y[j] * grad[j];
    if (slope == 0.0) return;
    const double curvature = kernel(i, i) + kernel(j, j) - 2.0 * kernel(i, j);
    double t;
    if (curvature > 1e-12) {
      t = slope / curvature;
    } else {
      t = slope > 0.0 ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
    }
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    auto restrict = [&](double a, double dir) {
      // a + dir * t in [0, lambda]
      if (dir > 0) {
        lo = std::max(lo, -a);
        hi = std::min(hi, lambda - a);
      } else {
        lo = std::max(lo, a - lambda);
        hi = std::min(hi, a);
      }
    };
    restrict(alphas[i], y[i]);
    restrict(alphas[j], -y[j]);
    t = std::clamp(t, lo, hi);
    if (t == 0.0) return;
    alphas[i] = std::clamp(alphas[i] + y[i] * t, 0.0, lambda);
    alphas[j] = std::clamp(alphas[j] - y[j] * t, 0.0, lambda);
    for (std::size_t k = 0; k < m; ++k) {
      grad[k] -= t * y[k] * (kernel(k, i) - kernel(k, j));
    }
  };

  auto single_step = [&](std::size_t i) {
    const double kii = kernel(i, i);
    double next;
    if (kii > 1e-12) {
      next = std::clamp(alphas[i] + grad[i] / kii, 0.0, lambda);
    } else {
      next = grad[i] > 0.0 ? lambda : alphas[i];
    }
    const double delta = next - alphas[i];
    if (delta == 0.0) return;
    alphas[i] = next;
    for (std::size_t k = 0; k < m; ++k) {
      grad[k] -= delta * y[k] * y[i] * kernel(k, i);
    }
  };

  const std::size_t max_sweeps =
      options.max_sweeps > 0 ? options.max_sweeps : 10 * m;
  BinarySvmModel model;
  model.lambda = lambda;
  model.fit_intercept = options.fit_intercept;

  Solution sol;
  std::size_t sweep = 0;
  bool converged = false;
  while (sweep < max_sweeps) {
    if (options.fit_intercept) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) pair_step(i, j);
      }
    } else {
      for (std::size_t i = 0; i < m; ++i) single_step(i);
    }
    ++sweep;
    refresh_gradient();
    sol = evaluate(problem, alphas, options.fit_intercept);
    if (options.record_trace) model.dual_trace.push_back(sol.dual);
    if (relative_gap(sol.primal, sol.dual) <= options.tolerance &&
        complementary_slackness_ok(alphas, sol.slacks, lambda)) {
      converged = true;
      break;
    }
  }
  if (sweep == 0) sol = evaluate(problem, alphas, options.fit_intercept);

  model.normal = std::move(sol.normal);
  model.bias = sol.bias;
  model.slacks = std::move(sol.slacks);
  model.primal_value = sol.primal;
  model.dual_value = sol.dual;
  model.converged = converged;
  model.sweeps = sweep;
  model.alphas = std::move(alphas);
  for (std::size_t i = 0; i < m; ++i) {
    if (model.alphas[i] > kAlphaTolerance) model.support_indices.push_back(i);
  }
  require_finite(model.normal, "SVM normal");
  require_finite(model.bias, "SVM bias");
  return model;
}

double primal_objective(const SvmProblem& problem, std::span<const double> normal,
                        double bias) {
  double slack_sum = 0.0;
  for (std::size_t i = 0; i < problem.size(); ++i) {
    const double margin =
        problem.labels[i] * (dot(normal, problem.samples.row(i)) + bias);
    slack_sum += std::max(0.0, 1.0 - margin);
  }
  return 0.5 * squared_norm(normal) + problem.lambda * slack_sum;
}

bool KktReport::ok(double gap_tolerance) const {
  return max_link_error <= 1e-8 && max_slack_error <= 1e-8 &&
         max_box_violation == 0.0 &&
         max_complementary_slack < kSlackTolerance &&
         duality_gap < gap_tolerance;
}

std::string KktReport::describe() const {
  return fmt::format(
      "link={:.3e} slack={:.3e} box={:.3e} comp_slack={:.3e} gap={:.3e}",
      max_link_error, max_slack_error, max_box_violation,
      max_complementary_slack, duality_gap);
}

KktReport check_kkt(const BinarySvmModel& model, const SvmProblem& problem) {
  KktReport r;
  const Tensor link = weighted_sum(problem, model.alphas);
  for (std::size_t j = 0; j < link.size(); ++j) {
    r.max_link_error = std::max(r.max_link_error, std::abs(link[j] - model.normal[j]));
  }
  for (std::size_t i = 0; i < problem.size(); ++i) {
    const double a = model.alphas[i];
    r.max_box_violation =
        std::max({r.max_box_violation, -a, a - model.lambda, 0.0});
    const double expected = std::max(
        0.0, 1.0 - problem.labels[i] * model.decision(problem.samples.row(i)));
    r.max_slack_error = std::max(r.max_slack_error,
                                 std::abs(expected - model.slacks[i]));
    if (a < model.lambda - kAlphaTolerance) {
      r.max_complementary_slack =
          std::max(r.max_complementary_slack, model.slacks[i]);
    }
  }
  r.duality_gap = model.duality_gap();
  return r;
}

// ---------------------------------------------------------------------------
// One-vs-one wrapper

std::size_t pair_index(std::size_t k, std::size_t k2, std::size_t num_classes) {
  if (k == k2) throw Error("pair_index: classes must differ");
  if (k > k2) std::swap(k, k2);
  if (k2 >= num_classes) throw Error("pair_index: class out of range");
  return k * num_classes - k * (k + 1) / 2 + (k2 - k - 1);
}

const OvoPair& OvoSvm::pair(std::size_t k, std::size_t k2) const {
  if (!fitted()) throw Error("OVO SVM has not been fitted");
  return pairs.at(pair_index(k, k2, num_classes));
}

OvoSvm fit_ovo(std::vector<std::vector<WeightedEmbedding>> class_embeddings,
               double lambda, const SvmOptions& options) {
  const std::size_t num_classes = class_embeddings.size();
  if (num_classes < 2) throw Error("fit_ovo needs at least 2 classes");
  std::size_t dim = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (class_embeddings[k].empty()) {
      throw Error(fmt::format("fit_ovo: class {} has no embeddings", k));
    }
    for (const auto& e : class_embeddings[k]) {
      if (dim == 0) dim = e.embedding.size();
      if (e.embedding.size() != dim || dim == 0) {
        throw ShapeError(fmt::format(
            "fit_ovo: embedding of class {} has dimension {}, expected {}", k,
            e.embedding.size(), dim));
      }
    }
  }

  OvoSvm svm;
  svm.num_classes = num_classes;
  svm.class_members = std::move(class_embeddings);
  svm.pairs.reserve(num_classes * (num_classes - 1) / 2);
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t k2 = k + 1; k2 < num_classes; ++k2) {
      const auto& pos = svm.class_members[k];
      const auto& neg = svm.class_members[k2];
      SvmProblem problem;
      problem.lambda = lambda;
      problem.samples = Tensor(Shape{pos.size() + neg.size(), dim});
      std::size_t row = 0;
      for (const auto* group : {&pos, &neg}) {
        const int label = group == &pos ? 1 : -1;
        for (const auto& e : *group) {
          std::copy(e.embedding.values().begin(), e.embedding.values().end(),
                    problem.samples.row(row).begin());
          problem.labels.push_back(label);
          problem.sample_weights.push_back(e.weight);
          ++row;
        }
      }
      OvoPair entry;
      entry.positive_class = k;
      entry.negative_class = k2;
      entry.positive_count = pos.size();
      try {
        entry.model = fit_binary(problem, options);
      } catch (const Error& e) {
        throw Error(fmt::format("SVM pair ({}, {}): {}", k, k2, e.what()));
      }
      svm.pairs.push_back(std::move(entry));
    }
  }
  return svm;
}

std::vector<WeightedEmbedding> support_vectors_of_class(const OvoSvm& svm,
                                                        std::size_t k) {
  if (!svm.fitted()) throw Error("OVO SVM has not been fitted");
  if (k >= svm.num_classes) {
    throw Error(fmt::format("class {} out of range for {} classes", k,
                            svm.num_classes));
  }
  const auto& members = svm.class_members[k];
  std::vector<bool> selected(members.size(), false);
  for (std::size_t other = 0; other < svm.num_classes; ++other) {
    if (other == k) continue;
    const auto& p = svm.pair(k, other);
    const std::size_t offset = p.positive_class == k ? 0 : p.positive_count;
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (p.model.alphas[offset + i] > kAlphaTolerance) selected[i] = true;
    }
  }
  std::vector<WeightedEmbedding> out;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (!selected[i]) continue;
    const bool duplicate =
        std::any_of(out.begin(), out.end(), [&](const WeightedEmbedding& e) {
          return e.client == members[i].client;
        });
    if (!duplicate) out.push_back(members[i]);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const WeightedEmbedding& a, const WeightedEmbedding& b) {
                     return a.client < b.client;
                   });
  return out;
}

Hyperplane hyperplane(const OvoSvm& svm, std::size_t k, std::size_t k2) {
  if (k == k2) throw Error("hyperplane: classes must differ");
  const auto& p = svm.pair(k, k2);
  Hyperplane h{p.model.normal, p.model.bias};
  if (k > k2) {
    h.normal *= -1.0;
    h.bias = -h.bias;
  }
  return h;
}

std::string format_svm_diagnostics(const OvoSvm& svm) {
  std::string out = fmt::format("{:>6} {:>6} {:>5} {:>12} {:>12} {:>6}\n", "k",
                                "k2", "#sv", "gap", "|normal|", "conv");
  for (const auto& p : svm.pairs) {
    out += fmt::format("{:>6} {:>6} {:>5} {:>12.4e} {:>12.6f} {:>6}\n",
                       p.positive_class, p.negative_class,
                       p.model.support_indices.size(), p.model.duality_gap(),
                       norm(p.model.normal.values()),
                       p.model.converged ? "yes" : "no");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Projected-logit bound

LogitBound verify_logit_bound(const BinarySvmModel& svm,
                              const std::vector<Tensor>& pos_embeddings,
                              const std::vector<Tensor>& neg_embeddings,
                              const std::vector<double>& weights,
                              const Tensor& test_embedding) {
  const std::size_t n = pos_embeddings.size();
  if (n == 0 || neg_embeddings.size() != n) {
    throw Error("logit bound: needs the same positive number of embeddings per "
                "class (one per client)");
  }
  if (weights.size() != n) {
    throw Error("logit bound: needs one dataset size per client");
  }
  if (svm.fit_intercept || svm.bias != 0.0) {
    throw Error("logit bound: assumption violated, the SVM must be fitted "
                "without a bias term");
  }
  if (svm.alphas.size() != 2 * n) {
    throw Error("logit bound: SVM was not fitted on these 2N embeddings");
  }
  for (std::size_t i = 0; i < 2 * n; ++i) {
    if (!(svm.alphas[i] > kAlphaTolerance)) {
      throw Error(fmt::format(
          "logit bound: assumption violated, embedding {} is not a support "
          "vector",
          i));
    }
  }
  for (auto w : weights) {
    if (w != weights.front() || !(w > 0.0)) {
      throw Error("logit bound: assumption violated, client dataset sizes "
                  "must be equal and positive");
    }
  }
  for (std::size_t i = 0; i < 2 * n; ++i) {
    if (svm.slacks[i] > 1.0) {
      throw Error(fmt::format(
          "logit bound: assumption violated, slack {} of embedding {} exceeds 1",
          svm.slacks[i], i));
    }
  }

  const auto& h = svm.normal;
  const double h2 = squared_norm(h.values());
  if (!(h2 > 0.0)) throw Error("logit bound: hyperplane normal is zero");
  const double hx = dot(h.values(), test_embedding.values());
  const double test_slack = std::max(0.0, 1.0 - hx);
  if (test_slack > 1.0) {
    throw Error("logit bound: assumption violated, test embedding is not a "
                "good sample (h.x* < 0)");
  }

  // Aggregated class embeddings projected onto h, then scored against x*.
  auto projected_logit = [&](const std::vector<Tensor>& group) {
    Tensor agg = Tensor::zeros_like(group.front());
    double total = 0.0;
    for (std::size_t i = 0; i < group.size(); ++i) {
      agg.add_scaled(group[i], weights[i]);
      total += weights[i];
    }
    const double hn = std::sqrt(h2);
    return dot(agg.values(), h.values()) / (total * hn) * (hx / hn);
  };

  LogitBound out;
  out.lhs = projected_logit(pos_embeddings) - projected_logit(neg_embeddings);
  double slack_sum = 0.0;
  for (auto s : svm.slacks) slack_sum += s;
  const double nn = static_cast<double>(n);
  out.rhs = (2.0 * nn - slack_sum) * (1.0 - test_slack) / (nn * h2);
  out.holds = out.lhs >= out.rhs - 1e-9;
  return out;
}

}  // namespace fedsvm
