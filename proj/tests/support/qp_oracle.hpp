#pragma once

// Independent reference solvers for small soft-margin SVM problems. Test-only.

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedsvm/svm.hpp"

namespace fedsvm::oracle {

struct OracleResult {
  std::vector<double> alphas;
  double dual_value = 0.0;
};

namespace detail {

inline std::vector<double> gram_q(const SvmProblem& p) {
  const std::size_t m = p.size();
  std::vector<double> q(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double k = 0.0;
      for (std::size_t c = 0; c < p.samples.cols(); ++c) {
        k += p.samples.at(i, c) * p.samples.at(j, c);
      }
      q[i * m + j] = p.labels[i] * p.labels[j] * k;
    }
  }
  return q;
}

inline double dual_value(const std::vector<double>& q, const std::vector<double>& a) {
  const std::size_t m = a.size();
  double lin = 0.0;
  double quad = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    lin += a[i];
    for (std::size_t j = 0; j < m; ++j) quad += a[i] * q[i * m + j] * a[j];
  }
  return lin - 0.5 * quad;
}

// Euclidean projection onto {0 <= a <= lambda, sum(y a) = 0} by bisection on
// the multiplier of the equality constraint.
inline std::vector<double> project(const std::vector<double>& z,
                                   const std::vector<int>& y, double lambda,
                                   bool equality) {
  const std::size_t m = z.size();
  std::vector<double> a(m);
  auto fill = [&](double nu) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      a[i] = std::clamp(z[i] - nu * y[i], 0.0, lambda);
      s += y[i] * a[i];
    }
    return s;
  };
  if (!equality) {
    fill(0.0);
    return a;
  }
  double lo = -1e6;
  double hi = 1e6;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    // sum(y a) is nonincreasing in nu
    if (fill(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  fill(0.5 * (lo + hi));
  return a;
}

}  // namespace detail

/// Accelerated projected-gradient ascent on the SVM dual.
inline OracleResult projected_gradient_dual(const SvmProblem& p, bool equality = true,
                                            int iterations = 200000) {
  const std::size_t m = p.size();
  const auto q = detail::gram_q(p);
  double trace = 0.0;
  for (std::size_t i = 0; i < m; ++i) trace += q[i * m + i];
  const double step = 1.0 / std::max(trace, 1e-12);

  std::vector<double> a(m, 0.0), prev = a, look = a, g(m);
  double t = 1.0;
  double best = detail::dual_value(q, a);
  std::vector<double> best_a = a;
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < m; ++i) {
      double qa = 0.0;
      for (std::size_t j = 0; j < m; ++j) qa += q[i * m + j] * look[j];
      g[i] = look[i] + step * (1.0 - qa);
    }
    prev = a;
    a = detail::project(g, p.labels, p.lambda, equality);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    for (std::size_t i = 0; i < m; ++i) {
      look[i] = a[i] + ((t - 1.0) / t_next) * (a[i] - prev[i]);
    }
    t = t_next;
    const double v = detail::dual_value(q, a);
    if (v > best) {
      best = v;
      best_a = a;
    }
  }
  return {best_a, best};
}

/// Coarse-to-fine grid search of the primal over (w, b); tractable for d <= 3.
inline double grid_primal(const SvmProblem& p, bool fit_intercept = true,
                          double radius = 4.0, int points = 11, int levels = 60) {
  const std::size_t d = p.samples.cols();
  const std::size_t dims = d + (fit_intercept ? 1 : 0);
  std::vector<double> center(dims, 0.0), best_point = center;
  auto objective = [&](const std::vector<double>& v) {
    std::vector<double> w(v.begin(), v.begin() + static_cast<long>(d));
    return primal_objective(p, w, fit_intercept ? v[d] : 0.0);
  };
  double best = objective(center);
  double r = radius;
  std::vector<int> idx(dims);
  std::vector<double> probe(dims);
  for (int level = 0; level < levels; ++level) {
    std::fill(idx.begin(), idx.end(), 0);
    while (true) {
      for (std::size_t k = 0; k < dims; ++k) {
        probe[k] = center[k] - r + 2.0 * r * idx[k] / (points - 1);
      }
      const double v = objective(probe);
      if (v < best) {
        best = v;
        best_point = probe;
      }
      std::size_t k = 0;
      while (k < dims && ++idx[k] == points) idx[k++] = 0;
      if (k == dims) break;
    }
    center = best_point;
    r *= 0.7;
  }
  return best;
}

}  // namespace fedsvm::oracle
