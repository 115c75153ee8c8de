#include "fedsvm/finite_difference.hpp"

#include <algorithm>
#include <cmath>

#include "fedsvm/error.hpp"

namespace fedsvm {

Tensor finite_difference_gradient(const ScalarFunction& f, const Tensor& x,
                                  double h) {
  if (!(h > 0.0)) throw Error("finite_difference_gradient: h must be positive");
  Tensor grad = Tensor::zeros_like(x);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    require_finite(up, "finite_difference_gradient f(x+h)");
    require_finite(down, "finite_difference_gradient f(x-h)");
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(const Tensor& analytic, const Tensor& numeric) {
  require_same_shape(analytic, numeric, "relative_error");
  double diff = 0.0;
  double scale = 1e-8;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / scale;
}

}  // namespace fedsvm
