#pragma once

#include <functional>

#include "fedsvm/tensor.hpp"

namespace fedsvm {

using ScalarFunction = std::function<double(const Tensor&)>;

/// Central-difference gradient, (f(x + h e_i) - f(x - h e_i)) / 2h per
/// coordinate. Throws NumericError if f returns a non-finite value.
Tensor finite_difference_gradient(const ScalarFunction& f, const Tensor& x,
                                  double h = 1e-5);

/// max_i |a_i - b_i| / max(1e-8, max_i |b_i|, max_i |a_i|)
double relative_error(const Tensor& analytic, const Tensor& numeric);

}  // namespace fedsvm
