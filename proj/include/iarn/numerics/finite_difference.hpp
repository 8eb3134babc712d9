#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "iarn/error.hpp"
#include "iarn/numerics/tape.hpp"

namespace iarn {

/// Central-difference derivative of a scalar function.
inline double finite_difference(const std::function<double(double)>& f, double x, double h = 1e-5) {
  if (!(h > 0.0)) throw ContractError("finite difference step must be positive");
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Central-difference gradient of `f` with respect to every coordinate of `params`. Each
/// coordinate is perturbed in place and restored before moving on.
inline Gradients finite_difference(const std::function<double(const ParameterStore&)>& f, ParameterStore& params,
                                   double h = 1e-5) {
  if (!(h > 0.0)) throw ContractError("finite difference step must be positive");
  Gradients out(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params.at(i);
    Tensor& g = out.slot(i);
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double saved = t[k];
      t[k] = saved + h;
      const double up = f(params);
      t[k] = saved - h;
      const double down = f(params);
      t[k] = saved;
      g[k] = (up - down) / (2.0 * h);
    }
  }
  return out;
}

struct GradientComparison {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t worst_parameter = 0;
  std::size_t worst_index = 0;
};

/// Element-wise |a - b| / max(|a|, |b|, floor). The floor keeps coordinates whose true gradient is
/// zero from dominating through round-off.
inline GradientComparison compare_gradients(const Gradients& analytic, const Gradients& numeric,
                                            double floor = 1e-5) {
  if (analytic.size() != numeric.size()) throw ShapeError("gradient sets have different parameter counts");
  GradientComparison cmp;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const Tensor a = analytic.dense(i);
    const Tensor n = numeric.dense(i);
    require_same_shape(a, n, "compare_gradients");
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double abs_err = std::abs(a[k] - n[k]);
      const double rel = abs_err / std::max({std::abs(a[k]), std::abs(n[k]), floor});
      cmp.max_absolute_error = std::max(cmp.max_absolute_error, abs_err);
      if (rel > cmp.max_relative_error) {
        cmp.max_relative_error = rel;
        cmp.worst_parameter = i;
        cmp.worst_index = k;
      }
    }
  }
  return cmp;
}

}  // namespace iarn
