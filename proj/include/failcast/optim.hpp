#pragma once

#include <cstdint>
#include <functional>

#include "failcast/tensor.hpp"

namespace failcast {

struct AdamHyper {
  float learning_rate = 1e-5f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Per-parameter Adam moments. Both moments are zero while step_count == 0.
struct AdamState {
  std::uint64_t step_count = 0;
  Tensor first_moment;
  Tensor second_moment;

  static AdamState for_param(const Tensor& param) {
    return {0, Tensor(param.shape(), 0.0f), Tensor(param.shape(), 0.0f)};
  }
};

// One bias-corrected Adam update applied in place to param and state.
// An identically zero gradient is a no-op: neither the parameter nor the
// state changes.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state,
               const AdamHyper& hyper);

// Central differences (f(x + h e_i) - f(x - h e_i)) / (x_i^+ - x_i^-), where
// x_i^± are the float-rounded perturbed coordinates. Dividing by the realised
// spacing instead of 2h removes the rounding error of the perturbation itself.
Tensor finite_difference_gradient(
    const std::function<double(const Tensor&)>& f, const Tensor& x,
    double step);

// |a - b| / max(|a|, |b|, floor)
double relative_error(double a, double b, double floor = 1e-6);

}  // namespace failcast
