#include "failcast/optim.hpp"

#include <algorithm>
#include <cmath>

#include "failcast/error.hpp"

namespace failcast {

void adam_step(Tensor& param, const Tensor& grad, AdamState& state,
               const AdamHyper& hyper) {
  if (param.shape() != grad.shape() ||
      state.first_moment.shape() != param.shape() ||
      state.second_moment.shape() != param.shape()) {
    throw DimensionError("adam_step: param " + shape_string(param.shape()) +
                         ", grad " + shape_string(grad.shape()) + ", moments " +
                         shape_string(state.first_moment.shape()) +
                         " must agree");
  }
  if (!(hyper.beta1 >= 0.0f && hyper.beta1 < 1.0f && hyper.beta2 >= 0.0f &&
        hyper.beta2 < 1.0f && hyper.eps > 0.0f)) {
    throw ParameterError("adam_step: require 0 <= beta1, beta2 < 1 and eps > 0");
  }
  const auto g = grad.data();
  if (std::all_of(g.begin(), g.end(), [](float v) { return v == 0.0f; })) {
    return;
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const auto correction1 =
      static_cast<float>(1.0 - std::pow(static_cast<double>(hyper.beta1), t));
  const auto correction2 =
      static_cast<float>(1.0 - std::pow(static_cast<double>(hyper.beta2), t));
  auto p = param.data();
  auto m = state.first_moment.data();
  auto v = state.second_moment.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = hyper.beta1 * m[i] + (1.0f - hyper.beta1) * g[i];
    v[i] = hyper.beta2 * v[i] + (1.0f - hyper.beta2) * g[i] * g[i];
    const float m_hat = m[i] / correction1;
    const float v_hat = v[i] / correction2;
    p[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.eps);
  }
}

Tensor finite_difference_gradient(
    const std::function<double(const Tensor&)>& f, const Tensor& x,
    double step) {
  if (!(step > 0.0)) {
    throw ParameterError("finite_difference_gradient: step must be positive");
  }
  Tensor grad(x.shape(), 0.0f);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float original = x[i];
    const auto plus = static_cast<float>(original + step);
    const auto minus = static_cast<float>(original - step);
    probe[i] = plus;
    const double f_plus = f(probe);
    probe[i] = minus;
    const double f_minus = f(probe);
    probe[i] = original;
    const double spacing = static_cast<double>(plus) - minus;
    grad[i] = static_cast<float>((f_plus - f_minus) / spacing);
  }
  return grad;
}

double relative_error(double a, double b, double floor) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

}  // namespace failcast
