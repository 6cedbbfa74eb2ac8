#include "failcast/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

#include "failcast/layers.hpp"
#include "failcast/optim.hpp"
#include "failcast/rng.hpp"

namespace failcast {

bool GradcheckReport::passed() const {
  return !cases.empty() &&
         std::all_of(cases.begin(), cases.end(),
                     [](const GradcheckCase& c) { return c.passed; });
}

namespace {

// Test values are drawn on a 1/16 grid. Together with a power-of-two step,
// every sum and product in the probed kernels is then exact in 32-bit
// arithmetic, so the finite differences carry no rounding noise.
constexpr double kGrid = 16.0;

float on_grid(double v) { return static_cast<float>(std::round(v * kGrid) / kGrid); }

Tensor random_tensor(Shape shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape), 0.0f);
  for (auto& v : t.data()) v = on_grid(rng.uniform(lo, hi));
  return t;
}

// Values bounded away from zero so that +-step never crosses a ReLU kink.
Tensor random_away_from_zero(Shape shape, Rng& rng, float margin) {
  Tensor t(std::move(shape), 0.0f);
  for (auto& v : t.data()) {
    const auto mag = std::max(margin, on_grid(rng.uniform(margin, 1.0)));
    v = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

// Random linear functional of a tensor, evaluated in double.
struct Projection {
  std::vector<double> weights;
  Projection(std::size_t n, Rng& rng) : weights(n) {
    for (auto& w : weights) w = on_grid(rng.uniform(-1.0, 1.0));
  }
  double operator()(const Tensor& y) const {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += weights[i] * y[i];
    return s;
  }
  Tensor as_tensor(const Shape& shape) const {
    Tensor t(shape, 0.0f);
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = static_cast<float>(weights[i]);
    }
    return t;
  }
};

class Accumulator {
 public:
  Accumulator(std::string name, const GradcheckOptions& options)
      : options_(options) {
    case_.name = std::move(name);
  }

  void compare(const Tensor& analytic, const Tensor& numeric) {
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      case_.max_rel_error = std::max(case_.max_rel_error,
                                     relative_error(analytic[i], numeric[i]));
    }
    case_.elements += analytic.size();
  }

  void next_seed() { ++case_.seeds; }

  GradcheckCase finish() {
    case_.passed = case_.seeds >= options_.seeds &&
                   case_.max_rel_error <= options_.tolerance;
    return case_;
  }

 private:
  const GradcheckOptions& options_;
  GradcheckCase case_;
};

void check_conv(const GradcheckOptions& opt, std::vector<GradcheckCase>& out) {
  Accumulator in_acc("conv2d/grad_input", opt);
  Accumulator k_acc("conv2d/grad_kernels", opt);
  Accumulator b_acc("conv2d/grad_bias", opt);
  for (std::size_t s = 0; s < opt.seeds; ++s) {
    Rng rng(derive_seed(opt.base_seed, 100 + s));
    const std::size_t c_in = 1 + rng.below(2);
    const std::size_t c_out = 1 + rng.below(3);
    const std::size_t k = 2 + rng.below(2);
    const std::size_t stride = 1 + rng.below(2);
    const std::size_t h = k + 2 + rng.below(4);
    const std::size_t w = k + 2 + rng.below(4);
    const Tensor input = random_tensor({c_in, h, w}, rng);
    const Tensor kernels = random_tensor({c_out, c_in, k, k}, rng);
    const Tensor bias = random_tensor({c_out}, rng);
    const auto out_shape = conv2d_forward(input, kernels, bias, stride).shape();
    const Projection proj(shape_size(out_shape), rng);

    auto grads =
        conv2d_backward(input, kernels, stride, proj.as_tensor(out_shape));
    if (opt.inject_conv_sign_bug) {
      for (auto& v : grads.input.data()) v = -v;
    }

    in_acc.compare(grads.input,
                   finite_difference_gradient(
                       [&](const Tensor& x) {
                         return proj(conv2d_forward(x, kernels, bias, stride));
                       },
                       input, opt.step));
    k_acc.compare(grads.kernels,
                  finite_difference_gradient(
                      [&](const Tensor& kk) {
                        return proj(conv2d_forward(input, kk, bias, stride));
                      },
                      kernels, opt.step));
    b_acc.compare(grads.bias,
                  finite_difference_gradient(
                      [&](const Tensor& b) {
                        return proj(conv2d_forward(input, kernels, b, stride));
                      },
                      bias, opt.step));
    in_acc.next_seed();
    k_acc.next_seed();
    b_acc.next_seed();
  }
  out.push_back(in_acc.finish());
  out.push_back(k_acc.finish());
  out.push_back(b_acc.finish());
}

void check_fc(const GradcheckOptions& opt, std::vector<GradcheckCase>& out) {
  Accumulator in_acc("fc/grad_input", opt);
  Accumulator w_acc("fc/grad_weights", opt);
  Accumulator b_acc("fc/grad_bias", opt);
  for (std::size_t s = 0; s < opt.seeds; ++s) {
    Rng rng(derive_seed(opt.base_seed, 200 + s));
    const std::size_t n_in = 2 + rng.below(7);
    const std::size_t n_out = 1 + rng.below(5);
    const Tensor input = random_tensor({n_in}, rng);
    const Tensor weights = random_tensor({n_out, n_in}, rng);
    const Tensor bias = random_tensor({n_out}, rng);
    const Projection proj(n_out, rng);
    const auto grads = fc_backward(input, weights, proj.as_tensor({n_out}));
    in_acc.compare(grads.input,
                   finite_difference_gradient(
                       [&](const Tensor& x) {
                         return proj(fc_forward(x, weights, bias));
                       },
                       input, opt.step));
    w_acc.compare(grads.weights,
                  finite_difference_gradient(
                      [&](const Tensor& ww) {
                        return proj(fc_forward(input, ww, bias));
                      },
                      weights, opt.step));
    b_acc.compare(grads.bias, finite_difference_gradient(
                                  [&](const Tensor& b) {
                                    return proj(fc_forward(input, weights, b));
                                  },
                                  bias, opt.step));
    in_acc.next_seed();
    w_acc.next_seed();
    b_acc.next_seed();
  }
  out.push_back(in_acc.finish());
  out.push_back(w_acc.finish());
  out.push_back(b_acc.finish());
}

void check_relu(const GradcheckOptions& opt, std::vector<GradcheckCase>& out) {
  Accumulator acc("relu/grad_input", opt);
  for (std::size_t s = 0; s < opt.seeds; ++s) {
    Rng rng(derive_seed(opt.base_seed, 300 + s));
    const std::size_t n = 4 + rng.below(29);
    const Tensor input =
        random_away_from_zero({n}, rng, static_cast<float>(4 * opt.step));
    const Projection proj(n, rng);
    acc.compare(relu_backward(input, proj.as_tensor({n})),
                finite_difference_gradient(
                    [&](const Tensor& x) { return proj(relu(x)); }, input,
                    opt.step));
    acc.next_seed();
  }
  out.push_back(acc.finish());
}

void check_dropout(const GradcheckOptions& opt,
                   std::vector<GradcheckCase>& out) {
  Accumulator acc("dropout/grad_input", opt);
  for (std::size_t s = 0; s < opt.seeds; ++s) {
    Rng rng(derive_seed(opt.base_seed, 400 + s));
    const std::size_t n = 4 + rng.below(29);
    const float rate = static_cast<float>(rng.uniform(0.1, 0.7));
    const Tensor input = random_tensor({n}, rng);
    const std::uint64_t mask_seed = rng.next_u64();
    const Projection proj(n, rng);
    Rng mask_rng(mask_seed);
    const auto fwd = dropout(input, rate, mask_rng, true);
    // Re-seeding per evaluation keeps the mask fixed while probing.
    acc.compare(dropout_backward(fwd.mask, rate, proj.as_tensor({n})),
                finite_difference_gradient(
                    [&](const Tensor& x) {
                      Rng r(mask_seed);
                      return proj(dropout(x, rate, r, true).output);
                    },
                    input, opt.step));
    acc.next_seed();
  }
  out.push_back(acc.finish());
}

void check_mse(const GradcheckOptions& opt, std::vector<GradcheckCase>& out) {
  Accumulator acc("mse_loss/grad_pred", opt);
  for (std::size_t s = 0; s < opt.seeds; ++s) {
    Rng rng(derive_seed(opt.base_seed, 500 + s));
    const std::size_t n = 1 + rng.below(8);
    const Tensor pred = random_tensor({n}, rng);
    const Tensor target = random_tensor({n}, rng);
    acc.compare(mse_loss(pred, target).grad,
                finite_difference_gradient(
                    [&](const Tensor& p) { return mse_loss(p, target).loss; },
                    pred, opt.step));
    acc.next_seed();
  }
  out.push_back(acc.finish());
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  GradcheckReport report;
  check_conv(options, report.cases);
  check_fc(options, report.cases);
  check_relu(options, report.cases);
  check_dropout(options, report.cases);
  check_mse(options, report.cases);
  report.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  return report;
}

}  // namespace failcast
