#include <cmath>
#include <limits>

#include "doctest.h"
#include "helpers.hpp"

#include "failcast/error.hpp"
#include "failcast/gradcheck.hpp"
#include "failcast/layers.hpp"
#include "failcast/optim.hpp"

using namespace failcast;
using testutil::grid_tensor;
using testutil::uniform_tensor;

namespace {

// Plain quadruple loop with the same (ci, ky, kx) accumulation order.
Tensor naive_conv(const Tensor& in, const Tensor& k, const Tensor& b, std::size_t s) {
  const std::size_t co = k.dim(0), ci = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  const std::size_t oh = (in.dim(1) - kh) / s + 1, ow = (in.dim(2) - kw) / s + 1;
  Tensor out({co, oh, ow});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        float acc = 0.0f;
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx)
              acc += in.at(c, y * s + ky, x * s + kx) *
                     k[((o * ci + c) * kh + ky) * kw + kx];
        out.at(o, y, x) = acc + b[o];
      }
  return out;
}

double dot(const Tensor& a, const Tensor& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * w[i];
  return acc;
}

void check_close(const Tensor& analytic, const Tensor& numeric, double tol = 1e-3) {
  REQUIRE(analytic.shape() == numeric.shape());
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    INFO("component " << i << ": " << analytic[i] << " vs " << numeric[i]);
    CHECK(relative_error(analytic[i], numeric[i]) <= tol);
  }
}

constexpr double kStep = 0x1.0p-10;

}  // namespace

TEST_CASE("tensor shape checks") {
  CHECK_THROWS_AS(Tensor(Shape{}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>(3)), DimensionError);
  Tensor t({2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshaped({4}), DimensionError);
}

TEST_CASE("rng sequences are reproducible") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(Rng(42).next_u64() != Rng(43).next_u64());
  // First SplitMix64 output for seed 0, as published with the reference code.
  Rng z(0);
  CHECK(z.next_u64() == 0xe220a8397b1dcdafULL);
  Rng u(7);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(u.below(10) < 10);
  }
}

TEST_CASE("conv2d_forward examples") {
  SUBCASE("identity kernel") {
    Tensor in = Tensor::ones({1, 3, 3});
    auto out = conv2d_forward(in, Tensor::ones({1, 1, 1, 1}), Tensor::zeros({1}), 1);
    CHECK(out == Tensor::ones({1, 3, 3}));
  }
  SUBCASE("2x2 dot product") {
    Tensor in({1, 2, 2}, {1, 2, 3, 4});
    Tensor k({1, 1, 2, 2}, {1, 0, 0, 1});
    auto out = conv2d_forward(in, k, Tensor::zeros({1}), 1);
    CHECK(out.shape() == Shape{1, 1, 1});
    CHECK(out[0] == 5.0f);
  }
  SUBCASE("strided random case is bit-exact with the naive loop") {
    Rng rng(11);
    auto in = uniform_tensor({1, 7, 9}, rng);
    auto k = uniform_tensor({2, 1, 5, 5}, rng);
    auto b = uniform_tensor({2}, rng);
    auto out = conv2d_forward(in, k, b, 2);
    CHECK(out.shape() == Shape{2, 2, 3});
    CHECK(out == naive_conv(in, k, b, 2));
  }
  SUBCASE("bit-exact across channel counts and strides") {
    Rng rng(12);
    for (std::size_t s : {1u, 2u, 3u}) {
      auto in = uniform_tensor({3, 17, 23}, rng);
      auto k = uniform_tensor({4, 3, 3, 3}, rng);
      auto b = uniform_tensor({4}, rng);
      CHECK(conv2d_forward(in, k, b, s) == naive_conv(in, k, b, s));
    }
  }
  SUBCASE("errors") {
    Tensor in({1, 3, 3});
    CHECK_THROWS_AS(conv2d_forward(in, Tensor({1, 2, 1, 1}), Tensor({1}), 1), DimensionError);
    CHECK_THROWS_AS(conv2d_forward(in, Tensor({1, 1, 5, 5}), Tensor({1}), 1), DimensionError);
    CHECK_THROWS_AS(conv2d_forward(in, Tensor({1, 1, 1, 1}), Tensor({1}), 0), ParameterError);
  }
}

TEST_CASE("conv2d_backward examples") {
  Rng rng(21);
  auto in = grid_tensor({2, 6, 7}, rng);
  auto k = grid_tensor({3, 2, 3, 3}, rng);
  SUBCASE("zero upstream gradient") {
    auto g = conv2d_backward(in, k, 2, Tensor::zeros({3, 2, 3}));
    CHECK(g.input == Tensor::zeros(in.shape()));
    CHECK(g.kernels == Tensor::zeros(k.shape()));
    CHECK(g.bias == Tensor::zeros({3}));
  }
  SUBCASE("identity kernel passes the gradient through") {
    auto x = grid_tensor({1, 4, 4}, rng);
    auto go = grid_tensor({1, 4, 4}, rng);
    auto g = conv2d_backward(x, Tensor::ones({1, 1, 1, 1}), 1, go);
    CHECK(g.input == go);
  }
  SUBCASE("finite differences on a random case") {
    auto b = grid_tensor({3}, rng);
    auto go = grid_tensor({3, 2, 3}, rng);
    auto g = conv2d_backward(in, k, 2, go);
    check_close(g.input, finite_difference_gradient(
        [&](const Tensor& x) { return dot(conv2d_forward(x, k, b, 2), go); }, in, kStep));
    check_close(g.kernels, finite_difference_gradient(
        [&](const Tensor& w) { return dot(conv2d_forward(in, w, b, 2), go); }, k, kStep));
    check_close(g.bias, finite_difference_gradient(
        [&](const Tensor& bb) { return dot(conv2d_forward(in, k, bb, 2), go); }, b, kStep));
  }
}

TEST_CASE("finite differences agree with conv2d_backward on 1x5x5") {
  Rng rng(5);
  auto in = grid_tensor({1, 5, 5}, rng);
  auto k = grid_tensor({1, 1, 3, 3}, rng);
  auto b = Tensor::zeros({1});
  auto go = grid_tensor({1, 3, 3}, rng);
  auto g = conv2d_backward(in, k, 1, go);
  check_close(g.input, finite_difference_gradient(
      [&](const Tensor& x) { return dot(conv2d_forward(x, k, b, 1), go); }, in, kStep));
}

TEST_CASE("fc layers") {
  SUBCASE("zero weights give the bias") {
    Tensor b({2}, {0.5f, -1.0f});
    CHECK(fc_forward(Tensor({3}, {1, 2, 3}), Tensor::zeros({2, 3}), b) == b);
  }
  SUBCASE("identity weights") {
    Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor x({3}, {1.5f, -2.0f, 0.25f});
    CHECK(fc_forward(x, eye, Tensor::zeros({3})) == x);
    auto g = fc_backward(x, eye, x);
    CHECK(g.input == x);
  }
  SUBCASE("random 3 -> 2 against a hand loop") {
    Rng rng(3);
    auto x = uniform_tensor({3}, rng);
    auto w = uniform_tensor({2, 3}, rng);
    auto b = uniform_tensor({2}, rng);
    auto out = fc_forward(x, w, b);
    for (std::size_t j = 0; j < 2; ++j) {
      float acc = 0.0f;
      for (std::size_t i = 0; i < 3; ++i) acc += w[j * 3 + i] * x[i];
      CHECK(out[j] == doctest::Approx(acc + b[j]).epsilon(1e-6));
    }
  }
  SUBCASE("zero upstream gradient") {
    Rng rng(4);
    auto x = uniform_tensor({4}, rng);
    auto w = uniform_tensor({3, 4}, rng);
    auto g = fc_backward(x, w, Tensor::zeros({3}));
    CHECK(g.input == Tensor::zeros({4}));
    CHECK(g.weights == Tensor::zeros({3, 4}));
    CHECK(g.bias == Tensor::zeros({3}));
  }
  SUBCASE("finite differences") {
    Rng rng(6);
    auto x = grid_tensor({5}, rng);
    auto w = grid_tensor({3, 5}, rng);
    auto b = grid_tensor({3}, rng);
    auto go = grid_tensor({3}, rng);
    auto g = fc_backward(x, w, go);
    check_close(g.input, finite_difference_gradient(
        [&](const Tensor& t) { return dot(fc_forward(t, w, b), go); }, x, kStep));
    check_close(g.weights, finite_difference_gradient(
        [&](const Tensor& t) { return dot(fc_forward(x, t, b), go); }, w, kStep));
    check_close(g.bias, finite_difference_gradient(
        [&](const Tensor& t) { return dot(fc_forward(x, w, t), go); }, b, kStep));
  }
}

TEST_CASE("relu sign cases") {
  Tensor neg({3}, {-1, -2, -0.5f});
  CHECK(relu(neg) == Tensor::zeros({3}));
  CHECK(relu_backward(neg, Tensor::ones({3})) == Tensor::zeros({3}));
  Tensor pos({3}, {1, 2, 0.5f});
  Tensor go({3}, {3, 4, 5});
  CHECK(relu(pos) == pos);
  CHECK(relu_backward(pos, go) == go);
  Tensor mixed({3}, {-1, 0, 2});
  CHECK(relu(mixed) == Tensor({3}, {0, 0, 2}));
  CHECK(relu_backward(mixed, Tensor({3}, {5, 5, 5})) == Tensor({3}, {0, 0, 5}));
}

TEST_CASE("dropout") {
  Rng rng(8);
  auto x = uniform_tensor({100}, rng);
  SUBCASE("rate 0 keeps everything") {
    auto r = dropout(x, 0.0f, rng, true);
    CHECK(r.output == x);
    CHECK(r.mask == Tensor::ones({100}));
  }
  SUBCASE("inference passthrough consumes no randomness") {
    const auto before = rng.state();
    auto r = dropout(x, 0.7f, rng, false);
    CHECK(r.output == x);
    CHECK(rng.state() == before);
  }
  SUBCASE("kept fraction at rate 0.5") {
    Rng r2(2024);
    auto big = Tensor::ones({10000});
    auto r = dropout(big, 0.5f, r2, true);
    double kept = 0.0;
    for (float m : r.mask.data()) kept += m;
    CHECK(kept / 10000.0 == doctest::Approx(0.5).epsilon(0.04));
    for (std::size_t i = 0; i < big.size(); ++i) {
      CHECK(r.output[i] == (r.mask[i] == 1.0f ? 2.0f : 0.0f));
    }
  }
  SUBCASE("mask is a pure function of the rng state") {
    Rng a(99), b(99);
    CHECK(dropout(x, 0.3f, a, true).mask == dropout(x, 0.3f, b, true).mask);
  }
  SUBCASE("rate outside [0,1)") {
    CHECK_THROWS_AS(dropout(x, 1.0f, rng, true), ParameterError);
    CHECK_THROWS_AS(dropout(x, -0.1f, rng, true), ParameterError);
  }
}

TEST_CASE("mse loss") {
  Tensor p({3}, {1, 2, 3});
  auto same = mse_loss(p, p);
  CHECK(same.loss == 0.0);
  CHECK(same.grad == Tensor::zeros({3}));
  auto one = mse_loss(Tensor({1}, {2}), Tensor({1}, {0}));
  CHECK(one.loss == 4.0);
  CHECK(one.grad[0] == 4.0f);

  Rng rng(10);
  auto pred = grid_tensor({5}, rng);
  auto target = grid_tensor({5}, rng);
  auto r = mse_loss(pred, target);
  check_close(r.grad, finite_difference_gradient(
      [&](const Tensor& t) { return mse_loss(t, target).loss; }, pred, kStep));
}

TEST_CASE("adam") {
  SUBCASE("zero gradient is the identity") {
    Rng rng(1);
    auto p = uniform_tensor({4}, rng);
    auto s = AdamState::for_param(p);
    const auto before = p;
    adam_step(p, Tensor::zeros({4}), s, {});
    CHECK(p == before);
    CHECK(s.step_count == 0);
    CHECK(s.first_moment == Tensor::zeros({4}));
    CHECK(s.second_moment == Tensor::zeros({4}));
    // and after some real steps
    adam_step(p, Tensor::ones({4}), s, {});
    const auto mid = p;
    const auto state = s.first_moment;
    adam_step(p, Tensor::zeros({4}), s, {});
    CHECK(p == mid);
    CHECK(s.first_moment == state);
  }
  SUBCASE("single hand-computed step") {
    Tensor p({1}, 0.0f);
    auto s = AdamState::for_param(p);
    AdamHyper h;
    h.learning_rate = 1e-3f;
    adam_step(p, Tensor({1}, 1.0f), s, h);
    CHECK(p[0] == doctest::Approx(-1e-3).epsilon(1e-4));
    CHECK(s.step_count == 1);
    CHECK(s.second_moment[0] >= 0.0f);
  }
  SUBCASE("pipeline defaults") {
    AdamHyper h;
    CHECK(h.learning_rate == 1e-5f);
    CHECK(h.beta1 == 0.9f);
    CHECK(h.beta2 == 0.999f);
    CHECK(h.eps == 1e-8f);
  }
}

TEST_CASE("finite_difference_gradient examples") {
  auto sum = [](const Tensor& t) {
    double s = 0.0;
    for (float v : t.data()) s += v;
    return s;
  };
  Rng rng(2);
  auto x = uniform_tensor({6}, rng);
  auto g = finite_difference_gradient(sum, x, 1e-3);
  for (float v : g.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));

  auto sq = [](const Tensor& t) { return static_cast<double>(t[0]) * t[0]; };
  auto g2 = finite_difference_gradient(sq, Tensor({1}, 3.0f), 1e-3);
  CHECK(std::abs(g2[0] - 6.0) <= 1e-5);
}

TEST_CASE("no NaN or Inf for large finite inputs") {
  Rng rng(13);
  auto in = uniform_tensor({2, 9, 9}, rng, -1e6f, 1e6f);
  auto k = uniform_tensor({2, 2, 3, 3}, rng, -1.0f, 1.0f);
  auto out = conv2d_forward(in, k, Tensor::zeros({2}), 2);
  CHECK(out.all_finite());
  CHECK(relu(out).all_finite());
  auto g = conv2d_backward(in, k, 2, Tensor::ones(out.shape()));
  CHECK(g.kernels.all_finite());
  CHECK(g.input.all_finite());
}

TEST_CASE("gradient suite") {
  GradcheckOptions opt;
  auto report = run_gradcheck(opt);
  for (const auto& c : report.cases) {
    INFO(c.name << " max rel err " << c.max_rel_error);
    CHECK(c.seeds >= 20);
    CHECK(c.passed);
  }
  CHECK(report.passed());

  opt.inject_conv_sign_bug = true;
  CHECK_FALSE(run_gradcheck(opt).passed());
}
