#include "failcast/layers.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "failcast/error.hpp"

namespace failcast {

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride) {
  if (stride == 0 || kernel == 0 || in < kernel) return 0;
  return (in - kernel) / stride + 1;
}

namespace {

struct ConvGeometry {
  std::size_t c_in, h, w, c_out, kh, kw, oh, ow, stride;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernels,
                           std::size_t stride) {
  if (input.rank() != 3) {
    throw DimensionError("conv2d: input must be [C,H,W], got " +
                         shape_string(input.shape()));
  }
  if (kernels.rank() != 4) {
    throw DimensionError("conv2d: kernels must be [C_out,C_in,kH,kW], got " +
                         shape_string(kernels.shape()));
  }
  if (input.dim(0) != kernels.dim(1)) {
    throw DimensionError("conv2d: input " + shape_string(input.shape()) +
                         " has " + std::to_string(input.dim(0)) +
                         " channels but kernels " +
                         shape_string(kernels.shape()) + " expect " +
                         std::to_string(kernels.dim(1)));
  }
  if (stride == 0) throw ParameterError("conv2d: stride must be positive");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernels.dim(0),
                 kernels.dim(2), kernels.dim(3), 0, 0, stride};
  g.oh = conv_output_extent(g.h, g.kh, stride);
  g.ow = conv_output_extent(g.w, g.kw, stride);
  if (g.oh == 0 || g.ow == 0) {
    throw DimensionError("conv2d: kernels " + shape_string(kernels.shape()) +
                         " do not fit input " + shape_string(input.shape()));
  }
  return g;
}

}  // namespace

namespace {

// Polyphase view of a [C,H,W] tensor for stride s: column x lives in phase
// plane x % s at position x / s, so a strided row read becomes contiguous.
class PhasePlanes {
 public:
  PhasePlanes(std::size_t c, std::size_t h, std::size_t w, std::size_t stride)
      : c_(c), h_(h), w_(w), s_(stride), pw_((w + stride - 1) / stride),
        data_(c * h * stride * pw_, 0.0f) {}

  static PhasePlanes from(const float* src, std::size_t c, std::size_t h,
                          std::size_t w, std::size_t stride) {
    PhasePlanes p(c, h, w, stride);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        const float* row = src + (ch * h + y) * w;
        for (std::size_t x = 0; x < w; ++x) {
          p.data_[p.index(ch, y, x % stride, x / stride)] = row[x];
        }
      }
    }
    return p;
  }

  void scatter_to(float* dst) const {
    for (std::size_t ch = 0; ch < c_; ++ch) {
      for (std::size_t y = 0; y < h_; ++y) {
        float* row = dst + (ch * h_ + y) * w_;
        for (std::size_t x = 0; x < w_; ++x) {
          row[x] = data_[index(ch, y, x % s_, x / s_)];
        }
      }
    }
  }

  // Pointer to element (ch, y, column) where column = j * s + phase.
  float* at(std::size_t ch, std::size_t y, std::size_t column) {
    return data_.data() + index(ch, y, column % s_, column / s_);
  }
  const float* at(std::size_t ch, std::size_t y, std::size_t column) const {
    return data_.data() + index(ch, y, column % s_, column / s_);
  }

 private:
  std::size_t index(std::size_t ch, std::size_t y, std::size_t phase,
                    std::size_t j) const {
    return ((ch * h_ + y) * s_ + phase) * pw_ + j;
  }

  std::size_t c_, h_, w_, s_, pw_;
  std::vector<float> data_;
};

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels,
                      const Tensor& bias, std::size_t stride) {
  const auto g = conv_geometry(input, kernels, stride);
  if (bias.size() != g.c_out) {
    throw DimensionError("conv2d: bias " + shape_string(bias.shape()) +
                         " does not match " + std::to_string(g.c_out) +
                         " output channels");
  }
  Tensor out({g.c_out, g.oh, g.ow}, 0.0f);
  const auto planes =
      PhasePlanes::from(input.data().data(), g.c_in, g.h, g.w, stride);
  const float* k = kernels.data().data();
  float* o = out.data().data();
  // Loops run across output columns innermost; each individual output still
  // accumulates in (c_in, ky, kx) order, starting from zero.
  for (std::size_t co = 0; co < g.c_out; ++co) {
    float* oc = o + co * g.oh * g.ow;
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const float kv = k[((co * g.c_in + ci) * g.kh + ky) * g.kw + kx];
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const float* __restrict row = planes.at(ci, oy * stride + ky, kx);
            float* __restrict orow = oc + oy * g.ow;
            for (std::size_t ox = 0; ox < g.ow; ++ox) orow[ox] += row[ox] * kv;
          }
        }
      }
    }
    const float b = bias[co];
    for (std::size_t i = 0; i < g.oh * g.ow; ++i) oc[i] += b;
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                            std::size_t stride, const Tensor& grad_output,
                            bool compute_input_grad) {
  const auto g = conv_geometry(input, kernels, stride);
  const Shape expected{g.c_out, g.oh, g.ow};
  if (grad_output.shape() != expected) {
    throw DimensionError("conv2d_backward: grad_output " +
                         shape_string(grad_output.shape()) +
                         " does not match forward output " +
                         shape_string(expected));
  }
  Conv2dGrads grads{Tensor(input.shape(), 0.0f), Tensor(kernels.shape(), 0.0f),
                    Tensor({g.c_out}, 0.0f)};
  const auto planes =
      PhasePlanes::from(input.data().data(), g.c_in, g.h, g.w, stride);
  PhasePlanes grad_planes(compute_input_grad ? g.c_in : 1,
                          compute_input_grad ? g.h : 1,
                          compute_input_grad ? g.w : 1, stride);
  const float* k = kernels.data().data();
  const float* go = grad_output.data().data();
  float* gk = grads.kernels.data().data();
  // Column partial sums: kernel gradients accumulate over rows per output
  // column first, then across columns left to right.
  std::vector<float> column_acc(g.ow);

  for (std::size_t co = 0; co < g.c_out; ++co) {
    const float* goc = go + co * g.oh * g.ow;
    float sum = 0.0f;
    for (std::size_t i = 0; i < g.oh * g.ow; ++i) sum += goc[i];
    grads.bias[co] = sum;

    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::size_t kidx = ((co * g.c_in + ci) * g.kh + ky) * g.kw + kx;
          const float kv = k[kidx];
          std::fill(column_acc.begin(), column_acc.end(), 0.0f);
          float* __restrict acc = column_acc.data();
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const float* __restrict grow = goc + oy * g.ow;
            const float* __restrict row = planes.at(ci, oy * stride + ky, kx);
            for (std::size_t ox = 0; ox < g.ow; ++ox) acc[ox] += grow[ox] * row[ox];
            if (compute_input_grad) {
              float* __restrict girow = grad_planes.at(ci, oy * stride + ky, kx);
              for (std::size_t ox = 0; ox < g.ow; ++ox) girow[ox] += grow[ox] * kv;
            }
          }
          float total = 0.0f;
          for (std::size_t ox = 0; ox < g.ow; ++ox) total += acc[ox];
          gk[kidx] = total;
        }
      }
    }
  }
  if (compute_input_grad) grad_planes.scatter_to(grads.input.data().data());
  return grads;
}

Tensor fc_forward(const Tensor& input, const Tensor& weights,
                  const Tensor& bias) {
  if (weights.rank() != 2) {
    throw DimensionError("fc: weights must be [N_out,N_in], got " +
                         shape_string(weights.shape()));
  }
  const std::size_t n_out = weights.dim(0);
  const std::size_t n_in = weights.dim(1);
  if (input.size() != n_in) {
    throw DimensionError("fc: input " + shape_string(input.shape()) +
                         " does not match weights " +
                         shape_string(weights.shape()));
  }
  if (bias.size() != n_out) {
    throw DimensionError("fc: bias " + shape_string(bias.shape()) +
                         " does not match weights " +
                         shape_string(weights.shape()));
  }
  Tensor out({n_out}, 0.0f);
  const float* x = input.data().data();
  const float* w = weights.data().data();
  for (std::size_t j = 0; j < n_out; ++j) {
    const float* wr = w + j * n_in;
    float acc = 0.0f;
    for (std::size_t i = 0; i < n_in; ++i) acc += wr[i] * x[i];
    out[j] = bias[j] + acc;
  }
  return out;
}

FcGrads fc_backward(const Tensor& input, const Tensor& weights,
                    const Tensor& grad_output) {
  if (weights.rank() != 2 || input.size() != weights.dim(1) ||
      grad_output.size() != weights.dim(0)) {
    throw DimensionError("fc_backward: input " + shape_string(input.shape()) +
                         ", weights " + shape_string(weights.shape()) +
                         ", grad_output " + shape_string(grad_output.shape()) +
                         " are inconsistent");
  }
  const std::size_t n_out = weights.dim(0);
  const std::size_t n_in = weights.dim(1);
  FcGrads grads{Tensor(input.shape(), 0.0f), Tensor(weights.shape(), 0.0f),
                Tensor({n_out}, 0.0f)};
  const float* x = input.data().data();
  const float* w = weights.data().data();
  float* gx = grads.input.data().data();
  float* gw = grads.weights.data().data();
  for (std::size_t j = 0; j < n_out; ++j) {
    const float gj = grad_output[j];
    grads.bias[j] = gj;
    const float* wr = w + j * n_in;
    float* gwr = gw + j * n_in;
    for (std::size_t i = 0; i < n_in; ++i) {
      gwr[i] = gj * x[i];
      gx[i] += gj * wr[i];
    }
  }
  return grads;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
  if (input.size() != grad_output.size()) {
    throw DimensionError("relu_backward: input " + shape_string(input.shape()) +
                         " vs grad_output " + shape_string(grad_output.shape()));
  }
  Tensor out(input.shape(), 0.0f);
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = input[i] > 0.0f ? grad_output[i] : 0.0f;
  }
  return out;
}

namespace {

void check_rate(float rate) {
  if (!(rate >= 0.0f && rate < 1.0f)) {
    throw ParameterError("dropout: rate must lie in [0,1), got " +
                         std::to_string(rate));
  }
}

}  // namespace

DropoutResult dropout(const Tensor& input, float rate, Rng& rng,
                      bool training) {
  check_rate(rate);
  if (!training || rate == 0.0f) {
    return {input, Tensor(input.shape(), 1.0f)};
  }
  const float scale = 1.0f / (1.0f - rate);
  DropoutResult r{Tensor(input.shape(), 0.0f), Tensor(input.shape(), 0.0f)};
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (rng.uniform() >= rate) {
      r.mask[i] = 1.0f;
      r.output[i] = input[i] * scale;
    }
  }
  return r;
}

Tensor dropout_backward(const Tensor& mask, float rate,
                        const Tensor& grad_output) {
  check_rate(rate);
  if (mask.size() != grad_output.size()) {
    throw DimensionError("dropout_backward: mask " + shape_string(mask.shape()) +
                         " vs grad_output " + shape_string(grad_output.shape()));
  }
  const float scale = 1.0f / (1.0f - rate);
  Tensor out(grad_output.shape(), 0.0f);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i] != 0.0f) out[i] = grad_output[i] * scale;
  }
  return out;
}

MseResult mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse_loss: pred " + shape_string(pred.shape()) +
                         " vs target " + shape_string(target.shape()));
  }
  const auto n = static_cast<double>(pred.size());
  MseResult r{0.0, Tensor(pred.shape(), 0.0f)};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - target[i];
    r.loss += d * d;
    r.grad[i] = static_cast<float>(2.0 * d / n);
  }
  r.loss /= n;
  return r;
}

}  // namespace failcast
