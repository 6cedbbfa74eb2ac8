#pragma once

// Forward and backward kernels for the layers used by the steering network.
// All reductions run single-threaded in a fixed row-major order, so results
// are bit-reproducible. Convolutions use valid padding only.

#include <cstddef>

#include "failcast/rng.hpp"
#include "failcast/tensor.hpp"

namespace failcast {

// Output extent of a valid convolution: floor((in - kernel) / stride) + 1.
// Returns 0 when the kernel does not fit.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride);

// Cross-correlation of input [C_in,H,W] with kernels [C_out,C_in,kH,kW].
// Each output accumulates over (c_in, ky, kx) in row-major order starting
// from zero; the bias is added last.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels,
                      const Tensor& bias, std::size_t stride);

struct Conv2dGrads {
  Tensor input;
  Tensor kernels;
  Tensor bias;
};

// With compute_input_grad == false the returned input gradient is left at
// zero (used for the first layer of a network, whose input is the image).
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                            std::size_t stride, const Tensor& grad_output,
                            bool compute_input_grad = true);

// output[j] = bias[j] + sum_i weights[j,i] * input[i]. Input may have any
// shape; it is read as a flat vector of length N_in.
Tensor fc_forward(const Tensor& input, const Tensor& weights,
                  const Tensor& bias);

struct FcGrads {
  Tensor input;  // same shape as the forward input
  Tensor weights;
  Tensor bias;
};

FcGrads fc_backward(const Tensor& input, const Tensor& weights,
                    const Tensor& grad_output);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

struct DropoutResult {
  Tensor output;
  Tensor mask;  // 1 where the element was kept, 0 where dropped
};

// Inverted dropout: kept elements are scaled by 1/(1-rate) during training.
// In inference mode the input passes through and no Rng state is consumed.
DropoutResult dropout(const Tensor& input, float rate, Rng& rng, bool training);
Tensor dropout_backward(const Tensor& mask, float rate,
                        const Tensor& grad_output);

struct MseResult {
  double loss = 0.0;
  Tensor grad;
};

// loss = mean((pred - target)^2), accumulated in double.
MseResult mse_loss(const Tensor& pred, const Tensor& target);

}  // namespace failcast
