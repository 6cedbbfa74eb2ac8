#pragma once

// VisualBackProp saliency maps (Bojarski et al.). Each conv layer's
// post-ReLU feature maps are averaged over channels; starting from the
// deepest layer the running map is deconvolved with an all-ones kernel of the
// layer geometry and multiplied pointwise with the next shallower average,
// until it reaches input resolution.

#include <cstddef>
#include <filesystem>
#include <vector>

#include "failcast/model.hpp"
#include "failcast/tensor.hpp"

namespace failcast {

// Single-channel [1,H,W] map with values in [0,1]; max is 1 unless all zero.
struct SaliencyMap {
  Tensor values;
  std::size_t height() const { return values.dim(1); }
  std::size_t width() const { return values.dim(2); }
};

// Channel mean of [C,H,W] -> [1,H,W].
Tensor average_feature_maps(const Tensor& activations);

// Transposed convolution of a [1,h,w] map with an all-ones kernel, scattering
// each source value over its kernel_size x kernel_size footprint in a
// [1,target_h,target_w] output. (h,w) must be the valid-conv output extent of
// (target_h,target_w).
Tensor upscale_to(const Tensor& map, std::size_t kernel_size,
                  std::size_t stride, std::size_t target_h,
                  std::size_t target_w);

// Divides by the global max; an all-zero map stays all zero. Negative input
// is an InvariantError.
SaliencyMap normalize_map(const Tensor& map);

// Runs the inference-mode forward pass and combines the recorded activations.
SaliencyMap visual_backprop(const Model& model, const Tensor& image);

// Recursion on precomputed averaged maps (shallow to deep), before
// normalization. Exposed so callers can inspect or rescale the stages.
Tensor combine_averaged_maps(const NetworkSpec& spec,
                             const std::vector<Tensor>& averaged);

// 8-bit binary PGM (P5), values quantized by round(255 v).
void write_pgm(const SaliencyMap& map, const std::filesystem::path& path);

}  // namespace failcast
