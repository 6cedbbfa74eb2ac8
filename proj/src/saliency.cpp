#include "failcast/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "failcast/binary_io.hpp"
#include "failcast/error.hpp"
#include "failcast/layers.hpp"

namespace failcast {

Tensor average_feature_maps(const Tensor& activations) {
  if (activations.rank() != 3) {
    throw DimensionError("average_feature_maps: expected [C,H,W], got " +
                         shape_string(activations.shape()));
  }
  const std::size_t c = activations.dim(0);
  const std::size_t hw = activations.dim(1) * activations.dim(2);
  Tensor out({1, activations.dim(1), activations.dim(2)}, 0.0f);
  const float* a = activations.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < hw; ++i) out[i] += a[ch * hw + i];
  }
  const float inv = 1.0f / static_cast<float>(c);
  for (auto& v : out.data()) v *= inv;
  return out;
}

Tensor upscale_to(const Tensor& map, std::size_t kernel_size,
                  std::size_t stride, std::size_t target_h,
                  std::size_t target_w) {
  if (map.rank() != 3 || map.dim(0) != 1) {
    throw DimensionError("upscale_to: expected a [1,h,w] map, got " +
                         shape_string(map.shape()));
  }
  const std::size_t eh = conv_output_extent(target_h, kernel_size, stride);
  const std::size_t ew = conv_output_extent(target_w, kernel_size, stride);
  if (map.dim(1) != eh || map.dim(2) != ew) {
    throw DimensionError(
        "upscale_to: a " + std::to_string(target_h) + "x" +
        std::to_string(target_w) + " target with kernel " +
        std::to_string(kernel_size) + " stride " + std::to_string(stride) +
        " expects a " + std::to_string(eh) + "x" + std::to_string(ew) +
        " source, got " + std::to_string(map.dim(1)) + "x" +
        std::to_string(map.dim(2)));
  }
  Tensor out({1, target_h, target_w}, 0.0f);
  for (std::size_t y = 0; y < eh; ++y) {
    for (std::size_t x = 0; x < ew; ++x) {
      const float v = map.at(0, y, x);
      for (std::size_t ky = 0; ky < kernel_size; ++ky) {
        float* row = &out.at(0, y * stride + ky, x * stride);
        for (std::size_t kx = 0; kx < kernel_size; ++kx) row[kx] += v;
      }
    }
  }
  return out;
}

SaliencyMap normalize_map(const Tensor& map) {
  float peak = 0.0f;
  for (float v : map.data()) {
    if (v < 0.0f || !std::isfinite(v)) {
      throw InvariantError("normalize_map: saliency values must be finite and "
                           "non-negative, found " + std::to_string(v));
    }
    peak = std::max(peak, v);
  }
  SaliencyMap out{map};
  if (peak > 0.0f) {
    for (auto& v : out.values.data()) v = std::min(1.0f, v / peak);
  }
  return out;
}

Tensor combine_averaged_maps(const NetworkSpec& spec,
                             const std::vector<Tensor>& averaged) {
  if (averaged.size() != spec.conv_layers.size() || averaged.empty()) {
    throw DimensionError("visual_backprop: expected " +
                         std::to_string(spec.conv_layers.size()) +
                         " averaged maps, got " + std::to_string(averaged.size()));
  }
  Tensor m = averaged.back();
  for (std::size_t l = averaged.size() - 1; l-- > 0;) {
    const auto& geom = spec.conv_layers[l + 1];
    m = upscale_to(m, geom.kernel_size, geom.stride, averaged[l].dim(1),
                   averaged[l].dim(2));
    for (std::size_t i = 0; i < m.size(); ++i) m[i] *= averaged[l][i];
  }
  const auto& first = spec.conv_layers.front();
  return upscale_to(m, first.kernel_size, first.stride, spec.input_height,
                    spec.input_width);
}

SaliencyMap visual_backprop(const Model& model, const Tensor& image) {
  Rng unused(0);
  const auto fwd = forward(model, image, false, unused);
  std::vector<Tensor> averaged;
  averaged.reserve(fwd.activations.size());
  for (const auto& a : fwd.activations) averaged.push_back(average_feature_maps(a));
  return normalize_map(combine_averaged_maps(model.spec, averaged));
}

void write_pgm(const SaliencyMap& map, const std::filesystem::path& path) {
  std::string out = "P5\n" + std::to_string(map.width()) + " " +
                    std::to_string(map.height()) + "\n255\n";
  for (float v : map.values.data()) {
    const auto q = static_cast<long>(std::lround(255.0f * std::clamp(v, 0.0f, 1.0f)));
    out.push_back(static_cast<char>(static_cast<unsigned char>(q)));
  }
  write_text_file(path, out);
}

}  // namespace failcast
