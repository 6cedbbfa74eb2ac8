#pragma once

// Procedural grayscale road frames with ground-truth steering labels.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "failcast/dataset.hpp"
#include "failcast/rng.hpp"
#include "failcast/tensor.hpp"

namespace failcast {

enum class HardCase : std::uint8_t {
  none = 0,
  occluded_markings,
  glare_patch,
  low_contrast,
};

std::string to_string(HardCase kind);
HardCase hard_case_from_string(const std::string& name);

struct VehicleConstants {
  double wheelbase = 2.9;        // m
  double steering_ratio = 15.0;  // steering wheel angle / road wheel angle
};

inline constexpr double kMaxCurvature = 0.05;  // 1/m
inline constexpr double kMaxSwaDegrees = 90.0;

struct SceneParams {
  double curvature = 0.0;      // signed, 1/m; positive bends right
  double lane_width = 3.6;     // m, each of the two lanes
  double camera_height = 1.5;  // m
  double marking_period = 6.0; // m, one dash plus one gap
  HardCase hard_case = HardCase::none;
  double noise_sigma = 0.02;   // grayscale units

  void validate() const;
};

// Steering wheel angle in degrees for a path of the given curvature:
// steering_ratio * atan(wheelbase * curvature). Requires |curvature| *
// wheelbase < 1.
double curvature_to_swa(double curvature, double wheelbase,
                        double steering_ratio);
double swa_to_curvature(double swa_degrees, double wheelbase,
                        double steering_ratio);

struct RenderedFrame {
  Tensor image;  // [1,H,W], values in [0,1]
  float swa_label = 0.0f;
};

// Renders one frame. Consumes rng only for the hard-case overlay placement
// and the pixel noise, so (params, rng state) fully determine the output.
RenderedFrame render_scene(const SceneParams& params, Rng& rng,
                           std::size_t height, std::size_t width,
                           const VehicleConstants& vehicle = {});

struct DatasetGenConfig {
  std::size_t count = 1;
  std::vector<double> bucket_edges{0.0, 30.0, 60.0, 90.0};  // |SWA| degrees
  std::vector<double> bucket_weights{1.0, 1.0, 1.0};
  double hard_case_rate = 0.2;
  std::uint64_t seed = 0;
  std::size_t height = 34;
  std::size_t width = 96;
  double noise_sigma = 0.02;

  void validate() const;
};

struct ManifestEntry {
  std::size_t index = 0;
  double curvature = 0.0;
  float swa = 0.0f;
  HardCase hard_case = HardCase::none;
  std::uint64_t seed = 0;
};

struct GeneratedDataset {
  FrameDataset frames;
  std::vector<ManifestEntry> manifest;
};

// Frame i is rendered from Rng(derive_seed(cfg.seed, i)): its |SWA| bucket
// is drawn by weight, the magnitude uniformly within the bucket, the sign
// with probability 1/2, and a hard case with probability hard_case_rate.
GeneratedDataset generate_dataset(const DatasetGenConfig& cfg);

// Writes `path` (SFDS) and `path` + ".manifest.jsonl".
void write_generated(const GeneratedDataset& data,
                     const std::filesystem::path& path);
std::filesystem::path manifest_path(const std::filesystem::path& dataset_path);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace failcast
