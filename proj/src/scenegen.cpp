#include "failcast/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "failcast/binary_io.hpp"
#include "failcast/error.hpp"

namespace failcast {

std::string to_string(HardCase kind) {
  switch (kind) {
    case HardCase::none:
      return "none";
    case HardCase::occluded_markings:
      return "occluded_markings";
    case HardCase::glare_patch:
      return "glare_patch";
    case HardCase::low_contrast:
      return "low_contrast";
  }
  return "unknown";
}

HardCase hard_case_from_string(const std::string& name) {
  for (auto k : {HardCase::none, HardCase::occluded_markings,
                 HardCase::glare_patch, HardCase::low_contrast}) {
    if (to_string(k) == name) return k;
  }
  throw ParameterError("unknown hard case '" + name + "'");
}

void SceneParams::validate() const {
  if (!(std::abs(curvature) <= kMaxCurvature)) {
    throw ParameterError("scene: |curvature| must be <= 0.05 1/m");
  }
  if (!(noise_sigma >= 0.0)) throw ParameterError("scene: noise_sigma must be >= 0");
  if (!(lane_width > 0.0 && camera_height > 0.0 && marking_period > 0.0)) {
    throw ParameterError("scene: lane_width, camera_height and marking_period "
                         "must be positive");
  }
}

double curvature_to_swa(double curvature, double wheelbase,
                        double steering_ratio) {
  if (!(std::abs(curvature) * wheelbase < 1.0)) {
    throw ParameterError("curvature_to_swa: |curvature| * wheelbase must be < 1");
  }
  return steering_ratio * std::atan(wheelbase * curvature) * 180.0 /
         std::numbers::pi;
}

double swa_to_curvature(double swa_degrees, double wheelbase,
                        double steering_ratio) {
  return std::tan(swa_degrees / steering_ratio * std::numbers::pi / 180.0) /
         wheelbase;
}

namespace {

constexpr double kHorizontalFov = 60.0 * std::numbers::pi / 180.0;
constexpr double kHorizonFraction = 0.3;
constexpr double kLineWidth = 0.2;    // m, painted edge lines
constexpr double kMarkingHalf = 0.08; // m, half width of the centre dashes

constexpr float kSkyTop = 0.82f;
constexpr float kSkyHorizon = 0.70f;
constexpr float kGrass = 0.45f;
constexpr float kAsphalt = 0.22f;
constexpr float kPaint = 0.95f;

struct Camera {
  double focal;     // px
  double horizon;   // row coordinate of the horizon
  double centre_x;  // column coordinate of the optical axis
};

// Lateral offset (m) of the road centreline at forward distance z, or NaN
// once the arc has turned out of view.
double centreline_offset(double curvature, double z) {
  if (curvature == 0.0) return 0.0;
  const double radius = 1.0 / std::abs(curvature);
  if (z >= radius) return std::nan("");
  const double off = radius - std::sqrt(radius * radius - z * z);
  return curvature > 0.0 ? off : -off;
}

float shade(const SceneParams& p, const Camera& cam, double row, double col,
            double marking_phase, std::size_t height) {
  const double v = row - cam.horizon;
  if (v <= 0.0) {
    const double t = std::clamp(row / cam.horizon, 0.0, 1.0);
    return static_cast<float>(kSkyTop + (kSkyHorizon - kSkyTop) * t);
  }
  const double z = p.camera_height * cam.focal / v;
  const double lateral = (col - cam.centre_x) * z / cam.focal;
  // Slight darkening of the ground towards the camera.
  const float grass =
      kGrass - 0.05f * static_cast<float>(v / (static_cast<double>(height) - cam.horizon));
  const double c = centreline_offset(p.curvature, z);
  if (std::isnan(c)) return grass;
  const double d = std::abs(lateral - c);
  const double half_road = p.lane_width;
  if (d > half_road) return grass;
  if (d > half_road - kLineWidth) return kPaint;
  if (d < kMarkingHalf &&
      std::fmod(z + marking_phase, p.marking_period) < 0.5 * p.marking_period) {
    return kPaint;
  }
  return kAsphalt;
}

}  // namespace

RenderedFrame render_scene(const SceneParams& params, Rng& rng,
                           std::size_t height, std::size_t width,
                           const VehicleConstants& vehicle) {
  params.validate();
  if (height == 0 || width == 0) {
    throw ParameterError("render_scene: image dimensions must be positive");
  }
  const Camera cam{0.5 * static_cast<double>(width) / std::tan(0.5 * kHorizontalFov),
                   kHorizonFraction * static_cast<double>(height),
                   0.5 * static_cast<double>(width)};
  // Dashes start at a phase derived from the period so that the clean render
  // depends on params alone.
  const double marking_phase = 0.37 * params.marking_period;

  RenderedFrame out{Tensor({1, height, width}, 0.0f), 0.0f};
  // 2x2 supersampling at symmetric offsets.
  constexpr double kOffsets[2] = {0.25, 0.75};
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      float acc = 0.0f;
      for (double oy : kOffsets) {
        for (double ox : kOffsets) {
          acc += shade(params, cam, static_cast<double>(y) + oy,
                       static_cast<double>(x) + ox, marking_phase, height);
        }
      }
      out.image.at(0, y, x) = 0.25f * acc;
    }
  }

  const auto h = static_cast<double>(height);
  const auto w = static_cast<double>(width);
  switch (params.hard_case) {
    case HardCase::none:
      break;
    case HardCase::occluded_markings: {
      // Dark occluder (shadow or vehicle) over the far road.
      const double x0 = w * rng.uniform(0.05, 0.3);
      const double x1 = w * rng.uniform(0.7, 0.95);
      const double y1 = cam.horizon + (h - cam.horizon) * rng.uniform(0.45, 0.75);
      const auto level = static_cast<float>(rng.uniform(0.08, 0.18));
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          const double cy = static_cast<double>(y) + 0.5;
          const double cx = static_cast<double>(x) + 0.5;
          if (cy >= cam.horizon - 1.0 && cy < y1 && cx >= x0 && cx < x1) {
            out.image.at(0, y, x) = level;
          }
        }
      }
      break;
    }
    case HardCase::glare_patch: {
      // Saturating elliptical glare centred near the horizon.
      const double gx = w * rng.uniform(0.25, 0.75);
      const double gy = cam.horizon + (h - cam.horizon) * rng.uniform(0.0, 0.3);
      const double rx = w * rng.uniform(0.25, 0.4);
      const double ry = h * rng.uniform(0.35, 0.5);
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          const double dx = (static_cast<double>(x) + 0.5 - gx) / rx;
          const double dy = (static_cast<double>(y) + 0.5 - gy) / ry;
          const double r2 = dx * dx + dy * dy;
          if (r2 < 1.0) {
            const auto weight = static_cast<float>(std::sqrt(1.0 - r2));
            float& px = out.image.at(0, y, x);
            px = std::min(1.0f, px + weight * (1.0f - px) * 1.2f);
          }
        }
      }
      break;
    }
    case HardCase::low_contrast: {
      // Distance haze plus global contrast loss.
      const double visibility = rng.uniform(6.0, 10.0);  // m
      const auto contrast = static_cast<float>(rng.uniform(0.2, 0.35));
      constexpr float kHaze = 0.62f;
      for (std::size_t y = 0; y < height; ++y) {
        const double v = static_cast<double>(y) + 0.5 - cam.horizon;
        double keep = 0.0;
        if (v > 0.0) {
          const double z = params.camera_height * cam.focal / v;
          keep = std::exp(-z / visibility);
        }
        for (std::size_t x = 0; x < width; ++x) {
          float& px = out.image.at(0, y, x);
          const float hazed =
              kHaze + static_cast<float>(keep) * (px - kHaze);
          px = kHaze + contrast * (hazed - kHaze);
        }
      }
      break;
    }
  }

  if (params.noise_sigma > 0.0) {
    for (auto& px : out.image.data()) {
      const double noisy = px + params.noise_sigma * rng.normal();
      px = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
    }
  }

  const double swa = std::clamp(
      curvature_to_swa(params.curvature, vehicle.wheelbase, vehicle.steering_ratio),
      -kMaxSwaDegrees, kMaxSwaDegrees);
  out.swa_label = static_cast<float>(swa);
  return out;
}

void DatasetGenConfig::validate() const {
  if (count == 0) throw ParameterError("generate_dataset: count must be >= 1");
  if (!(hard_case_rate >= 0.0 && hard_case_rate <= 1.0)) {
    throw ParameterError("generate_dataset: hard_case_rate must lie in [0,1]");
  }
  if (bucket_edges.size() < 2) {
    throw ParameterError("generate_dataset: need at least two bucket edges");
  }
  for (std::size_t i = 0; i < bucket_edges.size(); ++i) {
    if (bucket_edges[i] < 0.0 || bucket_edges[i] > kMaxSwaDegrees ||
        (i > 0 && !(bucket_edges[i] > bucket_edges[i - 1]))) {
      throw ParameterError("generate_dataset: bucket edges must be strictly "
                           "ascending within [0, 90]");
    }
  }
  if (bucket_weights.size() + 1 != bucket_edges.size()) {
    throw ParameterError("generate_dataset: need one weight per bucket");
  }
  double total = 0.0;
  for (double wgt : bucket_weights) {
    if (!(wgt >= 0.0)) throw ParameterError("generate_dataset: negative weight");
    total += wgt;
  }
  if (!(total > 0.0)) throw ParameterError("generate_dataset: weights sum to zero");
  if (height == 0 || width == 0) {
    throw ParameterError("generate_dataset: frame dimensions must be positive");
  }
  if (!(noise_sigma >= 0.0)) throw ParameterError("generate_dataset: negative noise");
}

GeneratedDataset generate_dataset(const DatasetGenConfig& cfg) {
  cfg.validate();
  const VehicleConstants vehicle;
  double total = 0.0;
  for (double wgt : cfg.bucket_weights) total += wgt;

  GeneratedDataset out{FrameDataset(cfg.height, cfg.width, LabelKind::swa_degrees), {}};
  out.manifest.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const std::uint64_t frame_seed = derive_seed(cfg.seed, i);
    Rng rng(frame_seed);
    double pick = rng.uniform() * total;
    std::size_t bucket = 0;
    while (bucket + 1 < cfg.bucket_weights.size() && pick >= cfg.bucket_weights[bucket]) {
      pick -= cfg.bucket_weights[bucket];
      ++bucket;
    }
    const double magnitude =
        rng.uniform(cfg.bucket_edges[bucket], cfg.bucket_edges[bucket + 1]);
    const double swa = rng.bernoulli(0.5) ? magnitude : -magnitude;

    SceneParams params;
    params.curvature = swa_to_curvature(swa, vehicle.wheelbase, vehicle.steering_ratio);
    const bool hard = rng.uniform() < cfg.hard_case_rate;
    const std::size_t kind = rng.below(3);
    params.hard_case = hard ? static_cast<HardCase>(1 + kind) : HardCase::none;
    params.lane_width = rng.uniform(3.3, 3.9);
    params.camera_height = rng.uniform(1.35, 1.65);
    params.marking_period = rng.uniform(5.0, 9.0);
    params.noise_sigma = cfg.noise_sigma;

    auto frame = render_scene(params, rng, cfg.height, cfg.width, vehicle);
    out.frames.add(frame.image, frame.swa_label);
    out.manifest.push_back(
        {i, params.curvature, frame.swa_label, params.hard_case, frame_seed});
  }
  return out;
}

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path) {
  return std::filesystem::path(dataset_path.string() + ".manifest.jsonl");
}

void write_generated(const GeneratedDataset& data,
                     const std::filesystem::path& path) {
  save_dataset(data.frames, path);
  std::string lines;
  for (const auto& e : data.manifest) {
    nlohmann::ordered_json j;
    j["index"] = e.index;
    j["curvature"] = e.curvature;
    j["swa"] = e.swa;
    j["hard_case"] = to_string(e.hard_case);
    j["seed"] = e.seed;
    lines += j.dump();
    lines += '\n';
  }
  write_text_file(manifest_path(path), lines);
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("index").get<std::size_t>(),
                     j.at("curvature").get<double>(), j.at("swa").get<float>(),
                     hard_case_from_string(j.at("hard_case").get<std::string>()),
                     j.at("seed").get<std::uint64_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest " + path.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace failcast
