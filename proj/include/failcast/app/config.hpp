#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "failcast/eval.hpp"
#include "failcast/failure.hpp"
#include "failcast/model.hpp"

namespace failcast::app {

// Seed streams of the pipeline stages; each stage uses
// derive_seed(global_seed, stage).
enum class Stage : std::uint64_t {
  train_data = 1,
  val_data = 2,
  test_data = 3,
  pilot_init = 4,
  pilot_train = 5,
  failcast_head_init = 6,
  failcast_train = 7,  // + 0 for saliency_map, + 1 for camera_image
  eval_permutation = 9,
};

std::uint64_t stage_seed(std::uint64_t global_seed, Stage stage,
                         std::uint64_t offset = 0);

struct DataSection {
  std::size_t train_count = 2000;
  std::size_t val_count = 500;
  std::size_t test_count = 500;
  double hard_case_rate = 0.2;
  std::vector<double> bucket_weights{1.0, 1.0, 1.0};
  double noise_sigma = 0.02;
};

// One flat JSON document with a section per stage. Relative paths resolve
// against out_dir.
struct PipelineConfig {
  std::string preset = "tiny";
  std::optional<NetworkSpec> network;  // overrides preset when present
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "failcast_run";
  DataSection data;
  TrainConfig pilot;
  WeaknessConfig weakness;
  TrainConfig failcast;
  std::string input_kind = "both";  // saliency_map, camera_image or both
  BucketSpec buckets;
  double threshold = kUnsafeThresholdDegrees;
  std::optional<double> alarm_threshold;
  std::size_t permutations = 1000;
  std::size_t pgm_dump = 0;

  // Optional file overrides; empty means the default name under out_dir.
  std::filesystem::path train_data, val_data, test_data;
  std::filesystem::path pilot_checkpoint;
  std::filesystem::path map_checkpoint;    // saliency source, default pilot
  std::filesystem::path error_checkpoint;  // error source, default pilot
  std::filesystem::path failcast_init_checkpoint;  // conv donor, default pilot
  std::filesystem::path saliency_predictor, image_predictor;

  PipelineConfig();

  NetworkSpec network_spec() const;
  std::vector<InputKind> input_kinds() const;

  // Throws ConfigError / SpecError / ParameterError.
  void validate() const;

  std::filesystem::path resolve(const std::filesystem::path& p,
                                const std::string& default_name) const;
  std::filesystem::path train_data_path() const;
  std::filesystem::path val_data_path() const;
  std::filesystem::path test_data_path() const;
  std::filesystem::path pilot_path() const;
  std::filesystem::path map_model_path() const;
  std::filesystem::path error_model_path() const;
  std::filesystem::path failcast_init_path() const;
  std::filesystem::path failure_trainset_path(InputKind kind) const;
  std::filesystem::path predictor_path(InputKind kind) const;

  // Settings that determine results (no paths), echoed into reports.
  nlohmann::ordered_json echo() const;
};

PipelineConfig config_from_json(const nlohmann::json& j);

// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
// possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Reads the file (when given), applies overrides in order, parses.
PipelineConfig load_config(const std::optional<std::filesystem::path>& path,
                           const std::vector<std::string>& overrides);

}  // namespace failcast::app
