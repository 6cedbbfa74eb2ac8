#pragma once

// Failure prediction: a weakly trained steering model supplies both the
// saliency maps and the per-frame steering errors; a student network with
// the same architecture learns to predict those errors from the maps.

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "failcast/dataset.hpp"
#include "failcast/model.hpp"
#include "failcast/rng.hpp"

namespace failcast {

enum class InputKind : std::uint8_t { saliency_map, camera_image };

std::string to_string(InputKind kind);
InputKind input_kind_from_string(const std::string& name);

struct WeaknessConfig {
  double epoch_fraction = 0.2;
  double data_fraction = 1.0;

  void validate() const;
  // ceil(epoch_fraction * epochs), ceil(data_fraction * samples)
  std::size_t epochs(std::size_t full) const;
  std::size_t samples(std::size_t full) const;
};

nlohmann::json to_json(const WeaknessConfig& w);

// Trains on the first ceil(data_fraction N) frames for
// ceil(epoch_fraction epochs) epochs, starting from init_model(spec, init_rng).
// The weakness settings are recorded in the model metadata.
TrainResult train_weak_teacher(const NetworkSpec& spec, const FrameDataset& dataset,
                         const TrainConfig& cfg, const WeaknessConfig& weakness,
                         Rng& init_rng);

struct FailureTrainset {
  FrameDataset data;  // label_kind == swa_error_degrees
  InputKind input_kind = InputKind::saliency_map;
  std::string map_model_digest;
  std::string error_model_digest;
  std::string source_dataset_digest;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json provenance() const;
};

// target_i = predict(error_model, frame_i) - label_i, in float. Inputs are
// VisualBackProp maps of map_model (saliency_map) or the raw frames
// (camera_image).
FailureTrainset build_failure_trainset(const Model& map_model,
                                       const Model& error_model,
                                       const FrameDataset& dataset,
                                       InputKind input_kind);
FailureTrainset build_failure_trainset(const Model& model,
                                       const FrameDataset& dataset,
                                       InputKind input_kind);

// Writes the SFDS file and `path` + ".provenance.json".
void save_failure_trainset(const FailureTrainset& trainset,
                           const std::filesystem::path& path);
std::filesystem::path provenance_path(const std::filesystem::path& dataset_path);
FailureTrainset load_failure_trainset(const std::filesystem::path& path);

// Copies the conv stack of source bit-exactly into a fresh model of
// target_spec whose FC layers are initialised from rng. Conv geometry must
// match (SpecError naming the first differing layer otherwise).
Model transfer_conv_layers(const Model& source, const NetworkSpec& target_spec,
                           Rng& rng);

// 30 epochs, batch 128, Adam with learning rate 1e-5.
TrainConfig failure_predictor_defaults();

// Fits init to the signed error targets. The input kind is recorded in the
// returned model's metadata so that predict_failure can reproduce it.
Model train_failure_predictor(const FailureTrainset& trainset, const Model& init,
                              const TrainConfig& cfg);

InputKind predictor_input_kind(const Model& predictor);

// Signed predicted steering error (degrees) of main_model on frame.
float predict_failure(const Model& predictor, const Model& main_model,
                      const Tensor& frame);

}  // namespace failcast
