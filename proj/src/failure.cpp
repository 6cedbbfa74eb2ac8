#include "failcast/failure.hpp"

#include <cmath>

#include "failcast/binary_io.hpp"
#include "failcast/checkpoint.hpp"
#include "failcast/error.hpp"
#include "failcast/saliency.hpp"

namespace failcast {

std::string to_string(InputKind kind) {
  return kind == InputKind::saliency_map ? "saliency_map" : "camera_image";
}

InputKind input_kind_from_string(const std::string& name) {
  if (name == "saliency_map") return InputKind::saliency_map;
  if (name == "camera_image") return InputKind::camera_image;
  throw ParameterError("unknown input kind '" + name +
                       "' (expected saliency_map or camera_image)");
}

void WeaknessConfig::validate() const {
  if (!(epoch_fraction > 0.0 && epoch_fraction <= 1.0) ||
      !(data_fraction > 0.0 && data_fraction <= 1.0)) {
    throw ParameterError("weakness: epoch_fraction and data_fraction must lie in (0,1]");
  }
}

std::size_t WeaknessConfig::epochs(std::size_t full) const {
  return static_cast<std::size_t>(std::ceil(epoch_fraction * static_cast<double>(full)));
}

std::size_t WeaknessConfig::samples(std::size_t full) const {
  return static_cast<std::size_t>(std::ceil(data_fraction * static_cast<double>(full)));
}

nlohmann::json to_json(const WeaknessConfig& w) {
  return {{"epoch_fraction", w.epoch_fraction}, {"data_fraction", w.data_fraction}};
}

TrainResult train_weak_teacher(const NetworkSpec& spec, const FrameDataset& dataset,
                         const TrainConfig& cfg, const WeaknessConfig& weakness,
                         Rng& init_rng) {
  weakness.validate();
  TrainConfig weak = cfg;
  weak.epochs = weakness.epochs(cfg.epochs);
  const Model init = init_model(spec, init_rng);
  auto result = train(init, dataset.head(weakness.samples(dataset.size())), weak);
  result.model.metadata["weakness"] = to_json(weakness);
  return result;
}

nlohmann::json FailureTrainset::provenance() const {
  nlohmann::json j = {{"input_kind", to_string(input_kind)},
                      {"map_model_digest", map_model_digest},
                      {"error_model_digest", error_model_digest},
                      {"source_dataset_digest", source_dataset_digest},
                      {"records", data.size()}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

FailureTrainset build_failure_trainset(const Model& map_model,
                                       const Model& error_model,
                                       const FrameDataset& dataset,
                                       InputKind input_kind) {
  if (dataset.label_kind() != LabelKind::swa_degrees) {
    throw DataError("build_failure_trainset: source dataset must carry "
                    "swa_degrees labels, got " + to_string(dataset.label_kind()));
  }
  for (const Model* m : {&map_model, &error_model}) {
    if (dataset.height() != m->spec.input_height ||
        dataset.width() != m->spec.input_width) {
      throw DimensionError("build_failure_trainset: frames are " +
                           std::to_string(dataset.height()) + "x" +
                           std::to_string(dataset.width()) +
                           " but a model expects " +
                           std::to_string(m->spec.input_height) + "x" +
                           std::to_string(m->spec.input_width));
    }
  }
  FailureTrainset ts;
  ts.data = FrameDataset(dataset.height(), dataset.width(),
                         LabelKind::swa_error_degrees);
  ts.input_kind = input_kind;
  ts.map_model_digest = model_digest(map_model);
  ts.error_model_digest = model_digest(error_model);
  ts.source_dataset_digest = dataset_digest(dataset);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Tensor frame = dataset.frame(i);
    const float target = predict(error_model, frame) - dataset.label(i);
    if (input_kind == InputKind::saliency_map) {
      ts.data.add(visual_backprop(map_model, frame).values, target);
    } else {
      ts.data.add(frame, target);
    }
  }
  return ts;
}

FailureTrainset build_failure_trainset(const Model& model,
                                       const FrameDataset& dataset,
                                       InputKind input_kind) {
  return build_failure_trainset(model, model, dataset, input_kind);
}

std::filesystem::path provenance_path(const std::filesystem::path& dataset_path) {
  return std::filesystem::path(dataset_path.string() + ".provenance.json");
}

void save_failure_trainset(const FailureTrainset& trainset,
                           const std::filesystem::path& path) {
  save_dataset(trainset.data, path);
  write_text_file(provenance_path(path), trainset.provenance().dump(2) + "\n");
}

FailureTrainset load_failure_trainset(const std::filesystem::path& path) {
  FailureTrainset ts;
  ts.data = load_dataset(path);
  if (ts.data.label_kind() != LabelKind::swa_error_degrees) {
    throw DataError(path.string() + " does not hold swa_error_degrees labels");
  }
  const auto bytes = read_file(provenance_path(path));
  try {
    auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    ts.input_kind = input_kind_from_string(j.at("input_kind").get<std::string>());
    ts.map_model_digest = j.value("map_model_digest", "");
    ts.error_model_digest = j.value("error_model_digest", "");
    ts.source_dataset_digest = j.value("source_dataset_digest", "");
    for (const char* k : {"input_kind", "map_model_digest", "error_model_digest",
                          "source_dataset_digest", "records"}) {
      j.erase(k);
    }
    ts.extra = j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("provenance for " + path.string() + ": " + e.what());
  }
  return ts;
}

Model transfer_conv_layers(const Model& source, const NetworkSpec& target_spec,
                           Rng& rng) {
  target_spec.validate();
  const auto& a = source.spec.conv_layers;
  const auto& b = target_spec.conv_layers;
  const std::size_t n = std::max(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= a.size() || i >= b.size() || !(a[i] == b[i])) {
      throw SpecError("transfer_conv_layers: conv layer " + std::to_string(i) +
                      " differs between source and target spec");
    }
  }
  Model out = init_model(target_spec, rng);
  out.conv_weights = source.conv_weights;
  out.conv_biases = source.conv_biases;
  out.metadata["transferred_from"] = model_digest(source);
  return out;
}

TrainConfig failure_predictor_defaults() {
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 128;
  cfg.learning_rate = 1e-5f;
  return cfg;
}

Model train_failure_predictor(const FailureTrainset& trainset, const Model& init,
                              const TrainConfig& cfg) {
  if (trainset.data.label_kind() != LabelKind::swa_error_degrees) {
    throw DataError("train_failure_predictor: trainset labels must be "
                    "swa_error_degrees");
  }
  if (cfg.epochs == 0) return init;
  Model out = train(init, trainset.data, cfg).model;
  out.metadata["input_kind"] = to_string(trainset.input_kind);
  out.metadata["trainset"] = trainset.provenance();
  return out;
}

InputKind predictor_input_kind(const Model& predictor) {
  const auto it = predictor.metadata.find("input_kind");
  if (it == predictor.metadata.end() || !it->is_string()) {
    return InputKind::saliency_map;
  }
  return input_kind_from_string(it->get<std::string>());
}

float predict_failure(const Model& predictor, const Model& main_model,
                      const Tensor& frame) {
  if (predictor_input_kind(predictor) == InputKind::camera_image) {
    return predict(predictor, frame);
  }
  return predict(predictor, visual_backprop(main_model, frame).values);
}

}  // namespace failcast
