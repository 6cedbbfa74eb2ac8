#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "failcast/dataset.hpp"
#include "failcast/rng.hpp"
#include "failcast/tensor.hpp"

namespace failcast {

struct ConvLayerSpec {
  std::size_t out_channels = 0;
  std::size_t kernel_size = 0;
  std::size_t stride = 1;
  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

// Architecture of the steering regressor: a valid-padding conv stack with
// ReLU after every layer, flattened into fully connected ReLU layers with
// dropout, followed by a linear scalar head.
struct NetworkSpec {
  std::size_t input_height = 0;
  std::size_t input_width = 0;
  std::vector<ConvLayerSpec> conv_layers;
  std::vector<std::size_t> fc_layers;  // hidden widths, before the head
  float dropout_rate = 0.5f;
  std::size_t output_dim = 1;

  // Throws SpecError naming the first failing layer.
  void validate() const;
  // [C,H,W] of each conv layer's output, shallow to deep. Requires validate().
  std::vector<Shape> conv_output_shapes() const;
  std::size_t flatten_size() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const nlohmann::json& j);

// 102x364 grayscale input, five conv layers (24,36,48 at 5x5/2; 64,64 at
// 3x3/1), FC 100-50-10, dropout 0.5, scalar output.
NetworkSpec preset_paper();
// 34x96 input, conv (8,5,2),(12,5,2),(16,3,1), FC 32-16, dropout 0.5.
NetworkSpec preset_tiny();
// "paper" or "tiny"; throws SpecError otherwise.
NetworkSpec preset(const std::string& name);

struct Model {
  NetworkSpec spec;
  std::vector<Tensor> conv_weights;  // [C_out, C_in, k, k]
  std::vector<Tensor> conv_biases;   // [C_out]
  std::vector<Tensor> fc_weights;    // hidden layers, then the head [1, N]
  std::vector<Tensor> fc_biases;
  nlohmann::json metadata = nlohmann::json::object();

  // Parameter tensors in checkpoint order: each conv layer's kernels then
  // bias (shallow to deep), then each FC layer's weights then bias.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t conv_parameter_count() const { return 2 * conv_weights.size(); }
};

// Fan-in scaled uniform init, U(-sqrt(6/fan_in), +sqrt(6/fan_in)); zero biases.
Model init_model(const NetworkSpec& spec, Rng& rng);

struct ForwardResult {
  float prediction = 0.0f;
  std::vector<Tensor> activations;  // post-ReLU conv outputs, shallow to deep
};

// Image must be [1, input_height, input_width]. In inference mode (training
// == false) dropout is bypassed and rng is never touched.
ForwardResult forward(const Model& model, const Tensor& image, bool training,
                      Rng& rng);
float predict(const Model& model, const Tensor& image);
std::vector<float> predict_batch(const Model& model,
                                 std::span<const Tensor> images);
std::vector<float> predict_dataset(const Model& model,
                                   const FrameDataset& dataset);

struct SampleGradients {
  float prediction = 0.0f;
  std::vector<Tensor> grads;  // same order as Model::parameters()
};

// Gradients of upstream * prediction with respect to every parameter.
SampleGradients sample_gradients(const Model& model, const Tensor& image,
                                 float upstream, bool training, Rng& rng);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  float learning_rate = 1e-5f;
  std::uint64_t seed = 0;
  bool shuffle = true;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  bool freeze_conv = false;  // keep transferred conv layers fixed

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Missing keys keep the values already in `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct TrainResult {
  Model model;
  std::vector<double> loss_history;  // mean training MSE per epoch
};

// Mini-batch Adam on the MSE between predictions and labels. Each epoch
// visits the samples in a Fisher-Yates order seeded by (seed + epoch); the
// final partial batch is kept. Deterministic in (model, dataset, cfg).
TrainResult train(const Model& model, const FrameDataset& dataset,
                  const TrainConfig& cfg);

// Mean |prediction - label| in inference mode, accumulated in double.
double mean_absolute_error(const Model& model, const FrameDataset& dataset);

}  // namespace failcast
