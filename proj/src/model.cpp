#include "failcast/model.hpp"

#include <cmath>
#include <numeric>

#include "failcast/error.hpp"
#include "failcast/layers.hpp"
#include "failcast/optim.hpp"

namespace failcast {

void NetworkSpec::validate() const {
  if (input_height == 0 || input_width == 0) {
    throw SpecError("spec: input dimensions must be positive");
  }
  if (conv_layers.empty()) throw SpecError("spec: at least one conv layer required");
  std::size_t h = input_height;
  std::size_t w = input_width;
  for (std::size_t i = 0; i < conv_layers.size(); ++i) {
    const auto& c = conv_layers[i];
    const std::string name = "conv layer " + std::to_string(i);
    if (c.out_channels == 0 || c.kernel_size == 0 || c.stride == 0) {
      throw SpecError("spec: " + name +
                      " needs positive out_channels, kernel_size and stride");
    }
    const auto oh = conv_output_extent(h, c.kernel_size, c.stride);
    const auto ow = conv_output_extent(w, c.kernel_size, c.stride);
    if (oh == 0 || ow == 0) {
      throw SpecError("spec: " + name + " kernel " +
                      std::to_string(c.kernel_size) + " does not fit its " +
                      std::to_string(h) + "x" + std::to_string(w) + " input");
    }
    h = oh;
    w = ow;
  }
  if (fc_layers.empty()) throw SpecError("spec: fc_layers must be non-empty");
  for (std::size_t i = 0; i < fc_layers.size(); ++i) {
    if (fc_layers[i] == 0) {
      throw SpecError("spec: fc layer " + std::to_string(i) + " has zero width");
    }
  }
  if (!(dropout_rate >= 0.0f && dropout_rate < 1.0f)) {
    throw SpecError("spec: dropout_rate must lie in [0,1)");
  }
  if (output_dim != 1) throw SpecError("spec: output_dim must be 1");
}

std::vector<Shape> NetworkSpec::conv_output_shapes() const {
  std::vector<Shape> shapes;
  std::size_t h = input_height;
  std::size_t w = input_width;
  for (const auto& c : conv_layers) {
    h = conv_output_extent(h, c.kernel_size, c.stride);
    w = conv_output_extent(w, c.kernel_size, c.stride);
    shapes.push_back({c.out_channels, h, w});
  }
  return shapes;
}

std::size_t NetworkSpec::flatten_size() const {
  return shape_size(conv_output_shapes().back());
}

nlohmann::json to_json(const NetworkSpec& spec) {
  nlohmann::json conv = nlohmann::json::array();
  for (const auto& c : spec.conv_layers) {
    conv.push_back({{"out_channels", c.out_channels},
                    {"kernel_size", c.kernel_size},
                    {"stride", c.stride}});
  }
  return {{"input_height", spec.input_height},
          {"input_width", spec.input_width},
          {"conv_layers", conv},
          {"fc_layers", spec.fc_layers},
          {"dropout_rate", spec.dropout_rate},
          {"output_dim", spec.output_dim}};
}

NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  try {
    NetworkSpec spec;
    spec.input_height = j.at("input_height").get<std::size_t>();
    spec.input_width = j.at("input_width").get<std::size_t>();
    for (const auto& c : j.at("conv_layers")) {
      spec.conv_layers.push_back({c.at("out_channels").get<std::size_t>(),
                                  c.at("kernel_size").get<std::size_t>(),
                                  c.at("stride").get<std::size_t>()});
    }
    spec.fc_layers = j.at("fc_layers").get<std::vector<std::size_t>>();
    spec.dropout_rate = j.value("dropout_rate", 0.5f);
    spec.output_dim = j.value("output_dim", std::size_t{1});
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("spec: malformed network description: ") + e.what());
  }
}

NetworkSpec preset_paper() {
  NetworkSpec s;
  s.input_height = 102;
  s.input_width = 364;
  s.conv_layers = {{24, 5, 2}, {36, 5, 2}, {48, 5, 2}, {64, 3, 1}, {64, 3, 1}};
  s.fc_layers = {100, 50, 10};
  s.dropout_rate = 0.5f;
  return s;
}

NetworkSpec preset_tiny() {
  NetworkSpec s;
  s.input_height = 34;
  s.input_width = 96;
  s.conv_layers = {{8, 5, 2}, {12, 5, 2}, {16, 3, 1}};
  s.fc_layers = {32, 16};
  s.dropout_rate = 0.5f;
  return s;
}

NetworkSpec preset(const std::string& name) {
  if (name == "paper") return preset_paper();
  if (name == "tiny") return preset_tiny();
  throw SpecError("unknown preset '" + name + "' (expected paper or tiny)");
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (std::size_t i = 0; i < conv_weights.size(); ++i) {
    out.push_back(&conv_weights[i]);
    out.push_back(&conv_biases[i]);
  }
  for (std::size_t i = 0; i < fc_weights.size(); ++i) {
    out.push_back(&fc_weights[i]);
    out.push_back(&fc_biases[i]);
  }
  return out;
}

std::vector<const Tensor*> Model::parameters() const {
  auto params = const_cast<Model*>(this)->parameters();
  return {params.begin(), params.end()};
}

namespace {

Tensor uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t(std::move(shape), 0.0f);
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace

Model init_model(const NetworkSpec& spec, Rng& rng) {
  spec.validate();
  Model m;
  m.spec = spec;
  std::size_t in_channels = 1;
  for (const auto& c : spec.conv_layers) {
    const std::size_t fan_in = in_channels * c.kernel_size * c.kernel_size;
    m.conv_weights.push_back(uniform_fan_in(
        {c.out_channels, in_channels, c.kernel_size, c.kernel_size}, fan_in, rng));
    m.conv_biases.emplace_back(Shape{c.out_channels}, 0.0f);
    in_channels = c.out_channels;
  }
  std::size_t n_in = spec.flatten_size();
  std::vector<std::size_t> widths = spec.fc_layers;
  widths.push_back(spec.output_dim);
  for (auto n_out : widths) {
    m.fc_weights.push_back(uniform_fan_in({n_out, n_in}, n_in, rng));
    m.fc_biases.emplace_back(Shape{n_out}, 0.0f);
    n_in = n_out;
  }
  return m;
}

namespace {

// Intermediate values kept for the backward pass.
struct Trace {
  std::vector<Tensor> conv_inputs;  // input of each conv layer
  std::vector<Tensor> conv_pre;     // pre-ReLU conv outputs
  std::vector<Tensor> conv_post;    // post-ReLU conv outputs
  std::vector<Tensor> fc_inputs;    // input of each FC layer (incl. head)
  std::vector<Tensor> fc_pre;       // pre-ReLU hidden FC outputs
  std::vector<Tensor> masks;        // dropout masks of hidden FC layers
  float prediction = 0.0f;
};

void check_image(const Model& model, const Tensor& image) {
  const Shape expected{1, model.spec.input_height, model.spec.input_width};
  if (image.shape() != expected) {
    throw DimensionError("model: image shape " + shape_string(image.shape()) +
                         " does not match expected " + shape_string(expected));
  }
}

Trace run_forward(const Model& model, const Tensor& image, bool training,
                  Rng& rng) {
  check_image(model, image);
  Trace t;
  Tensor x = image;
  for (std::size_t l = 0; l < model.conv_weights.size(); ++l) {
    Tensor pre = conv2d_forward(x, model.conv_weights[l], model.conv_biases[l],
                                model.spec.conv_layers[l].stride);
    Tensor post = relu(pre);
    t.conv_inputs.push_back(std::move(x));
    t.conv_pre.push_back(std::move(pre));
    t.conv_post.push_back(post);
    x = std::move(post);
  }
  x = x.reshaped({x.size()});
  const std::size_t hidden = model.fc_weights.size() - 1;
  for (std::size_t l = 0; l < hidden; ++l) {
    Tensor pre = fc_forward(x, model.fc_weights[l], model.fc_biases[l]);
    auto dropped = dropout(relu(pre), model.spec.dropout_rate, rng, training);
    t.fc_inputs.push_back(std::move(x));
    t.fc_pre.push_back(std::move(pre));
    t.masks.push_back(std::move(dropped.mask));
    x = std::move(dropped.output);
  }
  const Tensor out = fc_forward(x, model.fc_weights[hidden], model.fc_biases[hidden]);
  t.fc_inputs.push_back(std::move(x));
  t.prediction = out[0];
  return t;
}

void add_into(Tensor& acc, const Tensor& g) {
  auto a = acc.data();
  const auto b = g.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

// Adds d(upstream * prediction)/d(param) into grads (Model::parameters order).
void backprop_into(const Model& model, const Trace& t, float upstream,
                   std::vector<Tensor>& grads) {
  const std::size_t n_conv = model.conv_weights.size();
  const std::size_t hidden = model.fc_weights.size() - 1;
  const std::size_t fc_base = 2 * n_conv;

  Tensor g({1}, upstream);
  {
    auto fg = fc_backward(t.fc_inputs[hidden], model.fc_weights[hidden], g);
    add_into(grads[fc_base + 2 * hidden], fg.weights);
    add_into(grads[fc_base + 2 * hidden + 1], fg.bias);
    g = std::move(fg.input);
  }
  for (std::size_t l = hidden; l-- > 0;) {
    g = dropout_backward(t.masks[l], model.spec.dropout_rate, g);
    g = relu_backward(t.fc_pre[l], g);
    auto fg = fc_backward(t.fc_inputs[l], model.fc_weights[l], g);
    add_into(grads[fc_base + 2 * l], fg.weights);
    add_into(grads[fc_base + 2 * l + 1], fg.bias);
    g = std::move(fg.input);
  }
  g = g.reshaped(t.conv_post.back().shape());
  for (std::size_t l = n_conv; l-- > 0;) {
    g = relu_backward(t.conv_pre[l], g);
    auto cg = conv2d_backward(t.conv_inputs[l], model.conv_weights[l],
                              model.spec.conv_layers[l].stride, g, l > 0);
    add_into(grads[2 * l], cg.kernels);
    add_into(grads[2 * l + 1], cg.bias);
    g = std::move(cg.input);
  }
}

std::vector<Tensor> zero_grads(const Model& model) {
  std::vector<Tensor> grads;
  for (const auto* p : model.parameters()) grads.emplace_back(p->shape(), 0.0f);
  return grads;
}

}  // namespace

ForwardResult forward(const Model& model, const Tensor& image, bool training,
                      Rng& rng) {
  auto t = run_forward(model, image, training, rng);
  return {t.prediction, std::move(t.conv_post)};
}

float predict(const Model& model, const Tensor& image) {
  Rng unused(0);
  return run_forward(model, image, false, unused).prediction;
}

std::vector<float> predict_batch(const Model& model,
                                 std::span<const Tensor> images) {
  std::vector<float> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(predict(model, img));
  return out;
}

std::vector<float> predict_dataset(const Model& model,
                                   const FrameDataset& dataset) {
  std::vector<float> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out.push_back(predict(model, dataset.frame(i)));
  }
  return out;
}

SampleGradients sample_gradients(const Model& model, const Tensor& image,
                                 float upstream, bool training, Rng& rng) {
  const Trace t = run_forward(model, image, training, rng);
  SampleGradients out{t.prediction, zero_grads(model)};
  backprop_into(model, t, upstream, out.grads);
  return out;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ParameterError("train: batch_size must be positive");
  if (!(learning_rate > 0.0f)) {
    throw ParameterError("train: learning_rate must be positive");
  }
  if (!(beta1 >= 0.0f && beta1 < 1.0f && beta2 >= 0.0f && beta2 < 1.0f &&
        eps > 0.0f)) {
    throw ParameterError("train: require 0 <= beta1, beta2 < 1 and eps > 0");
  }
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},         {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate}, {"seed", cfg.seed},
          {"shuffle", cfg.shuffle},       {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},           {"eps", cfg.eps},
          {"freeze_conv", cfg.freeze_conv}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
  try {
    base.epochs = j.value("epochs", base.epochs);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.seed = j.value("seed", base.seed);
    base.shuffle = j.value("shuffle", base.shuffle);
    base.beta1 = j.value("beta1", base.beta1);
    base.beta2 = j.value("beta2", base.beta2);
    base.eps = j.value("eps", base.eps);
    base.freeze_conv = j.value("freeze_conv", base.freeze_conv);
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("train config: ") + e.what());
  }
  return base;
}

namespace {
constexpr std::uint64_t kDropoutStream = 0x64726f70;  // "drop"
}

TrainResult train(const Model& model, const FrameDataset& dataset,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw DataError("train: dataset is empty");
  if (dataset.height() != model.spec.input_height ||
      dataset.width() != model.spec.input_width) {
    throw DimensionError("train: dataset frames are " +
                         std::to_string(dataset.height()) + "x" +
                         std::to_string(dataset.width()) + " but the model expects " +
                         std::to_string(model.spec.input_height) + "x" +
                         std::to_string(model.spec.input_width));
  }
  TrainResult result{model, {}};
  if (cfg.epochs == 0) return result;

  Model& m = result.model;
  auto params = m.parameters();
  std::vector<AdamState> states;
  for (const auto* p : params) states.push_back(AdamState::for_param(*p));
  const AdamHyper hyper{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps};
  const std::size_t first_trainable = cfg.freeze_conv ? m.conv_parameter_count() : 0;

  Rng dropout_rng(derive_seed(cfg.seed, kDropoutStream));
  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) {
      Rng shuffle_rng(cfg.seed + epoch);
      for (std::size_t i = n - 1; i > 0; --i) {
        std::swap(order[i], order[shuffle_rng.below(i + 1)]);
      }
    }
    double epoch_sq = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const auto batch = static_cast<double>(end - start);
      auto grads = zero_grads(m);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const Trace t = run_forward(m, dataset.frame(idx), true, dropout_rng);
        // Per-sample share of the batch MSE gradient, 2 (p - y) / B.
        const double diff = static_cast<double>(t.prediction) - dataset.label(idx);
        epoch_sq += diff * diff;
        backprop_into(m, t, static_cast<float>(2.0 * diff / batch), grads);
      }
      for (std::size_t p = first_trainable; p < params.size(); ++p) {
        adam_step(*params[p], grads[p], states[p], hyper);
      }
    }
    result.loss_history.push_back(epoch_sq / static_cast<double>(n));
  }
  auto& meta = m.metadata["train"];
  meta = to_json(cfg);
  meta["samples"] = n;
  meta["final_loss"] = result.loss_history.back();
  return result;
}

double mean_absolute_error(const Model& model, const FrameDataset& dataset) {
  if (dataset.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    sum += std::abs(static_cast<double>(predict(model, dataset.frame(i))) -
                    dataset.label(i));
  }
  return sum / static_cast<double>(dataset.size());
}

}  // namespace failcast
