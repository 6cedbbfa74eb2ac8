#include "failcast/app/config.hpp"

#include "failcast/binary_io.hpp"
#include "failcast/error.hpp"
#include "failcast/scenegen.hpp"
#include "failcast/rng.hpp"

namespace failcast::app {

std::uint64_t stage_seed(std::uint64_t global_seed, Stage stage,
                         std::uint64_t offset) {
  return derive_seed(global_seed, static_cast<std::uint64_t>(stage) + offset);
}

PipelineConfig::PipelineConfig() {
  pilot.epochs = 30;
  pilot.batch_size = 32;
  pilot.learning_rate = 1e-3f;
  failcast = failure_predictor_defaults();
}

NetworkSpec PipelineConfig::network_spec() const {
  return network ? *network : failcast::preset(preset);
}

std::vector<InputKind> PipelineConfig::input_kinds() const {
  if (input_kind == "both") return {InputKind::saliency_map, InputKind::camera_image};
  return {input_kind_from_string(input_kind)};
}

void PipelineConfig::validate() const {
  network_spec().validate();
  if (input_kind != "both") {
    try {
      input_kind_from_string(input_kind);
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
  }
  if (data.train_count == 0 || data.val_count == 0 || data.test_count == 0) {
    throw ConfigError("data: train_count, val_count and test_count must be >= 1");
  }
  DatasetGenConfig probe;
  probe.bucket_edges = buckets.edges;
  probe.bucket_weights = data.bucket_weights;
  probe.hard_case_rate = data.hard_case_rate;
  probe.noise_sigma = data.noise_sigma;
  try {
    probe.validate();
    buckets.validate();
    pilot.validate();
    failcast.validate();
    weakness.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  if (!(threshold > 0.0) || (alarm_threshold && !(*alarm_threshold > 0.0))) {
    throw ConfigError("eval: thresholds must be positive");
  }
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

std::filesystem::path PipelineConfig::resolve(const std::filesystem::path& p,
                                              const std::string& default_name) const {
  if (p.empty()) return out_dir / default_name;
  if (p.is_absolute()) return p;
  return out_dir / p;
}

std::filesystem::path PipelineConfig::train_data_path() const {
  return resolve(train_data, "train.sfds");
}
std::filesystem::path PipelineConfig::val_data_path() const {
  return resolve(val_data, "val.sfds");
}
std::filesystem::path PipelineConfig::test_data_path() const {
  return resolve(test_data, "test.sfds");
}
std::filesystem::path PipelineConfig::pilot_path() const {
  return resolve(pilot_checkpoint, "pilot.sfck");
}
std::filesystem::path PipelineConfig::map_model_path() const {
  return map_checkpoint.empty() ? pilot_path() : resolve(map_checkpoint, "");
}
std::filesystem::path PipelineConfig::error_model_path() const {
  return error_checkpoint.empty() ? pilot_path() : resolve(error_checkpoint, "");
}
std::filesystem::path PipelineConfig::failcast_init_path() const {
  return failcast_init_checkpoint.empty() ? pilot_path()
                                          : resolve(failcast_init_checkpoint, "");
}
std::filesystem::path PipelineConfig::failure_trainset_path(InputKind kind) const {
  return out_dir / ("failure_train_" + to_string(kind) + ".sfds");
}
std::filesystem::path PipelineConfig::predictor_path(InputKind kind) const {
  const auto& override_path =
      kind == InputKind::saliency_map ? saliency_predictor : image_predictor;
  return resolve(override_path, "failcast_" + to_string(kind) + ".sfck");
}

namespace {

nlohmann::ordered_json train_echo(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["shuffle"] = c.shuffle;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["freeze_conv"] = c.freeze_conv;
  return j;
}

}  // namespace

nlohmann::ordered_json PipelineConfig::echo() const {
  nlohmann::ordered_json j;
  j["network"] = nlohmann::ordered_json::parse(to_json(network_spec()).dump());
  j["seed"] = seed;
  j["data"] = {{"train_count", data.train_count},
               {"val_count", data.val_count},
               {"test_count", data.test_count},
               {"hard_case_rate", data.hard_case_rate},
               {"bucket_weights", data.bucket_weights},
               {"noise_sigma", data.noise_sigma}};
  j["pilot"] = train_echo(pilot);
  j["weakness"] = {{"epoch_fraction", weakness.epoch_fraction},
                   {"data_fraction", weakness.data_fraction}};
  j["failcast"] = train_echo(failcast);
  j["input_kind"] = input_kind;
  j["eval"] = {{"bucket_edges", buckets.edges},
               {"threshold", threshold},
               {"alarm_threshold", alarm_threshold.value_or(threshold)}};
  return j;
}

namespace {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_path(const nlohmann::json& j, const char* key,
               std::filesystem::path& out) {
  if (j.contains(key)) out = j.at(key).get<std::string>();
}

// Typos in a config or a --set key should fail loudly, not fall back to a
// default silently.
void check_keys(const nlohmann::json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw ConfigError("unknown config key '" + where + item.key() + "'");
  }
}

void check_train_keys(const nlohmann::json& j, const std::string& where) {
  check_keys(j, where, {"epochs", "batch_size", "learning_rate", "shuffle",
                        "beta1", "beta2", "eps", "freeze_conv"});
}

}  // namespace

PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    check_keys(j, "", {"preset", "network", "seed", "out_dir", "data", "pilot",
                       "weakness", "failcast", "input_kind", "eval", "saliency",
                       "paths"});
    if (j.contains("data")) {
      check_keys(j.at("data"), "data.",
                 {"train_count", "val_count", "test_count", "hard_case_rate",
                  "bucket_weights", "noise_sigma"});
    }
    if (j.contains("pilot")) check_train_keys(j.at("pilot"), "pilot.");
    if (j.contains("failcast")) check_train_keys(j.at("failcast"), "failcast.");
    if (j.contains("weakness")) {
      check_keys(j.at("weakness"), "weakness.", {"epoch_fraction", "data_fraction"});
    }
    if (j.contains("eval")) {
      check_keys(j.at("eval"), "eval.",
                 {"bucket_edges", "threshold", "alarm_threshold", "permutations",
                  "saliency_predictor", "image_predictor"});
    }
    if (j.contains("saliency")) check_keys(j.at("saliency"), "saliency.", {"pgm_dump"});
    if (j.contains("paths")) {
      check_keys(j.at("paths"), "paths.",
                 {"train_data", "val_data", "test_data", "pilot_checkpoint",
                  "map_checkpoint", "error_checkpoint", "failcast_init_checkpoint"});
    }
    read(j, "preset", c.preset);
    if (j.contains("network")) c.network = network_spec_from_json(j.at("network"));
    read(j, "seed", c.seed);
    read_path(j, "out_dir", c.out_dir);
    if (j.contains("data")) {
      const auto& d = j.at("data");
      read(d, "train_count", c.data.train_count);
      read(d, "val_count", c.data.val_count);
      read(d, "test_count", c.data.test_count);
      read(d, "hard_case_rate", c.data.hard_case_rate);
      read(d, "bucket_weights", c.data.bucket_weights);
      read(d, "noise_sigma", c.data.noise_sigma);
    }
    if (j.contains("pilot")) c.pilot = train_config_from_json(j.at("pilot"), c.pilot);
    if (j.contains("weakness")) {
      read(j.at("weakness"), "epoch_fraction", c.weakness.epoch_fraction);
      read(j.at("weakness"), "data_fraction", c.weakness.data_fraction);
    }
    if (j.contains("failcast")) {
      c.failcast = train_config_from_json(j.at("failcast"), c.failcast);
    }
    read(j, "input_kind", c.input_kind);
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      read(e, "bucket_edges", c.buckets.edges);
      read(e, "threshold", c.threshold);
      if (e.contains("alarm_threshold") && !e.at("alarm_threshold").is_null()) {
        c.alarm_threshold = e.at("alarm_threshold").get<double>();
      }
      read(e, "permutations", c.permutations);
      read_path(e, "saliency_predictor", c.saliency_predictor);
      read_path(e, "image_predictor", c.image_predictor);
    }
    if (j.contains("saliency")) read(j.at("saliency"), "pgm_dump", c.pgm_dump);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      read_path(p, "train_data", c.train_data);
      read_path(p, "val_data", c.val_data);
      read_path(p, "test_data", c.test_data);
      read_path(p, "pilot_checkpoint", c.pilot_checkpoint);
      read_path(p, "map_checkpoint", c.map_checkpoint);
      read_path(p, "error_checkpoint", c.error_checkpoint);
      read_path(p, "failcast_init_checkpoint", c.failcast_init_checkpoint);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("--set: empty key segment in '" + key + "'");
    if (!node->is_object()) {
      throw ConfigError("--set: '" + key + "' descends into a non-object");
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = nlohmann::json::object();
    start = dot + 1;
  }
}

PipelineConfig load_config(const std::optional<std::filesystem::path>& path,
                           const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (path) {
    std::vector<char> bytes;
    try {
      bytes = read_file(*path);
    } catch (const IoError&) {
      throw ConfigError("cannot read config file " + path->string());
    }
    try {
      doc = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + path->string() + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  auto cfg = config_from_json(doc);
  cfg.validate();
  return cfg;
}

}  // namespace failcast::app
