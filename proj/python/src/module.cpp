// Thin numpy-facing wrapper over the C++ core. Structured values (specs,
// metadata, reports, configs) cross the boundary as JSON text; the Python
// package turns them into dicts.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "failcast/app/commands.hpp"
#include "failcast/app/config.hpp"
#include "failcast/checkpoint.hpp"
#include "failcast/dataset.hpp"
#include "failcast/error.hpp"
#include "failcast/eval.hpp"
#include "failcast/failure.hpp"
#include "failcast/gradcheck.hpp"
#include "failcast/model.hpp"
#include "failcast/rng.hpp"
#include "failcast/saliency.hpp"
#include "failcast/scenegen.hpp"

namespace py = pybind11;
using namespace failcast;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// [H,W] or [1,H,W] -> [1,H,W] tensor.
Tensor image_from(const FloatArray& a) {
  if (a.ndim() == 2) {
    Shape s{1, static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))};
    return Tensor(s, std::vector<float>(a.data(), a.data() + a.size()));
  }
  if (a.ndim() == 3 && a.shape(0) == 1) {
    Shape s{1, static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(2))};
    return Tensor(s, std::vector<float>(a.data(), a.data() + a.size()));
  }
  throw DimensionError("image must be [H,W] or [1,H,W]");
}

py::array_t<float> image_to(const Tensor& t) {
  py::array_t<float> out({t.dim(1), t.dim(2)});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<float> vec_from(const FloatArray& a) {
  if (a.ndim() != 1) throw DimensionError("expected a 1-D array");
  return std::vector<float>(a.data(), a.data() + a.size());
}

py::array_t<float> vec_to(const std::vector<float>& v) {
  py::array_t<float> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

FrameDataset dataset_from(const FloatArray& frames, const FloatArray& labels,
                          LabelKind kind) {
  if (frames.ndim() != 3) throw DimensionError("frames must be [N,H,W]");
  const auto n = static_cast<std::size_t>(frames.shape(0));
  const auto h = static_cast<std::size_t>(frames.shape(1));
  const auto w = static_cast<std::size_t>(frames.shape(2));
  auto l = vec_from(labels);
  if (l.size() != n) throw DimensionError("labels must have one entry per frame");
  FrameDataset ds(h, w, kind);
  for (std::size_t i = 0; i < n; ++i) {
    ds.add(std::span<const float>(frames.data() + i * h * w, h * w), l[i]);
  }
  return ds;
}

py::tuple dataset_to(const FrameDataset& ds) {
  py::array_t<float> frames({ds.size(), ds.height(), ds.width()});
  float* dst = frames.mutable_data();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto px = ds.pixels(i);
    std::copy(px.begin(), px.end(), dst + i * ds.frame_size());
  }
  return py::make_tuple(frames, vec_to(ds.labels()));
}

LabelKind label_kind_from(const std::string& s) {
  if (s == "swa_degrees") return LabelKind::swa_degrees;
  if (s == "swa_error_degrees") return LabelKind::swa_error_degrees;
  throw ParameterError("unknown label kind '" + s + "'");
}

NetworkSpec spec_from(const std::string& preset_or_json) {
  if (!preset_or_json.empty() && preset_or_json.front() == '{') {
    return network_spec_from_json(nlohmann::json::parse(preset_or_json));
  }
  return preset(preset_or_json);
}

app::PipelineConfig config_from(const std::string& json_text) {
  auto cfg = app::config_from_json(nlohmann::json::parse(json_text));
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "failcast core bindings";

  auto base = py::register_exception<Error>(m, "FailcastError", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<SpecError>(m, "SpecError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<ComparisonError>(m, "ComparisonError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  py::class_<Model>(m, "Model")
      .def_static("init", [](const std::string& spec, std::uint64_t seed) {
        Rng rng(seed);
        return init_model(spec_from(spec), rng);
      }, py::arg("spec"), py::arg("seed"))
      .def_static("load", [](const std::string& path) { return load_checkpoint(path); })
      .def("save", [](const Model& self, const std::string& path) {
        save_checkpoint(self, path);
      })
      .def("digest", &model_digest)
      .def_property_readonly("spec_json", [](const Model& self) {
        return to_json(self.spec).dump();
      })
      .def_property_readonly("metadata_json", [](const Model& self) {
        return self.metadata.dump();
      })
      .def("predict", [](const Model& self, const FloatArray& image) {
        return predict(self, image_from(image));
      })
      .def("predict_batch", [](const Model& self, const FloatArray& frames) {
        if (frames.ndim() != 3) throw DimensionError("frames must be [N,H,W]");
        const auto h = static_cast<std::size_t>(frames.shape(1));
        const auto w = static_cast<std::size_t>(frames.shape(2));
        std::vector<Tensor> images;
        for (py::ssize_t i = 0; i < frames.shape(0); ++i) {
          const float* px = frames.data() + i * h * w;
          images.emplace_back(Shape{1, h, w}, std::vector<float>(px, px + h * w));
        }
        return vec_to(predict_batch(self, images));
      });

  m.def("preset_json", [](const std::string& name) { return to_json(preset(name)).dump(); });

  m.def("curvature_to_swa", [](double curvature) {
    VehicleConstants v;
    return curvature_to_swa(curvature, v.wheelbase, v.steering_ratio);
  });
  m.def("swa_to_curvature", [](double swa) {
    VehicleConstants v;
    return swa_to_curvature(swa, v.wheelbase, v.steering_ratio);
  });

  m.def("render_scene", [](double curvature, std::uint64_t seed, const std::string& hard_case,
                           double noise_sigma, std::size_t height, std::size_t width) {
    SceneParams p;
    p.curvature = curvature;
    p.hard_case = hard_case_from_string(hard_case);
    p.noise_sigma = noise_sigma;
    Rng rng(seed);
    auto f = render_scene(p, rng, height, width);
    return py::make_tuple(image_to(f.image), f.swa_label);
  }, py::arg("curvature"), py::arg("seed") = 0, py::arg("hard_case") = "none",
     py::arg("noise_sigma") = 0.02, py::arg("height") = 34, py::arg("width") = 96);

  m.def("generate_dataset", [](std::size_t count, std::uint64_t seed, double hard_case_rate,
                               double noise_sigma, std::size_t height, std::size_t width) {
    DatasetGenConfig cfg;
    cfg.count = count;
    cfg.seed = seed;
    cfg.hard_case_rate = hard_case_rate;
    cfg.noise_sigma = noise_sigma;
    cfg.height = height;
    cfg.width = width;
    auto g = generate_dataset(cfg);
    py::list manifest;
    for (const auto& e : g.manifest) {
      py::dict d;
      d["index"] = e.index;
      d["curvature"] = e.curvature;
      d["swa"] = e.swa;
      d["hard_case"] = to_string(e.hard_case);
      d["seed"] = e.seed;
      manifest.append(d);
    }
    auto fl = dataset_to(g.frames);
    return py::make_tuple(fl[0], fl[1], manifest);
  }, py::arg("count"), py::arg("seed") = 0, py::arg("hard_case_rate") = 0.2,
     py::arg("noise_sigma") = 0.02, py::arg("height") = 34, py::arg("width") = 96);

  m.def("save_dataset", [](const std::string& path, const FloatArray& frames,
                           const FloatArray& labels, const std::string& kind) {
    save_dataset(dataset_from(frames, labels, label_kind_from(kind)), path);
  }, py::arg("path"), py::arg("frames"), py::arg("labels"),
     py::arg("label_kind") = "swa_degrees");
  m.def("load_dataset", [](const std::string& path) {
    auto ds = load_dataset(path);
    auto fl = dataset_to(ds);
    return py::make_tuple(fl[0], fl[1], to_string(ds.label_kind()));
  });

  m.def("visual_backprop", [](const Model& model, const FloatArray& image) {
    return image_to(visual_backprop(model, image_from(image)).values);
  });

  m.def("train", [](const Model& model, const FloatArray& frames, const FloatArray& labels,
                    const std::string& config_json) {
    auto cfg = train_config_from_json(nlohmann::json::parse(config_json));
    TrainResult r;
    {
      auto ds = dataset_from(frames, labels, LabelKind::swa_degrees);
      py::gil_scoped_release release;
      r = train(model, ds, cfg);
    }
    return py::make_tuple(r.model, r.loss_history);
  }, py::arg("model"), py::arg("frames"), py::arg("labels"), py::arg("config_json") = "{}");

  m.def("failure_trainset", [](const Model& map_model, const Model& error_model,
                               const FloatArray& frames, const FloatArray& labels,
                               const std::string& kind) {
    auto ds = dataset_from(frames, labels, LabelKind::swa_degrees);
    auto ts = build_failure_trainset(map_model, error_model, ds, input_kind_from_string(kind));
    return dataset_to(ts.data);
  }, py::arg("map_model"), py::arg("error_model"), py::arg("frames"), py::arg("labels"),
     py::arg("input_kind") = "saliency_map");

  m.def("predict_failure", [](const Model& predictor, const Model& main_model,
                              const FloatArray& image) {
    return predict_failure(predictor, main_model, image_from(image));
  });

  m.def("evaluate", [](const FloatArray& predicted, const FloatArray& truth,
                       const FloatArray& swa, double threshold,
                       std::optional<double> alarm_threshold, std::vector<double> edges) {
    EvalSettings s;
    s.buckets.edges = std::move(edges);
    s.threshold = threshold;
    s.alarm_threshold = alarm_threshold;
    auto p = vec_from(predicted), t = vec_from(truth), w = vec_from(swa);
    return report_to_json(evaluate(p, t, w, s)).dump();
  }, py::arg("predicted_errors"), py::arg("true_errors"), py::arg("swa_labels"),
     py::arg("threshold") = kUnsafeThresholdDegrees, py::arg("alarm_threshold") = py::none(),
     py::arg("bucket_edges") = std::vector<double>{0.0, 30.0, 60.0, 90.0});

  m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) {
    return pearson_correlation(x, y);
  });

  m.def("run_gradcheck", [](std::size_t seeds, bool inject_fault) {
    GradcheckOptions o;
    o.seeds = seeds;
    o.inject_conv_sign_bug = inject_fault;
    GradcheckReport r;
    {
      py::gil_scoped_release release;
      r = run_gradcheck(o);
    }
    py::list cases;
    for (const auto& c : r.cases) {
      py::dict d;
      d["name"] = c.name;
      d["seeds"] = c.seeds;
      d["elements"] = c.elements;
      d["max_rel_error"] = c.max_rel_error;
      d["passed"] = c.passed;
      cases.append(d);
    }
    return py::make_tuple(r.passed(), cases);
  }, py::arg("seeds") = 20, py::arg("inject_fault") = false);

  // Pipeline stages, driven by the same config document as the CLI.
  m.def("run_command", [](const std::string& name, const std::string& config_json) {
    auto cfg = config_from(config_json);
    std::ostringstream log;
    py::gil_scoped_release release;
    if (name == "gen-data") app::cmd_gen_data(cfg, log);
    else if (name == "train-pilot") app::cmd_train_pilot(cfg, log);
    else if (name == "gen-saliency") app::cmd_gen_saliency(cfg, log);
    else if (name == "train-failcast") app::cmd_train_failcast(cfg, log);
    else if (name == "eval") app::cmd_eval(cfg, log);
    else throw ParameterError("unknown command '" + name + "'");
    return log.str();
  });
}
