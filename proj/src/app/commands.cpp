#include "failcast/app/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "failcast/binary_io.hpp"
#include "failcast/checkpoint.hpp"
#include "failcast/error.hpp"
#include "failcast/saliency.hpp"
#include "failcast/scenegen.hpp"

namespace failcast::app {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e)) {
    return kExitIo;
  }
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SpecError*>(&e) ||
      dynamic_cast<const ParameterError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const DataError*>(&e) ||
      dynamic_cast<const ComparisonError*>(&e)) {
    return kExitConfig;
  }
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitIo;
  return kExitCheckFailed;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw IoError("missing input file " + p.string());
}

void ensure_out_dir(const PipelineConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) {
    throw IoError("cannot create output directory " + cfg.out_dir.string() +
                  ": " + ec.message());
  }
}

void check_frames(const FrameDataset& ds, const NetworkSpec& spec,
                  const fs::path& p) {
  if (ds.height() != spec.input_height || ds.width() != spec.input_width) {
    throw DimensionError(p.string() + " holds " + std::to_string(ds.height()) +
                         "x" + std::to_string(ds.width()) +
                         " frames but the network expects " +
                         std::to_string(spec.input_height) + "x" +
                         std::to_string(spec.input_width));
  }
}

std::string loss_csv(const std::vector<double>& history) {
  std::string out = "epoch,loss\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    out += std::to_string(e + 1) + "," + fmt(history[e]) + "\n";
  }
  return out;
}

}  // namespace

void cmd_gen_data(const PipelineConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto spec = cfg.network_spec();
  ensure_out_dir(cfg);
  struct Split {
    const char* name;
    std::size_t count;
    Stage stage;
    fs::path path;
  };
  const Split splits[] = {
      {"train", cfg.data.train_count, Stage::train_data, cfg.train_data_path()},
      {"val", cfg.data.val_count, Stage::val_data, cfg.val_data_path()},
      {"test", cfg.data.test_count, Stage::test_data, cfg.test_data_path()},
  };
  for (const auto& s : splits) {
    DatasetGenConfig g;
    g.count = s.count;
    g.bucket_edges = cfg.buckets.edges;
    g.bucket_weights = cfg.data.bucket_weights;
    g.hard_case_rate = cfg.data.hard_case_rate;
    g.seed = stage_seed(cfg.seed, s.stage);
    g.height = spec.input_height;
    g.width = spec.input_width;
    g.noise_sigma = cfg.data.noise_sigma;
    const auto data = generate_dataset(g);
    write_generated(data, s.path);

    std::vector<std::size_t> hist(cfg.buckets.count() + 1, 0);
    std::size_t hard = 0;
    for (const auto& e : data.manifest) {
      ++hist[cfg.buckets.index_of(e.swa)];
      hard += e.hard_case != HardCase::none;
    }
    log << s.name << ": " << s.path.string() << " (" << fs::file_size(s.path)
        << " bytes, " << s.count << " frames, " << hard << " hard)\n";
    for (std::size_t b = 0; b < hist.size(); ++b) {
      if (b == cfg.buckets.count() && hist[b] == 0) continue;
      log << "  |SWA| " << cfg.buckets.label(b) << ": " << hist[b] << "\n";
    }
  }
}

void cmd_train_pilot(const PipelineConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto spec = cfg.network_spec();
  const auto train_path = cfg.train_data_path();
  require_file(train_path);
  ensure_out_dir(cfg);
  const auto data = load_dataset(train_path);
  check_frames(data, spec, train_path);

  TrainConfig tc = cfg.pilot;
  tc.seed = stage_seed(cfg.seed, Stage::pilot_train);
  Rng init_rng(stage_seed(cfg.seed, Stage::pilot_init));
  auto result = train_weak_teacher(spec, data, tc, cfg.weakness, init_rng);
  result.model.metadata["role"] = "pilot";
  save_checkpoint(result.model, cfg.pilot_path());
  write_text_file(cfg.out_dir / "pilot_loss.csv", loss_csv(result.loss_history));

  log << "pilot: " << result.loss_history.size() << " epochs on "
      << cfg.weakness.samples(data.size()) << " frames -> "
      << cfg.pilot_path().string() << "\n";
  if (!result.loss_history.empty()) {
    log << "  final training MSE " << fmt(result.loss_history.back()) << "\n";
  }
  const auto val_path = cfg.val_data_path();
  if (fs::is_regular_file(val_path)) {
    const auto val = load_dataset(val_path);
    check_frames(val, spec, val_path);
    double mean = 0.0;
    for (float l : data.labels()) mean += l;
    mean /= static_cast<double>(data.size());
    double baseline = 0.0;
    for (float l : val.labels()) baseline += std::abs(mean - l);
    baseline /= static_cast<double>(val.size());
    log << "  validation MAE " << fmt(mean_absolute_error(result.model, val))
        << " deg (mean predictor " << fmt(baseline) << " deg)\n";
  }
}

void cmd_gen_saliency(const PipelineConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto spec = cfg.network_spec();
  const auto train_path = cfg.train_data_path();
  for (const auto& p : {train_path, cfg.map_model_path(), cfg.error_model_path()}) {
    require_file(p);
  }
  ensure_out_dir(cfg);
  const auto data = load_dataset(train_path);
  check_frames(data, spec, train_path);
  const auto map_model = load_checkpoint(cfg.map_model_path());
  const auto error_model = load_checkpoint(cfg.error_model_path());

  for (auto kind : cfg.input_kinds()) {
    auto ts = build_failure_trainset(map_model, error_model, data, kind);
    if (map_model.metadata.contains("weakness")) {
      ts.extra["weakness"] = map_model.metadata["weakness"];
    }
    const auto path = cfg.failure_trainset_path(kind);
    save_failure_trainset(ts, path);
    log << to_string(kind) << " trainset: " << path.string() << " ("
        << ts.data.size() << " records)\n";
  }
  if (cfg.pgm_dump > 0) {
    const auto dir = cfg.out_dir / "saliency_pgm";
    fs::create_directories(dir);
    const std::size_t n = std::min(cfg.pgm_dump, data.size());
    for (std::size_t i = 0; i < n; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "map_%05zu.pgm", i);
      write_pgm(visual_backprop(map_model, data.frame(i)), dir / name);
    }
    log << "wrote " << n << " PGM maps to " << dir.string() << "\n";
  }
}

void cmd_train_failcast(const PipelineConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto spec = cfg.network_spec();
  require_file(cfg.failcast_init_path());
  for (auto kind : cfg.input_kinds()) require_file(cfg.failure_trainset_path(kind));
  ensure_out_dir(cfg);
  const auto donor = load_checkpoint(cfg.failcast_init_path());

  for (auto kind : cfg.input_kinds()) {
    const auto ts = load_failure_trainset(cfg.failure_trainset_path(kind));
    check_frames(ts.data, spec, cfg.failure_trainset_path(kind));
    Rng head_rng(stage_seed(cfg.seed, Stage::failcast_head_init));
    const Model init = transfer_conv_layers(donor, spec, head_rng);
    TrainConfig tc = cfg.failcast;
    tc.seed = stage_seed(cfg.seed, Stage::failcast_train,
                         kind == InputKind::saliency_map ? 0 : 1);
    Model predictor = train(init, ts.data, tc).model;
    predictor.metadata["role"] = "failure_predictor";
    predictor.metadata["input_kind"] = to_string(kind);
    predictor.metadata["trainset"] = ts.provenance();
    // train() leaves metadata untouched for zero epochs; record the config anyway.
    predictor.metadata["train"]["epochs"] = tc.epochs;
    predictor.metadata["train"]["batch_size"] = tc.batch_size;
    predictor.metadata["train"]["learning_rate"] = tc.learning_rate;
    const auto path = cfg.predictor_path(kind);
    save_checkpoint(predictor, path);
    log << to_string(kind) << " failure predictor: " << path.string() << " ("
        << tc.epochs << " epochs, batch " << tc.batch_size << ", lr "
        << fmt(tc.learning_rate) << ")\n";
  }
}

void cmd_eval(const PipelineConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto spec = cfg.network_spec();
  const auto test_path = cfg.test_data_path();
  require_file(test_path);
  require_file(cfg.map_model_path());
  require_file(cfg.error_model_path());
  const auto kinds = cfg.input_kinds();
  for (auto kind : kinds) require_file(cfg.predictor_path(kind));
  ensure_out_dir(cfg);

  const auto test = load_dataset(test_path);
  check_frames(test, spec, test_path);
  const auto map_model = load_checkpoint(cfg.map_model_path());
  const auto error_model = load_checkpoint(cfg.error_model_path());
  const std::string test_digest = dataset_digest(test);

  std::vector<float> true_errors(test.size());
  std::vector<Tensor> maps;
  maps.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Tensor frame = test.frame(i);
    true_errors[i] = predict(error_model, frame) - test.label(i);
    maps.push_back(visual_backprop(map_model, frame).values);
  }

  EvalSettings settings{cfg.buckets, cfg.threshold, cfg.alarm_threshold};
  std::vector<std::vector<float>> predictions;
  std::vector<EvalReport> reports;
  nlohmann::ordered_json significance = nlohmann::ordered_json::object();
  for (auto kind : kinds) {
    const auto predictor = load_checkpoint(cfg.predictor_path(kind));
    const bool image_input = predictor_input_kind(predictor) == InputKind::camera_image;
    std::vector<float> predicted(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      predicted[i] = predict(predictor, image_input ? test.frame(i) : maps[i]);
    }
    auto report = evaluate(predicted, true_errors, test.labels(), settings);
    report.input_kind = to_string(kind);
    report.dataset_digest = test_digest;
    report.model_digests["map_model"] = model_digest(map_model);
    report.model_digests["error_model"] = model_digest(error_model);
    report.model_digests["predictor"] = model_digest(predictor);
    report.config = cfg.echo();
    emit_report(report, ReportFormat::json,
                cfg.out_dir / ("report_" + to_string(kind) + ".json"));
    emit_report(report, ReportFormat::csv,
                cfg.out_dir / ("report_" + to_string(kind) + ".csv"));

    Rng perm_rng(stage_seed(cfg.seed, Stage::eval_permutation));
    const auto perm = permutation_tp_test(
        predicted, true_errors, cfg.threshold,
        cfg.alarm_threshold.value_or(cfg.threshold), cfg.permutations, perm_rng);
    significance[to_string(kind)] = {
        {"tp_rate", round_significant(perm.observed_tp_rate)},
        {"permutation_mean_tp_rate", round_significant(perm.null_mean_tp_rate)},
        {"alarm_rate", round_significant(perm.alarm_rate)},
        {"p_value", round_significant(perm.p_value)},
        {"permutations", perm.permutations}};

    log << to_string(kind) << ": overall MAE "
        << (report.overall.mae_degrees ? fmt(*report.overall.mae_degrees) : "n/a")
        << " deg, TP rate "
        << (report.overall.tp_rate ? fmt(*report.overall.tp_rate) : "n/a")
        << ", corr(|pred|,|true|) "
        << (report.pearson_abs_error ? fmt(*report.pearson_abs_error) : "n/a")
        << ", permutation p " << fmt(perm.p_value) << "\n";
    predictions.push_back(std::move(predicted));
    reports.push_back(std::move(report));
  }
  write_text_file(cfg.out_dir / "significance.json", significance.dump(2) + "\n");

  std::string csv = "index,swa_label,true_error";
  for (auto kind : kinds) csv += ",pred_" + to_string(kind);
  csv += "\n";
  for (std::size_t i = 0; i < test.size(); ++i) {
    csv += std::to_string(i) + "," + fmt(test.label(i)) + "," + fmt(true_errors[i]);
    for (const auto& p : predictions) csv += "," + fmt(p[i]);
    csv += "\n";
  }
  write_text_file(cfg.out_dir / "predictions.csv", csv);

  if (reports.size() == 2) {
    const auto cmp = compare_input_modes(reports[0], reports[1]);
    write_text_file(cfg.out_dir / "comparison.json",
                    comparison_to_json(cmp).dump(2) + "\n");
    write_text_file(cfg.out_dir / "comparison.csv", comparison_to_csv(cmp));
    log << comparison_table(cmp);
  }
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& log) {
  const auto report = run_gradcheck(options);
  for (const auto& c : report.cases) {
    char line[160];
    std::snprintf(line, sizeof line, "%-22s seeds %3zu  elements %6zu  max rel err %.3g  %s\n",
                  c.name.c_str(), c.seeds, c.elements, c.max_rel_error,
                  c.passed ? "ok" : "FAIL");
    log << line;
  }
  log << "tolerance " << fmt(options.tolerance) << ", " << fmt(report.seconds)
      << " s\n";
  return report.passed() ? kExitOk : kExitCheckFailed;
}

}  // namespace failcast::app
