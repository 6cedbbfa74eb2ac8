// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Runs the desk-scale experiments end to end (a few
// minutes on one core).

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "failcast/app/commands.hpp"
#include "failcast/app/config.hpp"
#include "failcast/checkpoint.hpp"
#include "failcast/eval.hpp"
#include "failcast/failure.hpp"
#include "failcast/gradcheck.hpp"
#include "failcast/layers.hpp"
#include "failcast/saliency.hpp"
#include "failcast/scenegen.hpp"

using namespace failcast;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& id, bool ok, const std::string& detail) {
  std::printf("[%s] %s: %s\n", ok ? "PASS" : "FAIL", id.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

FrameDataset make_split(std::uint64_t seed, std::size_t count, double hard_rate) {
  DatasetGenConfig cfg;
  cfg.count = count;
  cfg.seed = seed;
  cfg.hard_case_rate = hard_rate;
  return generate_dataset(cfg).frames;
}

std::vector<float> errors_of(const Model& m, const FrameDataset& d) {
  std::vector<float> e(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) e[i] = predict(m, d.frame(i)) - d.label(i);
  return e;
}

// Straight-line VisualBackProp, written against the definitions only.
Tensor reference_map(const Model& m, const Tensor& image) {
  std::vector<Tensor> avg;
  Tensor x = image;
  for (std::size_t l = 0; l < m.conv_weights.size(); ++l) {
    x = relu(conv2d_forward(x, m.conv_weights[l], m.conv_biases[l], m.spec.conv_layers[l].stride));
    Tensor a({1, x.dim(1), x.dim(2)});
    for (std::size_t c = 0; c < x.dim(0); ++c)
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += x[c * a.size() + i];
    for (auto& v : a.data()) v /= static_cast<float>(x.dim(0));
    avg.push_back(a);
  }
  Tensor cur = avg.back();
  for (std::size_t l = avg.size(); l-- > 0;) {
    const auto& layer = m.spec.conv_layers[l];
    const std::size_t th = l == 0 ? image.dim(1) : avg[l - 1].dim(1);
    const std::size_t tw = l == 0 ? image.dim(2) : avg[l - 1].dim(2);
    Tensor up({1, th, tw});
    for (std::size_t y = 0; y < cur.dim(1); ++y)
      for (std::size_t xx = 0; xx < cur.dim(2); ++xx)
        for (std::size_t dy = 0; dy < layer.kernel_size; ++dy)
          for (std::size_t dx = 0; dx < layer.kernel_size; ++dx)
            up.at(0, y * layer.stride + dy, xx * layer.stride + dx) += cur.at(0, y, xx);
    if (l > 0)
      for (std::size_t i = 0; i < up.size(); ++i) up[i] *= avg[l - 1][i];
    cur = up;
  }
  const float mx = *std::max_element(cur.data().begin(), cur.data().end());
  if (mx > 0.0f)
    for (auto& v : cur.data()) v /= mx;
  return cur;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  const std::uint64_t seed = 20240601;
  const auto t_all = std::chrono::steady_clock::now();

  // 1. gradient suite
  {
    GradcheckOptions opt;
    opt.seeds = 20;
    const auto r = run_gradcheck(opt);
    double worst = 0.0;
    std::size_t min_seeds = opt.seeds;
    for (const auto& c : r.cases) {
      worst = std::max(worst, c.max_rel_error);
      min_seeds = std::min(min_seeds, c.seeds);
    }
    report("criterion 1 gradient suite", r.passed() && min_seeds >= 20 && r.seconds < 30.0,
           fmt("%zu checks, >= %zu seeds each, max rel err %.3g (tol 1e-3), %.3f s (limit 30 s)",
               r.cases.size(), min_seeds, worst, r.seconds));
  }

  // 2 + 3. main model on 2,000 frames
  const auto spec = preset_tiny();
  const auto train_set = make_split(app::stage_seed(seed, app::Stage::train_data), 2000, 0.2);
  const auto val_set = make_split(app::stage_seed(seed, app::Stage::val_data), 500, 0.2);
  Model main_model;
  {
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 32;
    cfg.learning_rate = 1e-3f;
    cfg.seed = app::stage_seed(seed, app::Stage::pilot_train);
    Rng init(app::stage_seed(seed, app::Stage::pilot_init));
    const auto t0 = std::chrono::steady_clock::now();
    main_model = train(init_model(spec, init), train_set, cfg).model;
    const double secs = seconds_since(t0);

    double mean = 0.0;
    for (float l : train_set.labels()) mean += l;
    mean /= static_cast<double>(train_set.size());
    double baseline = 0.0;
    for (float l : val_set.labels()) baseline += std::abs(l - mean);
    baseline /= static_cast<double>(val_set.size());
    const double mae = mean_absolute_error(main_model, val_set);
    report("criterion 2 training sanity", mae < 0.5 * baseline && secs < 300.0,
           fmt("val MAE %.3f deg vs mean predictor %.3f deg (ratio %.3f, need < 0.5), %.1f s (limit 300 s)",
               mae, baseline, mae / baseline, secs));

    const auto errors = errors_of(main_model, val_set);
    std::vector<float> zeros(errors.size(), 0.0f);
    const auto by_bucket = mae_by_bucket(zeros, errors, val_set.labels(), BucketSpec{});
    bool increasing = true;
    std::string values;
    for (std::size_t b = 0; b < by_bucket.buckets.size(); ++b) {
      const auto& v = by_bucket.buckets[b];
      values += (b ? " / " : "") + (v ? fmt("%.3f", *v) : std::string("n/a"));
      if (!v || (b > 0 && !(by_bucket.buckets[b - 1] && *v > *by_bucket.buckets[b - 1])))
        increasing = false;
    }
    report("criterion 3 error grows with curvature", increasing,
           "val MAE by |SWA| bucket 0-30 / 30-60 / 60-90: " + values + " deg");

    // supporting property: hard-case frames are harder
    DatasetGenConfig g;
    g.count = 500;
    g.seed = app::stage_seed(seed, app::Stage::val_data);
    g.hard_case_rate = 0.2;
    const auto manifest = generate_dataset(g).manifest;
    double hard = 0.0, clean = 0.0;
    std::size_t nh = 0, nc = 0;
    for (std::size_t i = 0; i < errors.size(); ++i) {
      if (manifest[i].hard_case != HardCase::none) {
        hard += std::abs(errors[i]);
        ++nh;
      } else {
        clean += std::abs(errors[i]);
        ++nc;
      }
    }
    report("property hard cases are harder", nh > 0 && hard / nh > clean / nc,
           fmt("val MAE hard %.3f deg (%zu frames) vs clean %.3f deg (%zu frames)",
               hard / nh, nh, clean / nc, nc));
  }

  // 4. VisualBackProp properties
  {
    Rng rng(app::stage_seed(seed, app::Stage::eval_permutation) ^ 0x5a);
    bool dims = true, range = true, maxone = true;
    double worst = 0.0;
    std::size_t degenerate = 0;
    for (int i = 0; i < 100; ++i) {
      Tensor img({1, spec.input_height, spec.input_width});
      for (auto& v : img.data()) v = rng.uniform_float();
      const auto map = visual_backprop(main_model, img);
      dims = dims && map.height() == spec.input_height && map.width() == spec.input_width;
      float mx = 0.0f;
      for (float v : map.values.data()) {
        range = range && v >= 0.0f && v <= 1.0f;
        mx = std::max(mx, v);
      }
      if (mx == 0.0f) ++degenerate;
      else maxone = maxone && mx == 1.0f;
      const auto ref = reference_map(main_model, img);
      for (std::size_t k = 0; k < ref.size(); ++k)
        worst = std::max(worst, std::abs(double(ref[k]) - map.values[k]));
    }
    Rng z(1);
    auto zero_bias = init_model(spec, z);
    const auto zmap = visual_backprop(zero_bias, Tensor::zeros({1, spec.input_height, spec.input_width}));
    const bool zero_ok = zmap.values == Tensor::zeros(zmap.values.shape());
    report("criterion 4 VisualBackProp properties",
           dims && range && maxone && zero_ok && worst <= 1e-5,
           fmt("100 frames: dims %s, range [0,1] %s, max==1 %s (%zu degenerate), zero frame -> zero map %s, "
               "max |map - reference| %.3g (limit 1e-5)",
               dims ? "ok" : "bad", range ? "ok" : "bad", maxone ? "ok" : "bad", degenerate,
               zero_ok ? "ok" : "bad", worst));
  }

  // 6. Table-1-shaped comparison on a constructed fixture
  {
    // Every frame fails (|true error| 10). Alarms per bucket, saliency / image:
    // 0-30: 3 of 4 / 1 of 4; 30-60: 2 of 2 / 2 of 2; 60-90: 1 of 5 / 4 of 5.
    std::vector<float> truth, swa, sal, img;
    auto add = [&](bool a_sal, bool a_img, float angle) {
      truth.push_back(10.0f);
      swa.push_back(angle);
      sal.push_back(a_sal ? 7.0f : 2.0f);
      img.push_back(a_img ? -7.0f : -2.0f);
    };
    for (int k = 0; k < 4; ++k) add(k < 3, k < 1, 12.0f);
    for (int k = 0; k < 2; ++k) add(true, true, -44.0f);
    for (int k = 0; k < 5; ++k) add(k < 1, k < 4, 81.0f);
    auto rs = evaluate(sal, truth, swa, EvalSettings{});
    auto ri = evaluate(img, truth, swa, EvalSettings{});
    rs.input_kind = "saliency_map";
    ri.input_kind = "camera_image";
    const auto cmp = compare_input_modes(rs, ri);
    const double hand_sal[] = {0.75, 1.0, 0.2};
    const double hand_img[] = {0.25, 1.0, 0.8};
    bool ok = cmp.rows.size() == 4;
    for (std::size_t k = 0; ok && k < 3; ++k)
      ok = cmp.rows[k].tp_saliency == hand_sal[k] && cmp.rows[k].tp_image == hand_img[k];
    const auto j = comparison_to_json(cmp);
    ok = ok && j["rows"].size() == 4;
    report("criterion 6 two-condition bucket table", ok,
           fmt("TP saliency %.2f/%.2f/%.2f, image %.2f/%.2f/%.2f; hand counts 0.75/1.00/0.20, 0.25/1.00/0.80",
               cmp.rows[0].tp_saliency.value_or(-1), cmp.rows[1].tp_saliency.value_or(-1),
               cmp.rows[2].tp_saliency.value_or(-1), cmp.rows[0].tp_image.value_or(-1),
               cmp.rows[1].tp_image.value_or(-1), cmp.rows[2].tp_image.value_or(-1)));
    std::printf("%s", comparison_table(cmp).c_str());
  }

  // 5 + 7. failure prediction on hard_case_rate 0.3 data
  {
    const std::uint64_t s5 = seed + 5;
    const auto fc_train = make_split(app::stage_seed(s5, app::Stage::train_data), 2000, 0.3);
    const auto fc_test = make_split(app::stage_seed(s5, app::Stage::test_data), 500, 0.3);
    TrainConfig pilot_cfg;
    pilot_cfg.epochs = 30;
    pilot_cfg.batch_size = 32;
    pilot_cfg.learning_rate = 1e-3f;
    pilot_cfg.seed = app::stage_seed(s5, app::Stage::pilot_train);
    Rng init(app::stage_seed(s5, app::Stage::pilot_init));
    const auto t0 = std::chrono::steady_clock::now();
    const auto teacher = train_weak_teacher(spec, fc_train, pilot_cfg, WeaknessConfig{}, init).model;
    const auto trainset = build_failure_trainset(teacher, fc_train, InputKind::saliency_map);

    Rng head(app::stage_seed(s5, app::Stage::failcast_head_init));
    TrainConfig fc_cfg;
    fc_cfg.epochs = 30;
    fc_cfg.batch_size = 32;
    fc_cfg.learning_rate = 1e-3f;
    fc_cfg.seed = app::stage_seed(s5, app::Stage::failcast_train);
    const auto predictor =
        train_failure_predictor(trainset, transfer_conv_layers(teacher, spec, head), fc_cfg);

    const auto truth = errors_of(teacher, fc_test);
    std::vector<float> pred(fc_test.size());
    for (std::size_t i = 0; i < fc_test.size(); ++i)
      pred[i] = predict_failure(predictor, teacher, fc_test.frame(i));
    const auto rep = evaluate(pred, truth, fc_test.labels(), EvalSettings{});
    Rng perm_rng(app::stage_seed(s5, app::Stage::eval_permutation));
    const auto perm = permutation_tp_test(pred, truth, 5.0, 5.0, 1000, perm_rng);
    const double corr = rep.pearson_abs_error.value_or(0.0);
    report("criterion 5 pipeline informativeness",
           corr >= 0.3 && perm.observed_tp_rate > perm.null_mean_tp_rate && perm.p_value < 0.05,
           fmt("teacher test MAE %.2f deg, corr(|pred|,|true|) %.3f (need >= 0.3), TP rate %.3f vs "
               "permutation mean %.3f at alarm rate %.3f, p = %.4f over %zu permutations (need < 0.05), %.1f s",
               mean_absolute_error(teacher, fc_test), corr, perm.observed_tp_rate,
               perm.null_mean_tp_rate, perm.alarm_rate, perm.p_value, perm.permutations,
               seconds_since(t0)));

    // 7. label identity on 20 frames
    const auto first20 = fc_test.head(20);
    const auto ts = build_failure_trainset(teacher, first20, InputKind::saliency_map);
    std::size_t exact = 0;
    for (std::size_t i = 0; i < first20.size(); ++i) {
      Rng unused(0);
      const float p = forward(teacher, first20.frame(i), false, unused).prediction;
      exact += ts.data.label(i) == p - first20.label(i);
    }
    report("criterion 7 label identity", exact == 20 && ts.data.size() == 20,
           fmt("%zu / 20 stored targets equal prediction - label bit-exactly", exact));
  }

  // 8. determinism and round trips
  {
    const auto base = fs::temp_directory_path() / ("failcast_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(base);
    std::ostringstream sink;
    auto run_all = [&](const fs::path& out) {
      nlohmann::json doc = {{"seed", seed},
                            {"out_dir", out.string()},
                            {"data", {{"train_count", 200}, {"val_count", 50}, {"test_count", 100}}},
                            {"pilot", {{"epochs", 5}, {"batch_size", 32}}},
                            {"failcast", {{"epochs", 3}, {"batch_size", 32}, {"learning_rate", 1e-3}}},
                            {"eval", {{"permutations", 200}}}};
      const auto cfg = app::config_from_json(doc);
      app::cmd_gen_data(cfg, sink);
      app::cmd_train_pilot(cfg, sink);
      app::cmd_gen_saliency(cfg, sink);
      app::cmd_train_failcast(cfg, sink);
      app::cmd_eval(cfg, sink);
    };
    run_all(base / "a");
    run_all(base / "b");
    std::size_t files = 0, identical = 0;
    for (const auto& e : fs::directory_iterator(base / "a")) {
      if (!e.is_regular_file()) continue;
      ++files;
      identical += slurp(e.path()) == slurp(base / "b" / e.path().filename());
    }

    const auto path = base / "main.sfck";
    save_checkpoint(main_model, path);
    const auto loaded = load_checkpoint(path);
    std::size_t same = 0;
    for (std::size_t i = 0; i < 100; ++i)
      same += predict(loaded, val_set.frame(i)) == predict(main_model, val_set.frame(i));
    fs::remove_all(base);
    report("criterion 8 determinism and round trips", files >= 15 && identical == files && same == 100,
           fmt("%zu / %zu pipeline files byte-identical across two runs; %zu / 100 predictions "
               "identical after checkpoint save/load", identical, files, same));
  }

  // 9. transfer fidelity
  {
    Rng head(99), frames(100);
    const auto target = transfer_conv_layers(main_model, spec, head);
    std::size_t equal = 0;
    for (int i = 0; i < 50; ++i) {
      Tensor img({1, spec.input_height, spec.input_width});
      for (auto& v : img.data()) v = frames.uniform_float();
      Rng u(0);
      equal += forward(main_model, img, false, u).activations ==
               forward(target, img, false, u).activations;
    }
    report("criterion 9 transfer fidelity", equal == 50,
           fmt("%zu / 50 frames with bit-identical conv activations after transfer", equal));
  }

  std::printf("%d failed, total %.1f s\n", failures, seconds_since(t_all));
  return failures == 0 ? 0 : 1;
}
