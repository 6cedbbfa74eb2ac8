#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "failcast/error.hpp"
#include "failcast/eval.hpp"

using namespace failcast;

namespace {

struct Frames {
  std::vector<float> pred, truth, swa;
};

Frames random_frames(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Frames f;
  for (std::size_t i = 0; i < n; ++i) {
    f.truth.push_back(static_cast<float>(rng.uniform(-20.0, 20.0)));
    f.pred.push_back(static_cast<float>(rng.uniform(-20.0, 20.0)));
    f.swa.push_back(static_cast<float>(rng.uniform(-90.0, 90.0)));
  }
  return f;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("bucket spec") {
  BucketSpec b;
  CHECK(b.count() == 3);
  CHECK(b.index_of(0.0) == 0);
  CHECK(b.index_of(-29.999) == 0);
  CHECK(b.index_of(30.0) == 1);
  CHECK(b.index_of(-60.0) == 2);
  CHECK(b.index_of(90.0) == 2);  // last bucket is closed
  CHECK(b.index_of(90.5) == 3);
  CHECK(b.label(1) == "30-60");
  BucketSpec above{{10.0, 20.0}};
  CHECK(above.index_of(5.0) == 1);
  CHECK_THROWS_AS((BucketSpec{{0.0, 30.0, 30.0}}).validate(), ParameterError);
  CHECK_THROWS_AS((BucketSpec{{0.0}}).validate(), ParameterError);
}

TEST_CASE("mae_by_bucket") {
  BucketSpec b;
  SUBCASE("perfect predictions") {
    auto f = random_frames(30, 1);
    auto r = mae_by_bucket(f.truth, f.truth, f.swa, b);
    for (const auto& v : r.buckets) CHECK(v == 0.0);
  }
  SUBCASE("single frame") {
    std::vector<float> p{3}, t{1}, s{45};
    auto r = mae_by_bucket(p, t, s, b);
    CHECK_FALSE(r.buckets[0].has_value());
    CHECK(r.buckets[1] == 2.0);
    CHECK_FALSE(r.buckets[2].has_value());
    CHECK_FALSE(r.overflow.has_value());
  }
  SUBCASE("50 frames against a direct loop") {
    auto f = random_frames(50, 2);
    auto r = mae_by_bucket(f.pred, f.truth, f.swa, b);
    for (std::size_t k = 0; k < 3; ++k) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < 50; ++i) {
        const double a = std::abs(f.swa[i]);
        if (a >= b.edges[k] && (a < b.edges[k + 1] || (k == 2 && a <= 90.0))) {
          sum += std::abs(double(f.pred[i]) - f.truth[i]);
          ++n;
        }
      }
      REQUIRE(n > 0);
      CHECK(*r.buckets[k] == doctest::Approx(sum / n).epsilon(1e-12));
    }
  }
  SUBCASE("one all-encompassing bucket equals the global MAE") {
    auto f = random_frames(40, 3);
    auto r = mae_by_bucket(f.pred, f.truth, f.swa, BucketSpec{{0.0, 90.0}});
    double sum = 0.0;
    for (std::size_t i = 0; i < 40; ++i) sum += std::abs(double(f.pred[i]) - f.truth[i]);
    CHECK(*r.buckets[0] == doctest::Approx(sum / 40).epsilon(1e-12));
  }
  SUBCASE("length mismatch") {
    std::vector<float> a{1, 2}, c{1};
    CHECK_THROWS_AS(mae_by_bucket(a, c, a, b), DimensionError);
  }
}

TEST_CASE("safety_gain") {
  BucketSpec one{{0.0, 90.0}};
  SUBCASE("hand-counted example") {
    std::vector<float> truth{6, 2, 7, 1}, pred{5.5f, 1, 3, 0.8f}, swa{10, 10, 10, 10};
    auto r = safety_gain(pred, truth, swa, 5.0, one);
    CHECK(r.buckets[0] == 0.5);
    auto rep = evaluate(pred, truth, swa, {one, 5.0, std::nullopt});
    CHECK(rep.buckets[0].failure_count == 2);
    CHECK(rep.buckets[0].alarm_count == 1);
    CHECK(rep.buckets[0].true_positive_count == 1);
  }
  SUBCASE("perfect predictor") {
    auto f = random_frames(60, 4);
    auto r = safety_gain(f.truth, f.truth, f.swa, 5.0, BucketSpec{});
    for (const auto& v : r.buckets) CHECK(v == 1.0);
  }
  SUBCASE("undefined without failures") {
    std::vector<float> truth{1, 2}, pred{9, 9}, swa{5, 5};
    CHECK_FALSE(safety_gain(pred, truth, swa, 5.0, one).buckets[0].has_value());
  }
  SUBCASE("negative errors count by magnitude") {
    std::vector<float> truth{-6}, pred{-5}, swa{-40};
    CHECK(safety_gain(pred, truth, swa, 5.0, BucketSpec{}).buckets[1] == 1.0);
  }
  SUBCASE("invariant under a monotone transform of predictions and alarm threshold") {
    auto f = random_frames(80, 5);
    auto base = safety_gain(f.pred, f.truth, f.swa, 5.0, BucketSpec{}, 7.0);
    std::vector<float> cubed;
    for (float p : f.pred) cubed.push_back(std::abs(p) * std::abs(p) * std::abs(p));
    auto moved = safety_gain(cubed, f.truth, f.swa, 5.0, BucketSpec{}, 343.0);
    CHECK(base.buckets == moved.buckets);
  }
  SUBCASE("tiny alarm threshold alarms on every non-zero prediction") {
    auto f = random_frames(80, 6);
    auto r = safety_gain(f.pred, f.truth, f.swa, 5.0, BucketSpec{}, 1e-30);
    for (const auto& v : r.buckets) CHECK(v == 1.0);
  }
  SUBCASE("default threshold") { CHECK(kUnsafeThresholdDegrees == 5.0); }
}

TEST_CASE("evaluate conserves counts and reports overflow") {
  auto f = random_frames(100, 7);
  f.swa[3] = 95.0f;
  f.swa[4] = -120.0f;
  auto rep = evaluate(f.pred, f.truth, f.swa, {});
  std::size_t total = rep.overflow.count;
  for (const auto& b : rep.buckets) total += b.count;
  CHECK(total == 100);
  CHECK(rep.overall.count == 100);
  CHECK(rep.overflow.count == 2);
  CHECK(line_count(report_to_csv(rep)) == 1 + 3 + 1 + 1);  // header, buckets, overflow, overall
}

TEST_CASE("pearson and permutation test") {
  std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 8}, z{4, 3, 2, 1}, c{1, 1, 1, 1};
  CHECK(*pearson_correlation(x, y) == doctest::Approx(1.0));
  CHECK(*pearson_correlation(x, z) == doctest::Approx(-1.0));
  CHECK_FALSE(pearson_correlation(x, c).has_value());

  // alarms exactly on the failures: far better than chance
  Rng rng(11);
  std::vector<float> truth, pred;
  for (int i = 0; i < 200; ++i) {
    const bool fail = rng.bernoulli(0.3);
    truth.push_back(fail ? 8.0f : 1.0f);
    pred.push_back(fail ? 9.0f : 0.5f);
  }
  Rng prng(12);
  auto t = permutation_tp_test(pred, truth, 5.0, 5.0, 1000, prng);
  CHECK(t.observed_tp_rate == 1.0);
  CHECK(t.p_value == doctest::Approx(1.0 / 1001.0));
  CHECK(t.null_mean_tp_rate < 0.5);
  CHECK(t.alarm_rate == doctest::Approx(t.null_mean_tp_rate).epsilon(0.2));

  // alarms independent of failures: not significant
  std::vector<float> noise;
  for (int i = 0; i < 200; ++i) noise.push_back(rng.bernoulli(0.5) ? 9.0f : 0.0f);
  Rng prng2(13);
  CHECK(permutation_tp_test(noise, truth, 5.0, 5.0, 1000, prng2).p_value > 0.01);
}

TEST_CASE("report json round trip") {
  testutil::TempDir dir("rep");
  auto f = random_frames(50, 8);
  auto rep = evaluate(f.pred, f.truth, f.swa, {});
  rep.input_kind = "saliency_map";
  rep.dataset_digest = "0123456789abcdef";
  rep.model_digests["predictor"] = "fedcba9876543210";
  rep.config["seed"] = 5;
  emit_report(rep, ReportFormat::json, dir / "a.json");
  const std::string first = slurp(dir / "a.json");
  auto parsed = report_from_json(nlohmann::json::parse(first));
  emit_report(parsed, ReportFormat::json, dir / "b.json");
  CHECK(slurp(dir / "b.json") == first);
  CHECK(nlohmann::json::parse(first)["schema"] == "failcast.eval_report/1");

  emit_report(rep, ReportFormat::csv, dir / "a.csv");
  const auto csv = slurp(dir / "a.csv");
  CHECK(line_count(csv) == 1 + rep.buckets.size() + 1);
  CHECK(csv.rfind("overall,", std::string::npos) != std::string::npos);

  CHECK_THROWS_AS(report_from_json(nlohmann::json::parse(R"({"schema":"other"})")), FormatError);
  CHECK_THROWS_AS(emit_report(rep, ReportFormat::json, "/nonexistent/dir/r.json"), IoError);
}

TEST_CASE("empty evaluation") {
  std::vector<float> none;
  auto rep = evaluate(none, none, none, {});
  CHECK(rep.overall.count == 0);
  CHECK_FALSE(rep.overall.mae_degrees.has_value());
  CHECK_FALSE(rep.overall.tp_rate.has_value());
  CHECK_FALSE(rep.pearson_abs_error.has_value());
  auto j = report_to_json(rep);
  for (const auto& b : j["buckets"]) {
    CHECK(b["count"] == 0);
    CHECK(b["tp_rate"].is_null());
    CHECK(b["mae_degrees"].is_null());
  }
  CHECK(line_count(report_to_csv(rep)) == 1 + 3 + 1);
}

TEST_CASE("numbers keep 6 significant digits") {
  CHECK(round_significant(1.23456789) == 1.23457);
  CHECK(round_significant(0.000123456789) == 0.000123457);
  CHECK(round_significant(0.0) == 0.0);
}

TEST_CASE("compare_input_modes") {
  // Constructed fixture: per bucket, frames whose failures and alarms are
  // set by hand. Bucket 0: 4 failures, saliency alarms 3, image 1.
  // Bucket 1: 2 failures, saliency 2, image 2. Bucket 2: 5 failures,
  // saliency 1, image 4. Every frame is a failure.
  std::vector<float> truth, swa, sal, img;
  auto add = [&](float s, float i, float angle) {
    truth.push_back(10.0f);
    swa.push_back(angle);
    sal.push_back(s);
    img.push_back(i);
  };
  for (int k = 0; k < 4; ++k) add(k < 3 ? 6.0f : 1.0f, k < 1 ? 6.0f : 1.0f, 10.0f);
  for (int k = 0; k < 2; ++k) add(6.0f, 6.0f, -45.0f);
  for (int k = 0; k < 5; ++k) add(k < 1 ? 6.0f : 1.0f, k < 4 ? 6.0f : 1.0f, 75.0f);

  auto rs = evaluate(sal, truth, swa, {});
  auto ri = evaluate(img, truth, swa, {});
  rs.input_kind = "saliency_map";
  ri.input_kind = "camera_image";
  auto cmp = compare_input_modes(rs, ri);
  REQUIRE(cmp.rows.size() == 4);
  const double hand_sal[] = {3.0 / 4, 2.0 / 2, 1.0 / 5, 6.0 / 11};
  const double hand_img[] = {1.0 / 4, 2.0 / 2, 4.0 / 5, 7.0 / 11};
  for (std::size_t k = 0; k < 4; ++k) {
    INFO("row " << cmp.rows[k].label);
    CHECK(*cmp.rows[k].tp_saliency == hand_sal[k]);
    CHECK(*cmp.rows[k].tp_image == hand_img[k]);
    CHECK(*cmp.rows[k].tp_delta == doctest::Approx(hand_sal[k] - hand_img[k]));
  }
  CHECK(cmp.rows[3].label == "overall");
  CHECK(line_count(comparison_to_csv(cmp)) == 5);
  CHECK(comparison_table(cmp).find("60-90") != std::string::npos);

  auto same = compare_input_modes(rs, rs);
  for (const auto& row : same.rows) {
    CHECK(*row.tp_delta == 0.0);
    CHECK(*row.mae_delta == 0.0);
  }

  auto other = ri;
  other.dataset_digest = "different";
  CHECK_THROWS_AS(compare_input_modes(rs, other), ComparisonError);
  other = ri;
  other.threshold_degrees = 4.0;
  CHECK_THROWS_AS(compare_input_modes(rs, other), ComparisonError);
}
