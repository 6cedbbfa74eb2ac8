#include "failcast/eval.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>

#include "failcast/binary_io.hpp"
#include "failcast/error.hpp"

namespace failcast {

void BucketSpec::validate() const {
  if (edges.size() < 2) throw ParameterError("buckets: need at least two edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!(edges[i] >= 0.0) || (i > 0 && !(edges[i] > edges[i - 1]))) {
      throw ParameterError("buckets: edges must be non-negative and strictly ascending");
    }
  }
}

std::size_t BucketSpec::index_of(double swa_degrees) const {
  const double a = std::abs(swa_degrees);
  if (!(a >= edges.front()) || a > edges.back()) return count();
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    if (a < edges[i + 1]) return i;
  }
  return count() - 1;  // a == last edge
}

namespace {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void check_lengths(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) {
    throw DimensionError("eval: predicted (" + std::to_string(a) + "), true (" +
                         std::to_string(b) + ") and label (" + std::to_string(c) +
                         ") lists must have equal length");
  }
}

struct Tally {
  std::size_t count = 0;
  double abs_sum = 0.0;
  std::size_t failures = 0;
  std::size_t alarms = 0;
  std::size_t hits = 0;

  std::optional<double> mae() const {
    if (count == 0) return std::nullopt;
    return abs_sum / static_cast<double>(count);
  }
  std::optional<double> tp_rate() const {
    if (failures == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(failures);
  }
};

struct Tallies {
  std::vector<Tally> buckets;
  Tally overflow;
  Tally overall;
};

Tallies tally(std::span<const float> pred, std::span<const float> truth,
              std::span<const float> swa, const BucketSpec& spec,
              double threshold, double alarm_threshold) {
  check_lengths(pred.size(), truth.size(), swa.size());
  spec.validate();
  if (!(threshold > 0.0) || !(alarm_threshold > 0.0)) {
    throw ParameterError("eval: thresholds must be positive");
  }
  Tallies t;
  t.buckets.resize(spec.count());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::size_t b = spec.index_of(swa[i]);
    Tally& bucket = b < spec.count() ? t.buckets[b] : t.overflow;
    const double err = std::abs(static_cast<double>(pred[i]) - truth[i]);
    const bool failure = std::abs(truth[i]) >= threshold;
    const bool alarm = std::abs(pred[i]) >= alarm_threshold;
    for (Tally* x : {&bucket, &t.overall}) {
      ++x->count;
      x->abs_sum += err;
      x->failures += failure;
      x->alarms += alarm;
      x->hits += failure && alarm;
    }
  }
  return t;
}

BucketStats stats_from(const Tally& t, std::string label, double lo,
                       std::optional<double> hi) {
  BucketStats s;
  s.label = std::move(label);
  s.lo = lo;
  s.hi = hi;
  s.count = t.count;
  s.mae_degrees = t.mae();
  s.tp_rate = t.tp_rate();
  s.failure_count = t.failures;
  s.alarm_count = t.alarms;
  s.true_positive_count = t.hits;
  return s;
}

}  // namespace

std::string BucketSpec::label(std::size_t i) const {
  if (i >= count()) return "overflow";
  return format_number(edges[i]) + "-" + format_number(edges[i + 1]);
}

PerBucket mae_by_bucket(std::span<const float> predicted_errors,
                        std::span<const float> true_errors,
                        std::span<const float> swa_labels,
                        const BucketSpec& buckets) {
  const auto t = tally(predicted_errors, true_errors, swa_labels, buckets,
                       kUnsafeThresholdDegrees, kUnsafeThresholdDegrees);
  PerBucket out;
  for (const auto& b : t.buckets) out.buckets.push_back(b.mae());
  out.overflow = t.overflow.mae();
  return out;
}

PerBucket safety_gain(std::span<const float> predicted_errors,
                      std::span<const float> true_errors,
                      std::span<const float> swa_labels, double threshold,
                      const BucketSpec& buckets,
                      std::optional<double> alarm_threshold) {
  const auto t = tally(predicted_errors, true_errors, swa_labels, buckets,
                       threshold, alarm_threshold.value_or(threshold));
  PerBucket out;
  for (const auto& b : t.buckets) out.buckets.push_back(b.tp_rate());
  out.overflow = t.overflow.tp_rate();
  return out;
}

std::optional<double> pearson_correlation(std::span<const double> x,
                                          std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("pearson_correlation: length mismatch");
  }
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

EvalReport evaluate(std::span<const float> predicted_errors,
                    std::span<const float> true_errors,
                    std::span<const float> swa_labels,
                    const EvalSettings& settings) {
  const double alarm = settings.alarm_threshold.value_or(settings.threshold);
  const auto t = tally(predicted_errors, true_errors, swa_labels,
                       settings.buckets, settings.threshold, alarm);
  EvalReport r;
  r.threshold_degrees = settings.threshold;
  r.alarm_threshold_degrees = alarm;
  r.bucket_spec = settings.buckets;
  const auto& edges = settings.buckets.edges;
  for (std::size_t i = 0; i < t.buckets.size(); ++i) {
    r.buckets.push_back(stats_from(t.buckets[i], settings.buckets.label(i),
                                   edges[i], edges[i + 1]));
  }
  r.overflow = stats_from(t.overflow, "overflow", edges.back(), std::nullopt);
  r.overall = stats_from(t.overall, "overall", 0.0, std::nullopt);

  std::vector<double> abs_pred, abs_true;
  for (std::size_t i = 0; i < predicted_errors.size(); ++i) {
    abs_pred.push_back(std::abs(static_cast<double>(predicted_errors[i])));
    abs_true.push_back(std::abs(static_cast<double>(true_errors[i])));
  }
  r.pearson_abs_error = pearson_correlation(abs_pred, abs_true);
  return r;
}

PermutationTest permutation_tp_test(std::span<const float> predicted_errors,
                                    std::span<const float> true_errors,
                                    double threshold, double alarm_threshold,
                                    std::size_t permutations, Rng& rng) {
  if (predicted_errors.size() != true_errors.size()) {
    throw DimensionError("permutation_tp_test: length mismatch");
  }
  const std::size_t n = predicted_errors.size();
  std::vector<char> failure(n), alarm(n);
  std::size_t failures = 0, alarms = 0;
  for (std::size_t i = 0; i < n; ++i) {
    failure[i] = std::abs(true_errors[i]) >= threshold;
    alarm[i] = std::abs(predicted_errors[i]) >= alarm_threshold;
    failures += failure[i];
    alarms += alarm[i];
  }
  PermutationTest out;
  out.permutations = permutations;
  out.alarm_rate = n ? static_cast<double>(alarms) / static_cast<double>(n) : 0.0;
  if (failures == 0) return out;
  auto tp = [&](const std::vector<char>& a) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += failure[i] && a[i];
    return static_cast<double>(hits) / static_cast<double>(failures);
  };
  out.observed_tp_rate = tp(alarm);
  std::size_t at_least = 0;
  double null_sum = 0.0;
  std::vector<char> shuffled = alarm;
  for (std::size_t p = 0; p < permutations; ++p) {
    for (std::size_t i = n - 1; i > 0; --i) {
      std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
    }
    const double v = tp(shuffled);
    null_sum += v;
    at_least += v >= out.observed_tp_rate;
  }
  if (permutations > 0) {
    out.null_mean_tp_rate = null_sum / static_cast<double>(permutations);
  }
  out.p_value = static_cast<double>(1 + at_least) /
                static_cast<double>(1 + permutations);
  return out;
}

double round_significant(double v) {
  if (!std::isfinite(v)) return v;
  return std::strtod(format_number(v).c_str(), nullptr);
}

namespace {

nlohmann::ordered_json number_or_null(const std::optional<double>& v) {
  if (!v) return nullptr;
  return round_significant(*v);
}

std::optional<double> optional_number(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

nlohmann::ordered_json bucket_to_json(const BucketStats& b) {
  nlohmann::ordered_json j;
  j["label"] = b.label;
  j["lo"] = round_significant(b.lo);
  j["hi"] = number_or_null(b.hi);
  j["count"] = b.count;
  j["mae_degrees"] = number_or_null(b.mae_degrees);
  j["tp_rate"] = number_or_null(b.tp_rate);
  j["failure_count"] = b.failure_count;
  j["alarm_count"] = b.alarm_count;
  j["true_positive_count"] = b.true_positive_count;
  return j;
}

BucketStats bucket_from_json(const nlohmann::json& j) {
  BucketStats b;
  b.label = j.at("label").get<std::string>();
  b.lo = j.at("lo").get<double>();
  b.hi = optional_number(j.at("hi"));
  b.count = j.at("count").get<std::size_t>();
  b.mae_degrees = optional_number(j.at("mae_degrees"));
  b.tp_rate = optional_number(j.at("tp_rate"));
  b.failure_count = j.at("failure_count").get<std::size_t>();
  b.alarm_count = j.at("alarm_count").get<std::size_t>();
  b.true_positive_count = j.at("true_positive_count").get<std::size_t>();
  return b;
}

std::string csv_field(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

std::string csv_row(const BucketStats& b) {
  return b.label + "," + format_number(b.lo) + "," + csv_field(b.hi) + "," +
         std::to_string(b.count) + "," + csv_field(b.mae_degrees) + "," +
         csv_field(b.tp_rate) + "," + std::to_string(b.failure_count) + "," +
         std::to_string(b.alarm_count) + "," +
         std::to_string(b.true_positive_count) + "\n";
}

}  // namespace

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = "failcast.eval_report/1";
  j["input_kind"] = r.input_kind;
  j["threshold_degrees"] = round_significant(r.threshold_degrees);
  j["alarm_threshold_degrees"] = round_significant(r.alarm_threshold_degrees);
  nlohmann::ordered_json edges = nlohmann::ordered_json::array();
  for (double e : r.bucket_spec.edges) edges.push_back(round_significant(e));
  j["bucket_edges"] = edges;
  nlohmann::ordered_json buckets = nlohmann::ordered_json::array();
  for (const auto& b : r.buckets) buckets.push_back(bucket_to_json(b));
  j["buckets"] = buckets;
  j["overflow"] = bucket_to_json(r.overflow);
  j["overall"] = bucket_to_json(r.overall);
  j["pearson_abs_error"] = number_or_null(r.pearson_abs_error);
  j["dataset_digest"] = r.dataset_digest;
  j["model_digests"] = r.model_digests;
  j["config"] = r.config;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.input_kind = j.at("input_kind").get<std::string>();
    r.threshold_degrees = j.at("threshold_degrees").get<double>();
    r.alarm_threshold_degrees = j.at("alarm_threshold_degrees").get<double>();
    r.bucket_spec.edges = j.at("bucket_edges").get<std::vector<double>>();
    for (const auto& b : j.at("buckets")) r.buckets.push_back(bucket_from_json(b));
    r.overflow = bucket_from_json(j.at("overflow"));
    r.overall = bucket_from_json(j.at("overall"));
    r.pearson_abs_error = optional_number(j.at("pearson_abs_error"));
    r.dataset_digest = j.at("dataset_digest").get<std::string>();
    r.model_digests = nlohmann::ordered_json::parse(j.at("model_digests").dump());
    r.config = nlohmann::ordered_json::parse(j.at("config").dump());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("eval report: ") + e.what());
  }
}

std::string report_to_csv(const EvalReport& r) {
  std::string out =
      "bucket,lo,hi,count,mae_degrees,tp_rate,failure_count,alarm_count,"
      "true_positive_count\n";
  for (const auto& b : r.buckets) out += csv_row(b);
  if (r.overflow.count > 0) out += csv_row(r.overflow);
  out += csv_row(r.overall);
  return out;
}

void emit_report(const EvalReport& report, ReportFormat format,
                 const std::filesystem::path& path) {
  if (format == ReportFormat::json) {
    write_text_file(path, report_to_json(report).dump(2) + "\n");
  } else {
    write_text_file(path, report_to_csv(report));
  }
}

namespace {

std::optional<double> delta(const std::optional<double>& a,
                            const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return *a - *b;
}

ComparisonRow compare_row(const BucketStats& s, const BucketStats& i) {
  return {s.label,
          s.mae_degrees,
          i.mae_degrees,
          delta(s.mae_degrees, i.mae_degrees),
          s.tp_rate,
          i.tp_rate,
          delta(s.tp_rate, i.tp_rate)};
}

}  // namespace

Comparison compare_input_modes(const EvalReport& saliency,
                               const EvalReport& image) {
  if (saliency.dataset_digest != image.dataset_digest) {
    throw ComparisonError("compare_input_modes: reports were computed on "
                          "different evaluation datasets (" +
                          saliency.dataset_digest + " vs " +
                          image.dataset_digest + ")");
  }
  if (saliency.bucket_spec.edges != image.bucket_spec.edges ||
      saliency.buckets.size() != image.buckets.size()) {
    throw ComparisonError("compare_input_modes: bucket edges differ");
  }
  if (saliency.threshold_degrees != image.threshold_degrees ||
      saliency.alarm_threshold_degrees != image.alarm_threshold_degrees) {
    throw ComparisonError("compare_input_modes: thresholds differ");
  }
  Comparison c;
  c.threshold_degrees = saliency.threshold_degrees;
  c.dataset_digest = saliency.dataset_digest;
  for (std::size_t i = 0; i < saliency.buckets.size(); ++i) {
    c.rows.push_back(compare_row(saliency.buckets[i], image.buckets[i]));
  }
  c.rows.push_back(compare_row(saliency.overall, image.overall));
  return c;
}

nlohmann::ordered_json comparison_to_json(const Comparison& c) {
  nlohmann::ordered_json j;
  j["schema"] = "failcast.comparison/1";
  j["threshold_degrees"] = round_significant(c.threshold_degrees);
  j["dataset_digest"] = c.dataset_digest;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : c.rows) {
    nlohmann::ordered_json row;
    row["bucket"] = r.label;
    row["tp_rate_saliency"] = number_or_null(r.tp_saliency);
    row["tp_rate_image"] = number_or_null(r.tp_image);
    row["tp_rate_delta"] = number_or_null(r.tp_delta);
    row["mae_saliency"] = number_or_null(r.mae_saliency);
    row["mae_image"] = number_or_null(r.mae_image);
    row["mae_delta"] = number_or_null(r.mae_delta);
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j;
}

std::string comparison_to_csv(const Comparison& c) {
  std::string out =
      "bucket,tp_rate_saliency,tp_rate_image,tp_rate_delta,mae_saliency,"
      "mae_image,mae_delta\n";
  for (const auto& r : c.rows) {
    out += r.label + "," + csv_field(r.tp_saliency) + "," + csv_field(r.tp_image) +
           "," + csv_field(r.tp_delta) + "," + csv_field(r.mae_saliency) + "," +
           csv_field(r.mae_image) + "," + csv_field(r.mae_delta) + "\n";
  }
  return out;
}

std::string comparison_table(const Comparison& c) {
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("   n/a");
    char buf[16];
    std::snprintf(buf, sizeof buf, "%5.1f%%", 100.0 * *v);
    return std::string(buf);
  };
  auto deg = [](const std::optional<double>& v) {
    if (!v) return std::string("    n/a");
    char buf[16];
    std::snprintf(buf, sizeof buf, "%7.3f", *v);
    return std::string(buf);
  };
  char head[160];
  std::snprintf(head, sizeof head,
                "%-10s | %-16s | %-16s | %-8s | %-8s\n", "SWA range",
                "TP sal / img", "MAE sal / img", "dTP", "dMAE");
  std::string out = "unsafe threshold " + format_number(c.threshold_degrees) +
                    " deg\n" + head;
  for (const auto& r : c.rows) {
    char line[200];
    std::snprintf(line, sizeof line, "%-10s | %s / %s | %s / %s | %s | %s\n",
                  r.label.c_str(), pct(r.tp_saliency).c_str(),
                  pct(r.tp_image).c_str(), deg(r.mae_saliency).c_str(),
                  deg(r.mae_image).c_str(), pct(r.tp_delta).c_str(),
                  deg(r.mae_delta).c_str());
    out += line;
  }
  return out;
}

}  // namespace failcast
