#pragma once

// Failure-prediction evaluation: error MAE per |SWA| bucket and the safety
// gain (true-positive rate of alarms on unsafe frames) at a degree threshold.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "failcast/rng.hpp"

namespace failcast {

inline constexpr double kUnsafeThresholdDegrees = 5.0;

// Buckets [e0,e1), [e1,e2), ..., [e_{n-1}, e_n]; frames with |SWA| outside
// [e0, e_n] go to a separate overflow bucket.
struct BucketSpec {
  std::vector<double> edges{0.0, 30.0, 60.0, 90.0};

  void validate() const;
  std::size_t count() const { return edges.size() - 1; }
  // Bucket index for |swa|, or count() for overflow.
  std::size_t index_of(double swa_degrees) const;
  std::string label(std::size_t i) const;
};

// Per-bucket values followed by the overflow bucket; nullopt marks an
// undefined value (empty bucket, or no failures for a TP rate).
struct PerBucket {
  std::vector<std::optional<double>> buckets;
  std::optional<double> overflow;
};

// MAE of predicted vs true errors, frames bucketed by |swa_labels|.
PerBucket mae_by_bucket(std::span<const float> predicted_errors,
                        std::span<const float> true_errors,
                        std::span<const float> swa_labels,
                        const BucketSpec& buckets);

// failure: |true| >= threshold; alarm: |predicted| >= alarm_threshold
// (defaults to threshold). tp_rate = #(failure and alarm) / #failure.
PerBucket safety_gain(std::span<const float> predicted_errors,
                      std::span<const float> true_errors,
                      std::span<const float> swa_labels, double threshold,
                      const BucketSpec& buckets,
                      std::optional<double> alarm_threshold = std::nullopt);

struct BucketStats {
  std::string label;
  double lo = 0.0;
  std::optional<double> hi;  // nullopt: unbounded
  std::size_t count = 0;
  std::optional<double> mae_degrees;
  std::optional<double> tp_rate;
  std::size_t failure_count = 0;
  std::size_t alarm_count = 0;
  std::size_t true_positive_count = 0;
};

struct EvalReport {
  std::string input_kind;
  double threshold_degrees = kUnsafeThresholdDegrees;
  double alarm_threshold_degrees = kUnsafeThresholdDegrees;
  BucketSpec bucket_spec;
  std::vector<BucketStats> buckets;
  BucketStats overflow;
  BucketStats overall;
  std::optional<double> pearson_abs_error;  // corr(|predicted|, |true|)
  std::string dataset_digest;
  nlohmann::ordered_json model_digests = nlohmann::ordered_json::object();
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
};

struct EvalSettings {
  BucketSpec buckets;
  double threshold = kUnsafeThresholdDegrees;
  std::optional<double> alarm_threshold;  // defaults to threshold
};

EvalReport evaluate(std::span<const float> predicted_errors,
                    std::span<const float> true_errors,
                    std::span<const float> swa_labels,
                    const EvalSettings& settings);

// Pearson correlation; nullopt when either side has zero variance or n < 2.
std::optional<double> pearson_correlation(std::span<const double> x,
                                          std::span<const double> y);

struct PermutationTest {
  double observed_tp_rate = 0.0;
  double null_mean_tp_rate = 0.0;
  double alarm_rate = 0.0;
  double p_value = 1.0;
  std::size_t permutations = 0;
};

// Shuffles the predicted errors across frames (which keeps the alarm rate
// fixed) and compares the resulting TP rates with the observed one.
// p = (1 + #{null >= observed}) / (1 + permutations).
PermutationTest permutation_tp_test(std::span<const float> predicted_errors,
                                    std::span<const float> true_errors,
                                    double threshold, double alarm_threshold,
                                    std::size_t permutations, Rng& rng);

enum class ReportFormat { json, csv };

// Numbers are written with 6 significant digits; undefined values are null
// in JSON and empty in CSV.
nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
std::string report_to_csv(const EvalReport& report);
void emit_report(const EvalReport& report, ReportFormat format,
                 const std::filesystem::path& path);

struct ComparisonRow {
  std::string label;
  std::optional<double> mae_saliency, mae_image, mae_delta;
  std::optional<double> tp_saliency, tp_image, tp_delta;
};

// Saliency-input vs image-input results side by side; deltas are
// saliency minus image.
struct Comparison {
  double threshold_degrees = kUnsafeThresholdDegrees;
  std::string dataset_digest;
  std::vector<ComparisonRow> rows;  // one per bucket, then "overall"
};

// Both reports must share bucket edges, thresholds and dataset digest.
Comparison compare_input_modes(const EvalReport& saliency,
                               const EvalReport& image);
nlohmann::ordered_json comparison_to_json(const Comparison& c);
std::string comparison_to_csv(const Comparison& c);
// Fixed-width text table of the TP rates and MAEs.
std::string comparison_table(const Comparison& c);

// %.6g rounding used by every emitted number.
double round_significant(double v);

}  // namespace failcast
