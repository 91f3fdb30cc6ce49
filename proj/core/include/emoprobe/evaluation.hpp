#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "emoprobe/label.hpp"
#include "emoprobe/probe.hpp"
#include "emoprobe/store.hpp"

namespace emoprobe {

using ConfusionMatrix = std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>;

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  std::uint64_t support = 0;    // reference count (row sum)
  std::uint64_t predicted = 0;  // prediction count (column sum)
  // The class was never predicted; precision is reported as 0.
  bool no_predictions = false;

  bool operator==(const ClassMetrics&) const = default;
};

struct EvalReport {
  // NaN when no pair was valid; accuracy_defined says which.
  double accuracy = 0.0;
  bool accuracy_defined = false;
  double coverage = 0.0;
  std::uint64_t total = 0;
  std::uint64_t valid = 0;
  std::uint64_t invalid = 0;
  std::array<ClassMetrics, kNumClasses> per_class{};
  ConfusionMatrix confusion{};  // rows = reference, columns = predicted

  double macro_recall() const;
};

// A judged verdict; nullopt marks an unparsable/invalid response.
using Verdict = std::optional<EmotionLabel>;

struct VerdictPair {
  EmotionLabel reference;
  Verdict verdict;
};

// Coverage is valid / total. Accuracy, per-class metrics and the confusion
// matrix use valid pairs only.
EvalReport eval_from_verdicts(std::span<const VerdictPair> pairs);

EvalReport report_from_confusion(const ConfusionMatrix& confusion, std::uint64_t invalid = 0);

struct SlicePredictions {
  std::vector<std::uint64_t> utterance_ids;
  std::vector<EmotionLabel> references;
  std::vector<std::array<float, kNumClasses>> probs;
  std::vector<EmotionLabel> predicted;
};

// Runs a pooled probe over the records of `layer` named by `ids` (all records
// of the layer when `ids` is empty), in the order given.
SlicePredictions predict_slice(const ProbeParams& probe, StoreReader& store, std::uint16_t layer,
                               std::span<const std::uint64_t> ids = {});

// Throws DataError on an empty slice.
EvalReport evaluate(const ProbeParams& probe, StoreReader& store, std::uint16_t layer,
                    std::span<const std::uint64_t> ids = {});

EvalReport evaluate_predictions(const SlicePredictions& predictions);

// Signed per-field differences b - a.
struct ReportDelta {
  double accuracy = 0.0;
  double coverage = 0.0;
  std::array<double, kNumClasses> precision{};
  std::array<double, kNumClasses> recall{};
  std::array<std::int64_t, kNumClasses> support{};
};

ReportDelta compare_reports(const EvalReport& a, const EvalReport& b);

// Four-decimal metric cell ("0.8058"); "nan" for undefined values.
std::string format_metric(double value);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text);

// Aligned plain-text table in class-code order (anger .. surprise).
std::string render_report_table(const EvalReport& report);

std::string delta_to_json(const ReportDelta& delta);
std::string render_delta_table(const ReportDelta& delta);

}  // namespace emoprobe
