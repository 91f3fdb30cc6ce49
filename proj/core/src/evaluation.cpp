#include "emoprobe/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "emoprobe/errors.hpp"
#include "emoprobe/slice.hpp"

namespace emoprobe {
namespace {

using nlohmann::json;

std::size_t idx(EmotionLabel label) { return static_cast<std::size_t>(code(label)); }

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string signed_metric(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.4f", value);
  return buf;
}

}  // namespace

double EvalReport::macro_recall() const {
  double sum = 0.0;
  int classes = 0;
  for (const auto& m : per_class) {
    if (m.support == 0) continue;
    sum += m.recall;
    ++classes;
  }
  return classes == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / classes;
}

EvalReport report_from_confusion(const ConfusionMatrix& confusion, std::uint64_t invalid) {
  EvalReport r;
  r.confusion = confusion;
  std::uint64_t correct = 0;
  std::array<std::uint64_t, kNumClasses> col{};
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      r.valid += confusion[i][j];
      r.per_class[i].support += confusion[i][j];
      col[j] += confusion[i][j];
    }
    correct += confusion[i][i];
  }
  r.invalid = invalid;
  r.total = r.valid + invalid;
  r.coverage = r.total == 0 ? 0.0 : static_cast<double>(r.valid) / static_cast<double>(r.total);
  r.accuracy_defined = r.valid > 0;
  r.accuracy = r.accuracy_defined ? static_cast<double>(correct) / static_cast<double>(r.valid)
                                  : std::numeric_limits<double>::quiet_NaN();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& m = r.per_class[c];
    m.predicted = col[c];
    m.recall = m.support == 0 ? 0.0 : static_cast<double>(confusion[c][c]) / static_cast<double>(m.support);
    m.no_predictions = col[c] == 0;
    m.precision = col[c] == 0 ? 0.0 : static_cast<double>(confusion[c][c]) / static_cast<double>(col[c]);
  }
  return r;
}

EvalReport eval_from_verdicts(std::span<const VerdictPair> pairs) {
  ConfusionMatrix confusion{};
  std::uint64_t invalid = 0;
  for (const auto& p : pairs) {
    if (!p.verdict) {
      ++invalid;
      continue;
    }
    ++confusion[idx(p.reference)][idx(*p.verdict)];
  }
  return report_from_confusion(confusion, invalid);
}

SlicePredictions predict_slice(const ProbeParams& probe, StoreReader& store, std::uint16_t layer,
                               std::span<const std::uint64_t> ids) {
  if (probe.shape.has_offset_table()) throw ContractError("predict_slice needs a pooled probe");
  if (probe.shape.input_dim != store.header().dim) {
    throw ContractError("probe expects d=" + std::to_string(probe.shape.input_dim) + " but store has d=" +
                        std::to_string(store.header().dim));
  }
  const LayerIndex index = index_layer(store, layer);
  std::vector<std::uint64_t> chosen(ids.begin(), ids.end());
  if (chosen.empty()) chosen = index.utterance_ids;
  const std::vector<std::uint64_t> records = resolve_ids(index, chosen);

  SlicePredictions out;
  out.utterance_ids = chosen;
  out.references.reserve(chosen.size());
  out.probs.reserve(chosen.size());
  out.predicted.reserve(chosen.size());
  std::vector<float> x(store.header().dim);
  for (std::size_t i = 0; i < records.size(); ++i) {
    store.read_vector_at(records[i], x);
    const auto result = probe_forward<float>(probe, x);
    out.references.push_back(index.label_of.at(chosen[i]));
    out.probs.push_back(result.probs);
    out.predicted.push_back(label_from_code(result.predicted()));
  }
  return out;
}

EvalReport evaluate_predictions(const SlicePredictions& predictions) {
  if (predictions.references.empty()) throw DataError("evaluate: empty slice");
  ConfusionMatrix confusion{};
  for (std::size_t i = 0; i < predictions.references.size(); ++i) {
    ++confusion[idx(predictions.references[i])][idx(predictions.predicted[i])];
  }
  return report_from_confusion(confusion);
}

EvalReport evaluate(const ProbeParams& probe, StoreReader& store, std::uint16_t layer,
                    std::span<const std::uint64_t> ids) {
  return evaluate_predictions(predict_slice(probe, store, layer, ids));
}

ReportDelta compare_reports(const EvalReport& a, const EvalReport& b) {
  ReportDelta d;
  d.accuracy = b.accuracy - a.accuracy;
  d.coverage = b.coverage - a.coverage;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    d.precision[c] = b.per_class[c].precision - a.per_class[c].precision;
    d.recall[c] = b.per_class[c].recall - a.per_class[c].recall;
    d.support[c] = static_cast<std::int64_t>(b.per_class[c].support) - static_cast<std::int64_t>(a.per_class[c].support);
  }
  return d;
}

std::string format_metric(double value) {
  if (std::isnan(value)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", value);
  return buf;
}

std::string report_to_json(const EvalReport& r) {
  json j;
  j["accuracy"] = r.accuracy_defined ? json(r.accuracy) : json(nullptr);
  j["accuracy_defined"] = r.accuracy_defined;
  j["coverage"] = r.coverage;
  j["total"] = r.total;
  j["valid"] = r.valid;
  j["invalid"] = r.invalid;
  json per_class = json::object();
  for (EmotionLabel label : kAllLabels) {
    const auto& m = r.per_class[idx(label)];
    per_class[std::string(label_name(label))] = {{"precision", m.precision},
                                                 {"recall", m.recall},
                                                 {"support", m.support},
                                                 {"predicted", m.predicted},
                                                 {"no_predictions", m.no_predictions}};
  }
  j["per_class"] = per_class;
  j["confusion"] = r.confusion;
  j["class_order"] = json::array();
  for (EmotionLabel label : kAllLabels) j["class_order"].push_back(std::string(label_name(label)));
  return j.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    const auto confusion = j.at("confusion").get<ConfusionMatrix>();
    const auto invalid = j.value("invalid", std::uint64_t{0});
    return report_from_confusion(confusion, invalid);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed evaluation report: ") + e.what());
  }
}

std::string render_report_table(const EvalReport& r) {
  std::ostringstream out;
  out << "accuracy  " << format_metric(r.accuracy) << "   coverage  " << format_metric(r.coverage)
      << "   valid " << r.valid << "/" << r.total << "\n\n";
  out << pad("class", 10) << pad("precision", 11) << pad("recall", 9) << "support\n";
  for (EmotionLabel label : kAllLabels) {
    const auto& m = r.per_class[idx(label)];
    out << pad(std::string(label_name(label)), 10) << pad(format_metric(m.precision) + (m.no_predictions ? "*" : ""), 11)
        << pad(format_metric(m.recall), 9) << m.support << "\n";
  }
  out << "\nconfusion (rows = reference, columns = predicted)\n" << pad("", 10);
  for (EmotionLabel label : kAllLabels) out << pad(std::string(label_name(label)), 10);
  out << "\n";
  for (EmotionLabel row : kAllLabels) {
    out << pad(std::string(label_name(row)), 10);
    for (EmotionLabel col : kAllLabels) out << pad(std::to_string(r.confusion[idx(row)][idx(col)]), 10);
    out << "\n";
  }
  bool flagged = false;
  for (const auto& m : r.per_class) flagged = flagged || m.no_predictions;
  if (flagged) out << "\n* class never predicted; precision reported as 0\n";
  return out.str();
}

std::string delta_to_json(const ReportDelta& d) {
  json j;
  j["accuracy"] = std::isnan(d.accuracy) ? json(nullptr) : json(d.accuracy);
  j["coverage"] = d.coverage;
  json per_class = json::object();
  for (EmotionLabel label : kAllLabels) {
    const auto c = idx(label);
    per_class[std::string(label_name(label))] = {
        {"precision", d.precision[c]}, {"recall", d.recall[c]}, {"support", d.support[c]}};
  }
  j["per_class"] = per_class;
  return j.dump(2) + "\n";
}

std::string render_delta_table(const ReportDelta& d) {
  std::ostringstream out;
  out << "accuracy  " << (std::isnan(d.accuracy) ? std::string("nan") : signed_metric(d.accuracy))
      << "   coverage  " << signed_metric(d.coverage) << "\n\n";
  out << pad("class", 10) << pad("precision", 11) << pad("recall", 9) << "support\n";
  for (EmotionLabel label : kAllLabels) {
    const auto c = idx(label);
    out << pad(std::string(label_name(label)), 10) << pad(signed_metric(d.precision[c]), 11)
        << pad(signed_metric(d.recall[c]), 9) << (d.support[c] >= 0 ? "+" : "") << d.support[c] << "\n";
  }
  return out.str();
}

}  // namespace emoprobe
