#include "emoprobe/persistence.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <unordered_set>

#include "emoprobe/errors.hpp"

namespace emoprobe {
namespace {

DecayCurve finish_curve(EmotionLabel emotion, bool pooled, const std::vector<std::uint64_t>& counts,
                        const std::vector<std::uint64_t>& correct, std::uint32_t window) {
  DecayCurve curve;
  curve.emotion = emotion;
  curve.pooled = pooled;
  curve.window = window;
  for (std::size_t k = 0; k < counts.size() && counts[k] > 0; ++k) {
    curve.counts.push_back(counts[k]);
    curve.correct.push_back(correct[k]);
    curve.raw.push_back(static_cast<double>(correct[k]) / static_cast<double>(counts[k]));
  }
  curve.smoothed = smooth(curve.raw, window);
  return curve;
}

}  // namespace

std::vector<double> smooth(std::span<const double> raw, std::uint32_t window) {
  if (window == 0 || window % 2 == 0) throw ContractError("smoothing window must be odd and >= 1");
  const std::size_t half = window / 2;
  const std::size_t n = raw.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    double sum = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) sum += raw[j];
    out[i] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

DecaySweep decay_sweep(const ProbeParams& probe, StoreReader& store, std::uint16_t layer, std::uint32_t window,
                       std::uint32_t max_offset, std::span<const std::uint64_t> reply_ids) {
  if (!probe.shape.has_offset_table()) throw ContractError("decay_sweep needs an offset-aware probe");
  if (probe.shape.input_dim != store.header().dim) throw ContractError("probe and store dimensions differ");
  if (max_offset > probe.shape.k_max) throw ContractError("max_offset exceeds the probe's k_max");
  if (window == 0 || window % 2 == 0) throw ContractError("smoothing window must be odd and >= 1");

  const std::unordered_set<std::uint64_t> wanted(reply_ids.begin(), reply_ids.end());
  const std::size_t len = static_cast<std::size_t>(max_offset) + 1;
  std::vector<std::vector<std::uint64_t>> counts(kNumClasses, std::vector<std::uint64_t>(len, 0));
  std::vector<std::vector<std::uint64_t>> correct(kNumClasses, std::vector<std::uint64_t>(len, 0));
  std::vector<std::uint64_t> all_counts(len, 0), all_correct(len, 0);

  std::vector<float> h(store.header().dim);
  for (std::uint64_t i = 0; i < store.size(); ++i) {
    const RecordKey key = store.read_key_at(i);
    if (key.layer_id != layer || key.token_offset > max_offset) continue;
    if (!wanted.empty() && !wanted.contains(key.utterance_id)) continue;
    store.read_vector_at(i, h);
    const auto out = offset_forward<float>(probe, h, key.token_offset);
    const auto c = static_cast<std::size_t>(code(key.label));
    const bool hit = out.predicted() == code(key.label);
    ++counts[c][key.token_offset];
    ++all_counts[key.token_offset];
    if (hit) {
      ++correct[c][key.token_offset];
      ++all_correct[key.token_offset];
    }
  }
  if (all_counts[0] == 0) throw DataError("decay_sweep: no records at offset 0");

  DecaySweep sweep;
  sweep.max_offset = max_offset;
  for (EmotionLabel emotion : kAllLabels) {
    const auto c = static_cast<std::size_t>(code(emotion));
    if (counts[c][0] == 0) continue;
    sweep.curves.push_back(finish_curve(emotion, false, counts[c], correct[c], window));
  }
  sweep.pooled = finish_curve(EmotionLabel::kNeutral, true, all_counts, all_correct, window);
  return sweep;
}

std::string decay_table(const DecaySweep& sweep) {
  std::ostringstream out;
  out << "emotion\tk\traw\tsmoothed\tn_k\n";
  char buf[96];
  auto emit = [&](const DecayCurve& curve, std::string_view name) {
    for (std::size_t k = 0; k < curve.raw.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "\t%zu\t%.6f\t%.6f\t%llu\n", k, curve.raw[k], curve.smoothed[k],
                    static_cast<unsigned long long>(curve.counts[k]));
      out << name << buf;
    }
  };
  for (const auto& curve : sweep.curves) emit(curve, label_name(curve.emotion));
  emit(sweep.pooled, "all");
  return out.str();
}

}  // namespace emoprobe
