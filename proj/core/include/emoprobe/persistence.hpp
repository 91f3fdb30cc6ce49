#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emoprobe/label.hpp"
#include "emoprobe/probe.hpp"
#include "emoprobe/store.hpp"

namespace emoprobe {

inline constexpr std::uint32_t kDefaultSmoothingWindow = 21;
inline constexpr std::uint32_t kDefaultMaxOffset = 400;

// Accuracy of the offset-aware probe at reply offsets 0..raw.size()-1 for
// replies whose original user emotion is `emotion`.
struct DecayCurve {
  EmotionLabel emotion = EmotionLabel::kNeutral;
  bool pooled = false;  // true for the all-emotions curve
  std::vector<double> raw;
  std::vector<double> smoothed;
  std::vector<std::uint64_t> counts;   // replies with a record at k
  std::vector<std::uint64_t> correct;  // of those, predicted the original emotion
  std::uint32_t window = kDefaultSmoothingWindow;
};

// Centered moving average; windows are truncated at the series edges.
// Throws ContractError for an even or zero window.
std::vector<double> smooth(std::span<const double> raw, std::uint32_t window);

struct DecaySweep {
  std::vector<DecayCurve> curves;  // one per emotion present at k = 0, class-code order
  DecayCurve pooled;               // all replies together
  std::uint32_t max_offset = kDefaultMaxOffset;
};

// For k = 0..max_offset, counts replies with a record at offset k and how many
// of those the probe classifies as the reply's label (the original user
// emotion). A curve stops at the first k with no surviving replies.
// Throws DataError when the store has no record at offset 0.
DecaySweep decay_sweep(const ProbeParams& probe, StoreReader& store, std::uint16_t layer,
                       std::uint32_t window = kDefaultSmoothingWindow,
                       std::uint32_t max_offset = kDefaultMaxOffset,
                       std::span<const std::uint64_t> reply_ids = {});

// Flat table: emotion, k, raw, smoothed, n_k (tab-separated, header row).
std::string decay_table(const DecaySweep& sweep);

}  // namespace emoprobe
