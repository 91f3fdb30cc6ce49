#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace emoprobe {

// Ekman-6 plus neutral. Codes follow alphabetical order of the names and are
// part of the on-disk format.
enum class EmotionLabel : std::uint8_t {
  kAnger = 0,
  kDisgust = 1,
  kFear = 2,
  kJoy = 3,
  kNeutral = 4,
  kSadness = 5,
  kSurprise = 6,
};

inline constexpr int kNumClasses = 7;
inline constexpr int kNeutralCode = 4;

inline constexpr std::array<EmotionLabel, kNumClasses> kAllLabels = {
    EmotionLabel::kAnger, EmotionLabel::kDisgust, EmotionLabel::kFear,
    EmotionLabel::kJoy,   EmotionLabel::kNeutral, EmotionLabel::kSadness,
    EmotionLabel::kSurprise};

constexpr int code(EmotionLabel label) { return static_cast<int>(label); }

std::string_view label_name(EmotionLabel label);

// Throws ContractError for anything outside 0..6.
EmotionLabel label_from_code(int code);

// Exact, case-sensitive match against the seven names. Throws DataError otherwise.
EmotionLabel parse_label(std::string_view name);

std::optional<EmotionLabel> try_parse_label(std::string_view name);

}  // namespace emoprobe
