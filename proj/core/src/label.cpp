#include "emoprobe/label.hpp"

#include <string>

#include "emoprobe/errors.hpp"

namespace emoprobe {
namespace {

constexpr std::array<std::string_view, kNumClasses> kNames = {
    "anger", "disgust", "fear", "joy", "neutral", "sadness", "surprise"};

}  // namespace

std::string_view label_name(EmotionLabel label) {
  return kNames.at(static_cast<std::size_t>(code(label)));
}

EmotionLabel label_from_code(int c) {
  if (c < 0 || c >= kNumClasses) {
    throw ContractError("emotion code out of range: " + std::to_string(c));
  }
  return static_cast<EmotionLabel>(c);
}

std::optional<EmotionLabel> try_parse_label(std::string_view name) {
  for (int c = 0; c < kNumClasses; ++c) {
    if (kNames[static_cast<std::size_t>(c)] == name) return static_cast<EmotionLabel>(c);
  }
  return std::nullopt;
}

EmotionLabel parse_label(std::string_view name) {
  if (auto label = try_parse_label(name)) return *label;
  throw DataError("unknown emotion label '" + std::string(name) + "'");
}

}  // namespace emoprobe
