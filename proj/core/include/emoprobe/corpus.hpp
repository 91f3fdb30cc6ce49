#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "emoprobe/label.hpp"

namespace emoprobe {

enum class Source { kNatural, kRewritten, kSynthetic };

std::string_view source_name(Source source);
Source parse_source(std::string_view name);

struct Utterance {
  std::uint64_t id = 0;
  std::string text;
  EmotionLabel label = EmotionLabel::kNeutral;
  Source source = Source::kNatural;

  bool operator==(const Utterance&) const = default;
};

// Line-delimited JSON, one object per line with keys id, text, label, source.
// Blank lines are skipped. Throws FormatError naming the line on bad input
// and DataError on duplicate ids.
std::vector<Utterance> read_corpus(std::istream& in);
std::vector<Utterance> read_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, const std::vector<Utterance>& corpus);

// Caller-supplied language gate. The default accepts everything.
using LanguagePredicate = std::function<bool(std::string_view)>;

std::size_t word_count(std::string_view text);

// Drops texts shorter than three words, texts the language predicate rejects,
// and exact duplicates (compared after trimming surrounding whitespace).
// First occurrences are kept in input order.
std::vector<Utterance> filter_corpus(const std::vector<Utterance>& raw,
                                     const LanguagePredicate& is_english = {});

using ClassIds = std::array<std::vector<std::uint64_t>, kNumClasses>;

struct SplitPlan {
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> train_ids;
  std::vector<std::uint64_t> test_ids;
  // One entry per class that had fewer than two members and so could not be
  // split on both sides.
  std::vector<std::string> warnings;

  bool operator==(const SplitPlan&) const = default;
};

inline constexpr double kTrainFraction = 0.9;

// Stratified by label: per class, floor(0.9 * n) ids go to train, the rest to
// test. Pure function of (corpus, seed).
SplitPlan split(const std::vector<Utterance>& corpus, std::uint64_t seed);

ClassIds group_by_label(const std::vector<Utterance>& corpus, const std::vector<std::uint64_t>& ids);

// Training-side balancing. M is the size of the largest emotion class
// (neutral excluded). Each emotion class keeps all its ids and gets
// M - n extra ids drawn with replacement. Neutral is drawn down to M without
// replacement (or topped up like the others if it is smaller than M).
// Output is grouped by class code; size is 7 * M.
std::vector<std::uint64_t> balance_train(const ClassIds& train, std::uint64_t seed);

// Test-side balancing: every class drawn without replacement down to the
// smallest class size m. Output size is 7 * m.
std::vector<std::uint64_t> balance_test(const ClassIds& test, std::uint64_t seed);

}  // namespace emoprobe
