#include "emoprobe/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "emoprobe/errors.hpp"
#include "emoprobe/random.hpp"

namespace emoprobe {
namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  constexpr std::string_view kSpace = " \t\r\n\f\v";
  const auto first = s.find_first_not_of(kSpace);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(kSpace);
  return s.substr(first, last - first + 1);
}

// Partial Fisher-Yates: the first k entries become a uniform sample without
// replacement.
void partial_shuffle(std::vector<std::uint64_t>& ids, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k && i + 1 < ids.size(); ++i) {
    const auto j = i + uniform_index(rng, ids.size() - i);
    std::swap(ids[i], ids[j]);
  }
}

}  // namespace

std::string_view source_name(Source source) {
  switch (source) {
    case Source::kNatural: return "natural";
    case Source::kRewritten: return "rewritten";
    case Source::kSynthetic: return "synthetic";
  }
  return "natural";
}

Source parse_source(std::string_view name) {
  if (name == "natural") return Source::kNatural;
  if (name == "rewritten") return Source::kRewritten;
  if (name == "synthetic") return Source::kSynthetic;
  throw DataError("unknown utterance source '" + std::string(name) + "'");
}

std::vector<Utterance> read_corpus(std::istream& in) {
  std::vector<Utterance> corpus;
  std::unordered_set<std::uint64_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    Utterance u;
    try {
      const json j = json::parse(line);
      u.id = j.at("id").get<std::uint64_t>();
      u.text = j.at("text").get<std::string>();
      u.label = parse_label(j.at("label").get<std::string>());
      u.source = parse_source(j.at("source").get<std::string>());
    } catch (const json::exception& e) {
      throw FormatError("corpus line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw FormatError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(u.id).second) {
      throw DataError("corpus line " + std::to_string(line_no) + ": duplicate id " + std::to_string(u.id));
    }
    corpus.push_back(std::move(u));
  }
  return corpus;
}

std::vector<Utterance> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus: " + path.string());
  return read_corpus(in);
}

void write_corpus(std::ostream& out, const std::vector<Utterance>& corpus) {
  for (const auto& u : corpus) {
    json j;
    j["id"] = u.id;
    j["text"] = u.text;
    j["label"] = std::string(label_name(u.label));
    j["source"] = std::string(source_name(u.source));
    out << j.dump() << '\n';
  }
}

std::size_t word_count(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (char ch : text) {
    const bool space = ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\f' || ch == '\v';
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return words;
}

std::vector<Utterance> filter_corpus(const std::vector<Utterance>& raw,
                                     const LanguagePredicate& is_english) {
  std::vector<Utterance> kept;
  std::unordered_set<std::string_view> seen;
  for (const auto& u : raw) {
    if (word_count(u.text) < 3) continue;
    if (is_english && !is_english(u.text)) continue;
    // Views point into `raw`, which outlives the set.
    if (!seen.insert(trim(u.text)).second) continue;
    kept.push_back(u);
  }
  return kept;
}

ClassIds group_by_label(const std::vector<Utterance>& corpus, const std::vector<std::uint64_t>& ids) {
  std::unordered_map<std::uint64_t, EmotionLabel> labels;
  labels.reserve(corpus.size());
  for (const auto& u : corpus) labels.emplace(u.id, u.label);
  ClassIds grouped;
  for (std::uint64_t id : ids) {
    const auto it = labels.find(id);
    if (it == labels.end()) throw DataError("id " + std::to_string(id) + " not in corpus");
    grouped[static_cast<std::size_t>(code(it->second))].push_back(id);
  }
  return grouped;
}

SplitPlan split(const std::vector<Utterance>& corpus, std::uint64_t seed) {
  if (corpus.empty()) throw ContractError("split: corpus is empty");
  ClassIds by_class;
  for (const auto& u : corpus) by_class[static_cast<std::size_t>(code(u.label))].push_back(u.id);

  SplitPlan plan;
  plan.seed = seed;
  for (int c = 0; c < kNumClasses; ++c) {
    auto ids = by_class[static_cast<std::size_t>(c)];
    if (ids.empty()) continue;
    if (ids.size() < 2) {
      plan.warnings.push_back("class '" + std::string(label_name(label_from_code(c))) + "' has " +
                              std::to_string(ids.size()) + " member(s); cannot stratify");
    }
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    partial_shuffle(ids, ids.size(), rng);
    const auto n_train = static_cast<std::size_t>(kTrainFraction * static_cast<double>(ids.size()));
    plan.train_ids.insert(plan.train_ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    plan.test_ids.insert(plan.test_ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  }
  return plan;
}

std::vector<std::uint64_t> balance_train(const ClassIds& train, std::uint64_t seed) {
  std::size_t target = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (c == kNeutralCode) continue;
    target = std::max(target, train[static_cast<std::size_t>(c)].size());
  }
  if (target == 0) throw DataError("balance_train: every emotion class is empty");
  for (int c = 0; c < kNumClasses; ++c) {
    if (train[static_cast<std::size_t>(c)].empty()) {
      throw DataError("balance_train: class '" + std::string(label_name(label_from_code(c))) +
                      "' is empty; cannot oversample from nothing");
    }
  }

  std::vector<std::uint64_t> out;
  out.reserve(target * kNumClasses);
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& ids = train[static_cast<std::size_t>(c)];
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    if (ids.size() >= target) {
      // Only neutral can exceed the emotion maximum.
      auto pool = ids;
      partial_shuffle(pool, target, rng);
      out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(target));
    } else {
      out.insert(out.end(), ids.begin(), ids.end());
      for (std::size_t k = ids.size(); k < target; ++k) out.push_back(ids[uniform_index(rng, ids.size())]);
    }
  }
  return out;
}

std::vector<std::uint64_t> balance_test(const ClassIds& test, std::uint64_t seed) {
  std::size_t target = std::numeric_limits<std::size_t>::max();
  for (int c = 0; c < kNumClasses; ++c) {
    const auto n = test[static_cast<std::size_t>(c)].size();
    if (n == 0) {
      throw DataError("balance_test: class '" + std::string(label_name(label_from_code(c))) + "' is empty");
    }
    target = std::min(target, n);
  }
  std::vector<std::uint64_t> out;
  out.reserve(target * kNumClasses);
  for (int c = 0; c < kNumClasses; ++c) {
    auto pool = test[static_cast<std::size_t>(c)];
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    partial_shuffle(pool, target, rng);
    out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(target));
  }
  return out;
}

}  // namespace emoprobe
