#include "emoprobe/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "emoprobe/errors.hpp"

namespace emoprobe {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 3> kSources = {"natural", "rewritten", "synthetic"};

bool known_source(std::string_view s) {
  return std::find(kSources.begin(), kSources.end(), s) != kSources.end();
}

}  // namespace

std::string_view checkpoint_tag_name(CheckpointTag tag) {
  switch (tag) {
    case CheckpointTag::kPretrained: return "pre-trained";
    case CheckpointTag::kSftRaw: return "sft-raw";
    case CheckpointTag::kSftTemplate: return "sft-template";
  }
  return "pre-trained";
}

CheckpointTag parse_checkpoint_tag(std::string_view name) {
  if (name == "pre-trained") return CheckpointTag::kPretrained;
  if (name == "sft-raw") return CheckpointTag::kSftRaw;
  if (name == "sft-template") return CheckpointTag::kSftTemplate;
  throw DataError("unknown checkpoint tag '" + std::string(name) + "'");
}

LabelCounts Manifest::label_totals() const {
  LabelCounts totals{};
  for (const auto& [source, per_label] : counts) {
    for (std::size_t c = 0; c < totals.size(); ++c) totals[c] += per_label[c];
  }
  return totals;
}

std::uint64_t Manifest::counted_total() const {
  const LabelCounts totals = label_totals();
  return std::accumulate(totals.begin(), totals.end(), std::uint64_t{0});
}

void Manifest::validate() const {
  for (const auto& [source, per_label] : counts) {
    if (!known_source(source)) throw DataError("manifest: unknown source '" + source + "'");
  }
  if (counted_total() != total_utterances) {
    throw DataError("manifest: counts sum to " + std::to_string(counted_total()) +
                    " but total_utterances is " + std::to_string(total_utterances));
  }
}

std::filesystem::path manifest_path_for(const std::filesystem::path& store_path) {
  return std::filesystem::path(store_path.string() + ".manifest.json");
}

std::string manifest_to_json(const Manifest& manifest) {
  json j;
  j["checkpoint_tag"] = std::string(checkpoint_tag_name(manifest.checkpoint_tag));
  json counts = json::object();
  for (const auto& [source, per_label] : manifest.counts) {
    json row = json::object();
    for (EmotionLabel label : kAllLabels) {
      row[std::string(label_name(label))] = per_label[static_cast<std::size_t>(code(label))];
    }
    counts[source] = row;
  }
  j["counts"] = counts;
  j["total_utterances"] = manifest.total_utterances;
  j["layers"] = manifest.layers;
  json split = json::object();
  split["stratified_by"] = manifest.split_stratified_by;
  split["seed"] = manifest.split_seed ? json(*manifest.split_seed) : json(nullptr);
  j["split"] = split;
  j["attributes"] = manifest.attributes;
  return j.dump(2) + "\n";
}

Manifest manifest_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  Manifest m;
  try {
    m.checkpoint_tag = parse_checkpoint_tag(j.at("checkpoint_tag").get<std::string>());
    for (const auto& [source, row] : j.at("counts").items()) {
      LabelCounts per_label{};
      for (const auto& [name, value] : row.items()) {
        const auto count = value.get<std::int64_t>();
        if (count < 0) throw DataError("manifest: negative count for " + source + "/" + name);
        per_label[static_cast<std::size_t>(code(parse_label(name)))] = static_cast<std::uint64_t>(count);
      }
      m.counts[source] = per_label;
    }
    m.total_utterances = j.at("total_utterances").get<std::uint64_t>();
    if (j.contains("layers")) m.layers = j.at("layers").get<std::vector<std::uint16_t>>();
    if (j.contains("split")) {
      const auto& split = j.at("split");
      if (split.contains("stratified_by")) m.split_stratified_by = split.at("stratified_by").get<std::string>();
      if (split.contains("seed") && !split.at("seed").is_null()) m.split_seed = split.at("seed").get<std::uint64_t>();
    }
    if (j.contains("attributes")) m.attributes = j.at("attributes").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  manifest.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  out << manifest_to_json(manifest);
  if (!out) throw IoError("write failed: " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return manifest_from_json(text.str());
}

}  // namespace emoprobe
