#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emoprobe/label.hpp"

namespace emoprobe {

enum class CheckpointTag { kPretrained, kSftRaw, kSftTemplate };

std::string_view checkpoint_tag_name(CheckpointTag tag);
CheckpointTag parse_checkpoint_tag(std::string_view name);

using LabelCounts = std::array<std::uint64_t, kNumClasses>;

// Human-readable provenance sidecar written next to a store as
// "<store>.manifest.json".
struct Manifest {
  // source name ("natural", "rewritten", "synthetic") -> per-label counts
  std::map<std::string, LabelCounts> counts;
  std::uint64_t total_utterances = 0;
  std::optional<std::uint64_t> split_seed;
  std::string split_stratified_by = "label";
  CheckpointTag checkpoint_tag = CheckpointTag::kPretrained;
  std::vector<std::uint16_t> layers;
  std::map<std::string, std::string> attributes;

  LabelCounts label_totals() const;
  std::uint64_t counted_total() const;

  // Throws DataError when counts do not sum to total_utterances or a source
  // name is unknown.
  void validate() const;
};

std::filesystem::path manifest_path_for(const std::filesystem::path& store_path);

std::string manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(std::string_view text);

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace emoprobe
