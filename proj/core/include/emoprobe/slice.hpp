#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "emoprobe/corpus.hpp"
#include "emoprobe/store.hpp"

namespace emoprobe {

// Pooled records of one layer, keyed by utterance id.
struct LayerIndex {
  std::uint16_t layer = 0;
  std::unordered_map<std::uint64_t, std::uint64_t> record_of;  // utterance id -> record index
  std::unordered_map<std::uint64_t, EmotionLabel> label_of;
  std::vector<std::uint64_t> utterance_ids;  // file order
};

// Throws DataError if an utterance has more than one record at `layer`.
LayerIndex index_layer(StoreReader& store, std::uint16_t layer);

// Record indices for `ids` (duplicates kept). Throws DataError naming the
// first id that has no record at the indexed layer.
std::vector<std::uint64_t> resolve_ids(const LayerIndex& index, std::span<const std::uint64_t> ids);

// Utterance ids at the layer grouped by label, optionally restricted to `subset`.
ClassIds class_ids(const LayerIndex& index);
ClassIds class_ids(const LayerIndex& index, std::span<const std::uint64_t> subset);

// (id, label) pairs of the indexed layer as a label-only corpus, for split().
std::vector<Utterance> label_corpus(const LayerIndex& index);

}  // namespace emoprobe
