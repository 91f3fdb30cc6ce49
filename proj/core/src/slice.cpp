#include "emoprobe/slice.hpp"

#include <string>

#include "emoprobe/errors.hpp"

namespace emoprobe {

LayerIndex index_layer(StoreReader& store, std::uint16_t layer) {
  LayerIndex index;
  index.layer = layer;
  for (std::uint64_t i = 0; i < store.size(); ++i) {
    const RecordKey key = store.read_key_at(i);
    if (key.layer_id != layer) continue;
    if (!index.record_of.emplace(key.utterance_id, i).second) {
      throw DataError("utterance " + std::to_string(key.utterance_id) + " has more than one record at layer " +
                      std::to_string(layer));
    }
    index.label_of.emplace(key.utterance_id, key.label);
    index.utterance_ids.push_back(key.utterance_id);
  }
  return index;
}

std::vector<std::uint64_t> resolve_ids(const LayerIndex& index, std::span<const std::uint64_t> ids) {
  std::vector<std::uint64_t> records;
  records.reserve(ids.size());
  for (std::uint64_t id : ids) {
    const auto it = index.record_of.find(id);
    if (it == index.record_of.end()) {
      throw DataError("utterance id " + std::to_string(id) + " has no record at layer " +
                      std::to_string(index.layer));
    }
    records.push_back(it->second);
  }
  return records;
}

ClassIds class_ids(const LayerIndex& index) {
  ClassIds grouped;
  for (std::uint64_t id : index.utterance_ids) {
    grouped[static_cast<std::size_t>(code(index.label_of.at(id)))].push_back(id);
  }
  return grouped;
}

ClassIds class_ids(const LayerIndex& index, std::span<const std::uint64_t> subset) {
  ClassIds grouped;
  for (std::uint64_t id : subset) {
    const auto it = index.label_of.find(id);
    if (it == index.label_of.end()) {
      throw DataError("utterance id " + std::to_string(id) + " has no record at layer " +
                      std::to_string(index.layer));
    }
    grouped[static_cast<std::size_t>(code(it->second))].push_back(id);
  }
  return grouped;
}

std::vector<Utterance> label_corpus(const LayerIndex& index) {
  std::vector<Utterance> corpus;
  corpus.reserve(index.utterance_ids.size());
  for (std::uint64_t id : index.utterance_ids) {
    Utterance u;
    u.id = id;
    u.label = index.label_of.at(id);
    corpus.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace emoprobe
