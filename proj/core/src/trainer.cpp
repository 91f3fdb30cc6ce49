#include "emoprobe/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <unordered_set>

#include <json.hpp>

#include "emoprobe/checkpoint.hpp"
#include "emoprobe/errors.hpp"
#include "emoprobe/random.hpp"
#include "emoprobe/slice.hpp"

namespace emoprobe {
namespace {

struct Item {
  std::uint64_t record = 0;
  std::uint32_t offset = 0;
  int label = 0;
};

void shuffle_items(std::vector<Item>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

// Runs epochs x ceil(N/B) Adam steps. `epoch_items(epoch)` supplies that
// epoch's examples before shuffling.
template <typename MakeItems>
RunRecord optimize(StoreReader& store, ProbeParams& params, const TrainConfig& config,
                   std::uint64_t examples_per_epoch, MakeItems&& epoch_items) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint32_t dim = store.header().dim;
  const std::uint64_t per_epoch = steps_per_epoch(examples_per_epoch, config.batch_size);
  const std::uint64_t total = per_epoch * config.epochs;

  RunRecord record;
  record.config = config;
  record.seed = config.seed;
  record.examples_per_epoch = examples_per_epoch;
  record.steps = total;

  auto state = AdamState<float>::zeros(params.shape);
  ProbeParams grad = ProbeParams::zeros(params.shape);
  std::vector<float> vectors(static_cast<std::size_t>(config.batch_size) * dim);
  std::vector<Example<float>> batch;
  batch.reserve(config.batch_size);

  std::uint64_t step = 0;
  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<Item> items = epoch_items(epoch);
    Rng rng(derive_seed(config.seed, 0xE0C0 + epoch));
    shuffle_items(items, rng);
    for (std::size_t begin = 0; begin < items.size(); begin += config.batch_size) {
      const std::size_t end = std::min(items.size(), begin + config.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) {
        std::span<float> slot(vectors.data() + (i - begin) * dim, dim);
        store.read_vector_at(items[i].record, slot);
        batch.push_back({slot, items[i].offset, items[i].label});
      }
      const double lr = lr_at_step(config, step, total);
      const float loss = probe_loss_grad<float>(params, batch, grad);
      ++step;
      adam_step(params, grad, state, step, lr);
      if (step % config.log_every == 0 || step == total) record.losses.push_back({step, loss});
      record.final_train_loss = loss;
    }
  }
  record.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

}  // namespace

std::uint64_t steps_per_epoch(std::uint64_t examples, std::uint32_t batch_size) {
  if (batch_size == 0) throw ContractError("batch_size must be >= 1");
  return (examples + batch_size - 1) / batch_size;
}

std::string run_record_to_json(const RunRecord& r, bool include_timing) {
  nlohmann::json j;
  j["kind"] = r.kind;
  j["layer"] = r.layer;
  j["config"] = nlohmann::json::parse(train_config_to_json(r.config));
  j["seed"] = r.seed;
  j["examples_per_epoch"] = r.examples_per_epoch;
  j["steps"] = r.steps;
  if (r.kind == "offset") j["offsets_per_reply"] = r.offsets_per_reply;
  nlohmann::json losses = nlohmann::json::array();
  for (const auto& s : r.losses) losses.push_back({{"step", s.step}, {"loss", s.loss}});
  j["losses"] = losses;
  j["final_train_loss"] = r.final_train_loss;
  if (include_timing) j["wall_time_s"] = r.wall_time_s;
  return j.dump(2) + "\n";
}

std::pair<ProbeParams, RunRecord> train_probe(StoreReader& store, std::uint16_t layer,
                                              std::span<const std::uint64_t> balanced_ids,
                                              const TrainConfig& config) {
  config.validate();
  if (balanced_ids.empty()) throw DataError("train_probe: no training ids");
  const LayerIndex index = index_layer(store, layer);
  const std::vector<std::uint64_t> records = resolve_ids(index, balanced_ids);

  std::vector<Item> base(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    base[i].record = records[i];
    base[i].label = code(index.label_of.at(balanced_ids[i]));
  }

  ProbeShape shape{store.header().dim, config.hidden_width, 0, 0};
  ProbeParams params = init_probe(shape, config.seed);
  RunRecord record = optimize(store, params, config, base.size(), [&](std::uint32_t) { return base; });
  record.kind = "pooled";
  record.layer = layer;
  return {std::move(params), std::move(record)};
}

std::pair<ProbeParams, RunRecord> train_offset_probe(StoreReader& store, std::uint16_t layer,
                                                     const TrainConfig& config,
                                                     std::span<const std::uint64_t> reply_ids) {
  config.validate();
  if (config.offset_embed_dim == 0) throw ContractError("offset probe needs offset_embed_dim >= 1");

  std::unordered_set<std::uint64_t> wanted(reply_ids.begin(), reply_ids.end());
  // Sorted by reply id so visitation does not depend on file order.
  std::map<std::uint64_t, std::vector<std::pair<std::uint64_t, std::uint32_t>>> replies;
  std::map<std::uint64_t, EmotionLabel> reply_label;
  for (std::uint64_t i = 0; i < store.size(); ++i) {
    const RecordKey key = store.read_key_at(i);
    if (key.layer_id != layer) continue;
    if (!wanted.empty() && !wanted.contains(key.utterance_id)) continue;
    if (key.token_offset > config.k_max) {
      throw DataError("record " + std::to_string(i) + " has token offset " + std::to_string(key.token_offset) +
                      " beyond k_max " + std::to_string(config.k_max));
    }
    auto [it, inserted] = reply_label.emplace(key.utterance_id, key.label);
    if (!inserted && it->second != key.label) {
      throw DataError("reply " + std::to_string(key.utterance_id) + " carries more than one label");
    }
    replies[key.utterance_id].emplace_back(i, key.token_offset);
  }
  if (replies.empty()) throw DataError("train_offset_probe: no per-token records at layer " + std::to_string(layer));

  ProbeShape shape{store.header().dim, config.hidden_width, config.offset_embed_dim, config.k_max};
  ProbeParams params = init_probe(shape, config.seed);
  const std::uint64_t per_epoch = replies.size() * config.offsets_per_reply;

  auto sample_epoch = [&](std::uint32_t epoch) {
    Rng rng(derive_seed(config.seed, 0x0FF5E7 + epoch));
    std::vector<Item> items;
    items.reserve(per_epoch);
    for (const auto& [reply, recs] : replies) {
      const int label = code(reply_label.at(reply));
      for (std::uint32_t s = 0; s < config.offsets_per_reply; ++s) {
        const auto& [r, offset] = recs[uniform_index(rng, recs.size())];
        items.push_back({r, offset, label});
      }
    }
    return items;
  };

  RunRecord record = optimize(store, params, config, per_epoch, sample_epoch);
  record.kind = "offset";
  record.layer = layer;
  record.offsets_per_reply = config.offsets_per_reply;
  return {std::move(params), std::move(record)};
}

}  // namespace emoprobe
