#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "emoprobe/probe.hpp"
#include "emoprobe/store.hpp"

namespace emoprobe {

struct LossSample {
  std::uint64_t step = 0;  // 1-based optimizer step
  double loss = 0.0;

  bool operator==(const LossSample&) const = default;
};

struct RunRecord {
  std::string kind;  // "pooled" or "offset"
  std::uint16_t layer = 0;
  TrainConfig config;
  std::uint64_t seed = 0;
  std::uint64_t examples_per_epoch = 0;
  std::uint64_t steps = 0;
  std::uint32_t offsets_per_reply = 0;  // offset-aware runs only
  std::vector<LossSample> losses;
  double final_train_loss = 0.0;
  double wall_time_s = 0.0;
};

// wall_time_s is the only field that varies between identical runs; pass
// include_timing = false to get a byte-stable report.
std::string run_record_to_json(const RunRecord& record, bool include_timing = true);

std::uint64_t steps_per_epoch(std::uint64_t examples, std::uint32_t batch_size);

// Trains a pooled probe on the records of `layer` named by `balanced_ids`
// (a multiset of utterance ids). Single-threaded and deterministic for a
// fixed config.seed.
std::pair<ProbeParams, RunRecord> train_probe(StoreReader& store, std::uint16_t layer,
                                              std::span<const std::uint64_t> balanced_ids,
                                              const TrainConfig& config);

// Trains an offset-aware probe on a per-token store. Every epoch draws
// config.offsets_per_reply records (with replacement) from each reply.
// `reply_ids` restricts training to those replies; empty means all replies.
std::pair<ProbeParams, RunRecord> train_offset_probe(StoreReader& store, std::uint16_t layer,
                                                     const TrainConfig& config,
                                                     std::span<const std::uint64_t> reply_ids = {});

}  // namespace emoprobe
