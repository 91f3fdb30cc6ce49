#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "emoprobe/probe.hpp"

namespace emoprobe {

// Probe checkpoint file, little-endian:
//   magic "APROBECK", version u32 = 1,
//   d_in u32 (first-layer width), h u32, e u32, k_max u32, reserved u32 = 0,
//   seed u64, config length u32, config JSON bytes,
//   then f32 blocks W1, b1, W2, b2 and, when e > 0, the offset table.
struct Checkpoint {
  ProbeParams params;
  std::uint64_t seed = 0;
  std::string config_json;

  bool operator==(const Checkpoint&) const = default;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string train_config_to_json(const TrainConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(std::string_view text, TrainConfig base = {});

}  // namespace emoprobe
