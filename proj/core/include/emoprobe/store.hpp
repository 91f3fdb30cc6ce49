#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "emoprobe/label.hpp"

namespace emoprobe {

// Binary activation store.
//
// Layout, all little-endian:
//   0..7    magic "APROBE01"
//   8..11   format version (u32, = 1)
//   12..15  vector dimension d (u32)
//   16..23  record count (u64)
//   24..27  layer count L (u32)
//   28..31  reserved (u32, = 0)
//   then L sorted u16 layer ids
//   then fixed-stride records: utterance_id u64, layer_id u16,
//   token_offset u32, label u8, d x f32.

inline constexpr std::array<char, 8> kStoreMagic = {'A', 'P', 'R', 'O', 'B', 'E', '0', '1'};
inline constexpr std::uint32_t kStoreVersion = 1;
inline constexpr std::uint64_t kStoreFixedHeaderBytes = 32;
inline constexpr std::uint64_t kRecordFixedBytes = 15;

struct StoreHeader {
  std::uint32_t format_version = kStoreVersion;
  std::uint32_t dim = 0;
  std::uint64_t record_count = 0;
  std::vector<std::uint16_t> layer_ids;  // sorted, unique

  std::uint64_t data_offset() const {
    return kStoreFixedHeaderBytes + 2 * static_cast<std::uint64_t>(layer_ids.size());
  }
  std::uint64_t record_stride() const { return kRecordFixedBytes + 4 * static_cast<std::uint64_t>(dim); }

  bool operator==(const StoreHeader&) const = default;
};

struct ActivationRecord {
  std::uint64_t utterance_id = 0;
  std::uint16_t layer_id = 0;
  std::uint32_t token_offset = 0;
  EmotionLabel label = EmotionLabel::kNeutral;
  std::vector<float> vector;

  bool operator==(const ActivationRecord&) const = default;
};

// Fixed fields of a record, without its vector.
struct RecordKey {
  std::uint64_t utterance_id = 0;
  std::uint16_t layer_id = 0;
  std::uint32_t token_offset = 0;
  EmotionLabel label = EmotionLabel::kNeutral;
};

// Streams records to disk. The record count in the header is patched on
// close() to the number of records actually appended. Layer ids must be
// declared up front because they precede the records.
class StoreWriter {
 public:
  StoreWriter(const std::filesystem::path& path, std::uint32_t dim,
              std::vector<std::uint16_t> layer_ids);
  ~StoreWriter();

  StoreWriter(const StoreWriter&) = delete;
  StoreWriter& operator=(const StoreWriter&) = delete;

  void append(const ActivationRecord& record);
  void append(std::uint64_t utterance_id, std::uint16_t layer_id, std::uint32_t token_offset,
              EmotionLabel label, std::span<const float> vector);

  // Finalizes the header and returns the total file size in bytes.
  std::uint64_t close();

  std::uint64_t records_written() const { return count_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  StoreHeader header_;
  std::uint64_t count_ = 0;
  bool closed_ = false;
  std::vector<char> buffer_;
};

// Reads a store. Header and file size are validated on open; records are
// streamed one at a time or fetched by index (records are fixed-stride).
// Each reader owns its file handle, so concurrent readers on one file are fine.
class StoreReader {
 public:
  explicit StoreReader(const std::filesystem::path& path);

  const StoreHeader& header() const { return header_; }
  const std::filesystem::path& path() const { return path_; }
  std::uint64_t size() const { return header_.record_count; }

  // Sequential iteration. Returns false after the last record.
  bool next(ActivationRecord& record);
  void rewind();

  ActivationRecord read_at(std::uint64_t index);
  // Reads only the vector of record `index` into `out` (length d).
  void read_vector_at(std::uint64_t index, std::span<float> out);
  RecordKey read_key_at(std::uint64_t index);

  // Fixed fields of every record, in file order. Vectors are not touched.
  std::vector<RecordKey> scan_keys();

 private:
  void read_record_bytes(std::uint64_t index);
  RecordKey decode_key(std::uint64_t index) const;

  std::filesystem::path path_;
  std::ifstream in_;
  StoreHeader header_;
  std::uint64_t cursor_ = 0;
  std::vector<char> buffer_;
};

std::uint64_t write_store(const std::filesystem::path& path, const StoreHeader& header,
                          std::span<const ActivationRecord> records);

// Reads a whole store into memory. Convenience for small stores and tests.
std::pair<StoreHeader, std::vector<ActivationRecord>> read_store(const std::filesystem::path& path);

struct StoreStats {
  std::array<std::uint64_t, kNumClasses> per_label{};
  std::map<std::uint16_t, std::uint64_t> per_layer;
  std::uint64_t record_count = 0;
};

StoreStats store_stats(const std::filesystem::path& path);

}  // namespace emoprobe
