#include "emoprobe/store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "emoprobe/errors.hpp"

namespace emoprobe {
namespace {

template <typename T>
void put_le(char* dst, T value) {
  using U = std::make_unsigned_t<T>;
  auto bits = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    dst[i] = static_cast<char>(bits & 0xFFu);
    bits = static_cast<U>(bits >> 8);
  }
}

template <typename T>
T get_le(const char* src) {
  using U = std::make_unsigned_t<T>;
  U bits = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) {
    bits = static_cast<U>((bits << 8) | static_cast<unsigned char>(src[i]));
  }
  return static_cast<T>(bits);
}

void put_f32(char* dst, float value) { put_le<std::uint32_t>(dst, std::bit_cast<std::uint32_t>(value)); }
float get_f32(const char* src) { return std::bit_cast<float>(get_le<std::uint32_t>(src)); }

std::vector<std::uint16_t> normalized_layers(std::vector<std::uint16_t> layers) {
  std::sort(layers.begin(), layers.end());
  layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
  return layers;
}

void encode_fixed_header(const StoreHeader& header, char* out) {
  std::memcpy(out, kStoreMagic.data(), kStoreMagic.size());
  put_le<std::uint32_t>(out + 8, header.format_version);
  put_le<std::uint32_t>(out + 12, header.dim);
  put_le<std::uint64_t>(out + 16, header.record_count);
  put_le<std::uint32_t>(out + 24, static_cast<std::uint32_t>(header.layer_ids.size()));
  put_le<std::uint32_t>(out + 28, 0);
}

}  // namespace

// ---------------------------------------------------------------------------
// StoreWriter

StoreWriter::StoreWriter(const std::filesystem::path& path, std::uint32_t dim,
                         std::vector<std::uint16_t> layer_ids)
    : path_(path) {
  if (dim == 0) throw ContractError("store dimension must be >= 1");
  header_.dim = dim;
  header_.layer_ids = normalized_layers(std::move(layer_ids));
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open store for writing: " + path.string());

  std::vector<char> head(header_.data_offset());
  encode_fixed_header(header_, head.data());
  for (std::size_t i = 0; i < header_.layer_ids.size(); ++i) {
    put_le<std::uint16_t>(head.data() + kStoreFixedHeaderBytes + 2 * i, header_.layer_ids[i]);
  }
  out_.write(head.data(), static_cast<std::streamsize>(head.size()));
  if (!out_) throw IoError("write failed: " + path.string());
  buffer_.resize(header_.record_stride());
}

StoreWriter::~StoreWriter() {
  if (!closed_) {
    try {
      close();
    } catch (...) {
    }
  }
}

void StoreWriter::append(const ActivationRecord& record) {
  append(record.utterance_id, record.layer_id, record.token_offset, record.label, record.vector);
}

void StoreWriter::append(std::uint64_t utterance_id, std::uint16_t layer_id,
                         std::uint32_t token_offset, EmotionLabel label,
                         std::span<const float> vector) {
  if (closed_) throw ContractError("append on closed store writer");
  if (vector.size() != header_.dim) {
    throw FormatError("record vector length " + std::to_string(vector.size()) +
                      " does not match store dimension " + std::to_string(header_.dim));
  }
  if (!std::binary_search(header_.layer_ids.begin(), header_.layer_ids.end(), layer_id)) {
    throw FormatError("record layer " + std::to_string(layer_id) +
                      " not declared in store header");
  }
  const int c = code(label);
  if (c < 0 || c >= kNumClasses) throw FormatError("record label code out of range");
  for (float v : vector) {
    if (!std::isfinite(v)) {
      throw FormatError("non-finite value in record for utterance " + std::to_string(utterance_id));
    }
  }

  char* p = buffer_.data();
  put_le<std::uint64_t>(p, utterance_id);
  put_le<std::uint16_t>(p + 8, layer_id);
  put_le<std::uint32_t>(p + 10, token_offset);
  p[14] = static_cast<char>(c);
  for (std::size_t i = 0; i < vector.size(); ++i) put_f32(p + kRecordFixedBytes + 4 * i, vector[i]);
  out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  if (!out_) throw IoError("write failed: " + path_.string());
  ++count_;
}

std::uint64_t StoreWriter::close() {
  if (closed_) return header_.data_offset() + count_ * header_.record_stride();
  closed_ = true;
  header_.record_count = count_;
  char count_bytes[8];
  put_le<std::uint64_t>(count_bytes, count_);
  out_.seekp(16);
  out_.write(count_bytes, sizeof(count_bytes));
  out_.flush();
  if (!out_) throw IoError("failed to finalize store: " + path_.string());
  out_.close();
  return header_.data_offset() + count_ * header_.record_stride();
}

// ---------------------------------------------------------------------------
// StoreReader

StoreReader::StoreReader(const std::filesystem::path& path) : path_(path) {
  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat store: " + path.string() + ": " + ec.message());
  in_.open(path, std::ios::binary);
  if (!in_) throw IoError("cannot open store: " + path.string());

  char head[kStoreFixedHeaderBytes] = {};
  in_.read(head, static_cast<std::streamsize>(kStoreFixedHeaderBytes));
  if (file_size < kStoreMagic.size() ||
      std::memcmp(head, kStoreMagic.data(), kStoreMagic.size()) != 0) {
    throw FormatError("not an activation store: " + path.string());
  }
  if (file_size < kStoreFixedHeaderBytes) {
    throw CorruptionError("truncated store header in " + path.string(), file_size);
  }
  in_.clear();
  header_.format_version = get_le<std::uint32_t>(head + 8);
  if (header_.format_version != kStoreVersion) {
    throw FormatError("unsupported store version " + std::to_string(header_.format_version));
  }
  header_.dim = get_le<std::uint32_t>(head + 12);
  header_.record_count = get_le<std::uint64_t>(head + 16);
  const auto layer_count = get_le<std::uint32_t>(head + 24);
  if (header_.dim == 0) throw CorruptionError("store dimension is zero", 12);
  if (get_le<std::uint32_t>(head + 28) != 0) throw CorruptionError("reserved header field is not zero", 28);

  const std::uint64_t layers_end = kStoreFixedHeaderBytes + 2ULL * layer_count;
  if (file_size < layers_end) throw CorruptionError("truncated layer table", file_size);
  std::vector<char> layer_bytes(2ULL * layer_count);
  in_.read(layer_bytes.data(), static_cast<std::streamsize>(layer_bytes.size()));
  header_.layer_ids.resize(layer_count);
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    header_.layer_ids[i] = get_le<std::uint16_t>(layer_bytes.data() + 2 * i);
    if (i > 0 && header_.layer_ids[i] <= header_.layer_ids[i - 1]) {
      throw CorruptionError("layer table not sorted", kStoreFixedHeaderBytes + 2ULL * i);
    }
  }

  const std::uint64_t stride = header_.record_stride();
  const std::uint64_t payload = file_size - layers_end;
  if (payload / stride < header_.record_count) {
    // First record that is not fully present.
    const std::uint64_t first_partial = payload / stride;
    throw CorruptionError("store truncated: header declares " +
                              std::to_string(header_.record_count) + " records, " +
                              std::to_string(first_partial) + " complete",
                          layers_end + first_partial * stride);
  }
  if (payload != header_.record_count * stride) {
    throw CorruptionError("trailing bytes after last record", layers_end + header_.record_count * stride);
  }
  buffer_.resize(stride);
}

void StoreReader::read_record_bytes(std::uint64_t index) {
  if (index >= header_.record_count) {
    throw ContractError("record index " + std::to_string(index) + " out of range");
  }
  const std::uint64_t offset = header_.data_offset() + index * header_.record_stride();
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(offset));
  if (!in_.read(buffer_.data(), static_cast<std::streamsize>(buffer_.size()))) {
    throw CorruptionError("short read of record " + std::to_string(index), offset);
  }
}

RecordKey StoreReader::decode_key(std::uint64_t index) const {
  const char* p = buffer_.data();
  RecordKey key;
  key.utterance_id = get_le<std::uint64_t>(p);
  key.layer_id = get_le<std::uint16_t>(p + 8);
  key.token_offset = get_le<std::uint32_t>(p + 10);
  const auto label = static_cast<unsigned char>(p[14]);
  const std::uint64_t offset = header_.data_offset() + index * header_.record_stride();
  if (label >= kNumClasses) {
    throw CorruptionError("label byte " + std::to_string(label) + " out of range", offset + 14);
  }
  key.label = static_cast<EmotionLabel>(label);
  if (!std::binary_search(header_.layer_ids.begin(), header_.layer_ids.end(), key.layer_id)) {
    throw CorruptionError("record layer " + std::to_string(key.layer_id) +
                              " missing from the header layer table",
                          offset + 8);
  }
  return key;
}

RecordKey StoreReader::read_key_at(std::uint64_t index) {
  read_record_bytes(index);
  return decode_key(index);
}

void StoreReader::read_vector_at(std::uint64_t index, std::span<float> out) {
  if (out.size() != header_.dim) throw ContractError("read_vector_at: output length != d");
  read_record_bytes(index);
  const std::uint64_t offset = header_.data_offset() + index * header_.record_stride();
  const char* p = buffer_.data() + kRecordFixedBytes;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = get_f32(p + 4 * i);
    if (!std::isfinite(out[i])) {
      throw CorruptionError("non-finite vector entry", offset + kRecordFixedBytes + 4 * i);
    }
  }
}

ActivationRecord StoreReader::read_at(std::uint64_t index) {
  ActivationRecord record;
  record.vector.resize(header_.dim);
  read_vector_at(index, record.vector);
  const RecordKey key = decode_key(index);
  record.utterance_id = key.utterance_id;
  record.layer_id = key.layer_id;
  record.token_offset = key.token_offset;
  record.label = key.label;
  return record;
}

bool StoreReader::next(ActivationRecord& record) {
  if (cursor_ >= header_.record_count) return false;
  record = read_at(cursor_);
  ++cursor_;
  return true;
}

void StoreReader::rewind() { cursor_ = 0; }

std::vector<RecordKey> StoreReader::scan_keys() {
  std::vector<RecordKey> keys;
  keys.reserve(header_.record_count);
  for (std::uint64_t i = 0; i < header_.record_count; ++i) keys.push_back(read_key_at(i));
  return keys;
}

// ---------------------------------------------------------------------------

std::uint64_t write_store(const std::filesystem::path& path, const StoreHeader& header,
                          std::span<const ActivationRecord> records) {
  StoreWriter writer(path, header.dim, header.layer_ids);
  for (const auto& record : records) writer.append(record);
  return writer.close();
}

std::pair<StoreHeader, std::vector<ActivationRecord>> read_store(const std::filesystem::path& path) {
  StoreReader reader(path);
  std::vector<ActivationRecord> records;
  ActivationRecord record;
  while (reader.next(record)) records.push_back(record);
  return {reader.header(), std::move(records)};
}

StoreStats store_stats(const std::filesystem::path& path) {
  StoreReader reader(path);
  StoreStats stats;
  stats.record_count = reader.size();
  for (std::uint16_t layer : reader.header().layer_ids) stats.per_layer[layer] = 0;
  for (std::uint64_t i = 0; i < reader.size(); ++i) {
    const RecordKey key = reader.read_key_at(i);
    ++stats.per_label[static_cast<std::size_t>(code(key.label))];
    ++stats.per_layer[key.layer_id];
  }
  return stats;
}

}  // namespace emoprobe
