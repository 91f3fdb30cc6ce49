#include "emoprobe/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "emoprobe/errors.hpp"

namespace emoprobe {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'A', 'P', 'R', 'O', 'B', 'E', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b, 8);
}

class ByteSource {
 public:
  explicit ByteSource(std::istream& in) : in_(in) {}

  void read(char* dst, std::size_t n, const char* what) {
    if (!in_.read(dst, static_cast<std::streamsize>(n))) {
      throw CorruptionError(std::string("checkpoint truncated while reading ") + what, offset_);
    }
    offset_ += n;
  }
  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    read(reinterpret_cast<char*>(b), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint64_t u64(const char* what) {
    const std::uint64_t lo = u32(what);
    const std::uint64_t hi = u32(what);
    return lo | (hi << 32);
  }
  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::uint64_t offset_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto& p = checkpoint.params;
  p.check_shapes();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u32(out, p.shape.first_layer_width());
  put_u32(out, p.shape.hidden);
  put_u32(out, p.shape.offset_dim);
  put_u32(out, p.shape.k_max);
  put_u32(out, 0);
  put_u64(out, checkpoint.seed);
  put_u32(out, static_cast<std::uint32_t>(checkpoint.config_json.size()));
  out.write(checkpoint.config_json.data(), static_cast<std::streamsize>(checkpoint.config_json.size()));
  p.for_each_block([&](const char*, const std::vector<float>& block) {
    for (float v : block) put_u32(out, std::bit_cast<std::uint32_t>(v));
  });
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError("not a probe checkpoint: " + path.string());
  }
  ByteSource body(in);
  const auto version = body.u32("version");
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  ProbeShape shape;
  const auto d_in = body.u32("d_in");
  shape.hidden = body.u32("hidden width");
  shape.offset_dim = body.u32("offset dim");
  shape.k_max = body.u32("k_max");
  if (body.u32("reserved") != 0) throw FormatError("checkpoint reserved field is not zero");
  if (shape.offset_dim >= d_in) throw FormatError("checkpoint offset dim exceeds input width");
  shape.input_dim = d_in - shape.offset_dim;

  Checkpoint ck;
  ck.seed = body.u64("seed");
  const auto config_len = body.u32("config length");
  ck.config_json.resize(config_len);
  body.read(ck.config_json.data(), config_len, "config");

  ck.params = ProbeParams::zeros(shape);
  ck.params.for_each_block([&](const char* name, std::vector<float>& block) {
    for (float& v : block) v = std::bit_cast<float>(body.u32(name));
  });
  char extra;
  if (in.read(&extra, 1)) throw CorruptionError("trailing bytes after checkpoint", 8 + body.offset());
  return ck;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["learning_rate"] = c.learning_rate;
  j["warmup_fraction"] = c.warmup_fraction;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["hidden_width"] = c.hidden_width;
  j["offset_embed_dim"] = c.offset_embed_dim;
  j["k_max"] = c.k_max;
  j["seed"] = c.seed;
  j["offsets_per_reply"] = c.offsets_per_reply;
  j["log_every"] = c.log_every;
  return j.dump();
}

TrainConfig train_config_from_json(std::string_view text, TrainConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("train config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("train config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "warmup_fraction") c.warmup_fraction = value.get<double>();
      else if (key == "epochs") c.epochs = value.get<std::uint32_t>();
      else if (key == "batch_size") c.batch_size = value.get<std::uint32_t>();
      else if (key == "hidden_width") c.hidden_width = value.get<std::uint32_t>();
      else if (key == "offset_embed_dim") c.offset_embed_dim = value.get<std::uint32_t>();
      else if (key == "k_max") c.k_max = value.get<std::uint32_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "offsets_per_reply") c.offsets_per_reply = value.get<std::uint32_t>();
      else if (key == "log_every") c.log_every = value.get<std::uint32_t>();
      else throw FormatError("unknown train config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed train config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace emoprobe
