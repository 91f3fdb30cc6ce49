#include "emoprobe/synthetic.hpp"

#include <algorithm>

#include "emoprobe/errors.hpp"
#include "emoprobe/random.hpp"

namespace emoprobe {
namespace {

std::vector<float> sample_vector(std::uint32_t dim, int label, double separation, double noise, bool signal,
                                 Rng& rng) {
  std::vector<float> v(dim);
  for (std::uint32_t j = 0; j < dim; ++j) {
    double x = noise * standard_normal(rng);
    if (signal && j == static_cast<std::uint32_t>(label)) x += separation;
    v[j] = static_cast<float>(x);
  }
  return v;
}

void check_dim(std::uint32_t dim) {
  if (dim < kNumClasses) throw ContractError("synthetic clusters need dim >= 7");
}

}  // namespace

SyntheticSet make_clusters(const ClusterSpec& spec) {
  return make_layered_clusters(spec, {spec.layer}, spec.layer);
}

SyntheticSet make_layered_clusters(const ClusterSpec& spec, const std::vector<std::uint16_t>& layers,
                                   std::uint16_t signal_layer) {
  check_dim(spec.dim);
  SyntheticSet set;
  Rng rng(derive_seed(spec.seed, 0xC1));
  std::uint64_t id = spec.first_id;
  std::vector<std::pair<std::uint64_t, int>> utterances;
  for (int split = 0; split < 2; ++split) {
    const std::uint32_t per_class = split == 0 ? spec.train_per_class : spec.test_per_class;
    for (int c = 0; c < kNumClasses; ++c) {
      for (std::uint32_t i = 0; i < per_class; ++i) {
        utterances.emplace_back(id, c);
        (split == 0 ? set.train_ids : set.test_ids).push_back(id);
        ++id;
      }
    }
  }
  for (std::uint16_t layer : layers) {
    for (const auto& [uid, c] : utterances) {
      ActivationRecord r;
      r.utterance_id = uid;
      r.layer_id = layer;
      r.label = label_from_code(c);
      r.vector = sample_vector(spec.dim, c, spec.separation, spec.noise, layer == signal_layer, rng);
      set.records.push_back(std::move(r));
    }
  }
  return set;
}

void permute_labels(std::vector<ActivationRecord>& records, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xB1));
  std::vector<EmotionLabel> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(r.label);
  for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[uniform_index(rng, i)]);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].label = labels[i];
}

std::vector<ActivationRecord> make_decay_replies(const DecaySpec& spec) {
  check_dim(spec.dim);
  Rng rng(derive_seed(spec.seed, 0xDE));
  std::vector<ActivationRecord> records;
  records.reserve(static_cast<std::size_t>(spec.replies_per_class) * kNumClasses * spec.reply_length);
  std::uint64_t id = 1;
  for (std::uint32_t r = 0; r < spec.replies_per_class; ++r) {
    for (int c = 0; c < kNumClasses; ++c) {
      for (std::uint32_t k = 0; k < spec.reply_length; ++k) {
        ActivationRecord rec;
        rec.utterance_id = id;
        rec.layer_id = spec.layer;
        rec.token_offset = k;
        rec.label = label_from_code(c);
        rec.vector = sample_vector(spec.dim, c, spec.separation, spec.noise, k < spec.signal_until, rng);
        records.push_back(std::move(rec));
      }
      ++id;
    }
  }
  return records;
}

}  // namespace emoprobe
