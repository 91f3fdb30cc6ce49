#pragma once

#include <cstdint>
#include <vector>

#include "emoprobe/store.hpp"

namespace emoprobe {

// Labelled Gaussian clusters: class c is centred on separation * e_c with unit
// isotropic noise. Used for fixtures, demos and benchmarks.
struct ClusterSpec {
  std::uint32_t dim = 64;
  std::uint32_t train_per_class = 1000;
  std::uint32_t test_per_class = 200;
  double separation = 6.0;
  double noise = 1.0;
  std::uint16_t layer = 0;
  std::uint64_t seed = 1;
  std::uint64_t first_id = 1;
};

struct SyntheticSet {
  std::vector<ActivationRecord> records;
  std::vector<std::uint64_t> train_ids;
  std::vector<std::uint64_t> test_ids;
};

SyntheticSet make_clusters(const ClusterSpec& spec);

// Reassigns labels by a seeded permutation of the existing label sequence, so
// the class histogram is kept and any vector/label association is destroyed.
void permute_labels(std::vector<ActivationRecord>& records, std::uint64_t seed);

// One pooled record per utterance at each layer. Vectors carry the cluster
// signal only at `signal_layer`; every other layer is pure noise.
SyntheticSet make_layered_clusters(const ClusterSpec& spec, const std::vector<std::uint16_t>& layers,
                                   std::uint16_t signal_layer);

// Per-token replies: reply r has records at offsets 0..reply_length-1 with the
// reply's label. Vectors carry the cluster signal for offsets < signal_until
// and are pure noise afterwards.
struct DecaySpec {
  std::uint32_t dim = 16;
  std::uint32_t replies_per_class = 40;
  std::uint32_t reply_length = 240;
  std::uint32_t signal_until = 100;
  double separation = 6.0;
  double noise = 1.0;
  std::uint16_t layer = 0;
  std::uint64_t seed = 1;
};

std::vector<ActivationRecord> make_decay_replies(const DecaySpec& spec);

}  // namespace emoprobe
