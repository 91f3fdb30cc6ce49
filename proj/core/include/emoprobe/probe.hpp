#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "emoprobe/label.hpp"

namespace emoprobe {

// Shape of a two-layer probe. offset_dim == 0 means no offset embedding;
// otherwise the first layer sees concat(h, offset_table[k]) and the table has
// k_max + 1 rows.
struct ProbeShape {
  std::uint32_t input_dim = 0;  // d, the hidden-state width
  std::uint32_t hidden = 0;     // h
  std::uint32_t offset_dim = 0;  // e
  std::uint32_t k_max = 0;

  std::uint32_t first_layer_width() const { return input_dim + offset_dim; }
  bool has_offset_table() const { return offset_dim > 0; }
  bool operator==(const ProbeShape&) const = default;
};

// Weights of logits = W2 * relu(W1 * x + b1) + b2, row-major.
//   w1: hidden x first_layer_width    b1: hidden
//   w2: 7 x hidden                    b2: 7
//   offset_table: (k_max + 1) x offset_dim
template <typename T>
struct BasicProbeParams {
  ProbeShape shape;
  std::vector<T> w1, b1, w2, b2, offset_table;

  static BasicProbeParams zeros(const ProbeShape& shape);

  // Applies f(name, block) to every parameter block in checkpoint order.
  template <typename F>
  void for_each_block(F&& f) {
    f("W1", w1);
    f("b1", b1);
    f("W2", w2);
    f("b2", b2);
    if (shape.has_offset_table()) f("offset_table", offset_table);
  }
  template <typename F>
  void for_each_block(F&& f) const {
    f("W1", w1);
    f("b1", b1);
    f("W2", w2);
    f("b2", b2);
    if (shape.has_offset_table()) f("offset_table", offset_table);
  }

  std::size_t parameter_count() const;

  // Throws ContractError if block sizes disagree with `shape`.
  void check_shapes() const;

  template <typename U>
  BasicProbeParams<U> cast() const {
    BasicProbeParams<U> out;
    out.shape = shape;
    auto conv = [](const std::vector<T>& v) { return std::vector<U>(v.begin(), v.end()); };
    out.w1 = conv(w1);
    out.b1 = conv(b1);
    out.w2 = conv(w2);
    out.b2 = conv(b2);
    out.offset_table = conv(offset_table);
    return out;
  }

  bool operator==(const BasicProbeParams&) const = default;
};

using ProbeParams = BasicProbeParams<float>;

template <typename T>
struct ProbeOutput {
  std::array<T, kNumClasses> logits{};
  std::array<T, kNumClasses> probs{};

  // Ties go to the lowest class code.
  int predicted() const;
};

// Fan-in uniform initialization of W1 and W2, zero biases and zero offset table.
ProbeParams init_probe(const ProbeShape& shape, std::uint64_t seed);

// softmax with max-subtraction.
template <typename T>
std::array<T, kNumClasses> softmax(const std::array<T, kNumClasses>& logits);

// x must have length shape.first_layer_width().
template <typename T>
ProbeOutput<T> probe_forward(const BasicProbeParams<T>& params, std::span<const T> x);

// Forward pass of the offset-aware probe on hidden vector h (length d) at
// reply offset k. Throws ContractError when k > k_max or the probe has no
// offset table.
template <typename T>
ProbeOutput<T> offset_forward(const BasicProbeParams<T>& params, std::span<const T> h, std::uint32_t k);

template <typename T>
struct Example {
  std::span<const T> x;       // length d (offset-aware) or first_layer_width
  std::uint32_t offset = 0;   // used only when the probe has an offset table
  int label = 0;
};

template <typename T>
struct LossAndGrad {
  T loss = 0;
  BasicProbeParams<T> grad;
};

// Mean cross-entropy over the batch and its exact gradient.
// Throws NumericError naming the first tensor that went non-finite.
template <typename T>
LossAndGrad<T> probe_loss_grad(const BasicProbeParams<T>& params, std::span<const Example<T>> batch);

// Same, accumulating into a caller-owned gradient buffer (overwritten).
template <typename T>
T probe_loss_grad(const BasicProbeParams<T>& params, std::span<const Example<T>> batch,
                  BasicProbeParams<T>& grad);

template <typename T>
T probe_loss(const BasicProbeParams<T>& params, std::span<const Example<T>> batch);

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

template <typename T>
struct AdamState {
  BasicProbeParams<T> m;
  BasicProbeParams<T> v;

  static AdamState zeros(const ProbeShape& shape) {
    return {BasicProbeParams<T>::zeros(shape), BasicProbeParams<T>::zeros(shape)};
  }
};

// One bias-corrected Adam update. step_index counts from 1.
template <typename T>
void adam_step(BasicProbeParams<T>& params, const BasicProbeParams<T>& grads, AdamState<T>& state,
               std::uint64_t step_index, double lr);

struct TrainConfig {
  double learning_rate = 1e-4;
  double warmup_fraction = 0.10;
  std::uint32_t epochs = 1;
  std::uint32_t batch_size = 4;
  std::uint32_t hidden_width = 512;
  std::uint32_t offset_embed_dim = 32;
  std::uint32_t k_max = 512;
  std::uint64_t seed = 0;
  // Offset-aware training: offsets sampled per reply per epoch.
  std::uint32_t offsets_per_reply = 8;
  std::uint32_t log_every = 50;

  // Throws ContractError on out-of-range values.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Linear warmup over the first round(warmup_fraction * total) steps, then
// cosine decay to exactly 0 at step == total.
double lr_at_step(const TrainConfig& config, std::uint64_t step, std::uint64_t total_steps);

}  // namespace emoprobe
