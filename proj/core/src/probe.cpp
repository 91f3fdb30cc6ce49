#include "emoprobe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "emoprobe/errors.hpp"
#include "emoprobe/random.hpp"

namespace emoprobe {
namespace {

template <typename T>
void require_finite(std::span<const T> values, const char* tensor) {
  for (T v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + tensor);
  }
}

// Forward pass keeping the hidden pre-activations for backprop.
template <typename T>
void forward_into(const BasicProbeParams<T>& p, std::span<const T> x, std::vector<T>& pre,
                  std::array<T, kNumClasses>& logits) {
  const std::size_t width = p.shape.first_layer_width();
  const std::size_t hidden = p.shape.hidden;
  pre.resize(hidden);
  for (std::size_t i = 0; i < hidden; ++i) {
    const T* row = p.w1.data() + i * width;
    T acc = p.b1[i];
    for (std::size_t j = 0; j < width; ++j) acc += row[j] * x[j];
    pre[i] = acc;
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const T* row = p.w2.data() + c * hidden;
    T acc = p.b2[c];
    for (std::size_t i = 0; i < hidden; ++i) acc += row[i] * std::max(pre[i], T(0));
    logits[c] = acc;
  }
}

// Builds the first-layer input for one example into `buf` and returns a view.
template <typename T>
std::span<const T> first_layer_input(const BasicProbeParams<T>& p, const Example<T>& ex,
                                     std::vector<T>& buf) {
  const auto& shape = p.shape;
  if (!shape.has_offset_table()) {
    if (ex.x.size() != shape.first_layer_width()) {
      throw ContractError("probe input has length " + std::to_string(ex.x.size()) + ", expected " +
                          std::to_string(shape.first_layer_width()));
    }
    return ex.x;
  }
  if (ex.x.size() != shape.input_dim) {
    throw ContractError("offset probe input has length " + std::to_string(ex.x.size()) +
                        ", expected " + std::to_string(shape.input_dim));
  }
  if (ex.offset > shape.k_max) {
    throw ContractError("offset " + std::to_string(ex.offset) + " exceeds k_max " + std::to_string(shape.k_max));
  }
  buf.resize(shape.first_layer_width());
  std::copy(ex.x.begin(), ex.x.end(), buf.begin());
  const T* row = p.offset_table.data() + static_cast<std::size_t>(ex.offset) * shape.offset_dim;
  std::copy(row, row + shape.offset_dim, buf.begin() + shape.input_dim);
  return buf;
}

template <typename T>
void fill_zero(BasicProbeParams<T>& g) {
  g.for_each_block([](const char*, std::vector<T>& block) { std::fill(block.begin(), block.end(), T(0)); });
}

}  // namespace

template <typename T>
BasicProbeParams<T> BasicProbeParams<T>::zeros(const ProbeShape& shape) {
  if (shape.input_dim == 0 || shape.hidden == 0) throw ContractError("probe shape needs d >= 1 and h >= 1");
  BasicProbeParams<T> p;
  p.shape = shape;
  p.w1.assign(static_cast<std::size_t>(shape.hidden) * shape.first_layer_width(), T(0));
  p.b1.assign(shape.hidden, T(0));
  p.w2.assign(static_cast<std::size_t>(kNumClasses) * shape.hidden, T(0));
  p.b2.assign(kNumClasses, T(0));
  if (shape.has_offset_table()) {
    p.offset_table.assign(static_cast<std::size_t>(shape.k_max + 1) * shape.offset_dim, T(0));
  }
  return p;
}

template <typename T>
std::size_t BasicProbeParams<T>::parameter_count() const {
  std::size_t n = 0;
  for_each_block([&](const char*, const std::vector<T>& block) { n += block.size(); });
  return n;
}

template <typename T>
void BasicProbeParams<T>::check_shapes() const {
  const auto expected = zeros(shape);
  auto check = [](const char* name, std::size_t got, std::size_t want) {
    if (got != want) {
      throw ContractError(std::string("probe block ") + name + " has " + std::to_string(got) +
                          " entries, expected " + std::to_string(want));
    }
  };
  check("W1", w1.size(), expected.w1.size());
  check("b1", b1.size(), expected.b1.size());
  check("W2", w2.size(), expected.w2.size());
  check("b2", b2.size(), expected.b2.size());
  check("offset_table", offset_table.size(), expected.offset_table.size());
}

template <typename T>
int ProbeOutput<T>::predicted() const {
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c) {
    if (probs[static_cast<std::size_t>(c)] > probs[static_cast<std::size_t>(best)]) best = c;
  }
  return best;
}

ProbeParams init_probe(const ProbeShape& shape, std::uint64_t seed) {
  ProbeParams p = ProbeParams::zeros(shape);
  Rng rng(derive_seed(seed, 0x1A17));
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(shape.first_layer_width()));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  for (float& w : p.w1) w = static_cast<float>((2.0 * uniform_unit(rng) - 1.0) * bound1);
  for (float& w : p.w2) w = static_cast<float>((2.0 * uniform_unit(rng) - 1.0) * bound2);
  return p;
}

template <typename T>
std::array<T, kNumClasses> softmax(const std::array<T, kNumClasses>& logits) {
  const T peak = *std::max_element(logits.begin(), logits.end());
  std::array<T, kNumClasses> probs{};
  T total = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    probs[c] = std::exp(logits[c] - peak);
    total += probs[c];
  }
  for (T& p : probs) p /= total;
  return probs;
}

template <typename T>
ProbeOutput<T> probe_forward(const BasicProbeParams<T>& params, std::span<const T> x) {
  if (x.size() != params.shape.first_layer_width()) {
    throw ContractError("probe input has length " + std::to_string(x.size()) + ", expected " +
                        std::to_string(params.shape.first_layer_width()));
  }
  ProbeOutput<T> out;
  std::vector<T> pre;
  forward_into(params, x, pre, out.logits);
  out.probs = softmax(out.logits);
  return out;
}

template <typename T>
ProbeOutput<T> offset_forward(const BasicProbeParams<T>& params, std::span<const T> h, std::uint32_t k) {
  if (!params.shape.has_offset_table()) throw ContractError("offset_forward on a probe without offset table");
  std::vector<T> buf;
  const auto x = first_layer_input(params, Example<T>{h, k, 0}, buf);
  return probe_forward(params, x);
}

template <typename T>
T probe_loss_grad(const BasicProbeParams<T>& p, std::span<const Example<T>> batch, BasicProbeParams<T>& g) {
  if (batch.empty()) throw ContractError("probe_loss_grad: empty batch");
  if (!(g.shape == p.shape) || g.w1.size() != p.w1.size()) g = BasicProbeParams<T>::zeros(p.shape);
  fill_zero(g);

  const auto& shape = p.shape;
  const std::size_t width = shape.first_layer_width();
  const std::size_t hidden = shape.hidden;
  const T inv_n = T(1) / static_cast<T>(batch.size());

  std::vector<T> buf, pre, act(hidden), dpre(hidden);
  std::array<T, kNumClasses> logits{};
  T loss_sum = 0;

  for (const auto& ex : batch) {
    if (ex.label < 0 || ex.label >= kNumClasses) throw ContractError("example label out of range");
    const auto x = first_layer_input(p, ex, buf);
    forward_into(p, x, pre, logits);
    require_finite<T>(logits, "logits");

    const T peak = *std::max_element(logits.begin(), logits.end());
    T total = 0;
    std::array<T, kNumClasses> probs{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      probs[c] = std::exp(logits[c] - peak);
      total += probs[c];
    }
    const auto y = static_cast<std::size_t>(ex.label);
    loss_sum += std::log(total) - (logits[y] - peak);

    // dL/dlogits for this example, already scaled by 1/N.
    std::array<T, kNumClasses> dlogits{};
    for (std::size_t c = 0; c < kNumClasses; ++c) dlogits[c] = (probs[c] / total) * inv_n;
    dlogits[y] -= inv_n;

    for (std::size_t i = 0; i < hidden; ++i) act[i] = std::max(pre[i], T(0));
    std::fill(dpre.begin(), dpre.end(), T(0));
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const T dc = dlogits[c];
      g.b2[c] += dc;
      T* grow = g.w2.data() + c * hidden;
      const T* wrow = p.w2.data() + c * hidden;
      for (std::size_t i = 0; i < hidden; ++i) {
        grow[i] += dc * act[i];
        dpre[i] += dc * wrow[i];
      }
    }
    for (std::size_t i = 0; i < hidden; ++i) {
      if (pre[i] <= T(0)) dpre[i] = 0;
    }
    for (std::size_t i = 0; i < hidden; ++i) {
      const T di = dpre[i];
      if (di == T(0)) continue;
      g.b1[i] += di;
      T* grow = g.w1.data() + i * width;
      for (std::size_t j = 0; j < width; ++j) grow[j] += di * x[j];
    }
    if (shape.has_offset_table()) {
      // Gather backward: only row `offset` of the table receives gradient.
      T* trow = g.offset_table.data() + static_cast<std::size_t>(ex.offset) * shape.offset_dim;
      for (std::size_t i = 0; i < hidden; ++i) {
        const T di = dpre[i];
        if (di == T(0)) continue;
        const T* wtail = p.w1.data() + i * width + shape.input_dim;
        for (std::size_t j = 0; j < shape.offset_dim; ++j) trow[j] += di * wtail[j];
      }
    }
  }

  const T loss = loss_sum * inv_n;
  if (!std::isfinite(loss)) throw NumericError("non-finite value in loss");
  g.for_each_block([](const char* name, const std::vector<T>& block) {
    require_finite<T>(block, (std::string("gradient of ") + name).c_str());
  });
  return loss;
}

template <typename T>
LossAndGrad<T> probe_loss_grad(const BasicProbeParams<T>& params, std::span<const Example<T>> batch) {
  LossAndGrad<T> out;
  out.grad = BasicProbeParams<T>::zeros(params.shape);
  out.loss = probe_loss_grad(params, batch, out.grad);
  return out;
}

template <typename T>
T probe_loss(const BasicProbeParams<T>& params, std::span<const Example<T>> batch) {
  if (batch.empty()) throw ContractError("probe_loss: empty batch");
  std::vector<T> buf, pre;
  std::array<T, kNumClasses> logits{};
  T loss_sum = 0;
  for (const auto& ex : batch) {
    if (ex.label < 0 || ex.label >= kNumClasses) throw ContractError("example label out of range");
    const auto x = first_layer_input(params, ex, buf);
    forward_into(params, x, pre, logits);
    const T peak = *std::max_element(logits.begin(), logits.end());
    T total = 0;
    for (T l : logits) total += std::exp(l - peak);
    loss_sum += std::log(total) - (logits[static_cast<std::size_t>(ex.label)] - peak);
  }
  return loss_sum / static_cast<T>(batch.size());
}

template <typename T>
void adam_step(BasicProbeParams<T>& params, const BasicProbeParams<T>& grads, AdamState<T>& state,
               std::uint64_t step_index, double lr) {
  if (step_index < 1) throw ContractError("adam_step: step_index must be >= 1");
  if (!(grads.shape == params.shape) || !(state.m.shape == params.shape) || !(state.v.shape == params.shape)) {
    throw ContractError("adam_step: shape mismatch between params, grads and state");
  }
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step_index));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step_index));
  const T b1 = static_cast<T>(kAdamBeta1);
  const T b2 = static_cast<T>(kAdamBeta2);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(kAdamEpsilon);

  auto update = [&](std::vector<T>& w, const std::vector<T>& g, std::vector<T>& m, std::vector<T>& v) {
    if (w.size() != g.size() || w.size() != m.size() || w.size() != v.size()) {
      throw ContractError("adam_step: block size mismatch");
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
  };
  update(params.w1, grads.w1, state.m.w1, state.v.w1);
  update(params.b1, grads.b1, state.m.b1, state.v.b1);
  update(params.w2, grads.w2, state.m.w2, state.v.w2);
  update(params.b2, grads.b2, state.m.b2, state.v.b2);
  if (params.shape.has_offset_table()) {
    update(params.offset_table, grads.offset_table, state.m.offset_table, state.v.offset_table);
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ContractError("learning_rate must be > 0");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) throw ContractError("warmup_fraction must be in (0, 1)");
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (hidden_width < 1) throw ContractError("hidden_width must be >= 1");
  if (offsets_per_reply < 1) throw ContractError("offsets_per_reply must be >= 1");
  if (log_every < 1) throw ContractError("log_every must be >= 1");
}

double lr_at_step(const TrainConfig& config, std::uint64_t step, std::uint64_t total_steps) {
  if (total_steps < 1) throw ContractError("lr_at_step: total_steps must be >= 1");
  if (step > total_steps) throw ContractError("lr_at_step: step beyond total_steps");
  const auto warmup = static_cast<std::uint64_t>(std::llround(config.warmup_fraction * static_cast<double>(total_steps)));
  if (warmup >= total_steps) throw ContractError("lr_at_step: degenerate schedule (warmup covers every step)");
  const double lr = config.learning_rate;
  if (step < warmup) return lr * static_cast<double>(step) / static_cast<double>(warmup);
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

#define EMOPROBE_INSTANTIATE(T)                                                                        \
  template struct BasicProbeParams<T>;                                                                 \
  template struct ProbeOutput<T>;                                                                      \
  template std::array<T, kNumClasses> softmax<T>(const std::array<T, kNumClasses>&);                   \
  template ProbeOutput<T> probe_forward<T>(const BasicProbeParams<T>&, std::span<const T>);            \
  template ProbeOutput<T> offset_forward<T>(const BasicProbeParams<T>&, std::span<const T>, std::uint32_t); \
  template LossAndGrad<T> probe_loss_grad<T>(const BasicProbeParams<T>&, std::span<const Example<T>>); \
  template T probe_loss_grad<T>(const BasicProbeParams<T>&, std::span<const Example<T>>, BasicProbeParams<T>&); \
  template T probe_loss<T>(const BasicProbeParams<T>&, std::span<const Example<T>>);                   \
  template void adam_step<T>(BasicProbeParams<T>&, const BasicProbeParams<T>&, AdamState<T>&, std::uint64_t, double);

EMOPROBE_INSTANTIATE(float)
EMOPROBE_INSTANTIATE(double)

#undef EMOPROBE_INSTANTIATE

}  // namespace emoprobe
