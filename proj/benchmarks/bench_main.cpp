#include <benchmark/benchmark.h>

#include <filesystem>
#include <vector>

#include "emoprobe/geometry.hpp"
#include "emoprobe/probe.hpp"
#include "emoprobe/random.hpp"
#include "emoprobe/store.hpp"
#include "emoprobe/synthetic.hpp"

using namespace emoprobe;

namespace {

std::vector<std::vector<float>> random_inputs(std::size_t n, std::uint32_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<float>> xs(n, std::vector<float>(d));
  for (auto& x : xs)
    for (auto& v : x) v = static_cast<float>(standard_normal(rng));
  return xs;
}

void BM_ProbeForward(benchmark::State& state) {
  const auto d = static_cast<std::uint32_t>(state.range(0));
  const auto params = init_probe({d, 512, 0, 0}, 1);
  const auto xs = random_inputs(64, d, 2);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(probe_forward<float>(params, xs[i++ % xs.size()]));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ProbeForward)->Arg(1024)->Arg(4096);

void BM_ProbeLossGrad(benchmark::State& state) {
  const auto d = static_cast<std::uint32_t>(state.range(0));
  const auto batch_size = static_cast<std::size_t>(state.range(1));
  const auto params = init_probe({d, 512, 0, 0}, 1);
  const auto xs = random_inputs(batch_size, d, 3);
  std::vector<Example<float>> batch;
  for (std::size_t i = 0; i < xs.size(); ++i) batch.push_back({xs[i], 0, static_cast<int>(i % 7)});
  auto grad = ProbeParams::zeros(params.shape);
  for (auto _ : state) {
    benchmark::DoNotOptimize(probe_loss_grad<float>(params, batch, grad));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch_size));
}
BENCHMARK(BM_ProbeLossGrad)->Args({1024, 4})->Args({4096, 4})->Args({4096, 256});

void BM_AdamStep(benchmark::State& state) {
  auto params = init_probe({4096, 512, 0, 0}, 1);
  const auto grads = init_probe({4096, 512, 0, 0}, 2);
  auto adam = AdamState<float>::zeros(params.shape);
  std::uint64_t step = 1;
  for (auto _ : state) adam_step(params, grads, adam, step++, 1e-4);
}
BENCHMARK(BM_AdamStep);

void BM_KdeFit(benchmark::State& state) {
  Rng rng(4);
  std::vector<PlanePoint> pts(static_cast<std::size_t>(state.range(0)));
  for (auto& p : pts) p = {standard_normal(rng), standard_normal(rng)};
  for (auto _ : state) benchmark::DoNotOptimize(kde_fit(pts, EmotionLabel::kJoy));
}
BENCHMARK(BM_KdeFit)->Arg(500)->Arg(5000);

void BM_StoreSequentialRead(benchmark::State& state) {
  const auto path = std::filesystem::temp_directory_path() / "emoprobe_bench.store";
  ClusterSpec spec;
  spec.dim = 1024;
  spec.train_per_class = 300;
  spec.test_per_class = 0;
  const auto set = make_clusters(spec);
  StoreHeader h;
  h.dim = spec.dim;
  h.layer_ids = {0};
  write_store(path, h, set.records);
  for (auto _ : state) {
    StoreReader reader(path);
    ActivationRecord r;
    std::size_t n = 0;
    while (reader.next(r)) ++n;
    benchmark::DoNotOptimize(n);
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(std::filesystem::file_size(path)));
  std::filesystem::remove(path);
}
BENCHMARK(BM_StoreSequentialRead);

}  // namespace
BENCHMARK_MAIN();
