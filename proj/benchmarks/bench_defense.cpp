// Single-thread micro-benchmarks for the defense hot path.
//
//   nutnet_bench --benchmark_filter=Defend

#include <benchmark/benchmark.h>

#include "nutnet/dualmask.hpp"
#include "nutnet/model.hpp"
#include "nutnet/pipeline.hpp"
#include "nutnet/rng.hpp"
#include "nutnet/splitter.hpp"
#include "nutnet/tensor.hpp"
#include "nutnet/training.hpp"

namespace {

using namespace nutnet;

Image frame(int size, std::uint64_t seed) {
  Rng rng(seed);
  Image img(size, size);
  for (float& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

// Full defense on a 416 x 416 frame; arg is the block size.
void BM_Defend(benchmark::State& state) {
  const int B = static_cast<int>(state.range(0));
  const auto params = model::init_params(1, B);
  const Image img = frame(416, 2);
  pipeline::DefenseConfig cfg;
  cfg.block_size = B;
  for (auto _ : state) benchmark::DoNotOptimize(pipeline::defend(img, params, cfg));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Defend)->Arg(13)->Arg(26)->Arg(52)->Unit(benchmark::kMillisecond);

// Model forward over one frame's tiles at B = 13 (1024 tiles).
void BM_Reconstruct(benchmark::State& state) {
  const auto params = model::init_params(1, 13);
  const auto grid = split::split(frame(416, 3), 13);
  for (auto _ : state) benchmark::DoNotOptimize(model::reconstruct_blocks(params, grid.tiles));
}
BENCHMARK(BM_Reconstruct)->Unit(benchmark::kMillisecond);

// First encoder layer per kernel level; arg is the SimdLevel value.
void BM_ConvLayer(benchmark::State& state) {
  const auto level = static_cast<kernel::SimdLevel>(state.range(0));
  kernel::set_simd_level(level);
  if (kernel::simd_level() != level) {
    state.SkipWithError("kernel level unavailable on this CPU");
    kernel::set_simd_level(kernel::SimdLevel::kAvx2);
    return;
  }
  state.SetLabel(kernel::simd_level_name(level));
  const auto params = model::init_params(1, 13);
  const auto grid = split::split(frame(416, 4), 13);
  for (auto _ : state) benchmark::DoNotOptimize(kernel::layer_forward_leaky(grid.tiles, params.layer(0), 0.1f));
  kernel::set_simd_level(kernel::SimdLevel::kAvx2);
}
BENCHMARK(BM_ConvLayer)
    ->Arg(static_cast<int>(kernel::SimdLevel::kPortable))
    ->Arg(static_cast<int>(kernel::SimdLevel::kSse))
    ->Arg(static_cast<int>(kernel::SimdLevel::kAvx2))
    ->Unit(benchmark::kMicrosecond);

void BM_SplitReassemble(benchmark::State& state) {
  const Image img = frame(416, 5);
  for (auto _ : state) {
    const auto g = split::split(img, 13);
    benchmark::DoNotOptimize(split::reassemble(g, img.height, img.width));
  }
}
BENCHMARK(BM_SplitReassemble)->Unit(benchmark::kMicrosecond);

void BM_BuildMasks(benchmark::State& state) {
  const Image img = frame(416, 6), rec = frame(416, 7);
  const auto errors = split::block_errors(split::split(img, 13), split::split(rec, 13));
  for (auto _ : state) benchmark::DoNotOptimize(dualmask::build_masks(img, rec, errors, {}));
}
BENCHMARK(BM_BuildMasks)->Unit(benchmark::kMicrosecond);

// One loss + gradient evaluation at the default batch shape.
void BM_LossGradient(benchmark::State& state) {
  const auto params = model::init_params(1, 13);
  Rng rng(8);
  kernel::FeatureMap<float> clean(3, 13, 13, 128), noise(3, 13, 13, 128);
  for (float& v : clean.data) v = static_cast<float>(rng.uniform());
  for (float& v : noise.data) v = static_cast<float>(rng.uniform());
  for (auto _ : state) benchmark::DoNotOptimize(train::destructive_loss(params, clean, noise));
}
BENCHMARK(BM_LossGradient)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
