#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "flash/evaluation.hpp"
#include "flash/fft.hpp"
#include "flash/network.hpp"
#include "flash/ops.hpp"
#include "flash/synth.hpp"
#include "flash/train.hpp"

using namespace flash;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.normal();
    return Tensor(shape, std::move(v));
}

void BM_Fft2d(benchmark::State& state) {
    const auto h = static_cast<std::size_t>(state.range(0)), w = static_cast<std::size_t>(state.range(1));
    Rng rng(1);
    std::vector<double> grid(h * w);
    for (auto& x : grid) x = rng.normal();
    for (auto _ : state) benchmark::DoNotOptimize(fft2d(grid, h, w));
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(h * w));
}
BENCHMARK(BM_Fft2d)->Args({16, 64})->Args({16, 256})->Args({64, 1024});

void BM_Conv2d(benchmark::State& state) {
    const auto k = static_cast<std::size_t>(state.range(0)), c = static_cast<std::size_t>(state.range(1));
    Rng rng(2);
    const Tensor x = random_tensor({16, 64, c}, rng), w = random_tensor({k, k, c, c}, rng), b = random_tensor({c}, rng);
    NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, ops::PadMode::circular_horizontal));
}
BENCHMARK(BM_Conv2d)->Args({1, 32})->Args({3, 32})->Args({5, 32})->Args({3, 64});

void BM_Conv2dBackward(benchmark::State& state) {
    const auto k = static_cast<std::size_t>(state.range(0)), c = static_cast<std::size_t>(state.range(1));
    Rng rng(3);
    const Tensor x = random_tensor({16, 64, c}, rng).set_requires_grad(true);
    const Tensor w = random_tensor({k, k, c, c}, rng).set_requires_grad(true);
    const Tensor b = random_tensor({c}, rng).set_requires_grad(true);
    for (auto _ : state) ops::sum(ops::conv2d(x, w, b, ops::PadMode::circular_horizontal)).backward();
}
BENCHMARK(BM_Conv2dBackward)->Args({3, 32})->Args({5, 32});

Tensor synthetic_input(const FlashConfig& cfg) {
    SynthConfig sc;
    sc.projection.height = cfg.output_height();
    sc.projection.width = cfg.width;
    return model_input(make_pair(generate_scene(5, sc), sc).low);
}

// Argument: 0 = desk-scale defaults, 1 = full-scale config.
FlashConfig config_for(int64_t which) { return which == 0 ? FlashConfig{} : FlashConfig::full_scale(); }

void BM_Forward(benchmark::State& state) {
    const FlashConfig cfg = config_for(state.range(0));
    FlashModel model(cfg);
    const Tensor x = synthetic_input(cfg);
    NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(model.forward(x));
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    const FlashConfig cfg;
    FlashModel model(cfg);
    SynthConfig sc;
    const SamplePair s = make_pair(generate_scene(6, sc), sc);
    const Tensor x = model_input(s.low);
    const Target t = model_target(s.high);
    for (auto _ : state) l1_loss(model.forward(x), t.value, t.mask).loss.backward();
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

PointCloud random_cloud(std::size_t n, Rng& rng) {
    PointCloud c;
    for (std::size_t i = 0; i < n; ++i)
        c.points.push_back({60 * rng.uniform() - 30, 60 * rng.uniform() - 30, 4 * rng.uniform() - 2});
    return c;
}

void BM_Chamfer(benchmark::State& state) {
    Rng rng(4);
    const auto n = static_cast<std::size_t>(state.range(0));
    const PointCloud a = random_cloud(n, rng), b = random_cloud(n, rng);
    for (auto _ : state) benchmark::DoNotOptimize(chamfer(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n));
}
BENCHMARK(BM_Chamfer)->Arg(1000)->Arg(16384)->Arg(65536)->Unit(benchmark::kMillisecond);

void BM_VoxelScores(benchmark::State& state) {
    Rng rng(5);
    const auto n = static_cast<std::size_t>(state.range(0));
    const PointCloud a = random_cloud(n, rng), b = random_cloud(n, rng);
    for (auto _ : state) benchmark::DoNotOptimize(voxel_scores(a, b));
}
BENCHMARK(BM_VoxelScores)->Arg(65536)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
