#include <benchmark/benchmark.h>

#include "mvgs/losses.hpp"
#include "mvgs/rng.hpp"

using namespace mvgs;

namespace {

MergedFrame random_frame(int side) {
    Rng rng(3);
    MergedFrame f;
    f.width = f.height = side;
    const auto n = static_cast<std::size_t>(side * side);
    for (std::size_t i = 0; i < 3 * n; ++i) {
        f.rendered.push_back(rng.uniform());
        f.target.push_back(rng.uniform());
    }
    f.source.assign(n, 0);
    f.background.assign(n, 0);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) f.world.push_back({0.03 * x, 0.03 * y, 3.0 + 0.01 * rng.normal()});
    return f;
}

void BM_Dssim(benchmark::State& state) {
    const MergedFrame f = random_frame(static_cast<int>(state.range(0)));
    const SsimWindow win;
    for (auto _ : state) benchmark::DoNotOptimize(dssim_loss(f, win, WindowKernel::planar2d));
}
BENCHMARK(BM_Dssim)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Dssim3d(benchmark::State& state) {
    const MergedFrame f = random_frame(static_cast<int>(state.range(0)));
    const SsimWindow win;
    for (auto _ : state) benchmark::DoNotOptimize(dssim3d(f, win));
}
BENCHMARK(BM_Dssim3d)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_L1(benchmark::State& state) {
    const MergedFrame f = random_frame(64);
    const SsimWindow win;
    for (auto _ : state) benchmark::DoNotOptimize(frame_loss(LossMode::l1, f, win, 0.2));
}
BENCHMARK(BM_L1)->Unit(benchmark::kMicrosecond);

}  // namespace
