#include <benchmark/benchmark.h>

#include <numeric>

#include "mvgs/batchvar.hpp"
#include "mvgs/gradients.hpp"
#include "mvgs/trainer.hpp"

using namespace mvgs;

namespace {

struct Toy {
    SyntheticScene scene = make_synthetic(1, 200, 16, CameraLayout::orbit);
    SceneDataset data = render_dataset(scene.gaussians, scene.cameras);
    std::vector<int> views = std::vector<int>(16);
    Toy() { std::iota(views.begin(), views.end(), 0); }
};

const Toy& toy() {
    static const Toy t;
    return t;
}

RenderPlan plan_for(int mode, int b) {
    const Toy& t = toy();
    MiniBatchSpec spec;
    spec.seed = 1;
    if (b > 1) {
        spec.strategy = BatchStrategy::multi_view;
        spec.views_per_batch = b;
    }
    const RenderPlan plan = sample_batch(spec, t.views, t.data.cameras, std::uint64_t{0}, RenderMode::thread_efficient);
    return with_mode(plan, static_cast<RenderMode>(mode), t.data.cameras);
}

void BM_Forward(benchmark::State& state) {
    const Toy& t = toy();
    const RenderPlan plan = plan_for(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(render(plan, t.scene.gaussians, t.data.cameras));
    state.SetLabel(to_string(plan.mode));
}
BENCHMARK(BM_Forward)
    ->Args({0, 1})
    ->Args({0, 4})
    ->Args({1, 4})
    ->Args({2, 4})
    ->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
    const Toy& t = toy();
    const RenderPlan plan = plan_for(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    ObjectiveConfig obj;
    obj.loss = LossMode::l1;
    for (auto _ : state) benchmark::DoNotOptimize(evaluate_batch(plan, t.scene.gaussians, t.data, obj));
    state.SetLabel(to_string(plan.mode));
}
BENCHMARK(BM_ForwardBackward)
    ->Args({0, 1})
    ->Args({0, 4})
    ->Args({1, 4})
    ->Args({2, 4})
    ->Unit(benchmark::kMillisecond);

void BM_Binning(benchmark::State& state) {
    const Toy& t = toy();
    const int tile = static_cast<int>(state.range(0));
    std::vector<std::vector<Projected2D>> projected;
    std::vector<Camera> cams;
    for (int v = 0; v < 4; ++v) {
        const Camera& cam = t.data.cameras[static_cast<std::size_t>(v)];
        cams.push_back(cam);
        std::vector<Projected2D> p;
        for (const Gaussian3D& g : t.scene.gaussians) p.push_back(project(g, cam));
        projected.push_back(std::move(p));
    }
    for (auto _ : state) benchmark::DoNotOptimize(bin_and_sort(projected, cams, tile));
}
BENCHMARK(BM_Binning)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);

}  // namespace
