#include <benchmark/benchmark.h>

#include "rimlab/rimseg.hpp"
#include "rimlab/simulator.hpp"

using namespace rimlab;

namespace {

sim::LesionPatch shell(double radius) {
    sim::LesionSpec spec;
    spec.kind = sim::LesionKind::Shell;
    spec.radius_mm = radius;
    spec.thickness_mm = 2.0;
    spec.rim_value = 30.0;
    spec.core_value = -15.0;
    spec.noise_sigma = 3.0;
    spec.seed = 17;
    return sim::generate_lesion(spec);
}

} // namespace

static void BM_RimSeg(benchmark::State& state) {
    const auto patch = shell(static_cast<double>(state.range(0)));
    const seg::LevelSetParams params;
    for (auto _ : state) benchmark::DoNotOptimize(seg::rimseg(patch, params));
}
BENCHMARK(BM_RimSeg)->Arg(7)->Arg(11)->Arg(15)->Unit(benchmark::kMillisecond);

static void BM_ChanVese(benchmark::State& state) {
    const auto patch = shell(15.0);
    seg::LevelSetParams params;
    params.w = 0.0;
    for (auto _ : state) benchmark::DoNotOptimize(seg::chan_vese(patch.volume, patch.lesion_mask, params));
}
BENCHMARK(BM_ChanVese)->Unit(benchmark::kMillisecond);
