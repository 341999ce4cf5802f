#include <benchmark/benchmark.h>

#include "rimlab/features.hpp"
#include "rimlab/rimseg.hpp"
#include "rimlab/simulator.hpp"

using namespace rimlab;

namespace {

sim::LesionPatch patch() {
    sim::LesionSpec spec;
    spec.kind = sim::LesionKind::Shell;
    spec.radius_mm = 12.0;
    spec.thickness_mm = 2.0;
    spec.rim_value = 30.0;
    spec.core_value = -15.0;
    spec.noise_sigma = 3.0;
    spec.seed = 5;
    return sim::generate_lesion(spec);
}

} // namespace

static void BM_LbpHistogram(benchmark::State& state) {
    const auto p = patch();
    for (auto _ : state) benchmark::DoNotOptimize(feat::lbp_histogram(p.volume, p.lesion_mask));
}
BENCHMARK(BM_LbpHistogram)->Unit(benchmark::kMicrosecond);

static void BM_ExtractRimSet(benchmark::State& state) {
    const auto p = patch();
    const auto seg = seg::rimseg(p, seg::LevelSetParams{});
    for (auto _ : state) benchmark::DoNotOptimize(feat::extract_rimset(p, seg));
}
BENCHMARK(BM_ExtractRimSet)->Unit(benchmark::kMicrosecond);
