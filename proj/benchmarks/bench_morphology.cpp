#include <benchmark/benchmark.h>

#include "rimlab/morphology.hpp"
#include "rimlab/simulator.hpp"

using namespace rimlab;

namespace {

Mask3D lesion(double radius) {
    sim::LesionSpec spec;
    spec.radius_mm = radius;
    return sim::generate_lesion(spec).lesion_mask;
}

} // namespace

static void BM_DistanceToEdge(benchmark::State& state) {
    const auto mask = lesion(static_cast<double>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(distance_to_edge(mask));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(mask.size()));
}
BENCHMARK(BM_DistanceToEdge)->Arg(7)->Arg(15);

static void BM_ConnectedComponents(benchmark::State& state) {
    const auto mask = lesion(12.0);
    const auto connectivity = state.range(0) == 26 ? Connectivity::TwentySix : Connectivity::Six;
    for (auto _ : state) benchmark::DoNotOptimize(connected_components(mask, connectivity));
}
BENCHMARK(BM_ConnectedComponents)->Arg(6)->Arg(26);
