#include <benchmark/benchmark.h>

#include <random>

#include "rimlab/classifier.hpp"

using namespace rimlab;

namespace {

struct Data {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::vector<std::string> names;
};

Data make_data(std::size_t n, std::size_t features) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 1.0);
    Data d;
    for (std::size_t f = 0; f < features; ++f) d.names.push_back("f" + std::to_string(f));
    for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % 2);
        std::vector<double> row(features);
        for (std::size_t f = 0; f < features; ++f) row[f] = noise(rng) + (f < 4 ? 0.8 * y : 0.0);
        d.rows.push_back(std::move(row));
        d.labels.push_back(y);
    }
    return d;
}

} // namespace

static void BM_TrainTrees(benchmark::State& state) {
    const auto d = make_data(756, 84);
    gbt::BoostParams p;
    p.n_trees = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(gbt::train(d.rows, d.labels, p, d.names));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainTrees)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

static void BM_Predict(benchmark::State& state) {
    const auto d = make_data(756, 84);
    gbt::BoostParams p;
    p.n_trees = 500;
    const auto model = gbt::train(d.rows, d.labels, p, d.names);
    std::size_t i = 0;
    for (auto _ : state) benchmark::DoNotOptimize(model.predict_proba(d.rows[i++ % d.rows.size()]));
}
BENCHMARK(BM_Predict);
