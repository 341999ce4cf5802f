#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "rimlab/error.hpp"
#include "rimlab/pipeline.hpp"

using namespace rimlab;
using namespace rimlab::pipeline;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("rimlab-pipeline-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST(Config, DefaultsRoundTrip) {
    const PipelineConfig c;
    EXPECT_NO_THROW(c.validate());
    const auto back = config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, PartialOverrides) {
    const auto c = config_from_json(json::parse(R"({
        "jobs": 3,
        "levelset": {"w": 2.5, "max_iters": 10},
        "boost": {"n_trees": 7},
        "simulator": {"count_rim_plus": 4, "radius": [8, 9], "background": {"amplitude": 2}},
        "evaluation": {"folds": 4},
        "service": {"port": 9000}
    })"));
    EXPECT_EQ(c.jobs, 3);
    EXPECT_EQ(c.levelset.w, 2.5);
    EXPECT_EQ(c.levelset.max_iters, 10);
    EXPECT_EQ(c.levelset.mu, seg::LevelSetParams{}.mu);
    EXPECT_EQ(c.boost.n_trees, 7);
    EXPECT_EQ(c.simulator.count_rim_plus, 4);
    EXPECT_EQ(c.simulator.radius.lo, 8.0);
    EXPECT_EQ(c.simulator.radius.hi, 9.0);
    EXPECT_EQ(c.simulator.background.amplitude, 2.0);
    EXPECT_EQ(c.evaluation.folds, 4);
    EXPECT_EQ(c.service.port, 9000);
}

TEST(Config, UnknownKeysAreRejected) {
    try {
        (void)config_from_json(json::parse(R"({"levelset": {"mu": 1, "nu": 2}})"));
        FAIL() << "expected InvalidArgument";
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("levelset.nu"), std::string::npos) << e.what();
    }
    EXPECT_THROW((void)config_from_json(json::parse(R"({"colour": 1})")), InvalidArgument);
    EXPECT_THROW((void)config_from_json(json::parse(R"({"simulator": {"background": {"x": 1}}})")), InvalidArgument);
}

TEST(Config, WrongTypesAreRejected) {
    EXPECT_THROW((void)config_from_json(json::parse(R"({"jobs": "many"})")), InvalidArgument);
    EXPECT_THROW((void)config_from_json(json::parse(R"({"levelset": []})")), InvalidArgument);
    EXPECT_THROW((void)config_from_json(json::parse(R"({"simulator": {"radius": [1]}})")), InvalidArgument);
    EXPECT_THROW((void)config_from_json(json::parse("[]")), InvalidArgument);
}

TEST(Config, Validation) {
    PipelineConfig c;
    c.evaluation.split_ratio = 1.0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = {};
    c.evaluation.folds = 1;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = {};
    c.jobs = 0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = {};
    c.service.port = 70000;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = {};
    c.levelset.dt = -1.0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = {};
    c.boost.max_depth = 0;
    EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Config, FileLoadingAndEnvironment) {
    const auto dir = scratch("config");
    const auto path = dir / "rimlab.json";
    std::ofstream(path) << R"({"levelset": {"w": 3}})";
    EXPECT_EQ(load_config(path).levelset.w, 3.0);
    std::ofstream(dir / "broken.json") << "{";
    EXPECT_THROW((void)load_config(dir / "broken.json"), ParseError);
    EXPECT_THROW((void)load_config(dir / "absent.json"), IoError);

    ::setenv("RIMLAB_CONFIG", path.c_str(), 1);
    ASSERT_TRUE(config_path_from_env().has_value());
    EXPECT_EQ(*config_path_from_env(), path);
    ::setenv("RIMLAB_CONFIG", "", 1);
    EXPECT_FALSE(config_path_from_env().has_value());
    ::unsetenv("RIMLAB_CONFIG");
    EXPECT_FALSE(config_path_from_env().has_value());
}

TEST(LevelSetJson, OverlaysAndRejects) {
    const auto p = levelset_from_json(json::parse(R"({"w": 0, "eta": 0.5})"));
    EXPECT_EQ(p.w, 0.0);
    EXPECT_EQ(p.eta, 0.5);
    EXPECT_EQ(p.dt, seg::LevelSetParams{}.dt);
    EXPECT_THROW((void)levelset_from_json(json::parse(R"({"step": 1})")), InvalidArgument);
    EXPECT_EQ(to_json(levelset_from_json(to_json(p))), to_json(p));
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
    for (int jobs : {1, 2, 4, 16}) {
        std::vector<std::atomic<int>> hits(257);
        parallel_for(hits.size(), jobs, [&](std::size_t i) { ++hits[i]; });
        for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
    }
    parallel_for(0, 4, [](std::size_t) { FAIL(); });
}

TEST(ParallelFor, RethrowsWorkerErrors) {
    EXPECT_THROW(parallel_for(50, 3,
                              [](std::size_t i) {
                                  if (i == 17) throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
}

TEST(Paths, WeightDirectories) {
    EXPECT_EQ(weight_dir("out", 0.0), fs::path("out") / "w_0");
    EXPECT_EQ(weight_dir("out", 1.5), fs::path("out") / "w_1.5");
    EXPECT_NE(weight_dir("out", 0.1), weight_dir("out", 0.2));
}

TEST(Tables, SplitIsStratifiedAndDisjoint) {
    feat::FeatureTable t;
    t.names = {"a"};
    for (int i = 0; i < 40; ++i) {
        t.ids.push_back("L" + std::to_string(i));
        t.labels.push_back(i < 32 ? 1 : 0);
        t.rows.push_back({double(i)});
    }
    const auto [train, test] = split_table(t, 0.75, 5);
    EXPECT_EQ(train.size() + test.size(), 40u);
    EXPECT_EQ(std::count(test.labels.begin(), test.labels.end(), 1), 8);
    EXPECT_EQ(std::count(test.labels.begin(), test.labels.end(), 0), 2);
    std::set<std::string> ids(train.ids.begin(), train.ids.end());
    for (const auto& id : test.ids) EXPECT_EQ(ids.count(id), 0u);
    EXPECT_EQ(train.names, t.names);
    const auto again = split_table(t, 0.75, 5);
    EXPECT_EQ(again.first.ids, train.ids);
    const auto picked = subset(t, {3, 1});
    EXPECT_EQ(picked.ids, (std::vector<std::string>{"L3", "L1"}));
    EXPECT_EQ(picked.rows[0][0], 3.0);
}

TEST(Segmentation, DatasetOutputsAndSummary) {
    const auto dir = scratch("segment");
    sim::DatasetConfig cfg;
    cfg.count_rim_plus = 3;
    cfg.count_rim_minus = 2;
    cfg.seed = 9;
    const auto manifest = sim::generate_dataset(cfg, dir / "data");
    seg::LevelSetParams params;
    params.max_iters = 30;
    const auto rows = segment_dataset(manifest, params, dir / "seg", 2);
    ASSERT_EQ(rows.size(), 5u);
    for (const auto& r : rows) {
        EXPECT_TRUE(fs::exists(dir / "seg" / (r.id + "_high.rvol")));
        EXPECT_TRUE(fs::exists(dir / "seg" / (r.id + "_low.rvol")));
        EXPECT_TRUE(fs::exists(dir / "seg" / (r.id + "_convergence.json")));
        EXPECT_EQ(r.dice.has_value(), r.label == sim::Label::RimPositive);
    }
    EXPECT_TRUE(fs::exists(dir / "seg" / "segment.csv"));
    ASSERT_TRUE(mean_dice(rows).has_value());
    EXPECT_FALSE(mean_dice({}).has_value());

    const auto features = extract_features(manifest, dir / "seg", 2);
    EXPECT_TRUE(features.missing.empty());
    EXPECT_EQ(features.table.size(), 5u);
    fs::remove(dir / "seg" / (rows[0].id + "_low.rvol"));
    const auto partial = extract_features(manifest, dir / "seg", 1);
    EXPECT_EQ(partial.missing, std::vector<std::string>{rows[0].id});
    EXPECT_EQ(partial.table.size(), 4u);
}

TEST(Segmentation, ConvergenceRecordHasNoTiming) {
    Volume3D v({{9, 9, 3}, {1, 1, 1}}, 0.0f);
    Mask3D m({{9, 9, 3}, {1, 1, 1}}, 0);
    for (int y = 1; y < 8; ++y)
        for (int x = 1; x < 8; ++x) {
            m(x, y, 1) = 1;
            v(x, y, 1) = (x == 1 || x == 7 || y == 1 || y == 7) ? 40.0f : -10.0f;
        }
    const auto outcome = segment_lesion(v, m, seg::LevelSetParams{});
    const auto j = convergence_json(outcome);
    EXPECT_FALSE(j.contains("solver_ms"));
    EXPECT_TRUE(j.contains("iterations"));
    EXPECT_TRUE(j.at("dice").is_null());
    EXPECT_GE(outcome.solver_ms, 0.0);
}
