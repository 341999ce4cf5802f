#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "rimlab/features.hpp"
#include "rimlab/rvol.hpp"
#include "rimlab/simulator.hpp"

using namespace rimlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(std::vector<std::string> args) { return cli::run(args); }

class CliTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = fs::temp_directory_path() / "rimlab-cli-test";
        fs::remove_all(root_);
        fs::create_directories(root_);
        ASSERT_EQ(run({"simulate", "-o", data().string(), "--seed", "5", "--count-rim-plus", "24", "--count-rim-minus",
                       "16"}),
                  cli::kExitOk);
        ASSERT_EQ(run({"segment", "-d", data().string(), "-o", seg().string(), "--max-iters", "40", "-j", "2"}),
                  cli::kExitOk);
        ASSERT_EQ(run({"features", "-d", data().string(), "-s", seg().string(), "-o", features().string()}),
                  cli::kExitOk);
    }

    static fs::path data() { return root_ / "data"; }
    static fs::path seg() { return root_ / "seg"; }
    static fs::path features() { return root_ / "features.csv"; }
    static fs::path dir(const std::string& name) { return root_ / name; }

    static fs::path root_;
};

fs::path CliTest::root_;

} // namespace

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run({}), cli::kExitUsage);
    EXPECT_EQ(run({"frobnicate"}), cli::kExitUsage);
    EXPECT_EQ(run({"simulate", "--mode", "odd"}), cli::kExitUsage);
    EXPECT_EQ(run({"train"}), cli::kExitUsage);
    EXPECT_EQ(run({"--help"}), cli::kExitOk);
    EXPECT_EQ(run({"--version"}), cli::kExitOk);
}

TEST(Cli, EmptyDataset) {
    const auto out = fs::temp_directory_path() / "rimlab-cli-empty";
    fs::remove_all(out);
    ASSERT_EQ(run({"simulate", "-o", out.string(), "--count-rim-plus", "0", "--count-rim-minus", "0"}), cli::kExitOk);
    const auto manifest = sim::load_manifest(out / "manifest.json");
    EXPECT_TRUE(manifest.entries.empty());
    fs::remove_all(out);
}

TEST(Cli, MissingInputsFail) {
    const auto out = fs::temp_directory_path() / "rimlab-cli-nothing";
    EXPECT_EQ(run({"segment", "-d", out.string(), "-o", out.string()}), cli::kExitFailure);
    EXPECT_EQ(run({"train", "-f", (out / "none.csv").string()}), cli::kExitFailure);
}

TEST_F(CliTest, SimulationIsByteReproducible) {
    ASSERT_EQ(run({"simulate", "-o", dir("sim2").string(), "--seed", "5", "--count-rim-plus", "24",
                   "--count-rim-minus", "16"}),
              cli::kExitOk);
    for (const auto& e : fs::directory_iterator(data())) {
        EXPECT_EQ(slurp(e.path()), slurp(dir("sim2") / e.path().filename())) << e.path();
    }
}

TEST_F(CliTest, SegmentationOutputsPartitionTheLesion) {
    const auto manifest = sim::load_manifest(data() / "manifest.json");
    ASSERT_EQ(manifest.entries.size(), 40u);
    for (const auto& e : manifest.entries) {
        const auto mask = rvol::load_mask(data() / e.mask_file);
        const auto high = rvol::load_mask(seg() / (e.id + "_high.rvol"));
        const auto low = rvol::load_mask(seg() / (e.id + "_low.rvol"));
        for (std::size_t i = 0; i < mask.size(); ++i) {
            ASSERT_EQ(high[i] + low[i], mask[i]) << e.id;
        }
    }
    EXPECT_TRUE(fs::exists(seg() / "segment.csv"));
}

TEST_F(CliTest, SingleLesionModeMatchesDatasetMode) {
    const auto manifest = sim::load_manifest(data() / "manifest.json");
    const auto it = std::find_if(manifest.entries.begin(), manifest.entries.end(),
                                 [](const auto& x) { return x.rim_file.has_value(); });
    ASSERT_NE(it, manifest.entries.end());
    const auto& e = *it;
    ASSERT_EQ(run({"segment", "--volume", (data() / e.volume_file).string(), "--mask", (data() / e.mask_file).string(),
                   "--rim", (data() / *e.rim_file).string(), "-o", dir("single").string(), "--max-iters", "40"}),
              cli::kExitOk);
    const auto stem = fs::path(e.volume_file).stem().string();
    EXPECT_EQ(slurp(dir("single") / (stem + "_high.rvol")), slurp(seg() / (e.id + "_high.rvol")));
    EXPECT_EQ(slurp(dir("single") / (stem + "_convergence.json")), slurp(seg() / (e.id + "_convergence.json")));
    EXPECT_NE(run({"segment", "--volume", (data() / e.volume_file).string(), "-o", dir("single").string()}),
              cli::kExitOk);
}

TEST_F(CliTest, FeatureTableCoversEveryLesion) {
    const auto table = feat::read_csv(features());
    EXPECT_EQ(table.size(), 40u);
    EXPECT_EQ(table.names, feat::feature_names());
}

TEST_F(CliTest, MissingSegmentationsNeedAllowPartial) {
    const auto partial = dir("partial_seg");
    fs::create_directories(partial);
    fs::copy(seg(), partial, fs::copy_options::overwrite_existing | fs::copy_options::recursive);
    const auto manifest = sim::load_manifest(data() / "manifest.json");
    fs::remove(partial / (manifest.entries[3].id + "_high.rvol"));
    const auto out = dir("partial.csv");
    EXPECT_EQ(run({"features", "-d", data().string(), "-s", partial.string(), "-o", out.string()}), cli::kExitPartial);
    EXPECT_FALSE(fs::exists(out));
    EXPECT_EQ(run({"features", "-d", data().string(), "-s", partial.string(), "-o", out.string(), "--allow-partial"}),
              cli::kExitOk);
    EXPECT_EQ(feat::read_csv(out).size(), 39u);
}

TEST_F(CliTest, TrainEvaluateAndSchemaCheck) {
    const auto model = dir("model.json");
    const auto holdout = dir("holdout.csv");
    ASSERT_EQ(run({"train", "-f", features().string(), "-m", model.string(), "--holdout", holdout.string(),
                   "--n-trees", "40", "--max-depth", "4", "--learning-rate", "0.2"}),
              cli::kExitOk);
    EXPECT_EQ(feat::read_csv(holdout).size(), 10u);
    const auto report = dir("report.json");
    ASSERT_EQ(run({"evaluate", "-f", holdout.string(), "-m", model.string(), "-r", report.string()}), cli::kExitOk);
    const auto j = json::parse(slurp(report));
    EXPECT_TRUE(j.contains("metrics"));

    auto table = feat::read_csv(holdout);
    std::swap(table.names[0], table.names[1]);
    for (auto& r : table.rows) std::swap(r[0], r[1]);
    const auto permuted = dir("permuted.csv");
    feat::write_csv(permuted, table);
    EXPECT_EQ(run({"evaluate", "-f", permuted.string(), "-m", model.string()}), cli::kExitFailure);
}

TEST_F(CliTest, CrossValidationAndImportance) {
    const auto out = dir("cv");
    ASSERT_EQ(run({"cv", "-f", features().string(), "-o", out.string(), "--n-trees", "20", "--max-depth", "3",
                   "--learning-rate", "0.3", "--lesions-per-subject", "4"}),
              cli::kExitOk);
    const auto report = json::parse(slurp(out / "cv_report.json"));
    EXPECT_EQ(report.at("folds").size(), 5u);
    EXPECT_TRUE(fs::exists(out / "mean_roc.csv"));
    EXPECT_TRUE(fs::exists(out / "mean_pr.csv"));
    const auto imp = dir("importance.csv");
    ASSERT_EQ(run({"importance", "--cv-report", (out / "cv_report.json").string(), "-o", imp.string()}), cli::kExitOk);
    std::ifstream in(imp);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "measurement,f_score");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 24);
    EXPECT_EQ(run({"importance", "--cv-report", "x.json", "-m", "y.json"}), cli::kExitUsage);
}

TEST_F(CliTest, WeightGridWritesOneDirectoryPerValue) {
    const auto out = dir("grid");
    ASSERT_EQ(run({"segment", "-d", data().string(), "-o", out.string(), "--max-iters", "5", "-w", "0", "-w", "2"}),
              cli::kExitOk);
    EXPECT_TRUE(fs::exists(out / "w_0" / "segment.csv"));
    EXPECT_TRUE(fs::exists(out / "w_2" / "segment.csv"));
}

TEST_F(CliTest, FlagsOverrideTheConfigFile) {
    const auto config = dir("rimlab.json");
    std::ofstream(config) << json{{"levelset", {{"max_iters", 3}, {"tol", 1e-12}}}}.dump();
    const auto manifest = sim::load_manifest(data() / "manifest.json");
    const auto& e = manifest.entries.front();
    const std::vector<std::string> single{"segment", "--volume", (data() / e.volume_file).string(), "--mask",
                                          (data() / e.mask_file).string()};
    auto from_config = single;
    from_config.insert(from_config.end(), {"--config", config.string(), "-o", dir("cfg").string()});
    ASSERT_EQ(run(from_config), cli::kExitOk);
    auto overridden = single;
    overridden.insert(overridden.end(), {"--config", config.string(), "-o", dir("flag").string(), "--max-iters", "6"});
    ASSERT_EQ(run(overridden), cli::kExitOk);
    const auto stem = fs::path(e.volume_file).stem().string() + "_convergence.json";
    EXPECT_EQ(json::parse(slurp(dir("cfg") / stem)).at("iterations"), 3);
    EXPECT_EQ(json::parse(slurp(dir("flag") / stem)).at("iterations"), 6);

    std::ofstream(dir("bad.json")) << R"({"levelset": {"unknown": 1}})";
    auto bad = single;
    bad.insert(bad.end(), {"--config", dir("bad.json").string(), "-o", dir("bad").string()});
    EXPECT_EQ(run(bad), cli::kExitFailure);
}
