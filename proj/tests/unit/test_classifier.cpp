#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "oracles/oracles.hpp"
#include "rimlab/classifier.hpp"
#include "rimlab/error.hpp"
#include "rimlab/features.hpp"

using namespace rimlab;
using namespace rimlab::gbt;

namespace {

struct Dataset {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
};

Dataset random_dataset(std::mt19937_64& rng, std::size_t n, std::size_t features, double signal) {
    std::normal_distribution<double> noise(0.0, 1.0);
    Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % 2);
        std::vector<double> row(features);
        for (std::size_t f = 0; f < features; ++f) row[f] = noise(rng) + (f == 0 ? signal * y : 0.0);
        d.rows.push_back(row);
        d.labels.push_back(y);
    }
    return d;
}

Dataset separable(std::mt19937_64& rng, std::size_t n) {
    auto d = random_dataset(rng, n, 5, 0.0);
    for (std::size_t i = 0; i < n; ++i) d.rows[i][2] = d.labels[i];
    return d;
}

BoostParams quick(int trees, int depth = 3, double lr = 0.3) {
    BoostParams p;
    p.n_trees = trees;
    p.max_depth = depth;
    p.learning_rate = lr;
    return p;
}

std::vector<std::string> names(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("f" + std::to_string(i));
    return out;
}

std::size_t total_splits(const BoostedModel& m) {
    std::size_t n = 0;
    for (const auto& t : m.trees) n += t.split_count();
    return n;
}

} // namespace

TEST(Boosting, EmptyEnsemblePredictsTheBaseScore) {
    std::mt19937_64 rng(1);
    const auto d = random_dataset(rng, 20, 3, 1.0);
    const auto m = train(d.rows, d.labels, quick(0), names(3));
    EXPECT_TRUE(m.trees.empty());
    for (const auto& r : d.rows) EXPECT_DOUBLE_EQ(m.predict_proba(r), 0.5);
    EXPECT_EQ(m.loss_trace.size(), 1u);
    EXPECT_NEAR(m.loss_trace[0], std::log(2.0), 1e-12);
}

TEST(Boosting, SingleStumpMatchesHandComputation) {
    // One feature, labels split perfectly at 1.5: rows {0,1 -> 0} and {2,3 -> 1}.
    const std::vector<std::vector<double>> rows{{0}, {1}, {2}, {3}};
    const std::vector<int> y{0, 0, 1, 1};
    BoostParams p = quick(1, 1, 1.0);
    p.min_child_weight = 0.0;
    const auto m = train(rows, y, p, {"x"});
    ASSERT_EQ(m.trees.size(), 1u);
    const auto& root = m.trees[0].nodes[0];
    EXPECT_EQ(root.feature, 0);
    EXPECT_DOUBLE_EQ(root.threshold, 1.5);
    // At p = 0.5: g = p - y, h = 0.25. Left: G = 1, H = 0.5 -> w = -1 / 1.5. Right: G = -1 -> w = 1 / 1.5.
    const auto& left = m.trees[0].nodes[static_cast<std::size_t>(root.left)];
    const auto& right = m.trees[0].nodes[static_cast<std::size_t>(root.right)];
    EXPECT_NEAR(left.weight, -1.0 / 1.5, 1e-15);
    EXPECT_NEAR(right.weight, 1.0 / 1.5, 1e-15);
    EXPECT_NEAR(m.predict_proba(std::vector<double>{0.0}), 1.0 / (1.0 + std::exp(1.0 / 1.5)), 1e-15);
    EXPECT_NEAR(m.predict_proba(std::vector<double>{1.4999}), m.predict_proba(std::vector<double>{0.0}), 0.0);
    EXPECT_NEAR(m.predict_proba(std::vector<double>{1.5}), 1.0 / (1.0 + std::exp(-1.0 / 1.5)), 1e-15);
}

TEST(Boosting, TieBreakPrefersLowerFeatureIndex) {
    const std::vector<std::vector<double>> rows{{0, 0}, {0, 0}, {1, 1}, {1, 1}};
    const std::vector<int> y{0, 0, 1, 1};
    const auto m = train(rows, y, [] { auto p = quick(1, 1); p.min_child_weight = 0.0; return p; }(), names(2));
    EXPECT_EQ(m.trees[0].nodes[0].feature, 0);
}

TEST(Boosting, LabelCopyFeatureSeparatesTheTrainingSet) {
    std::mt19937_64 rng(2);
    const auto d = separable(rng, 60);
    const auto m = train(d.rows, d.labels, quick(50), names(5));
    std::vector<double> scores;
    for (const auto& r : d.rows) scores.push_back(m.predict_proba(r));
    EXPECT_DOUBLE_EQ(oracle::concordance_auc(scores, d.labels), 1.0);
    for (std::size_t i = 0; i < d.rows.size(); ++i) EXPECT_EQ(scores[i] > 0.5, d.labels[i] == 1);
    const auto importance = feature_importance(m);
    EXPECT_EQ(std::max_element(importance.begin(), importance.end()) - importance.begin(), 2);
}

TEST(Boosting, LossIsNonIncreasingPerRound) {
    std::mt19937_64 rng(3);
    for (int c = 0; c < 20; ++c) {
        const auto d = random_dataset(rng, 30 + rng() % 80, 1 + rng() % 6, (c % 4) * 0.7);
        BoostParams p = quick(40, 1 + static_cast<int>(rng() % 5), 0.05 + 0.1 * (c % 5));
        p.lambda = c % 3 == 0 ? 0.0 : 1.0;
        const auto m = train(d.rows, d.labels, p, names(d.rows[0].size()));
        ASSERT_EQ(m.loss_trace.size(), 41u);
        for (std::size_t i = 1; i < m.loss_trace.size(); ++i) {
            ASSERT_LE(m.loss_trace[i], m.loss_trace[i - 1] + 1e-12) << "dataset " << c << " round " << i;
        }
        const auto probs = m.predict_proba(d.rows);
        EXPECT_NEAR(logistic_loss(probs, d.labels), m.loss_trace.back(), 1e-9);
    }
}

TEST(Boosting, RespectsDepthLimitAndFeatureRange) {
    std::mt19937_64 rng(4);
    const auto d = random_dataset(rng, 200, 6, 0.5);
    const auto m = train(d.rows, d.labels, quick(10, 4), names(6));
    for (const auto& t : m.trees) {
        EXPECT_LE(t.depth(), 4);
        for (const auto& n : t.nodes) EXPECT_LT(n.feature, 6);
    }
}

TEST(Boosting, ImportanceCountsSplits) {
    std::mt19937_64 rng(5);
    auto d = random_dataset(rng, 120, 5, 1.0);
    for (auto& r : d.rows) r[4] = 3.0; // constant column can never split
    const auto m = train(d.rows, d.labels, quick(25, 4), names(5));
    const auto imp = feature_importance(m);
    EXPECT_EQ(imp[4], 0.0);
    double sum = 0.0;
    for (double v : imp) sum += v;
    EXPECT_EQ(sum, static_cast<double>(total_splits(m)));
    EXPECT_GT(sum, 0.0);
}

TEST(Boosting, DuplicateRowsScoreIdentically) {
    std::mt19937_64 rng(6);
    auto d = random_dataset(rng, 50, 4, 1.0);
    d.rows.push_back(d.rows[7]);
    d.labels.push_back(d.labels[7]);
    const auto m = train(d.rows, d.labels, quick(20), names(4));
    EXPECT_EQ(m.predict_proba(d.rows[7]), m.predict_proba(d.rows.back()));
}

TEST(Boosting, MonotoneColumnTransformKeepsPredictions) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> level(0, 9);
    for (int c = 0; c < 10; ++c) {
        Dataset d;
        for (int i = 0; i < 80; ++i) {
            std::vector<double> row{double(level(rng)), double(level(rng)), double(level(rng))};
            d.labels.push_back(row[0] + row[1] + level(rng) > 13 ? 1 : 0);
            d.rows.push_back(row);
        }
        auto transformed = d.rows;
        for (auto& r : transformed) r[1] = std::exp(r[1]) - 5.0;
        const auto a = train(d.rows, d.labels, quick(15, 3), names(3));
        const auto b = train(transformed, d.labels, quick(15, 3), names(3));
        for (std::size_t i = 0; i < d.rows.size(); ++i) {
            ASSERT_EQ(a.predict_proba(d.rows[i]), b.predict_proba(transformed[i])) << "dataset " << c;
        }
    }
}

TEST(Boosting, RefusesBadInput) {
    const std::vector<std::vector<double>> rows{{0}, {1}};
    EXPECT_THROW((void)train(rows, {1, 1}, quick(2), {"x"}), InvalidArgument);
    EXPECT_THROW((void)train(rows, {0, 1, 1}, quick(2), {"x"}), InvalidArgument);
    EXPECT_THROW((void)train({{0}, {NAN}}, {0, 1}, quick(2), {"x"}), InvalidArgument);
    EXPECT_THROW((void)train({{0}, {1, 2}}, {0, 1}, quick(2), {"x"}), InvalidArgument);
    EXPECT_THROW((void)train(rows, {0, 2}, quick(2), {"x"}), InvalidArgument);
    EXPECT_THROW((void)train(rows, {0, 1}, quick(2), {"x", "y"}), InvalidArgument);
    BoostParams bad = quick(2);
    bad.learning_rate = 0.0;
    EXPECT_THROW((void)train(rows, {0, 1}, bad, {"x"}), InvalidArgument);
    bad = quick(2);
    bad.max_depth = 0;
    EXPECT_THROW((void)train(rows, {0, 1}, bad, {"x"}), InvalidArgument);
}

TEST(Boosting, PredictChecksDimensionality) {
    const auto m = train({{0}, {1}}, {0, 1}, quick(1), {"x"});
    EXPECT_THROW((void)m.predict_proba(std::vector<double>{1.0, 2.0}), InvalidArgument);
}

TEST(Boosting, SchemaEnforcement) {
    const auto m = train({{0, 1}, {1, 0}}, {0, 1}, quick(1), {"a", "b"});
    EXPECT_NO_THROW(m.require_schema({"a", "b"}));
    EXPECT_THROW(m.require_schema({"b", "a"}), InvalidArgument);
    EXPECT_THROW(m.require_schema({"a"}), InvalidArgument);
}

TEST(ModelJson, RoundTripPredictsBitIdentically) {
    std::mt19937_64 rng(8);
    const auto d = random_dataset(rng, 150, 6, 0.8);
    const auto m = train(d.rows, d.labels, quick(30, 5, 0.1), names(6));
    const auto path = std::filesystem::temp_directory_path() / "rimlab-unit-model.json";
    save_model(path, m);
    const auto back = load_model(path);
    EXPECT_EQ(back.feature_names, m.feature_names);
    std::normal_distribution<double> n(0.0, 2.0);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> x(6);
        for (auto& v : x) v = n(rng);
        ASSERT_EQ(back.predict_proba(x), m.predict_proba(x));
    }
    EXPECT_EQ(to_json(back), to_json(m));
    std::filesystem::remove(path);
}

TEST(ModelJson, MalformedInputGivesStructuredErrors) {
    BoostParams p = quick(2);
    p.min_child_weight = 0.0;
    const auto m = train({{0}, {1}}, {0, 1}, p, {"x"});
    auto j = to_json(m);
    ASSERT_TRUE(j["trees"][0][0].contains("feature"));
    auto wrong_version = j;
    wrong_version["version"] = 99;
    EXPECT_THROW((void)model_from_json(wrong_version), UnsupportedVersion);
    auto wrong_format = j;
    wrong_format["format"] = "something-else";
    EXPECT_THROW((void)model_from_json(wrong_format), ParseError);
    auto dangling = j;
    dangling["trees"][0][0]["left"] = 42;
    EXPECT_THROW((void)model_from_json(dangling), ParseError);
    auto bad_feature = j;
    bad_feature["trees"][0][0]["feature"] = 5;
    EXPECT_THROW((void)model_from_json(bad_feature), ParseError);
    EXPECT_THROW((void)model_from_json(nlohmann::json::array()), ParseError);

    const auto path = std::filesystem::temp_directory_path() / "rimlab-unit-truncated.json";
    const auto text = j.dump();
    std::ofstream(path) << text.substr(0, text.size() / 2);
    EXPECT_THROW((void)load_model(path), ParseError);
    std::filesystem::remove(path);
}

TEST(Importance, MeasurementGroups) {
    EXPECT_EQ(measurement_group("mean_full"), "mean");
    EXPECT_EQ(measurement_group("mean_distance_high"), "mean_distance");
    EXPECT_EQ(measurement_group("n_components_low"), "n_components");
    EXPECT_EQ(measurement_group("volume_fraction_high"), "volume_fraction");
    EXPECT_EQ(measurement_group("lbp_13"), "lbp");
}

TEST(Importance, AggregatesToTwentyFourMeasurements) {
    const auto& names = feat::feature_names();
    std::vector<double> fold(names.size(), 0.0);
    fold[0] = 3;  // volume_full
    fold[19] = 6; // volume_high
    fold[66] = 18; // lbp_00
    const auto rows = aggregate_importance({fold, std::vector<double>(names.size(), 0.0)}, names);
    ASSERT_EQ(rows.size(), 24u);
    EXPECT_EQ(rows[0].measurement, "volume");
    EXPECT_DOUBLE_EQ(rows[0].score, (3.0 + 6.0 + 0.0) / 3.0 / 2.0);
    EXPECT_EQ(rows[1].measurement, "lbp");
    EXPECT_DOUBLE_EQ(rows[1].score, 18.0 / 18.0 / 2.0);
    for (std::size_t i = 2; i < rows.size(); ++i) EXPECT_EQ(rows[i].score, 0.0);
}
