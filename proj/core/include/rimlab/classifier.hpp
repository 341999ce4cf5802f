#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace rimlab::gbt {

struct BoostParams {
    int n_trees = 2000;
    int max_depth = 15;
    double learning_rate = 5e-3;
    double lambda = 1.0;            ///< L2 penalty on leaf weights
    double min_child_weight = 1.0;  ///< minimum hessian sum per child
    double positive_weight = 1.0;   ///< multiplies gradient and hessian of positive samples
    double base_score = 0.5;        ///< initial probability

    void validate() const;
};

/// Internal nodes have feature >= 0; leaves have feature == -1 and carry `weight`.
struct Node {
    int feature = -1;
    double threshold = 0.0;
    bool default_left = true; ///< direction taken by NaN inputs
    int left = -1;
    int right = -1;
    double weight = 0.0;

    [[nodiscard]] bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<Node> nodes; ///< nodes[0] is the root

    [[nodiscard]] double predict(std::span<const double> x) const;
    [[nodiscard]] int depth() const;
    [[nodiscard]] std::size_t split_count() const;
};

struct BoostedModel {
    std::vector<Tree> trees;
    double learning_rate = 5e-3;
    double base_score = 0.5;
    std::vector<std::string> feature_names;
    /// Mean training logistic loss before the first round and after each round. Not serialised.
    std::vector<double> loss_trace;

    [[nodiscard]] std::size_t feature_count() const { return feature_names.size(); }
    [[nodiscard]] double predict_margin(std::span<const double> x) const;
    /// sigmoid(logit(base_score) + learning_rate * sum of tree outputs). Throws on wrong dimensionality.
    [[nodiscard]] double predict_proba(std::span<const double> x) const;
    [[nodiscard]] std::vector<double> predict_proba(const std::vector<std::vector<double>>& rows) const;
    /// Throws InvalidArgument unless `names` equals the training schema, in order.
    void require_schema(const std::vector<std::string>& names) const;
};

/// Logistic-loss Newton boosting with exact greedy splits. Rows must share one length equal to names.size().
[[nodiscard]] BoostedModel train(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels,
                                 const BoostParams& params, std::vector<std::string> names = {});

/// Mean logistic loss of probabilities against 0/1 labels.
[[nodiscard]] double logistic_loss(std::span<const double> probabilities, std::span<const int> labels);

/// Number of internal nodes splitting on each feature, summed over trees.
[[nodiscard]] std::vector<double> feature_importance(const BoostedModel& model);

struct ImportanceRow {
    std::string measurement;
    double score = 0.0;
};

/// Grouping key for aggregation: drops the _full/_high/_low suffix; every lbp_NN bin maps to "lbp".
[[nodiscard]] std::string measurement_group(const std::string& feature_name);

/// Averages each measurement's scores over its mask variants (or LBP bins) within a fold, then across folds.
/// Rows are sorted by descending score, ties by first appearance.
[[nodiscard]] std::vector<ImportanceRow> aggregate_importance(const std::vector<std::vector<double>>& per_fold,
                                                              const std::vector<std::string>& names);

nlohmann::json to_json(const BoostedModel& model);
[[nodiscard]] BoostedModel model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const BoostedModel& model);
[[nodiscard]] BoostedModel load_model(const std::filesystem::path& path);

inline constexpr int kModelVersion = 1;

} // namespace rimlab::gbt
