#include "rimlab/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rimlab/error.hpp"

namespace rimlab::gbt {
namespace {

constexpr double kMinGain = 1e-12;
constexpr const char* kFormatTag = "rimlab-boosted-model";

double sigmoid(double m) {
    if (m >= 0.0) return 1.0 / (1.0 + std::exp(-m));
    const double e = std::exp(m);
    return e / (1.0 + e);
}

double softplus(double m) { return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

struct SplitCandidate {
    double gain = kMinGain;
    int feature = -1;
    double threshold = 0.0;
    double g_left = 0.0;
    double h_left = 0.0;
};

struct NodeStats {
    double g = 0.0;
    double h = 0.0;
};

double leaf_weight(const NodeStats& s, double lambda) { return -s.g / (s.h + lambda); }

double score(double g, double h, double lambda) { return g * g / (h + lambda); }

// Midpoint between two consecutive distinct values, nudged so that lo < t <= hi always holds.
double midpoint(double lo, double hi) {
    const double mid = lo + 0.5 * (hi - lo);
    return mid > lo ? mid : hi;
}

class TreeBuilder {
public:
    TreeBuilder(const std::vector<std::vector<double>>& rows, const std::vector<std::vector<std::size_t>>& order,
                const BoostParams& params)
        : rows_(rows), order_(order), params_(params), node_of_(rows.size(), 0) {}

    Tree build(const std::vector<double>& g, const std::vector<double>& h) {
        std::fill(node_of_.begin(), node_of_.end(), 0);
        Tree tree;
        tree.nodes.emplace_back();
        std::vector<NodeStats> stats(1);
        for (std::size_t i = 0; i < g.size(); ++i) {
            stats[0].g += g[i];
            stats[0].h += h[i];
        }

        std::vector<int> frontier{0};
        for (int depth = 0; depth < params_.max_depth && !frontier.empty(); ++depth) {
            const auto best = find_splits(tree, stats, frontier, g, h);
            std::vector<int> next;
            std::vector<int> split_nodes;
            for (std::size_t s = 0; s < frontier.size(); ++s) {
                const int id = frontier[s];
                const SplitCandidate& c = best[s];
                if (c.feature < 0) continue;
                const NodeStats parent = stats[static_cast<std::size_t>(id)];
                const NodeStats left{c.g_left, c.h_left};
                const NodeStats right{parent.g - c.g_left, parent.h - c.h_left};
                const int l = static_cast<int>(tree.nodes.size());
                tree.nodes.emplace_back();
                tree.nodes.emplace_back();
                stats.push_back(left);
                stats.push_back(right);
                Node& node = tree.nodes[static_cast<std::size_t>(id)];
                node.feature = c.feature;
                node.threshold = c.threshold;
                node.left = l;
                node.right = l + 1;
                node.default_left = left.h >= right.h;
                next.push_back(l);
                next.push_back(l + 1);
                split_nodes.push_back(id);
            }
            if (!split_nodes.empty()) route(tree);
            frontier = std::move(next);
        }
        for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
            if (tree.nodes[id].is_leaf()) tree.nodes[id].weight = leaf_weight(stats[id], params_.lambda);
        }
        return tree;
    }

    /// Leaf index of every training row after build().
    [[nodiscard]] const std::vector<int>& leaves() const { return node_of_; }

private:
    std::vector<SplitCandidate> find_splits(const Tree& tree, const std::vector<NodeStats>& stats,
                                            const std::vector<int>& frontier, const std::vector<double>& g,
                                            const std::vector<double>& h) {
        std::vector<int> slot_of(tree.nodes.size(), -1);
        for (std::size_t s = 0; s < frontier.size(); ++s) slot_of[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);

        const std::size_t slots = frontier.size();
        std::vector<SplitCandidate> best(slots);
        std::vector<double> cum_g(slots), cum_h(slots), last(slots);
        std::vector<char> seen(slots);
        const std::size_t features = rows_.empty() ? 0 : rows_[0].size();
        const double lambda = params_.lambda;
        const double mcw = params_.min_child_weight;

        for (std::size_t f = 0; f < features; ++f) {
            std::fill(cum_g.begin(), cum_g.end(), 0.0);
            std::fill(cum_h.begin(), cum_h.end(), 0.0);
            std::fill(seen.begin(), seen.end(), 0);
            for (std::size_t i : order_[f]) {
                const int s = slot_of[static_cast<std::size_t>(node_of_[i])];
                if (s < 0) continue;
                const auto su = static_cast<std::size_t>(s);
                const double v = rows_[i][f];
                if (seen[su] && v > last[su]) {
                    const NodeStats& parent = stats[static_cast<std::size_t>(frontier[su])];
                    const double gl = cum_g[su], hl = cum_h[su];
                    const double gr = parent.g - gl, hr = parent.h - hl;
                    if (hl >= mcw && hr >= mcw) {
                        const double gain =
                            0.5 * (score(gl, hl, lambda) + score(gr, hr, lambda) - score(parent.g, parent.h, lambda));
                        if (gain > best[su].gain) {
                            best[su] = {gain, static_cast<int>(f), midpoint(last[su], v), gl, hl};
                        }
                    }
                }
                cum_g[su] += g[i];
                cum_h[su] += h[i];
                last[su] = v;
                seen[su] = 1;
            }
        }
        return best;
    }

    void route(const Tree& tree) {
        for (std::size_t i = 0; i < node_of_.size(); ++i) {
            const Node& node = tree.nodes[static_cast<std::size_t>(node_of_[i])];
            if (node.is_leaf()) continue;
            node_of_[i] = rows_[i][static_cast<std::size_t>(node.feature)] < node.threshold ? node.left : node.right;
        }
    }

    const std::vector<std::vector<double>>& rows_;
    const std::vector<std::vector<std::size_t>>& order_;
    const BoostParams& params_;
    std::vector<int> node_of_;
};

double weighted_loss(const std::vector<double>& margin, const std::vector<int>& labels, const std::vector<double>& weight) {
    double total = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < margin.size(); ++i) {
        total += weight[i] * (softplus(margin[i]) - labels[i] * margin[i]);
        wsum += weight[i];
    }
    return total / wsum;
}

nlohmann::json node_json(const Node& n) {
    if (n.is_leaf()) return {{"leaf", n.weight}};
    return {{"feature", n.feature}, {"threshold", n.threshold}, {"default_left", n.default_left},
            {"left", n.left},       {"right", n.right}};
}

} // namespace

void BoostParams::validate() const {
    if (n_trees < 0) throw InvalidArgument("n_trees must be >= 0");
    if (max_depth < 1) throw InvalidArgument("max_depth must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning_rate must be > 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be >= 0");
    if (!(min_child_weight >= 0.0) || !std::isfinite(min_child_weight)) {
        throw InvalidArgument("min_child_weight must be >= 0");
    }
    if (!(positive_weight > 0.0) || !std::isfinite(positive_weight)) throw InvalidArgument("positive_weight must be > 0");
    if (!(base_score > 0.0 && base_score < 1.0)) throw InvalidArgument("base_score must lie in (0, 1)");
}

double Tree::predict(std::span<const double> x) const {
    std::size_t id = 0;
    while (!nodes[id].is_leaf()) {
        const Node& n = nodes[id];
        const double v = x[static_cast<std::size_t>(n.feature)];
        const bool left = std::isnan(v) ? n.default_left : v < n.threshold;
        id = static_cast<std::size_t>(left ? n.left : n.right);
    }
    return nodes[id].weight;
}

int Tree::depth() const {
    if (nodes.empty()) return 0;
    std::vector<int> d(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t id = 0; id < nodes.size(); ++id) {
        const Node& n = nodes[id];
        if (n.is_leaf()) continue;
        d[static_cast<std::size_t>(n.left)] = d[id] + 1;
        d[static_cast<std::size_t>(n.right)] = d[id] + 1;
        deepest = std::max(deepest, d[id] + 1);
    }
    return deepest;
}

std::size_t Tree::split_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return !n.is_leaf(); }));
}

double BoostedModel::predict_margin(std::span<const double> x) const {
    if (x.size() != feature_count()) {
        throw InvalidArgument(fmt::format("expected {} features, got {}", feature_count(), x.size()));
    }
    double sum = 0.0;
    for (const Tree& t : trees) sum += t.predict(x);
    return logit(base_score) + learning_rate * sum;
}

double BoostedModel::predict_proba(std::span<const double> x) const { return sigmoid(predict_margin(x)); }

std::vector<double> BoostedModel::predict_proba(const std::vector<std::vector<double>>& rows) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(predict_proba(r));
    return out;
}

void BoostedModel::require_schema(const std::vector<std::string>& names) const {
    if (names == feature_names) return;
    if (names.size() != feature_names.size()) {
        throw InvalidArgument(
            fmt::format("schema mismatch: model has {} features, table has {}", feature_names.size(), names.size()));
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] != feature_names[i]) {
            throw InvalidArgument(fmt::format("schema mismatch at column {}: model expects '{}', table has '{}'", i,
                                              feature_names[i], names[i]));
        }
    }
}

BoostedModel train(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels,
                   const BoostParams& params, std::vector<std::string> names) {
    params.validate();
    if (rows.size() != labels.size()) throw InvalidArgument("rows and labels differ in length");
    if (rows.size() < 2) throw InvalidArgument("training needs at least two samples");
    const std::size_t features = rows[0].size();
    if (features == 0) throw InvalidArgument("training rows have no features");
    std::size_t positives = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != features) throw InvalidArgument(fmt::format("row {} has {} features, expected {}", i, rows[i].size(), features));
        for (double v : rows[i]) {
            if (!std::isfinite(v)) throw InvalidArgument(fmt::format("row {} contains a non-finite feature value", i));
        }
        if (labels[i] != 0 && labels[i] != 1) throw InvalidArgument(fmt::format("label of row {} is not 0/1", i));
        positives += static_cast<std::size_t>(labels[i]);
    }
    if (positives == 0 || positives == rows.size()) {
        throw InvalidArgument("training labels contain a single class; both rim+ and rim- samples are required");
    }
    if (names.empty()) {
        for (std::size_t f = 0; f < features; ++f) names.push_back(fmt::format("f{}", f));
    }
    if (names.size() != features) throw InvalidArgument("feature name count does not match row length");

    std::vector<std::vector<std::size_t>> order(features);
    for (std::size_t f = 0; f < features; ++f) {
        auto& o = order[f];
        o.resize(rows.size());
        std::iota(o.begin(), o.end(), std::size_t{0});
        std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) { return rows[a][f] < rows[b][f]; });
    }

    BoostedModel model;
    model.learning_rate = params.learning_rate;
    model.base_score = params.base_score;
    model.feature_names = std::move(names);

    const std::size_t n = rows.size();
    std::vector<double> weight(n), margin(n, logit(params.base_score)), g(n), h(n);
    for (std::size_t i = 0; i < n; ++i) weight[i] = labels[i] == 1 ? params.positive_weight : 1.0;
    model.loss_trace.push_back(weighted_loss(margin, labels, weight));

    TreeBuilder builder(rows, order, params);
    model.trees.reserve(static_cast<std::size_t>(params.n_trees));
    for (int round = 0; round < params.n_trees; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(margin[i]);
            g[i] = weight[i] * (p - labels[i]);
            h[i] = weight[i] * p * (1.0 - p);
        }
        Tree tree = builder.build(g, h);
        const auto& leaf = builder.leaves();
        for (std::size_t i = 0; i < n; ++i) {
            margin[i] += params.learning_rate * tree.nodes[static_cast<std::size_t>(leaf[i])].weight;
        }
        model.trees.push_back(std::move(tree));
        model.loss_trace.push_back(weighted_loss(margin, labels, weight));
    }
    return model;
}

double logistic_loss(std::span<const double> probabilities, std::span<const int> labels) {
    if (probabilities.size() != labels.size() || probabilities.empty()) {
        throw InvalidArgument("logistic_loss needs equal, non-empty inputs");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = std::clamp(probabilities[i], 1e-15, 1.0 - 1e-15);
        total -= labels[i] == 1 ? std::log(p) : std::log1p(-p);
    }
    return total / static_cast<double>(labels.size());
}

std::vector<double> feature_importance(const BoostedModel& model) {
    std::vector<double> scores(model.feature_count(), 0.0);
    for (const Tree& t : model.trees) {
        for (const Node& n : t.nodes) {
            if (!n.is_leaf()) scores[static_cast<std::size_t>(n.feature)] += 1.0;
        }
    }
    return scores;
}

std::string measurement_group(const std::string& feature_name) {
    if (feature_name.rfind("lbp_", 0) == 0) return "lbp";
    for (const char* suffix : {"_full", "_high", "_low"}) {
        const std::string s(suffix);
        if (feature_name.size() > s.size() && feature_name.compare(feature_name.size() - s.size(), s.size(), s) == 0) {
            return feature_name.substr(0, feature_name.size() - s.size());
        }
    }
    return feature_name;
}

std::vector<ImportanceRow> aggregate_importance(const std::vector<std::vector<double>>& per_fold,
                                                const std::vector<std::string>& names) {
    std::vector<std::string> groups;
    std::map<std::string, std::size_t> group_index;
    std::vector<std::size_t> group_of(names.size());
    std::vector<std::size_t> members;
    for (std::size_t f = 0; f < names.size(); ++f) {
        const auto key = measurement_group(names[f]);
        auto [it, inserted] = group_index.try_emplace(key, groups.size());
        if (inserted) {
            groups.push_back(key);
            members.push_back(0);
        }
        group_of[f] = it->second;
        ++members[it->second];
    }

    std::vector<ImportanceRow> rows(groups.size());
    for (std::size_t k = 0; k < groups.size(); ++k) rows[k].measurement = groups[k];
    if (!per_fold.empty()) {
        for (const auto& fold : per_fold) {
            if (fold.size() != names.size()) throw InvalidArgument("importance vector length does not match names");
            std::vector<double> sums(groups.size(), 0.0);
            for (std::size_t f = 0; f < names.size(); ++f) sums[group_of[f]] += fold[f];
            for (std::size_t k = 0; k < groups.size(); ++k) rows[k].score += sums[k] / static_cast<double>(members[k]);
        }
        for (auto& r : rows) r.score /= static_cast<double>(per_fold.size());
    }
    std::stable_sort(rows.begin(), rows.end(), [](const ImportanceRow& a, const ImportanceRow& b) { return a.score > b.score; });
    return rows;
}

nlohmann::json to_json(const BoostedModel& model) {
    nlohmann::json trees = nlohmann::json::array();
    for (const Tree& t : model.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const Node& n : t.nodes) nodes.push_back(node_json(n));
        trees.push_back(std::move(nodes));
    }
    return {{"format", kFormatTag},
            {"version", kModelVersion},
            {"learning_rate", model.learning_rate},
            {"base_score", model.base_score},
            {"feature_names", model.feature_names},
            {"trees", std::move(trees)}};
}

BoostedModel model_from_json(const nlohmann::json& j) {
    try {
        if (!j.is_object() || j.value("format", std::string{}) != kFormatTag) {
            throw ParseError("not a boosted-model document");
        }
        const int version = j.at("version").get<int>();
        if (version != kModelVersion) {
            throw UnsupportedVersion(fmt::format("model version {} is not supported (expected {})", version, kModelVersion));
        }
        BoostedModel m;
        m.learning_rate = j.at("learning_rate").get<double>();
        m.base_score = j.at("base_score").get<double>();
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        if (!(m.learning_rate > 0.0) || !(m.base_score > 0.0 && m.base_score < 1.0)) {
            throw ParseError("model has invalid learning_rate or base_score");
        }
        const auto features = static_cast<int>(m.feature_names.size());
        for (const auto& jt : j.at("trees")) {
            Tree t;
            for (const auto& jn : jt) {
                Node n;
                if (jn.contains("leaf")) {
                    n.weight = jn.at("leaf").get<double>();
                } else {
                    n.feature = jn.at("feature").get<int>();
                    n.threshold = jn.at("threshold").get<double>();
                    n.default_left = jn.at("default_left").get<bool>();
                    n.left = jn.at("left").get<int>();
                    n.right = jn.at("right").get<int>();
                }
                t.nodes.push_back(n);
            }
            const auto count = static_cast<int>(t.nodes.size());
            if (count == 0) throw ParseError("model contains an empty tree");
            for (int id = 0; id < count; ++id) {
                const Node& n = t.nodes[static_cast<std::size_t>(id)];
                if (n.is_leaf()) continue;
                if (n.feature >= features) throw ParseError("tree node references an unknown feature");
                if (n.left <= id || n.right <= id || n.left >= count || n.right >= count) {
                    throw ParseError("tree node has invalid child indices");
                }
            }
            m.trees.push_back(std::move(t));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("malformed model: {}", e.what()));
    }
}

void save_model(const std::filesystem::path& path, const BoostedModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("{}: cannot open for writing", path.string()));
    out << to_json(model).dump() << '\n';
    if (!out) throw IoError(fmt::format("{}: write failed", path.string()));
}

BoostedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("{}: cannot open", path.string()));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("{}: malformed model: {}", path.string(), e.what()));
    }
    try {
        return model_from_json(j);
    } catch (const UnsupportedVersion& e) {
        throw UnsupportedVersion(fmt::format("{}: {}", path.string(), e.what()));
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

} // namespace rimlab::gbt
