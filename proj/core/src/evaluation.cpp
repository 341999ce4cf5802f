#include "rimlab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rimlab/error.hpp"

namespace rimlab::eval {
namespace {

void require_both_classes(std::span<const int> labels, const char* what) {
    std::size_t pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw InvalidArgument(fmt::format("{}: labels must be 0/1", what));
        pos += static_cast<std::size_t>(l);
    }
    if (pos == 0 || pos == labels.size()) {
        throw InvalidArgument(fmt::format("{}: both classes are required", what));
    }
}

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

// Threshold strictly above lo and no greater than hi.
double between(double lo, double hi) {
    const double mid = lo + 0.5 * (hi - lo);
    return mid > lo ? mid : hi;
}

nlohmann::json curve_json(const Curve& c) { return {{"x", c.x}, {"y", c.y}}; }

} // namespace

double dice(const Mask3D& a, const Mask3D& b) {
    require_same_geometry(a.geometry(), b.geometry(), "dice");
    std::size_t both = 0, total = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool ai = a[i] != 0, bi = b[i] != 0;
        both += static_cast<std::size_t>(ai && bi);
        total += static_cast<std::size_t>(ai) + static_cast<std::size_t>(bi);
    }
    return total == 0 ? 1.0 : 2.0 * static_cast<double>(both) / static_cast<double>(total);
}

CurveSummary roc_pr_curves(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw InvalidArgument("roc_pr_curves: scores and labels differ in length");
    require_both_classes(labels, "roc_pr_curves");
    for (double s : scores) {
        if (!std::isfinite(s)) throw InvalidArgument("roc_pr_curves: non-finite score");
    }
    std::size_t positives = 0;
    for (int l : labels) positives += static_cast<std::size_t>(l);
    const std::size_t negatives = labels.size() - positives;

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    CurveSummary out;
    out.roc.x.push_back(0.0);
    out.roc.y.push_back(0.0);
    std::size_t tp = 0, fp = 0;
    double prev_recall = 0.0;
    for (std::size_t k = 0; k < order.size();) {
        const double s = scores[order[k]];
        while (k < order.size() && scores[order[k]] == s) {
            if (labels[order[k]] == 1) {
                ++tp;
            } else {
                ++fp;
            }
            ++k;
        }
        out.roc.x.push_back(ratio(fp, negatives));
        out.roc.y.push_back(ratio(tp, positives));
        const double recall = ratio(tp, positives);
        const double precision = ratio(tp, tp + fp);
        out.pr.x.push_back(recall);
        out.pr.y.push_back(precision);
        out.pr_auc += (recall - prev_recall) * precision;
        prev_recall = recall;
    }

    double partial = 0.0;
    for (std::size_t i = 1; i < out.roc.x.size(); ++i) {
        const double x0 = out.roc.x[i - 1], x1 = out.roc.x[i];
        const double y0 = out.roc.y[i - 1], y1 = out.roc.y[i];
        out.roc_auc += (x1 - x0) * (y0 + y1) * 0.5;
        if (x0 < kPartialFprLimit && x1 > x0) {
            const double xe = std::min(x1, kPartialFprLimit);
            const double ye = y0 + (y1 - y0) * (xe - x0) / (x1 - x0);
            partial += (xe - x0) * (y0 + ye) * 0.5;
        }
    }
    out.proc_auc = partial / kPartialFprLimit;
    return out;
}

CurveSummary roc_pr_curves(std::span<const ScoredLesion> scored) {
    std::vector<double> s;
    std::vector<int> l;
    for (const auto& x : scored) {
        s.push_back(x.probability);
        l.push_back(x.label);
    }
    return roc_pr_curves(s, l);
}

double step_value(const Curve& curve, double x) {
    double value = 0.0;
    for (std::size_t i = 0; i < curve.x.size(); ++i) {
        if (curve.x[i] <= x) {
            value = curve.y[i];
        } else {
            break;
        }
    }
    return value;
}

Curve average_curves(std::span<const Curve> curves, std::size_t grid_points) {
    if (grid_points < 2) throw InvalidArgument("average_curves needs at least two grid points");
    Curve out;
    out.x.resize(grid_points);
    out.y.assign(grid_points, 0.0);
    for (std::size_t g = 0; g < grid_points; ++g) {
        out.x[g] = static_cast<double>(g) / static_cast<double>(grid_points - 1);
    }
    if (curves.empty()) return out;
    for (const Curve& c : curves) {
        for (std::size_t g = 0; g < grid_points; ++g) out.y[g] += step_value(c, out.x[g]);
    }
    for (double& y : out.y) y /= static_cast<double>(curves.size());
    return out;
}

ThresholdChoice f1_threshold(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw InvalidArgument("f1_threshold: scores and labels differ in length");
    require_both_classes(labels, "f1_threshold");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::size_t positives = 0;
    for (int l : labels) positives += static_cast<std::size_t>(l);
    std::size_t tp = positives, fp = labels.size() - positives, fn = 0;

    ThresholdChoice best{0.0, -1.0};
    double below = scores[order[0]];
    for (std::size_t k = 0; k < order.size();) {
        const double s = scores[order[k]];
        const double candidate = k == 0 ? (s > 0.0 ? 0.5 * s : s - 1.0) : between(below, s);
        const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
        if (f1 >= best.f1) best = {candidate, f1};
        while (k < order.size() && scores[order[k]] == s) {
            if (labels[order[k]] == 1) {
                --tp;
                ++fn;
            } else {
                --fp;
            }
            ++k;
        }
        below = s;
    }
    return best;
}

ConfusionMetrics confusion_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
    ConfusionMetrics m{tp, fp, tn, fn};
    m.accuracy = ratio(tp + tn, tp + fp + tn + fn);
    m.sensitivity = ratio(tp, tp + fn);
    m.specificity = ratio(tn, tn + fp);
    m.precision = ratio(tp, tp + fp);
    m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
    return m;
}

ConfusionMetrics confusion_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
    if (scores.size() != labels.size()) throw InvalidArgument("confusion_metrics: scores and labels differ in length");
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        if (labels[i] == 1) {
            predicted ? ++tp : ++fn;
        } else {
            predicted ? ++fp : ++tn;
        }
    }
    return confusion_from_counts(tp, fp, tn, fn);
}

ConfusionMetrics confusion_metrics(std::span<const ScoredLesion> scored, std::span<const double> fold_thresholds) {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (const auto& s : scored) {
        if (s.fold < 0 || static_cast<std::size_t>(s.fold) >= fold_thresholds.size()) {
            throw InvalidArgument(fmt::format("lesion {} has no threshold for fold {}", s.id, s.fold));
        }
        const bool predicted = s.probability >= fold_thresholds[static_cast<std::size_t>(s.fold)];
        if (s.label == 1) {
            predicted ? ++tp : ++fn;
        } else {
            predicted ? ++fp : ++tn;
        }
    }
    return confusion_from_counts(tp, fp, tn, fn);
}

int subject_group(int rim_plus_count) {
    if (rim_plus_count <= 0) return 0;
    if (rim_plus_count <= 3) return 1;
    if (rim_plus_count <= 6) return 2;
    return 3;
}

std::vector<int> stratified_folds(std::span<const Subject> subjects, int k, std::uint64_t seed) {
    if (k < 1) throw InvalidArgument("fold count must be >= 1");
    if (static_cast<std::size_t>(k) > subjects.size()) {
        throw InvalidArgument(fmt::format("cannot split {} subjects into {} folds", subjects.size(), k));
    }
    std::array<std::vector<std::size_t>, 4> groups;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        groups[static_cast<std::size_t>(subject_group(subjects[i].rim_plus_count))].push_back(i);
    }
    std::mt19937_64 rng(seed);
    std::vector<int> fold(subjects.size(), 0);
    std::size_t position = 0;
    for (auto& g : groups) {
        std::shuffle(g.begin(), g.end(), rng);
        for (std::size_t idx : g) {
            fold[idx] = static_cast<int>(position % static_cast<std::size_t>(k));
            ++position;
        }
    }
    return fold;
}

std::vector<int> pseudo_subjects(std::size_t n_lesions, std::size_t lesions_per_subject) {
    if (lesions_per_subject == 0) throw InvalidArgument("lesions_per_subject must be >= 1");
    const std::size_t n_subjects = std::max<std::size_t>(1, (n_lesions + lesions_per_subject - 1) / lesions_per_subject);
    std::vector<int> out(n_lesions);
    for (std::size_t i = 0; i < n_lesions; ++i) out[i] = static_cast<int>(i % n_subjects);
    return out;
}

Agreement subject_agreement(std::span<const double> predicted, std::span<const double> truth) {
    if (predicted.size() != truth.size()) throw InvalidArgument("subject_agreement: vectors differ in length");
    Agreement a;
    a.n = predicted.size();
    if (a.n == 0) return a;
    const double n = static_cast<double>(a.n);
    double mp = 0.0, mt = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < a.n; ++i) {
        mp += predicted[i];
        mt += truth[i];
        sq += (predicted[i] - truth[i]) * (predicted[i] - truth[i]);
    }
    a.mse = sq / n;
    mp /= n;
    mt /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < a.n; ++i) {
        sxy += (predicted[i] - mp) * (truth[i] - mt);
        sxx += (predicted[i] - mp) * (predicted[i] - mp);
        syy += (truth[i] - mt) * (truth[i] - mt);
    }
    if (a.n < 3 || sxx <= 0.0 || syy <= 0.0) return a;
    const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    a.pearson = r;
    if (a.n > 3) {
        const double z = std::atanh(r);
        const double half = 1.959963984540054 / std::sqrt(n - 3.0);
        a.ci_low = std::tanh(z - half);
        a.ci_high = std::tanh(z + half);
    } else {
        a.ci_low = -1.0;
        a.ci_high = 1.0;
    }
    return a;
}

CvReport crossvalidate(const feat::FeatureTable& table, std::span<const int> subjects, std::span<const int> folds,
                       const gbt::BoostParams& params) {
    const std::size_t n = table.size();
    if (subjects.size() != n || folds.size() != n) {
        throw InvalidArgument("crossvalidate: subject and fold vectors must match the table rows");
    }
    if (n == 0) throw InvalidArgument("crossvalidate: empty feature table");
    const int k = *std::max_element(folds.begin(), folds.end()) + 1;

    CvReport report;
    report.feature_names = table.names;
    report.scored.resize(n);
    std::vector<double> thresholds(static_cast<std::size_t>(k), 0.5);
    std::vector<Curve> rocs, prs;
    std::vector<std::vector<double>> importances;
    std::size_t curve_folds = 0;

    for (int f = 0; f < k; ++f) {
        std::vector<std::vector<double>> train_rows;
        std::vector<int> train_labels;
        std::vector<std::size_t> test;
        for (std::size_t i = 0; i < n; ++i) {
            if (folds[i] < 0) throw InvalidArgument(fmt::format("row {} has a negative fold index", i));
            if (folds[i] == f) {
                test.push_back(i);
            } else {
                train_rows.push_back(table.rows[i]);
                train_labels.push_back(table.labels[i]);
            }
        }
        gbt::BoostedModel model;
        try {
            model = gbt::train(train_rows, train_labels, params, table.names);
        } catch (const Error& e) {
            throw InvalidArgument(fmt::format("fold {}: {}", f, e.what()));
        }

        FoldRecord record;
        record.fold = f;
        record.n_train = train_rows.size();
        record.n_test = test.size();
        std::vector<double> scores;
        std::vector<int> labels;
        for (std::size_t i : test) {
            const double p = model.predict_proba(table.rows[i]);
            report.scored[i] = {table.ids[i], subjects[i], table.labels[i], p, f};
            scores.push_back(p);
            labels.push_back(table.labels[i]);
        }
        const bool both = std::find(labels.begin(), labels.end(), 0) != labels.end() &&
                          std::find(labels.begin(), labels.end(), 1) != labels.end();
        if (both) {
            record.threshold = f1_threshold(scores, labels).threshold;
            record.curves = roc_pr_curves(scores, labels);
            rocs.push_back(record.curves->roc);
            prs.push_back(record.curves->pr);
            report.roc_auc += record.curves->roc_auc;
            report.proc_auc += record.curves->proc_auc;
            report.pr_auc += record.curves->pr_auc;
            ++curve_folds;
        }
        thresholds[static_cast<std::size_t>(f)] = record.threshold;
        record.metrics = confusion_metrics(scores, labels, record.threshold);
        record.importance = gbt::feature_importance(model);
        importances.push_back(record.importance);
        report.folds.push_back(std::move(record));
    }

    report.pooled = confusion_metrics(report.scored, thresholds);
    if (curve_folds > 0) {
        report.roc_auc /= static_cast<double>(curve_folds);
        report.proc_auc /= static_cast<double>(curve_folds);
        report.pr_auc /= static_cast<double>(curve_folds);
    }
    report.mean_roc = average_curves(rocs);
    report.mean_pr = average_curves(prs);

    const int n_subjects = *std::max_element(subjects.begin(), subjects.end()) + 1;
    std::vector<double> predicted(static_cast<std::size_t>(n_subjects), 0.0), truth(static_cast<std::size_t>(n_subjects), 0.0);
    std::vector<char> present(static_cast<std::size_t>(n_subjects), 0);
    for (const auto& s : report.scored) {
        const auto su = static_cast<std::size_t>(s.subject);
        present[su] = 1;
        truth[su] += s.label;
        predicted[su] += s.probability >= thresholds[static_cast<std::size_t>(s.fold)] ? 1.0 : 0.0;
    }
    std::vector<double> p_present, t_present;
    for (std::size_t s = 0; s < present.size(); ++s) {
        if (!present[s]) continue;
        p_present.push_back(predicted[s]);
        t_present.push_back(truth[s]);
    }
    report.agreement = subject_agreement(p_present, t_present);
    report.importance = gbt::aggregate_importance(importances, table.names);
    return report;
}

CvReport crossvalidate(const feat::FeatureTable& table, const gbt::BoostParams& params, int k, std::uint64_t seed,
                       std::size_t lesions_per_subject) {
    const auto subject_of = pseudo_subjects(table.size(), lesions_per_subject);
    const int n_subjects = table.size() == 0 ? 0 : *std::max_element(subject_of.begin(), subject_of.end()) + 1;
    std::vector<Subject> subjects(static_cast<std::size_t>(n_subjects));
    for (int s = 0; s < n_subjects; ++s) subjects[static_cast<std::size_t>(s)].id = s;
    for (std::size_t i = 0; i < table.size(); ++i) {
        subjects[static_cast<std::size_t>(subject_of[i])].rim_plus_count += table.labels[i];
    }
    const auto subject_fold = stratified_folds(subjects, k, seed);
    std::vector<int> fold(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) fold[i] = subject_fold[static_cast<std::size_t>(subject_of[i])];
    return crossvalidate(table, subject_of, fold, params);
}

HoldoutReport evaluate_holdout(const gbt::BoostedModel& model, const feat::FeatureTable& table, double threshold) {
    model.require_schema(table.names);
    HoldoutReport r;
    r.threshold = threshold;
    std::vector<double> scores;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const double p = model.predict_proba(table.rows[i]);
        scores.push_back(p);
        r.scored.push_back({table.ids[i], 0, table.labels[i], p, 0});
    }
    r.metrics = confusion_metrics(scores, table.labels, threshold);
    const bool both = std::find(table.labels.begin(), table.labels.end(), 0) != table.labels.end() &&
                      std::find(table.labels.begin(), table.labels.end(), 1) != table.labels.end();
    if (both) r.curves = roc_pr_curves(scores, table.labels);
    return r;
}

nlohmann::json to_json(const ConfusionMetrics& m) {
    return {{"tp", m.tp},
            {"fp", m.fp},
            {"tn", m.tn},
            {"fn", m.fn},
            {"accuracy", m.accuracy},
            {"f1", m.f1},
            {"sensitivity", m.sensitivity},
            {"specificity", m.specificity},
            {"precision", m.precision}};
}

nlohmann::json to_json(const CurveSummary& c) {
    return {{"roc_auc", c.roc_auc},
            {"proc_auc", c.proc_auc},
            {"pr_auc", c.pr_auc},
            {"roc", curve_json(c.roc)},
            {"pr", curve_json(c.pr)}};
}

nlohmann::json to_json(const Agreement& a) {
    nlohmann::json j{{"n", a.n}, {"mse", a.mse}};
    if (a.pearson) {
        j["pearson"] = *a.pearson;
        j["ci95"] = {a.ci_low, a.ci_high};
    } else {
        j["pearson"] = nullptr;
    }
    return j;
}

nlohmann::json to_json(const CvReport& r) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.folds) {
        nlohmann::json jf{{"fold", f.fold},
                          {"n_train", f.n_train},
                          {"n_test", f.n_test},
                          {"threshold", f.threshold},
                          {"metrics", to_json(f.metrics)},
                          {"importance", f.importance}};
        jf["curves"] = f.curves ? to_json(*f.curves) : nlohmann::json(nullptr);
        folds.push_back(std::move(jf));
    }
    nlohmann::json importance = nlohmann::json::array();
    for (const auto& row : r.importance) importance.push_back({{"measurement", row.measurement}, {"score", row.score}});
    nlohmann::json scored = nlohmann::json::array();
    for (const auto& s : r.scored) {
        scored.push_back({{"id", s.id}, {"subject", s.subject}, {"label", s.label}, {"probability", s.probability}, {"fold", s.fold}});
    }
    return {{"folds", std::move(folds)},
            {"pooled",
             {{"metrics", to_json(r.pooled)},
              {"roc_auc", r.roc_auc},
              {"proc_auc", r.proc_auc},
              {"pr_auc", r.pr_auc},
              {"mean_roc", curve_json(r.mean_roc)},
              {"mean_pr", curve_json(r.mean_pr)},
              {"agreement", to_json(r.agreement)}}},
            {"importance", std::move(importance)},
            {"feature_names", r.feature_names},
            {"scored", std::move(scored)}};
}

nlohmann::json to_json(const HoldoutReport& r) {
    nlohmann::json scored = nlohmann::json::array();
    for (const auto& s : r.scored) scored.push_back({{"id", s.id}, {"label", s.label}, {"probability", s.probability}});
    nlohmann::json j{{"threshold", r.threshold}, {"metrics", to_json(r.metrics)}, {"scored", std::move(scored)}};
    j["curves"] = r.curves ? to_json(*r.curves) : nlohmann::json(nullptr);
    return j;
}

void write_curve_csv(const std::filesystem::path& path, const Curve& curve, const char* x_name, const char* y_name) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("{}: cannot open for writing", path.string()));
    out << x_name << ',' << y_name << '\n';
    for (std::size_t i = 0; i < curve.x.size(); ++i) out << fmt::format("{},{}\n", curve.x[i], curve.y[i]);
    if (!out) throw IoError(fmt::format("{}: write failed", path.string()));
}

void write_importance_csv(const std::filesystem::path& path, std::span<const gbt::ImportanceRow> rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("{}: cannot open for writing", path.string()));
    out << "measurement,f_score\n";
    for (const auto& r : rows) out << fmt::format("{},{}\n", r.measurement, r.score);
    if (!out) throw IoError(fmt::format("{}: write failed", path.string()));
}

} // namespace rimlab::eval
