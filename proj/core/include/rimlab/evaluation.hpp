#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rimlab/classifier.hpp"
#include "rimlab/features.hpp"
#include "rimlab/volume.hpp"

namespace rimlab::eval {

/// 2|a & b| / (|a| + |b|); two empty masks score 1.
[[nodiscard]] double dice(const Mask3D& a, const Mask3D& b);

struct ScoredLesion {
    std::string id;
    int subject = 0;
    int label = 0;
    double probability = 0.0;
    int fold = 0;
};

struct Curve {
    std::vector<double> x;
    std::vector<double> y;
};

struct CurveSummary {
    Curve roc; ///< x = FPR, y = TPR, starting at (0, 0)
    Curve pr;  ///< x = recall, y = precision, one point per distinct score
    double roc_auc = 0.0;
    double proc_auc = 0.0; ///< area over FPR in [0, 0.1], divided by 0.1
    double pr_auc = 0.0;
};

inline constexpr double kPartialFprLimit = 0.1;
inline constexpr std::size_t kCurveGridPoints = 1001;

/// Throws InvalidArgument unless both classes are present.
[[nodiscard]] CurveSummary roc_pr_curves(std::span<const double> scores, std::span<const int> labels);
[[nodiscard]] CurveSummary roc_pr_curves(std::span<const ScoredLesion> scored);

/// Evaluates each curve on a uniform grid over [0, 1] with right-continuous step interpolation and averages.
[[nodiscard]] Curve average_curves(std::span<const Curve> curves, std::size_t grid_points = kCurveGridPoints);

/// Value of a step curve at x: y of the last point whose abscissa is <= x (0 before the first point).
[[nodiscard]] double step_value(const Curve& curve, double x);

struct ThresholdChoice {
    double threshold = 0.5;
    double f1 = 0.0;
};

/// Threshold maximising F1 of "score >= threshold -> positive"; candidates are midpoints between adjacent
/// distinct scores plus one below the minimum. Ties go to the higher threshold.
[[nodiscard]] ThresholdChoice f1_threshold(std::span<const double> scores, std::span<const int> labels);

struct ConfusionMetrics {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0.0;
    double f1 = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double precision = 0.0; ///< 0 when nothing is predicted positive
};

[[nodiscard]] ConfusionMetrics confusion_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);
[[nodiscard]] ConfusionMetrics confusion_metrics(std::span<const double> scores, std::span<const int> labels,
                                                 double threshold);
/// Applies thresholds[fold] to each lesion and pools the decisions.
[[nodiscard]] ConfusionMetrics confusion_metrics(std::span<const ScoredLesion> scored,
                                                 std::span<const double> fold_thresholds);

struct Subject {
    int id = 0;
    int rim_plus_count = 0;
};

/// Rim+ count bucket: 0, 1-3, 4-6, >6.
[[nodiscard]] int subject_group(int rim_plus_count);

/// Fold index per subject (same order as the input). Each group is shuffled with `seed`, then dealt round-robin,
/// the dealing position carrying over from one group to the next.
[[nodiscard]] std::vector<int> stratified_folds(std::span<const Subject> subjects, int k, std::uint64_t seed);

/// Pseudo-subject id per lesion for data without subjects: lesion i goes to subject i mod n_subjects.
[[nodiscard]] std::vector<int> pseudo_subjects(std::size_t n_lesions, std::size_t lesions_per_subject);

struct Agreement {
    std::size_t n = 0;
    std::optional<double> pearson; ///< empty when either vector has zero variance or n < 3
    double ci_low = 0.0;
    double ci_high = 0.0;
    double mse = 0.0;
};

[[nodiscard]] Agreement subject_agreement(std::span<const double> predicted, std::span<const double> truth);

struct FoldRecord {
    int fold = 0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    double threshold = 0.5;
    std::optional<CurveSummary> curves; ///< absent when the held-out fold has one class only
    ConfusionMetrics metrics;
    std::vector<double> importance;
};

struct CvReport {
    std::vector<FoldRecord> folds;
    std::vector<ScoredLesion> scored;
    ConfusionMetrics pooled;
    Curve mean_roc;
    Curve mean_pr;
    double roc_auc = 0.0;  ///< mean over folds with both classes
    double proc_auc = 0.0;
    double pr_auc = 0.0;
    Agreement agreement;
    std::vector<gbt::ImportanceRow> importance;
    std::vector<std::string> feature_names;
};

/// Trains on all but one fold, scores the held-out fold, repeated for every fold.
/// `subjects` and `folds` give one entry per table row.
[[nodiscard]] CvReport crossvalidate(const feat::FeatureTable& table, std::span<const int> subjects,
                                     std::span<const int> folds, const gbt::BoostParams& params);

/// Convenience: pseudo-subjects, stratified folds from their rim+ counts, then crossvalidate.
[[nodiscard]] CvReport crossvalidate(const feat::FeatureTable& table, const gbt::BoostParams& params, int k,
                                     std::uint64_t seed, std::size_t lesions_per_subject);

struct HoldoutReport {
    std::vector<ScoredLesion> scored;
    double threshold = 0.5;
    ConfusionMetrics metrics;
    std::optional<CurveSummary> curves;
};

[[nodiscard]] HoldoutReport evaluate_holdout(const gbt::BoostedModel& model, const feat::FeatureTable& table,
                                             double threshold = 0.5);

nlohmann::json to_json(const ConfusionMetrics& m);
nlohmann::json to_json(const CurveSummary& c);
nlohmann::json to_json(const Agreement& a);
nlohmann::json to_json(const CvReport& r);
nlohmann::json to_json(const HoldoutReport& r);

/// Writes two-column CSV (x, y) with a header.
void write_curve_csv(const std::filesystem::path& path, const Curve& curve, const char* x_name, const char* y_name);
void write_importance_csv(const std::filesystem::path& path, std::span<const gbt::ImportanceRow> rows);

} // namespace rimlab::eval
