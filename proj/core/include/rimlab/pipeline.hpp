#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rimlab/classifier.hpp"
#include "rimlab/features.hpp"
#include "rimlab/rimseg.hpp"
#include "rimlab/simulator.hpp"

namespace rimlab::pipeline {

struct EvaluationConfig {
    double split_ratio = 0.75;
    std::uint64_t split_seed = 20230915;
    int folds = 5;
    std::uint64_t cv_seed = 20230915;
    std::size_t lesions_per_subject = 8;
    double threshold = 0.5; ///< decision threshold for hold-out evaluation
};

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    int threads = 4;
};

struct PipelineConfig {
    std::filesystem::path dataset_dir = "data";
    std::filesystem::path output_dir = "out";
    std::filesystem::path model_path = "model.json";
    sim::DatasetConfig simulator;
    seg::LevelSetParams levelset;
    gbt::BoostParams boost;
    EvaluationConfig evaluation;
    ServiceConfig service;
    int jobs = 1;

    /// Checks every section against its owning module's invariants.
    void validate() const;
};

/// Reads a JSON config. Missing keys keep their defaults; unknown keys are rejected.
[[nodiscard]] PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
nlohmann::json to_json(const PipelineConfig& config);
[[nodiscard]] PipelineConfig load_config(const std::filesystem::path& path);

/// Applies a partial JSON object of level-set fields on top of `base`; unknown keys are rejected.
[[nodiscard]] seg::LevelSetParams levelset_from_json(const nlohmann::json& j, seg::LevelSetParams base = {});
nlohmann::json to_json(const seg::LevelSetParams& params);

/// Config path from RIMLAB_CONFIG, if set and non-empty.
[[nodiscard]] std::optional<std::filesystem::path> config_path_from_env();

struct LesionData {
    sim::ManifestEntry entry;
    Volume3D volume;
    Mask3D mask;
    std::optional<Mask3D> rim;
};

/// Loads the RVOL files of one manifest entry.
[[nodiscard]] LesionData load_lesion(const sim::DatasetManifest& manifest, const sim::ManifestEntry& entry);

struct SegmentOutcome {
    seg::RimSegResult result;
    std::optional<double> dice;
    double solver_ms = 0.0;
};

/// Runs rim segmentation on one lesion; the single code path behind both the CLI and the service.
[[nodiscard]] SegmentOutcome segment_lesion(const Volume3D& volume, const Mask3D& mask,
                                            const seg::LevelSetParams& params, const Mask3D* ground_truth = nullptr);

/// Convergence record without timing, so reruns write identical bytes.
nlohmann::json convergence_json(const SegmentOutcome& outcome);

struct SegmentRow {
    std::string id;
    sim::Label label = sim::Label::RimNegative;
    std::optional<double> dice;
    int iterations = 0;
    bool converged = false;
    bool degenerate = false;
};

/// Segments every manifest entry at params.w, writing <id>_high.rvol, <id>_low.rvol, <id>_convergence.json
/// and segment.csv under `out_dir`.
std::vector<SegmentRow> segment_dataset(const sim::DatasetManifest& manifest, const seg::LevelSetParams& params,
                                        const std::filesystem::path& out_dir, int jobs = 1);

void write_segment_csv(const std::filesystem::path& path, const std::vector<SegmentRow>& rows);

/// Mean Dice over rows that have ground truth; nullopt when none do.
[[nodiscard]] std::optional<double> mean_dice(const std::vector<SegmentRow>& rows);

/// Output directory for one weight when several are run in one invocation.
[[nodiscard]] std::filesystem::path weight_dir(const std::filesystem::path& out_dir, double w);

struct FeatureRun {
    feat::FeatureTable table;
    std::vector<std::string> missing; ///< ids without segmentation outputs
};

/// Builds the feature table from dataset files and segmentation outputs under `seg_dir`.
[[nodiscard]] FeatureRun extract_features(const sim::DatasetManifest& manifest, const std::filesystem::path& seg_dir,
                                          int jobs = 1);

/// Rows of `table` selected by index.
[[nodiscard]] feat::FeatureTable subset(const feat::FeatureTable& table, const std::vector<std::size_t>& rows);

/// Label-stratified split of a feature table; returns (train, test).
[[nodiscard]] std::pair<feat::FeatureTable, feat::FeatureTable> split_table(const feat::FeatureTable& table,
                                                                            double ratio, std::uint64_t seed);

/// Runs `work(i)` for i in [0, count) on up to `jobs` threads. The first exception is rethrown.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& work);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

} // namespace rimlab::pipeline
