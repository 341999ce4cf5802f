#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rimlab/volume.hpp"

namespace rimlab::sim {

enum class LesionKind { Shell, Sphere };
enum class Label { RimNegative = 0, RimPositive = 1 };
enum class Mode { Paper, Free };

using Vec3 = std::array<double, 3>;

struct Vein {
    Vec3 direction{0.0, 0.0, 1.0}; ///< normalised on use
    double radius_mm = 1.0;
    double value_ppb = 35.0;
};

struct LesionSpec {
    LesionKind kind = LesionKind::Sphere;
    double radius_mm = 10.0;
    double thickness_mm = 2.0;
    double rim_value = 30.0;
    double core_value = -15.0;
    /// Solid-angle fraction covered by the rim (shells only). 1 means a full shell.
    double partial_fraction = 1.0;
    /// Cap axis for partial rims; part of the geometry, so it is fixed by the spec rather than the seed.
    Vec3 rim_axis{0.0, 0.0, 1.0};
    Vec3 oval_axes{1.0, 1.0, 1.0};
    std::optional<Vein> vein;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    /// Throws InvalidArgument if the spec is outside the paper-replication ranges (Paper) or basic
    /// sanity bounds (Free).
    void validate(Mode mode) const;
};

struct BackgroundParams {
    double amplitude = 10.0;     ///< peak |value| in ppb
    double feature_mm = 14.0;    ///< spatial scale of the base octave
    int octaves = 2;
};

struct PatchGeometry {
    Geometry geometry{{36, 36, 12}, {1.0, 1.0, 3.0}};
};

struct LesionPatch {
    Volume3D volume;
    Mask3D lesion_mask;
    std::optional<Mask3D> gt_rim_mask;
    Label label = Label::RimNegative;
    LesionSpec spec;
};

/// Smooth simplex-style gradient noise scaled to [-amplitude, amplitude]; deterministic per seed.
[[nodiscard]] Volume3D generate_background(const Geometry& geometry, std::uint64_t seed,
                                           const BackgroundParams& params = {});

/// Synthesises one lesion patch. Geometry depends only on the spec; the seed drives background and noise.
[[nodiscard]] LesionPatch generate_lesion(const LesionSpec& spec, const Geometry& geometry = PatchGeometry{}.geometry,
                                          Mode mode = Mode::Paper, const BackgroundParams& background = {});

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct DatasetConfig {
    int count_rim_plus = 840;
    int count_rim_minus = 168;
    std::uint64_t seed = 20230915;
    Mode mode = Mode::Paper;
    Geometry geometry = PatchGeometry{}.geometry;

    Range radius{7.0, 15.0};
    Range thickness{1.0, 3.0};
    Range rim_value{15.0, 45.0};
    Range core_value{-30.0, 0.0};
    /// Integer noise levels are drawn uniformly from [lo, hi].
    Range noise_sigma{1.0, 7.0};

    double p_partial = 0.25;
    double p_oval = 0.25;
    double p_vein = 0.25;
    Range partial_fraction{0.25, 0.75};
    Range oval_scale{0.6, 1.0};
    Range vein_radius{0.5, 1.5};
    Range vein_value{25.0, 45.0};

    BackgroundParams background;
};

struct ManifestEntry {
    std::string id;
    Label label = Label::RimNegative;
    LesionSpec spec;
    std::uint64_t seed = 0;
    std::string volume_file;
    std::string mask_file;
    std::optional<std::string> rim_file;
};

struct DatasetManifest {
    std::uint64_t global_seed = 0;
    Mode mode = Mode::Paper;
    Geometry geometry;
    BackgroundParams background;
    std::vector<ManifestEntry> entries;
    /// Directory that entry file names are relative to; not serialised.
    std::filesystem::path base_dir;
};

/// Draws every lesion spec without touching the disk.
[[nodiscard]] DatasetManifest plan_dataset(const DatasetConfig& config);

/// Plans the dataset and writes manifest.json plus RVOL files under `out_dir`.
DatasetManifest generate_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);

/// Regenerates the patch for one manifest entry (no disk access).
[[nodiscard]] LesionPatch realise(const DatasetManifest& manifest, const ManifestEntry& entry);

/// Label-stratified random split; `ratio` is the training share in (0, 1).
[[nodiscard]] std::pair<DatasetManifest, DatasetManifest> split_dataset(const DatasetManifest& manifest, double ratio,
                                                                        std::uint64_t seed);

/// Generic label-stratified split over indices. Returns (train indices, test indices), both sorted.
[[nodiscard]] std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
stratified_split(const std::vector<int>& labels, double ratio, std::uint64_t seed);

/// Voxel count of the rim divided by the voxel count of the lesion.
[[nodiscard]] double rim_volume_fraction(const LesionPatch& patch);

/// Per-lesion stream seed derived from the dataset seed and lesion ordinal.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index);

nlohmann::json to_json(const LesionSpec& spec);
LesionSpec spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
[[nodiscard]] DatasetManifest load_manifest(const std::filesystem::path& path);

[[nodiscard]] const char* to_string(Label label);
[[nodiscard]] const char* to_string(LesionKind kind);

} // namespace rimlab::sim
