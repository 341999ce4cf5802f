#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rimlab/morphology.hpp"
#include "rimlab/rimseg.hpp"
#include "rimlab/simulator.hpp"
#include "rimlab/volume.hpp"

namespace rimlab::feat {

inline constexpr std::size_t kFirstOrderCount = 19;
inline constexpr std::size_t kLbpBins = 18;
inline constexpr std::size_t kFeatureCount = 84;
inline constexpr int kHistogramBins = 32;

/// Intensity statistics over one mask. Empty input gives all zeros.
struct FirstOrderSet {
    double volume = 0.0;
    double mean = 0.0;
    double harmonic_mean = 0.0;
    double median = 0.0;
    double mad = 0.0;
    double rms = 0.0;
    double rmsd = 0.0;
    double minimum = 0.0;
    double maximum = 0.0;
    double p10 = 0.0;
    double p90 = 0.0;
    double iqr = 0.0;
    double range = 0.0;
    double std = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0;
    double energy = 0.0;
    double entropy = 0.0;
    double uniformity = 0.0;

    [[nodiscard]] std::array<double, kFirstOrderCount> as_array() const;
};

/// Names of the 19 first-order measurements, in as_array() order.
[[nodiscard]] const std::array<const char*, kFirstOrderCount>& first_order_names();

[[nodiscard]] FirstOrderSet first_order(std::span<const double> values, double voxel_volume,
                                        int bins = kHistogramBins);

/// Linear-interpolation percentile of sorted data, q in [0, 1].
[[nodiscard]] double percentile_sorted(std::span<const double> sorted, double q);

struct DistanceStats {
    double mean_distance = 0.0;
    double std_distance = 0.0;
};

[[nodiscard]] DistanceStats distance_stats(const Mask3D& mask, const DistanceMap& lesion_distance);

/// Uniform rotation-invariant LBP (P = 16, R = 5) per axial slice, pooled over the mask and normalised.
[[nodiscard]] std::array<double, kLbpBins> lbp_histogram(const Volume3D& volume, const Mask3D& lesion_mask);

/// riu2 code of a 16-bit circular pattern: number of set bits when it has at most two 0/1 transitions, else 17.
[[nodiscard]] int riu2_code(unsigned pattern);

struct RimSetVector {
    std::string id;
    sim::Label label = sim::Label::RimNegative;
    std::array<double, kFeatureCount> values{};
};

/// Canonical column names, e.g. "mean_full", "mean_distance_high", "lbp_07".
[[nodiscard]] const std::vector<std::string>& feature_names();

[[nodiscard]] RimSetVector extract_rimset(const Volume3D& volume, const Mask3D& lesion_mask, const Mask3D& high_mask,
                                          const Mask3D& low_mask);
[[nodiscard]] RimSetVector extract_rimset(const sim::LesionPatch& patch, const seg::RimSegResult& segmentation);

/// Rows of RimSet vectors as read from or written to CSV.
struct FeatureTable {
    std::vector<std::string> names;
    std::vector<std::string> ids;
    std::vector<int> labels;
    std::vector<std::vector<double>> rows;

    [[nodiscard]] std::size_t size() const { return rows.size(); }
    void add(const RimSetVector& v);
};

[[nodiscard]] FeatureTable make_table(std::span<const RimSetVector> vectors);

/// CSV with columns id, label, then one column per feature. Values use round-trip precision.
void write_csv(std::ostream& out, const FeatureTable& table);
void write_csv(const std::filesystem::path& path, const FeatureTable& table);
[[nodiscard]] FeatureTable read_csv(std::istream& in);
[[nodiscard]] FeatureTable read_csv(const std::filesystem::path& path);

} // namespace rimlab::feat
