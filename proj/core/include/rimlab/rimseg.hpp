#pragma once

#include <optional>
#include <vector>

#include "rimlab/simulator.hpp"
#include "rimlab/volume.hpp"

namespace rimlab::seg {

/// Tuning knobs of the two-region level-set model. Intensities are normalised to [0, 1] over the
/// lesion before evolution, so mu and v act on O(1) quantities.
struct LevelSetParams {
    double mu = 1.0;       ///< contour-length weight
    double v = 0.01;       ///< area weight
    double epsilon = 0.1;  ///< Heaviside smoothing width
    double w = 1.0;        ///< distance weight
    double dt = 0.5;
    /// Gradient-norm regulariser (per mm) in the curvature term: div(grad phi / sqrt(eta^2 + |grad phi|^2)).
    double eta = 1.0;
    int max_iters = 200;
    double tol = 1e-4;     ///< stop once mean |delta phi| over the lesion drops below this
    int fidelity_exponent = 2;
    bool record_energy = false;

    /// Throws InvalidArgument on out-of-range values.
    void validate() const;
};

/// Smoothed Heaviside H(z) = 1/2 (1 + 2/pi atan(z / eps)) and its derivative.
[[nodiscard]] double heaviside(double z, double epsilon);
[[nodiscard]] double dirac(double z, double epsilon);

/// Affine map applied to intensities: normalised = (raw - offset) / scale.
struct Normalisation {
    double offset = 0.0;
    double scale = 1.0;
    [[nodiscard]] double to_raw(double normalised) const { return offset + scale * normalised; }
};

struct RimSegResult {
    Grid<double> phi;   ///< level-set function; meaningful inside the lesion only
    Mask3D high_mask;
    Mask3D low_mask;
    double c1 = 0.0;    ///< high-region constant, normalised units
    double c2 = 0.0;    ///< low-region constant, normalised units
    double c1_ppb = 0.0;
    double c2_ppb = 0.0;
    int iterations = 0;
    bool converged = false;
    bool degenerate = false;
    double final_energy = 0.0;
    std::vector<double> energy_trace; ///< one value per iteration when record_energy is set
};

/// Scales each in-mask intensity by exp(-w D(p) / D_max). Out-of-mask voxels are set to 0.
/// Throws DegenerateLesion if D_max is zero.
[[nodiscard]] Grid<double> weighted_intensity(const Grid<double>& intensity, const Mask3D& lesion_mask,
                                              const DistanceMap& distance, double w);

/// Min-max normalisation to [0, 1] over the mask. A constant field maps to 0.
[[nodiscard]] Grid<double> normalise(const Grid<double>& intensity, const Mask3D& mask, Normalisation& record);

/// Two-region evolution of `field` (already in [0, 1] over the mask), starting from phi0.
/// `to_ppb` converts the region constants back to raw units for reporting.
[[nodiscard]] RimSegResult evolve_levelset(const Grid<double>& field, const Mask3D& lesion_mask,
                                           const Grid<double>& phi0, const LevelSetParams& params,
                                           const Normalisation& to_ppb = {});

/// phi0 = field - median(field over mask).
[[nodiscard]] Grid<double> initial_phi(const Grid<double>& field, const Mask3D& mask);

/// The model's objective for a given level set and region constants (normalised units).
[[nodiscard]] double energy(const Grid<double>& field, const Mask3D& mask, const Grid<double>& phi, double c1,
                            double c2, const LevelSetParams& params);

/// Plain two-phase segmentation without distance weighting.
[[nodiscard]] RimSegResult chan_vese(const Volume3D& volume, const Mask3D& lesion_mask, LevelSetParams params);

/// Full rim segmentation: normalise, weight by distance to the lesion edge, renormalise, evolve.
/// Lesions smaller than kMinLesionVoxels come back flagged degenerate with an empty high mask.
[[nodiscard]] RimSegResult rimseg(const Volume3D& volume, const Mask3D& lesion_mask, const LevelSetParams& params);
[[nodiscard]] RimSegResult rimseg(const sim::LesionPatch& patch, const LevelSetParams& params);

inline constexpr std::size_t kMinLesionVoxels = 5;

} // namespace rimlab::seg
