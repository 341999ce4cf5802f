#include "rimlab/rimseg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "rimlab/error.hpp"
#include "rimlab/morphology.hpp"

namespace rimlab::seg {
namespace {

Grid<double> to_double(const Volume3D& volume) {
    std::vector<double> data(volume.values().begin(), volume.values().end());
    return Grid<double>(volume.geometry(), std::move(data));
}

double median_of(std::vector<double> values) {
    if (values.empty()) return 0.0;
    const auto mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

// Compact view of the lesion: voxel list plus 6-neighbour table (-1 where the neighbour is outside).
struct LesionGraph {
    std::vector<std::size_t> voxels;
    std::vector<std::array<int, 6>> nb; // -x, +x, -y, +y, -z, +z
    std::array<double, 3> h{};

    LesionGraph(const Mask3D& mask) {
        const Dims& d = mask.dims();
        h = {mask.spacing().sx, mask.spacing().sy, mask.spacing().sz};
        Grid<int> compact(mask.geometry(), -1);
        for (int z = 0; z < d.nz; ++z) {
            for (int y = 0; y < d.ny; ++y) {
                for (int x = 0; x < d.nx; ++x) {
                    if (mask(x, y, z) == 0) continue;
                    compact(x, y, z) = static_cast<int>(voxels.size());
                    voxels.push_back(d.index(x, y, z));
                }
            }
        }
        nb.resize(voxels.size());
        for (int z = 0; z < d.nz; ++z) {
            for (int y = 0; y < d.ny; ++y) {
                for (int x = 0; x < d.nx; ++x) {
                    const int i = compact(x, y, z);
                    if (i < 0) continue;
                    auto at = [&](int xx, int yy, int zz) { return d.contains(xx, yy, zz) ? compact(xx, yy, zz) : -1; };
                    nb[static_cast<std::size_t>(i)] = {at(x - 1, y, z), at(x + 1, y, z), at(x, y - 1, z),
                                                       at(x, y + 1, z), at(x, y, z - 1), at(x, y, z + 1)};
                }
            }
        }
    }

    [[nodiscard]] std::size_t size() const { return voxels.size(); }
};

struct Constants {
    double c1;
    double c2;
};

// Region constants over {phi >= 0} and {phi < 0}; an empty region keeps its previous value.
Constants region_constants(std::span<const double> f, std::span<const double> phi, int exponent, Constants previous) {
    Constants c = previous;
    if (exponent == 2) {
        double s1 = 0.0, s2 = 0.0;
        std::size_t n1 = 0, n2 = 0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (phi[i] >= 0.0) {
                s1 += f[i];
                ++n1;
            } else {
                s2 += f[i];
                ++n2;
            }
        }
        if (n1 > 0) c.c1 = s1 / static_cast<double>(n1);
        if (n2 > 0) c.c2 = s2 / static_cast<double>(n2);
        return c;
    }
    std::vector<double> hi, lo;
    for (std::size_t i = 0; i < f.size(); ++i) {
        (phi[i] >= 0.0 ? hi : lo).push_back(f[i]);
    }
    if (!hi.empty()) c.c1 = median_of(std::move(hi));
    if (!lo.empty()) c.c2 = median_of(std::move(lo));
    return c;
}

double fit(double value, double c, int exponent) {
    const double diff = std::abs(value - c);
    return exponent == 2 ? diff * diff : diff;
}

// Discrete objective with the contour length written as the total variation of H(phi), the
// smoothed-Heaviside form of the length of the zero level set.
double compact_energy(const LesionGraph& g, std::span<const double> f, std::span<const double> phi, Constants c,
                      const LevelSetParams& p) {
    const double voxel = g.h[0] * g.h[1] * g.h[2];
    double total = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double hz = heaviside(phi[i], p.epsilon);
        double grad2 = 0.0;
        for (int a = 0; a < 3; ++a) {
            const int fwd = g.nb[i][static_cast<std::size_t>(2 * a + 1)];
            if (fwd < 0) continue;
            const double diff =
                (heaviside(phi[static_cast<std::size_t>(fwd)], p.epsilon) - hz) / g.h[static_cast<std::size_t>(a)];
            grad2 += diff * diff;
        }
        total += p.mu * std::sqrt(grad2) + p.v * hz + fit(f[i], c.c1, p.fidelity_exponent) * hz +
                 fit(f[i], c.c2, p.fidelity_exponent) * (1.0 - hz);
    }
    return total * voxel;
}

RimSegResult empty_result(const Mask3D& lesion_mask, const Normalisation& to_ppb) {
    RimSegResult r;
    r.phi = Grid<double>(lesion_mask.geometry(), 0.0);
    r.high_mask = Mask3D(lesion_mask.geometry(), 0);
    r.low_mask = lesion_mask;
    r.converged = true;
    r.c1_ppb = to_ppb.to_raw(0.0);
    r.c2_ppb = to_ppb.to_raw(0.0);
    return r;
}

} // namespace

void LevelSetParams::validate() const {
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw InvalidArgument("mu must be >= 0");
    if (!std::isfinite(v)) throw InvalidArgument("v must be finite");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("epsilon must be > 0");
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("w must be >= 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be > 0");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidArgument("eta must be > 0");
    if (max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
    if (!(tol > 0.0)) throw InvalidArgument("tol must be > 0");
    if (fidelity_exponent != 1 && fidelity_exponent != 2) throw InvalidArgument("fidelity_exponent must be 1 or 2");
}

double heaviside(double z, double epsilon) { return 0.5 * (1.0 + (2.0 / std::numbers::pi) * std::atan(z / epsilon)); }

double dirac(double z, double epsilon) { return epsilon / (std::numbers::pi * (epsilon * epsilon + z * z)); }

Grid<double> weighted_intensity(const Grid<double>& intensity, const Mask3D& lesion_mask, const DistanceMap& distance,
                                double w) {
    require_same_geometry(intensity.geometry(), lesion_mask.geometry(), "weighted_intensity");
    require_same_geometry(distance.d.geometry(), lesion_mask.geometry(), "weighted_intensity");
    if (!(distance.d_max > 0.0)) {
        throw DegenerateLesion("lesion has no interior (D_max = 0)");
    }
    Grid<double> out(intensity.geometry(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (lesion_mask[i] == 0) continue;
        out[i] = intensity[i] * std::exp(-w * distance.d[i] / distance.d_max);
    }
    return out;
}

Grid<double> normalise(const Grid<double>& intensity, const Mask3D& mask, Normalisation& record) {
    require_same_geometry(intensity.geometry(), mask.geometry(), "normalise");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < intensity.size(); ++i) {
        if (mask[i] == 0) continue;
        lo = std::min(lo, intensity[i]);
        hi = std::max(hi, intensity[i]);
    }
    Grid<double> out(intensity.geometry(), 0.0);
    if (!(hi > lo)) {
        record = {std::isfinite(lo) ? lo : 0.0, 0.0};
        return out;
    }
    record = {lo, hi - lo};
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (mask[i] != 0) out[i] = (intensity[i] - lo) / (hi - lo);
    }
    return out;
}

Grid<double> initial_phi(const Grid<double>& field, const Mask3D& mask) {
    std::vector<double> values;
    for (std::size_t i = 0; i < field.size(); ++i) {
        if (mask[i] != 0) values.push_back(field[i]);
    }
    const double med = median_of(std::move(values));
    Grid<double> phi(field.geometry(), 0.0);
    for (std::size_t i = 0; i < field.size(); ++i) {
        if (mask[i] != 0) phi[i] = field[i] - med;
    }
    return phi;
}

double energy(const Grid<double>& field, const Mask3D& mask, const Grid<double>& phi, double c1, double c2,
              const LevelSetParams& params) {
    const LesionGraph g(mask);
    std::vector<double> f(g.size()), ph(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        f[i] = field[g.voxels[i]];
        ph[i] = phi[g.voxels[i]];
    }
    return compact_energy(g, f, ph, {c1, c2}, params);
}

RimSegResult evolve_levelset(const Grid<double>& field, const Mask3D& lesion_mask, const Grid<double>& phi0,
                             const LevelSetParams& params, const Normalisation& to_ppb) {
    params.validate();
    require_same_geometry(field.geometry(), lesion_mask.geometry(), "evolve_levelset");
    require_same_geometry(phi0.geometry(), lesion_mask.geometry(), "evolve_levelset");

    const LesionGraph g(lesion_mask);
    const std::size_t n = g.size();
    if (n == 0) return empty_result(lesion_mask, to_ppb);

    std::vector<double> f(n), phi(n);
    double f_lo = std::numeric_limits<double>::infinity(), f_hi = -f_lo;
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = field[g.voxels[i]];
        phi[i] = phi0[g.voxels[i]];
        f_lo = std::min(f_lo, f[i]);
        f_hi = std::max(f_hi, f[i]);
    }

    RimSegResult result;
    result.phi = Grid<double>(lesion_mask.geometry(), 0.0);

    // Nothing to separate: every voxel belongs to one region.
    const bool flat = !(f_hi > f_lo);
    Constants c = region_constants(f, phi, params.fidelity_exponent, {f_hi, f_lo});

    const int k = params.fidelity_exponent;
    const double eta2 = params.eta * params.eta;
    const auto& h = g.h;
    const std::array<double, 3> inv_h2{1.0 / (h[0] * h[0]), 1.0 / (h[1] * h[1]), 1.0 / (h[2] * h[2])};

    std::vector<std::array<double, 3>> central(n);
    std::vector<std::array<double, 3>> conduct(n); // forward-face conductance along x, y, z
    std::vector<double> force(n);

    int iter = 0;
    bool converged = flat;
    while (!converged && iter < params.max_iters) {
        ++iter;
        // Central differences with mirrored ghosts at the lesion boundary.
        for (std::size_t i = 0; i < n; ++i) {
            for (int a = 0; a < 3; ++a) {
                const int lo = g.nb[i][static_cast<std::size_t>(2 * a)];
                const int hi = g.nb[i][static_cast<std::size_t>(2 * a + 1)];
                const double plo = lo >= 0 ? phi[static_cast<std::size_t>(lo)] : phi[i];
                const double phi_hi = hi >= 0 ? phi[static_cast<std::size_t>(hi)] : phi[i];
                central[i][static_cast<std::size_t>(a)] = (phi_hi - plo) / (2.0 * h[static_cast<std::size_t>(a)]);
            }
        }
        // Lagged diffusivity 1/|grad phi| on each interior face.
        for (std::size_t i = 0; i < n; ++i) {
            for (int a = 0; a < 3; ++a) {
                const auto au = static_cast<std::size_t>(a);
                const int fwd = g.nb[i][2 * au + 1];
                if (fwd < 0) {
                    conduct[i][au] = 0.0;
                    continue;
                }
                const auto j = static_cast<std::size_t>(fwd);
                const double normal = (phi[j] - phi[i]) / h[au];
                double grad2 = eta2 + normal * normal;
                for (int b = 0; b < 3; ++b) {
                    if (b == a) continue;
                    const auto bu = static_cast<std::size_t>(b);
                    const double tangential = 0.5 * (central[i][bu] + central[j][bu]);
                    grad2 += tangential * tangential;
                }
                conduct[i][au] = inv_h2[au] / std::sqrt(grad2);
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            force[i] = fit(f[i], c.c1, k) - fit(f[i], c.c2, k);
        }

        // Gauss-Seidel sweep of the semi-implicit update.
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double diag = 0.0;
            double off = 0.0;
            for (int a = 0; a < 3; ++a) {
                const auto au = static_cast<std::size_t>(a);
                const int lo = g.nb[i][2 * au];
                const int hi = g.nb[i][2 * au + 1];
                if (hi >= 0) {
                    diag += conduct[i][au];
                    off += conduct[i][au] * phi[static_cast<std::size_t>(hi)];
                }
                if (lo >= 0) {
                    const double cl = conduct[static_cast<std::size_t>(lo)][au];
                    diag += cl;
                    off += cl * phi[static_cast<std::size_t>(lo)];
                }
            }
            const double step = params.dt * dirac(phi[i], params.epsilon);
            const double updated =
                (phi[i] + step * (params.mu * off - params.v - force[i])) / (1.0 + step * params.mu * diag);
            change += std::abs(updated - phi[i]);
            phi[i] = updated;
        }

        c = region_constants(f, phi, k, c);
        if (params.record_energy) result.energy_trace.push_back(compact_energy(g, f, phi, c, params));
        converged = change / static_cast<double>(n) < params.tol;
    }

    result.iterations = iter;
    result.converged = converged;
    result.final_energy = compact_energy(g, f, phi, c, params);

    result.high_mask = Mask3D(lesion_mask.geometry(), 0);
    result.low_mask = Mask3D(lesion_mask.geometry(), 0);
    std::size_t n_high = 0;
    for (std::size_t i = 0; i < n; ++i) {
        result.phi[g.voxels[i]] = phi[i];
        if (phi[i] >= 0.0) ++n_high;
    }
    bool inverted = c.c1 < c.c2;
    if (flat || n_high == 0 || n_high == n) {
        // One region vanished: nothing is brighter than the rest.
        result.low_mask = lesion_mask;
        inverted = false;
        if (flat) c = {f_lo, f_lo};
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const bool high = (phi[i] >= 0.0) != inverted;
            (high ? result.high_mask : result.low_mask)[g.voxels[i]] = 1;
        }
    }
    if (inverted) std::swap(c.c1, c.c2);
    result.c1 = c.c1;
    result.c2 = c.c2;
    result.c1_ppb = to_ppb.to_raw(c.c1);
    result.c2_ppb = to_ppb.to_raw(c.c2);
    return result;
}

RimSegResult chan_vese(const Volume3D& volume, const Mask3D& lesion_mask, LevelSetParams params) {
    params.validate();
    require_same_geometry(volume.geometry(), lesion_mask.geometry(), "chan_vese");
    if (mask_stats(lesion_mask).count < kMinLesionVoxels) {
        auto r = empty_result(lesion_mask, {});
        r.degenerate = true;
        return r;
    }
    Normalisation norm;
    const auto field = normalise(to_double(volume), lesion_mask, norm);
    return evolve_levelset(field, lesion_mask, initial_phi(field, lesion_mask), params, norm);
}

RimSegResult rimseg(const Volume3D& volume, const Mask3D& lesion_mask, const LevelSetParams& params) {
    params.validate();
    require_same_geometry(volume.geometry(), lesion_mask.geometry(), "rimseg");
    if (mask_stats(lesion_mask).count < kMinLesionVoxels) {
        auto r = empty_result(lesion_mask, {});
        r.degenerate = true;
        return r;
    }

    Normalisation raw_norm;
    const auto normalised = normalise(to_double(volume), lesion_mask, raw_norm);
    const auto distance = distance_to_edge(lesion_mask);
    Grid<double> weighted;
    try {
        weighted = weighted_intensity(normalised, lesion_mask, distance, params.w);
    } catch (const DegenerateLesion&) {
        auto r = empty_result(lesion_mask, raw_norm);
        r.degenerate = true;
        return r;
    }
    Normalisation weighted_norm;
    const auto field = normalise(weighted, lesion_mask, weighted_norm);
    // Constants are reported in ppb through both normalisations.
    const Normalisation to_ppb{raw_norm.to_raw(weighted_norm.offset), raw_norm.scale * weighted_norm.scale};
    return evolve_levelset(field, lesion_mask, initial_phi(field, lesion_mask), params, to_ppb);
}

RimSegResult rimseg(const sim::LesionPatch& patch, const LevelSetParams& params) {
    return rimseg(patch.volume, patch.lesion_mask, params);
}

} // namespace rimlab::seg
