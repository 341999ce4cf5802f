#include "rimlab/volume.hpp"

#include <cmath>
#include <string>

#include "rimlab/error.hpp"

namespace rimlab {

void Geometry::validate() const {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) {
        throw InvalidArgument("grid dimensions must be positive");
    }
    if (!(spacing.sx > 0.0 && spacing.sy > 0.0 && spacing.sz > 0.0) || !std::isfinite(spacing.sx) ||
        !std::isfinite(spacing.sy) || !std::isfinite(spacing.sz)) {
        throw InvalidArgument("voxel spacing must be positive and finite");
    }
}

template <typename T>
Grid<T>::Grid(Geometry geometry, std::vector<T> data) : geometry_(geometry), data_(std::move(data)) {
    geometry_.validate();
    if (data_.size() != geometry_.dims.size()) {
        throw InvalidArgument("grid payload has " + std::to_string(data_.size()) + " values, expected " +
                              std::to_string(geometry_.dims.size()));
    }
}

template class Grid<float>;
template class Grid<std::uint8_t>;
template class Grid<double>;
template class Grid<int>;

MaskStats mask_stats(const Mask3D& mask) {
    MaskStats stats;
    for (auto v : mask.values()) {
        stats.count += v != 0 ? 1U : 0U;
    }
    stats.volume_mm3 = static_cast<double>(stats.count) * mask.spacing().voxel_volume();
    return stats;
}

void require_same_geometry(const Geometry& a, const Geometry& b, const char* what) {
    if (!(a == b)) {
        throw InvalidArgument(std::string(what) + ": dims/spacing mismatch");
    }
}

void require_finite(const Volume3D& volume) {
    for (auto v : volume.values()) {
        if (!std::isfinite(v)) {
            throw InvalidArgument("volume contains non-finite intensities");
        }
    }
}

Mask3D mask_and(const Mask3D& a, const Mask3D& b) {
    require_same_geometry(a.geometry(), b.geometry(), "mask_and");
    Mask3D out(a.geometry());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = (a[i] != 0 && b[i] != 0) ? 1 : 0;
    }
    return out;
}

Mask3D mask_and_not(const Mask3D& a, const Mask3D& b) {
    require_same_geometry(a.geometry(), b.geometry(), "mask_and_not");
    Mask3D out(a.geometry());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = (a[i] != 0 && b[i] == 0) ? 1 : 0;
    }
    return out;
}

bool is_subset(const Mask3D& inner, const Mask3D& outer) {
    require_same_geometry(inner.geometry(), outer.geometry(), "is_subset");
    for (std::size_t i = 0; i < inner.size(); ++i) {
        if (inner[i] != 0 && outer[i] == 0) {
            return false;
        }
    }
    return true;
}

} // namespace rimlab
