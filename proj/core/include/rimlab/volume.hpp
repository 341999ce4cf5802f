#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rimlab {

struct Dims {
    int nx = 0;
    int ny = 0;
    int nz = 0;

    [[nodiscard]] std::size_t size() const noexcept {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
    }
    [[nodiscard]] std::size_t index(int x, int y, int z) const noexcept {
        return (static_cast<std::size_t>(z) * static_cast<std::size_t>(ny) + static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(nx) +
               static_cast<std::size_t>(x);
    }
    [[nodiscard]] bool contains(int x, int y, int z) const noexcept {
        return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
    }
    friend bool operator==(const Dims&, const Dims&) = default;
};

/// Physical voxel size in millimetres.
struct Spacing {
    double sx = 1.0;
    double sy = 1.0;
    double sz = 1.0;

    [[nodiscard]] double voxel_volume() const noexcept { return sx * sy * sz; }
    friend bool operator==(const Spacing&, const Spacing&) = default;
};

struct Geometry {
    Dims dims;
    Spacing spacing;

    /// Throws InvalidArgument unless every dimension and spacing component is positive.
    void validate() const;
    friend bool operator==(const Geometry&, const Geometry&) = default;
};

/// Dense 3D grid laid out x-fastest.
template <typename T>
class Grid {
public:
    using value_type = T;

    Grid() = default;
    explicit Grid(Geometry geometry, T fill = T{})
        : geometry_(geometry), data_(geometry.dims.size(), fill) {
        geometry_.validate();
    }
    Grid(Geometry geometry, std::vector<T> data);

    [[nodiscard]] const Geometry& geometry() const noexcept { return geometry_; }
    [[nodiscard]] const Dims& dims() const noexcept { return geometry_.dims; }
    [[nodiscard]] const Spacing& spacing() const noexcept { return geometry_.spacing; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    [[nodiscard]] T& operator()(int x, int y, int z) noexcept { return data_[geometry_.dims.index(x, y, z)]; }
    [[nodiscard]] const T& operator()(int x, int y, int z) const noexcept {
        return data_[geometry_.dims.index(x, y, z)];
    }
    [[nodiscard]] T& operator[](std::size_t i) noexcept { return data_[i]; }
    [[nodiscard]] const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    [[nodiscard]] std::span<T> values() noexcept { return data_; }
    [[nodiscard]] std::span<const T> values() const noexcept { return data_; }
    [[nodiscard]] const std::vector<T>& raw() const noexcept { return data_; }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    Geometry geometry_;
    std::vector<T> data_;
};

extern template class Grid<float>;
extern template class Grid<std::uint8_t>;
extern template class Grid<double>;
extern template class Grid<int>;

/// Intensity field in ppb.
using Volume3D = Grid<float>;
/// Boolean field stored as 0/1 bytes.
using Mask3D = Grid<std::uint8_t>;

/// Per-voxel distance (mm) to the nearest background voxel centre.
struct DistanceMap {
    Grid<double> d;
    double d_max = 0.0;
};

struct MaskStats {
    std::size_t count = 0;
    double volume_mm3 = 0.0;
};

[[nodiscard]] MaskStats mask_stats(const Mask3D& mask);

/// Throws InvalidArgument if the two grids do not share dims and spacing.
void require_same_geometry(const Geometry& a, const Geometry& b, const char* what);

/// Throws InvalidArgument on NaN/Inf intensities.
void require_finite(const Volume3D& volume);

[[nodiscard]] Mask3D mask_and(const Mask3D& a, const Mask3D& b);
[[nodiscard]] Mask3D mask_and_not(const Mask3D& a, const Mask3D& b);
[[nodiscard]] bool is_subset(const Mask3D& inner, const Mask3D& outer);

} // namespace rimlab
