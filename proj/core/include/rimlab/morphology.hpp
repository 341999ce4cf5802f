#pragma once

#include "rimlab/volume.hpp"

namespace rimlab {

enum class Connectivity { Six = 6, TwentySix = 26 };

struct Labeling {
    Grid<int> labels; ///< 0 for background, 1..count for components
    int count = 0;
};

/// Labels connected components of the true voxels. Labels are assigned in raster order of first visit.
[[nodiscard]] Labeling connected_components(const Mask3D& mask, Connectivity connectivity = Connectivity::TwentySix);

[[nodiscard]] int count_components(const Mask3D& mask, Connectivity connectivity = Connectivity::TwentySix);

/// Exact Euclidean distance (mm) from each in-mask voxel centre to the nearest background voxel centre.
/// Positions outside the array count as background. Out-of-mask voxels get 0.
[[nodiscard]] DistanceMap distance_to_edge(const Mask3D& mask);

/// Removes every voxel with a 6-neighbour outside the mask (array exterior counts as outside).
[[nodiscard]] Mask3D erode6(const Mask3D& mask);

} // namespace rimlab
