#include "rimlab/morphology.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace rimlab {
namespace {

struct Offset {
    int dx, dy, dz;
};

std::vector<Offset> neighbour_offsets(Connectivity connectivity) {
    std::vector<Offset> offsets;
    for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (manhattan == 0) continue;
                if (connectivity == Connectivity::Six && manhattan != 1) continue;
                offsets.push_back({dx, dy, dz});
            }
        }
    }
    return offsets;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Squared distance transform along one line. Samples sit at integer positions 0..n-1 scaled by
// `step`; two virtual zero samples at -1 and n model the background outside the array.
// Lower envelope of parabolas (Felzenszwalb & Huttenlocher).
void transform_line(std::span<const double> f, std::span<double> out, double step, std::vector<int>& site,
                    std::vector<double>& boundary) {
    const int n = static_cast<int>(f.size());
    auto value = [&](int q) { return (q < 0 || q >= n) ? 0.0 : f[static_cast<std::size_t>(q)]; };

    site.clear();
    boundary.clear();
    for (int q = -1; q <= n; ++q) {
        const double fq = value(q);
        if (!std::isfinite(fq)) continue;
        const double pq = q * step;
        while (!site.empty()) {
            const int v = site.back();
            const double pv = v * step;
            const double s = ((fq + pq * pq) - (value(v) + pv * pv)) / (2.0 * (pq - pv));
            if (s <= boundary.back()) {
                site.pop_back();
                boundary.pop_back();
            } else {
                site.push_back(q);
                boundary.push_back(s);
                break;
            }
        }
        if (site.empty()) {
            site.push_back(q);
            boundary.push_back(-kInf);
        }
    }

    std::size_t k = 0;
    for (int q = 0; q < n; ++q) {
        const double pq = q * step;
        while (k + 1 < site.size() && boundary[k + 1] < pq) {
            ++k;
        }
        const double delta = (q - site[k]) * step;
        out[static_cast<std::size_t>(q)] = delta * delta + value(site[k]);
    }
}

} // namespace

Labeling connected_components(const Mask3D& mask, Connectivity connectivity) {
    const Dims& dims = mask.dims();
    Labeling result{Grid<int>(mask.geometry(), 0), 0};
    const auto offsets = neighbour_offsets(connectivity);
    std::vector<std::array<int, 3>> stack;

    for (int z = 0; z < dims.nz; ++z) {
        for (int y = 0; y < dims.ny; ++y) {
            for (int x = 0; x < dims.nx; ++x) {
                if (mask(x, y, z) == 0 || result.labels(x, y, z) != 0) continue;
                const int label = ++result.count;
                result.labels(x, y, z) = label;
                stack.push_back({x, y, z});
                while (!stack.empty()) {
                    const auto [cx, cy, cz] = stack.back();
                    stack.pop_back();
                    for (const auto& o : offsets) {
                        const int nx = cx + o.dx;
                        const int ny = cy + o.dy;
                        const int nz = cz + o.dz;
                        if (!dims.contains(nx, ny, nz)) continue;
                        if (mask(nx, ny, nz) == 0 || result.labels(nx, ny, nz) != 0) continue;
                        result.labels(nx, ny, nz) = label;
                        stack.push_back({nx, ny, nz});
                    }
                }
            }
        }
    }
    return result;
}

int count_components(const Mask3D& mask, Connectivity connectivity) {
    return connected_components(mask, connectivity).count;
}

DistanceMap distance_to_edge(const Mask3D& mask) {
    const Dims& dims = mask.dims();
    const Spacing& sp = mask.spacing();
    Grid<double> sq(mask.geometry(), 0.0);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        sq[i] = mask[i] != 0 ? kInf : 0.0;
    }

    std::vector<int> site;
    std::vector<double> boundary;
    const int longest = std::max({dims.nx, dims.ny, dims.nz});
    std::vector<double> line(static_cast<std::size_t>(longest));
    std::vector<double> out(static_cast<std::size_t>(longest));

    auto pass = [&](int n, double step, auto&& at) {
        std::span<double> f(line.data(), static_cast<std::size_t>(n));
        std::span<double> g(out.data(), static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) f[static_cast<std::size_t>(i)] = at(i);
        transform_line(f, g, step, site, boundary);
        for (int i = 0; i < n; ++i) at(i) = g[static_cast<std::size_t>(i)];
    };

    for (int z = 0; z < dims.nz; ++z) {
        for (int y = 0; y < dims.ny; ++y) {
            pass(dims.nx, sp.sx, [&](int x) -> double& { return sq(x, y, z); });
        }
    }
    for (int z = 0; z < dims.nz; ++z) {
        for (int x = 0; x < dims.nx; ++x) {
            pass(dims.ny, sp.sy, [&](int y) -> double& { return sq(x, y, z); });
        }
    }
    for (int y = 0; y < dims.ny; ++y) {
        for (int x = 0; x < dims.nx; ++x) {
            pass(dims.nz, sp.sz, [&](int z) -> double& { return sq(x, y, z); });
        }
    }

    DistanceMap result{Grid<double>(mask.geometry(), 0.0), 0.0};
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] == 0) continue;
        const double d = std::sqrt(sq[i]);
        result.d[i] = d;
        result.d_max = std::max(result.d_max, d);
    }
    return result;
}

Mask3D erode6(const Mask3D& mask) {
    const Dims& dims = mask.dims();
    Mask3D out(mask.geometry(), 0);
    auto inside = [&](int x, int y, int z) { return dims.contains(x, y, z) && mask(x, y, z) != 0; };
    for (int z = 0; z < dims.nz; ++z) {
        for (int y = 0; y < dims.ny; ++y) {
            for (int x = 0; x < dims.nx; ++x) {
                if (!inside(x, y, z)) continue;
                const bool keep = inside(x - 1, y, z) && inside(x + 1, y, z) && inside(x, y - 1, z) &&
                                  inside(x, y + 1, z) && inside(x, y, z - 1) && inside(x, y, z + 1);
                out(x, y, z) = keep ? 1 : 0;
            }
        }
    }
    return out;
}

} // namespace rimlab
