#include "rimlab/features.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "rimlab/error.hpp"

namespace rimlab::feat {
namespace {

constexpr int kLbpPoints = 16;
constexpr double kLbpRadius = 5.0;

std::vector<double> values_in(const Grid<double>& field, const Mask3D& mask) {
    std::vector<double> out;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] != 0) out.push_back(field[i]);
    }
    return out;
}

Grid<double> widen(const Volume3D& volume) {
    return Grid<double>(volume.geometry(), std::vector<double>(volume.values().begin(), volume.values().end()));
}

double snap(double coordinate) {
    const double nearest = std::round(coordinate);
    return std::abs(coordinate - nearest) < 1e-9 ? nearest : coordinate;
}

std::vector<std::string> build_names() {
    std::vector<std::string> names;
    names.reserve(kFeatureCount);
    for (const char* mask : {"full", "high", "low"}) {
        for (const char* m : first_order_names()) names.push_back(fmt::format("{}_{}", m, mask));
    }
    for (const char* mask : {"full", "high", "low"}) {
        names.push_back(fmt::format("mean_distance_{}", mask));
        names.push_back(fmt::format("std_distance_{}", mask));
    }
    names.emplace_back("n_components_high");
    names.emplace_back("n_components_low");
    names.emplace_back("volume_fraction_high");
    for (std::size_t b = 0; b < kLbpBins; ++b) names.push_back(fmt::format("lbp_{:02}", b));
    return names;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream stream(line);
    while (std::getline(stream, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_double(const std::string& text, std::size_t line_no) {
    double value = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ParseError(fmt::format("feature CSV line {}: bad number '{}'", line_no, text));
    }
    return value;
}

} // namespace

std::array<double, kFirstOrderCount> FirstOrderSet::as_array() const {
    return {volume, mean, harmonic_mean, median, mad,  rms,      rmsd,     minimum, maximum,   p10,
            p90,    iqr,  range,         std,    skewness, kurtosis, energy, entropy, uniformity};
}

const std::array<const char*, kFirstOrderCount>& first_order_names() {
    static const std::array<const char*, kFirstOrderCount> names{
        "volume", "mean", "harmonic_mean", "median", "mad",      "rms",      "rmsd",   "minimum", "maximum",   "p10",
        "p90",    "iqr",  "range",         "std",    "skewness", "kurtosis", "energy", "entropy", "uniformity"};
    return names;
}

double percentile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

FirstOrderSet first_order(std::span<const double> values, double voxel_volume, int bins) {
    if (bins < 1) throw InvalidArgument("histogram bins must be >= 1");
    FirstOrderSet s;
    const std::size_t n = values.size();
    if (n == 0) return s;
    const double nd = static_cast<double>(n);

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());

    s.volume = nd * voxel_volume;
    double sum = 0.0, sum_sq = 0.0, sum_inv = 0.0;
    bool has_zero = false;
    for (double x : values) {
        sum += x;
        sum_sq += x * x;
        if (x == 0.0) {
            has_zero = true;
        } else {
            sum_inv += 1.0 / x;
        }
    }
    s.mean = sum / nd;
    s.harmonic_mean = (has_zero || sum_inv == 0.0) ? 0.0 : nd / sum_inv;
    s.median = percentile_sorted(sorted, 0.5);
    s.minimum = sorted.front();
    s.maximum = sorted.back();
    s.range = s.maximum - s.minimum;
    s.p10 = percentile_sorted(sorted, 0.10);
    s.p90 = percentile_sorted(sorted, 0.90);
    s.iqr = percentile_sorted(sorted, 0.75) - percentile_sorted(sorted, 0.25);
    s.rms = std::sqrt(sum_sq / nd);
    s.energy = sum_sq;

    double abs_dev = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : values) {
        const double d = x - s.mean;
        abs_dev += std::abs(d);
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    s.mad = abs_dev / nd;
    s.rmsd = std::sqrt(m2 / nd);
    s.std = n > 1 ? std::sqrt(m2 / (nd - 1.0)) : 0.0;
    const double var_pop = m2 / nd;
    if (var_pop > 0.0 && s.range > 0.0) {
        s.skewness = (m3 / nd) / std::pow(var_pop, 1.5);
        s.kurtosis = (m4 / nd) / (var_pop * var_pop) - 3.0;
    }

    std::vector<std::size_t> hist(static_cast<std::size_t>(bins), 0);
    for (double x : values) {
        std::size_t b = 0;
        if (s.range > 0.0) {
            const double t = (x - s.minimum) / s.range * bins;
            b = std::min(static_cast<std::size_t>(std::max(t, 0.0)), static_cast<std::size_t>(bins - 1));
        }
        ++hist[b];
    }
    for (std::size_t count : hist) {
        if (count == 0) continue;
        const double p = static_cast<double>(count) / nd;
        s.entropy -= p * std::log2(p);
        s.uniformity += p * p;
    }
    s.entropy = std::max(s.entropy, 0.0);
    return s;
}

DistanceStats distance_stats(const Mask3D& mask, const DistanceMap& lesion_distance) {
    require_same_geometry(mask.geometry(), lesion_distance.d.geometry(), "distance_stats");
    const auto d = values_in(lesion_distance.d, mask);
    DistanceStats s;
    if (d.empty()) return s;
    const double n = static_cast<double>(d.size());
    double sum = 0.0;
    for (double v : d) sum += v;
    s.mean_distance = sum / n;
    if (d.size() > 1) {
        double ss = 0.0;
        for (double v : d) ss += (v - s.mean_distance) * (v - s.mean_distance);
        s.std_distance = std::sqrt(ss / (n - 1.0));
    }
    return s;
}

int riu2_code(unsigned pattern) {
    const unsigned p = pattern & 0xFFFFu;
    const unsigned rotated = ((p >> 1) | (p << 15)) & 0xFFFFu;
    const int transitions = std::popcount(p ^ rotated);
    return transitions <= 2 ? std::popcount(p) : kLbpPoints + 1;
}

std::array<double, kLbpBins> lbp_histogram(const Volume3D& volume, const Mask3D& lesion_mask) {
    require_same_geometry(volume.geometry(), lesion_mask.geometry(), "lbp_histogram");
    const Dims& d = volume.dims();
    std::array<double, kLbpBins> hist{};

    std::array<double, kLbpPoints> dx{}, dy{};
    for (int k = 0; k < kLbpPoints; ++k) {
        const double theta = 2.0 * std::numbers::pi * k / kLbpPoints;
        dx[static_cast<std::size_t>(k)] = kLbpRadius * std::cos(theta);
        dy[static_cast<std::size_t>(k)] = -kLbpRadius * std::sin(theta);
    }

    auto sample = [&](double x, double y, int z) {
        x = std::clamp(snap(x), 0.0, static_cast<double>(d.nx - 1));
        y = std::clamp(snap(y), 0.0, static_cast<double>(d.ny - 1));
        const int x0 = static_cast<int>(std::floor(x));
        const int y0 = static_cast<int>(std::floor(y));
        const int x1 = std::min(x0 + 1, d.nx - 1);
        const int y1 = std::min(y0 + 1, d.ny - 1);
        const double fx = x - x0;
        const double fy = y - y0;
        const double a = volume(x0, y0, z), b = volume(x1, y0, z);
        const double c = volume(x0, y1, z), e = volume(x1, y1, z);
        const double top = a + fx * (b - a);
        const double bottom = c + fx * (e - c);
        return top + fy * (bottom - top);
    };

    std::size_t total = 0;
    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x) {
                if (lesion_mask(x, y, z) == 0) continue;
                const double centre = volume(x, y, z);
                unsigned pattern = 0;
                for (int k = 0; k < kLbpPoints; ++k) {
                    const auto ku = static_cast<std::size_t>(k);
                    if (sample(x + dx[ku], y + dy[ku], z) >= centre) pattern |= 1u << k;
                }
                hist[static_cast<std::size_t>(riu2_code(pattern))] += 1.0;
                ++total;
            }
        }
    }
    if (total > 0) {
        for (double& h : hist) h /= static_cast<double>(total);
    }
    return hist;
}

const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = build_names();
    return names;
}

RimSetVector extract_rimset(const Volume3D& volume, const Mask3D& lesion_mask, const Mask3D& high_mask,
                            const Mask3D& low_mask) {
    require_same_geometry(volume.geometry(), lesion_mask.geometry(), "extract_rimset");
    require_same_geometry(high_mask.geometry(), lesion_mask.geometry(), "extract_rimset");
    require_same_geometry(low_mask.geometry(), lesion_mask.geometry(), "extract_rimset");

    RimSetVector out;
    std::size_t at = 0;
    auto push = [&](double v) { out.values[at++] = v; };

    const auto field = widen(volume);
    const double voxel = volume.spacing().voxel_volume();
    const std::array<const Mask3D*, 3> masks{&lesion_mask, &high_mask, &low_mask};
    for (const Mask3D* m : masks) {
        const auto values = values_in(field, *m);
        for (double v : first_order(values, voxel).as_array()) push(v);
    }

    const auto distance = distance_to_edge(lesion_mask);
    for (const Mask3D* m : masks) {
        const auto ds = distance_stats(*m, distance);
        push(ds.mean_distance);
        push(ds.std_distance);
    }

    push(count_components(high_mask));
    push(count_components(low_mask));
    const auto full_count = mask_stats(lesion_mask).count;
    push(full_count > 0 ? static_cast<double>(mask_stats(high_mask).count) / static_cast<double>(full_count) : 0.0);

    for (double h : lbp_histogram(volume, lesion_mask)) push(h);
    return out;
}

RimSetVector extract_rimset(const sim::LesionPatch& patch, const seg::RimSegResult& segmentation) {
    auto v = extract_rimset(patch.volume, patch.lesion_mask, segmentation.high_mask, segmentation.low_mask);
    v.label = patch.label;
    return v;
}

void FeatureTable::add(const RimSetVector& v) {
    if (names.empty()) names = feature_names();
    ids.push_back(v.id);
    labels.push_back(static_cast<int>(v.label));
    rows.emplace_back(v.values.begin(), v.values.end());
}

FeatureTable make_table(std::span<const RimSetVector> vectors) {
    FeatureTable t;
    t.names = feature_names();
    for (const auto& v : vectors) t.add(v);
    return t;
}

void write_csv(std::ostream& out, const FeatureTable& table) {
    out << "id,label";
    for (const auto& n : table.names) out << ',' << n;
    out << '\n';
    for (std::size_t r = 0; r < table.size(); ++r) {
        out << table.ids[r] << ',' << table.labels[r];
        for (double v : table.rows[r]) out << ',' << fmt::format("{}", v);
        out << '\n';
    }
}

void write_csv(const std::filesystem::path& path, const FeatureTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("{}: cannot open for writing", path.string()));
    write_csv(out, table);
    if (!out) throw IoError(fmt::format("{}: write failed", path.string()));
}

FeatureTable read_csv(std::istream& in) {
    FeatureTable t;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("feature CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_line(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "label") {
        throw ParseError("feature CSV header must start with id,label");
    }
    t.names.assign(header.begin() + 2, header.end());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size()) {
            throw ParseError(fmt::format("feature CSV line {}: expected {} columns, got {}", line_no, header.size(),
                                         cells.size()));
        }
        t.ids.push_back(cells[0]);
        const double label = parse_double(cells[1], line_no);
        if (label != 0.0 && label != 1.0) throw ParseError(fmt::format("feature CSV line {}: label must be 0 or 1", line_no));
        t.labels.push_back(static_cast<int>(label));
        std::vector<double> row;
        row.reserve(cells.size() - 2);
        for (std::size_t c = 2; c < cells.size(); ++c) {
            const double v = parse_double(cells[c], line_no);
            if (!std::isfinite(v)) throw ParseError(fmt::format("feature CSV line {}: non-finite value", line_no));
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

FeatureTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("{}: cannot open", path.string()));
    try {
        return read_csv(in);
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

} // namespace rimlab::feat
