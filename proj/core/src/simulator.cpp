#include "rimlab/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rimlab/error.hpp"
#include "rimlab/rvol.hpp"

namespace rimlab::sim {
namespace {

constexpr int kManifestVersion = 1;

// 3D simplex noise (Gustavson's formulation) over a seeded permutation table.
class SimplexNoise {
public:
    explicit SimplexNoise(std::uint64_t seed) {
        std::array<int, 256> p{};
        std::iota(p.begin(), p.end(), 0);
        std::mt19937_64 rng(seed);
        for (int i = 255; i > 0; --i) {
            std::uniform_int_distribution<int> pick(0, i);
            std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(pick(rng))]);
        }
        for (std::size_t i = 0; i < 512; ++i) perm_[i] = p[i & 255];
    }

    [[nodiscard]] double operator()(double x, double y, double z) const {
        constexpr double F3 = 1.0 / 3.0;
        constexpr double G3 = 1.0 / 6.0;
        const double s = (x + y + z) * F3;
        const int i = fast_floor(x + s);
        const int j = fast_floor(y + s);
        const int k = fast_floor(z + s);
        const double t = (i + j + k) * G3;
        const double x0 = x - (i - t);
        const double y0 = y - (j - t);
        const double z0 = z - (k - t);

        int i1, j1, k1, i2, j2, k2;
        if (x0 >= y0) {
            if (y0 >= z0) { i1 = 1; j1 = 0; k1 = 0; i2 = 1; j2 = 1; k2 = 0; }
            else if (x0 >= z0) { i1 = 1; j1 = 0; k1 = 0; i2 = 1; j2 = 0; k2 = 1; }
            else { i1 = 0; j1 = 0; k1 = 1; i2 = 1; j2 = 0; k2 = 1; }
        } else {
            if (y0 < z0) { i1 = 0; j1 = 0; k1 = 1; i2 = 0; j2 = 1; k2 = 1; }
            else if (x0 < z0) { i1 = 0; j1 = 1; k1 = 0; i2 = 0; j2 = 1; k2 = 1; }
            else { i1 = 0; j1 = 1; k1 = 0; i2 = 1; j2 = 1; k2 = 0; }
        }

        const double x1 = x0 - i1 + G3, y1 = y0 - j1 + G3, z1 = z0 - k1 + G3;
        const double x2 = x0 - i2 + 2 * G3, y2 = y0 - j2 + 2 * G3, z2 = z0 - k2 + 2 * G3;
        const double x3 = x0 - 1 + 3 * G3, y3 = y0 - 1 + 3 * G3, z3 = z0 - 1 + 3 * G3;

        const int ii = i & 255, jj = j & 255, kk = k & 255;
        const double n0 = corner(hash(ii, jj, kk), x0, y0, z0);
        const double n1 = corner(hash(ii + i1, jj + j1, kk + k1), x1, y1, z1);
        const double n2 = corner(hash(ii + i2, jj + j2, kk + k2), x2, y2, z2);
        const double n3 = corner(hash(ii + 1, jj + 1, kk + 1), x3, y3, z3);
        return 32.0 * (n0 + n1 + n2 + n3);
    }

private:
    static int fast_floor(double v) { return static_cast<int>(std::floor(v)); }

    [[nodiscard]] int hash(int i, int j, int k) const {
        return perm_[static_cast<std::size_t>(i + perm_[static_cast<std::size_t>(j + perm_[static_cast<std::size_t>(k)])])] % 12;
    }

    static double corner(int g, double x, double y, double z) {
        static constexpr int grad[12][3] = {{1, 1, 0}, {-1, 1, 0}, {1, -1, 0}, {-1, -1, 0}, {1, 0, 1}, {-1, 0, 1},
                                            {1, 0, -1}, {-1, 0, -1}, {0, 1, 1}, {0, -1, 1}, {0, 1, -1}, {0, -1, -1}};
        double t = 0.6 - x * x - y * y - z * z;
        if (t < 0) return 0.0;
        t *= t;
        return t * t * (grad[g][0] * x + grad[g][1] * y + grad[g][2] * z);
    }

    std::array<int, 512> perm_{};
};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

Vec3 normalised(Vec3 v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (!(n > 0.0)) throw InvalidArgument("direction vector must be non-zero");
    return {v[0] / n, v[1] / n, v[2] / n};
}

Vec3 random_unit(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> cos_theta(-1.0, 1.0);
    std::uniform_real_distribution<double> phi(0.0, 2.0 * std::numbers::pi);
    const double c = cos_theta(rng);
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double p = phi(rng);
    return {s * std::cos(p), s * std::sin(p), c};
}

void require_in(double v, double lo, double hi, const char* name) {
    if (!(v >= lo && v <= hi)) {
        throw InvalidArgument(std::string(name) + " = " + std::to_string(v) + " outside [" + std::to_string(lo) +
                              ", " + std::to_string(hi) + "]");
    }
}

double draw(std::mt19937_64& rng, Range r) {
    if (r.hi <= r.lo) return r.lo;
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

bool bernoulli(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

std::string lesion_id(std::size_t index) { return fmt::format("L{:04}", index); }

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v[0], v[1], v[2]}); }
Vec3 vec_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

} // namespace

const char* to_string(Label label) { return label == Label::RimPositive ? "rim+" : "rim-"; }
const char* to_string(LesionKind kind) { return kind == LesionKind::Shell ? "shell" : "sphere"; }

std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index) {
    return splitmix64(splitmix64(global_seed) ^ (index * 0xD1B54A32D192ED03ULL + 1));
}

void LesionSpec::validate(Mode mode) const {
    if (!(radius_mm > 0.0)) throw InvalidArgument("radius must be positive");
    if (noise_sigma < 0.0 || !std::isfinite(noise_sigma)) throw InvalidArgument("noise_sigma must be >= 0");
    for (double a : oval_axes) {
        if (!(a > 0.0) || !std::isfinite(a)) throw InvalidArgument("oval axes must be positive");
    }
    if (kind == LesionKind::Shell) {
        if (!(thickness_mm > 0.0)) throw InvalidArgument("thickness must be positive");
        if (thickness_mm >= radius_mm) throw InvalidArgument("degenerate shell: thickness >= radius");
        if (!(partial_fraction > 0.0 && partial_fraction <= 1.0)) {
            throw InvalidArgument("partial_fraction must lie in (0, 1]");
        }
        (void)normalised(rim_axis);
    }
    if (vein) {
        (void)normalised(vein->direction);
        if (!(vein->radius_mm > 0.0)) throw InvalidArgument("vein radius must be positive");
    }
    if (mode == Mode::Paper) {
        require_in(radius_mm, 7.0, 15.0, "radius");
        if (kind == LesionKind::Shell) require_in(thickness_mm, 1.0, 3.0, "thickness");
        require_in(rim_value, 15.0, 45.0, "rim_value");
        require_in(core_value, -30.0, 0.0, "core_value");
        require_in(noise_sigma, 0.0, 7.0, "noise_sigma");
    }
}

Volume3D generate_background(const Geometry& geometry, std::uint64_t seed, const BackgroundParams& params) {
    geometry.validate();
    Volume3D field(geometry, 0.0F);
    if (params.amplitude == 0.0) return field;
    if (!(params.feature_mm > 0.0) || params.octaves < 1) {
        throw InvalidArgument("background feature size and octave count must be positive");
    }

    const SimplexNoise noise(seed);
    std::mt19937_64 rng(splitmix64(seed));
    std::uniform_real_distribution<double> shift(0.0, 256.0);
    const Vec3 origin{shift(rng), shift(rng), shift(rng)};

    double norm = 0.0;
    for (int o = 0; o < params.octaves; ++o) norm += std::pow(0.5, o);

    const Dims& d = geometry.dims;
    const Spacing& s = geometry.spacing;
    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x) {
                double v = 0.0;
                double freq = 1.0 / params.feature_mm;
                double amp = 1.0;
                for (int o = 0; o < params.octaves; ++o) {
                    v += amp * noise(origin[0] + x * s.sx * freq, origin[1] + y * s.sy * freq,
                                     origin[2] + z * s.sz * freq);
                    freq *= 2.0;
                    amp *= 0.5;
                }
                field(x, y, z) = static_cast<float>(std::clamp(v / norm, -1.0, 1.0) * params.amplitude);
            }
        }
    }
    return field;
}

LesionPatch generate_lesion(const LesionSpec& spec, const Geometry& geometry, Mode mode,
                            const BackgroundParams& background) {
    spec.validate(mode);
    geometry.validate();
    const Dims& d = geometry.dims;
    const Spacing& s = geometry.spacing;
    const std::array<double, 3> extent{d.nx * s.sx, d.ny * s.sy, d.nz * s.sz};
    for (int a = 0; a < 3; ++a) {
        if (spec.radius_mm * spec.oval_axes[static_cast<std::size_t>(a)] > extent[static_cast<std::size_t>(a)] / 2.0) {
            throw InvalidArgument("lesion does not fit the patch");
        }
    }

    const Vec3 center{(d.nx - 1) * s.sx / 2.0, (d.ny - 1) * s.sy / 2.0, (d.nz - 1) * s.sz / 2.0};
    const bool shell = spec.kind == LesionKind::Shell;
    const Vec3 axis = normalised(spec.rim_axis);
    const double cap_cos = 1.0 - 2.0 * spec.partial_fraction;
    const double inner = spec.radius_mm - spec.thickness_mm;

    LesionPatch patch;
    patch.spec = spec;
    patch.label = shell ? Label::RimPositive : Label::RimNegative;
    patch.volume = generate_background(geometry, splitmix64(spec.seed ^ 0xB5C0FBCFEC4D3B2FULL), background);
    patch.lesion_mask = Mask3D(geometry, 0);
    if (shell) patch.gt_rim_mask = Mask3D(geometry, 0);

    std::optional<Vec3> vein_dir;
    if (spec.vein) vein_dir = normalised(spec.vein->direction);

    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x) {
                const Vec3 p{x * s.sx - center[0], y * s.sy - center[1], z * s.sz - center[2]};
                const Vec3 q{p[0] / spec.oval_axes[0], p[1] / spec.oval_axes[1], p[2] / spec.oval_axes[2]};
                const double r = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]);
                if (r <= spec.radius_mm) {
                    patch.lesion_mask(x, y, z) = 1;
                    bool rim = false;
                    if (shell && r >= inner) {
                        rim = spec.partial_fraction >= 1.0 ||
                              (q[0] * axis[0] + q[1] * axis[1] + q[2] * axis[2]) >= cap_cos * r;
                    }
                    if (rim) (*patch.gt_rim_mask)(x, y, z) = 1;
                    patch.volume(x, y, z) = static_cast<float>(rim ? spec.rim_value : spec.core_value);
                }
                if (vein_dir) {
                    const Vec3& u = *vein_dir;
                    const double along = p[0] * u[0] + p[1] * u[1] + p[2] * u[2];
                    const double perp2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2] - along * along;
                    if (perp2 <= spec.vein->radius_mm * spec.vein->radius_mm) {
                        patch.volume(x, y, z) = static_cast<float>(spec.vein->value_ppb);
                    }
                }
            }
        }
    }

    if (spec.noise_sigma > 0.0) {
        std::mt19937_64 rng(spec.seed);
        std::normal_distribution<double> noise(0.0, spec.noise_sigma);
        for (auto& v : patch.volume.values()) {
            v = static_cast<float>(v + noise(rng));
        }
    }
    return patch;
}

DatasetManifest plan_dataset(const DatasetConfig& config) {
    if (config.count_rim_plus < 0 || config.count_rim_minus < 0) {
        throw InvalidArgument("lesion counts must be non-negative");
    }
    DatasetManifest manifest;
    manifest.global_seed = config.seed;
    manifest.mode = config.mode;
    manifest.geometry = config.geometry;
    manifest.background = config.background;

    const auto total = static_cast<std::size_t>(config.count_rim_plus + config.count_rim_minus);
    for (std::size_t i = 0; i < total; ++i) {
        const bool shell = i < static_cast<std::size_t>(config.count_rim_plus);
        std::mt19937_64 rng(derive_seed(config.seed, i));

        LesionSpec spec;
        spec.kind = shell ? LesionKind::Shell : LesionKind::Sphere;
        spec.radius_mm = draw(rng, config.radius);
        spec.thickness_mm = draw(rng, config.thickness);
        spec.rim_value = draw(rng, config.rim_value);
        spec.core_value = draw(rng, config.core_value);
        const int sigma_lo = static_cast<int>(std::ceil(config.noise_sigma.lo));
        const int sigma_hi = std::max(sigma_lo, static_cast<int>(std::floor(config.noise_sigma.hi)));
        spec.noise_sigma = std::uniform_int_distribution<int>(sigma_lo, sigma_hi)(rng);
        spec.seed = rng();
        if (shell) {
            if (bernoulli(rng, config.p_partial)) {
                spec.partial_fraction = draw(rng, config.partial_fraction);
                spec.rim_axis = random_unit(rng);
            }
            if (bernoulli(rng, config.p_oval)) {
                spec.oval_axes = {draw(rng, config.oval_scale), draw(rng, config.oval_scale),
                                  draw(rng, config.oval_scale)};
            }
            if (bernoulli(rng, config.p_vein)) {
                Vein vein;
                vein.direction = random_unit(rng);
                vein.radius_mm = draw(rng, config.vein_radius);
                vein.value_ppb = draw(rng, config.vein_value);
                spec.vein = vein;
            }
        }

        ManifestEntry entry;
        entry.id = lesion_id(i);
        entry.label = shell ? Label::RimPositive : Label::RimNegative;
        entry.spec = spec;
        entry.seed = spec.seed;
        entry.volume_file = "lesions/" + entry.id + "_volume.rvol";
        entry.mask_file = "lesions/" + entry.id + "_mask.rvol";
        if (shell) entry.rim_file = "lesions/" + entry.id + "_rim.rvol";
        manifest.entries.push_back(std::move(entry));
    }
    return manifest;
}

LesionPatch realise(const DatasetManifest& manifest, const ManifestEntry& entry) {
    return generate_lesion(entry.spec, manifest.geometry, manifest.mode, manifest.background);
}

DatasetManifest generate_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir) {
    auto manifest = plan_dataset(config);
    manifest.base_dir = out_dir;
    const auto lesion_dir = manifest.entries.empty() ? out_dir : out_dir / "lesions";
    std::error_code ec;
    std::filesystem::create_directories(lesion_dir, ec);
    if (ec) throw IoError("cannot create '" + lesion_dir.string() + "': " + ec.message());

    for (const auto& entry : manifest.entries) {
        const auto patch = realise(manifest, entry);
        rvol::save(out_dir / entry.volume_file, patch.volume);
        rvol::save(out_dir / entry.mask_file, patch.lesion_mask);
        if (entry.rim_file) rvol::save(out_dir / *entry.rim_file, *patch.gt_rim_mask);
    }
    save_manifest(out_dir / "manifest.json", manifest);
    return manifest;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
stratified_split(const std::vector<int>& labels, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("split ratio must lie strictly between 0 and 1");
    std::vector<int> classes(labels.begin(), labels.end());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    std::mt19937_64 rng(splitmix64(seed));
    std::vector<std::size_t> train, test;
    for (int c : classes) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == c) members.push_back(i);
        }
        std::shuffle(members.begin(), members.end(), rng);
        const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(members.size()) * ratio));
        train.insert(train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
        test.insert(test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {train, test};
}

std::pair<DatasetManifest, DatasetManifest> split_dataset(const DatasetManifest& manifest, double ratio,
                                                          std::uint64_t seed) {
    std::vector<int> labels;
    labels.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) labels.push_back(static_cast<int>(e.label));
    const auto [train_idx, test_idx] = stratified_split(labels, ratio, seed);

    DatasetManifest train = manifest, test = manifest;
    train.entries.clear();
    test.entries.clear();
    for (auto i : train_idx) train.entries.push_back(manifest.entries[i]);
    for (auto i : test_idx) test.entries.push_back(manifest.entries[i]);
    return {train, test};
}

double rim_volume_fraction(const LesionPatch& patch) {
    const auto lesion = mask_stats(patch.lesion_mask).count;
    if (lesion == 0 || !patch.gt_rim_mask) return 0.0;
    return static_cast<double>(mask_stats(*patch.gt_rim_mask).count) / static_cast<double>(lesion);
}

nlohmann::json to_json(const LesionSpec& spec) {
    nlohmann::json j;
    j["kind"] = to_string(spec.kind);
    j["radius_mm"] = spec.radius_mm;
    j["thickness_mm"] = spec.thickness_mm;
    j["rim_value"] = spec.rim_value;
    j["core_value"] = spec.core_value;
    j["partial_fraction"] = spec.partial_fraction;
    j["rim_axis"] = vec_json(spec.rim_axis);
    j["oval_axes"] = vec_json(spec.oval_axes);
    j["noise_sigma"] = spec.noise_sigma;
    j["seed"] = spec.seed;
    if (spec.vein) {
        j["vein"] = {{"direction", vec_json(spec.vein->direction)},
                     {"radius_mm", spec.vein->radius_mm},
                     {"value_ppb", spec.vein->value_ppb}};
    } else {
        j["vein"] = nullptr;
    }
    return j;
}

LesionSpec spec_from_json(const nlohmann::json& j) {
    LesionSpec spec;
    const auto kind = j.at("kind").get<std::string>();
    if (kind != "shell" && kind != "sphere") throw ParseError("unknown lesion kind '" + kind + "'");
    spec.kind = kind == "shell" ? LesionKind::Shell : LesionKind::Sphere;
    spec.radius_mm = j.at("radius_mm").get<double>();
    spec.thickness_mm = j.at("thickness_mm").get<double>();
    spec.rim_value = j.at("rim_value").get<double>();
    spec.core_value = j.at("core_value").get<double>();
    spec.partial_fraction = j.at("partial_fraction").get<double>();
    spec.rim_axis = vec_from(j.at("rim_axis"));
    spec.oval_axes = vec_from(j.at("oval_axes"));
    spec.noise_sigma = j.at("noise_sigma").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("vein") && !j.at("vein").is_null()) {
        const auto& v = j.at("vein");
        spec.vein = Vein{vec_from(v.at("direction")), v.at("radius_mm").get<double>(), v.at("value_ppb").get<double>()};
    }
    return spec;
}

nlohmann::json to_json(const DatasetManifest& manifest) {
    nlohmann::json j;
    j["version"] = kManifestVersion;
    j["global_seed"] = manifest.global_seed;
    j["mode"] = manifest.mode == Mode::Paper ? "paper" : "free";
    const auto& g = manifest.geometry;
    j["dims"] = {g.dims.nx, g.dims.ny, g.dims.nz};
    j["spacing"] = {g.spacing.sx, g.spacing.sy, g.spacing.sz};
    j["background"] = {{"amplitude", manifest.background.amplitude},
                       {"feature_mm", manifest.background.feature_mm},
                       {"octaves", manifest.background.octaves}};
    auto& lesions = j["lesions"] = nlohmann::json::array();
    for (const auto& e : manifest.entries) {
        nlohmann::json item;
        item["id"] = e.id;
        item["label"] = to_string(e.label);
        item["seed"] = e.seed;
        item["volume"] = e.volume_file;
        item["mask"] = e.mask_file;
        item["rim"] = e.rim_file ? nlohmann::json(*e.rim_file) : nlohmann::json(nullptr);
        item["spec"] = to_json(e.spec);
        lesions.push_back(std::move(item));
    }
    return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
    try {
        if (j.at("version").get<int>() != kManifestVersion) {
            throw UnsupportedVersion("manifest version " + j.at("version").dump() + " is not supported");
        }
        DatasetManifest m;
        m.global_seed = j.at("global_seed").get<std::uint64_t>();
        const auto mode = j.at("mode").get<std::string>();
        if (mode != "paper" && mode != "free") throw ParseError("unknown mode '" + mode + "'");
        m.mode = mode == "paper" ? Mode::Paper : Mode::Free;
        const auto& dims = j.at("dims");
        const auto& spacing = j.at("spacing");
        m.geometry = {{dims.at(0).get<int>(), dims.at(1).get<int>(), dims.at(2).get<int>()},
                      {spacing.at(0).get<double>(), spacing.at(1).get<double>(), spacing.at(2).get<double>()}};
        const auto& bg = j.at("background");
        m.background = {bg.at("amplitude").get<double>(), bg.at("feature_mm").get<double>(),
                        bg.at("octaves").get<int>()};
        std::vector<std::string> seen;
        for (const auto& item : j.at("lesions")) {
            ManifestEntry e;
            e.id = item.at("id").get<std::string>();
            const auto label = item.at("label").get<std::string>();
            if (label != "rim+" && label != "rim-") throw ParseError("unknown label '" + label + "'");
            e.label = label == "rim+" ? Label::RimPositive : Label::RimNegative;
            e.seed = item.at("seed").get<std::uint64_t>();
            e.volume_file = item.at("volume").get<std::string>();
            e.mask_file = item.at("mask").get<std::string>();
            if (!item.at("rim").is_null()) e.rim_file = item.at("rim").get<std::string>();
            e.spec = spec_from_json(item.at("spec"));
            seen.push_back(e.id);
            m.entries.push_back(std::move(e));
        }
        std::sort(seen.begin(), seen.end());
        if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
            throw ParseError("manifest contains duplicate lesion ids");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << to_json(manifest).dump(2) << '\n';
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    auto m = manifest_from_json(j);
    m.base_dir = path.parent_path();
    return m;
}

} // namespace rimlab::sim
