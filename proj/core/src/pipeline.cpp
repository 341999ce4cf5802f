#include "rimlab/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rimlab/error.hpp"
#include "rimlab/evaluation.hpp"
#include "rimlab/rvol.hpp"

namespace rimlab::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads optional keys from one JSON object and rejects keys nobody asked for.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw InvalidArgument(fmt::format("config section '{}' must be an object", name_));
    }

    template <typename T>
    void read(const char* key, T& out) {
        known_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw InvalidArgument(fmt::format("config key '{}.{}' has the wrong type", name_, key));
        }
    }

    void read(const char* key, fs::path& out) {
        std::string s = out.string();
        read(key, s);
        out = s;
    }

    void read(const char* key, sim::Range& out) {
        std::vector<double> pair{out.lo, out.hi};
        read(key, pair);
        if (pair.size() != 2) throw InvalidArgument(fmt::format("config key '{}.{}' must be [lo, hi]", name_, key));
        out = {pair[0], pair[1]};
    }

    [[nodiscard]] const json* child(const char* key) {
        known_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!known_.contains(item.key())) {
                throw InvalidArgument(fmt::format("unknown config key '{}.{}'", name_, item.key()));
            }
        }
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> known_;
};

json range_json(const sim::Range& r) { return json::array({r.lo, r.hi}); }

sim::DatasetConfig simulator_from_json(const json& j, sim::DatasetConfig c) {
    Section s(j, "simulator");
    s.read("count_rim_plus", c.count_rim_plus);
    s.read("count_rim_minus", c.count_rim_minus);
    s.read("seed", c.seed);
    std::string mode = c.mode == sim::Mode::Paper ? "paper" : "free";
    s.read("mode", mode);
    if (mode != "paper" && mode != "free") throw InvalidArgument("simulator.mode must be 'paper' or 'free'");
    c.mode = mode == "paper" ? sim::Mode::Paper : sim::Mode::Free;
    std::vector<int> dims{c.geometry.dims.nx, c.geometry.dims.ny, c.geometry.dims.nz};
    std::vector<double> spacing{c.geometry.spacing.sx, c.geometry.spacing.sy, c.geometry.spacing.sz};
    s.read("dims", dims);
    s.read("spacing", spacing);
    if (dims.size() != 3 || spacing.size() != 3) throw InvalidArgument("simulator.dims and spacing need 3 entries");
    c.geometry = {{dims[0], dims[1], dims[2]}, {spacing[0], spacing[1], spacing[2]}};
    s.read("radius", c.radius);
    s.read("thickness", c.thickness);
    s.read("rim_value", c.rim_value);
    s.read("core_value", c.core_value);
    s.read("noise_sigma", c.noise_sigma);
    s.read("p_partial", c.p_partial);
    s.read("p_oval", c.p_oval);
    s.read("p_vein", c.p_vein);
    s.read("partial_fraction", c.partial_fraction);
    s.read("oval_scale", c.oval_scale);
    s.read("vein_radius", c.vein_radius);
    s.read("vein_value", c.vein_value);
    if (const json* bg = s.child("background")) {
        Section b(*bg, "simulator.background");
        b.read("amplitude", c.background.amplitude);
        b.read("feature_mm", c.background.feature_mm);
        b.read("octaves", c.background.octaves);
        b.finish();
    }
    s.finish();
    return c;
}

json simulator_json(const sim::DatasetConfig& c) {
    return {{"count_rim_plus", c.count_rim_plus},
            {"count_rim_minus", c.count_rim_minus},
            {"seed", c.seed},
            {"mode", c.mode == sim::Mode::Paper ? "paper" : "free"},
            {"dims", {c.geometry.dims.nx, c.geometry.dims.ny, c.geometry.dims.nz}},
            {"spacing", {c.geometry.spacing.sx, c.geometry.spacing.sy, c.geometry.spacing.sz}},
            {"radius", range_json(c.radius)},
            {"thickness", range_json(c.thickness)},
            {"rim_value", range_json(c.rim_value)},
            {"core_value", range_json(c.core_value)},
            {"noise_sigma", range_json(c.noise_sigma)},
            {"p_partial", c.p_partial},
            {"p_oval", c.p_oval},
            {"p_vein", c.p_vein},
            {"partial_fraction", range_json(c.partial_fraction)},
            {"oval_scale", range_json(c.oval_scale)},
            {"vein_radius", range_json(c.vein_radius)},
            {"vein_value", range_json(c.vein_value)},
            {"background",
             {{"amplitude", c.background.amplitude},
              {"feature_mm", c.background.feature_mm},
              {"octaves", c.background.octaves}}}};
}

gbt::BoostParams boost_from_json(const json& j, gbt::BoostParams p) {
    Section s(j, "boost");
    s.read("n_trees", p.n_trees);
    s.read("max_depth", p.max_depth);
    s.read("learning_rate", p.learning_rate);
    s.read("lambda", p.lambda);
    s.read("min_child_weight", p.min_child_weight);
    s.read("positive_weight", p.positive_weight);
    s.read("base_score", p.base_score);
    s.finish();
    return p;
}

json boost_json(const gbt::BoostParams& p) {
    return {{"n_trees", p.n_trees},
            {"max_depth", p.max_depth},
            {"learning_rate", p.learning_rate},
            {"lambda", p.lambda},
            {"min_child_weight", p.min_child_weight},
            {"positive_weight", p.positive_weight},
            {"base_score", p.base_score}};
}

std::string format_number(double v) { return fmt::format("{}", v); }

} // namespace

void PipelineConfig::validate() const {
    if (simulator.count_rim_plus < 0 || simulator.count_rim_minus < 0) {
        throw InvalidArgument("simulator counts must be >= 0");
    }
    simulator.geometry.validate();
    levelset.validate();
    boost.validate();
    if (!(evaluation.split_ratio > 0.0 && evaluation.split_ratio < 1.0)) {
        throw InvalidArgument("evaluation.split_ratio must lie in (0, 1)");
    }
    if (evaluation.folds < 2) throw InvalidArgument("evaluation.folds must be >= 2");
    if (evaluation.lesions_per_subject < 1) throw InvalidArgument("evaluation.lesions_per_subject must be >= 1");
    if (service.port < 0 || service.port > 65535) throw InvalidArgument("service.port must lie in [0, 65535]");
    if (service.threads < 1) throw InvalidArgument("service.threads must be >= 1");
    if (jobs < 1) throw InvalidArgument("jobs must be >= 1");
}

seg::LevelSetParams levelset_from_json(const json& j, seg::LevelSetParams p) {
    Section s(j, "levelset");
    s.read("mu", p.mu);
    s.read("v", p.v);
    s.read("epsilon", p.epsilon);
    s.read("w", p.w);
    s.read("dt", p.dt);
    s.read("eta", p.eta);
    s.read("max_iters", p.max_iters);
    s.read("tol", p.tol);
    s.read("fidelity_exponent", p.fidelity_exponent);
    s.read("record_energy", p.record_energy);
    s.finish();
    return p;
}

json to_json(const seg::LevelSetParams& p) {
    return {{"mu", p.mu},   {"v", p.v},         {"epsilon", p.epsilon}, {"w", p.w},
            {"dt", p.dt},   {"eta", p.eta},     {"max_iters", p.max_iters}, {"tol", p.tol},
            {"fidelity_exponent", p.fidelity_exponent}, {"record_energy", p.record_energy}};
}

PipelineConfig config_from_json(const json& j, PipelineConfig c) {
    Section s(j, "config");
    s.read("dataset_dir", c.dataset_dir);
    s.read("output_dir", c.output_dir);
    s.read("model_path", c.model_path);
    s.read("jobs", c.jobs);
    if (const json* sim = s.child("simulator")) c.simulator = simulator_from_json(*sim, c.simulator);
    if (const json* ls = s.child("levelset")) c.levelset = levelset_from_json(*ls, c.levelset);
    if (const json* b = s.child("boost")) c.boost = boost_from_json(*b, c.boost);
    if (const json* e = s.child("evaluation")) {
        Section ev(*e, "evaluation");
        ev.read("split_ratio", c.evaluation.split_ratio);
        ev.read("split_seed", c.evaluation.split_seed);
        ev.read("folds", c.evaluation.folds);
        ev.read("cv_seed", c.evaluation.cv_seed);
        ev.read("lesions_per_subject", c.evaluation.lesions_per_subject);
        ev.read("threshold", c.evaluation.threshold);
        ev.finish();
    }
    if (const json* sv = s.child("service")) {
        Section svc(*sv, "service");
        svc.read("host", c.service.host);
        svc.read("port", c.service.port);
        svc.read("threads", c.service.threads);
        svc.finish();
    }
    s.finish();
    return c;
}

json to_json(const PipelineConfig& c) {
    return {{"dataset_dir", c.dataset_dir.string()},
            {"output_dir", c.output_dir.string()},
            {"model_path", c.model_path.string()},
            {"jobs", c.jobs},
            {"simulator", simulator_json(c.simulator)},
            {"levelset", to_json(c.levelset)},
            {"boost", boost_json(c.boost)},
            {"evaluation",
             {{"split_ratio", c.evaluation.split_ratio},
              {"split_seed", c.evaluation.split_seed},
              {"folds", c.evaluation.folds},
              {"cv_seed", c.evaluation.cv_seed},
              {"lesions_per_subject", c.evaluation.lesions_per_subject},
              {"threshold", c.evaluation.threshold}}},
            {"service", {{"host", c.service.host}, {"port", c.service.port}, {"threads", c.service.threads}}}};
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("{}: cannot open config", path.string()));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
    try {
        return config_from_json(j);
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::optional<fs::path> config_path_from_env() {
    const char* value = std::getenv("RIMLAB_CONFIG");
    if (value == nullptr || *value == '\0') return std::nullopt;
    return fs::path(value);
}

LesionData load_lesion(const sim::DatasetManifest& manifest, const sim::ManifestEntry& entry) {
    LesionData d;
    d.entry = entry;
    d.volume = rvol::load_volume(manifest.base_dir / entry.volume_file);
    d.mask = rvol::load_mask(manifest.base_dir / entry.mask_file);
    require_same_geometry(d.volume.geometry(), d.mask.geometry(), entry.id.c_str());
    if (entry.rim_file) {
        d.rim = rvol::load_mask(manifest.base_dir / *entry.rim_file);
        require_same_geometry(d.rim->geometry(), d.mask.geometry(), entry.id.c_str());
    }
    return d;
}

SegmentOutcome segment_lesion(const Volume3D& volume, const Mask3D& mask, const seg::LevelSetParams& params,
                              const Mask3D* ground_truth) {
    require_same_geometry(volume.geometry(), mask.geometry(), "segment");
    if (ground_truth != nullptr) require_same_geometry(ground_truth->geometry(), mask.geometry(), "segment");
    SegmentOutcome out;
    const auto start = std::chrono::steady_clock::now();
    out.result = seg::rimseg(volume, mask, params);
    out.solver_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (ground_truth != nullptr) out.dice = eval::dice(out.result.high_mask, *ground_truth);
    return out;
}

json convergence_json(const SegmentOutcome& o) {
    const auto& r = o.result;
    json j{{"c1", r.c1},
           {"c2", r.c2},
           {"c1_ppb", r.c1_ppb},
           {"c2_ppb", r.c2_ppb},
           {"iterations", r.iterations},
           {"converged", r.converged},
           {"degenerate", r.degenerate},
           {"final_energy", r.final_energy}};
    j["dice"] = o.dice ? json(*o.dice) : json(nullptr);
    if (!r.energy_trace.empty()) j["energy_trace"] = r.energy_trace;
    return j;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("{}: cannot open for writing", path.string()));
    out << j.dump(2) << '\n';
    if (!out) throw IoError(fmt::format("{}: write failed", path.string()));
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& work) {
    const auto workers = static_cast<std::size_t>(std::max(1, jobs));
    if (workers == 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) work(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        while (!failed) {
            const std::size_t i = next++;
            if (i >= count) return;
            try {
                work(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < std::min(workers, count); ++t) threads.emplace_back(run);
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

std::vector<SegmentRow> segment_dataset(const sim::DatasetManifest& manifest, const seg::LevelSetParams& params,
                                        const fs::path& out_dir, int jobs) {
    params.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError(fmt::format("{}: cannot create directory: {}", out_dir.string(), ec.message()));

    std::vector<SegmentRow> rows(manifest.entries.size());
    parallel_for(manifest.entries.size(), jobs, [&](std::size_t i) {
        const auto& entry = manifest.entries[i];
        LesionData lesion;
        try {
            lesion = load_lesion(manifest, entry);
        } catch (const Error& e) {
            throw Error(fmt::format("lesion {}: {}", entry.id, e.what()));
        }
        const auto outcome = segment_lesion(lesion.volume, lesion.mask, params, lesion.rim ? &*lesion.rim : nullptr);
        rvol::save(out_dir / (entry.id + "_high.rvol"), outcome.result.high_mask);
        rvol::save(out_dir / (entry.id + "_low.rvol"), outcome.result.low_mask);
        write_json(out_dir / (entry.id + "_convergence.json"), convergence_json(outcome));
        rows[i] = {entry.id, entry.label, outcome.dice, outcome.result.iterations, outcome.result.converged,
                   outcome.result.degenerate};
    });
    write_segment_csv(out_dir / "segment.csv", rows);
    return rows;
}

void write_segment_csv(const fs::path& path, const std::vector<SegmentRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("{}: cannot open for writing", path.string()));
    out << "id,label,dice,iterations,converged,degenerate\n";
    for (const auto& r : rows) {
        out << r.id << ',' << static_cast<int>(r.label) << ',' << (r.dice ? format_number(*r.dice) : std::string{})
            << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << ',' << (r.degenerate ? 1 : 0) << '\n';
    }
    if (!out) throw IoError(fmt::format("{}: write failed", path.string()));
}

std::optional<double> mean_dice(const std::vector<SegmentRow>& rows) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
        if (!r.dice) continue;
        sum += *r.dice;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

fs::path weight_dir(const fs::path& out_dir, double w) { return out_dir / fmt::format("w_{}", w); }

FeatureRun extract_features(const sim::DatasetManifest& manifest, const fs::path& seg_dir, int jobs) {
    FeatureRun run;
    const auto& entries = manifest.entries;
    std::vector<char> present(entries.size(), 0);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& id = entries[i].id;
        present[i] = fs::exists(seg_dir / (id + "_high.rvol")) && fs::exists(seg_dir / (id + "_low.rvol"));
        if (!present[i]) run.missing.push_back(id);
    }

    std::vector<feat::RimSetVector> vectors(entries.size());
    parallel_for(entries.size(), jobs, [&](std::size_t i) {
        if (!present[i]) return;
        const auto& entry = entries[i];
        try {
            const auto lesion = load_lesion(manifest, entry);
            const auto high = rvol::load_mask(seg_dir / (entry.id + "_high.rvol"));
            const auto low = rvol::load_mask(seg_dir / (entry.id + "_low.rvol"));
            auto v = feat::extract_rimset(lesion.volume, lesion.mask, high, low);
            v.id = entry.id;
            v.label = entry.label;
            vectors[i] = std::move(v);
        } catch (const Error& e) {
            throw Error(fmt::format("lesion {}: {}", entry.id, e.what()));
        }
    });
    run.table.names = feat::feature_names();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (present[i]) run.table.add(vectors[i]);
    }
    return run;
}

feat::FeatureTable subset(const feat::FeatureTable& table, const std::vector<std::size_t>& rows) {
    feat::FeatureTable out;
    out.names = table.names;
    for (std::size_t r : rows) {
        out.ids.push_back(table.ids.at(r));
        out.labels.push_back(table.labels.at(r));
        out.rows.push_back(table.rows.at(r));
    }
    return out;
}

std::pair<feat::FeatureTable, feat::FeatureTable> split_table(const feat::FeatureTable& table, double ratio,
                                                              std::uint64_t seed) {
    const auto [train, test] = sim::stratified_split(table.labels, ratio, seed);
    return {subset(table, train), subset(table, test)};
}

} // namespace rimlab::pipeline
