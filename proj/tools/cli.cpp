#include "cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rimlab/error.hpp"
#include "rimlab/evaluation.hpp"
#include "rimlab/pipeline.hpp"
#include "rimlab/rvol.hpp"
#include "rimlab/version.hpp"
#include "service.hpp"

namespace rimlab::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using pipeline::PipelineConfig;

template <typename T>
void override_with(const std::optional<T>& flag, T& target) {
    if (flag) target = *flag;
}

void override_with(const std::optional<std::string>& flag, fs::path& target) {
    if (flag) target = *flag;
}

struct LevelSetFlags {
    std::optional<double> mu, v, epsilon, dt, eta, tol;
    std::optional<int> max_iters;

    void add(CLI::App& cmd) {
        cmd.add_option("--mu", mu, "Contour-length weight");
        cmd.add_option("--v", v, "Area weight");
        cmd.add_option("--epsilon", epsilon, "Heaviside smoothing width");
        cmd.add_option("--dt", dt, "Time step");
        cmd.add_option("--eta", eta, "Curvature regulariser (per mm)");
        cmd.add_option("--tol", tol, "Convergence tolerance on mean |delta phi|");
        cmd.add_option("--max-iters", max_iters, "Iteration cap");
    }
    void apply_to(seg::LevelSetParams& p) const {
        override_with(mu, p.mu);
        override_with(v, p.v);
        override_with(epsilon, p.epsilon);
        override_with(dt, p.dt);
        override_with(eta, p.eta);
        override_with(tol, p.tol);
        override_with(max_iters, p.max_iters);
    }
};

struct BoostFlags {
    std::optional<int> n_trees, max_depth;
    std::optional<double> learning_rate, lambda, min_child_weight;

    void add(CLI::App& cmd) {
        cmd.add_option("--n-trees", n_trees, "Boosting rounds");
        cmd.add_option("--max-depth", max_depth, "Maximum tree depth");
        cmd.add_option("--learning-rate", learning_rate, "Shrinkage per round");
        cmd.add_option("--lambda", lambda, "L2 penalty on leaf weights");
        cmd.add_option("--min-child-weight", min_child_weight, "Minimum hessian sum per child");
    }
    void apply_to(gbt::BoostParams& p) const {
        override_with(n_trees, p.n_trees);
        override_with(max_depth, p.max_depth);
        override_with(learning_rate, p.learning_rate);
        override_with(lambda, p.lambda);
        override_with(min_child_weight, p.min_child_weight);
    }
};

fs::path manifest_path(const fs::path& dataset_dir) { return dataset_dir / "manifest.json"; }

void print_metrics(const eval::ConfusionMetrics& m) {
    fmt::print("accuracy {:.4f}  f1 {:.4f}  sensitivity {:.4f}  specificity {:.4f}  errors {}\n", m.accuracy, m.f1,
               m.sensitivity, m.specificity, m.fp + m.fn);
}

std::optional<double> mean_dice_for(const std::vector<pipeline::SegmentRow>& rows, sim::Label label) {
    std::vector<pipeline::SegmentRow> selected;
    for (const auto& r : rows) {
        if (r.label == label) selected.push_back(r);
    }
    return pipeline::mean_dice(selected);
}

std::string format_optional(const std::optional<double>& v) { return v ? fmt::format("{:.4f}", *v) : "n/a"; }

int segment_single(const fs::path& volume_path, const fs::path& mask_path, const std::optional<std::string>& rim_path,
                   const seg::LevelSetParams& params, const fs::path& out_dir) {
    const auto volume = rvol::load_volume(volume_path);
    const auto mask = rvol::load_mask(mask_path);
    std::optional<Mask3D> rim;
    if (rim_path) rim = rvol::load_mask(*rim_path);
    const auto outcome = pipeline::segment_lesion(volume, mask, params, rim ? &*rim : nullptr);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError(fmt::format("{}: cannot create directory: {}", out_dir.string(), ec.message()));
    std::string stem = volume_path.stem().string();
    rvol::save(out_dir / (stem + "_high.rvol"), outcome.result.high_mask);
    rvol::save(out_dir / (stem + "_low.rvol"), outcome.result.low_mask);
    pipeline::write_json(out_dir / (stem + "_convergence.json"), pipeline::convergence_json(outcome));
    pipeline::SegmentRow row{stem,
                             rim ? sim::Label::RimPositive : sim::Label::RimNegative,
                             outcome.dice,
                             outcome.result.iterations,
                             outcome.result.converged,
                             outcome.result.degenerate};
    pipeline::write_segment_csv(out_dir / "segment.csv", {row});
    fmt::print("{}: iterations {} converged {} degenerate {} dice {}\n", stem, row.iterations, row.converged,
               row.degenerate, format_optional(row.dice));
    return kExitOk;
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"rimlab: synthetic QSM rim lesions, rim segmentation, features and classification"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::string> config_flag;
    std::optional<int> jobs;
    app.add_option("--config", config_flag, "JSON config file (default: $RIMLAB_CONFIG)");
    app.add_option("-j,--jobs", jobs, "Worker threads for per-lesion work");

    PipelineConfig config;
    auto load = [&]() {
        std::optional<fs::path> path = config_flag ? std::optional<fs::path>(*config_flag) : pipeline::config_path_from_env();
        if (path) config = pipeline::load_config(*path);
        override_with(jobs, config.jobs);
    };

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Generate the synthetic lesion dataset");
    std::optional<std::string> sim_out;
    std::optional<std::uint64_t> sim_seed;
    std::optional<int> sim_plus, sim_minus;
    std::optional<std::string> sim_mode;
    simulate->add_option("-o,--out", sim_out, "Dataset directory");
    simulate->add_option("--seed", sim_seed, "Global seed");
    simulate->add_option("--count-rim-plus", sim_plus, "Number of rim+ lesions");
    simulate->add_option("--count-rim-minus", sim_minus, "Number of rim- lesions");
    simulate->add_option("--mode", sim_mode, "paper or free")->check(CLI::IsMember({"paper", "free"}));

    // segment
    auto* segment = app.add_subcommand("segment", "Segment lesions into high- and low-value regions");
    std::optional<std::string> seg_dataset, seg_out, seg_volume, seg_mask, seg_rim;
    std::vector<double> seg_weights;
    LevelSetFlags seg_flags;
    segment->add_option("-d,--dataset", seg_dataset, "Dataset directory containing manifest.json");
    segment->add_option("--volume", seg_volume, "Single-lesion mode: volume RVOL");
    segment->add_option("--mask", seg_mask, "Single-lesion mode: lesion mask RVOL");
    segment->add_option("--rim", seg_rim, "Single-lesion mode: optional ground-truth rim RVOL");
    segment->add_option("-o,--out", seg_out, "Output directory");
    segment->add_option("-w,--w", seg_weights, "Distance weight; repeat for a grid (one sub-directory per value)");
    seg_flags.add(*segment);

    // features
    auto* features = app.add_subcommand("features", "Extract the 84-element measurement vector per lesion");
    std::optional<std::string> feat_dataset, feat_seg, feat_out;
    bool allow_partial = false;
    features->add_option("-d,--dataset", feat_dataset, "Dataset directory containing manifest.json");
    features->add_option("-s,--seg-dir", feat_seg, "Directory holding segmentation outputs");
    features->add_option("-o,--out", feat_out, "Feature CSV path");
    features->add_flag("--allow-partial", allow_partial, "Write rows for the lesions that have segmentations");

    // train
    auto* train = app.add_subcommand("train", "Train the boosted-tree classifier");
    std::optional<std::string> train_features, train_model, train_holdout;
    std::optional<double> train_ratio;
    std::optional<std::uint64_t> train_seed;
    bool train_all = false;
    BoostFlags train_flags;
    train->add_option("-f,--features", train_features, "Feature CSV")->required();
    train->add_option("-m,--model", train_model, "Model JSON output");
    train->add_option("--split-ratio", train_ratio, "Training share of the label-stratified split");
    train->add_option("--split-seed", train_seed, "Seed of the split");
    train->add_option("--holdout", train_holdout, "Write the held-out rows to this CSV");
    train->add_flag("--all", train_all, "Train on every row (no split)");
    train_flags.add(*train);

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score a feature CSV with a trained model");
    std::optional<std::string> eval_features, eval_model, eval_report;
    std::optional<double> eval_threshold;
    evaluate->add_option("-f,--features", eval_features, "Feature CSV")->required();
    evaluate->add_option("-m,--model", eval_model, "Model JSON");
    evaluate->add_option("-r,--report", eval_report, "Report JSON output");
    evaluate->add_option("--threshold", eval_threshold, "Decision threshold on the probability");

    // cv
    auto* cv = app.add_subcommand("cv", "Subject-stratified k-fold cross-validation");
    std::optional<std::string> cv_features, cv_out;
    std::optional<int> cv_folds;
    std::optional<std::uint64_t> cv_seed;
    std::optional<std::size_t> cv_lps;
    BoostFlags cv_flags;
    cv->add_option("-f,--features", cv_features, "Feature CSV")->required();
    cv->add_option("-o,--out", cv_out, "Output directory for the report, curves and importance");
    cv->add_option("--folds", cv_folds, "Number of folds");
    cv->add_option("--seed", cv_seed, "Fold assignment seed");
    cv->add_option("--lesions-per-subject", cv_lps, "Lesions grouped into one pseudo-subject");
    cv_flags.add(*cv);

    // importance
    auto* importance = app.add_subcommand("importance", "Ranked measurement importance (split counts)");
    std::optional<std::string> imp_model, imp_report, imp_out;
    bool imp_per_feature = false;
    auto* imp_model_opt = importance->add_option("-m,--model", imp_model, "Model JSON");
    auto* imp_report_opt = importance->add_option("--cv-report", imp_report, "Cross-validation report JSON");
    imp_model_opt->excludes(imp_report_opt);
    importance->add_option("-o,--out", imp_out, "CSV output (default: stdout)");
    importance->add_flag("--per-feature", imp_per_feature, "List every feature instead of aggregated measurements");

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP segmentation service under /v1");
    std::optional<std::string> serve_dataset, serve_host;
    std::optional<int> serve_port, serve_threads;
    LevelSetFlags serve_flags;
    serve->add_option("-d,--dataset", serve_dataset, "Dataset directory containing manifest.json");
    serve->add_option("--host", serve_host, "Bind address");
    serve->add_option("--port", serve_port, "Bind port");
    serve->add_option("--threads", serve_threads, "Request worker threads");
    serve_flags.add(*serve);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        load();

        if (*simulate) {
            override_with(sim_out, config.dataset_dir);
            override_with(sim_seed, config.simulator.seed);
            override_with(sim_plus, config.simulator.count_rim_plus);
            override_with(sim_minus, config.simulator.count_rim_minus);
            if (sim_mode) config.simulator.mode = *sim_mode == "paper" ? sim::Mode::Paper : sim::Mode::Free;
            config.validate();
            const auto manifest = sim::generate_dataset(config.simulator, config.dataset_dir);
            std::size_t plus = 0;
            for (const auto& e : manifest.entries) plus += e.label == sim::Label::RimPositive ? 1 : 0;
            fmt::print("wrote {} lesions ({} rim+, {} rim-) to {}\n", manifest.entries.size(), plus,
                       manifest.entries.size() - plus, manifest_path(config.dataset_dir).string());
            return kExitOk;
        }

        if (*segment) {
            seg_flags.apply_to(config.levelset);
            override_with(seg_dataset, config.dataset_dir);
            override_with(seg_out, config.output_dir);
            if (seg_weights.empty()) seg_weights.push_back(config.levelset.w);
            config.validate();
            const bool single = seg_volume || seg_mask;
            if (single) {
                if (!seg_volume || !seg_mask) throw InvalidArgument("single-lesion mode needs both --volume and --mask");
                if (seg_weights.size() != 1) throw InvalidArgument("single-lesion mode takes one --w");
                auto params = config.levelset;
                params.w = seg_weights.front();
                params.validate();
                return segment_single(*seg_volume, *seg_mask, seg_rim, params, config.output_dir);
            }
            if (seg_rim) throw InvalidArgument("--rim is only valid with --volume and --mask");
            const auto manifest = sim::load_manifest(manifest_path(config.dataset_dir));
            fmt::print("{:>8}  {:>6}  {:>12}  {:>12}\n", "w", "n", "dice(rim+)", "dice(all)");
            for (double w : seg_weights) {
                auto params = config.levelset;
                params.w = w;
                params.validate();
                const auto dir = seg_weights.size() == 1 ? config.output_dir : pipeline::weight_dir(config.output_dir, w);
                const auto rows = pipeline::segment_dataset(manifest, params, dir, config.jobs);
                fmt::print("{:>8}  {:>6}  {:>12}  {:>12}\n", w, rows.size(),
                           format_optional(mean_dice_for(rows, sim::Label::RimPositive)),
                           format_optional(pipeline::mean_dice(rows)));
            }
            return kExitOk;
        }

        if (*features) {
            override_with(feat_dataset, config.dataset_dir);
            const fs::path seg_dir = feat_seg ? fs::path(*feat_seg) : config.output_dir;
            const fs::path out = feat_out ? fs::path(*feat_out) : config.output_dir / "features.csv";
            config.validate();
            const auto manifest = sim::load_manifest(manifest_path(config.dataset_dir));
            const auto run = pipeline::extract_features(manifest, seg_dir, config.jobs);
            if (!run.missing.empty()) {
                fmt::print(stderr, "missing segmentation for {} lesion(s):\n", run.missing.size());
                for (const auto& id : run.missing) fmt::print(stderr, "  {}\n", id);
                if (!allow_partial) {
                    fmt::print(stderr, "no CSV written; pass --allow-partial to keep the remaining rows\n");
                    return kExitPartial;
                }
            }
            feat::write_csv(out, run.table);
            fmt::print("wrote {} rows x {} features to {}\n", run.table.size(), run.table.names.size(), out.string());
            return kExitOk;
        }

        if (*train) {
            train_flags.apply_to(config.boost);
            override_with(train_model, config.model_path);
            override_with(train_ratio, config.evaluation.split_ratio);
            override_with(train_seed, config.evaluation.split_seed);
            config.validate();
            if (train_all && train_holdout) throw InvalidArgument("--holdout makes no sense with --all");
            const auto table = feat::read_csv(fs::path(*train_features));
            feat::FeatureTable fit = table;
            if (!train_all) {
                auto [train_part, test_part] =
                    pipeline::split_table(table, config.evaluation.split_ratio, config.evaluation.split_seed);
                if (train_holdout) feat::write_csv(fs::path(*train_holdout), test_part);
                fit = std::move(train_part);
            }
            const auto model = gbt::train(fit.rows, fit.labels, config.boost, fit.names);
            gbt::save_model(config.model_path, model);
            fmt::print("trained {} trees on {} rows; final training loss {:.6f}; model at {}\n", model.trees.size(),
                       fit.size(), model.loss_trace.back(), config.model_path.string());
            return kExitOk;
        }

        if (*evaluate) {
            override_with(eval_model, config.model_path);
            override_with(eval_threshold, config.evaluation.threshold);
            config.validate();
            const auto model = gbt::load_model(config.model_path);
            const auto table = feat::read_csv(fs::path(*eval_features));
            const auto report = eval::evaluate_holdout(model, table, config.evaluation.threshold);
            if (eval_report) pipeline::write_json(*eval_report, eval::to_json(report));
            fmt::print("{} lesions at threshold {}: ", table.size(), report.threshold);
            print_metrics(report.metrics);
            if (report.curves) {
                fmt::print("roc auc {:.4f}  proc auc {:.4f}  pr auc {:.4f}\n", report.curves->roc_auc,
                           report.curves->proc_auc, report.curves->pr_auc);
            }
            return kExitOk;
        }

        if (*cv) {
            cv_flags.apply_to(config.boost);
            override_with(cv_folds, config.evaluation.folds);
            override_with(cv_seed, config.evaluation.cv_seed);
            override_with(cv_lps, config.evaluation.lesions_per_subject);
            const fs::path out = cv_out ? fs::path(*cv_out) : config.output_dir / "cv";
            config.validate();
            const auto table = feat::read_csv(fs::path(*cv_features));
            const auto report = eval::crossvalidate(table, config.boost, config.evaluation.folds,
                                                    config.evaluation.cv_seed, config.evaluation.lesions_per_subject);
            std::error_code ec;
            fs::create_directories(out, ec);
            if (ec) throw IoError(fmt::format("{}: cannot create directory: {}", out.string(), ec.message()));
            pipeline::write_json(out / "cv_report.json", eval::to_json(report));
            eval::write_curve_csv(out / "mean_roc.csv", report.mean_roc, "fpr", "tpr");
            eval::write_curve_csv(out / "mean_pr.csv", report.mean_pr, "recall", "precision");
            eval::write_importance_csv(out / "importance.csv", report.importance);
            fmt::print("{} folds over {} lesions\n", report.folds.size(), table.size());
            print_metrics(report.pooled);
            fmt::print("roc auc {:.4f}  proc auc {:.4f}  pr auc {:.4f}\n", report.roc_auc, report.proc_auc,
                       report.pr_auc);
            if (report.agreement.pearson) {
                fmt::print("subject rim+ count: pearson {:.3f} [{:.3f}, {:.3f}]  mse {:.3f}\n",
                           *report.agreement.pearson, report.agreement.ci_low, report.agreement.ci_high,
                           report.agreement.mse);
            }
            return kExitOk;
        }

        if (*importance) {
            std::vector<std::vector<double>> per_fold;
            std::vector<std::string> names;
            if (imp_report) {
                std::ifstream in(*imp_report);
                if (!in) throw IoError(fmt::format("{}: cannot open", *imp_report));
                json j;
                try {
                    j = json::parse(in);
                    names = j.at("feature_names").get<std::vector<std::string>>();
                    for (const auto& f : j.at("folds")) per_fold.push_back(f.at("importance").get<std::vector<double>>());
                } catch (const json::exception& e) {
                    throw ParseError(fmt::format("{}: {}", *imp_report, e.what()));
                }
                for (const auto& f : per_fold) {
                    if (f.size() != names.size()) {
                        throw ParseError(fmt::format("{}: fold importance length differs from feature_names", *imp_report));
                    }
                }
            } else {
                override_with(imp_model, config.model_path);
                const auto model = gbt::load_model(config.model_path);
                names = model.feature_names;
                per_fold.push_back(gbt::feature_importance(model));
            }
            std::vector<gbt::ImportanceRow> rows;
            if (imp_per_feature) {
                for (std::size_t i = 0; i < names.size(); ++i) {
                    double sum = 0.0;
                    for (const auto& f : per_fold) sum += f[i];
                    rows.push_back({names[i], sum / static_cast<double>(std::max<std::size_t>(1, per_fold.size()))});
                }
                std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
            } else {
                rows = gbt::aggregate_importance(per_fold, names);
            }
            if (imp_out) {
                eval::write_importance_csv(*imp_out, rows);
            } else {
                fmt::print("measurement,f_score\n");
                for (const auto& r : rows) fmt::print("{},{}\n", r.measurement, r.score);
            }
            return kExitOk;
        }

        if (*serve) {
            serve_flags.apply_to(config.levelset);
            override_with(serve_dataset, config.dataset_dir);
            override_with(serve_host, config.service.host);
            override_with(serve_port, config.service.port);
            override_with(serve_threads, config.service.threads);
            config.validate();
            const auto service = service::Service::from_manifest(manifest_path(config.dataset_dir), config.levelset);
            return service::serve(service, config.service);
        }
    } catch (const Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kExitFailure;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kExitFailure;
    }
    return kExitUsage;
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"rimlab"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace rimlab::cli
