#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "experiment.hpp"
#include "kcal/ensemble.hpp"
#include "kcal/error.hpp"
#include "kcal/heatmap.hpp"
#include "kcal/image.hpp"
#include "kcal/manifest.hpp"
#include "kcal/model.hpp"
#include "kcal/synthetic.hpp"
#include "kcal/train.hpp"

namespace kcal::cli {
namespace {

using nlohmann::json;

int classify_exit(const error& e, int domain_code) {
    switch (e.code()) {
        case errc::missing_file:
        case errc::dangling_image_path:
        case errc::unwritable_output_dir:
        case errc::unwritable_path:
        case errc::locked_output_dir:
        case errc::io_error: return 2;
        default: return domain_code;
    }
}

std::string fmt2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// one run at a time per output_dir
class OutputLock {
public:
    explicit OutputLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
        std::FILE* f = std::fopen(path_.string().c_str(), "wbx");
        if (!f)
            fail(errc::locked_output_dir,
                 "output dir is locked (remove " + path_.string() + " if stale)");
        std::fclose(f);
    }
    ~OutputLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    std::filesystem::path path_;
};

// artifacts written so far; removed if the run fails partway
struct ArtifactTracker {
    std::vector<std::filesystem::path> written;
    void add(const std::filesystem::path& p) { written.push_back(p); }
    void discard_all() {
        for (const auto& p : written) {
            std::error_code ec;
            std::filesystem::remove(p, ec);
        }
    }
};

struct LoadedData {
    Dataset train;
    Dataset val;
    std::optional<Dataset> test;
};

LoadedData load_data(const DataSection& data, const TrainConfig& train_config,
                     const HeatmapConfig& heatmap, const GlobalOpts& global) {
    Manifest train_manifest = load_manifest(data.train_manifest);
    Manifest val_manifest;
    if (data.val_manifest) {
        val_manifest = load_manifest(*data.val_manifest);
    } else {
        SplitResult split = split_dataset(train_manifest, *data.val_split);
        if (split.empty_train && !global.quiet)
            std::cerr << "warning: EmptyTrain - train split has no records\n";
        train_manifest = std::move(split.train);
        val_manifest = std::move(split.validation);
    }

    std::vector<std::string> labels;
    if (train_config.task == TaskKind::classification)
        labels = collect_class_labels({&train_manifest, &val_manifest});

    AssembleOptions opts;
    opts.task = train_config.task;
    opts.heatmap = heatmap;
    opts.class_labels = labels;
    opts.threads = global.threads;

    LoadedData out;
    opts.build_hsms = train_config.loss.is_cyborg();
    out.train = assemble_dataset(train_manifest, opts);
    opts.build_hsms = false;
    out.val = assemble_dataset(val_manifest, opts);
    if (data.test_manifest) {
        Manifest test_manifest = load_manifest(*data.test_manifest);
        out.test = assemble_dataset(test_manifest, opts);
    }
    return out;
}

json report_test_section(const std::optional<MetricsReport>& test) {
    if (!test) return nullptr;
    return json{{"mae", test->mae}, {"rmse", test->rmse}, {"n_samples", test->n_samples}};
}

void write_report_json(const std::filesystem::path& path, const std::string& name,
                       const std::string& method, const std::string& model_desc,
                       const TrainConfig& config, const TrainHistory& history,
                       double best_val_metric, const std::optional<MetricsReport>& test,
                       const json& artifacts, double wall_seconds) {
    const char* metric_name = config.select_metric == SelectMetric::val_mae     ? "val_mae"
                              : config.select_metric == SelectMetric::val_rmse ? "val_rmse"
                                                                                : "val_logloss";
    json j{{"schema_version", 1},
           {"name", name},
           {"method", method},
           {"model", model_desc},
           {"task", task_name(config.task)},
           {"seed", config.seed},
           {"epochs", static_cast<int>(history.epochs.size())},
           {"select_metric", metric_name},
           {"best_epoch", history.best_epoch},
           {"best_val_metric", best_val_metric},
           {"test", report_test_section(test)},
           {"artifacts", artifacts},
           {"timing", {{"wall_clock_seconds", wall_seconds}}}};
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(errc::unwritable_path, "cannot write report: " + path.string());
    out << j.dump(2) << "\n";
}

} // namespace

int cmd_generate(const GenerateOpts& opts, const GlobalOpts& global) {
    try {
        SyntheticConfig config;
        config.count = opts.count;
        config.seed = opts.seed;
        if (std::sscanf(opts.dims.c_str(), "%dx%d", &config.canvas_h, &config.canvas_w) != 2)
            fail(errc::invalid_config, "bad --dims, expected HxW like 64x64");
        if (opts.style == "train")
            config.style = BackgroundStyle::dark;
        else if (opts.style == "shifted")
            config.style = BackgroundStyle::shifted;
        else
            fail(errc::invalid_config, "unknown style '" + opts.style + "'");

        Manifest manifest = generate_synthetic(config, opts.out);
        if (!global.quiet)
            std::cout << "wrote " << manifest.size() << " scenes to " << opts.out.string()
                      << " (manifest.csv + annotations)\n";
        return 0;
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return classify_exit(e, 2);
    }
}

int cmd_heatmap(const HeatmapOpts& opts, const GlobalOpts& global) {
    try {
        Manifest manifest = load_manifest(opts.manifest);
        std::error_code ec;
        std::filesystem::create_directories(opts.out, ec);
        if (ec) fail(errc::unwritable_output_dir, "cannot create " + opts.out.string());

        HeatmapConfig config;
        config.kernel_size = opts.kernel;
        config.sigma = opts.sigma;
        config.cam_h = opts.cam_h;
        config.cam_w = opts.cam_w;

        int built = 0, skipped = 0;
        for (std::size_t i = 0; i < manifest.size(); ++i) {
            const ManifestRecord& rec = manifest.records[i];
            if (!rec.annotation_path) {
                ++skipped;
                continue;
            }
            ImageDims dims = probe_image_dims(manifest.image_file(i));
            Annotation ann = read_annotation(manifest.resolve(*rec.annotation_path), dims.height,
                                             dims.width);
            SaliencyMap hsm = build_hsm(ann, config);
            std::filesystem::path stem = std::filesystem::path(rec.image_path).stem();
            write_heatmap(hsm, opts.out / (stem.string() + ".hsm.png"));
            ++built;
        }
        if (!global.quiet) {
            std::cout << "built " << built << " heatmaps in " << opts.out.string() << "\n";
            if (skipped > 0)
                std::cerr << "warning: skipped " << skipped << " images without annotations\n";
        }
        return 0;
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return classify_exit(e, 3);
    }
}

int cmd_train(const TrainOpts& opts, const GlobalOpts& global) {
    ArtifactTracker artifacts;
    try {
        ExperimentConfig config = load_experiment(opts.experiment);
        if (config.ensemble)
            fail(errc::invalid_config,
                 "this experiment has an ensemble section; run `ensemble` instead");
        if (global.seed) {
            config.train.seed = *global.seed;
            if (config.pretrain) config.pretrain->train.seed = *global.seed;
        }

        std::error_code ec;
        std::filesystem::create_directories(config.output_dir, ec);
        if (ec)
            fail(errc::unwritable_output_dir, "cannot create " + config.output_dir.string());
        OutputLock lock(config.output_dir);

        auto started = std::chrono::steady_clock::now();
        LoadedData data = load_data(config.data, config.train, config.heatmap, global);

        TrainResult result;
        json artifact_index{{"checkpoint", "best.ckpt"}, {"history", "history.csv"}};

        if (config.pretrain) {
            HeatmapConfig pre_heatmap = config.heatmap;
            LoadedData pre = load_data(config.pretrain->data, config.pretrain->train,
                                       pre_heatmap, global);
            FinetuneResult ft = pretrain_then_finetune(
                config.pretrain->train, config.train, pre.train, pre.val, data.train, data.val,
                config.model, global.threads);

            save_checkpoint(ft.pretrain.best_model, ft.pretrain.best_meta,
                            config.output_dir / "pretrain.ckpt");
            artifacts.add(config.output_dir / "pretrain.ckpt");
            write_history_csv(ft.pretrain.history, config.output_dir / "pretrain_history.csv");
            artifacts.add(config.output_dir / "pretrain_history.csv");
            artifact_index["pretrain_checkpoint"] = "pretrain.ckpt";
            artifact_index["pretrain_history"] = "pretrain_history.csv";
            result = std::move(ft.finetune);
        } else {
            ModelGraph model;
            if (config.train.init_checkpoint) {
                model = load_checkpoint(*config.train.init_checkpoint).model;
            } else if (config.train.task == TaskKind::classification) {
                int n = static_cast<int>(data.train.class_labels.size());
                if (n < 2) fail(errc::invalid_config, "classification needs >= 2 labels");
                model = make_model(config.model, HeadKind::classification, n, config.train.seed);
            } else {
                model = make_model(config.model, HeadKind::regression, 1, config.train.seed);
            }
            result = train(config.train, data.train, data.val, std::move(model), global.threads);
        }

        save_checkpoint(result.best_model, result.best_meta, config.output_dir / "best.ckpt");
        artifacts.add(config.output_dir / "best.ckpt");
        write_history_csv(result.history, config.output_dir / "history.csv");
        artifacts.add(config.output_dir / "history.csv");

        std::optional<MetricsReport> test;
        if (data.test) test = evaluate(result.best_model, *data.test, global.threads);

        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                          .count();
        write_report_json(config.output_dir / "report.json", config.name, method_label(config),
                          config.model.describe(), config.train, result.history,
                          result.best_meta.validation_metric, test, artifact_index, wall);
        artifacts.add(config.output_dir / "report.json");

        if (!global.quiet) {
            std::cout << config.name << ": best epoch " << result.history.best_epoch << ", "
                      << "val metric " << fmt2(result.best_meta.validation_metric) << "\n";
            if (test)
                std::cout << "test MAE " << fmt2(test->mae) << "  RMSE " << fmt2(test->rmse)
                          << "  n " << test->n_samples << "\n";
        }
        return 0;
    } catch (const error& e) {
        artifacts.discard_all();
        std::cerr << "error: " << e.what() << "\n";
        return classify_exit(e, 4);
    }
}

int cmd_eval(const EvalOpts& opts, const GlobalOpts& global) {
    try {
        std::string kind = checkpoint_kind(opts.checkpoint);
        Manifest manifest = load_manifest(opts.manifest);

        MetricsReport report;
        if (kind == "ensemble") {
            LoadedEnsemble ens = load_ensemble(opts.checkpoint);
            AssembleOptions a;
            a.task = task_from_name(ens.meta.task);
            a.threads = global.threads;
            Dataset dataset = assemble_dataset(manifest, a);
            report = evaluate_ensemble(ens.model, dataset, global.threads);
        } else {
            LoadedCheckpoint ckpt = load_checkpoint(opts.checkpoint);
            if (ckpt.model.head.kind != HeadKind::regression)
                fail(errc::task_mismatch,
                     "checkpoint holds a classification model; MAE/RMSE need regression");
            AssembleOptions a;
            a.task = task_from_name(ckpt.meta.task);
            a.threads = global.threads;
            Dataset dataset = assemble_dataset(manifest, a);
            report = evaluate(ckpt.model, dataset, global.threads);
        }

        std::cout << "MAE " << fmt2(report.mae) << "  RMSE " << fmt2(report.rmse) << "  n "
                  << report.n_samples << "\n";
        if (opts.baseline_mae) {
            double imp = relative_improvement(*opts.baseline_mae, report.mae);
            std::cout << "improvement vs baseline " << fmt2(*opts.baseline_mae) << ": "
                      << fmt2(imp) << "%\n";
        }
        return 0;
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return classify_exit(e, 5);
    }
}

int cmd_ensemble(const EnsembleOpts& opts, const GlobalOpts& global) {
    ArtifactTracker artifacts;
    try {
        ExperimentConfig config = load_experiment(opts.experiment);
        if (!config.ensemble)
            fail(errc::invalid_config, "experiment file has no ensemble section");
        if (global.seed) config.train.seed = *global.seed;

        std::error_code ec;
        std::filesystem::create_directories(config.output_dir, ec);
        if (ec)
            fail(errc::unwritable_output_dir, "cannot create " + config.output_dir.string());
        OutputLock lock(config.output_dir);

        auto started = std::chrono::steady_clock::now();

        std::vector<ModelGraph> members;
        std::vector<EnsembleMemberRef> refs;
        for (const auto& path : config.ensemble->members) {
            members.push_back(load_checkpoint(path).model);
            refs.push_back({std::filesystem::absolute(path).string(), file_digest(path)});
        }
        EnsembleModel ensemble =
            build_ensemble(std::move(members), config.ensemble->hidden, config.train.seed);
        if (config.ensemble->identity_init_member)
            set_identity_wiring(ensemble, *config.ensemble->identity_init_member);

        LoadedData data = load_data(config.data, config.train, config.heatmap, global);
        CombinerTrainResult result =
            train_combiner(ensemble, config.train, data.train, data.val, global.threads);

        save_ensemble(ensemble, refs, result.best_meta, config.output_dir / "best.ckpt");
        artifacts.add(config.output_dir / "best.ckpt");
        write_history_csv(result.history, config.output_dir / "history.csv");
        artifacts.add(config.output_dir / "history.csv");

        std::optional<MetricsReport> test;
        if (data.test) test = evaluate_ensemble(ensemble, *data.test, global.threads);

        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                          .count();
        std::string model_desc = "ensemble(" + std::to_string(ensemble.members.size()) + ")";
        write_report_json(config.output_dir / "report.json", config.name, "ensemble", model_desc,
                          config.train, result.history, result.best_meta.validation_metric, test,
                          json{{"checkpoint", "best.ckpt"}, {"history", "history.csv"}}, wall);
        artifacts.add(config.output_dir / "report.json");

        if (!global.quiet) {
            std::cout << config.name << ": best epoch " << result.history.best_epoch << ", "
                      << "val metric " << fmt2(result.best_meta.validation_metric) << "\n";
            if (test)
                std::cout << "test MAE " << fmt2(test->mae) << "  RMSE " << fmt2(test->rmse)
                          << "  n " << test->n_samples << "\n";
        }
        return 0;
    } catch (const error& e) {
        artifacts.discard_all();
        std::cerr << "error: " << e.what() << "\n";
        return classify_exit(e, 4);
    }
}

int cmd_report(const ReportOpts& opts, const GlobalOpts& global) {
    try {
        struct Row {
            std::string method;
            std::string model;
            double mae = 0.0;
            double improvement = 0.0;
            bool is_baseline = false;
            std::filesystem::path dir;
        };

        if (opts.run_dirs.empty()) fail(errc::malformed_run_dir, "no run directories given");

        std::vector<Row> rows;
        for (const auto& dir : opts.run_dirs) {
            std::ifstream in(dir / "report.json");
            if (!in)
                fail(errc::malformed_run_dir, dir.string() + " has no report.json");
            json j;
            try {
                in >> j;
                Row row;
                row.method = j.at("method").get<std::string>();
                row.model = j.at("model").get<std::string>();
                if (j.contains("test") && !j.at("test").is_null())
                    row.mae = j.at("test").at("mae").get<double>();
                else
                    row.mae = j.at("best_val_metric").get<double>();
                row.dir = dir;
                rows.push_back(std::move(row));
            } catch (const json::exception& e) {
                fail(errc::malformed_run_dir,
                     dir.string() + " has a bad report.json: " + e.what());
            }
        }

        std::filesystem::path baseline_dir = opts.baseline ? *opts.baseline : opts.run_dirs[0];
        Row* baseline = nullptr;
        for (auto& row : rows)
            if (std::filesystem::weakly_canonical(row.dir) ==
                std::filesystem::weakly_canonical(baseline_dir))
                baseline = &row;
        if (!baseline)
            fail(errc::malformed_run_dir,
                 "baseline " + baseline_dir.string() + " is not among the run dirs");
        baseline->is_baseline = true;
        double baseline_mae = baseline->mae;
        for (auto& row : rows) row.improvement = relative_improvement(baseline_mae, row.mae);

        std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
            return a.mae < b.mae;
        });

        std::cout << "| method | model | MAE | improvement |\n";
        std::cout << "|---|---|---:|---:|\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const Row& row = rows[i];
            bool best = i == 0;
            std::string method = row.method + (row.is_baseline ? " (baseline)" : "");
            if (best) method = "**" + method + "**";
            std::cout << "| " << method << " | " << row.model << " | " << fmt2(row.mae) << " | "
                      << fmt2(row.improvement) << "% |\n";
        }

        std::ofstream csv(opts.csv, std::ios::binary);
        if (!csv) fail(errc::unwritable_path, "cannot write " + opts.csv.string());
        csv << "method,model,mae,improvement_pct,is_baseline,is_best\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const Row& row = rows[i];
            csv << row.method << ',' << row.model << ',' << row.mae << ',' << row.improvement
                << ',' << (row.is_baseline ? 1 : 0) << ',' << (i == 0 ? 1 : 0) << "\n";
        }
        if (!global.quiet)
            std::cerr << "wrote " << opts.csv.string() << "\n";
        return 0;
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return classify_exit(e, 6);
    }
}

} // namespace kcal::cli
