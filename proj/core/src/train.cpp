#include "kcal/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "kcal/error.hpp"
#include "kcal/image.hpp"
#include "kcal/parallel.hpp"
#include "kcal/rng.hpp"

namespace kcal {
namespace {

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

struct BatchScratch {
    std::vector<Tensor3> images;
    std::vector<double> targets;
    std::vector<int> classes;
    std::vector<FloatMap> hsms;
};

void gather_batch(const Dataset& set, const std::vector<std::size_t>& order, std::size_t begin,
                  std::size_t end, bool want_hsms, BatchScratch& scratch) {
    scratch.images.clear();
    scratch.targets.clear();
    scratch.classes.clear();
    scratch.hsms.clear();
    for (std::size_t i = begin; i < end; ++i) {
        const Sample& s = set.samples[order[i]];
        scratch.images.push_back(s.image);
        scratch.targets.push_back(s.target);
        scratch.classes.push_back(s.class_index);
        if (want_hsms) scratch.hsms.push_back(*s.hsm);
    }
}

double validation_metric(const ModelGraph& model, const Dataset& val, SelectMetric metric,
                         int threads) {
    if (metric == SelectMetric::val_logloss) return mean_logloss(model, val, threads);
    MetricsReport r = evaluate(model, val, threads);
    return metric == SelectMetric::val_mae ? r.mae : r.rmse;
}

} // namespace

std::string task_name(TaskKind task) {
    switch (task) {
        case TaskKind::calories: return "calories";
        case TaskKind::mass: return "mass";
        case TaskKind::classification: return "classification";
    }
    return "calories";
}

TaskKind task_from_name(const std::string& name) {
    if (name == "calories") return TaskKind::calories;
    if (name == "mass") return TaskKind::mass;
    if (name == "classification") return TaskKind::classification;
    fail(errc::invalid_config, "unknown task '" + name + "'");
}

void TrainConfig::validate() const {
    if (epochs < 1) fail(errc::invalid_config, "epochs must be >= 1");
    if (batch_size < 1) fail(errc::invalid_config, "batch_size must be >= 1");
    if (!(learning_rate > 0.0)) fail(errc::invalid_config, "learning_rate must be positive");
    if (loss.is_cyborg() && task != TaskKind::calories)
        fail(errc::invalid_config, "cyborg losses apply only to the calorie task");
    if (task == TaskKind::classification) {
        if (loss.kind != LossKind::cross_entropy)
            fail(errc::invalid_config, "classification trains with cross_entropy");
        if (select_metric != SelectMetric::val_logloss)
            fail(errc::invalid_config, "classification selects on val_logloss");
    } else {
        if (loss.kind == LossKind::cross_entropy)
            fail(errc::invalid_config, "cross_entropy needs the classification task");
        if (select_metric == SelectMetric::val_logloss)
            fail(errc::invalid_config, "val_logloss needs the classification task");
    }
    if (loss.kind == LossKind::cyborg_weighted && !(loss.alpha >= 0.0 && loss.alpha <= 1.0))
        fail(errc::alpha_out_of_range, "alpha must lie in [0,1]");
}

Dataset assemble_dataset(const Manifest& manifest, const AssembleOptions& options) {
    Dataset out;
    out.class_labels = options.class_labels;
    out.samples.resize(manifest.size());

    parallel_for(manifest.size(), options.threads, [&](std::size_t i) {
        const ManifestRecord& rec = manifest.records[i];
        Sample s;
        s.id = rec.image_path;
        s.image = load_image(manifest.image_file(i));

        switch (options.task) {
            case TaskKind::calories: s.target = rec.calories; break;
            case TaskKind::mass:
                if (!rec.mass)
                    fail(errc::task_mismatch, "record " + rec.image_path + " has no mass label");
                s.target = *rec.mass;
                break;
            case TaskKind::classification: {
                if (!rec.class_label)
                    fail(errc::task_mismatch, "record " + rec.image_path + " has no class label");
                auto it = std::find(out.class_labels.begin(), out.class_labels.end(),
                                    *rec.class_label);
                if (it == out.class_labels.end())
                    fail(errc::task_mismatch,
                         "label '" + *rec.class_label + "' missing from the label set");
                s.class_index = static_cast<int>(it - out.class_labels.begin());
                break;
            }
        }

        if (options.build_hsms && rec.annotation_path) {
            Annotation ann =
                read_annotation(manifest.resolve(*rec.annotation_path), s.image.h, s.image.w);
            s.hsm = build_hsm(ann, options.heatmap).values;
        }
        out.samples[i] = std::move(s);
    });
    return out;
}

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& val_set,
                  ModelGraph model, int threads) {
    config.validate();
    if (train_set.size() == 0 || val_set.size() == 0)
        fail(errc::empty_dataset, "train and validation sets must be non-empty");

    const bool cyborg = config.loss.is_cyborg();
    if (cyborg) {
        for (const Sample& s : train_set.samples)
            if (!s.hsm)
                fail(errc::missing_hsm, "sample " + s.id + " has no saliency annotation");
    }

    auto views = model.params();
    std::vector<std::vector<float>*> param_ptrs;
    std::vector<std::size_t> sizes;
    for (auto& v : views) {
        param_ptrs.push_back(v.values);
        sizes.push_back(v.values->size());
    }
    OptimizerState opt;
    opt.init(sizes, config.optimizer, config.learning_rate);

    TrainResult result;
    double best_metric = std::numeric_limits<double>::infinity();
    const std::size_t n = train_set.size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    BatchScratch scratch;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        SplitMix64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = n - 1; i > 0; --i) {
            std::size_t j = rng.next_below(i + 1);
            std::swap(order[i], order[j]);
        }

        double sum_total = 0.0, sum_lm = 0.0, sum_lc = 0.0;
        for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(config.batch_size)) {
            std::size_t end = std::min(n, begin + static_cast<std::size_t>(config.batch_size));
            gather_batch(train_set, order, begin, end, cyborg, scratch);

            Batch batch;
            batch.images = scratch.images;
            batch.targets = scratch.targets;
            batch.class_targets = scratch.classes;
            batch.hsms = scratch.hsms;

            BackwardResult bw;
            try {
                bw = backward(model, batch, config.loss, threads);
            } catch (const error& e) {
                if (e.code() == errc::non_finite_loss)
                    fail(errc::diverged_loss,
                         "loss diverged at epoch " + std::to_string(epoch));
                throw;
            }
            opt.apply(param_ptrs, bw.grads.by_param);

            double nb = static_cast<double>(end - begin);
            sum_total += bw.loss.total * nb;
            sum_lm += bw.loss.l_m * nb;
            sum_lc += bw.loss.l_c * nb;
        }

        double val = validation_metric(model, val_set, config.select_metric, threads);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.total = sum_total / static_cast<double>(n);
        rec.l_m = sum_lm / static_cast<double>(n);
        rec.l_c = sum_lc / static_cast<double>(n);
        rec.val_metric = val;
        result.history.epochs.push_back(rec);

        if (val < best_metric) {
            best_metric = val;
            result.best_model = model;
            result.history.best_epoch = epoch;
            result.best_meta.task = task_name(config.task);
            result.best_meta.epoch = epoch;
            result.best_meta.validation_metric = val;
            result.best_meta.class_labels = train_set.class_labels;
        }
    }
    return result;
}

std::vector<double> predict(const ModelGraph& model, const Dataset& dataset, int threads) {
    if (model.head.kind != HeadKind::regression)
        fail(errc::task_mismatch, "predict needs a regression model");
    std::vector<double> preds(dataset.size());
    parallel_for(dataset.size(), threads, [&](std::size_t i) {
        std::span<const Tensor3> one(&dataset.samples[i].image, 1);
        preds[i] = forward(model, one, 1).predictions[0][0];
    });
    return preds;
}

MetricsReport evaluate(const ModelGraph& model, const Dataset& dataset, int threads) {
    if (dataset.size() == 0) fail(errc::empty_dataset, "cannot evaluate an empty dataset");
    if (model.head.kind != HeadKind::regression)
        fail(errc::task_mismatch, "MAE/RMSE need a regression model");

    std::vector<double> preds = predict(model, dataset, threads);
    std::vector<double> targets(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) targets[i] = dataset.samples[i].target;

    MetricsReport r;
    r.mae = mae(preds, targets);
    r.rmse = rmse(preds, targets);
    r.n_samples = static_cast<int>(dataset.size());
    return r;
}

double mean_logloss(const ModelGraph& model, const Dataset& dataset, int threads) {
    if (dataset.size() == 0) fail(errc::empty_dataset, "cannot evaluate an empty dataset");
    if (model.head.kind != HeadKind::classification)
        fail(errc::task_mismatch, "log loss needs a classification model");
    std::vector<double> losses(dataset.size());
    parallel_for(dataset.size(), threads, [&](std::size_t i) {
        std::span<const Tensor3> one(&dataset.samples[i].image, 1);
        auto probs = forward(model, one, 1).predictions[0];
        losses[i] = categorical_crossentropy(probs, dataset.samples[i].class_index);
    });
    double acc = 0.0;
    for (double l : losses) acc += l;
    return acc / static_cast<double>(dataset.size());
}

FinetuneResult pretrain_then_finetune(const TrainConfig& pre_config,
                                      const TrainConfig& fine_config, const Dataset& pre_train,
                                      const Dataset& pre_val, const Dataset& fine_train,
                                      const Dataset& fine_val, const BackboneSpec& spec,
                                      int threads) {
    if (pre_config.task != TaskKind::classification && pre_config.task != TaskKind::mass)
        fail(errc::invalid_config, "pretraining task must be classification or mass");
    if (fine_config.task != TaskKind::calories)
        fail(errc::invalid_config, "fine-tuning task must be calories");
    pre_config.validate();
    fine_config.validate();

    ModelGraph model;
    if (pre_config.task == TaskKind::classification) {
        int n_labels = static_cast<int>(pre_train.class_labels.size());
        if (n_labels < 2) fail(errc::invalid_config, "classification needs >= 2 labels");
        model = make_model(spec, HeadKind::classification, n_labels, pre_config.seed);
    } else {
        model = make_model(spec, HeadKind::regression, 1, pre_config.seed);
    }

    FinetuneResult out;
    out.pretrain = train(pre_config, pre_train, pre_val, std::move(model), threads);

    Head new_head = make_head(HeadKind::regression, 1, spec.feature_channels(),
                              derive_seed(fine_config.seed, 0x4ead));
    ModelGraph swapped = swap_head(out.pretrain.best_model, std::move(new_head));
    out.handoff_backbone_checksum = swapped.backbone_checksum();
    if (out.handoff_backbone_checksum != out.pretrain.best_model.backbone_checksum())
        fail(errc::head_swap_mismatch, "backbone changed across the head swap");

    out.finetune = train(fine_config, fine_train, fine_val, std::move(swapped), threads);
    return out;
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(errc::unwritable_path, "cannot write history: " + path.string());
    out << "epoch,total_loss,l_m,l_c,val_metric\n";
    for (const EpochRecord& rec : history.epochs)
        out << rec.epoch << ',' << format_double(rec.total) << ',' << format_double(rec.l_m)
            << ',' << format_double(rec.l_c) << ',' << format_double(rec.val_metric) << "\n";
}

} // namespace kcal
