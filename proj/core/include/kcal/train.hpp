#pragma once

// Training loop with epoch-level validation, best-epoch model selection,
// evaluation, and the pretrain -> head swap -> fine-tune recipe.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kcal/heatmap.hpp"
#include "kcal/manifest.hpp"
#include "kcal/model.hpp"
#include "kcal/optim.hpp"

namespace kcal {

enum class TaskKind { calories, mass, classification };

std::string task_name(TaskKind task);
TaskKind task_from_name(const std::string& name);

enum class SelectMetric { val_mae, val_rmse, val_logloss };

struct TrainConfig {
    TaskKind task = TaskKind::calories;
    LossSpec loss;
    int epochs = 30;
    int batch_size = 16;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> init_checkpoint;
    SelectMetric select_metric = SelectMetric::val_mae;

    // cyborg losses only for the calorie task; classification pairs with
    // cross_entropy and val_logloss, regression with mse/cyborg and
    // val_mae/val_rmse
    void validate() const;
};

struct Sample {
    std::string id; // source image path, for error messages
    Tensor3 image;
    double target = 0.0; // calories or grams
    int class_index = -1;
    std::optional<FloatMap> hsm;
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<std::string> class_labels; // closed label set (classification)

    std::size_t size() const { return samples.size(); }
};

struct AssembleOptions {
    TaskKind task = TaskKind::calories;
    bool build_hsms = false; // compile HSMs from annotations at heatmap.cam dims
    HeatmapConfig heatmap;
    std::vector<std::string> class_labels; // classification label set; must cover the data
    int threads = 1;
};

Dataset assemble_dataset(const Manifest& manifest, const AssembleOptions& options);

struct EpochRecord {
    int epoch = 0;
    double total = 0.0;
    double l_m = 0.0;
    double l_c = 0.0;
    double val_metric = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0; // 1-based; minimizes val_metric, earliest on ties
};

struct TrainResult {
    ModelGraph best_model;
    CheckpointMeta best_meta;
    TrainHistory history;
};

// Mini-batch gradient descent on the configured loss; evaluates the
// selection metric on val_set after every epoch and returns the best epoch's
// model. Fully deterministic given (config, datasets, model) for any thread
// count.
TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& val_set,
                  ModelGraph model, int threads = 1);

struct MetricsReport {
    double mae = 0.0;
    double rmse = 0.0;
    int n_samples = 0;
    std::optional<double> improvement_vs_baseline; // percent
};

// MAE/RMSE over the dataset in order; regression models only.
MetricsReport evaluate(const ModelGraph& model, const Dataset& dataset, int threads = 1);

// Per-sample regression predictions in dataset order.
std::vector<double> predict(const ModelGraph& model, const Dataset& dataset, int threads = 1);

// Mean categorical cross-entropy of a classification model over the dataset.
double mean_logloss(const ModelGraph& model, const Dataset& dataset, int threads = 1);

struct FinetuneResult {
    TrainResult pretrain;
    TrainResult finetune;
    std::uint64_t handoff_backbone_checksum = 0; // backbone hash right after the head swap
};

// Trains the pretraining task, swaps the head to regression(1), verifies the
// backbone carried over bit-exactly, then trains the calorie task.
FinetuneResult pretrain_then_finetune(const TrainConfig& pre_config,
                                      const TrainConfig& fine_config, const Dataset& pre_train,
                                      const Dataset& pre_val, const Dataset& fine_train,
                                      const Dataset& fine_val, const BackboneSpec& spec,
                                      int threads = 1);

// CSV schema: epoch,total_loss,l_m,l_c,val_metric
void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

} // namespace kcal
