#pragma once

// Versioned JSON experiment files driving the train/ensemble commands.
// Relative paths inside a file resolve against the file's directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kcal/heatmap.hpp"
#include "kcal/manifest.hpp"
#include "kcal/model.hpp"
#include "kcal/train.hpp"

namespace kcal::cli {

struct DataSection {
    std::filesystem::path train_manifest;
    std::optional<std::filesystem::path> val_manifest; // either this ...
    std::optional<SplitSpec> val_split;                // ... or this
    std::optional<std::filesystem::path> test_manifest;
};

struct PretrainSection {
    DataSection data;
    TrainConfig train;
};

struct EnsembleSection {
    std::vector<std::filesystem::path> members; // model checkpoints
    int hidden = 100;
    std::optional<std::size_t> identity_init_member; // default: random init
};

struct ExperimentConfig {
    std::string name;
    DataSection data;
    BackboneSpec model;
    HeatmapConfig heatmap; // cam dims default to the model's feature-map dims
    TrainConfig train;
    std::optional<PretrainSection> pretrain;
    std::optional<EnsembleSection> ensemble;
    std::filesystem::path output_dir;
};

ExperimentConfig load_experiment(const std::filesystem::path& file);

// Human label for the report table, e.g. "baseline-mse", "cyborg-multiplied",
// "pretrain-classification+cyborg-multiplied".
std::string method_label(const ExperimentConfig& config);

} // namespace kcal::cli
