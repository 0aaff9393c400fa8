#pragma once

// Two-stage ensemble: frozen regression members whose concatenated outputs
// feed a dense(100) -> ReLU -> dense(1) combiner. Only the combiner trains.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kcal/model.hpp"
#include "kcal/train.hpp"

namespace kcal {

struct Combiner {
    int in_features = 0; // one output per member
    int hidden = 100;
    std::vector<float> w1; // hidden x in_features
    std::vector<float> b1; // hidden
    std::vector<float> w2; // hidden
    std::vector<float> b2; // 1
};

struct EnsembleModel {
    std::vector<ModelGraph> members; // frozen: never updated by combiner training
    Combiner combiner;
};

// Members must each carry a 1-unit regression head; at least two required.
EnsembleModel build_ensemble(std::vector<ModelGraph> members, int hidden = 100,
                             std::uint64_t seed = 0);

// Wires the combiner to reproduce member_index exactly for all inputs:
// relu(x) - relu(-x) == x through the hidden layer.
void set_identity_wiring(EnsembleModel& ensemble, std::size_t member_index);

double combiner_forward(const Combiner& combiner, std::span<const double> features);

// Per-sample member predictions (one row per sample, one column per member).
std::vector<std::vector<double>> member_outputs(const EnsembleModel& ensemble,
                                                std::span<const Tensor3> batch, int threads = 1);

std::vector<double> ensemble_predict(const EnsembleModel& ensemble,
                                     std::span<const Tensor3> batch, int threads = 1);

struct CombinerTrainResult {
    Combiner best_combiner;
    CheckpointMeta best_meta;
    TrainHistory history;
};

// Baseline-MSE training of the combiner only; member outputs are computed
// once up front since members are frozen. Best-epoch selection as in train().
CombinerTrainResult train_combiner(EnsembleModel& ensemble, const TrainConfig& config,
                                   const Dataset& train_set, const Dataset& val_set,
                                   int threads = 1);

MetricsReport evaluate_ensemble(const EnsembleModel& ensemble, const Dataset& dataset,
                                int threads = 1);

struct EnsembleMemberRef {
    std::string path;   // stored as given; relative paths resolve against the
                        // ensemble checkpoint's directory on load
    std::string digest; // fnv1a64 hex of the member checkpoint bytes
};

// Same header+blob layout as model checkpoints; the header lists member
// references and the blob holds only combiner parameters.
void save_ensemble(const EnsembleModel& ensemble, const std::vector<EnsembleMemberRef>& members,
                   const CheckpointMeta& meta, const std::filesystem::path& path);

struct LoadedEnsemble {
    EnsembleModel model;
    CheckpointMeta meta;
    std::vector<EnsembleMemberRef> members;
};
LoadedEnsemble load_ensemble(const std::filesystem::path& path);

// "model" or "ensemble", read from the checkpoint header.
std::string checkpoint_kind(const std::filesystem::path& path);

// fnv1a64 hex digest of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

} // namespace kcal
