#pragma once

// Reference convolutional backbone ("TinyCNN") with swappable dense heads.
// Blocks are conv 3x3 (same padding) -> ReLU -> 2x2 average pool; the final
// feature maps feed a global average pool and a dense head. The model
// saliency map (MSM) is the head-weighted sum of the final feature maps,
// min-max normalized; gradients flow through both the prediction path and
// the MSM path.
//
// Parameters are stored as float32 (the checkpoint blob format) while all
// forward/backward arithmetic runs in double.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kcal/heatmap.hpp"
#include "kcal/loss.hpp"
#include "kcal/tensor.hpp"

namespace kcal {

struct BackboneSpec {
    int input_h = 64;
    int input_w = 64;
    int input_c = 3;
    std::vector<int> channels = {8, 16, 32}; // one conv block per entry

    int blocks() const { return static_cast<int>(channels.size()); }
    int cam_h() const { return input_h >> blocks(); }
    int cam_w() const { return input_w >> blocks(); }
    int feature_channels() const { return channels.back(); }

    // input dims must be divisible by 2^blocks and leave at least 1x1 maps
    void validate() const;
    std::string describe() const; // e.g. "tinycnn-8x16x32/64x64"
};

enum class HeadKind { regression, classification };

struct Head {
    HeadKind kind = HeadKind::regression;
    int units = 1;        // regression: exactly 1; classification: n >= 2
    int in_features = 0;  // K, the backbone's final channel count
    std::vector<float> weight; // units x in_features, row-major
    std::vector<float> bias;   // units
};

// Fan-in-scaled uniform init, seeded.
Head make_head(HeadKind kind, int units, int in_features, std::uint64_t seed);

struct ConvBlock {
    int c_in = 0;
    int c_out = 0;
    std::vector<float> weight; // c_out x 3 x 3 x c_in
    std::vector<float> bias;   // c_out
};

struct ParamView {
    std::string name;
    std::vector<int> shape;
    std::vector<float>* values;
};
struct ConstParamView {
    std::string name;
    std::vector<int> shape;
    const std::vector<float>* values;
};

struct ModelGraph {
    BackboneSpec spec;
    std::vector<ConvBlock> blocks;
    Head head;

    // fixed order: conv1.weight, conv1.bias, ..., head.weight, head.bias
    std::vector<ParamView> params();
    std::vector<ConstParamView> params() const;
    std::size_t param_count() const;

    std::uint64_t backbone_checksum() const; // over conv parameter bits
    std::uint64_t checksum() const;          // over all parameter bits
};

ModelGraph make_model(const BackboneSpec& spec, HeadKind kind, int units, std::uint64_t seed);

struct ForwardResult {
    // per sample: regression -> length 1; classification -> class probabilities
    std::vector<std::vector<double>> predictions;
    // per sample: final conv feature maps, cam_h x cam_w x K
    std::vector<Tensor3> feature_maps;
};

ForwardResult forward(const ModelGraph& model, std::span<const Tensor3> batch, int threads = 1);

struct Batch {
    std::span<const Tensor3> images;
    std::span<const double> targets;    // regression targets (calories / mass)
    std::span<const int> class_targets; // classification targets
    std::span<const FloatMap> hsms;     // human saliency maps; required by cyborg losses
};

struct Gradients {
    std::vector<std::vector<double>> by_param; // aligned with ModelGraph::params()
};

struct BackwardResult {
    LossValue loss;
    Gradients grads;
};

// Exact analytic gradients of the selected total loss, including the
// MSM-dependent path of the cyborg losses (through feature maps and head
// weights). Reductions run in sample-index order for any thread count.
BackwardResult backward(const ModelGraph& model, const Batch& batch, const LossSpec& loss,
                        int threads = 1);

// Loss components only (validation / logging).
LossValue batch_loss(const ModelGraph& model, const Batch& batch, const LossSpec& loss,
                     int threads = 1);

// Head-weighted sum of feature maps, min-max normalized. Regression heads
// only; the bias is spatially constant and excluded.
SaliencyMap extract_msm(const Tensor3& feature_maps, const Head& head);

// Returns a copy with the new head; backbone parameters are untouched.
ModelGraph swap_head(const ModelGraph& model, Head new_head);

struct CheckpointMeta {
    std::string task = "calories"; // calories | mass | classification
    int epoch = 0;
    double validation_metric = 0.0;
    std::vector<std::string> class_labels; // classification only
};

// .ckpt format: u32 LE header length, JSON header (arch, named param table,
// metadata, format_version), then a little-endian float32 blob. Round trips
// are bit-exact.
void save_checkpoint(const ModelGraph& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
    ModelGraph model;
    CheckpointMeta meta;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

} // namespace kcal
