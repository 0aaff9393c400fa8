#include "kcal/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "kcal/checksum.hpp"
#include "kcal/error.hpp"
#include "kcal/parallel.hpp"
#include "kcal/rng.hpp"

namespace kcal {
namespace {

void init_uniform(std::vector<float>& values, int fan_in, SplitMix64& rng) {
    double bound = std::sqrt(3.0 / fan_in);
    for (auto& v : values) v = static_cast<float>(rng.next_uniform(-bound, bound));
}

struct CombinerGrads {
    std::vector<double> w1, b1, w2, b2;
    explicit CombinerGrads(const Combiner& c)
        : w1(c.w1.size(), 0.0), b1(c.b1.size(), 0.0), w2(c.w2.size(), 0.0), b2(1, 0.0) {}
};

double forward_hidden(const Combiner& c, std::span<const double> features,
                      std::vector<double>& hidden) {
    hidden.assign(static_cast<std::size_t>(c.hidden), 0.0);
    for (int j = 0; j < c.hidden; ++j) {
        double acc = c.b1[static_cast<std::size_t>(j)];
        const float* row = &c.w1[static_cast<std::size_t>(j) * c.in_features];
        for (int k = 0; k < c.in_features; ++k) acc += row[k] * features[static_cast<std::size_t>(k)];
        hidden[static_cast<std::size_t>(j)] = acc > 0.0 ? acc : 0.0;
    }
    double out = c.b2[0];
    for (int j = 0; j < c.hidden; ++j) out += c.w2[static_cast<std::size_t>(j)] * hidden[static_cast<std::size_t>(j)];
    return out;
}

std::vector<std::vector<double>> dataset_features(const EnsembleModel& ensemble,
                                                  const Dataset& set, int threads) {
    std::vector<std::vector<double>> feats(set.size());
    parallel_for(set.size(), threads, [&](std::size_t i) {
        std::span<const Tensor3> one(&set.samples[i].image, 1);
        std::vector<double> f(ensemble.members.size());
        for (std::size_t m = 0; m < ensemble.members.size(); ++m)
            f[m] = forward(ensemble.members[m], one, 1).predictions[0][0];
        feats[i] = std::move(f);
    });
    return feats;
}

double combiner_val_metric(const Combiner& c, const std::vector<std::vector<double>>& feats,
                           const Dataset& set, SelectMetric metric) {
    std::vector<double> preds(set.size());
    std::vector<double> targets(set.size());
    std::vector<double> hidden;
    for (std::size_t i = 0; i < set.size(); ++i) {
        preds[i] = forward_hidden(c, feats[i], hidden);
        targets[i] = set.samples[i].target;
    }
    return metric == SelectMetric::val_rmse ? rmse(preds, targets) : mae(preds, targets);
}

} // namespace

EnsembleModel build_ensemble(std::vector<ModelGraph> members, int hidden, std::uint64_t seed) {
    if (members.size() < 2)
        fail(errc::too_few_members, "an ensemble needs at least 2 members, got " +
                                        std::to_string(members.size()));
    for (std::size_t i = 0; i < members.size(); ++i)
        if (members[i].head.kind != HeadKind::regression || members[i].head.units != 1)
            fail(errc::non_regression_member,
                 "member " + std::to_string(i) + " does not have a 1-unit regression head");
    if (hidden < 2) fail(errc::invalid_config, "combiner needs at least 2 hidden units");

    EnsembleModel e;
    e.members = std::move(members);
    e.combiner.in_features = static_cast<int>(e.members.size());
    e.combiner.hidden = hidden;
    e.combiner.w1.assign(static_cast<std::size_t>(hidden) * e.combiner.in_features, 0.0f);
    e.combiner.b1.assign(static_cast<std::size_t>(hidden), 0.0f);
    e.combiner.w2.assign(static_cast<std::size_t>(hidden), 0.0f);
    e.combiner.b2.assign(1, 0.0f);

    SplitMix64 rng(derive_seed(seed, 0xe5e));
    init_uniform(e.combiner.w1, e.combiner.in_features, rng);
    init_uniform(e.combiner.w2, hidden, rng);
    return e;
}

void set_identity_wiring(EnsembleModel& ensemble, std::size_t member_index) {
    Combiner& c = ensemble.combiner;
    if (member_index >= static_cast<std::size_t>(c.in_features))
        fail(errc::index_out_of_range, "member index out of range");
    std::fill(c.w1.begin(), c.w1.end(), 0.0f);
    std::fill(c.b1.begin(), c.b1.end(), 0.0f);
    std::fill(c.w2.begin(), c.w2.end(), 0.0f);
    c.b2[0] = 0.0f;
    // h0 = relu(x), h1 = relu(-x), output = h0 - h1 == x for every sign
    c.w1[member_index] = 1.0f;
    c.w1[static_cast<std::size_t>(c.in_features) + member_index] = -1.0f;
    c.w2[0] = 1.0f;
    c.w2[1] = -1.0f;
}

double combiner_forward(const Combiner& combiner, std::span<const double> features) {
    if (features.size() != static_cast<std::size_t>(combiner.in_features))
        fail(errc::shape_mismatch, "feature width does not match the combiner");
    std::vector<double> hidden;
    return forward_hidden(combiner, features, hidden);
}

std::vector<std::vector<double>> member_outputs(const EnsembleModel& ensemble,
                                                std::span<const Tensor3> batch, int threads) {
    std::vector<std::vector<double>> out(batch.size());
    parallel_for(batch.size(), threads, [&](std::size_t i) {
        std::span<const Tensor3> one(&batch[i], 1);
        std::vector<double> f(ensemble.members.size());
        for (std::size_t m = 0; m < ensemble.members.size(); ++m)
            f[m] = forward(ensemble.members[m], one, 1).predictions[0][0];
        out[i] = std::move(f);
    });
    return out;
}

std::vector<double> ensemble_predict(const EnsembleModel& ensemble,
                                     std::span<const Tensor3> batch, int threads) {
    auto feats = member_outputs(ensemble, batch, threads);
    std::vector<double> preds(batch.size());
    std::vector<double> hidden;
    for (std::size_t i = 0; i < batch.size(); ++i)
        preds[i] = forward_hidden(ensemble.combiner, feats[i], hidden);
    return preds;
}

CombinerTrainResult train_combiner(EnsembleModel& ensemble, const TrainConfig& config,
                                   const Dataset& train_set, const Dataset& val_set,
                                   int threads) {
    config.validate();
    if (config.task != TaskKind::calories)
        fail(errc::invalid_config, "combiner training is a calorie task");
    if (config.loss.kind != LossKind::mse)
        fail(errc::invalid_config, "combiner training uses the baseline MSE loss");
    if (train_set.size() == 0 || val_set.size() == 0)
        fail(errc::empty_dataset, "train and validation sets must be non-empty");

    // members are frozen, so their outputs are computed exactly once
    auto train_feats = dataset_features(ensemble, train_set, threads);
    auto val_feats = dataset_features(ensemble, val_set, threads);

    Combiner& c = ensemble.combiner;
    std::vector<std::vector<float>*> params = {&c.w1, &c.b1, &c.w2, &c.b2};
    OptimizerState opt;
    opt.init({c.w1.size(), c.b1.size(), c.w2.size(), c.b2.size()}, config.optimizer,
             config.learning_rate);

    CombinerTrainResult result;
    double best_metric = std::numeric_limits<double>::infinity();
    const std::size_t n = train_set.size();
    std::vector<std::size_t> order(n);
    std::vector<double> hidden;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        SplitMix64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = n - 1; i > 0; --i) {
            std::size_t j = rng.next_below(i + 1);
            std::swap(order[i], order[j]);
        }

        double sum_loss = 0.0;
        for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(config.batch_size)) {
            std::size_t end = std::min(n, begin + static_cast<std::size_t>(config.batch_size));
            double inv_b = 1.0 / static_cast<double>(end - begin);

            CombinerGrads grads(c);
            double batch_loss = 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                const auto& f = train_feats[order[i]];
                double target = train_set.samples[order[i]].target;
                double pred = forward_hidden(c, f, hidden);
                double diff = pred - target;
                batch_loss += diff * diff * inv_b;

                double dpred = 2.0 * diff * inv_b;
                grads.b2[0] += dpred;
                for (int j = 0; j < c.hidden; ++j) {
                    double h = hidden[static_cast<std::size_t>(j)];
                    grads.w2[static_cast<std::size_t>(j)] += dpred * h;
                    if (h > 0.0) {
                        double gpre = dpred * c.w2[static_cast<std::size_t>(j)];
                        grads.b1[static_cast<std::size_t>(j)] += gpre;
                        for (int k = 0; k < c.in_features; ++k)
                            grads.w1[static_cast<std::size_t>(j) * c.in_features + k] +=
                                gpre * f[static_cast<std::size_t>(k)];
                    }
                }
            }
            if (!std::isfinite(batch_loss))
                fail(errc::diverged_loss, "combiner loss diverged at epoch " + std::to_string(epoch));
            opt.apply(params, {grads.w1, grads.b1, grads.w2, grads.b2});
            sum_loss += batch_loss * static_cast<double>(end - begin);
        }

        double val = combiner_val_metric(c, val_feats, val_set, config.select_metric);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.total = sum_loss / static_cast<double>(n);
        rec.l_m = 0.0;
        rec.l_c = rec.total;
        rec.val_metric = val;
        result.history.epochs.push_back(rec);

        if (val < best_metric) {
            best_metric = val;
            result.best_combiner = c;
            result.history.best_epoch = epoch;
            result.best_meta.task = task_name(config.task);
            result.best_meta.epoch = epoch;
            result.best_meta.validation_metric = val;
        }
    }
    c = result.best_combiner;
    return result;
}

MetricsReport evaluate_ensemble(const EnsembleModel& ensemble, const Dataset& dataset,
                                int threads) {
    if (dataset.size() == 0) fail(errc::empty_dataset, "cannot evaluate an empty dataset");
    std::vector<Tensor3> images;
    images.reserve(dataset.size());
    for (const Sample& s : dataset.samples) images.push_back(s.image);
    std::vector<double> preds = ensemble_predict(ensemble, images, threads);
    std::vector<double> targets(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) targets[i] = dataset.samples[i].target;

    MetricsReport r;
    r.mae = mae(preds, targets);
    r.rmse = rmse(preds, targets);
    r.n_samples = static_cast<int>(dataset.size());
    return r;
}

void save_ensemble(const EnsembleModel& ensemble, const std::vector<EnsembleMemberRef>& members,
                   const CheckpointMeta& meta, const std::filesystem::path& path) {
    if (members.size() != ensemble.members.size())
        fail(errc::invalid_config, "member reference count does not match the ensemble");

    const Combiner& c = ensemble.combiner;
    nlohmann::json header;
    header["format_version"] = 1;
    header["arch"] = {{"head", {{"kind", "ensemble"}}},
                      {"combiner", {{"in_features", c.in_features}, {"hidden", c.hidden}}}};
    nlohmann::json jmembers = nlohmann::json::array();
    for (const auto& m : members) jmembers.push_back({{"path", m.path}, {"digest", m.digest}});
    header["members"] = std::move(jmembers);
    header["metadata"] = {{"task", meta.task},
                          {"epoch", meta.epoch},
                          {"validation_metric", meta.validation_metric},
                          {"class_labels", meta.class_labels}};

    std::vector<std::pair<std::string, const std::vector<float>*>> blobs = {
        {"combiner.w1", &c.w1}, {"combiner.b1", &c.b1}, {"combiner.w2", &c.w2},
        {"combiner.b2", &c.b2}};
    nlohmann::json params = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& [name, values] : blobs) {
        params.push_back({{"name", name},
                          {"shape", {static_cast<int>(values->size())}},
                          {"offset", offset}});
        offset += values->size();
    }
    header["params"] = std::move(params);

    std::string hbytes = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(errc::unwritable_path, "cannot write ensemble checkpoint: " + path.string());
    std::uint32_t len = static_cast<std::uint32_t>(hbytes.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(hbytes.data(), static_cast<std::streamsize>(hbytes.size()));
    for (const auto& [name, values] : blobs)
        out.write(reinterpret_cast<const char*>(values->data()),
                  static_cast<std::streamsize>(values->size() * 4));
    if (!out) fail(errc::unwritable_path, "short write: " + path.string());
}

namespace {

nlohmann::json read_header(const std::filesystem::path& path, std::ifstream& in) {
    if (!in) fail(errc::missing_file, "checkpoint not found: " + path.string());
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    if (!in || len == 0 || len > (1u << 24))
        fail(errc::corrupt_checkpoint, "bad header length in " + path.string());
    std::string hbytes(len, '\0');
    in.read(hbytes.data(), len);
    if (!in) fail(errc::corrupt_checkpoint, "truncated header in " + path.string());
    try {
        return nlohmann::json::parse(hbytes);
    } catch (const nlohmann::json::exception& e) {
        fail(errc::corrupt_checkpoint, std::string("bad header JSON: ") + e.what());
    }
}

} // namespace

LoadedEnsemble load_ensemble(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    nlohmann::json header = read_header(path, in);
    try {
        if (header.at("format_version").get<int>() != 1)
            fail(errc::version_mismatch, "unsupported checkpoint format_version");
        if (header.at("arch").at("head").at("kind").get<std::string>() != "ensemble")
            fail(errc::corrupt_checkpoint, path.string() + " is not an ensemble checkpoint");

        LoadedEnsemble out;
        std::filesystem::path base = path.has_parent_path() ? path.parent_path()
                                                            : std::filesystem::path(".");
        std::vector<ModelGraph> members;
        for (const auto& jm : header.at("members")) {
            EnsembleMemberRef ref;
            ref.path = jm.at("path").get<std::string>();
            ref.digest = jm.at("digest").get<std::string>();
            std::filesystem::path member_path(ref.path);
            if (member_path.is_relative()) member_path = base / member_path;
            std::string actual = file_digest(member_path);
            if (actual != ref.digest)
                fail(errc::corrupt_checkpoint, "member digest mismatch for " + ref.path +
                                                   " (expected " + ref.digest + ", got " +
                                                   actual + ")");
            members.push_back(load_checkpoint(member_path).model);
            out.members.push_back(std::move(ref));
        }

        int hidden = header.at("arch").at("combiner").at("hidden").get<int>();
        int in_features = header.at("arch").at("combiner").at("in_features").get<int>();
        if (in_features != static_cast<int>(members.size()))
            fail(errc::corrupt_checkpoint, "combiner width does not match member count");
        out.model = build_ensemble(std::move(members), hidden, 0);

        Combiner& c = out.model.combiner;
        for (auto* values : {&c.w1, &c.b1, &c.w2, &c.b2}) {
            in.read(reinterpret_cast<char*>(values->data()),
                    static_cast<std::streamsize>(values->size() * 4));
            if (!in) fail(errc::corrupt_checkpoint, "truncated blob in " + path.string());
        }

        const auto& meta = header.at("metadata");
        out.meta.task = meta.at("task").get<std::string>();
        out.meta.epoch = meta.at("epoch").get<int>();
        out.meta.validation_metric = meta.at("validation_metric").get<double>();
        out.meta.class_labels = meta.at("class_labels").get<std::vector<std::string>>();
        return out;
    } catch (const nlohmann::json::exception& e) {
        fail(errc::corrupt_checkpoint, std::string("bad ensemble header: ") + e.what());
    }
}

std::string checkpoint_kind(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    nlohmann::json header = read_header(path, in);
    try {
        std::string kind = header.at("arch").at("head").at("kind").get<std::string>();
        return kind == "ensemble" ? "ensemble" : "model";
    } catch (const nlohmann::json::exception& e) {
        fail(errc::corrupt_checkpoint, std::string("bad checkpoint header: ") + e.what());
    }
}

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(errc::missing_file, "cannot read " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return to_hex(fnv1a64(bytes));
}

} // namespace kcal
