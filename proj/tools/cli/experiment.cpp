#include "experiment.hpp"

#include <fstream>

#include <json.hpp>

#include "kcal/error.hpp"

namespace kcal::cli {
namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
}

LossSpec parse_loss(const json& j) {
    LossSpec spec;
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "mse")
        spec.kind = LossKind::mse;
    else if (kind == "cyborg_weighted")
        spec.kind = LossKind::cyborg_weighted;
    else if (kind == "cyborg_multiplied")
        spec.kind = LossKind::cyborg_multiplied;
    else if (kind == "cross_entropy")
        spec.kind = LossKind::cross_entropy;
    else
        fail(errc::invalid_config, "unknown loss kind '" + kind + "'");
    if (j.contains("alpha")) spec.alpha = j.at("alpha").get<double>();
    return spec;
}

TrainConfig parse_train(const json& j, const std::filesystem::path& base) {
    TrainConfig c;
    c.task = task_from_name(j.at("task").get<std::string>());
    c.loss = parse_loss(j.at("loss"));
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("optimizer")) {
        std::string opt = j.at("optimizer").get<std::string>();
        if (opt == "sgd")
            c.optimizer = OptimizerKind::sgd;
        else if (opt == "adam")
            c.optimizer = OptimizerKind::adam;
        else
            fail(errc::invalid_config, "unknown optimizer '" + opt + "'");
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("init_checkpoint") && !j.at("init_checkpoint").is_null())
        c.init_checkpoint = resolve(base, j.at("init_checkpoint").get<std::string>());
    if (j.contains("select_metric")) {
        std::string m = j.at("select_metric").get<std::string>();
        if (m == "val_mae")
            c.select_metric = SelectMetric::val_mae;
        else if (m == "val_rmse")
            c.select_metric = SelectMetric::val_rmse;
        else if (m == "val_logloss")
            c.select_metric = SelectMetric::val_logloss;
        else
            fail(errc::invalid_config, "unknown select_metric '" + m + "'");
    } else if (c.task == TaskKind::classification) {
        c.select_metric = SelectMetric::val_logloss;
    }
    return c;
}

DataSection parse_data(const json& j, const std::filesystem::path& base) {
    DataSection d;
    d.train_manifest = resolve(base, j.at("train_manifest").get<std::string>());
    if (j.contains("val_manifest"))
        d.val_manifest = resolve(base, j.at("val_manifest").get<std::string>());
    if (j.contains("val_split")) {
        SplitSpec s;
        if (j.at("val_split").contains("train_fraction"))
            s.train_fraction = j.at("val_split").at("train_fraction").get<double>();
        if (j.at("val_split").contains("seed"))
            s.seed = j.at("val_split").at("seed").get<std::uint64_t>();
        d.val_split = s;
    }
    if (d.val_manifest && d.val_split)
        fail(errc::invalid_config, "give either val_manifest or val_split, not both");
    if (!d.val_manifest && !d.val_split)
        fail(errc::invalid_config, "data section needs val_manifest or val_split");
    if (j.contains("test_manifest"))
        d.test_manifest = resolve(base, j.at("test_manifest").get<std::string>());
    return d;
}

} // namespace

ExperimentConfig load_experiment(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) fail(errc::missing_file, "experiment file not found: " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(errc::invalid_config, "bad experiment JSON: " + std::string(e.what()));
    }

    std::filesystem::path base =
        file.has_parent_path() ? file.parent_path() : std::filesystem::path(".");

    try {
        if (j.at("schema_version").get<int>() != 1)
            fail(errc::invalid_config, "unsupported experiment schema_version");

        ExperimentConfig c;
        c.name = j.at("name").get<std::string>();
        c.data = parse_data(j.at("data"), base);

        if (j.contains("model")) {
            const auto& jm = j.at("model");
            if (jm.contains("input")) {
                c.model.input_h = jm.at("input").at(0).get<int>();
                c.model.input_w = jm.at("input").at(1).get<int>();
            }
            if (jm.contains("channels")) c.model.channels = jm.at("channels").get<std::vector<int>>();
        }
        c.model.validate();

        c.heatmap.cam_h = c.model.cam_h();
        c.heatmap.cam_w = c.model.cam_w();
        if (j.contains("heatmap")) {
            const auto& jh = j.at("heatmap");
            if (jh.contains("kernel_size")) c.heatmap.kernel_size = jh.at("kernel_size").get<int>();
            if (jh.contains("sigma")) c.heatmap.sigma = jh.at("sigma").get<double>();
            if (jh.contains("cam")) {
                c.heatmap.cam_h = jh.at("cam").at(0).get<int>();
                c.heatmap.cam_w = jh.at("cam").at(1).get<int>();
            }
        }

        c.train = parse_train(j.at("train"), base);

        if (j.contains("pretrain")) {
            PretrainSection p;
            p.data = parse_data(j.at("pretrain").at("data"), base);
            p.train = parse_train(j.at("pretrain").at("train"), base);
            c.pretrain = std::move(p);
        }

        if (j.contains("ensemble")) {
            EnsembleSection e;
            for (const auto& m : j.at("ensemble").at("members"))
                e.members.push_back(resolve(base, m.get<std::string>()));
            if (j.at("ensemble").contains("hidden"))
                e.hidden = j.at("ensemble").at("hidden").get<int>();
            if (j.at("ensemble").contains("identity_init_member"))
                e.identity_init_member =
                    j.at("ensemble").at("identity_init_member").get<std::size_t>();
            c.ensemble = std::move(e);
        }

        c.output_dir = resolve(base, j.at("output_dir").get<std::string>());

        c.train.validate();
        if (c.train.loss.is_cyborg() &&
            (c.heatmap.cam_h != c.model.cam_h() || c.heatmap.cam_w != c.model.cam_w()))
            fail(errc::invalid_config,
                 "heatmap cam dims must match the model's feature-map dims for cyborg losses");
        return c;
    } catch (const json::exception& e) {
        fail(errc::invalid_config, "bad experiment config: " + std::string(e.what()));
    }
}

std::string method_label(const ExperimentConfig& config) {
    auto loss_label = [](const LossSpec& spec) -> std::string {
        switch (spec.kind) {
            case LossKind::mse: return "baseline-mse";
            case LossKind::cyborg_weighted: return "cyborg-weighted";
            case LossKind::cyborg_multiplied: return "cyborg-multiplied";
            case LossKind::cross_entropy: return "cross-entropy";
        }
        return "baseline-mse";
    };
    if (config.ensemble) return "ensemble";
    std::string label = loss_label(config.train.loss);
    if (config.pretrain)
        label = "pretrain-" + task_name(config.pretrain->train.task) + "+" + label;
    else if (config.train.init_checkpoint)
        label = "warmstart+" + label;
    return label;
}

} // namespace kcal::cli
