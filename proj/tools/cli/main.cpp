#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"saliency-guided calorie estimation toolkit"};
    app.require_subcommand(1);

    kcal::cli::GlobalOpts global;
    app.add_option("--threads", global.threads, "worker threads (default 1)")
        ->check(CLI::PositiveNumber);
    app.add_flag("--quiet", global.quiet, "suppress informational output");
    std::uint64_t seed_override = 0;
    auto* seed_opt =
        app.add_option("--seed", seed_override, "override experiment seeds (train/ensemble)");

    kcal::cli::GenerateOpts gen;
    auto* cmd_gen = app.add_subcommand("generate", "generate a synthetic scene corpus");
    cmd_gen->add_option("--count", gen.count, "number of scenes")->required();
    cmd_gen->add_option("--dims", gen.dims, "canvas dims HxW (default 64x64)");
    cmd_gen->add_option("--seed", gen.seed, "corpus seed (default 0)");
    cmd_gen->add_option("--style", gen.style, "background style: train | shifted");
    cmd_gen->add_option("--out", gen.out, "output directory")->required();

    kcal::cli::HeatmapOpts hm;
    auto* cmd_hm = app.add_subcommand("heatmap", "heatmap tools");
    auto* cmd_hm_build =
        cmd_hm->add_subcommand("build", "compile HSMs from manifest annotations");
    cmd_hm_build->add_option("--manifest", hm.manifest, "manifest.csv")->required();
    cmd_hm_build->add_option("--out", hm.out, "output directory")->required();
    cmd_hm_build->add_option("--kernel", hm.kernel, "odd blur kernel size (0: from image dims)");
    cmd_hm_build->add_option("--sigma", hm.sigma, "blur sigma (0: kernel/6)");
    cmd_hm_build->add_option("--cam-h", hm.cam_h, "output rows (default 7)");
    cmd_hm_build->add_option("--cam-w", hm.cam_w, "output cols (default 7)");
    cmd_hm->require_subcommand(1);

    kcal::cli::TrainOpts tr;
    auto* cmd_tr = app.add_subcommand("train", "run a training experiment");
    cmd_tr->add_option("experiment", tr.experiment, "experiment JSON file")->required();

    kcal::cli::EvalOpts ev;
    auto* cmd_ev = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    cmd_ev->add_option("--checkpoint", ev.checkpoint, "model or ensemble .ckpt")->required();
    cmd_ev->add_option("--manifest", ev.manifest, "test manifest.csv")->required();
    double baseline_mae = 0.0;
    auto* baseline_opt =
        cmd_ev->add_option("--baseline-mae", baseline_mae, "print improvement vs this MAE");

    kcal::cli::EnsembleOpts en;
    auto* cmd_en = app.add_subcommand("ensemble", "build and train an ensemble combiner");
    cmd_en->add_option("experiment", en.experiment, "experiment JSON with an ensemble section")
        ->required();

    kcal::cli::ReportOpts rp;
    auto* cmd_rp = app.add_subcommand("report", "aggregate run reports into a results table");
    cmd_rp->add_option("run_dirs", rp.run_dirs, "run directories with report.json")->required();
    std::filesystem::path baseline_dir;
    auto* baseline_dir_opt =
        cmd_rp->add_option("--baseline", baseline_dir, "baseline run dir (default: first)");
    cmd_rp->add_option("--csv", rp.csv, "CSV output path (default report.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (seed_opt->count() > 0) global.seed = seed_override;
    if (baseline_opt->count() > 0) ev.baseline_mae = baseline_mae;
    if (baseline_dir_opt->count() > 0) rp.baseline = baseline_dir;

    if (app.got_subcommand(cmd_gen)) return kcal::cli::cmd_generate(gen, global);
    if (app.got_subcommand(cmd_hm)) return kcal::cli::cmd_heatmap(hm, global);
    if (app.got_subcommand(cmd_tr)) return kcal::cli::cmd_train(tr, global);
    if (app.got_subcommand(cmd_ev)) return kcal::cli::cmd_eval(ev, global);
    if (app.got_subcommand(cmd_en)) return kcal::cli::cmd_ensemble(en, global);
    if (app.got_subcommand(cmd_rp)) return kcal::cli::cmd_report(rp, global);
    return 1;
}
