#pragma once

// CLI command implementations. Exit codes: 0 success, 1 usage, 2 IO,
// 3 heatmap, 4 training, 5 evaluation, 6 report.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace kcal::cli {

struct GlobalOpts {
    int threads = 1;
    bool quiet = false;
    std::optional<std::uint64_t> seed; // overrides experiment seeds
};

struct GenerateOpts {
    int count = 1;
    std::string dims = "64x64";
    std::uint64_t seed = 0;
    std::string style = "train"; // train | shifted
    std::filesystem::path out;
};
int cmd_generate(const GenerateOpts& opts, const GlobalOpts& global);

struct HeatmapOpts {
    std::filesystem::path manifest;
    std::filesystem::path out;
    int kernel = 0;     // 0: derived from image dims
    double sigma = 0.0; // 0: kernel / 6
    int cam_h = 7;
    int cam_w = 7;
};
int cmd_heatmap(const HeatmapOpts& opts, const GlobalOpts& global);

struct TrainOpts {
    std::filesystem::path experiment;
};
int cmd_train(const TrainOpts& opts, const GlobalOpts& global);

struct EvalOpts {
    std::filesystem::path checkpoint;
    std::filesystem::path manifest;
    std::optional<double> baseline_mae;
};
int cmd_eval(const EvalOpts& opts, const GlobalOpts& global);

struct EnsembleOpts {
    std::filesystem::path experiment;
};
int cmd_ensemble(const EnsembleOpts& opts, const GlobalOpts& global);

struct ReportOpts {
    std::vector<std::filesystem::path> run_dirs;
    std::optional<std::filesystem::path> baseline; // defaults to the first run dir
    std::filesystem::path csv = "report.csv";
};
int cmd_report(const ReportOpts& opts, const GlobalOpts& global);

} // namespace kcal::cli
