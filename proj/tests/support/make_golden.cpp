// One-shot generator for the golden checkpoint fixtures under tests/data/.
// Run manually; the outputs are committed so the forward pass can be checked
// against frozen values on any machine.

#include <cstdio>
#include <fstream>

#include "kcal/model.hpp"
#include "kcal/rng.hpp"

int main(int argc, char** argv) {
    if (argc != 2) {
        std::fprintf(stderr, "usage: make_golden <output-dir>\n");
        return 1;
    }
    std::filesystem::path out(argv[1]);

    kcal::BackboneSpec spec;
    spec.input_h = spec.input_w = 16;
    spec.channels = {4, 8};
    kcal::ModelGraph model = kcal::make_model(spec, kcal::HeadKind::regression, 1, 20250809);

    kcal::CheckpointMeta meta;
    meta.task = "calories";
    meta.epoch = 1;
    meta.validation_metric = 0.0;
    kcal::save_checkpoint(model, meta, out / "golden_tinycnn.ckpt");

    const std::uint64_t input_seed = 77;
    kcal::SplitMix64 rng(input_seed);
    kcal::Tensor3 img(16, 16, 3);
    for (auto& v : img.v) v = rng.next_double();
    double pred =
        kcal::forward(model, std::span<const kcal::Tensor3>(&img, 1)).predictions[0][0];

    std::ofstream json(out / "golden_forward.json");
    json.precision(17);
    json << "{\n  \"input_seed\": " << input_seed << ",\n  \"prediction\": " << pred << "\n}\n";
    std::printf("wrote golden_tinycnn.ckpt and golden_forward.json (prediction %.17g)\n", pred);
    return 0;
}
