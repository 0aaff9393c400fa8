#pragma once

// Error codes for every failure mode the library reports. Each code maps to
// one named error condition; the CLI maps them onto its exit-code contract.

#include <stdexcept>
#include <string>

namespace kcal {

enum class errc {
    // manifest / image io
    missing_file,
    malformed_row,
    negative_calories,
    dangling_image_path,
    empty_manifest,
    unwritable_output_dir,
    unsupported_format,
    corrupt_image,
    // heatmap
    box_out_of_bounds,
    even_kernel,
    non_positive_sigma,
    upsample_requested,
    non_finite_input,
    unwritable_path,
    // model
    shape_mismatch,
    non_finite_loss,
    head_mismatch,
    dimension_mismatch,
    version_mismatch,
    corrupt_checkpoint,
    // losses
    length_mismatch,
    empty_input,
    not_a_simplex,
    index_out_of_range,
    alpha_out_of_range,
    dim_mismatch,
    non_positive_baseline,
    // training
    missing_hsm,
    diverged_loss,
    empty_dataset,
    task_mismatch,
    invalid_config,
    head_swap_mismatch,
    // ensemble
    too_few_members,
    non_regression_member,
    // cli
    io_error,
    malformed_run_dir,
    locked_output_dir,
};

class error : public std::runtime_error {
public:
    error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    errc code() const noexcept { return code_; }

private:
    errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) {
    throw error(code, what);
}

} // namespace kcal
