#include "kcal/loss.hpp"

#include <cmath>
#include <string>

#include "kcal/error.hpp"

namespace kcal {
namespace {

void check_pair(std::span<const double> pred, std::span<const double> target) {
    if (pred.empty()) fail(errc::empty_input, "empty prediction vector");
    if (pred.size() != target.size())
        fail(errc::length_mismatch, "prediction length " + std::to_string(pred.size()) +
                                        " vs target length " + std::to_string(target.size()));
}

} // namespace

double mse(std::span<const double> pred, std::span<const double> target) {
    check_pair(pred, target);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

double mae(std::span<const double> pred, std::span<const double> target) {
    check_pair(pred, target);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::fabs(pred[i] - target[i]);
    return acc / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> target) {
    return std::sqrt(mse(pred, target));
}

double categorical_crossentropy(std::span<const double> probabilities, int true_class) {
    if (probabilities.empty()) fail(errc::empty_input, "empty probability vector");
    double sum = 0.0;
    for (double p : probabilities) {
        if (!(p >= 0.0)) fail(errc::not_a_simplex, "probabilities must be non-negative");
        sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-6)
        fail(errc::not_a_simplex, "probabilities sum to " + std::to_string(sum));
    if (true_class < 0 || static_cast<std::size_t>(true_class) >= probabilities.size())
        fail(errc::index_out_of_range, "class index " + std::to_string(true_class) +
                                           " out of range for " +
                                           std::to_string(probabilities.size()) + " classes");
    double p = std::max(probabilities[static_cast<std::size_t>(true_class)], 1e-12);
    return -std::log(p);
}

double saliency_loss(const FloatMap& msm, const FloatMap& hsm) {
    if (!msm.same_dims(hsm))
        fail(errc::dim_mismatch, "saliency map dims differ: " + std::to_string(msm.rows) + "x" +
                                     std::to_string(msm.cols) + " vs " + std::to_string(hsm.rows) +
                                     "x" + std::to_string(hsm.cols));
    double acc = 0.0;
    for (std::size_t i = 0; i < msm.size(); ++i) {
        double d = msm.v[i] - hsm.v[i];
        acc += d * d;
    }
    return acc / static_cast<double>(msm.size());
}

double saliency_loss(const SaliencyMap& msm, const SaliencyMap& hsm) {
    return saliency_loss(msm.values, hsm.values);
}

double cyborg_weighted(double l_m, double l_c, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        fail(errc::alpha_out_of_range, "alpha must lie in [0,1], got " + std::to_string(alpha));
    return (1.0 - alpha) * l_m + alpha * l_c;
}

double cyborg_multiplied(double l_m, double l_c) {
    return l_m * l_c;
}

double relative_improvement(double baseline_mae, double mae_value) {
    if (!(baseline_mae > 0.0))
        fail(errc::non_positive_baseline, "baseline MAE must be positive");
    return 100.0 * (baseline_mae - mae_value) / baseline_mae;
}

} // namespace kcal
