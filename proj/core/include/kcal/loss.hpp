#pragma once

// Training losses and evaluation metrics: MSE / MAE / RMSE, categorical
// cross-entropy, the MSM-vs-HSM saliency loss, and the two combined
// objectives (convex-weighted sum and product).

#include <span>

#include "kcal/heatmap.hpp"
#include "kcal/tensor.hpp"

namespace kcal {

enum class LossKind { mse, cyborg_weighted, cyborg_multiplied, cross_entropy };

// Selects the training objective. alpha is read only by cyborg_weighted.
struct LossSpec {
    LossKind kind = LossKind::mse;
    double alpha = 0.5;

    bool is_cyborg() const {
        return kind == LossKind::cyborg_weighted || kind == LossKind::cyborg_multiplied;
    }
};

struct LossValue {
    double total = 0.0;
    double l_m = 0.0; // saliency component (MSE between MSM and HSM)
    double l_c = 0.0; // task component (calorie/mass MSE or cross-entropy)
};

double mse(std::span<const double> pred, std::span<const double> target);
double mae(std::span<const double> pred, std::span<const double> target);
double rmse(std::span<const double> pred, std::span<const double> target);

// -ln(p_true); probabilities must be a simplex within 1e-6; p is clamped at
// 1e-12 so confident misses stay finite.
double categorical_crossentropy(std::span<const double> probabilities, int true_class);

// Per-cell MSE over the whole map; inputs in [0,1] imply a value in [0,1].
double saliency_loss(const SaliencyMap& msm, const SaliencyMap& hsm);
double saliency_loss(const FloatMap& msm, const FloatMap& hsm);

// (1-alpha)*L_m + alpha*L_c
double cyborg_weighted(double l_m, double l_c, double alpha);

// L_m * L_c; zero whenever either component is zero
double cyborg_multiplied(double l_m, double l_c);

// 100 * (baseline_mae - mae) / baseline_mae, in percent
double relative_improvement(double baseline_mae, double mae);

} // namespace kcal
