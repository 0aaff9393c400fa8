#include "kcal/optim.hpp"

#include <cmath>

namespace kcal {

void OptimizerState::apply(const std::vector<std::vector<float>*>& params,
                           const std::vector<std::vector<double>>& grads) {
    if (kind == OptimizerKind::sgd) {
        for (std::size_t p = 0; p < params.size(); ++p) {
            auto& values = *params[p];
            for (std::size_t i = 0; i < values.size(); ++i)
                values[i] = static_cast<float>(values[i] - learning_rate * grads[p][i]);
        }
        return;
    }

    ++step;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& values = *params[p];
        auto& mp = m[p];
        auto& vp = v[p];
        for (std::size_t i = 0; i < values.size(); ++i) {
            double g = grads[p][i];
            mp[i] = beta1 * mp[i] + (1.0 - beta1) * g;
            vp[i] = beta2 * vp[i] + (1.0 - beta2) * g * g;
            double mhat = mp[i] / bc1;
            double vhat = vp[i] / bc2;
            values[i] =
                static_cast<float>(values[i] - learning_rate * mhat / (std::sqrt(vhat) + epsilon));
        }
    }
}

} // namespace kcal
