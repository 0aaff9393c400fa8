#pragma once

// SGD and Adam parameter updates over float32 parameter arrays with double
// gradients. Shared by the model trainer and the ensemble combiner trainer.

#include <cstddef>
#include <vector>

namespace kcal {

enum class OptimizerKind { sgd, adam };

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m; // first moment (adam)
    std::vector<std::vector<double>> v; // second moment (adam)

    void init(const std::vector<std::size_t>& sizes, OptimizerKind k, double lr) {
        kind = k;
        learning_rate = lr;
        step = 0;
        m.clear();
        v.clear();
        if (kind == OptimizerKind::adam) {
            for (std::size_t s : sizes) {
                m.emplace_back(s, 0.0);
                v.emplace_back(s, 0.0);
            }
        }
    }

    void apply(const std::vector<std::vector<float>*>& params,
               const std::vector<std::vector<double>>& grads);
};

} // namespace kcal
