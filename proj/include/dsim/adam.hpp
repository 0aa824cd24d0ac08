#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace dsim {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moments for a list of parameter tensors, shaped on first use.
struct AdamState {
    AdamConfig config;
    std::int64_t step = 0;
    std::vector<std::vector<float>> first_moment;
    std::vector<std::vector<float>> second_moment;
};

/// Per-step constants of the bias-corrected update.
struct AdamStepCoefficients {
    double lr;
    double beta1;
    double beta2;
    double epsilon;
    double bias_correction1;
    double bias_correction2;

    static AdamStepCoefficients at(const AdamConfig& config, std::int64_t step, double lr) {
        return {lr,
                config.beta1,
                config.beta2,
                config.epsilon,
                1.0 - std::pow(config.beta1, static_cast<double>(step)),
                1.0 - std::pow(config.beta2, static_cast<double>(step))};
    }
};

inline void adam_update(float& param, float& m, float& v, double grad,
                        const AdamStepCoefficients& c) {
    const double m_new = c.beta1 * m + (1.0 - c.beta1) * grad;
    const double v_new = c.beta2 * v + (1.0 - c.beta2) * grad * grad;
    m = static_cast<float>(m_new);
    v = static_cast<float>(v_new);
    const double m_hat = m_new / c.bias_correction1;
    const double v_hat = v_new / c.bias_correction2;
    param = static_cast<float>(param - c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon));
}

/// One bias-corrected Adam step over several tensors. Increments state.step.
/// Throws DimensionMismatch when shapes disagree with each other or with the
/// moments from earlier steps.
void adam_step(std::span<const std::span<float>> params,
               std::span<const std::span<const double>> grads, AdamState& state, double lr);

}  // namespace dsim
